#include "epiloc/binio.hpp"

#include <charconv>

namespace epiloc::binio {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_u64(std::uint64_t v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string &s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw IoError("malformed numeric header value: '" + s + "'");
  return v;
}

std::int64_t parse_i64(const std::string &s) {
  std::int64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw IoError("malformed integer header value: '" + s + "'");
  return v;
}

std::uint64_t parse_u64(const std::string &s) {
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw IoError("malformed unsigned header value: '" + s + "'");
  return v;
}

void write_magic_and_header(std::ostream &os, const std::string &magic,
                            const HeaderFields &fields) {
  os << magic; // magic includes its trailing newline
  for (const auto &[k, v] : fields)
    os << k << '=' << v << '\n';
  os << '\n';
}

std::map<std::string, std::string> read_magic_and_header(std::istream &is,
                                                         const std::string &magic,
                                                         const std::string &what) {
  std::string line(magic.size(), '\0');
  is.read(line.data(), static_cast<std::streamsize>(magic.size()));
  if (is.gcount() != static_cast<std::streamsize>(magic.size()))
    throw TruncatedFileError(what + ": file shorter than magic");
  if (line != magic)
    throw BadMagicError(what + ": bad magic");

  std::map<std::string, std::string> fields;
  std::string row;
  while (true) {
    if (!std::getline(is, row))
      throw TruncatedFileError(what + ": header not terminated by blank line");
    if (row.empty())
      break;
    const auto eq = row.find('=');
    if (eq == std::string::npos)
      throw IoError(what + ": malformed header line '" + row + "'");
    fields.emplace(row.substr(0, eq), row.substr(eq + 1));
  }
  return fields;
}

const std::string &require_key(const std::map<std::string, std::string> &h,
                               const std::string &key, const std::string &what) {
  const auto it = h.find(key);
  if (it == h.end())
    throw TruncatedFileError(what + ": missing header key '" + key + "'");
  return it->second;
}

void write_f32(std::ostream &os, const double *src, std::size_t n) {
  constexpr std::size_t kChunk = 4096;
  float buf[kChunk];
  while (n > 0) {
    const std::size_t take = n < kChunk ? n : kChunk;
    for (std::size_t i = 0; i < take; ++i)
      buf[i] = static_cast<float>(src[i]);
    os.write(reinterpret_cast<const char *>(buf),
             static_cast<std::streamsize>(take * sizeof(float)));
    src += take;
    n -= take;
  }
}

void read_f32(std::istream &is, double *dst, std::size_t n, const std::string &what) {
  constexpr std::size_t kChunk = 4096;
  float buf[kChunk];
  while (n > 0) {
    const std::size_t take = n < kChunk ? n : kChunk;
    is.read(reinterpret_cast<char *>(buf),
            static_cast<std::streamsize>(take * sizeof(float)));
    if (is.gcount() != static_cast<std::streamsize>(take * sizeof(float)))
      throw TruncatedFileError(what + ": truncated float payload");
    for (std::size_t i = 0; i < take; ++i)
      dst[i] = static_cast<double>(buf[i]);
    dst += take;
    n -= take;
  }
}

void write_u32(std::ostream &os, std::uint32_t v) {
  os.write(reinterpret_cast<const char *>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream &is, const std::string &what) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char *>(&v), sizeof(v));
  if (is.gcount() != sizeof(v))
    throw TruncatedFileError(what + ": truncated u32 field");
  return v;
}

void write_u16(std::ostream &os, std::uint16_t v) {
  os.write(reinterpret_cast<const char *>(&v), sizeof(v));
}

std::uint16_t read_u16(std::istream &is, const std::string &what) {
  std::uint16_t v = 0;
  is.read(reinterpret_cast<char *>(&v), sizeof(v));
  if (is.gcount() != sizeof(v))
    throw TruncatedFileError(what + ": truncated u16 field");
  return v;
}

void write_u8(std::ostream &os, std::uint8_t v) {
  os.write(reinterpret_cast<const char *>(&v), sizeof(v));
}

std::uint8_t read_u8(std::istream &is, const std::string &what) {
  std::uint8_t v = 0;
  is.read(reinterpret_cast<char *>(&v), sizeof(v));
  if (is.gcount() != sizeof(v))
    throw TruncatedFileError(what + ": truncated u8 field");
  return v;
}

std::ofstream open_output(const std::string &path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os)
    throw IoError("cannot open '" + path + "' for writing");
  return os;
}

std::ifstream open_input(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw IoError("cannot open '" + path + "' for reading");
  return is;
}

} // namespace epiloc::binio
