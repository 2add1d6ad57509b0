#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "epiloc/errors.hpp"

namespace epiloc::binio {

// Shared helpers for the container formats: an ASCII magic line, a UTF-8
// key=value header block terminated by a blank line, then a little-endian
// binary payload. Floats are printed with shortest round-trip formatting so
// header bytes are reproducible.

std::string format_double(double v);
std::string format_u64(std::uint64_t v);

double parse_double(const std::string &s);
std::int64_t parse_i64(const std::string &s);
std::uint64_t parse_u64(const std::string &s);

/// Ordered key=value list (write order is part of each format's contract).
using HeaderFields = std::vector<std::pair<std::string, std::string>>;

void write_magic_and_header(std::ostream &os, const std::string &magic,
                            const HeaderFields &fields);

/// Reads and checks the magic line, then parses the header block.
std::map<std::string, std::string> read_magic_and_header(std::istream &is,
                                                         const std::string &magic,
                                                         const std::string &what);

/// Fetch a required header key or throw TruncatedFileError.
const std::string &require_key(const std::map<std::string, std::string> &h,
                               const std::string &key, const std::string &what);

// Payload primitives. All multi-byte values are little-endian; this
// implementation assumes a little-endian host.
void write_f32(std::ostream &os, const double *src, std::size_t n);
void read_f32(std::istream &is, double *dst, std::size_t n, const std::string &what);
void write_u32(std::ostream &os, std::uint32_t v);
std::uint32_t read_u32(std::istream &is, const std::string &what);
void write_u16(std::ostream &os, std::uint16_t v);
std::uint16_t read_u16(std::istream &is, const std::string &what);
void write_u8(std::ostream &os, std::uint8_t v);
std::uint8_t read_u8(std::istream &is, const std::string &what);

std::ofstream open_output(const std::string &path);
std::ifstream open_input(const std::string &path);

} // namespace epiloc::binio
