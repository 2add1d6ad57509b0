#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

// Drives the installed CLI binary end to end. The binary path arrives via
// the EPILOC_BIN environment variable (set by CTest).

namespace {

std::string bin() {
  const char *env = std::getenv("EPILOC_BIN");
  REQUIRE(env != nullptr);
  return env;
}

int run(const std::string &args, const std::string &stdout_path = "/dev/null") {
  const std::string cmd = bin() + " " + args + " > " + stdout_path + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

const std::string dir = "/tmp/epiloc_cli_test";

} // namespace

TEST_CASE("cli: full pipeline, exit codes, determinism") {
  std::system(("rm -rf " + dir + " && mkdir -p " + dir).c_str());
  const std::string optics = "--theta 9 --n 41 --m 11 --depth-min -5 "
                             "--depth-max 5 --kappa 0.05";

  // Usage errors exit with 1.
  CHECK(run("no-such-command") == 1);
  CHECK(run("gen-data --no-such-flag x") == 1);
  CHECK(run("gen-data") == 1); // missing required --out

  // Missing files exit with 2.
  CHECK(run("solve --dict " + dir + "/missing.bin --epi " + dir + "/missing.epi") == 2);

  CHECK(run("gen-data --out " + dir + "/train.bin --count 60 " + optics +
            " --sources-min 1 --sources-max 2 --noise-sigma 0.05 --seed 5") == 0);
  CHECK(run("gen-data --out " + dir + "/test.bin --count 6 " + optics +
            " --sources-min 1 --sources-max 1 --noise-sigma 0.05 --seed 6 "
            "--epi-dir " + dir + "/epis") == 0);
  CHECK(run("build-dict --out " + dir + "/dict.bin " + optics +
            " --atom-theta 9 --atom-n 13") == 0);

  // gen-data is byte-deterministic.
  CHECK(run("gen-data --out " + dir + "/again.bin --count 6 " + optics +
            " --sources-min 1 --sources-max 1 --noise-sigma 0.05 --seed 6") == 0);
  CHECK(slurp(dir + "/test.bin") == slurp(dir + "/again.bin"));

  CHECK(run("solve --dict " + dir + "/dict.bin --epi " + dir +
            "/epis/epi_000002.bin --codes-out " + dir + "/codes.bin",
            dir + "/solve.txt") == 0);
  const std::string depths = slurp(dir + "/solve.txt");
  CHECK(!depths.empty());

  CHECK(run("train --dataset " + dir + "/train.bin --out " + dir +
            "/model.bin --epochs 2 --batch 16 --kernels 3,5 --seed 9 "
            "--single-thread") == 0);

  // Identical training runs produce identical model bytes.
  CHECK(run("train --dataset " + dir + "/train.bin --out " + dir +
            "/model2.bin --epochs 2 --batch 16 --kernels 3,5 --seed 9 "
            "--single-thread") == 0);
  CHECK(slurp(dir + "/model.bin") == slurp(dir + "/model2.bin"));

  CHECK(run("infer --model " + dir + "/model.bin --epi " + dir +
            "/epis/epi_000002.bin --probs-out " + dir + "/p1.csv",
            dir + "/i1.txt") == 0);
  CHECK(run("infer --model " + dir + "/model.bin --epi " + dir +
            "/epis/epi_000002.bin --probs-out " + dir + "/p2.csv",
            dir + "/i2.txt") == 0);
  CHECK(slurp(dir + "/p1.csv") == slurp(dir + "/p2.csv"));
  CHECK(slurp(dir + "/i1.txt") == slurp(dir + "/i2.txt"));

  // Dataset/architecture mismatch is a usage error (exit 1).
  CHECK(run("infer --model " + dir + "/model.bin --dataset " + dir +
            "/train.bin --index 999") == 1);

  CHECK(run("eval --dataset " + dir + "/test.bin --model " + dir +
            "/model.bin --dict " + dir + "/dict.bin --out " + dir +
            "/report.csv",
            dir + "/eval.txt") == 0);
  const std::string summary = slurp(dir + "/eval.txt");
  CHECK(summary.find("method=cista-net") != std::string::npos);
  CHECK(summary.find("method=csc") != std::string::npos);
  CHECK(summary.find("rmse_z_um=") != std::string::npos);
  {
    std::ifstream rep(dir + "/report.csv");
    std::string header;
    REQUIRE(std::getline(rep, header));
    CHECK(header ==
          "sample,method,pred_x,pred_y,pred_z_um,true_x,true_y,true_z_um");
  }

  CHECK(run("bench --model " + dir + "/model.bin --dict " + dir +
            "/dict.bin --dataset " + dir + "/test.bin --repeats 3 --n-epis 2 "
            "--max-iters 40 --out " + dir + "/bench.csv") == 0);
  {
    std::ifstream bc(dir + "/bench.csv");
    std::string line;
    REQUIRE(std::getline(bc, line));
    CHECK(line == "method,n_epis,median_s,mad_s,speedup_vs_csc");
    int rows = 0;
    while (std::getline(bc, line))
      if (!line.empty())
        ++rows;
    CHECK(rows == 2);
  }

  // Config file keys mirror flags; command line wins on conflicts.
  {
    std::ofstream cfg(dir + "/gen.cfg");
    cfg << "count=6\nout=" << dir << "/fromcfg.bin\ntheta=9\nn=41\nm=11\n"
        << "depth-min=-5\ndepth-max=5\nkappa=0.05\nsources-min=1\n"
        << "sources-max=1\nnoise-sigma=0.05\nseed=6\n";
  }
  CHECK(run("gen-data --config " + dir + "/gen.cfg") == 0);
  CHECK(slurp(dir + "/fromcfg.bin") == slurp(dir + "/test.bin"));
  CHECK(run("gen-data --config " + dir + "/gen.cfg --out " + dir +
            "/override.bin --seed 7") == 0);
  CHECK(slurp(dir + "/override.bin") != slurp(dir + "/test.bin"));
}
