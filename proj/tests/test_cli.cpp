#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "evtmem/core.hpp"
#include "evtmem/special.hpp"
#include "evtmem/io.hpp"
#include "evtmem/rng.hpp"
#include "evtmem/tail.hpp"

using namespace evtmem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
};

// Runs the CLI with stderr folded away; stdout is captured through a file so
// exit codes stay visible.
RunResult run_cli(const std::string& args, const std::string& dir) {
  const std::string out_path = dir + "/stdout.txt";
  const std::string cmd = std::string(EVTMEM_CLI_PATH) + " " + args + " > " +
                          out_path + " 2> " + dir + "/stderr.txt";
  const int raw = std::system(cmd.c_str());
  RunResult res;
  res.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream in(out_path);
  std::stringstream buf;
  buf << in.rdbuf();
  res.out = buf.str();
  return res;
}

std::string make_temp_dir() {
  char tmpl[] = "/tmp/evtmem_cli_XXXXXX";
  const char* dir = mkdtemp(tmpl);
  REQUIRE(dir != nullptr);
  return dir;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

const std::string kBundled =
    std::string(EVTMEM_DATA_DIR) + "/synthetic_rainfall.csv";

// Pure-Pareto dataset written as CSV for the end-to-end gof check.
void write_pareto_csv(const std::string& path, int J, int n, uint64_t seed) {
  std::ofstream os(path);
  os << "cluster,y,roleB:x\n";
  os.precision(12);
  for (int c = 0; c < J; ++c) {
    Rng rng(seed, 0, c);
    const double u = 0.45 * norm_quantile(rng.uniform_open());
    for (int i = 0; i < n; ++i) {
      const double x = norm_quantile(rng.uniform_open());
      const double gamma = std::exp(-0.5 + u + 0.2 * x);
      os << 'p' << c << ',' << tail_quantile(TailFamily::pareto(), gamma,
                                             rng.uniform_open())
         << ',' << x << '\n';
    }
  }
}

}  // namespace

TEST_CASE("fit / predict / test / gof / evi round trip") {
  const std::string dir = make_temp_dir();
  const std::string report = dir + "/fit.json";
  const RunResult fit = run_cli("fit --input " + kBundled + " --out " + report +
                                    " --k-min 10 --k-max 40 --standardize",
                                dir);
  REQUIRE(fit.exit_code == 0);
  CHECK(fit.out == report + "\n");

  SUBCASE("report contents") {
    std::ifstream in(report);
    const FitReport r = read_fit_report(in);
    CHECK(r.converged);
    CHECK(r.beta_B.size() == 2);
    // The generating truth has positive effects for both covariates.
    CHECK(r.beta_B[0] > 0.0);
    CHECK(r.beta_B[1] > 0.0);
    CHECK(r.scaling_applied);
    CHECK(r.cluster_ids.size() == 47);
    CHECK(r.n_0 >= 10.0);
    CHECK(r.n_0 <= 40.0);
  }

  SUBCASE("identical inputs give identical bytes") {
    const std::string report2 = dir + "/fit2.json";
    const RunResult again =
        run_cli("fit --input " + kBundled + " --out " + report2 +
                    " --k-min 10 --k-max 40 --standardize",
                dir);
    REQUIRE(again.exit_code == 0);
    CHECK(slurp(report) == slurp(report2));
  }

  SUBCASE("downstream commands consume the report") {
    const RunResult pred = run_cli(
        "predict --fit " + report + " --input " + kBundled + " --out " + dir +
            "/u.csv",
        dir);
    CHECK(pred.exit_code == 0);
    const std::string u_csv = slurp(dir + "/u.csv");
    CHECK(u_csv.rfind("cluster,u_tilde1,inner_converged\n", 0) == 0);

    const RunResult wald = run_cli(
        "test --fit " + report + " --input " + kBundled + " --out " + dir +
            "/wald.csv",
        dir);
    CHECK(wald.exit_code == 0);
    const std::string wald_csv = slurp(dir + "/wald.csv");
    CHECK(wald_csv.find("vapor_pressure") != std::string::npos);
    CHECK(wald_csv.find("wind_speed") != std::string::npos);

    const RunResult gof = run_cli(
        "gof --fit " + report + " --input " + kBundled + " --out " + dir +
            "/gof.json",
        dir);
    CHECK(gof.exit_code == 0);

    const RunResult evi = run_cli(
        "evi --fit " + report + " --input " + kBundled + " --out " + dir +
            "/evi.csv",
        dir);
    CHECK(evi.exit_code == 0);
    // Ranking is sorted descending.
    std::ifstream in(dir + "/evi.csv");
    std::string line;
    std::getline(in, line);
    double prev = 1e300;
    int rows = 0;
    while (std::getline(in, line)) {
      const double g = std::stod(line.substr(line.find(',') + 1));
      CHECK(g <= prev);
      prev = g;
      ++rows;
    }
    CHECK(rows == 47);
  }

  SUBCASE("schema mismatch is a precondition failure") {
    const std::string other = dir + "/other.csv";
    std::ofstream os(other);
    os << "cluster,y,roleB:different\nA,2.0,0.1\nA,3.0,0.2\n";
    os.close();
    const RunResult res = run_cli(
        "predict --fit " + report + " --input " + other + " --out " + dir +
            "/u2.csv",
        dir);
    CHECK(res.exit_code == 3);
  }
}

TEST_CASE("fit error paths") {
  const std::string dir = make_temp_dir();
  SUBCASE("empty file") {
    std::ofstream(dir + "/empty.csv").close();
    const RunResult res = run_cli(
        "fit --input " + dir + "/empty.csv --out " + dir + "/r.json", dir);
    CHECK(res.exit_code == 2);
  }
  SUBCASE("header-only file") {
    std::ofstream os(dir + "/head.csv");
    os << "cluster,y\n";
    os.close();
    const RunResult res = run_cli(
        "fit --input " + dir + "/head.csv --out " + dir + "/r.json", dir);
    CHECK(res.exit_code == 2);
  }
  SUBCASE("dense-grid oracle refuses multivariate random slopes") {
    std::ofstream os(dir + "/p2.csv");
    os << "cluster,y,roleA:one,roleA:w\n";
    Rng rng(5);
    for (int c = 0; c < 4; ++c)
      for (int i = 0; i < 60; ++i)
        os << 'c' << c << ','
           << tail_quantile(TailFamily::pareto(), 0.6, rng.uniform_open())
           << ",1," << rng.uniform_open(-1, 1) << '\n';
    os.close();
    const RunResult res = run_cli(
        "fit --input " + dir + "/p2.csv --out " + dir +
            "/r.json --quad-mode oracle --k-min 5 --k-max 20",
        dir);
    CHECK(res.exit_code == 3);
  }
  SUBCASE("rejected rows are reported but the fit proceeds") {
    std::ofstream os(dir + "/dirty.csv");
    os << "cluster,y,roleB:x\n";
    Rng rng(6);
    for (int c = 0; c < 6; ++c)
      for (int i = 0; i < 80; ++i)
        os << 'c' << c << ','
           << tail_quantile(TailFamily::pareto(), 0.6, rng.uniform_open())
           << ',' << rng.uniform_open(-1, 1) << '\n';
    os << "c0,-3.0,0.1\n";
    os << "c1,abc,0.1\n";
    os.close();
    const RunResult res = run_cli("fit --input " + dir + "/dirty.csv --out " +
                                      dir + "/r.json --k-min 5 --k-max 20",
                                  dir);
    CHECK(res.exit_code == 0);
    const std::string err = slurp(dir + "/stderr.txt");
    CHECK(err.find("rejected 2 row(s)") != std::string::npos);
    CHECK(err.find("482") != std::string::npos);
    CHECK(err.find("483") != std::string::npos);
  }
}

TEST_CASE("gof on exact Pareto data end to end") {
  const std::string dir = make_temp_dir();
  const std::string csv = dir + "/pareto.csv";
  write_pareto_csv(csv, 30, 120, 71);
  const std::string report = dir + "/fit.json";
  REQUIRE(run_cli("fit --input " + csv + " --out " + report +
                      " --k-min 10 --k-max 60",
                  dir)
              .exit_code == 0);
  REQUIRE(run_cli("gof --fit " + report + " --input " + csv + " --out " + dir +
                      "/gof.json",
                  dir)
              .exit_code == 0);
  const std::string gof = slurp(dir + "/gof.json");
  const auto pos = gof.find("\"ks_pvalue\": ");
  REQUIRE(pos != std::string::npos);
  const double p = std::stod(gof.substr(pos + 13));
  CHECK(p >= 0.01);
}

TEST_CASE("compare") {
  const std::string dir = make_temp_dir();
  SUBCASE("bundled dataset: stability row and exact M4 column") {
    const RunResult res =
        run_cli("compare --input " + kBundled + " --out " + dir +
                    "/cmp.csv --k-min 10 --k-max 40 --standardize",
                dir);
    REQUIRE(res.exit_code == 0);
    std::ifstream in(dir + "/cmp.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "cluster,m1,m2,m3,m4");
    double m1_stab = -1.0;
    int rows = 0;
    while (std::getline(in, line)) {
      if (line.rfind("stability,", 0) == 0) {
        m1_stab = std::stod(line.substr(10));
      } else {
        ++rows;
      }
    }
    CHECK(rows == 47);
    // Split-half ranking stability of the mixed model on the bundled data.
    CHECK(m1_stab >= 0.8);
  }
  SUBCASE("single cluster: M3/M4 produced, M1/M2 unavailable") {
    const std::string csv = dir + "/one.csv";
    std::ofstream os(csv);
    os << "cluster,y,roleB:x\n";
    Rng rng(9);
    for (int i = 0; i < 120; ++i)
      os << "only," << tail_quantile(TailFamily::pareto(), 0.7, rng.uniform_open())
         << ',' << rng.uniform_open(-1, 1) << '\n';
    os.close();
    const RunResult res = run_cli(
        "compare --input " + csv + " --out " + dir + "/cmp1.csv --k-min 10 --k-max 30",
        dir);
    CHECK(res.exit_code == 3);
    std::ifstream in(dir + "/cmp1.csv");
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    // cluster,m1,m2,m3,m4 with m1/m2 empty.
    CHECK(row.rfind("only,,,", 0) == 0);
    CHECK(row.size() > 8);
  }
}

TEST_CASE("simulate") {
  const std::string dir = make_temp_dir();
  const std::string cfg = std::string(EVTMEM_DATA_DIR) + "/configs/smoke.cfg";
  SUBCASE("smoke config") {
    const RunResult res = run_cli(
        "simulate --config " + cfg + " --out-prefix " + dir + "/run", dir);
    REQUIRE(res.exit_code == 0);
    const std::string summary = slurp(dir + "/run_summary.csv");
    CHECK(summary.find("pareto,10,10,beta_A,bias,") != std::string::npos);
    CHECK(slurp(dir + "/run_qq_10_10_beta_A.csv").rfind("theoretical,", 0) == 0);
  }
  SUBCASE("single replication warns about the variance") {
    std::ofstream os(dir + "/one.cfg");
    os << "family=pareto\ncells=10:10\nreplications=1\nseed=3\n";
    os.close();
    const RunResult res = run_cli(
        "simulate --config " + dir + "/one.cfg --out-prefix " + dir + "/one",
        dir);
    CHECK(res.exit_code == 0);
    CHECK(slurp(dir + "/stderr.txt").find("variance undefined") !=
          std::string::npos);
    CHECK(slurp(dir + "/one_summary.csv").find("nan") != std::string::npos);
  }
  SUBCASE("unknown family") {
    std::ofstream os(dir + "/bad.cfg");
    os << "family=weibull\ncells=10:10\n";
    os.close();
    const RunResult res = run_cli(
        "simulate --config " + dir + "/bad.cfg --out-prefix " + dir + "/bad",
        dir);
    CHECK(res.exit_code == 2);
  }
  SUBCASE("zero replications") {
    std::ofstream os(dir + "/zero.cfg");
    os << "family=pareto\ncells=10:10\nreplications=0\n";
    os.close();
    const RunResult res = run_cli(
        "simulate --config " + dir + "/zero.cfg --out-prefix " + dir + "/z",
        dir);
    CHECK(res.exit_code == 3);
  }
}
