#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "optlayer/canon.hpp"
#include "optlayer/dsl.hpp"

#ifndef CLI_PATH
#error "CLI_PATH must be defined by the build"
#endif
#ifndef EXAMPLES_DIR
#error "EXAMPLES_DIR must be defined by the build"
#endif

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  REQUIRE(out.good());
  out << text;
}

int run(const std::string& args) {
  std::string cmd =
      std::string(CLI_PATH) + " " + args + " >/dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  return WEXITSTATUS(rc);
}

const std::string kGolden = std::string(EXAMPLES_DIR) + "/qp_layer.dpp";

}  // namespace

TEST_CASE("solve on the bundled example succeeds and reports the solution") {
  std::string out = "/tmp/optlayer_cli_solve.json";
  CHECK(run("solve " + kGolden + " --out " + out) == 0);
  auto j = nlohmann::json::parse(slurp(out));
  CHECK(j["status"] == "Optimal");
  REQUIRE(j["x"].size() == 2);
  CHECK(std::abs(j["x"][0].get<double>() - 0.4) < 1e-6);
  CHECK(std::abs(j["x"][1].get<double>() - 0.6) < 1e-6);
  CHECK(std::abs(j["nu"][0].get<double>() + 1.4) < 1e-6);
  CHECK(j["residuals"]["stationarity"].get<double>() < 1e-6);
  CHECK(j["residuals"]["primal_eq"].get<double>() < 1e-8);
  std::remove(out.c_str());
}

TEST_CASE("malformed input exits with the input-error code") {
  std::string bad = "/tmp/optlayer_cli_bad.dpp";
  spit(bad, "var x[2]\nminimize + x\n");
  CHECK(run("solve " + bad) == 1);
  // rule violations (maximizing a convex function) are input errors too
  spit(bad, "var x[2]\nminimize -1 * sum_squares(x)\n");
  CHECK(run("solve " + bad) == 1);
  CHECK(run("solve /tmp/optlayer_no_such_file.dpp") == 1);
  std::remove(bad.c_str());
}

TEST_CASE("an infeasible program exits with the solver-failure code") {
  std::string inf = "/tmp/optlayer_cli_infeasible.dpp";
  spit(inf,
       "var z[1]\n"
       "minimize sum_squares(z)\n"
       "subject to\n"
       "  z <= [0]\n"
       "  [1] + -1 * z <= [0]\n");
  CHECK(run("solve " + inf) == 2);
  std::remove(inf.c_str());
}

TEST_CASE("canonical dump is stable across runs and matches the library") {
  std::string o1 = "/tmp/optlayer_cli_canon1.json";
  std::string o2 = "/tmp/optlayer_cli_canon2.json";
  CHECK(run("canon " + kGolden + " --out " + o1) == 0);
  CHECK(run("canon " + kGolden + " --out " + o2) == 0);
  std::string a = slurp(o1);
  CHECK(a == slurp(o2));

  using namespace optlayer;
  ParsedProblem p = parse_problem(slurp(kGolden));
  CHECK(a == asa_to_json(canonicalize(p.problem)) + "\n");
  std::remove(o1.c_str());
  std::remove(o2.c_str());
}

TEST_CASE("denoise runs deterministically from a config file") {
  std::string cfg = "/tmp/optlayer_cli_denoise_cfg.json";
  spit(cfg,
       "{\"seed\": 7, \"signal_len\": 20, \"num_signals\": 5,"
       " \"iterations\": 3}");
  std::string o1 = "/tmp/optlayer_cli_denoise1.json";
  std::string o2 = "/tmp/optlayer_cli_denoise2.json";
  CHECK(run("denoise --config " + cfg + " --out " + o1) == 0);
  CHECK(run("denoise --config " + cfg + " --out " + o2) == 0);
  CHECK(slurp(o1) == slurp(o2));
  auto j = nlohmann::json::parse(slurp(o1));
  CHECK(j.contains("test_mse_final"));
  std::remove(cfg.c_str());
  std::remove(o1.c_str());
  std::remove(o2.c_str());
}

TEST_CASE("unknown config keys are rejected as input errors") {
  std::string cfg = "/tmp/optlayer_cli_badkey.json";
  spit(cfg, "{\"seed\": 1, \"bogus_knob\": 3}");
  CHECK(run("denoise --config " + cfg) == 1);
  CHECK(run("poison --config " + cfg) == 1);
  std::remove(cfg.c_str());
}

TEST_CASE("gradcheck subcommand reports success") {
  CHECK(run("gradcheck --trials 0") == 0);
  std::string out = "/tmp/optlayer_cli_grad.json";
  CHECK(run("gradcheck --seed 3 --trials 5 --out " + out) == 0);
  auto j = nlohmann::json::parse(slurp(out));
  CHECK(j["failures"].get<int>() == 0);
  std::remove(out.c_str());
}
