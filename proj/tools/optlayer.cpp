// optlayer: solve / differentiate / canonicalize small convex QPs.
//
// Exit codes: 0 success, 1 input or verification error, 2 numerical or
// solver failure.

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "optlayer/canon.hpp"
#include "optlayer/dsl.hpp"
#include "optlayer/experiments.hpp"
#include "optlayer/qp.hpp"

namespace {

using namespace optlayer;

constexpr int kOk = 0;
constexpr int kInputError = 1;
constexpr int kSolverError = 2;

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw OptlayerError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text << "\n";
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw OptlayerError("cannot write '" + out_path + "'");
  out << text << "\n";
}

nlohmann::ordered_json vec_json(const Vec& v) {
  auto arr = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Vec flatten_params(const ParsedProblem& parsed) {
  Eigen::Index p = parsed.problem.param_dim();
  Vec theta = Vec::Zero(p);
  Eigen::Index at = 0;
  for (const auto& [name, shape] : parsed.problem.parameter_order) {
    auto it = parsed.parameter_values.find(name);
    if (it == parsed.parameter_values.end())
      throw OptlayerError("parameter '" + name + "' has no value binding");
    if (it->second.rows() != shape.rows || it->second.cols() != shape.cols)
      throw OptlayerError("parameter '" + name + "' value shape mismatch");
    // row-major flattening, matching the canonicalizer
    for (Eigen::Index i = 0; i < shape.rows; ++i)
      for (Eigen::Index j = 0; j < shape.cols; ++j)
        theta[at++] = it->second(i, j);
  }
  return theta;
}

int cmd_solve(const std::string& file, const std::string& out_path) {
  ParsedProblem parsed;
  AsaForm form;
  Vec theta;
  try {
    parsed = parse_problem(slurp(file));
    form = canonicalize(parsed.problem);
    theta = flatten_params(parsed);
  } catch (const OptlayerError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
  try {
    auto [x, rec] = asa_forward(form, theta);
    ResidualReport res = kkt_residuals(rec.problem, rec.solution);
    nlohmann::ordered_json j;
    j["status"] = to_string(rec.solution.status);
    j["x"] = vec_json(x);
    j["z_canonical"] = vec_json(rec.solution.z_star);
    j["nu"] = vec_json(rec.solution.nu_star);
    j["lambda"] = vec_json(rec.solution.lambda_star);
    j["iterations"] = rec.solution.iterations;
    j["residuals"] = {{"stationarity", res.stationarity},
                      {"primal_eq", res.primal_eq},
                      {"primal_ineq", res.primal_ineq},
                      {"comp_slack", res.comp_slack}};
    emit(j.dump(2), out_path);
    return rec.solution.status == SolveStatus::Optimal ? kOk : kSolverError;
  } catch (const OptlayerError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kSolverError;
  }
}

int cmd_gradcheck(std::uint64_t seed, int trials, bool cone,
                  const std::string& out_path) {
  try {
    if (cone) {
      ConeCheckSummary s = gradcheck_cone_suite(seed, trials);
      emit(to_json(s), out_path);
      return s.failures == 0 ? kOk : kSolverError;
    }
    GradcheckSummary s = gradcheck_qp_suite(seed, trials);
    emit(to_json(s), out_path);
    return s.failures == 0 ? kOk : kSolverError;
  } catch (const OptlayerError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kSolverError;
  }
}

int cmd_denoise(const std::string& config, const std::string& out_path) {
  DenoiseConfig cfg;
  try {
    cfg = denoise_config_from_json(slurp(config));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
  try {
    DenoiseResult r = run_denoise(cfg);
    emit(to_json(r), out_path);
    return r.solver_failure ? kSolverError : kOk;
  } catch (const OptlayerError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kSolverError;
  }
}

int cmd_poison(const std::string& config, const std::string& out_path) {
  PoisonConfig cfg;
  try {
    cfg = poison_config_from_json(slurp(config));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
  try {
    PoisonResult r = run_poison(cfg);
    emit(to_json(r), out_path);
    return r.solver_failure ? kSolverError : kOk;
  } catch (const OptlayerError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kSolverError;
  }
}

int cmd_canon(const std::string& file, const std::string& out_path) {
  try {
    ParsedProblem parsed = parse_problem(slurp(file));
    AsaForm form = canonicalize(parsed.problem);
    emit(asa_to_json(form), out_path);
    return kOk;
  } catch (const OptlayerError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"differentiable convex QP layer toolkit"};
  app.require_subcommand(1);
  std::string file, config, out_path;
  std::uint64_t seed = 0;
  int trials = 100;
  bool cone = false;

  auto* solve = app.add_subcommand("solve", "solve a .dpp problem file");
  solve->add_option("file", file, "problem file")->required();
  solve->add_option("--out", out_path, "write JSON here instead of stdout");

  auto* grad = app.add_subcommand("gradcheck", "run the gradient suites");
  grad->add_option("--seed", seed, "RNG seed");
  grad->add_option("--trials", trials, "number of random instances");
  grad->add_flag("--cone", cone, "run the cone-derivative suite");
  grad->add_option("--out", out_path, "write JSON here instead of stdout");

  auto* den = app.add_subcommand("denoise", "TV denoising experiment");
  den->add_option("--config", config, "JSON config")->required();
  den->add_option("--out", out_path, "write JSON here instead of stdout");

  auto* poi = app.add_subcommand("poison", "data-poisoning experiment");
  poi->add_option("--config", config, "JSON config")->required();
  poi->add_option("--out", out_path, "write JSON here instead of stdout");

  auto* can = app.add_subcommand("canon", "dump the canonical form");
  can->add_option("file", file, "problem file")->required();
  can->add_option("--out", out_path, "write JSON here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  if (solve->parsed()) return cmd_solve(file, out_path);
  if (grad->parsed()) return cmd_gradcheck(seed, trials, cone, out_path);
  if (den->parsed()) return cmd_denoise(config, out_path);
  if (poi->parsed()) return cmd_poison(config, out_path);
  if (can->parsed()) return cmd_canon(file, out_path);
  return kInputError;
}
