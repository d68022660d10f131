#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "optlayer/cone_diff.hpp"
#include "optlayer/qp.hpp"
#include "optlayer/types.hpp"

namespace optlayer {

// TV denoising with a learned regularization weight. The smoother is the QP
//   min 1/2 ||y - z||^2 + lambda * 1't   s.t.  Dz <= t, -Dz <= t
// with D the first-difference operator; lambda (and optionally the entries
// of D) is trained by gradient descent through the QP layer against clean
// held-out signals.
struct DenoiseConfig {
  std::uint64_t seed = 0;
  int signal_len = 50;
  int segments = 5;
  double sigma = 0.1;
  int num_signals = 10;       // split 80/20 into train/test
  double lambda_init = 0.01;  // trained in log space
  double learning_rate = 25.0;
  int iterations = 30;
  bool learn_d = false;
};

struct DenoiseResult {
  double lambda_init = 0, lambda_final = 0;
  double train_mse_init = 0, train_mse_final = 0;
  double test_mse_init = 0, test_mse_final = 0;
  double test_mse_baseline = 0;  // lambda = 0, i.e. z = y
  bool solver_failure = false;
};

DenoiseResult run_denoise(const DenoiseConfig& cfg);

// Data poisoning against a ridge-regression model
//   theta*(X) = argmin ||X theta - y||^2 + alpha ||theta||^2.
// Each training point moves once by epsilon * sign of the implicit gradient
// of the test loss; zero-gradient coordinates stay put.
struct PoisonConfig {
  std::uint64_t seed = 0;
  int num_train = 40;
  int num_test = 40;
  double alpha = 0.1;
  double epsilon = 0.05;
};

struct PoisonResult {
  double clean_test_loss = 0;
  double poisoned_test_loss = 0;
  double grad_norm = 0;  // of the attack gradient, diagnostics
  bool solver_failure = false;
};

PoisonResult run_poison(const PoisonConfig& cfg);

// ---- gradient-check suites (shared by the CLI and the test harness) ----

// Strictly feasible random QP: P diagonally shifted Gram matrix, equality
// right-hand side and inequality slack built around a sampled interior
// point.
QpProblem random_feasible_qp(std::mt19937_64& rng, int n, int n_eq,
                             int n_ineq);

// Bounded random LP over the nonnegative orthant with a strictly feasible
// dual (c = -A'y0 for y0 > 0).
ConeLpProblem random_bounded_lp(std::mt19937_64& rng, int m, int n);

struct GradcheckSummary {
  int trials = 0;
  int solved = 0;
  int degenerate = 0;
  int failures = 0;  // nondegenerate cases above 1e-4 relative error
  double max_rel_err = 0;
};

GradcheckSummary gradcheck_qp_suite(std::uint64_t seed, int trials);

struct ConeCheckSummary {
  int trials = 0;
  int solved = 0;
  int failures = 0;
  double max_adjoint_err = 0;  // inner-product identity residual
  double max_fd_err = 0;       // forward derivative vs finite differences
};

ConeCheckSummary gradcheck_cone_suite(std::uint64_t seed, int trials);

// Solves the LP as a QP (P = 0) and unpacks (x, y, s); throws on failure.
ConeSolution solve_lp(const ConeLpProblem& p);

std::string to_json(const GradcheckSummary& r);
std::string to_json(const ConeCheckSummary& r);

// JSON (de)serialization used by the CLI; unknown keys are rejected.
DenoiseConfig denoise_config_from_json(const std::string& text);
PoisonConfig poison_config_from_json(const std::string& text);
std::string to_json(const DenoiseResult& r);
std::string to_json(const PoisonResult& r);

}  // namespace optlayer
