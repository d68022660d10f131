#include "optlayer/layers.hpp"

namespace optlayer {

namespace {

// Shared QP-layer plumbing: solve, stash, and later run the implicit
// backward with the given seed over the full variable vector.
QpSolution solve_into(const QpProblem& qp, Layer::Record& rec) {
  rec.problem = std::make_shared<ValidatedProblem>(validate_problem(qp));
  SolverConfig cfg;
  cfg.tol = 1e-11;  // layer outputs feed closed-form comparisons
  QpSolution s = solve_qp(*rec.problem, cfg);
  if (s.status != SolveStatus::Optimal)
    throw NumericalError(std::string("layer QP solve failed: ") + to_string(s.status));
  rec.solution = s;
  return s;
}

ParamGrads qp_backward(const Layer::Record& rec, const Vec& seed,
                       bool* heuristic) {
  DiffTriple d = backward_solve(*rec.problem, rec.solution, {seed});
  if (heuristic && d.heuristic) *heuristic = true;
  return assemble_grads(rec.solution, d, *rec.problem);
}

}  // namespace

// ---- AffineLayer --------------------------------------------------------

AffineLayer::AffineLayer(Mat W, Vec bias)
    : W_(std::move(W)), bias_(std::move(bias)) {
  if (W_.rows() != bias_.size())
    throw DimensionMismatch("affine layer: W rows != bias size");
}

Vec AffineLayer::forward(const Vec& x, Record& rec) const {
  rec.input = x;
  return W_ * x + bias_;
}

Vec AffineLayer::backward(const Record& rec, const Vec& dl_dout,
                          Vec* param_grad, bool*) const {
  if (param_grad) {
    Mat dW = dl_dout * rec.input.transpose();
    param_grad->resize(param_count());
    param_grad->head(W_.size()) = Eigen::Map<const Vec>(dW.data(), dW.size());
    param_grad->tail(bias_.size()) = dl_dout;
  }
  return W_.transpose() * dl_dout;
}

// ---- ReluExplicitLayer --------------------------------------------------

Vec ReluExplicitLayer::forward(const Vec& x, Record& rec) const {
  rec.input = x;
  return x.cwiseMax(0.0);
}

Vec ReluExplicitLayer::backward(const Record& rec, const Vec& dl_dout,
                                Vec*, bool*) const {
  Vec g = dl_dout;
  for (Eigen::Index i = 0; i < g.size(); ++i)
    if (rec.input[i] <= 0.0) g[i] = 0.0;
  return g;
}

// ---- ReluQpLayer --------------------------------------------------------

QpProblem ReluQpLayer::build(const Vec& v) const {
  QpProblem qp;
  qp.P = 2.0 * Mat::Identity(n_, n_);
  qp.q = -2.0 * v;
  qp.r = v.squaredNorm();
  qp.G = -Mat::Identity(n_, n_);
  qp.h = Vec::Zero(n_);
  return qp;
}

Vec ReluQpLayer::forward(const Vec& x, Record& rec) const {
  rec.input = x;
  return solve_into(build(x), rec).z_star;
}

Vec ReluQpLayer::backward(const Record& rec, const Vec& dl_dout, Vec*,
                          bool* heuristic) const {
  ParamGrads g = qp_backward(rec, dl_dout, heuristic);
  return -2.0 * g.gq;  // q = -2v
}

// ---- MaxAffineLayer -----------------------------------------------------

MaxAffineLayer::MaxAffineLayer(std::vector<Vec> a) : a_(std::move(a)) {
  if (a_.empty()) throw DimensionMismatch("max-affine layer needs k >= 1");
  for (const auto& ai : a_)
    if (ai.size() != a_[0].size())
      throw DimensionMismatch("max-affine layer: ragged a vectors");
}

QpProblem MaxAffineLayer::build(const Vec& x) const {
  const Eigen::Index k = static_cast<Eigen::Index>(a_.size());
  QpProblem qp;
  qp.P = 2.0 * Mat::Identity(1, 1);
  qp.q = Vec::Zero(1);
  qp.G = -Mat::Ones(k, 1);  // a_i'x - z <= 0
  qp.h = Vec(k);
  for (Eigen::Index i = 0; i < k; ++i) qp.h[i] = -a_[i].dot(x);
  return qp;
}

Vec MaxAffineLayer::forward(const Vec& x, Record& rec) const {
  rec.input = x;
  return solve_into(build(x), rec).z_star;
}

Vec MaxAffineLayer::backward(const Record& rec, const Vec& dl_dout,
                             Vec* param_grad, bool* heuristic) const {
  ParamGrads g = qp_backward(rec, dl_dout, heuristic);
  const Eigen::Index n = a_[0].size();
  Vec dx = Vec::Zero(n);
  for (size_t i = 0; i < a_.size(); ++i) dx -= g.gh[static_cast<Eigen::Index>(i)] * a_[i];
  if (param_grad) {
    param_grad->resize(param_count());
    for (size_t i = 0; i < a_.size(); ++i)
      param_grad->segment(static_cast<Eigen::Index>(i) * n, n) =
          -g.gh[static_cast<Eigen::Index>(i)] * rec.input;
  }
  return dx;
}

// ---- PiecewiseLinearLayer -----------------------------------------------

PiecewiseLinearLayer::PiecewiseLinearLayer(Vec w, Vec a, Vec b)
    : w_(std::move(w)), a_(std::move(a)), b_(std::move(b)) {
  if (w_.size() != a_.size() || w_.size() != b_.size() || w_.size() == 0)
    throw DimensionMismatch("piecewise-linear layer: w, a, b sizes differ");
  for (Eigen::Index i = 0; i < w_.size(); ++i)
    if (w_[i] != 1.0 && w_[i] != -1.0)
      throw DimensionMismatch("piecewise-linear layer: w entries must be +-1");
}

double PiecewiseLinearLayer::closed_form(double x) const {
  double z = 0.0;
  for (Eigen::Index i = 0; i < w_.size(); ++i)
    z += w_[i] * std::max(a_[i] * x + b_[i], 0.0);
  return z;
}

QpProblem PiecewiseLinearLayer::build(double x) const {
  const Eigen::Index k = w_.size();
  // variables (z, t); objective ||t||^2 + (z - w't)^2
  QpProblem qp;
  qp.P = Mat::Zero(1 + k, 1 + k);
  qp.P(0, 0) = 2.0;
  qp.P.block(0, 1, 1, k) = -2.0 * w_.transpose();
  qp.P.block(1, 0, k, 1) = -2.0 * w_;
  qp.P.block(1, 1, k, k) =
      2.0 * (Mat::Identity(k, k) + w_ * w_.transpose());
  qp.q = Vec::Zero(1 + k);
  qp.G = Mat::Zero(k, 1 + k);
  qp.G.block(0, 1, k, k) = -Mat::Identity(k, k);  // -(t_i) <= -(a_i x + b_i)
  qp.h = -(a_ * x + b_);
  return qp;
}

Vec PiecewiseLinearLayer::forward(const Vec& x, Record& rec) const {
  rec.input = x;
  QpSolution s = solve_into(build(x[0]), rec);
  Vec out(1);
  out[0] = s.z_star[0];
  return out;
}

Vec PiecewiseLinearLayer::backward(const Record& rec, const Vec& dl_dout,
                                   Vec* param_grad, bool* heuristic) const {
  const Eigen::Index k = w_.size();
  Vec seed = Vec::Zero(1 + k);
  seed[0] = dl_dout[0];
  ParamGrads g = qp_backward(rec, seed, heuristic);
  // h_i = -(a_i x + b_i)
  const double x = rec.input[0];
  Vec dx(1);
  dx[0] = -g.gh.dot(a_);
  if (param_grad) {
    param_grad->resize(2 * k);
    param_grad->head(k) = -g.gh * x;  // d/da
    param_grad->tail(k) = -g.gh;      // d/db
  }
  return dx;
}

LayerPtr relu_as_qp(Eigen::Index n) {
  return std::make_shared<ReluQpLayer>(n);
}
LayerPtr max_affine_layer(std::vector<Vec> a) {
  return std::make_shared<MaxAffineLayer>(std::move(a));
}
LayerPtr piecewise_linear_layer(Vec w, Vec a, Vec b) {
  return std::make_shared<PiecewiseLinearLayer>(std::move(w), std::move(a),
                                                std::move(b));
}

// ---- tape ---------------------------------------------------------------

std::pair<Vec, Tape> tape_forward(const std::vector<LayerPtr>& layers,
                                  const Vec& input) {
  Tape tape;
  tape.layers = layers;
  Vec x = input;
  for (size_t i = 0; i < layers.size(); ++i) {
    if (x.size() != layers[i]->in_dim())
      throw DimensionMismatch("layer " + std::to_string(i) +
                              ": input dimension mismatch");
    Layer::Record rec;
    try {
      x = layers[i]->forward(x, rec);
    } catch (const OptlayerError& e) {
      throw NumericalError("layer " + std::to_string(i) + ": " + e.what());
    }
    tape.records.push_back(std::move(rec));
  }
  return {x, std::move(tape)};
}

TapeGrads tape_backward(Tape& tape, const Vec& dl_dout) {
  if (tape.consumed)
    throw OptlayerError("tape already consumed by a backward pass");
  tape.consumed = true;
  TapeGrads out;
  out.d_params.resize(tape.layers.size());
  out.heuristic.assign(tape.layers.size(), false);
  Vec g = dl_dout;
  for (size_t i = tape.layers.size(); i-- > 0;) {
    bool flag = false;
    Vec pg;
    g = tape.layers[i]->backward(tape.records[i], g,
                                 tape.layers[i]->param_count() ? &pg : nullptr,
                                 &flag);
    out.d_params[i] = std::move(pg);
    out.heuristic[i] = flag;
  }
  out.d_input = g;
  return out;
}

}  // namespace optlayer
