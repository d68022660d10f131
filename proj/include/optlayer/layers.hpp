#pragma once

#include <memory>
#include <vector>

#include "optlayer/qp.hpp"
#include "optlayer/qp_diff.hpp"

namespace optlayer {

// A small sequential layer stack with reverse-mode differentiation.
// Layers are stateless w.r.t. the pass: everything needed by backward is
// stored on the tape record.

class Layer {
 public:
  virtual ~Layer() = default;

  struct Record {
    Vec input;
    std::shared_ptr<ValidatedProblem> problem;  // QP layers only
    QpSolution solution;                        // QP layers only
  };

  virtual Eigen::Index in_dim() const = 0;
  virtual Eigen::Index out_dim() const = 0;
  // Number of learnable scalars (flattened order is layer-specific and
  // documented on each concrete class).
  virtual Eigen::Index param_count() const { return 0; }

  virtual Vec forward(const Vec& x, Record& rec) const = 0;
  // Returns dl/dinput; writes dl/dparams (size param_count()) into
  // param_grad when non-null. Sets *heuristic when the gradient came from
  // a degenerate complementarity pattern.
  virtual Vec backward(const Record& rec, const Vec& dl_dout,
                       Vec* param_grad, bool* heuristic) const = 0;
};

using LayerPtr = std::shared_ptr<Layer>;

// out = W x + bias. Learnable scalars: vec(W) column-major, then bias.
class AffineLayer : public Layer {
 public:
  AffineLayer(Mat W, Vec bias);
  Eigen::Index in_dim() const override { return W_.cols(); }
  Eigen::Index out_dim() const override { return W_.rows(); }
  Eigen::Index param_count() const override {
    return W_.size() + bias_.size();
  }
  Vec forward(const Vec& x, Record& rec) const override;
  Vec backward(const Record& rec, const Vec& dl_dout, Vec* param_grad,
               bool* heuristic) const override;
  const Mat& W() const { return W_; }
  const Vec& bias() const { return bias_; }

 private:
  Mat W_;
  Vec bias_;
};

// out = max(x, 0) elementwise, computed directly.
class ReluExplicitLayer : public Layer {
 public:
  explicit ReluExplicitLayer(Eigen::Index n) : n_(n) {}
  Eigen::Index in_dim() const override { return n_; }
  Eigen::Index out_dim() const override { return n_; }
  Vec forward(const Vec& x, Record& rec) const override;
  Vec backward(const Record& rec, const Vec& dl_dout, Vec* param_grad,
               bool* heuristic) const override;

 private:
  Eigen::Index n_;
};

// ReLU realized as the projection QP
//   min ||z - v||^2  s.t.  z >= 0
// emitted as P = 2I, q = -2v, G = -I, h = 0. No learnable scalars.
class ReluQpLayer : public Layer {
 public:
  explicit ReluQpLayer(Eigen::Index n) : n_(n) {}
  Eigen::Index in_dim() const override { return n_; }
  Eigen::Index out_dim() const override { return n_; }
  Vec forward(const Vec& x, Record& rec) const override;
  Vec backward(const Record& rec, const Vec& dl_dout, Vec* param_grad,
               bool* heuristic) const override;
  QpProblem build(const Vec& v) const;

 private:
  Eigen::Index n_;
};

// Scalar output z solving  min z^2  s.t.  a_i' x <= z for every i.
// Equals max(0, max_i a_i' x). Learnable scalars: the a_i stacked row by
// row (k*n of them).
class MaxAffineLayer : public Layer {
 public:
  explicit MaxAffineLayer(std::vector<Vec> a);
  Eigen::Index in_dim() const override { return a_[0].size(); }
  Eigen::Index out_dim() const override { return 1; }
  Eigen::Index param_count() const override {
    return static_cast<Eigen::Index>(a_.size()) * a_[0].size();
  }
  Vec forward(const Vec& x, Record& rec) const override;
  Vec backward(const Record& rec, const Vec& dl_dout, Vec* param_grad,
               bool* heuristic) const override;
  QpProblem build(const Vec& x) const;

 private:
  std::vector<Vec> a_;
};

// Scalar input, scalar output
//   z(x) = sum_i w_i * max(a_i x + b_i, 0)
// via the QP in (z, t):  min ||t||^2 + (z - w' t)^2  s.t.  a_i x + b_i <= t_i.
// Signs w_i in {-1, +1} are fixed; learnable scalars are a then b (2k).
class PiecewiseLinearLayer : public Layer {
 public:
  PiecewiseLinearLayer(Vec w, Vec a, Vec b);
  Eigen::Index in_dim() const override { return 1; }
  Eigen::Index out_dim() const override { return 1; }
  Eigen::Index param_count() const override { return 2 * w_.size(); }
  Vec forward(const Vec& x, Record& rec) const override;
  Vec backward(const Record& rec, const Vec& dl_dout, Vec* param_grad,
               bool* heuristic) const override;
  QpProblem build(double x) const;
  double closed_form(double x) const;

 private:
  Vec w_, a_, b_;
};

LayerPtr relu_as_qp(Eigen::Index n);
LayerPtr max_affine_layer(std::vector<Vec> a);
LayerPtr piecewise_linear_layer(Vec w, Vec a, Vec b);

// Single-use record of one forward pass.
struct Tape {
  std::vector<LayerPtr> layers;
  std::vector<Layer::Record> records;
  bool consumed = false;
};

struct TapeGrads {
  Vec d_input;
  std::vector<Vec> d_params;        // one entry per layer, may be empty
  std::vector<bool> heuristic;      // per layer
};

// Sequential forward; empty layer list is the identity.
std::pair<Vec, Tape> tape_forward(const std::vector<LayerPtr>& layers,
                                  const Vec& input);
// Reverse accumulation over a tape; throws if the tape was already used.
TapeGrads tape_backward(Tape& tape, const Vec& dl_dout);

}  // namespace optlayer
