#include "optlayer/canon.hpp"

#include <map>
#include <sstream>
#include <tuple>

#include "json.hpp"

namespace optlayer {

namespace {

using Key = std::tuple<Eigen::Index, Eigen::Index, Eigen::Index>;

// Sparse (row, col, slice) tensor; col == -1 is the constant-x column and
// slice == -1 the constant-theta slice, remapped when written into AsaForm.
struct Tensor {
  Eigen::Index rows = 0;
  std::map<Key, double> m;

  void addEntry(Eigen::Index r, Eigen::Index c, Eigen::Index s, double v) {
    if (v == 0.0) return;
    auto [it, fresh] = m.try_emplace({r, c, s}, v);
    if (!fresh) {
      it->second += v;
      if (it->second == 0.0) m.erase(it);
    }
  }
  bool parameter_free() const {
    for (const auto& [k, v] : m)
      if (std::get<2>(k) != -1) return false;
    return true;
  }
  bool variable_free() const {
    for (const auto& [k, v] : m)
      if (std::get<1>(k) != -1) return false;
    return true;
  }
};

double flat_value(const Mat& value, Eigen::Index flat) {
  // row-major flattening
  return value(flat / value.cols(), flat % value.cols());
}

struct Canonicalizer {
  const DppProblem& prob;
  AsaForm form;

  std::map<std::string, Eigen::Index> var_offsets;   // originals
  std::map<std::string, Eigen::Index> param_offsets;
  Eigen::Index next_var = 0;  // grows past n_orig for auxiliaries
  std::vector<std::vector<SparseEntry>> ineq_rows;   // one tensor row group each

  explicit Canonicalizer(const DppProblem& p) : prob(p) {}

  void collect_variables(const ExprPtr& e) {
    if (e->kind == ExprKind::Variable) {
      if (!var_offsets.count(e->name)) {
        var_offsets[e->name] = next_var;
        form.variable_order.emplace_back(e->name, e->shape.rows);
        next_var += e->shape.rows;
      }
      return;
    }
    for (const auto& a : e->args) collect_variables(a);
  }

  Eigen::Index alloc_aux(Eigen::Index dim) {
    Eigen::Index at = next_var;
    next_var += dim;
    return at;
  }

  Eigen::Index param_offset(const ExprPtr& e) const {
    auto it = param_offsets.find(e->name);
    if (it == param_offsets.end())
      throw UndeclaredParameter("parameter '" + e->name +
                                "' missing from parameter_order");
    return it->second;
  }

  // ---- affine expression tensors (Theorem-4 leaf rules and psi combiner) --

  Tensor affine_tensor(const ExprPtr& e) {
    Tensor t;
    t.rows = e->shape.size();
    switch (e->kind) {
      case ExprKind::Constant:
        for (Eigen::Index i = 0; i < t.rows; ++i)
          t.addEntry(i, -1, -1, flat_value(e->value, i));
        return t;
      case ExprKind::Variable: {
        Eigen::Index off = var_offsets.at(e->name);
        for (Eigen::Index i = 0; i < t.rows; ++i)
          t.addEntry(i, off + i, -1, 1.0);
        return t;
      }
      case ExprKind::Parameter: {
        Eigen::Index off = param_offset(e);
        for (Eigen::Index i = 0; i < t.rows; ++i)
          t.addEntry(i, -1, off + i, 1.0);
        return t;
      }
      case ExprKind::Atom:
        break;
    }
    switch (e->atom) {
      case AtomKind::Add: {
        t = affine_tensor(e->args[0]);
        Tensor b = affine_tensor(e->args[1]);
        for (const auto& [k, v] : b.m)
          t.addEntry(std::get<0>(k), std::get<1>(k), std::get<2>(k), v);
        return t;
      }
      case AtomKind::Negate: {
        t = affine_tensor(e->args[0]);
        for (auto& [k, v] : t.m) v = -v;
        return t;
      }
      case AtomKind::Sum: {
        Tensor a = affine_tensor(e->args[0]);
        t.rows = 1;
        for (const auto& [k, v] : a.m)
          t.addEntry(0, std::get<1>(k), std::get<2>(k), v);
        return t;
      }
      case AtomKind::AffineIndex: {
        Tensor a = affine_tensor(e->args[0]);
        t.rows = 1;
        for (const auto& [k, v] : a.m)
          if (std::get<0>(k) == e->index)
            t.addEntry(0, std::get<1>(k), std::get<2>(k), v);
        return t;
      }
      case AtomKind::ScalarMul:
        return psi_scale(affine_tensor(e->args[0]),
                         affine_tensor(e->args[1]));
      case AtomKind::MatVecMul:
        return psi_matvec(affine_tensor(e->args[0]),
                          affine_tensor(e->args[1]), e->args[0]->shape);
      case AtomKind::InnerProduct:
        return psi_inner(affine_tensor(e->args[0]),
                         affine_tensor(e->args[1]));
      default:
        throw UnsupportedAtom(std::string("atom '") + atom_name(e->atom) +
                              "' is not affine");
    }
  }

  // scalar coefficient (1 row, variable-free) times arbitrary tensor
  Tensor psi_scale(const Tensor& a, const Tensor& x) {
    Tensor out;
    out.rows = x.rows;
    if (a.parameter_free()) {
      double c = 0.0;
      if (auto it = a.m.find({0, -1, -1}); it != a.m.end()) c = it->second;
      for (const auto& [k, v] : x.m)
        out.addEntry(std::get<0>(k), std::get<1>(k), std::get<2>(k), c * v);
      return out;
    }
    if (!x.parameter_free())
      throw UnsupportedAtom("product of two parametrized expressions");
    for (const auto& [ka, va] : a.m)
      for (const auto& [kx, vx] : x.m)
        out.addEntry(std::get<0>(kx), std::get<1>(kx), std::get<2>(ka),
                     va * vx);
    return out;
  }

  Tensor psi_matvec(const Tensor& a, const Tensor& x, Shape ashape) {
    if (!a.variable_free())
      throw UnsupportedAtom("matrix operand contains variables");
    const Eigen::Index k = ashape.cols;
    Tensor out;
    out.rows = ashape.rows;
    if (a.parameter_free()) {
      // dense constant matrix times x's tensor
      for (const auto& [ka, va] : a.m) {
        Eigen::Index flat = std::get<0>(ka);
        Eigen::Index i = flat / k, j = flat % k;
        for (const auto& [kx, vx] : x.m)
          if (std::get<0>(kx) == j)
            out.addEntry(i, std::get<1>(kx), std::get<2>(kx), va * vx);
      }
      return out;
    }
    if (!x.parameter_free())
      throw UnsupportedAtom("product of two parametrized expressions");
    for (const auto& [ka, va] : a.m) {
      Eigen::Index flat = std::get<0>(ka);
      Eigen::Index i = flat / k, j = flat % k;
      for (const auto& [kx, vx] : x.m)
        if (std::get<0>(kx) == j)
          out.addEntry(i, std::get<1>(kx), std::get<2>(ka), va * vx);
    }
    return out;
  }

  Tensor psi_inner(const Tensor& a, const Tensor& b) {
    const Tensor* w = nullptr;  // variable-free side
    const Tensor* v = nullptr;
    if (a.variable_free()) {
      w = &a;
      v = &b;
    } else if (b.variable_free()) {
      w = &b;
      v = &a;
    } else {
      throw UnsupportedAtom("inner product of two variable expressions");
    }
    if (!w->parameter_free() && !v->parameter_free())
      throw UnsupportedAtom("inner product of two parametrized expressions");
    Tensor out;
    out.rows = 1;
    if (w->parameter_free()) {
      for (const auto& [kw, vw] : w->m) {
        Eigen::Index j = std::get<0>(kw);
        for (const auto& [kv, vv] : v->m)
          if (std::get<0>(kv) == j)
            out.addEntry(0, std::get<1>(kv), std::get<2>(kv), vw * vv);
      }
      return out;
    }
    // w parameter-affine, v parameter-free
    for (const auto& [kw, vw] : w->m) {
      Eigen::Index j = std::get<0>(kw);
      for (const auto& [kv, vv] : v->m)
        if (std::get<0>(kv) == j)
          out.addEntry(0, std::get<1>(kv), std::get<2>(kw), vw * vv);
    }
    return out;
  }

  bool is_affine(const ExprPtr& e) {
    Curvature c = curvature_of(e, RuleSet::Dpp).curvature;
    return c == Curvature::Constant || c == Curvature::ParameterAffine ||
           c == Curvature::Affine;
  }

  // ---- graph expansion of convex atoms ----------------------------------

  // Appends the inequality rows of tensor T <= 0.
  void add_ineq_rows(const Tensor& t) {
    for (Eigen::Index i = 0; i < t.rows; ++i) {
      std::vector<SparseEntry> row;
      for (const auto& [k, v] : t.m)
        if (std::get<0>(k) == i)
          row.push_back({0, std::get<1>(k), std::get<2>(k), v});
      ineq_rows.push_back(std::move(row));
    }
  }

  // Affine surrogate for a convex expression in an upper-bound position:
  // nonlinear convex atoms are replaced by auxiliaries plus epigraph rows.
  Tensor canon_convex(const ExprPtr& e) {
    if (is_affine(e)) return affine_tensor(e);
    if (e->kind != ExprKind::Atom)
      throw UnsupportedAtom("non-affine leaf");
    switch (e->atom) {
      case AtomKind::Add: {
        Tensor t = canon_convex(e->args[0]);
        Tensor b = canon_convex(e->args[1]);
        for (const auto& [k, v] : b.m)
          t.addEntry(std::get<0>(k), std::get<1>(k), std::get<2>(k), v);
        return t;
      }
      case AtomKind::Sum: {
        Tensor a = canon_convex(e->args[0]);
        Tensor t;
        t.rows = 1;
        for (const auto& [k, v] : a.m)
          t.addEntry(0, std::get<1>(k), std::get<2>(k), v);
        return t;
      }
      case AtomKind::AffineIndex: {
        Tensor a = canon_convex(e->args[0]);
        Tensor t;
        t.rows = 1;
        for (const auto& [k, v] : a.m)
          if (std::get<0>(k) == e->index)
            t.addEntry(0, std::get<1>(k), std::get<2>(k), v);
        return t;
      }
      case AtomKind::ScalarMul: {
        const ExprPtr& sc = e->args[0];
        if (sc->kind != ExprKind::Constant || sc->value(0, 0) < 0)
          throw UnsupportedAtom(
              "non-affine subtree scaled by a non-constant or negative "
              "factor");
        Tensor t = canon_convex(e->args[1]);
        double c = sc->value(0, 0);
        Tensor out;
        out.rows = t.rows;
        for (const auto& [k, v] : t.m)
          out.addEntry(std::get<0>(k), std::get<1>(k), std::get<2>(k), c * v);
        return out;
      }
      case AtomKind::Norm1: {
        Tensor arg = affine_tensor(e->args[0]);
        Eigen::Index aux = alloc_aux(arg.rows);
        // arg - t <= 0 and -arg - t <= 0
        for (int sign : {+1, -1}) {
          Tensor rows;
          rows.rows = arg.rows;
          for (const auto& [k, v] : arg.m)
            rows.addEntry(std::get<0>(k), std::get<1>(k), std::get<2>(k),
                          sign * v);
          for (Eigen::Index i = 0; i < arg.rows; ++i)
            rows.addEntry(i, aux + i, -1, -1.0);
          add_ineq_rows(rows);
        }
        Tensor t;
        t.rows = 1;
        for (Eigen::Index i = 0; i < arg.rows; ++i)
          t.addEntry(0, aux + i, -1, 1.0);
        return t;
      }
      case AtomKind::MaxElementwise: {
        Eigen::Index d = e->shape.size();
        Eigen::Index aux = alloc_aux(d);
        for (const auto& a : e->args) {
          Tensor ta = canon_convex(a);
          Tensor rows = ta;  // arg - u <= 0
          for (Eigen::Index i = 0; i < d; ++i)
            rows.addEntry(i, aux + i, -1, -1.0);
          add_ineq_rows(rows);
        }
        Tensor t;
        t.rows = d;
        for (Eigen::Index i = 0; i < d; ++i) t.addEntry(i, aux + i, -1, 1.0);
        return t;
      }
      default:
        throw UnsupportedAtom(std::string("atom '") + atom_name(e->atom) +
                              "' unsupported in this position");
    }
  }

  // ---- objective --------------------------------------------------------

  void add_linear_cost(const Tensor& t, double coeff) {
    for (const auto& [k, v] : t.m) {
      Eigen::Index col = std::get<1>(k), slice = std::get<2>(k);
      if (col >= 0)
        form.Qmat.push_back({col, 0, slice, coeff * v});
      else
        form.r_lin.push_back({0, 0, slice, coeff * v});
    }
  }

  void canon_objective(const ExprPtr& e, double coeff) {
    if (is_affine(e)) {
      add_linear_cost(affine_tensor(e), coeff);
      return;
    }
    if (e->kind != ExprKind::Atom)
      throw UnsupportedAtom("non-affine objective leaf");
    switch (e->atom) {
      case AtomKind::Add:
        canon_objective(e->args[0], coeff);
        canon_objective(e->args[1], coeff);
        return;
      case AtomKind::Negate:
        canon_objective(e->args[0], -coeff);
        return;
      case AtomKind::ScalarMul: {
        const ExprPtr& sc = e->args[0];
        if (sc->kind == ExprKind::Constant) {
          canon_objective(e->args[1], coeff * sc->value(0, 0));
          return;
        }
        throw UnsupportedAtom(
            "parametrized scaling of a non-affine objective term");
      }
      case AtomKind::SumSquares:
      case AtomKind::QuadOverIdentity: {
        double w = (e->atom == AtomKind::SumSquares ? 2.0 : 1.0) * coeff;
        if (w <= 0)
          throw UnsupportedAtom("negatively weighted quadratic term");
        Tensor arg = affine_tensor(e->args[0]);
        AsaForm::QuadTerm qt;
        qt.coeff = w;
        qt.rows = arg.rows;
        for (const auto& [k, v] : arg.m)
          qt.S.push_back({std::get<0>(k), std::get<1>(k), std::get<2>(k), v});
        form.quad_terms.push_back(std::move(qt));
        return;
      }
      case AtomKind::Norm1:
      case AtomKind::MaxElementwise:
      case AtomKind::Sum:
      case AtomKind::AffineIndex: {
        if (coeff < 0)
          throw UnsupportedAtom("negatively weighted convex term");
        add_linear_cost(canon_convex(e), coeff);
        return;
      }
      default:
        throw UnsupportedAtom(std::string("objective atom '") +
                              atom_name(e->atom) + "'");
    }
  }

  // ---- assembly ---------------------------------------------------------

  // Remaps sentinel columns/slices now that n_c and p are known, negating
  // the offset column so the stored tensor reads as [A b] / [G h].
  void emit_constraint_rows(const Tensor& t, std::vector<SparseEntry>& out,
                            Eigen::Index row_base) {
    for (const auto& [k, v] : t.m) {
      auto [r, c, s] = k;
      Eigen::Index col = c >= 0 ? c : form.n_c;
      Eigen::Index slice = s >= 0 ? s : form.p;
      out.push_back({row_base + r, col, slice, c >= 0 ? v : -v});
    }
  }

  AsaForm run() {
    VerificationReport rep = verify_dpp(prob);
    if (!rep.ok) {
      std::string msg = "problem failed DPP verification:";
      for (const auto& v : rep.violations)
        msg += "\n  " + v.path + ": " + v.message;
      throw NotVerified(msg);
    }

    form.p = prob.param_dim();
    Eigen::Index poff = 0;
    for (const auto& [name, shape] : prob.parameter_order) {
      param_offsets[name] = poff;
      poff += shape.size();
    }

    collect_variables(prob.objective);
    for (const auto& [l, r] : prob.eq_constraints) {
      collect_variables(l);
      collect_variables(r);
    }
    for (const auto& [l, r] : prob.ineq_constraints) {
      collect_variables(l);
      collect_variables(r);
    }
    form.n_orig = next_var;

    canon_objective(prob.objective, 1.0);

    std::vector<Tensor> eq_tensors;
    for (const auto& [lhs, rhs] : prob.eq_constraints) {
      Tensor t = affine_tensor(lhs);
      Tensor r = affine_tensor(rhs);
      for (const auto& [k, v] : r.m)
        t.addEntry(std::get<0>(k), std::get<1>(k), std::get<2>(k), -v);
      eq_tensors.push_back(std::move(t));
    }
    std::vector<Tensor> user_ineq;
    for (const auto& [lhs, rhs] : prob.ineq_constraints) {
      Tensor t = canon_convex(lhs);
      Tensor r = affine_tensor(rhs);
      for (const auto& [k, v] : r.m)
        t.addEntry(std::get<0>(k), std::get<1>(k), std::get<2>(k), -v);
      user_ineq.push_back(std::move(t));
    }

    form.n_c = next_var;
    form.retriever.resize(form.n_orig);
    for (Eigen::Index i = 0; i < form.n_orig; ++i) form.retriever[i] = i;

    Eigen::Index row = 0;
    for (const auto& t : eq_tensors) {
      emit_constraint_rows(t, form.R_eq, row);
      row += t.rows;
    }
    form.m_eq = row;

    row = 0;
    for (const auto& t : user_ineq) {
      emit_constraint_rows(t, form.R_ineq, row);
      row += t.rows;
    }
    for (const auto& expansion : ineq_rows) {
      for (const auto& en : expansion) {
        Eigen::Index col = en.col >= 0 ? en.col : form.n_c;
        Eigen::Index slice = en.slice >= 0 ? en.slice : form.p;
        form.R_ineq.push_back(
            {row, col, slice, en.col >= 0 ? en.val : -en.val});
      }
      ++row;
    }
    form.m_ineq = row;

    // normalize quad term / cost sentinels
    for (auto& qt : form.quad_terms)
      for (auto& en : qt.S) {
        if (en.col < 0) en.col = form.n_c;
        if (en.slice < 0) en.slice = form.p;
      }
    for (auto& en : form.Qmat)
      if (en.slice < 0) en.slice = form.p;
    for (auto& en : form.r_lin)
      if (en.slice < 0) en.slice = form.p;

    auto sort_entries = [](std::vector<SparseEntry>& v) {
      std::sort(v.begin(), v.end(), [](const SparseEntry& a,
                                       const SparseEntry& b) {
        return std::tie(a.row, a.col, a.slice) <
               std::tie(b.row, b.col, b.slice);
      });
    };
    sort_entries(form.Qmat);
    sort_entries(form.r_lin);
    sort_entries(form.R_eq);
    sort_entries(form.R_ineq);
    for (auto& qt : form.quad_terms) sort_entries(qt.S);
    return std::move(form);
  }
};

}  // namespace

AsaForm canonicalize(const DppProblem& p) { return Canonicalizer(p).run(); }

QpProblem AsaForm::instantiate(const Vec& theta) const {
  if (theta.size() != p)
    throw DimensionMismatch("theta dimension does not match problem");
  Vec theta_t(p + 1);
  theta_t << theta, 1.0;

  QpProblem qp;
  qp.P = Mat::Zero(n_c, n_c);
  qp.q = Vec::Zero(n_c);
  qp.r = 0.0;
  qp.A = Mat::Zero(m_eq, n_c);
  qp.b = Vec::Zero(m_eq);
  qp.G = Mat::Zero(m_ineq, n_c);
  qp.h = Vec::Zero(m_ineq);

  for (const auto& en : Qmat) qp.q[en.row] += en.val * theta_t[en.slice];
  for (const auto& en : r_lin) qp.r += en.val * theta_t[en.slice];
  for (const auto& en : R_eq) {
    if (en.col < n_c)
      qp.A(en.row, en.col) += en.val * theta_t[en.slice];
    else
      qp.b[en.row] += en.val * theta_t[en.slice];
  }
  for (const auto& en : R_ineq) {
    if (en.col < n_c)
      qp.G(en.row, en.col) += en.val * theta_t[en.slice];
    else
      qp.h[en.row] += en.val * theta_t[en.slice];
  }
  for (const auto& qt : quad_terms) {
    Mat M = Mat::Zero(qt.rows, n_c);
    Vec m0 = Vec::Zero(qt.rows);
    for (const auto& en : qt.S) {
      if (en.col < n_c)
        M(en.row, en.col) += en.val * theta_t[en.slice];
      else
        m0[en.row] += en.val * theta_t[en.slice];
    }
    qp.P += qt.coeff * M.transpose() * M;
    qp.q += qt.coeff * M.transpose() * m0;
    qp.r += 0.5 * qt.coeff * m0.squaredNorm();
  }
  return qp;
}

std::pair<Vec, SolveRecord> asa_forward(const AsaForm& f, const Vec& theta,
                                        const SolverConfig& cfg) {
  QpProblem qp = f.instantiate(theta);
  ValidatedProblem vp = validate_problem(qp);
  QpSolution sol = solve_qp(vp, cfg);
  Vec x(f.n_orig);
  for (Eigen::Index i = 0; i < f.n_orig; ++i)
    x[i] = sol.z_star[f.retriever[i]];
  return {x, SolveRecord{theta, std::move(vp), std::move(sol)}};
}

AsaGrad asa_backward(const AsaForm& f, const SolveRecord& rec,
                     const Vec& dl_dx, double kkt_reg) {
  if (dl_dx.size() != f.n_orig)
    throw DimensionMismatch("dl_dx dimension does not match variables");
  Vec seed = Vec::Zero(f.n_c);
  for (Eigen::Index i = 0; i < f.n_orig; ++i)
    seed[f.retriever[i]] += dl_dx[i];

  DiffTriple d =
      backward_solve(rec.problem, rec.solution, BackwardSeeds{seed}, kkt_reg);
  ParamGrads g = assemble_grads(rec.solution, d, rec.problem);

  Vec theta_t(f.p + 1);
  theta_t << rec.theta, 1.0;

  AsaGrad out;
  out.heuristic = d.heuristic;
  out.grad_theta = Vec::Zero(f.p);
  auto accum = [&](Eigen::Index slice, double v) {
    if (slice < f.p) out.grad_theta[slice] += v;
  };

  for (const auto& en : f.Qmat) accum(en.slice, en.val * g.gq[en.row]);
  for (const auto& en : f.R_eq)
    accum(en.slice, en.val * (en.col < f.n_c ? g.gA(en.row, en.col)
                                             : g.gb[en.row]));
  for (const auto& en : f.R_ineq)
    accum(en.slice, en.val * (en.col < f.n_c ? g.gG(en.row, en.col)
                                             : g.gh[en.row]));

  for (const auto& qt : f.quad_terms) {
    Mat M = Mat::Zero(qt.rows, f.n_c);
    Vec m0 = Vec::Zero(qt.rows);
    for (const auto& en : qt.S) {
      if (en.col < f.n_c)
        M(en.row, en.col) += en.val * theta_t[en.slice];
      else
        m0[en.row] += en.val * theta_t[en.slice];
    }
    // P path: d<gP, c M'M> -> 2c M gP;  q path: c (m0 gq' + (M gq) dm0).
    Mat gM = 2.0 * qt.coeff * M * g.gP + qt.coeff * m0 * g.gq.transpose();
    Vec gm0 = qt.coeff * M * g.gq;
    for (const auto& en : qt.S)
      accum(en.slice, en.val * (en.col < f.n_c ? gM(en.row, en.col)
                                               : gm0[en.row]));
  }
  return out;
}

std::string asa_to_json(const AsaForm& f) {
  nlohmann::ordered_json j;
  j["n_orig"] = f.n_orig;
  j["n_canonical"] = f.n_c;
  j["m_eq"] = f.m_eq;
  j["m_ineq"] = f.m_ineq;
  j["p"] = f.p;
  auto entries = [](const std::vector<SparseEntry>& v) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& en : v)
      arr.push_back({en.row, en.col, en.slice, en.val});
    return arr;
  };
  j["Qmat"] = entries(f.Qmat);
  j["r_lin"] = entries(f.r_lin);
  j["R_eq"] = entries(f.R_eq);
  j["R_ineq"] = entries(f.R_ineq);
  nlohmann::ordered_json quads = nlohmann::ordered_json::array();
  for (const auto& qt : f.quad_terms) {
    nlohmann::ordered_json q;
    q["coeff"] = qt.coeff;
    q["rows"] = qt.rows;
    q["S"] = entries(qt.S);
    quads.push_back(q);
  }
  j["quad_terms"] = quads;
  j["retriever"] = f.retriever;
  nlohmann::ordered_json vars = nlohmann::ordered_json::array();
  for (const auto& [name, dim] : f.variable_order)
    vars.push_back({name, dim});
  j["variables"] = vars;
  return j.dump(2);
}

}  // namespace optlayer
