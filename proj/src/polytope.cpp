#include "liftsim/polytope.hpp"

#include <algorithm>
#include <cmath>

#include "liftsim/conic.hpp"
#include "liftsim/errors.hpp"

namespace liftsim {

using Eigen::MatrixXd;
using Eigen::VectorXd;

HPolytope::HPolytope(MatrixXd H_, VectorXd h_) : H(std::move(H_)), h(std::move(h_)) {
  if (H.rows() != h.size()) throw InputError("HPolytope: H has " + std::to_string(H.rows()) +
                                             " rows but h has " + std::to_string(h.size()));
  if (H.rows() < 1) throw InputError("HPolytope: at least one halfspace required");
}

double HPolytope::violation(const VectorXd& w) const {
  if (w.size() != dim()) throw InputError("HPolytope: point dimension mismatch");
  return (H * w - h).maxCoeff();
}

HPolytope HPolytope::normalized() const {
  HPolytope r = *this;
  for (int i = 0; i < rows(); ++i) {
    const double nrm = H.row(i).norm();
    if (nrm > 0) {
      r.H.row(i) /= nrm;
      r.h[i] /= nrm;
    }
  }
  return r;
}

Box::Box(VectorXd lo, VectorXd up) : lower(std::move(lo)), upper(std::move(up)) {
  if (lower.size() != upper.size()) throw InputError("Box: bound dimensions differ");
}

bool Box::contains(const VectorXd& w, double tol) const {
  if (w.size() != dim()) throw InputError("Box: point dimension mismatch");
  return ((w - lower).array() >= -tol).all() && ((upper - w).array() >= -tol).all();
}

HPolytope Box::to_h() const {
  const int n = dim();
  MatrixXd H = MatrixXd::Zero(2 * n, n);
  VectorXd h(2 * n);
  for (int i = 0; i < n; ++i) {
    H(2 * i, i) = 1.0;
    h[2 * i] = upper[i];
    H(2 * i + 1, i) = -1.0;
    h[2 * i + 1] = -lower[i];
  }
  return HPolytope(H, h);
}

VPolytope::VPolytope(std::vector<VectorXd> v) : vertices(std::move(v)) {
  if (vertices.empty()) throw InputError("VPolytope: empty vertex list");
  for (const auto& p : vertices)
    if (p.size() != vertices[0].size()) throw InputError("VPolytope: vertex dimensions differ");
}

double VPolytope::support(const VectorXd& d) const {
  double best = -kInf;
  for (const auto& v : vertices) best = std::max(best, d.dot(v));
  return best;
}

VPolytope VPolytope::deduplicated(double tol) const {
  std::vector<VectorXd> out;
  for (const auto& v : vertices) {
    bool dup = false;
    for (const auto& u : out)
      if ((u - v).lpNorm<Eigen::Infinity>() <= tol) {
        dup = true;
        break;
      }
    if (!dup) out.push_back(v);
  }
  VPolytope r;
  r.vertices = std::move(out);
  return r;
}

VPolytope vertices(const Box& box) {
  if (!box.nonempty()) throw EmptyError("Box is empty");
  const int n = box.dim();
  if (n > 20) throw CapacityError("Box vertex count 2^" + std::to_string(n) + " too large");
  VPolytope r;
  for (long mask = 0; mask < (1L << n); ++mask) {
    VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = (mask >> i) & 1 ? box.upper[i] : box.lower[i];
    r.vertices.push_back(v);
  }
  if (n == 0) r.vertices.assign(1, VectorXd());
  return r;
}

namespace {

// max d'w over P; status optimal/unbounded/infeasible.
SolveResult maximize(const HPolytope& P, const VectorXd& d, std::vector<VarId>& w) {
  ConicProblem lp;
  w = lp.add_variables(P.dim());
  for (int i = 0; i < P.rows(); ++i) {
    AffineExpr e(P.h[i]);
    for (int j = 0; j < P.dim(); ++j) e.add_term(w[j], -P.H(i, j));
    lp.add_nonneg(e);
  }
  AffineExpr obj;
  for (int j = 0; j < P.dim(); ++j) obj.add_term(w[j], -d[j]);
  lp.set_objective(obj);
  return solve(lp);
}

}  // namespace

NonemptyBounded is_nonempty_bounded(const HPolytope& P) {
  NonemptyBounded r;
  const HPolytope Q = P.normalized();
  const int n = Q.dim();
  {
    ConicProblem lp;
    auto w = lp.add_variables(n);
    VarId t = lp.add_variable(-1.0, kInf);
    for (int i = 0; i < Q.rows(); ++i) {
      AffineExpr e(Q.h[i]);
      for (int j = 0; j < n; ++j) e.add_term(w[j], -Q.H(i, j));
      e.add_term(t, 1.0);
      lp.add_nonneg(e);
    }
    lp.set_objective(AffineExpr::var(t));
    SolveResult s = solve(lp);
    if (!s.optimal()) {
      r.nonempty = false;
      return r;
    }
    r.nonempty = s.value(t) <= 1e-9;
  }
  if (!r.nonempty) return r;
  r.bounded = true;
  for (int j = 0; j < n && r.bounded; ++j)
    for (double sgn : {1.0, -1.0}) {
      VectorXd d = VectorXd::Zero(n);
      d[j] = sgn;
      std::vector<VarId> w;
      SolveResult s = maximize(Q, d, w);
      if (s.status != SolveStatus::optimal) {
        r.bounded = false;
        break;
      }
    }
  return r;
}

Box bounding_box(const HPolytope& P) {
  const auto nb = is_nonempty_bounded(P);
  if (!nb.nonempty) throw EmptyError("polytope is empty");
  if (!nb.bounded) throw UnboundedError("polytope is unbounded");
  const int n = P.dim();
  VectorXd lo(n), up(n);
  for (int j = 0; j < n; ++j) {
    for (double sgn : {1.0, -1.0}) {
      VectorXd d = VectorXd::Zero(n);
      d[j] = sgn;
      std::vector<VarId> w;
      SolveResult s = maximize(P, d, w);
      if (!s.optimal()) throw UnboundedError("bounding box LP failed: " + s.diagnostics.message);
      if (sgn > 0) up[j] = s.value(w[j]);
      else lo[j] = s.value(w[j]);
    }
  }
  return Box(lo, up);
}

VectorXd chebyshev_center(const HPolytope& P) {
  const int n = P.dim();
  ConicProblem lp;
  auto w = lp.add_variables(n);
  VarId r = lp.add_variable(0.0, 1e6);
  for (int i = 0; i < P.rows(); ++i) {
    AffineExpr e(P.h[i]);
    for (int j = 0; j < n; ++j) e.add_term(w[j], -P.H(i, j));
    e.add_term(r, -P.H.row(i).norm());
    lp.add_nonneg(e);
  }
  lp.set_objective(-AffineExpr::var(r));
  SolveResult s = solve(lp);
  if (!s.optimal()) throw EmptyError("Chebyshev center LP: " + std::string(to_string(s.status)));
  VectorXd c(n);
  for (int j = 0; j < n; ++j) c[j] = s.value(w[j]);
  return c;
}

VPolytope vertices(const HPolytope& P, double tol) {
  const int n = P.dim();
  if (n > kMaxEnumerationDim)
    throw CapacityError("vertex enumeration limited to dimension " +
                        std::to_string(kMaxEnumerationDim) + ", got " + std::to_string(n));
  const auto nb = is_nonempty_bounded(P);
  if (!nb.nonempty) throw EmptyError("polytope is empty");
  if (!nb.bounded) throw UnboundedError("polytope is unbounded");
  const HPolytope Q = P.normalized();
  const int m = Q.rows();
  // Count subsets to guard against combinatorial blow-up.
  double count = 1.0;
  for (int k = 0; k < n; ++k) count = count * (m - k) / (k + 1);
  if (count > 5e6) throw CapacityError("too many facet subsets for vertex enumeration");

  VPolytope out;
  std::vector<int> idx(n);
  for (int k = 0; k < n; ++k) idx[k] = k;
  MatrixXd M(n, n);
  VectorXd rhs(n);
  while (true) {
    for (int k = 0; k < n; ++k) {
      M.row(k) = Q.H.row(idx[k]);
      rhs[k] = Q.h[idx[k]];
    }
    Eigen::FullPivLU<MatrixXd> lu(M);
    if (lu.rank() == n) {
      VectorXd v = lu.solve(rhs);
      if (Q.violation(v) <= tol) out.vertices.push_back(v);
    }
    int k = n - 1;
    while (k >= 0 && idx[k] == m - n + k) --k;
    if (k < 0) break;
    ++idx[k];
    for (int j = k + 1; j < n; ++j) idx[j] = idx[j - 1] + 1;
  }
  if (out.vertices.empty()) throw EmptyError("no vertices found");
  return out.deduplicated(std::max(tol, 1e-10));
}

HPolytope facets(const VPolytope& P, double tol) {
  if (P.vertices.empty()) throw EmptyError("facets: no points");
  const VPolytope Q = P.deduplicated(tol);
  const int d = Q.dim(), m = Q.size();
  VectorXd c = VectorXd::Zero(d);
  for (const auto& v : Q.vertices) c += v;
  c /= m;
  MatrixXd C(d, m);
  for (int i = 0; i < m; ++i) C.col(i) = Q.vertices[i] - c;
  double scale = 1.0;
  for (int i = 0; i < m; ++i) scale = std::max(scale, C.col(i).lpNorm<Eigen::Infinity>());
  Eigen::JacobiSVD<MatrixXd> svd(C, Eigen::ComputeFullU);
  int r = 0;
  for (int i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()[i] > tol * scale * std::sqrt(static_cast<double>(m))) ++r;
  const MatrixXd Ur = svd.matrixU().leftCols(r);
  std::vector<VectorXd> rows;
  std::vector<double> offs;
  auto add_row = [&](const VectorXd& a, double b) {
    for (size_t k = 0; k < rows.size(); ++k)
      if ((rows[k] - a).lpNorm<Eigen::Infinity>() <= 1e-9 && std::abs(offs[k] - b) <= 1e-9 * scale)
        return;
    rows.push_back(a);
    offs.push_back(b);
  };
  for (int k = r; k < d; ++k) {
    const VectorXd n = svd.matrixU().col(k);
    add_row(n, n.dot(c));
    add_row(-n, -n.dot(c));
  }
  if (r > 0) {
    // Hull coordinates y = Ur' (v - c).
    MatrixXd Y = Ur.transpose() * C;
    double count = 1.0;
    for (int k = 0; k < r; ++k) count = count * (m - k) / (k + 1);
    if (count > 5e6) throw CapacityError("too many point subsets for facet enumeration");
    std::vector<int> idx(r);
    for (int k = 0; k < r; ++k) idx[k] = k;
    while (true) {
      // Normal of the hyperplane through the chosen points.
      VectorXd n;
      if (r == 1) {
        n = VectorXd::Ones(1);
      } else {
        MatrixXd D(r - 1, r);
        for (int k = 1; k < r; ++k) D.row(k - 1) = (Y.col(idx[k]) - Y.col(idx[0])).transpose();
        Eigen::FullPivLU<MatrixXd> lu(D);
        if (lu.rank() == r - 1) n = lu.kernel().col(0).normalized();
      }
      if (n.size() == r) {
        const double b = n.dot(Y.col(idx[0]));
        const VectorXd vals = Y.transpose() * n;
        const double hi = vals.maxCoeff(), lo = vals.minCoeff();
        const double ttol = tol * scale;
        const VectorXd a = Ur * n;
        if (hi <= b + ttol) add_row(a, b + a.dot(c));
        if (lo >= b - ttol) add_row(-a, -b - a.dot(c));
      }
      int k = r - 1;
      while (k >= 0 && idx[k] == m - r + k) --k;
      if (k < 0) break;
      ++idx[k];
      for (int j = k + 1; j < r; ++j) idx[j] = idx[j - 1] + 1;
    }
  }
  MatrixXd H(rows.size(), d);
  VectorXd h(rows.size());
  for (size_t k = 0; k < rows.size(); ++k) {
    H.row(k) = rows[k].transpose();
    h[k] = offs[k];
  }
  return HPolytope(H, h);
}

VPolytope minkowski_sum(const VPolytope& P, const VPolytope& Q) {
  if (P.dim() != Q.dim()) throw InputError("minkowski_sum: dimension mismatch");
  VPolytope r;
  r.vertices.reserve(P.vertices.size() * Q.vertices.size());
  for (const auto& a : P.vertices)
    for (const auto& b : Q.vertices) r.vertices.push_back(a + b);
  return r;
}

VPolytope affine_image(const MatrixXd& M, const VPolytope& P) {
  return affine_image(M, P, VectorXd::Zero(M.rows()));
}

VPolytope affine_image(const MatrixXd& M, const VPolytope& P, const VectorXd& offset) {
  if (M.cols() != P.dim()) throw InputError("affine_image: matrix has " +
                                            std::to_string(M.cols()) + " columns, polytope dim " +
                                            std::to_string(P.dim()));
  if (offset.size() != M.rows()) throw InputError("affine_image: offset dimension mismatch");
  VPolytope r;
  for (const auto& v : P.vertices) r.vertices.push_back(M * v + offset);
  return r;
}

ContainmentResult contains(const VPolytope& P, const HPolytope& Q, double tol) {
  if (P.dim() != Q.dim()) throw InputError("contains: dimension mismatch");
  ContainmentResult r;
  r.max_violation = -kInf;
  for (const auto& v : P.vertices) r.max_violation = std::max(r.max_violation, Q.violation(v));
  r.contained = r.max_violation <= tol;
  return r;
}

ContainmentResult point_in_sum(const VectorXd& v, const std::vector<SumTerm>& terms, double tol) {
  const int n = static_cast<int>(v.size());
  ConicProblem lp;
  VarId t = lp.add_variable(-1.0, kInf);
  std::vector<AffineExpr> lhs(n);
  std::vector<std::vector<VarId>> vars(terms.size());
  std::vector<HPolytope> normalized(terms.size());
  bool has_h = false;
  for (size_t k = 0; k < terms.size(); ++k) {
    const auto& term = terms[k];
    if (term.M.rows() != n) throw InputError("point_in_sum: term row count mismatch");
    if (const auto* hp = std::get_if<HPolytope>(&term.set)) {
      if (hp->dim() != term.M.cols()) throw InputError("point_in_sum: H term dimension mismatch");
      has_h = true;
      normalized[k] = hp->normalized();
      const auto& Q = normalized[k];
      vars[k] = lp.add_variables(Q.dim());
      for (int i = 0; i < Q.rows(); ++i) {
        AffineExpr e(Q.h[i]);
        for (int j = 0; j < Q.dim(); ++j) e.add_term(vars[k][j], -Q.H(i, j));
        e.add_term(t, 1.0);
        lp.add_nonneg(e);
      }
      for (int r = 0; r < n; ++r)
        for (int j = 0; j < Q.dim(); ++j) lhs[r].add_term(vars[k][j], term.M(r, j));
    } else {
      const auto& V = std::get<VPolytope>(term.set);
      if (V.dim() != term.M.cols()) throw InputError("point_in_sum: V term dimension mismatch");
      vars[k] = lp.add_variables(V.size(), 0.0, kInf);
      AffineExpr sum(-1.0);
      for (int q = 0; q < V.size(); ++q) {
        sum.add_term(vars[k][q], 1.0);
        const VectorXd img = term.M * V.vertices[q];
        for (int r = 0; r < n; ++r) lhs[r].add_term(vars[k][q], img[r]);
      }
      lp.add_equality(sum);
    }
  }
  for (int r = 0; r < n; ++r) lp.add_equality(lhs[r] - AffineExpr(v[r]));
  if (has_h) lp.set_objective(AffineExpr::var(t));
  else lp.set_bounds(t, 0.0, 0.0);
  SolveResult s = solve(lp);
  ContainmentResult res;
  if (!s.optimal()) {
    res.contained = false;
    res.max_violation = kInf;
    return res;
  }
  // Re-evaluate the witness directly instead of trusting t.
  double viol = -kInf;
  VectorXd sum = VectorXd::Zero(n);
  for (size_t k = 0; k < terms.size(); ++k) {
    if (std::holds_alternative<HPolytope>(terms[k].set)) {
      const auto& Q = normalized[k];
      VectorXd w(Q.dim());
      for (int j = 0; j < Q.dim(); ++j) w[j] = s.value(vars[k][j]);
      viol = std::max(viol, Q.violation(w));
      sum += terms[k].M * w;
    } else {
      const auto& V = std::get<VPolytope>(terms[k].set);
      double total = 0.0;
      VectorXd w = VectorXd::Zero(V.dim());
      for (int q = 0; q < V.size(); ++q) {
        const double mu = s.value(vars[k][q]);
        viol = std::max(viol, -mu);
        total += mu;
        w += mu * V.vertices[q];
      }
      viol = std::max(viol, std::abs(total - 1.0));
      sum += terms[k].M * w;
    }
  }
  viol = std::max(viol, (sum - v).lpNorm<Eigen::Infinity>());
  res.max_violation = viol;
  res.contained = viol <= tol;
  return res;
}

ContainmentResult contains_in_sum(const VPolytope& P, const std::vector<SumTerm>& terms,
                                  double tol) {
  ContainmentResult r;
  r.contained = true;
  r.max_violation = -kInf;
  for (const auto& v : P.deduplicated().vertices) {
    ContainmentResult c = point_in_sum(v, terms, tol);
    r.max_violation = std::max(r.max_violation, c.max_violation);
    if (!c.contained) r.contained = false;
  }
  return r;
}

}  // namespace liftsim
