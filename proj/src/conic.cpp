#include "liftsim/conic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "liftsim/errors.hpp"

namespace liftsim {

VarId PsdBlock::at(int i, int j) const {
  if (i < j) std::swap(i, j);
  if (j < 0 || i >= dim) throw InputError("PSD block index out of range");
  return lower[j * dim - j * (j - 1) / 2 + (i - j)];
}

VarId ConicProblem::add_variable(double lb, double ub, std::string name) {
  if (lb > ub) throw InputError("variable lower bound exceeds upper bound");
  lb_.push_back(lb);
  ub_.push_back(ub);
  if (name.empty()) name = "v" + std::to_string(lb_.size() - 1);
  names_.push_back(std::move(name));
  return static_cast<VarId>(lb_.size() - 1);
}

std::vector<VarId> ConicProblem::add_variables(int n, double lb, double ub) {
  std::vector<VarId> ids;
  ids.reserve(n);
  for (int i = 0; i < n; ++i) ids.push_back(add_variable(lb, ub));
  return ids;
}

PsdBlock ConicProblem::add_psd_block(int dim) {
  if (dim <= 0) throw InputError("PSD block dimension must be positive");
  PsdBlock b;
  b.dim = dim;
  for (int j = 0; j < dim; ++j)
    for (int i = j; i < dim; ++i) b.lower.push_back(add_variable());
  blocks_.push_back(b);
  return b;
}

void ConicProblem::check_expr(const AffineExpr& e) const {
  for (const auto& kv : e.coeffs())
    if (kv.first < 0 || kv.first >= num_variables())
      throw InputError("expression references undeclared variable " + std::to_string(kv.first));
  if (!std::isfinite(e.constant())) throw InputError("non-finite constant");
  for (const auto& kv : e.coeffs())
    if (!std::isfinite(kv.second)) throw InputError("non-finite coefficient");
}

void ConicProblem::add_equality(const AffineExpr& e) {
  check_expr(e);
  eqs_.push_back(e);
}

void ConicProblem::add_nonneg(const AffineExpr& e) {
  check_expr(e);
  nonnegs_.push_back(e);
}

void ConicProblem::set_bounds(VarId v, double lb, double ub) {
  if (v < 0 || v >= num_variables()) throw InputError("unknown variable");
  if (lb > ub) throw InputError("variable lower bound exceeds upper bound");
  lb_[v] = lb;
  ub_[v] = ub;
}

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    case SolveStatus::inconclusive: return "inconclusive";
  }
  return "?";
}

bool recheck(const ConicProblem& problem, const std::vector<double>& values,
             double tol, SolveDiagnostics& diag) {
  diag.recheck_equality = 0.0;
  diag.recheck_nonneg = 0.0;
  diag.recheck_psd = 0.0;
  if (static_cast<int>(values.size()) != problem.num_variables()) return false;
  for (double v : values)
    if (!std::isfinite(v)) {
      diag.recheck_equality = kInf;
      return false;
    }
  for (const auto& e : problem.equalities()) {
    double scale = 1.0;
    for (const auto& kv : e.coeffs()) scale = std::max(scale, std::abs(kv.second));
    diag.recheck_equality = std::max(diag.recheck_equality, std::abs(e.eval(values)) / scale);
  }
  for (const auto& e : problem.nonnegs())
    diag.recheck_nonneg = std::max(diag.recheck_nonneg, -e.eval(values));
  for (int v = 0; v < problem.num_variables(); ++v) {
    diag.recheck_nonneg = std::max(diag.recheck_nonneg, problem.lower_bounds()[v] - values[v]);
    diag.recheck_nonneg = std::max(diag.recheck_nonneg, values[v] - problem.upper_bounds()[v]);
  }
  for (const auto& b : problem.psd_blocks()) {
    Eigen::MatrixXd M(b.dim, b.dim);
    for (int i = 0; i < b.dim; ++i)
      for (int j = 0; j <= i; ++j) M(i, j) = M(j, i) = values[b.at(i, j)];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
    diag.recheck_psd = std::max(diag.recheck_psd, -es.eigenvalues()(0));
  }
  return diag.recheck_equality <= tol && diag.recheck_nonneg <= tol && diag.recheck_psd <= tol;
}

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Triplet = Eigen::Triplet<double>;

const double kSqrt2 = std::sqrt(2.0);

int svec_len(int d) { return d * (d + 1) / 2; }

Mat smat(const double* v, int d) {
  Mat M(d, d);
  int k = 0;
  for (int j = 0; j < d; ++j)
    for (int i = j; i < d; ++i, ++k) {
      const double val = i == j ? v[k] : v[k] / kSqrt2;
      M(i, j) = M(j, i) = val;
    }
  return M;
}

void svec(const Mat& M, double* v) {
  const int d = static_cast<int>(M.rows());
  int k = 0;
  for (int j = 0; j < d; ++j)
    for (int i = j; i < d; ++i, ++k)
      v[k] = i == j ? M(i, j) : 0.5 * (M(i, j) + M(j, i)) * kSqrt2;
}

/// Nonnegative orthant of size nl followed by PSD blocks in svec form.
struct Cone {
  int nl = 0;
  std::vector<int> dims, offsets;
  int m = 0;
  int degree = 0;

  void finalize() {
    m = nl;
    degree = nl;
    offsets.clear();
    for (int d : dims) {
      offsets.push_back(m);
      m += svec_len(d);
      degree += d;
    }
  }

  Vec identity() const {
    Vec e = Vec::Zero(m);
    e.head(nl).setOnes();
    for (size_t b = 0; b < dims.size(); ++b) {
      int k = offsets[b];
      for (int j = 0; j < dims[b]; ++j) {
        e[k] = 1.0;
        k += dims[b] - j;
      }
    }
    return e;
  }

  double min_eig(const Vec& v) const {
    double r = kInf;
    for (int i = 0; i < nl; ++i) r = std::min(r, v[i]);
    for (size_t b = 0; b < dims.size(); ++b) {
      Mat M = smat(v.data() + offsets[b], dims[b]);
      Eigen::SelfAdjointEigenSolver<Mat> es(M, Eigen::EigenvaluesOnly);
      r = std::min(r, es.eigenvalues()(0));
    }
    return r;
  }

  Vec jordan(const Vec& a, const Vec& b) const {
    Vec r(m);
    r.head(nl) = a.head(nl).cwiseProduct(b.head(nl));
    for (size_t k = 0; k < dims.size(); ++k) {
      const int d = dims[k], o = offsets[k];
      Mat A = smat(a.data() + o, d), B = smat(b.data() + o, d);
      Mat P = 0.5 * (A * B + B * A);
      svec(P, r.data() + o);
    }
    return r;
  }
};

/// Nesterov-Todd scaling at a strictly interior (s, z).
struct Scaling {
  Vec lp_w, lp_lambda;
  std::vector<Mat> R, Rinv;
  std::vector<Vec> lambda;

  bool compute(const Cone& K, const Vec& s, const Vec& z) {
    lp_w.resize(K.nl);
    lp_lambda.resize(K.nl);
    for (int i = 0; i < K.nl; ++i) {
      if (!(s[i] > 0 && z[i] > 0)) return false;
      lp_w[i] = std::sqrt(s[i] / z[i]);
      lp_lambda[i] = std::sqrt(s[i] * z[i]);
    }
    R.resize(K.dims.size());
    Rinv.resize(K.dims.size());
    lambda.resize(K.dims.size());
    for (size_t b = 0; b < K.dims.size(); ++b) {
      const int d = K.dims[b], o = K.offsets[b];
      Eigen::LLT<Mat> cs(smat(s.data() + o, d)), cz(smat(z.data() + o, d));
      if (cs.info() != Eigen::Success || cz.info() != Eigen::Success) return false;
      Mat Ls = cs.matrixL(), Lz = cz.matrixL();
      Eigen::JacobiSVD<Mat> svd(Lz.transpose() * Ls, Eigen::ComputeFullU | Eigen::ComputeFullV);
      Vec lam = svd.singularValues();
      if (!(lam.minCoeff() > 0)) return false;
      Vec isq = lam.cwiseSqrt().cwiseInverse();
      R[b] = Ls * svd.matrixV() * isq.asDiagonal();
      Rinv[b] = isq.asDiagonal() * svd.matrixU().transpose() * Lz.transpose();
      lambda[b] = lam;
    }
    return true;
  }

  // W z
  Vec W(const Cone& K, const Vec& v) const {
    Vec r(K.m);
    r.head(K.nl) = lp_w.cwiseProduct(v.head(K.nl));
    for (size_t b = 0; b < K.dims.size(); ++b) {
      const int d = K.dims[b], o = K.offsets[b];
      svec(R[b].transpose() * smat(v.data() + o, d) * R[b], r.data() + o);
    }
    return r;
  }
  // W^{-T} s
  Vec WinvT(const Cone& K, const Vec& v) const {
    Vec r(K.m);
    r.head(K.nl) = v.head(K.nl).cwiseQuotient(lp_w);
    for (size_t b = 0; b < K.dims.size(); ++b) {
      const int d = K.dims[b], o = K.offsets[b];
      svec(Rinv[b] * smat(v.data() + o, d) * Rinv[b].transpose(), r.data() + o);
    }
    return r;
  }
  // W^T u
  Vec WT(const Cone& K, const Vec& v) const {
    Vec r(K.m);
    r.head(K.nl) = lp_w.cwiseProduct(v.head(K.nl));
    for (size_t b = 0; b < K.dims.size(); ++b) {
      const int d = K.dims[b], o = K.offsets[b];
      svec(R[b] * smat(v.data() + o, d) * R[b].transpose(), r.data() + o);
    }
    return r;
  }
  Vec WtW(const Cone& K, const Vec& v) const { return WT(K, W(K, v)); }

  Vec lambda_vec(const Cone& K) const {
    Vec r = Vec::Zero(K.m);
    r.head(K.nl) = lp_lambda;
    for (size_t b = 0; b < K.dims.size(); ++b)
      svec(Mat(lambda[b].asDiagonal()), r.data() + K.offsets[b]);
    return r;
  }

  // Solve lambda o u = d for u.
  Vec lambda_div(const Cone& K, const Vec& dv) const {
    Vec r(K.m);
    r.head(K.nl) = dv.head(K.nl).cwiseQuotient(lp_lambda);
    for (size_t b = 0; b < K.dims.size(); ++b) {
      const int d = K.dims[b], o = K.offsets[b];
      Mat D = smat(dv.data() + o, d);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) D(i, j) *= 2.0 / (lambda[b][i] + lambda[b][j]);
      svec(D, r.data() + o);
    }
    return r;
  }

  // Largest alpha with lambda + alpha*u in the cone (capped at `cap`).
  double max_step(const Cone& K, const Vec& u, double cap) const {
    double a = cap;
    for (int i = 0; i < K.nl; ++i)
      if (u[i] < 0) a = std::min(a, -lp_lambda[i] / u[i]);
    for (size_t b = 0; b < K.dims.size(); ++b) {
      const int d = K.dims[b], o = K.offsets[b];
      Vec isq = lambda[b].cwiseSqrt().cwiseInverse();
      Mat U = isq.asDiagonal() * smat(u.data() + o, d) * isq.asDiagonal();
      Eigen::SelfAdjointEigenSolver<Mat> es(U, Eigen::EigenvaluesOnly);
      const double mn = es.eigenvalues()(0);
      if (mn < 0) a = std::min(a, -1.0 / mn);
    }
    return a;
  }

  void wtw_triplets(const Cone& K, int row0, double delta, std::vector<Triplet>& out) const {
    for (int i = 0; i < K.nl; ++i)
      out.emplace_back(row0 + i, row0 + i, -lp_w[i] * lp_w[i] - delta);
    for (size_t b = 0; b < K.dims.size(); ++b) {
      const int d = K.dims[b], o = K.offsets[b], len = svec_len(d);
      Mat P = R[b] * R[b].transpose();
      Vec e = Vec::Zero(len), col(len);
      for (int l = 0; l < len; ++l) {
        e.setZero();
        e[l] = 1.0;
        svec(P * smat(e.data(), d) * P, col.data());
        for (int k = l; k < len; ++k)
          out.emplace_back(row0 + o + k, row0 + o + l, -col[k] - (k == l ? delta : 0.0));
      }
    }
  }
};

/// Sparse LDL' for quasi-definite matrices with a known pivot sign pattern.
/// Pivots with the wrong sign or tiny magnitude are replaced by
/// sign * dyn_reg, so the factorization never breaks down; iterative
/// refinement against the exact matrix recovers the accuracy.
class QuasiDefiniteLdl {
 public:
  void analyze(const SpMat& lower, const std::vector<int>& signs) {
    n_ = static_cast<int>(lower.rows());
    SpMat full = lower.selfadjointView<Eigen::Lower>();
    Eigen::AMDOrdering<int> amd;
    Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> pinv;
    amd(full, pinv);
    P_ = pinv.inverse();
    Pinv_ = pinv;
    signs_.assign(n_, 1);
    for (int i = 0; i < n_; ++i) signs_[P_.indices()[i]] = signs[i];
    permute(lower);
    // Elimination tree and column counts.
    etree_.assign(n_, -1);
    lnz_.assign(n_, 0);
    std::vector<int> work(n_, -1);
    for (int j = 0; j < n_; ++j) {
      work[j] = j;
      for (SpMat::InnerIterator it(ap_, j); it; ++it) {
        int i = static_cast<int>(it.row());
        while (work[i] != j) {
          if (etree_[i] == -1) etree_[i] = j;
          lnz_[i]++;
          work[i] = j;
          i = etree_[i];
        }
      }
    }
    lp_.assign(n_ + 1, 0);
    for (int i = 0; i < n_; ++i) lp_[i + 1] = lp_[i] + lnz_[i];
    li_.assign(lp_[n_], 0);
    lx_.assign(lp_[n_], 0.0);
    d_.assign(n_, 0.0);
    dinv_.assign(n_, 0.0);
  }

  bool factor(const SpMat& lower, double dyn_eps, double dyn_reg) {
    permute(lower);
    std::vector<char> marked(n_, 0);
    std::vector<double> y(n_, 0.0);
    std::vector<int> yidx(n_), elim(n_), next(n_);
    for (int i = 0; i < n_; ++i) next[i] = lp_[i];
    bumped_ = 0;
    for (int k = 0; k < n_; ++k) {
      int nnz_y = 0;
      d_[k] = 0.0;
      for (SpMat::InnerIterator it(ap_, k); it; ++it) {
        const int b = static_cast<int>(it.row());
        if (b == k) {
          d_[k] = it.value();
          continue;
        }
        y[b] = it.value();
        if (!marked[b]) {
          marked[b] = 1;
          elim[0] = b;
          int ne = 1;
          int nx = etree_[b];
          while (nx != -1 && nx < k) {
            if (marked[nx]) break;
            marked[nx] = 1;
            elim[ne++] = nx;
            nx = etree_[nx];
          }
          while (ne) yidx[nnz_y++] = elim[--ne];
        }
      }
      for (int i = nnz_y - 1; i >= 0; --i) {
        const int c = yidx[i];
        const int t = next[c];
        const double yc = y[c];
        for (int j = lp_[c]; j < t; ++j) y[li_[j]] -= lx_[j] * yc;
        li_[t] = k;
        lx_[t] = yc * dinv_[c];
        d_[k] -= yc * lx_[t];
        next[c]++;
        y[c] = 0.0;
        marked[c] = 0;
      }
      if (!std::isfinite(d_[k])) return false;
      if (signs_[k] * d_[k] <= dyn_eps) {
        d_[k] = signs_[k] * dyn_reg;
        ++bumped_;
      }
      dinv_[k] = 1.0 / d_[k];
    }
    return true;
  }

  Vec solve(const Vec& b) const {
    Vec x = P_ * b;
    for (int i = 0; i < n_; ++i)
      for (int j = lp_[i]; j < lp_[i + 1]; ++j) x[li_[j]] -= lx_[j] * x[i];
    for (int i = 0; i < n_; ++i) x[i] *= dinv_[i];
    for (int i = n_ - 1; i >= 0; --i)
      for (int j = lp_[i]; j < lp_[i + 1]; ++j) x[i] -= lx_[j] * x[li_[j]];
    return Pinv_ * x;
  }

  int bumped() const { return bumped_; }

 private:
  void permute(const SpMat& lower) {
    ap_.resize(n_, n_);
    ap_.selfadjointView<Eigen::Upper>() = lower.selfadjointView<Eigen::Lower>().twistedBy(P_);
  }

  int n_ = 0;
  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> P_, Pinv_;
  std::vector<int> signs_, etree_, lnz_, lp_, li_;
  std::vector<double> lx_, d_, dinv_;
  SpMat ap_;
  int bumped_ = 0;
};

/// Homogeneous self-dual embedding of
///   min c'x  s.t.  Gx + s = h, Ax = b, s in K
/// solved by a Mehrotra predictor-corrector path-following method.
class HsdSolver {
 public:
  HsdSolver(const SpMat& A, const Vec& b, const SpMat& G, const Vec& h, const Vec& c,
            const Cone& K, const SolverOptions& opt)
      : A_(A), G_(G), b_(b), h_(h), c_(c), K_(K), opt_(opt),
        n_(static_cast<int>(c.size())), p_(static_cast<int>(b.size())), m_(K.m) {
    At_ = A_.transpose();
    Gt_ = G_.transpose();
  }

  SolveStatus run(Vec& x, Vec& y, Vec& z, Vec& s, double& tau, SolveDiagnostics& diag);

 private:
  bool factor(const Scaling* sc);
  Vec kkt_multiply(const Scaling* sc, const Vec& u) const;
  Vec kkt_solve(const Scaling* sc, const Vec& rhs) const;

  const SpMat &A_, &G_;
  SpMat At_, Gt_;
  const Vec &b_, &h_, &c_;
  const Cone& K_;
  const SolverOptions& opt_;
  int n_, p_, m_;
  double delta_ = 1e-8;
  // Near convergence the scaled KKT matrix can be too ill-conditioned for
  // the static regularization; each call multiplies it by 10, up to 1e-5.
  bool raise_regularization() {
    if (delta_ >= 1e-5) return false;
    delta_ *= 10.0;
    return true;
  }
  int analyzed_mode_ = -1;
  QuasiDefiniteLdl ldlt_;
};

bool HsdSolver::factor(const Scaling* sc) {
  std::vector<Triplet> t;
  t.reserve(A_.nonZeros() + G_.nonZeros() + n_ + p_ + m_ * 4);
  for (int i = 0; i < n_; ++i) t.emplace_back(i, i, delta_);
  for (int i = 0; i < p_; ++i) t.emplace_back(n_ + i, n_ + i, -delta_);
  for (int j = 0; j < A_.outerSize(); ++j)
    for (SpMat::InnerIterator it(A_, j); it; ++it) t.emplace_back(n_ + it.row(), j, it.value());
  for (int j = 0; j < G_.outerSize(); ++j)
    for (SpMat::InnerIterator it(G_, j); it; ++it)
      t.emplace_back(n_ + p_ + it.row(), j, it.value());
  if (sc) {
    sc->wtw_triplets(K_, n_ + p_, delta_, t);
  } else {
    for (int i = 0; i < m_; ++i) t.emplace_back(n_ + p_ + i, n_ + p_ + i, -1.0 - delta_);
  }
  const int N = n_ + p_ + m_;
  SpMat Kmat(N, N);
  Kmat.setFromTriplets(t.begin(), t.end());
  // The identity scaling has a sparser pattern than the NT scaling.
  const int mode = sc ? 1 : 0;
  if (analyzed_mode_ != mode) {
    std::vector<int> signs(N, -1);
    std::fill(signs.begin(), signs.begin() + n_, 1);
    ldlt_.analyze(Kmat, signs);
    analyzed_mode_ = mode;
  }
  return ldlt_.factor(Kmat, 1e-13, 1e-7);
}

Vec HsdSolver::kkt_multiply(const Scaling* sc, const Vec& u) const {
  Vec r(n_ + p_ + m_);
  const auto ux = u.head(n_);
  const auto uy = u.segment(n_, p_);
  const Vec uz = u.tail(m_);
  r.head(n_) = At_ * uy + Gt_ * uz;
  r.segment(n_, p_) = A_ * ux;
  r.tail(m_) = G_ * ux - (sc ? sc->WtW(K_, uz) : uz);
  return r;
}

Vec HsdSolver::kkt_solve(const Scaling* sc, const Vec& rhs) const {
  // Refinement keeps the iterate with the smallest residual, so a diverging
  // correction never replaces a usable solution.
  Vec u = ldlt_.solve(rhs);
  const double rn = std::max(1.0, rhs.lpNorm<Eigen::Infinity>());
  Vec res = rhs - kkt_multiply(sc, u);
  double err = res.allFinite() ? res.lpNorm<Eigen::Infinity>() : kInf;
  for (int k = 0; k < 8 && err > 1e-14 * rn; ++k) {
    Vec cand = u + ldlt_.solve(res);
    Vec cres = rhs - kkt_multiply(sc, cand);
    const double cerr = cres.allFinite() ? cres.lpNorm<Eigen::Infinity>() : kInf;
    if (!(cerr < err)) break;
    u = std::move(cand);
    res = std::move(cres);
    err = cerr;
  }
  return u;
}

SolveStatus HsdSolver::run(Vec& x, Vec& y, Vec& z, Vec& s, double& tau, SolveDiagnostics& diag) {
  const double resx0 = std::max(1.0, c_.norm());
  const double resy0 = std::max(1.0, b_.norm());
  const double resz0 = std::max(1.0, h_.norm());
  const Vec e = K_.identity();

  // Starting point: least-norm primal and dual points shifted into the cone.
  if (!factor(nullptr)) {
    diag.message = "initial KKT factorization failed";
    return SolveStatus::inconclusive;
  }
  Vec rhs(n_ + p_ + m_);
  rhs << Vec::Zero(n_), b_, h_;
  Vec u = kkt_solve(nullptr, rhs);
  x = u.head(n_);
  s = -u.tail(m_);
  rhs << -c_, Vec::Zero(p_), Vec::Zero(m_);
  u = kkt_solve(nullptr, rhs);
  y = u.segment(n_, p_);
  z = u.tail(m_);
  if (m_ > 0) {
    const double ap = -K_.min_eig(s);
    if (ap >= -1e-8) s += (1.0 + std::max(ap, 0.0)) * e;
    const double ad = -K_.min_eig(z);
    if (ad >= -1e-8) z += (1.0 + std::max(ad, 0.0)) * e;
  }
  tau = 1.0;
  double kappa = 1.0;

  // Best iterate meeting the reduced tolerances, returned if the method
  // stalls afterwards.
  double best_pres = kInf, best_dres = kInf, best_rgap = kInf, best_merit = kInf;
  Vec best_x, best_y, best_z, best_s;
  double best_tau = 0.0;
  SolveStatus stall_status = SolveStatus::inconclusive;
  for (int it = 0; it <= opt_.max_iters; ++it) {
    diag.iterations = it;
    // Residuals of the embedding.
    const Vec hrx = -(At_ * y) - Gt_ * z;
    const Vec hry = A_ * x;
    const Vec hrz = s + G_ * x;
    const Vec rx = -hrx + c_ * tau;   // A'y + G'z + c tau
    const Vec ry = -hry + b_ * tau;   // -Ax + b tau
    const Vec rz = hrz - h_ * tau;    // s + Gx - h tau
    const double cx = c_.dot(x), by = b_.dot(y), hz = h_.dot(z);
    const double rt = kappa + cx + by + hz;
    const double gap = s.dot(z);
    const double mu = (gap + tau * kappa) / (K_.degree + 1);

    const double pcost = cx / tau, dcost = -(by + hz) / tau;
    const double pres = std::max(ry.norm() / resy0, rz.norm() / resz0) / tau;
    const double dres = rx.norm() / resx0 / tau;
    const double abs_gap = gap / (tau * tau);
    double rgap = kInf;
    if (pcost < 0) rgap = abs_gap / -pcost;
    else if (dcost > 0) rgap = abs_gap / dcost;
    rgap = std::min(rgap, std::abs(pcost - dcost) / std::max(1.0, std::abs(pcost)) +
                              abs_gap / std::max(1.0, std::abs(pcost)));
    double pinf = kInf, dinf = kInf;
    if (hz + by < 0) pinf = hrx.norm() / resx0 / -(hz + by);
    if (cx < 0) dinf = std::max(hry.norm() / resy0, hrz.norm() / resz0) / -cx;
    diag.primal_residual = pres;
    diag.dual_residual = dres;
    diag.gap = abs_gap;
    if (opt_.verbose)
      std::fprintf(stderr, "%3d pcost %+.6e dcost %+.6e gap %.2e pres %.2e dres %.2e k/t %.2e\n",
                   it, pcost, dcost, abs_gap, pres, dres, kappa / tau);

    if (pres <= opt_.feastol && dres <= opt_.feastol &&
        (abs_gap <= opt_.abstol || rgap <= opt_.reltol)) {
      diag.message = "converged";
      return SolveStatus::optimal;
    }
    if (pinf <= opt_.feastol) {
      diag.message = "primal infeasibility certificate";
      return SolveStatus::infeasible;
    }
    if (dinf <= opt_.feastol) {
      diag.message = "dual infeasibility certificate";
      return SolveStatus::unbounded;
    }
    // Remember whether reduced accuracy was reached, for stall handling.
    if (pres <= opt_.stall_feastol && dres <= opt_.stall_feastol &&
        (rgap <= opt_.stall_reltol || abs_gap <= opt_.stall_feastol)) {
      const double merit = std::max({pres, dres, std::min(rgap, abs_gap)});
      if (merit < best_merit) {
        best_merit = merit;
        best_pres = pres;
        best_dres = dres;
        best_rgap = rgap;
        best_x = x;
        best_y = y;
        best_z = z;
        best_s = s;
        best_tau = tau;
      }
      stall_status = SolveStatus::optimal;
    } else if (best_merit < kInf) {
      stall_status = SolveStatus::optimal;
    } else if (pinf <= opt_.stall_feastol) {
      stall_status = SolveStatus::infeasible;
    } else if (dinf <= opt_.stall_feastol) {
      stall_status = SolveStatus::unbounded;
    } else {
      stall_status = SolveStatus::inconclusive;
    }
    if (it == opt_.max_iters) break;

    Scaling sc;
    if (!sc.compute(K_, s, z)) {
      diag.message = "scaling failed";
      break;
    }
    if (!factor(&sc) && !(raise_regularization() && factor(&sc))) {
      diag.message = "factorization failed";
      break;
    }
    const Vec lam = sc.lambda_vec(K_);
    rhs << -c_, b_, h_;
    const Vec u1 = kkt_solve(&sc, rhs);
    const double denom1 = -kappa / tau + c_.dot(u1.head(n_)) + b_.dot(u1.segment(n_, p_)) +
                          h_.dot(u1.tail(m_));

    // Direction for complementarity target ds_rhs, tau-kappa target dk, and
    // linear residual reduction eta.
    auto direction = [&](const Vec& ds_rhs, double dk, double eta, Vec& dx, Vec& dy, Vec& dz,
                         Vec& ds, double& dtau, double& dkap) {
      const Vec lds = sc.lambda_div(K_, ds_rhs);
      const Vec wl = sc.WT(K_, lds);
      rhs << -eta * rx, eta * ry, -eta * rz - wl;
      const Vec u2 = kkt_solve(&sc, rhs);
      dtau = (-eta * rt - dk / tau - c_.dot(u2.head(n_)) - b_.dot(u2.segment(n_, p_)) -
              h_.dot(u2.tail(m_))) / denom1;
      dx = u2.head(n_) + dtau * u1.head(n_);
      dy = u2.segment(n_, p_) + dtau * u1.segment(n_, p_);
      dz = u2.tail(m_) + dtau * u1.tail(m_);
      ds = wl - sc.WtW(K_, dz);
      dkap = (dk - kappa * dtau) / tau;
    };
    auto step_length = [&](const Vec& ds, const Vec& dz, double dtau, double dkap) {
      double a = 1e30;
      if (m_ > 0) {
        a = std::min(a, sc.max_step(K_, sc.WinvT(K_, ds), a));
        a = std::min(a, sc.max_step(K_, sc.W(K_, dz), a));
      }
      if (dtau < 0) a = std::min(a, -tau / dtau);
      if (dkap < 0) a = std::min(a, -kappa / dkap);
      return a;
    };

    Vec dx, dy, dz, ds;
    double dtau, dkap;
    const Vec lam2 = K_.jordan(lam, lam);
    direction(-lam2, -tau * kappa, 1.0, dx, dy, dz, ds, dtau, dkap);
    if (!dx.allFinite() || !std::isfinite(dtau)) {
      if (raise_regularization()) continue;
      diag.message = "non-finite predictor direction";
      break;
    }
    const double aa = std::min(1.0, step_length(ds, dz, dtau, dkap));
    const double sigma = std::clamp(std::pow(1.0 - aa, 3), 0.0, 1.0);

    const Vec corr = K_.jordan(sc.WinvT(K_, ds), sc.W(K_, dz));
    const Vec ds_rhs = -lam2 - corr + sigma * mu * e;
    const double dk = -tau * kappa - dtau * dkap + sigma * mu;
    direction(ds_rhs, dk, 1.0 - sigma, dx, dy, dz, ds, dtau, dkap);
    if (!dx.allFinite() || !std::isfinite(dtau)) {
      if (raise_regularization()) continue;
      diag.message = "non-finite corrector direction";
      break;
    }
    const double amax = step_length(ds, dz, dtau, dkap);
    const double alpha = std::min(1.0, 0.99 * amax);
    if (alpha < 1e-10) {
      diag.message = "step length too small";
      break;
    }
    x += alpha * dx;
    y += alpha * dy;
    z += alpha * dz;
    s += alpha * ds;
    tau += alpha * dtau;
    kappa += alpha * dkap;
  }
  if (diag.message.empty()) diag.message = "iteration limit";
  if (stall_status == SolveStatus::optimal) {
    x = best_x;
    y = best_y;
    z = best_z;
    s = best_s;
    tau = best_tau;
    diag.primal_residual = best_pres;
    diag.dual_residual = best_dres;
    diag.message += " (reduced accuracy, rgap " + std::to_string(best_rgap) + ")";
  }
  return stall_status;
}

}  // namespace

SolveResult solve(const ConicProblem& problem, const SolverOptions& options) {
  SolveResult result;
  const int n = problem.num_variables();

  // Assemble standard form. Equality rows and cone rows with no coefficients
  // are decided here and dropped.
  std::vector<Triplet> at, gt;
  std::vector<double> bv, hv;
  int p = 0;
  for (const auto& e : problem.equalities()) {
    if (e.is_constant()) {
      if (std::abs(e.constant()) > options.recheck_tol) {
        result.status = SolveStatus::infeasible;
        result.diagnostics.message = "constant equality violated";
        return result;
      }
      continue;
    }
    for (const auto& [v, c] : e.coeffs()) at.emplace_back(p, v, c);
    bv.push_back(-e.constant());
    ++p;
  }
  int nl = 0;
  auto add_lp_row = [&](const AffineExpr& e) -> bool {
    if (e.is_constant()) return e.constant() >= -options.recheck_tol;
    for (const auto& [v, c] : e.coeffs()) gt.emplace_back(nl, v, -c);
    hv.push_back(e.constant());
    ++nl;
    return true;
  };
  bool ok = true;
  for (const auto& e : problem.nonnegs()) ok = add_lp_row(e) && ok;
  for (int v = 0; v < n; ++v) {
    const double lb = problem.lower_bounds()[v], ub = problem.upper_bounds()[v];
    if (std::isfinite(lb)) ok = add_lp_row(AffineExpr::var(v) - AffineExpr(lb)) && ok;
    if (std::isfinite(ub)) ok = add_lp_row(AffineExpr(ub) - AffineExpr::var(v)) && ok;
  }
  if (!ok) {
    result.status = SolveStatus::infeasible;
    result.diagnostics.message = "constant inequality violated";
    return result;
  }
  Cone K;
  K.nl = nl;
  int row = nl;
  for (const auto& b : problem.psd_blocks()) {
    K.dims.push_back(b.dim);
    for (int j = 0; j < b.dim; ++j)
      for (int i = j; i < b.dim; ++i, ++row) {
        gt.emplace_back(row, b.at(i, j), i == j ? -1.0 : -kSqrt2);
        hv.push_back(0.0);
      }
  }
  K.finalize();
  const int m = K.m;

  SpMat A(p, n), G(m, n);
  A.setFromTriplets(at.begin(), at.end());
  G.setFromTriplets(gt.begin(), gt.end());
  Vec b = Eigen::Map<Vec>(bv.data(), p);
  Vec h = Eigen::Map<Vec>(hv.data(), m);
  Vec c = Vec::Zero(n);
  for (const auto& [v, cv] : problem.objective().coeffs()) c[v] = cv;

  // Ruiz equilibration; PSD blocks get one factor each to keep the cone.
  Vec D = Vec::Ones(n), EA = Vec::Ones(p), EG = Vec::Ones(m);
  if (options.equilibrate) {
    for (int pass = 0; pass < 12; ++pass) {
      Vec cn = Vec::Zero(n), ra = Vec::Zero(p), rg = Vec::Zero(m);
      for (int j = 0; j < n; ++j) {
        for (SpMat::InnerIterator it(A, j); it; ++it) {
          cn[j] = std::max(cn[j], std::abs(it.value()));
          ra[it.row()] = std::max(ra[it.row()], std::abs(it.value()));
        }
        for (SpMat::InnerIterator it(G, j); it; ++it) {
          cn[j] = std::max(cn[j], std::abs(it.value()));
          rg[it.row()] = std::max(rg[it.row()], std::abs(it.value()));
        }
      }
      for (size_t k = 0; k < K.dims.size(); ++k) {
        const int o = K.offsets[k], len = svec_len(K.dims[k]);
        const double mx = rg.segment(o, len).maxCoeff();
        rg.segment(o, len).setConstant(mx);
      }
      auto fac = [](double v) { return v > 0 ? 1.0 / std::sqrt(v) : 1.0; };
      Vec dc(n), da(p), dg(m);
      for (int j = 0; j < n; ++j) dc[j] = fac(cn[j]);
      for (int i = 0; i < p; ++i) da[i] = fac(ra[i]);
      for (int i = 0; i < m; ++i) dg[i] = fac(rg[i]);
      A = da.asDiagonal() * A * dc.asDiagonal();
      G = dg.asDiagonal() * G * dc.asDiagonal();
      D = D.cwiseProduct(dc);
      EA = EA.cwiseProduct(da);
      EG = EG.cwiseProduct(dg);
    }
    b = EA.cwiseProduct(b);
    h = EG.cwiseProduct(h);
    c = D.cwiseProduct(c);
  }

  Vec x, y, z, s;
  double tau = 1.0;
  HsdSolver solver(A, b, G, h, c, K, options);
  SolveStatus st = solver.run(x, y, z, s, tau, result.diagnostics);
  if (st == SolveStatus::optimal) {
    Vec xo = D.cwiseProduct(x) / tau;
    std::vector<double> values(xo.data(), xo.data() + n);
    if (recheck(problem, values, options.recheck_tol, result.diagnostics)) {
      result.status = SolveStatus::optimal;
      result.values = std::move(values);
      result.objective = problem.objective().eval(result.values);
    } else {
      result.status = SolveStatus::inconclusive;
      result.diagnostics.message += "; re-check failed";
    }
  } else {
    result.status = st;
  }
  return result;
}

}  // namespace liftsim
