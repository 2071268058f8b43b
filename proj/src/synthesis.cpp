#include "liftsim/synthesis.hpp"

#include <chrono>
#include <cmath>

#include "liftsim/errors.hpp"

namespace liftsim {

using Eigen::MatrixXd;
using Eigen::VectorXd;

ResidualVariables declare_residual_variables(ConicProblem& prob, int n_y, int n_u, int rows) {
  ResidualVariables v;
  v.A.resize(n_y);
  v.B.resize(n_y);
  for (int i = 0; i < n_y; ++i) {
    for (int j = 0; j < n_y; ++j)
      v.A[i].push_back(prob.add_variable(-kInf, kInf, "A" + std::to_string(i) + "_" + std::to_string(j)));
    for (int j = 0; j < n_u; ++j)
      v.B[i].push_back(prob.add_variable(-kInf, kInf, "B" + std::to_string(i) + "_" + std::to_string(j)));
  }
  for (int i = 0; i < rows; ++i) v.h.push_back(prob.add_variable(-kInf, kInf, "h" + std::to_string(i)));
  return v;
}

std::vector<ParametricPolynomial> build_residual(const UnliftedSystem& sys,
                                                 const std::vector<Polynomial>& lifting,
                                                 const MatrixXd& H_W,
                                                 const ResidualVariables& vars) {
  const int n = sys.n_x + sys.n_u;
  const int ny = static_cast<int>(lifting.size());
  if (H_W.cols() != ny) throw InputError("template column count differs from the lifting length");
  if (static_cast<int>(vars.A.size()) != ny || static_cast<int>(vars.B.size()) != ny ||
      static_cast<int>(vars.h.size()) != H_W.rows())
    throw InputError("residual variable shapes do not match the template");
  if (static_cast<int>(sys.dynamics.size()) != sys.n_x) throw InputError("dynamics length differs from n_x");
  std::vector<Polynomial> psi_f, psi_x;
  for (const auto& p : lifting) {
    if (p.arity() != sys.n_x) throw InputError("lifting arity differs from n_x");
    psi_f.push_back(compose(p, sys.dynamics));
    psi_x.push_back(extend_arity(p, n));
  }
  std::vector<ParametricPolynomial> out;
  for (int i = 0; i < H_W.rows(); ++i) {
    ParametricPolynomial r(n);
    r.add_term(Monomial(), AffineExpr::var(vars.h[i]));
    for (int k = 0; k < ny; ++k) {
      const double c = H_W(i, k);
      if (c == 0.0) continue;
      r.add_scaled(psi_f[k], -c);
      for (int j = 0; j < ny; ++j) r.add_scaled(psi_x[j], AffineExpr::var(vars.A[k][j], c));
      for (int l = 0; l < sys.n_u; ++l)
        r.add_scaled(Polynomial::variable(n, sys.n_x + l), AffineExpr::var(vars.B[k][l], c));
    }
    out.push_back(std::move(r));
  }
  return out;
}

SosDomain synthesis_domain(const UnliftedSystem& sys) {
  if (sys.X.bounds && !sys.generators_explicit) {
    VectorXd lo(sys.n_x + sys.n_u), up(sys.n_x + sys.n_u);
    lo << sys.X.bounds->lower, sys.U.lower;
    up << sys.X.bounds->upper, sys.U.upper;
    return box_domain(Box(lo, up));
  }
  return generator_domain(sys.generators);
}

MatrixXd disturbance_template(const SynthesisRequest& req) {
  const int ny = static_cast<int>(req.lifting.size());
  if (req.H_W) {
    if (req.H_W->cols() != ny) throw InputError("template must have one column per lifting component");
    return *req.H_W;
  }
  MatrixXd H = MatrixXd::Zero(2 * ny, ny);
  for (int i = 0; i < ny; ++i) {
    H(2 * i, i) = 1.0;
    H(2 * i + 1, i) = -1.0;
  }
  return H;
}

namespace {

struct Attempt {
  ConicProblem prob;
  ResidualVariables vars;
  std::vector<VarId> abs_h;
  std::vector<SosConstraint> rows;
};

std::vector<SosCertificate> certificates(const SolveResult& r, const Attempt& a,
                                         const CertificateTolerances& tol) {
  std::vector<SosCertificate> out;
  for (const auto& c : a.rows) out.push_back(extract_certificate(r, c, tol));
  return out;
}

SynthesisResult attempt(const SynthesisRequest& req, const MatrixXd& H, int degree,
                        const SosDomain& domain) {
  const UnliftedSystem& sys = req.system;
  const int ny = static_cast<int>(req.lifting.size());
  const int m = static_cast<int>(H.rows());
  Attempt a;
  a.vars = declare_residual_variables(a.prob, ny, sys.n_u, m);
  AffineExpr l1;
  for (int i = 0; i < m; ++i) {
    const VarId t = a.prob.add_variable(0.0, kInf);
    a.prob.add_le(AffineExpr::var(a.vars.h[i]), AffineExpr::var(t));
    a.prob.add_le(-AffineExpr::var(a.vars.h[i]), AffineExpr::var(t));
    a.abs_h.push_back(t);
    l1 += AffineExpr::var(t);
  }
  // W nonempty: some point satisfies every facet. For the box template this
  // is h_{+k} + h_{-k} >= 0 per axis.
  const auto w0 = a.prob.add_variables(ny);
  for (int i = 0; i < m; ++i) {
    AffineExpr lhs;
    for (int k = 0; k < ny; ++k)
      if (H(i, k) != 0.0) lhs.add_term(w0[k], H(i, k));
    a.prob.add_le(lhs, AffineExpr::var(a.vars.h[i]));
  }
  for (const auto& r : build_residual(sys, req.lifting, H, a.vars))
    a.rows.push_back(positivity_on_set(a.prob, domain.to_program(r), domain.gens, degree));
  a.prob.set_objective(l1);

  SynthesisResult out;
  SolveResult r1 = solve(a.prob, req.solver);
  out.diagnostics = r1.diagnostics;
  if (!r1.optimal())
    throw SynthesisError(std::string("degree ") + std::to_string(degree) + ": solver status " +
                         to_string(r1.status) + " (" + r1.diagnostics.message + ")");
  out.objective = r1.eval(l1);
  std::vector<SosCertificate> certs = certificates(r1, a, req.tolerances);
  SolveResult chosen = r1;

  if (req.tie_break) {
    a.prob.add_le(l1, AffineExpr(out.objective * (1.0 + 1e-6) + 1e-9));
    AffineExpr l1_ab;
    auto bound_abs = [&](VarId v) {
      const VarId t = a.prob.add_variable(0.0, kInf);
      a.prob.add_le(AffineExpr::var(v), AffineExpr::var(t));
      a.prob.add_le(-AffineExpr::var(v), AffineExpr::var(t));
      l1_ab += AffineExpr::var(t);
    };
    for (const auto& row : a.vars.A)
      for (VarId v : row) bound_abs(v);
    for (const auto& row : a.vars.B)
      for (VarId v : row) bound_abs(v);
    a.prob.set_objective(l1_ab);
    SolveResult r2 = solve(a.prob, req.solver);
    if (r2.optimal()) {
      try {
        certs = certificates(r2, a, req.tolerances);
        chosen = r2;
      } catch (const NumericalCertificateError&) {
        // keep the stage-one solution
      }
    }
  }

  AffineLiftedSystem& L = out.lifted;
  L.n_x = sys.n_x;
  L.n_u = sys.n_u;
  L.variables = sys.variables;
  L.lifting = req.lifting;
  L.A.resize(ny, ny);
  L.B.resize(ny, sys.n_u);
  for (int i = 0; i < ny; ++i) {
    for (int j = 0; j < ny; ++j) L.A(i, j) = chosen.value(a.vars.A[i][j]);
    for (int j = 0; j < sys.n_u; ++j) L.B(i, j) = chosen.value(a.vars.B[i][j]);
  }
  VectorXd h(m);
  for (int i = 0; i < m; ++i) {
    h[i] = chosen.value(a.vars.h[i]);
    // On the unit box the certificate's numerical defect is bounded; raising
    // the offset by that bound makes the certified inequality exact.
    if (domain.norm) {
      const double pad = unit_box_defect_bound(certs[i]);
      h[i] += pad;
      out.padding = std::max(out.padding, pad);
    }
  }
  L.W = HPolytope(H, h);
  L.X = sys.X;
  L.U = sys.U;
  L.policy = sys.policy;
  validate(L);
  out.certificates = std::move(certs);
  out.domain = domain;
  out.final_l1 = h.lpNorm<1>();
  out.mult_degree = degree;
  return out;
}

}  // namespace

SynthesisResult synthesize(const SynthesisRequest& req) {
  const auto t0 = std::chrono::steady_clock::now();
  validate(req.system);
  check_identity_prefix(req.lifting, req.system.n_x);
  const MatrixXd H = disturbance_template(req);
  const SosDomain domain = synthesis_domain(req.system);
  std::vector<int> degrees{req.mult_degree};
  if (req.retry) degrees.push_back(req.mult_degree < 4 ? 4 : req.mult_degree + 2);
  std::string failures;
  for (int d : degrees) {
    try {
      SynthesisResult r = attempt(req, H, d, domain);
      r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      return r;
    } catch (const SynthesisError& e) {
      failures += std::string(failures.empty() ? "" : "; ") + e.what();
    } catch (const NumericalCertificateError& e) {
      failures += std::string(failures.empty() ? "" : "; ") + "degree " + std::to_string(d) + ": " + e.what();
    }
  }
  throw SynthesisError("synthesis failed: " + failures);
}

RecertifyReport certify_lifted(const UnliftedSystem& sys, const AffineLiftedSystem& lifted,
                               int mult_degree, double shift_tol, const SolverOptions& solver,
                               const CertificateTolerances& tol) {
  RecertifyReport rep;
  const SosDomain domain = synthesis_domain(sys);
  const int ny = lifted.n_y();
  const int m = static_cast<int>(lifted.W.H.rows());
  // Fixed numbers enter through a scratch program holding A, B and h.
  ConicProblem scratch;
  ResidualVariables vars = declare_residual_variables(scratch, ny, sys.n_u, m);
  std::vector<double> values(scratch.num_variables(), 0.0);
  for (int i = 0; i < ny; ++i) {
    for (int j = 0; j < ny; ++j) values[vars.A[i][j]] = lifted.A(i, j);
    for (int j = 0; j < sys.n_u; ++j) values[vars.B[i][j]] = lifted.B(i, j);
  }
  for (int i = 0; i < m; ++i) values[vars.h[i]] = lifted.W.h[i];
  rep.max_shift = -kInf;
  int row = 0;
  for (const auto& r : build_residual(sys, lifted.lifting, lifted.W.H, vars)) {
    ConicProblem prob;
    const VarId shift = prob.add_variable(-1.0, kInf, "shift");
    ParametricPolynomial target(domain.to_program(r.substitute(values)));
    target.add_term(Monomial(), AffineExpr::var(shift));
    SosConstraint c = positivity_on_set(prob, target, domain.gens, mult_degree);
    prob.set_objective(AffineExpr::var(shift));
    const SolveResult res = solve(prob, solver);
    try {
      rep.certificates.push_back(extract_certificate(res, c, tol));
    } catch (const NumericalCertificateError& e) {
      rep.message = "row " + std::to_string(row) + ": " + e.what();
      rep.max_shift = kInf;
      return rep;
    }
    rep.max_shift = std::max(rep.max_shift, res.value(shift));
    ++row;
  }
  rep.feasible = rep.max_shift <= shift_tol;
  if (!rep.feasible) rep.message = "shift " + std::to_string(rep.max_shift) + " exceeds tolerance";
  return rep;
}

double residual_violation(const UnliftedSystem& sys, const AffineLiftedSystem& lifted,
                          const VectorXd& x, const VectorXd& u) {
  const VectorXd xn = sys.step(x, u);
  VectorXd r(lifted.n_y());
  const VectorXd px = lift(lifted, x);
  for (int k = 0; k < lifted.n_y(); ++k) r[k] = lifted.lifting[k].eval(xn);
  r -= lifted.A * px + lifted.B * u;
  return (lifted.W.H * r - lifted.W.h).maxCoeff();
}

SoundnessReport sample_soundness(const UnliftedSystem& sys, const AffineLiftedSystem& lifted,
                                 int n_samples, std::uint64_t seed, double tol) {
  SoundnessReport rep;
  rep.tolerance = tol;
  rep.max_violation = -kInf;
  std::mt19937_64 rng(seed);
  for (int k = 0; k < n_samples; ++k) {
    const VectorXd x = sample_state(sys.X, rng);
    const VectorXd u = sample_box(sys.U, rng);
    const double v = residual_violation(sys, lifted, x, u);
    rep.max_violation = std::max(rep.max_violation, v);
    if (v > tol) ++rep.n_violations;
    ++rep.n_samples;
  }
  return rep;
}

}  // namespace liftsim
