#include "liftsim/sosrelax.hpp"

#include <algorithm>
#include <cmath>

#include "liftsim/errors.hpp"

namespace liftsim {

namespace {

void basis_rec(int n, int var, int budget, std::vector<int>& exps, std::vector<Monomial>& out) {
  if (var == n) {
    out.emplace_back(exps);
    return;
  }
  for (int e = 0; e <= budget; ++e) {
    exps[var] = e;
    basis_rec(n, var + 1, budget - e, exps, out);
  }
  exps[var] = 0;
}

int max_degree(const std::vector<Monomial>& basis) {
  int d = -1;
  for (const auto& m : basis) d = std::max(d, m.degree());
  return d;
}

}  // namespace

std::vector<Monomial> monomial_basis(int n_vars, int degree) {
  if (degree < 0) throw InputError("monomial_basis: negative degree");
  if (n_vars < 0) throw InputError("monomial_basis: negative variable count");
  std::vector<Monomial> out;
  std::vector<int> exps(n_vars, 0);
  basis_rec(n_vars, 0, degree, exps, out);
  std::sort(out.begin(), out.end(), GrlexLess());
  return out;
}

SosBlock add_sos_polynomial(ConicProblem& prob, int arity, const std::vector<Monomial>& basis) {
  if (basis.empty()) throw InputError("SOS basis is empty");
  SosBlock b;
  b.basis = basis;
  const int d = static_cast<int>(basis.size());
  b.gram = prob.add_psd_block(d);
  b.poly = ParametricPolynomial(arity);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j <= i; ++j)
      b.poly.add_term(basis[i] * basis[j], AffineExpr::var(b.gram.at(i, j), i == j ? 1.0 : 2.0));
  return b;
}

void add_polynomial_identity(ConicProblem& prob, const ParametricPolynomial& p) {
  for (const auto& [m, e] : collect(p)) prob.add_equality(e);
}

SosBlock sos_block(ConicProblem& prob, const ParametricPolynomial& p,
                   const std::vector<Monomial>& basis) {
  if (p.degree() > 2 * max_degree(basis))
    throw CapacityError("SOS basis of degree " + std::to_string(max_degree(basis)) +
                        " cannot express a polynomial of degree " + std::to_string(p.degree()));
  SosBlock b = add_sos_polynomial(prob, p.arity(), basis);
  ParametricPolynomial diff = p;
  diff -= b.poly;
  add_polynomial_identity(prob, diff);
  return b;
}

SosConstraint positivity_on_set(ConicProblem& prob, const ParametricPolynomial& target,
                                const std::vector<Polynomial>& gens, int mult_degree) {
  if (mult_degree < 0 || mult_degree % 2 != 0)
    throw InputError("multiplier degree must be even and nonnegative, got " +
                     std::to_string(mult_degree));
  const int n = target.arity();
  SosConstraint c;
  c.target = target;
  c.gens = gens;
  int maxdeg = std::max(0, target.degree());
  const auto mult_basis = monomial_basis(n, mult_degree / 2);
  ParametricPolynomial rest = target;
  for (const auto& g : gens) {
    if (g.arity() != n) throw InputError("generator arity differs from target arity");
    maxdeg = std::max(maxdeg, mult_degree + g.degree());
    SosBlock lam = add_sos_polynomial(prob, n, mult_basis);
    // rest -= lambda * g
    for (const auto& [mg, cg] : g.terms())
      for (const auto& [ml, el] : lam.poly.terms()) rest.add_term(mg * ml, -cg * el);
    c.multipliers.push_back(std::move(lam));
  }
  // An odd top degree forces the top Gram block to vanish, so half of the
  // degree rounded down loses nothing.
  c.remainder = add_sos_polynomial(prob, n, monomial_basis(n, maxdeg / 2));
  rest -= c.remainder.poly;
  add_polynomial_identity(prob, rest);
  return c;
}

namespace {

Eigen::MatrixXd gram_value(const SolveResult& r, const PsdBlock& b) {
  Eigen::MatrixXd G(b.dim, b.dim);
  for (int i = 0; i < b.dim; ++i)
    for (int j = 0; j <= i; ++j) G(i, j) = G(j, i) = r.value(b.at(i, j));
  return G;
}

Polynomial expand_gram(const Eigen::MatrixXd& G, const std::vector<Monomial>& basis, int arity) {
  Polynomial p(arity);
  for (size_t i = 0; i < basis.size(); ++i)
    for (size_t j = 0; j < basis.size(); ++j) p.add_term(basis[i] * basis[j], G(i, j));
  return p;
}

}  // namespace

double certificate_residual(const SosCertificate& cert) {
  Polynomial diff = cert.target - cert.remainder;
  for (size_t j = 0; j < cert.gens.size(); ++j) diff -= cert.multipliers[j] * cert.gens[j];
  return diff.max_abs_coeff();
}

SosCertificate extract_certificate(const SolveResult& result, const SosConstraint& c,
                                   const CertificateTolerances& tol) {
  if (!result.optimal())
    throw NumericalCertificateError(std::string("no certificate: solver status ") +
                                    to_string(result.status));
  SosCertificate cert;
  const int n = c.target.arity();
  cert.target = c.target.substitute(result.values);
  cert.gens = c.gens;
  cert.min_gram_eigenvalue = kInf;
  auto take = [&](const SosBlock& b) {
    Eigen::MatrixXd G = gram_value(result, b.gram);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G, Eigen::EigenvaluesOnly);
    cert.min_gram_eigenvalue = std::min(cert.min_gram_eigenvalue, es.eigenvalues()(0));
    cert.grams.push_back(G);
    return expand_gram(G, b.basis, n);
  };
  for (const auto& m : c.multipliers) cert.multipliers.push_back(take(m));
  cert.remainder = take(c.remainder);
  cert.residual = certificate_residual(cert);
  if (!(cert.residual <= tol.residual))
    throw NumericalCertificateError("SOS identity residual " + std::to_string(cert.residual) +
                                    " exceeds " + std::to_string(tol.residual));
  if (!(cert.min_gram_eigenvalue >= -tol.eigenvalue))
    throw NumericalCertificateError("Gram eigenvalue " + std::to_string(cert.min_gram_eigenvalue) +
                                    " below -" + std::to_string(tol.eigenvalue));
  return cert;
}

ParametricPolynomial compose(const ParametricPolynomial& p, const std::vector<Polynomial>& subs) {
  if (static_cast<int>(subs.size()) != p.arity())
    throw InputError("compose: substitution count differs from arity");
  const int arity = subs.empty() ? 0 : subs[0].arity();
  ParametricPolynomial r(arity);
  for (const auto& [m, e] : p.terms())
    r.add_scaled(compose(Polynomial::monomial(p.arity(), m), subs), e);
  return r;
}

BoxNormalization::BoxNormalization(const Box& box) {
  center = box.center();
  radius = 0.5 * (box.upper - box.lower);
  for (int i = 0; i < radius.size(); ++i)
    if (!(radius[i] > 0)) radius[i] = 1.0;
}

std::vector<Polynomial> BoxNormalization::forward() const {
  const int n = static_cast<int>(center.size());
  std::vector<Polynomial> out;
  for (int i = 0; i < n; ++i)
    out.push_back(Polynomial::constant(n, center[i]) + radius[i] * Polynomial::variable(n, i));
  return out;
}

std::vector<Polynomial> BoxNormalization::inverse() const {
  const int n = static_cast<int>(center.size());
  std::vector<Polynomial> out;
  for (int i = 0; i < n; ++i)
    out.push_back((1.0 / radius[i]) *
                  (Polynomial::variable(n, i) - Polynomial::constant(n, center[i])));
  return out;
}

std::vector<Polynomial> BoxNormalization::unit_box_generators() const {
  const int n = static_cast<int>(center.size());
  std::vector<Polynomial> out;
  for (int i = 0; i < n; ++i) {
    out.push_back(Polynomial::constant(n, 1.0) - Polynomial::variable(n, i));
    out.push_back(Polynomial::constant(n, 1.0) + Polynomial::variable(n, i));
  }
  return out;
}

std::vector<Polynomial> halfspace_generators(const HPolytope& P) {
  const int n = P.dim();
  std::vector<Polynomial> out;
  for (int i = 0; i < P.rows(); ++i) {
    Polynomial g = Polynomial::constant(n, P.h[i]);
    for (int j = 0; j < n; ++j) g -= P.H(i, j) * Polynomial::variable(n, j);
    out.push_back(g);
  }
  return out;
}

Polynomial SosDomain::to_program(const Polynomial& p) const {
  return norm ? compose(p, norm->forward()) : p;
}

ParametricPolynomial SosDomain::to_program(const ParametricPolynomial& p) const {
  return norm ? compose(p, norm->forward()) : p;
}

SosDomain box_domain(const Box& box) {
  SosDomain d;
  d.norm.emplace(box);
  d.gens = d.norm->unit_box_generators();
  return d;
}

SosDomain generator_domain(std::vector<Polynomial> gens) {
  SosDomain d;
  d.gens = std::move(gens);
  return d;
}

double unit_box_defect_bound(const SosCertificate& cert) {
  Polynomial diff = cert.target - cert.remainder;
  for (size_t j = 0; j < cert.gens.size(); ++j) diff -= cert.multipliers[j] * cert.gens[j];
  double bound = 0.0;
  for (const auto& [m, c] : diff.terms()) bound += std::abs(c);
  const double deficit = std::max(0.0, -cert.min_gram_eigenvalue);
  if (deficit > 0.0) {
    double weight = static_cast<double>(cert.grams.back().rows());
    for (size_t j = 0; j < cert.gens.size(); ++j) {
      double sup = 0.0;
      for (const auto& [m, c] : cert.gens[j].terms()) sup += std::abs(c);
      weight += static_cast<double>(cert.grams[j].rows()) * sup;
    }
    bound += deficit * weight;
  }
  return bound;
}

}  // namespace liftsim
