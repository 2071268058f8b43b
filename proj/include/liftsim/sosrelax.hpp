#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "liftsim/conic.hpp"
#include "liftsim/polyalg.hpp"
#include "liftsim/polytope.hpp"

namespace liftsim {

/// All monomials in n_vars variables of total degree <= degree, graded-lex
/// ordered; C(n_vars + degree, degree) entries.
std::vector<Monomial> monomial_basis(int n_vars, int degree);

/// An SOS polynomial basis' G basis with G a PSD block of the program.
struct SosBlock {
  std::vector<Monomial> basis;
  PsdBlock gram;
  ParametricPolynomial poly;  // basis' G basis, affine in the Gram entries
};

/// Declares a fresh Gram block over `basis`.
SosBlock add_sos_polynomial(ConicProblem& prob, int arity, const std::vector<Monomial>& basis);

/// Adds one equality per monomial: every coefficient of p is zero.
void add_polynomial_identity(ConicProblem& prob, const ParametricPolynomial& p);

/// Constrains p to be SOS in `basis`: p == basis' G basis, G psd. Throws
/// CapacityError when deg(p) exceeds twice the basis degree.
SosBlock sos_block(ConicProblem& prob, const ParametricPolynomial& p,
                   const std::vector<Monomial>& basis);

/// Putinar-style block set: target - sum_j lambda_j l_j = sigma_0 with SOS
/// lambda_j of degree mult_degree and SOS sigma_0.
struct SosConstraint {
  ParametricPolynomial target;
  std::vector<Polynomial> gens;
  std::vector<SosBlock> multipliers;
  SosBlock remainder;
};

/// Adds the blocks certifying target >= 0 on {l_j >= 0 for all j}.
/// mult_degree must be even and nonnegative.
SosConstraint positivity_on_set(ConicProblem& prob, const ParametricPolynomial& target,
                                const std::vector<Polynomial>& gens, int mult_degree);

struct SosCertificate {
  Polynomial target;
  std::vector<Polynomial> gens;
  std::vector<Polynomial> multipliers;
  Polynomial remainder;
  std::vector<Eigen::MatrixXd> grams;  // multipliers first, remainder last
  double residual = 0.0;               // max |coeff| of target - sum lambda l - sigma
  double min_gram_eigenvalue = 0.0;
};

struct CertificateTolerances {
  double residual = 1e-6;
  double eigenvalue = 1e-7;
};

/// Numeric certificate from a solved program. Throws
/// NumericalCertificateError when the re-check fails or the result is not
/// optimal.
SosCertificate extract_certificate(const SolveResult& result, const SosConstraint& c,
                                   const CertificateTolerances& tol = {});

/// Polynomial identity residual of a certificate recomputed from its Gram
/// matrices.
double certificate_residual(const SosCertificate& cert);

/// p(subs) for a parametric polynomial.
ParametricPolynomial compose(const ParametricPolynomial& p, const std::vector<Polynomial>& subs);

/// Affine change of variables x = center + radius .* t mapping [-1,1]^n
/// onto `box`. Degenerate axes (radius 0) are kept at radius 1.
struct BoxNormalization {
  Eigen::VectorXd center, radius;
  explicit BoxNormalization(const Box& box);
  /// x as polynomials in t.
  std::vector<Polynomial> forward() const;
  /// t as polynomials in x.
  std::vector<Polynomial> inverse() const;
  /// 1 - t_i, 1 + t_i for each axis.
  std::vector<Polynomial> unit_box_generators() const;
};

/// Generators h_i - H_i x of an H-polytope.
std::vector<Polynomial> halfspace_generators(const HPolytope& P);

/// The set an SOS program ranges over, with the variables the program is
/// built in. Box domains are normalized to [-1,1]^n.
struct SosDomain {
  std::optional<BoxNormalization> norm;
  std::vector<Polynomial> gens;  // in program variables

  Polynomial to_program(const Polynomial& p) const;
  ParametricPolynomial to_program(const ParametricPolynomial& p) const;
};

SosDomain box_domain(const Box& box);
SosDomain generator_domain(std::vector<Polynomial> gens);

/// Upper bound on how far below zero the certified target can reach on
/// [-1,1]^n given the certificate's identity residual and Gram eigenvalue
/// deficit: the l1 norm of the residual plus |min eig| times the basis
/// lengths weighted by sup |l_j|.
double unit_box_defect_bound(const SosCertificate& cert);

}  // namespace liftsim
