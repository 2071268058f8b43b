#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "liftsim/conic.hpp"
#include "liftsim/model.hpp"
#include "liftsim/polytope.hpp"

namespace liftsim {

/// rho(z) = {z_{1:n_x}} x (R^{xbar:} z + W_rho), W_rho over the n_Y - n_x
/// lifted coordinates.
struct RefinementCertificate {
  Eigen::MatrixXd R;                   // n_Y x n_Z
  std::variant<Box, VPolytope> W_rho;  // box from the search, V-polytope after composition
};

/// Identity refinement R = I, W_rho = {0} between systems of equal size.
RefinementCertificate identity_certificate(const AffineLiftedSystem& Y);

/// Affine parametrization R = R0 + sum_k theta_k N_k of every R satisfying
/// R^{x:} = [I 0] and (A_Y R - R A_Z)^{:xbar} = 0. The N_k are orthonormal
/// (Frobenius) and vanish on the first n_x rows.
struct RSolution {
  bool solvable = false;
  Eigen::MatrixXd R0;  // minimum-norm on the free rows
  std::vector<Eigen::MatrixXd> basis;
  double residual = 0.0;  // of the linear system at R0
};

RSolution solve_R(const AffineLiftedSystem& Y, const AffineLiftedSystem& Z);

struct VerifyOptions {
  int max_iters = 20;        // pattern-search iterations per start
  double slack_tol = 1e-8;   // verified iff the fixed-R slack is <= this
  int mult_degree = 2;       // SOS multipliers of the W_rho bound constraints
  int random_starts = 2;
  std::uint64_t seed = 0;
  double check_tol = 1e-8;   // check_certificate tolerance
  int check_samples = 10000;
  SolverOptions solver;
};

/// Result of the convex program with R fixed: minimize the common slack s
/// (s >= -1) of the W_rho bound constraints and of the vertex witnesses.
struct FixedRResult {
  SolveStatus status = SolveStatus::inconclusive;
  double slack = kInf;
  Box W_rho;
  std::string message;
  /// slack when optimal, kInf otherwise
  double optimal_slack() const { return status == SolveStatus::optimal ? slack : kInf; }
};

FixedRResult solve_fixed_R(const AffineLiftedSystem& Y, const AffineLiftedSystem& Z,
                           const Eigen::MatrixXd& R, const VerifyOptions& opts);

/// Residual of each condition; a certificate passes when all are <= tol.
struct ConditionResiduals {
  double output_rows = kInf;  // max |R^{x:} - [I 0]|
  /// psi_Y^{xbar}(x) - R^{xbar:} psi_Z(x) in W_rho on X: max of the SOS
  /// shift and the sampled distance outside W_rho; negative values are a
  /// strict margin.
  double lifting = kInf;
  /// Minkowski-sum containment: largest relaxation any left-hand vertex
  /// needs in its witness LP.
  double containment = kInf;
  double commutation = kInf;  // max |(A_Y R - R A_Z)^{:xbar}|
};

struct CertificateReport {
  bool pass = false;
  ConditionResiduals residuals;
  int lhs_vertices = 0;
  std::string failure;  // first failed condition, empty on pass
};

/// Independent re-check of a certificate: matrix arithmetic for the R
/// conditions, fresh SOS programs plus sampling for the W_rho condition and
/// per-vertex LPs for the containment.
CertificateReport check_certificate(const AffineLiftedSystem& Y, const AffineLiftedSystem& Z,
                                    const RefinementCertificate& cert,
                                    const VerifyOptions& opts = {});

enum class VerifyStatus { verified, inconclusive };
const char* to_string(VerifyStatus s);

struct IterationRecord {
  int start = 0;
  int iteration = 0;
  double slack = kInf;
  double step = 0.0;
};

struct VerificationOutcome {
  VerifyStatus status = VerifyStatus::inconclusive;
  std::optional<RefinementCertificate> certificate;  // iff verified
  CertificateReport check;
  std::vector<IterationRecord> log;
  double final_slack = kInf;
  int nullspace_dim = 0;
  int solves = 0;
  double seconds = 0.0;
  std::string message;
};

/// Searches for (R, W_rho) with LS_Y simulated by LS_Z. Never claims
/// non-simulation. Throws InputError or AssumptionError for unsupported
/// input pairs.
VerificationOutcome verify(const AffineLiftedSystem& Y, const AffineLiftedSystem& Z,
                           const VerifyOptions& opts = {});

/// Candidate certificate for LS_1 below LS_3 from LS_1 below LS_2 and LS_2
/// below LS_3. W_rho is returned as a V-polytope.
RefinementCertificate compose(const RefinementCertificate& c12, const RefinementCertificate& c23,
                              int n_x);

json to_json(const RefinementCertificate& cert);
RefinementCertificate certificate_from_json(const json& doc, int n_y, int n_z);
json to_json(const CertificateReport& r);
json to_json(const VerificationOutcome& o);

}  // namespace liftsim
