#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "liftsim/conic.hpp"
#include "liftsim/model.hpp"
#include "liftsim/sosrelax.hpp"

namespace liftsim {

struct SynthesisRequest {
  UnliftedSystem system;
  std::vector<Polynomial> lifting;  // over x, identity prefix
  /// Disturbance template H_W (rows are facet normals). Default: +e_i, -e_i
  /// interleaved, i.e. an axis-aligned box.
  std::optional<Eigen::MatrixXd> H_W;
  int mult_degree = 2;
  /// Retry once at degree 4 when the first program fails.
  bool retry = true;
  /// Second stage: among near-optimal h, minimize sum |A| + sum |B|.
  bool tie_break = true;
  SolverOptions solver;
  CertificateTolerances tolerances;
};

/// Decision variables of the residual program.
struct ResidualVariables {
  std::vector<std::vector<VarId>> A;  // n_y x n_y
  std::vector<std::vector<VarId>> B;  // n_y x n_u
  std::vector<VarId> h;               // one per template row
};

ResidualVariables declare_residual_variables(ConicProblem& prob, int n_y, int n_u, int rows);

/// h_i - H_i (psi(f(x,u)) - A psi(x) - B u) over (x, u), one per template row.
std::vector<ParametricPolynomial> build_residual(const UnliftedSystem& sys,
                                                 const std::vector<Polynomial>& lifting,
                                                 const Eigen::MatrixXd& H_W,
                                                 const ResidualVariables& vars);

struct SynthesisResult {
  AffineLiftedSystem lifted;
  /// One per template row, in the program variables of `domain`.
  std::vector<SosCertificate> certificates;
  SosDomain domain;
  double objective = 0.0;        // stage-one optimum of sum |h_i|
  double final_l1 = 0.0;         // sum |h_i| of the returned system
  double padding = 0.0;          // largest offset increase from defect bounds
  int mult_degree = 0;           // degree that succeeded
  SolveDiagnostics diagnostics;  // stage-one solve
  double seconds = 0.0;
};

/// Solves min sum |h_i| subject to the SOS form of the residual
/// nonnegativity on X x U. Throws SynthesisError on failure.
SynthesisResult synthesize(const SynthesisRequest& req);

SosDomain synthesis_domain(const UnliftedSystem& sys);

/// Template H_W, defaulting to the interleaved box normals.
Eigen::MatrixXd disturbance_template(const SynthesisRequest& req);

struct RecertifyReport {
  bool feasible = false;
  /// Largest over rows of the smallest s with residual_i + s certified
  /// nonnegative; feasible iff max_shift <= the requested tolerance.
  double max_shift = kInf;
  std::vector<SosCertificate> certificates;  // for residual_i + s_i
  std::string message;
};

/// Re-certifies a lifted system with A, B and h fixed: one SOS program per
/// template row. Optimal offsets make rows tight, so each program minimizes
/// a constant shift instead of testing feasibility directly.
RecertifyReport certify_lifted(const UnliftedSystem& sys, const AffineLiftedSystem& lifted,
                               int mult_degree, double shift_tol = 1e-6,
                               const SolverOptions& solver = {},
                               const CertificateTolerances& tol = {});

struct SoundnessReport {
  int n_samples = 0;
  int n_violations = 0;
  double max_violation = 0.0;  // max over samples of max_i (H_i r - h_i)
  double tolerance = 0.0;
};

/// max_i (H_i r - h_i) for r = psi(f(x,u)) - A psi(x) - B u.
double residual_violation(const UnliftedSystem& sys, const AffineLiftedSystem& lifted,
                          const Eigen::VectorXd& x, const Eigen::VectorXd& u);

/// Uniform samples of (x, u) in X x U.
SoundnessReport sample_soundness(const UnliftedSystem& sys, const AffineLiftedSystem& lifted,
                                 int n_samples, std::uint64_t seed, double tol = 1e-6);

}  // namespace liftsim
