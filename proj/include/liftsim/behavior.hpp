#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "liftsim/model.hpp"
#include "liftsim/verification.hpp"

namespace liftsim {

enum class Termination { horizon_reached, domain_exit };
const char* to_string(Termination t);

/// A bounded-horizon maximal solution. x has one more entry than u; y is
/// filled for lifted trajectories only.
struct Trajectory {
  std::vector<Eigen::VectorXd> x, u, y;
  Termination termination = Termination::horizon_reached;

  int steps() const { return static_cast<int>(u.size()); }
};

/// Uniform on U at every step.
struct RandomInputs {};
/// Explicit signal; must cover the horizon.
using InputSignal = std::vector<Eigen::VectorXd>;
using InputSource = std::variant<RandomInputs, Policy, InputSignal>;

/// Disturbance draws for lifted simulation. Uniform mode samples the
/// bounding box of W with rejection and replaces every `vertex_every`-th
/// draw by a vertex of W, cycling through them.
class DisturbanceSampler {
 public:
  static DisturbanceSampler zero(int dim);
  static DisturbanceSampler uniform(const HPolytope& W, int vertex_every = 5);

  Eigen::VectorXd draw(int t, std::mt19937_64& rng) const;
  int dim() const { return dim_; }

 private:
  int dim_ = 0;
  bool zero_ = true;
  HPolytope W_;
  Box bbox_;
  std::vector<Eigen::VectorXd> vertices_;
  int vertex_every_ = 0;
};

/// Steps x+ = f(x, u) until T steps or until the next state leaves X.
/// Throws InputError when x0 is outside X or the input has the wrong size.
Trajectory simulate_unlifted(const UnliftedSystem& sys, const Eigen::VectorXd& x0,
                             const InputSource& input, int T, std::uint64_t seed);

/// y(0) = psi(x0), y+ = A y + B u + w with w from the sampler; stops when the
/// output of the next state leaves X.
Trajectory simulate_lifted(const AffineLiftedSystem& sys, const Eigen::VectorXd& x0,
                           const InputSource& input, const DisturbanceSampler& disturbance, int T,
                           std::uint64_t seed);

/// psi_Z(x(t+1)) - A_Z psi_Z(x(t)) - B_Z u(t) in W_Z at every step.
struct PsiInverseMode {};
/// Forward witness search through rho(z) = R z + {0} x W_rho. Uses traj.y as
/// the Y-trajectory, or psi_Y(x) when the trajectory carries no y.
struct CertificateMode {
  const AffineLiftedSystem* Y = nullptr;
  RefinementCertificate cert;
};
using ContainmentMode = std::variant<PsiInverseMode, CertificateMode>;

struct TrajectoryContainment {
  bool contained = false;
  double max_residual = 0.0;  // largest normalized facet violation
  int first_failing_step = -1;  // index of the first unmatched state, -1 if none
  std::vector<Eigen::VectorXd> witness;  // certificate mode: z(0), z(1), ...
};

/// Throws InputError on dimension mismatch.
TrajectoryContainment contains_trajectory(const AffineLiftedSystem& Z, const Trajectory& traj,
                                          const ContainmentMode& mode, double tol = 1e-6);

struct StepFailure {
  int trajectory = 0;
  int step = 0;
  double residual = 0.0;
};

struct ContainmentReport {
  int n_trajectories = 0;
  int n_contained = 0;
  int n_domain_exits = 0;
  int total_steps = 0;
  double max_residual = 0.0;
  std::vector<StepFailure> failures;
  double seconds = 0.0;
};

struct MonteCarloOptions {
  int n = 100;
  int T = 20;
  std::uint64_t seed = 0;
  std::optional<Policy> policy;  // closed loop when set, random inputs otherwise
  std::optional<Box> input_range;  // open-loop inputs drawn here instead of U (must lie in U)
  double tol = 1e-6;
  int vertex_every = 5;
};

/// Seed of trajectory k under master seed s.
std::uint64_t trajectory_seed(std::uint64_t master, int k);

/// Source-system trajectories checked against Z in psi_inverse mode.
ContainmentReport monte_carlo_containment(const UnliftedSystem& source, const AffineLiftedSystem& Z,
                                          const MonteCarloOptions& opts);
/// Y trajectories (disturbed, uniform over W_Y) checked against Z through
/// the certificate.
ContainmentReport monte_carlo_containment(const AffineLiftedSystem& Y, const AffineLiftedSystem& Z,
                                          const RefinementCertificate& cert,
                                          const MonteCarloOptions& opts);

json to_json(const ContainmentReport& r);

}  // namespace liftsim
