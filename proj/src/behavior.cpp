#include "liftsim/behavior.hpp"

#include <chrono>
#include <cmath>

#include "liftsim/conic.hpp"
#include "liftsim/errors.hpp"

namespace liftsim {

using Eigen::MatrixXd;
using Eigen::VectorXd;

const char* to_string(Termination t) {
  return t == Termination::horizon_reached ? "horizon_reached" : "domain_exit";
}

DisturbanceSampler DisturbanceSampler::zero(int dim) {
  DisturbanceSampler s;
  s.dim_ = dim;
  return s;
}

DisturbanceSampler DisturbanceSampler::uniform(const HPolytope& W, int vertex_every) {
  DisturbanceSampler s;
  s.dim_ = W.dim();
  s.zero_ = false;
  s.W_ = W;
  s.bbox_ = bounding_box(W);
  s.vertex_every_ = vertex_every;
  if (vertex_every > 0) s.vertices_ = vertices(W).vertices;
  return s;
}

VectorXd DisturbanceSampler::draw(int t, std::mt19937_64& rng) const {
  if (zero_) return VectorXd::Zero(dim_);
  if (vertex_every_ > 0 && !vertices_.empty() && t % vertex_every_ == vertex_every_ - 1)
    return vertices_[(t / vertex_every_) % vertices_.size()];
  for (int k = 0; k < 100000; ++k) {
    VectorXd w = sample_box(bbox_, rng);
    if (W_.contains(w, 0.0)) return w;
  }
  throw CapacityError("disturbance rejection sampling exceeded 100000 draws");
}

namespace {

void check_x0(const StateSet& X, const VectorXd& x0) {
  if (x0.size() != X.dim())
    throw InputError("x0 has " + std::to_string(x0.size()) + " entries, expected " + std::to_string(X.dim()));
  if (!X.contains(x0, 1e-12)) throw InputError("x0 is outside X");
}

/// Input for step t; checks signals against U.
class InputStream {
 public:
  InputStream(const InputSource& src, const Box& U, int T) : src_(src), U_(U) {
    if (const auto* sig = std::get_if<InputSignal>(&src_)) {
      if (static_cast<int>(sig->size()) < T)
        throw InputError("input signal has " + std::to_string(sig->size()) + " entries, horizon is " +
                         std::to_string(T));
      for (size_t t = 0; t < sig->size(); ++t) {
        if ((*sig)[t].size() != U.dim()) throw InputError("input " + std::to_string(t) + " has wrong size");
        if (!U.contains((*sig)[t], 1e-12)) throw InputError("input " + std::to_string(t) + " is outside U");
      }
    } else if (const auto* p = std::get_if<Policy>(&src_)) {
      if (p->U.dim() != U.dim()) throw InputError("policy input dimension differs from the model");
    }
  }

  VectorXd next(int t, const VectorXd& x, std::mt19937_64& rng) const {
    if (const auto* sig = std::get_if<InputSignal>(&src_)) return (*sig)[t];
    if (const auto* p = std::get_if<Policy>(&src_)) return p->eval(x);
    return sample_box(U_, rng);
  }

 private:
  const InputSource& src_;
  Box U_;
};

VectorXd eval_all(const std::vector<Polynomial>& ps, const VectorXd& x) {
  VectorXd v(ps.size());
  for (size_t i = 0; i < ps.size(); ++i) v[i] = ps[i].eval(x);
  return v;
}

}  // namespace

Trajectory simulate_unlifted(const UnliftedSystem& sys, const VectorXd& x0, const InputSource& input, int T,
                             std::uint64_t seed) {
  check_x0(sys.X, x0);
  InputStream in(input, sys.U, T);
  std::mt19937_64 rng(seed);
  Trajectory tr;
  tr.x.push_back(x0);
  for (int t = 0; t < T; ++t) {
    const VectorXd u = in.next(t, tr.x.back(), rng);
    const VectorXd xn = sys.step(tr.x.back(), u);
    if (!sys.X.contains(xn)) {
      tr.termination = Termination::domain_exit;
      return tr;
    }
    tr.u.push_back(u);
    tr.x.push_back(xn);
  }
  return tr;
}

Trajectory simulate_lifted(const AffineLiftedSystem& sys, const VectorXd& x0, const InputSource& input,
                           const DisturbanceSampler& disturbance, int T, std::uint64_t seed) {
  check_x0(sys.X, x0);
  if (disturbance.dim() != sys.n_y()) throw InputError("disturbance dimension differs from n_y");
  InputStream in(input, sys.U, T);
  std::mt19937_64 rng(seed);
  Trajectory tr;
  tr.y.push_back(lift(sys, x0));
  tr.x.push_back(x0);
  for (int t = 0; t < T; ++t) {
    const VectorXd u = in.next(t, tr.x.back(), rng);
    const VectorXd yn = sys.A * tr.y.back() + sys.B * u + disturbance.draw(t, rng);
    const VectorXd xn = yn.head(sys.n_x);
    if (!sys.X.contains(xn)) {
      tr.termination = Termination::domain_exit;
      return tr;
    }
    tr.u.push_back(u);
    tr.y.push_back(yn);
    tr.x.push_back(xn);
  }
  return tr;
}

namespace {

void check_trajectory(const AffineLiftedSystem& Z, const Trajectory& traj) {
  if (traj.x.empty() || traj.u.size() + 1 != traj.x.size())
    throw InputError("trajectory needs |u| = |x| - 1 >= 0");
  for (const auto& x : traj.x)
    if (x.size() != Z.n_x) throw InputError("trajectory state dimension differs from the model");
  for (const auto& u : traj.u)
    if (u.size() != Z.n_u) throw InputError("trajectory input dimension differs from the model");
}

TrajectoryContainment psi_inverse(const AffineLiftedSystem& Z, const Trajectory& traj, double tol) {
  const HPolytope W = Z.W.normalized();
  TrajectoryContainment out;
  VectorXd z = eval_all(Z.lifting, traj.x[0]);
  for (int t = 0; t < traj.steps(); ++t) {
    const VectorXd zn = eval_all(Z.lifting, traj.x[t + 1]);
    const double r = std::max(0.0, W.violation(zn - Z.A * z - Z.B * traj.u[t]));
    out.max_residual = std::max(out.max_residual, r);
    if (r > tol && out.first_failing_step < 0) out.first_failing_step = t + 1;
    z = zn;
  }
  out.contained = out.first_failing_step < 0;
  return out;
}

/// Margin program: maximize the common slack m of z+ - A z - B u in W_Z and
/// y - R z+ in {0} x W_rho. Returns (-m, z+); -m is kInf if the solve fails.
std::pair<double, VectorXd> witness_step(const AffineLiftedSystem& Z, const HPolytope& WZ, const MatrixXd& R,
                                         const HPolytope* Wr, const VectorXd& base, const VectorXd& y) {
  const int nz = Z.n_y(), nx = Z.n_x;
  ConicProblem prob;
  const auto z = prob.add_variables(nz);
  const VarId m = prob.add_variable(-kInf, kInf, "margin");
  auto zexpr = [&](int i) { return AffineExpr::var(z[i]); };
  for (int r = 0; r < WZ.rows(); ++r) {
    AffineExpr row = AffineExpr::var(m);
    for (int j = 0; j < nz; ++j)
      if (WZ.H(r, j) != 0.0) row += WZ.H(r, j) * (zexpr(j) - base[j]);
    prob.add_le(row, AffineExpr(WZ.h[r]));
  }
  std::vector<AffineExpr> rz(R.rows());
  for (int i = 0; i < R.rows(); ++i) {
    rz[i] = AffineExpr(0.0);
    for (int j = 0; j < nz; ++j)
      if (R(i, j) != 0.0) rz[i] += R(i, j) * zexpr(j);
  }
  for (int i = 0; i < nx; ++i) prob.add_equality(rz[i] - y[i]);
  if (Wr) {
    for (int r = 0; r < Wr->rows(); ++r) {
      AffineExpr row = AffineExpr::var(m);
      for (int k = 0; k < Wr->dim(); ++k)
        if (Wr->H(r, k) != 0.0) row += Wr->H(r, k) * (AffineExpr(y[nx + k]) - rz[nx + k]);
      prob.add_le(row, AffineExpr(Wr->h[r]));
    }
  }
  prob.set_objective(-1.0 * AffineExpr::var(m));
  const SolveResult res = solve(prob, SolverOptions{});
  if (!res.optimal()) return {kInf, VectorXd()};
  VectorXd zn(nz);
  for (int i = 0; i < nz; ++i) zn[i] = res.value(z[i]);
  return {-res.value(m), zn};
}

TrajectoryContainment certificate(const AffineLiftedSystem& Z, const Trajectory& traj, const CertificateMode& cm,
                                  double tol) {
  if (!cm.Y) throw InputError("certificate mode needs the simulated system Y");
  const AffineLiftedSystem& Y = *cm.Y;
  const MatrixXd& R = cm.cert.R;
  if (Y.n_x != Z.n_x || R.rows() != Y.n_y() || R.cols() != Z.n_y())
    throw InputError("certificate shape does not match the systems");
  const int nx = Z.n_x, nb = Y.n_bar();
  std::vector<VectorXd> ys = traj.y;
  if (ys.empty())
    for (const auto& x : traj.x) ys.push_back(eval_all(Y.lifting, x));
  if (ys.size() != traj.x.size()) throw InputError("trajectory y and x lengths differ");
  for (const auto& y : ys)
    if (y.size() != Y.n_y()) throw InputError("trajectory y dimension differs from n_Y");

  std::optional<HPolytope> Wr;
  if (nb > 0) {
    if (const Box* b = std::get_if<Box>(&cm.cert.W_rho)) Wr = b->to_h().normalized();
    else Wr = facets(std::get<VPolytope>(cm.cert.W_rho)).normalized();
  }
  const HPolytope WZ = Z.W.normalized();
  TrajectoryContainment out;
  auto record = [&](int step, double r) {
    out.max_residual = std::max(out.max_residual, std::max(0.0, r));
    if (r > tol && out.first_failing_step < 0) out.first_failing_step = step;
  };
  // Initial state: y(0) in R psi_Z(x(0)) + {0} x W_rho.
  VectorXd z = eval_all(Z.lifting, traj.x[0]);
  const VectorXd gap = ys[0] - R * z;
  double r0 = gap.head(nx).lpNorm<Eigen::Infinity>();
  if (Wr) r0 = std::max(r0, Wr->violation(gap.tail(nb)));
  record(0, r0);
  out.witness.push_back(z);
  for (int t = 0; t < traj.steps() && out.first_failing_step < 0; ++t) {
    const VectorXd base = Z.A * z + Z.B * traj.u[t];
    auto [r, zn] = witness_step(Z, WZ, R, Wr ? &*Wr : nullptr, base, ys[t + 1]);
    record(t + 1, r);
    if (!std::isfinite(r)) break;
    z = zn;
    out.witness.push_back(z);
  }
  out.contained = out.first_failing_step < 0;
  return out;
}

}  // namespace

TrajectoryContainment contains_trajectory(const AffineLiftedSystem& Z, const Trajectory& traj,
                                          const ContainmentMode& mode, double tol) {
  check_trajectory(Z, traj);
  if (std::holds_alternative<PsiInverseMode>(mode)) return psi_inverse(Z, traj, tol);
  return certificate(Z, traj, std::get<CertificateMode>(mode), tol);
}

std::uint64_t trajectory_seed(std::uint64_t master, int k) {
  // splitmix64 of the pair
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(k) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

/// Open-loop inputs from a sub-range are produced as a presampled signal.
InputSource input_for(const MonteCarloOptions& opts, const Box& U, std::uint64_t seed) {
  if (opts.policy) return *opts.policy;
  if (!opts.input_range) return RandomInputs{};
  const Box& r = *opts.input_range;
  if (r.dim() != U.dim() || !U.contains(r.lower, 0.0) || !U.contains(r.upper, 0.0) || !r.nonempty())
    throw InputError("input_range must be a nonempty box inside U");
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  InputSignal sig;
  for (int t = 0; t < opts.T; ++t) sig.push_back(sample_box(r, rng));
  return sig;
}

template <class Simulate, class Check>
ContainmentReport run_batch(const StateSet& X, const Box& U, const MonteCarloOptions& opts, Simulate simulate,
                            Check check) {
  const auto t0 = std::chrono::steady_clock::now();
  ContainmentReport rep;
  for (int k = 0; k < opts.n; ++k) {
    const std::uint64_t seed = trajectory_seed(opts.seed, k);
    std::mt19937_64 rng(seed);
    const VectorXd x0 = sample_state(X, rng);
    const Trajectory tr = simulate(x0, input_for(opts, U, seed), seed + 1);
    const TrajectoryContainment c = check(tr);
    ++rep.n_trajectories;
    rep.total_steps += tr.steps();
    if (tr.termination == Termination::domain_exit) ++rep.n_domain_exits;
    rep.max_residual = std::max(rep.max_residual, c.max_residual);
    if (c.contained) ++rep.n_contained;
    else rep.failures.push_back({k, c.first_failing_step, c.max_residual});
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace

ContainmentReport monte_carlo_containment(const UnliftedSystem& source, const AffineLiftedSystem& Z,
                                          const MonteCarloOptions& opts) {
  if (source.n_x != Z.n_x || source.n_u != Z.n_u) throw InputError("source and lifted system dimensions differ");
  return run_batch(
      source.X, source.U, opts,
      [&](const VectorXd& x0, const InputSource& in, std::uint64_t s) {
        return simulate_unlifted(source, x0, in, opts.T, s);
      },
      [&](const Trajectory& tr) { return contains_trajectory(Z, tr, PsiInverseMode{}, opts.tol); });
}

ContainmentReport monte_carlo_containment(const AffineLiftedSystem& Y, const AffineLiftedSystem& Z,
                                          const RefinementCertificate& cert, const MonteCarloOptions& opts) {
  const DisturbanceSampler dist = DisturbanceSampler::uniform(Y.W, opts.vertex_every);
  const CertificateMode mode{&Y, cert};
  return run_batch(
      Y.X, Y.U, opts,
      [&](const VectorXd& x0, const InputSource& in, std::uint64_t s) {
        return simulate_lifted(Y, x0, in, dist, opts.T, s);
      },
      [&](const Trajectory& tr) { return contains_trajectory(Z, tr, mode, opts.tol); });
}

json to_json(const ContainmentReport& r) {
  json fails = json::array();
  for (const auto& f : r.failures)
    fails.push_back(json{{"trajectory", f.trajectory}, {"step", f.step},
                         {"residual", std::isfinite(f.residual) ? json(f.residual) : json(nullptr)}});
  return json{{"n_trajectories", r.n_trajectories},
              {"n_contained", r.n_contained},
              {"n_domain_exits", r.n_domain_exits},
              {"total_steps", r.total_steps},
              {"max_residual", std::isfinite(r.max_residual) ? json(r.max_residual) : json(nullptr)},
              {"failures", fails}};
}

}  // namespace liftsim
