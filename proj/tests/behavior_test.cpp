#include <map>

#include <gtest/gtest.h>

#include "liftsim/behavior.hpp"
#include "liftsim/duffing_data.hpp"
#include "liftsim/errors.hpp"
#include "liftsim/synthesis.hpp"

namespace liftsim {
namespace {

using Eigen::VectorXd;

const UnliftedSystem& duffing() {
  static const UnliftedSystem sys = parse_unlifted(parse_json_text(data::kDuffingModel));
  return sys;
}

const AffineLiftedSystem& duffing_lifted(int i) {
  static std::map<int, AffineLiftedSystem> cache;
  auto it = cache.find(i);
  if (it == cache.end()) {
    const char* docs[] = {data::kDuffingPsi1, data::kDuffingPsi2, data::kDuffingPsi3};
    SynthesisRequest req;
    req.system = duffing();
    req.lifting = parse_lifting(parse_json_text(docs[i - 1]), 2);
    it = cache.emplace(i, synthesize(req).lifted).first;
  }
  return it->second;
}

Policy make_policy(const Polynomial& p) {
  Policy pol;
  pol.pi = {p};
  pol.U = duffing().U;
  return pol;
}

std::vector<Policy> test_policies() {
  const Polynomial x = Polynomial::variable(2, 0), xd = Polynomial::variable(2, 1);
  return {make_policy(-10.0 * xd), make_policy(-20.0 * x - 5.0 * xd), make_policy(2.0 * (x * x * x) - 2.0 * x)};
}

VectorXd v2(double a, double b) { return Eigen::Vector2d(a, b); }
InputSignal constant_input(double u, int T) { return InputSignal(T, VectorXd::Constant(1, u)); }

TEST(SimulateUnlifted, EquilibriaStayPut) {
  for (VectorXd x0 : {v2(1, 0), v2(0, 0), v2(-1, 0)}) {
    const Trajectory tr = simulate_unlifted(duffing(), x0, constant_input(0.0, 20), 20, 0);
    EXPECT_EQ(tr.termination, Termination::horizon_reached);
    ASSERT_EQ(tr.x.size(), 21u);
    for (const auto& x : tr.x) EXPECT_LT((x - x0).norm(), 1e-14);
  }
}

TEST(SimulateUnlifted, LeavesDomainOnFirstStep) {
  // Hand computation: next xdot = 0.2*2 + 0.95*3 + 0.1*50 - 0.2*8 = 6.65 > 3.
  EXPECT_NEAR(duffing().step(v2(2, 3), VectorXd::Constant(1, 50.0))[1], 6.65, 1e-12);
  const Trajectory tr = simulate_unlifted(duffing(), v2(2, 3), constant_input(50.0, 5), 5, 0);
  EXPECT_EQ(tr.termination, Termination::domain_exit);
  EXPECT_EQ(tr.x.size(), 1u);
  EXPECT_TRUE(tr.u.empty());
}

TEST(SimulateUnlifted, RejectsBadArguments) {
  EXPECT_THROW(simulate_unlifted(duffing(), v2(3, 0), RandomInputs{}, 5, 0), InputError);
  EXPECT_THROW(simulate_unlifted(duffing(), v2(0, 0), constant_input(0.0, 3), 5, 0), InputError);
  EXPECT_THROW(simulate_unlifted(duffing(), v2(0, 0), constant_input(60.0, 5), 5, 0), InputError);
}

TEST(SimulateUnlifted, MaximalityBookkeeping) {
  const auto policies = test_policies();
  std::mt19937_64 rng(5);
  int exits = 0;
  for (int k = 0; k < 200; ++k) {
    const Policy& p = policies[k % policies.size()];
    const VectorXd x0 = sample_state(duffing().X, rng);
    const Trajectory tr = simulate_unlifted(duffing(), x0, p, 20, k);
    ASSERT_EQ(tr.u.size() + 1, tr.x.size());
    for (const auto& x : tr.x) EXPECT_TRUE(duffing().X.contains(x));
    const bool next_leaves = !duffing().X.contains(duffing().step(tr.x.back(), p.eval(tr.x.back())));
    if (tr.termination == Termination::domain_exit) {
      ++exits;
      EXPECT_TRUE(next_leaves);
      EXPECT_LT(tr.steps(), 20);
    } else {
      EXPECT_EQ(tr.steps(), 20);
    }
  }
  EXPECT_GT(exits, 0);
}

TEST(SimulateLifted, ExactLiftWithoutDisturbanceMatchesSource) {
  UnliftedSystem s;
  s.n_x = 1;
  s.n_u = 1;
  s.variables = {"x", "u"};
  s.dynamics = {0.5 * Polynomial::variable(2, 0)};
  const Box unit(VectorXd::Constant(1, -1.0), VectorXd::Constant(1, 1.0));
  s.X = StateSet::from_box(unit);
  s.U = unit;
  s.generators = halfspace_generators(Box(Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1)).to_h());
  SynthesisRequest req;
  req.system = s;
  req.lifting = {Polynomial::variable(1, 0)};
  const AffineLiftedSystem L = synthesize(req).lifted;
  const VectorXd x0 = VectorXd::Constant(1, 0.8);
  const Trajectory a = simulate_unlifted(s, x0, RandomInputs{}, 10, 3);
  const Trajectory b = simulate_lifted(L, x0, RandomInputs{}, DisturbanceSampler::zero(1), 10, 3);
  ASSERT_EQ(a.x.size(), b.x.size());
  for (size_t t = 0; t < a.x.size(); ++t) EXPECT_NEAR(a.x[t][0], b.x[t][0], 1e-8);
  EXPECT_EQ(a.u, b.u);
}

TEST(SimulateLifted, OutputsStayInDomainAndRunsReproduce) {
  const auto& L = duffing_lifted(3);
  const auto dist = DisturbanceSampler::uniform(L.W);
  std::mt19937_64 rng(11);
  for (int k = 0; k < 50; ++k) {
    const VectorXd x0 = sample_state(L.X, rng);
    const Trajectory a = simulate_lifted(L, x0, RandomInputs{}, dist, 20, k);
    const Trajectory b = simulate_lifted(L, x0, RandomInputs{}, dist, 20, k);
    ASSERT_EQ(a.y.size(), a.x.size());
    for (const auto& x : a.x) EXPECT_TRUE(L.X.contains(x));
    for (size_t t = 0; t < a.y.size(); ++t) {
      EXPECT_EQ(a.y[t], b.y[t]);
      EXPECT_EQ(a.x[t], a.y[t].head(2));
    }
  }
}

TEST(DisturbanceSampler, DrawsLieInW) {
  const auto& L = duffing_lifted(2);
  const auto dist = DisturbanceSampler::uniform(L.W, 3);
  std::mt19937_64 rng(1);
  for (int t = 0; t < 300; ++t) EXPECT_TRUE(L.W.contains(dist.draw(t, rng), 1e-12));
  // Every third draw is a vertex of the box template: all bounds active.
  const VectorXd v = dist.draw(2, rng);
  const HPolytope Wn = L.W.normalized();
  EXPECT_NEAR((Wn.h - Wn.H * v).cwiseAbs().minCoeff(), 0.0, 1e-9);
}

TEST(ContainsTrajectory, EquilibriumResidualMatchesDirectMembership) {
  const auto& L = duffing_lifted(1);
  const Trajectory tr = simulate_unlifted(duffing(), v2(1, 0), constant_input(0.0, 3), 3, 0);
  const TrajectoryContainment c = contains_trajectory(L, tr, PsiInverseMode{});
  const VectorXd y = lift(L, v2(1, 0));
  const VectorXd w = y - L.A * y;
  EXPECT_EQ(c.contained, L.W.contains(w, 1e-6));
  EXPECT_TRUE(c.contained);
  EXPECT_NEAR(c.max_residual, std::max(0.0, L.W.normalized().violation(w)), 1e-15);
}

class DuffingMonteCarlo : public ::testing::TestWithParam<int> {};

TEST_P(DuffingMonteCarlo, OpenLoopPsiInverse) {
  MonteCarloOptions opts;
  const ContainmentReport rep = monte_carlo_containment(duffing(), duffing_lifted(GetParam()), opts);
  EXPECT_EQ(rep.n_trajectories, 100);
  EXPECT_EQ(rep.n_contained, 100);
  EXPECT_LE(rep.max_residual, 1e-6);
  EXPECT_GT(rep.total_steps, 0);
}

TEST_P(DuffingMonteCarlo, OpenLoopSmallInputsPsiInverse) {
  // Inputs on all of U leave X within a step or two; a narrower range gives
  // long open-loop trajectories.
  MonteCarloOptions opts;
  opts.input_range = Box(VectorXd::Constant(1, -2.0), VectorXd::Constant(1, 2.0));
  const ContainmentReport rep = monte_carlo_containment(duffing(), duffing_lifted(GetParam()), opts);
  EXPECT_EQ(rep.n_contained, 100);
  EXPECT_GT(rep.total_steps, 1000);
}

TEST_P(DuffingMonteCarlo, ClosedLoopPsiInverse) {
  for (const Policy& p : test_policies()) {
    MonteCarloOptions opts;
    opts.policy = p;
    const ContainmentReport rep = monte_carlo_containment(duffing(), duffing_lifted(GetParam()), opts);
    EXPECT_EQ(rep.n_contained, 100);
    EXPECT_GT(rep.total_steps, 500);
  }
}

TEST_P(DuffingMonteCarlo, ShrunkDisturbanceSetIsCaught) {
  AffineLiftedSystem bad = duffing_lifted(GetParam());
  bad.W.h *= 0.1;
  const ContainmentReport rep = monte_carlo_containment(duffing(), bad, MonteCarloOptions{});
  EXPECT_LT(rep.n_contained, 100);
  ASSERT_FALSE(rep.failures.empty());
  EXPECT_GT(rep.failures[0].residual, 1e-6);
  MonteCarloOptions closed;
  closed.policy = test_policies()[0];
  EXPECT_LT(monte_carlo_containment(duffing(), bad, closed).n_contained, 100);
  EXPECT_GE(rep.failures[0].step, 1);
}

INSTANTIATE_TEST_SUITE_P(Lifting, DuffingMonteCarlo, ::testing::Values(1, 2, 3));

TEST(MonteCarlo, DeterministicGivenSeed) {
  MonteCarloOptions opts;
  opts.n = 20;
  opts.seed = 42;
  const auto a = to_json(monte_carlo_containment(duffing(), duffing_lifted(2), opts));
  const auto b = to_json(monte_carlo_containment(duffing(), duffing_lifted(2), opts));
  EXPECT_EQ(a.dump(), b.dump());
  EXPECT_NE(trajectory_seed(42, 0), trajectory_seed(42, 1));
  EXPECT_NE(trajectory_seed(42, 0), trajectory_seed(43, 0));
}

TEST(CertificateMode, ReflexiveCertificateContainsOwnTrajectories) {
  const auto& L = duffing_lifted(2);
  MonteCarloOptions opts;
  opts.n = 30;
  const ContainmentReport rep = monte_carlo_containment(L, L, identity_certificate(L), opts);
  EXPECT_EQ(rep.n_contained, 30);
}

TEST(CertificateMode, VerifiedPairAllWitnessesFound) {
  const auto& Y = duffing_lifted(3);
  const AffineLiftedSystem Z = inflate(duffing_lifted(2), 10.0);
  const VerificationOutcome out = verify(Y, Z, {});
  ASSERT_EQ(out.status, VerifyStatus::verified);
  MonteCarloOptions opts;
  const ContainmentReport open = monte_carlo_containment(Y, Z, *out.certificate, opts);
  EXPECT_EQ(open.n_contained, 100);
  EXPECT_LT(open.seconds, 60.0);
  for (const Policy& p : test_policies()) {
    opts.policy = p;
    const ContainmentReport rep = monte_carlo_containment(Y, Z, *out.certificate, opts);
    EXPECT_EQ(rep.n_contained, 100);
    EXPECT_GT(rep.total_steps, 500);
  }
}

TEST(CertificateMode, WitnessSatisfiesEveryStepDirectly) {
  const auto& Y = duffing_lifted(3);
  const AffineLiftedSystem Z = inflate(duffing_lifted(1), 10.0);
  const VerificationOutcome out = verify(Y, Z, {});
  ASSERT_EQ(out.status, VerifyStatus::verified);
  const RefinementCertificate& cert = *out.certificate;
  const Box Wr = std::get<Box>(cert.W_rho);
  const auto dist = DisturbanceSampler::uniform(Y.W);
  std::mt19937_64 rng(8);
  const Policy p = test_policies()[1];
  int checked = 0;
  for (int k = 0; k < 20; ++k) {
    const Trajectory tr = simulate_lifted(Y, sample_state(Y.X, rng), p, dist, 20, k);
    const TrajectoryContainment c = contains_trajectory(Z, tr, CertificateMode{&Y, cert});
    ASSERT_TRUE(c.contained);
    ASSERT_EQ(c.witness.size(), tr.y.size());
    for (size_t t = 0; t < tr.y.size(); ++t) {
      const VectorXd gap = tr.y[t] - cert.R * c.witness[t];
      EXPECT_LT(gap.head(2).lpNorm<Eigen::Infinity>(), 1e-7);
      EXPECT_TRUE(Wr.contains(gap.tail(2), 1e-6));
      if (t > 0) {
        const VectorXd w = c.witness[t] - Z.A * c.witness[t - 1] - Z.B * tr.u[t - 1];
        EXPECT_TRUE(Z.W.contains(w, 1e-6));
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 100);
}

TEST(CertificateMode, InvalidCertificateFailsSomewhere) {
  const auto& Y = duffing_lifted(3);
  const auto& Z = duffing_lifted(3);
  // Identity certificate into a shrunk target: W_Z no longer covers W_Y.
  AffineLiftedSystem small = Z;
  small.W.h *= 0.5;
  MonteCarloOptions opts;
  opts.n = 20;
  const ContainmentReport rep = monte_carlo_containment(Y, small, identity_certificate(Y), opts);
  EXPECT_LT(rep.n_contained, 20);
}

TEST(CertificateMode, DimensionMismatchThrows) {
  const auto& Y = duffing_lifted(3);
  const Trajectory tr = simulate_unlifted(duffing(), v2(0, 0), constant_input(0.0, 2), 2, 0);
  RefinementCertificate bad = identity_certificate(duffing_lifted(2));
  EXPECT_THROW(contains_trajectory(Y, tr, CertificateMode{&Y, bad}), InputError);
  Trajectory broken = tr;
  broken.u.pop_back();
  EXPECT_THROW(contains_trajectory(Y, broken, PsiInverseMode{}), InputError);
}

}  // namespace
}  // namespace liftsim
