#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "liftsim/duffing_data.hpp"
#include "liftsim/errors.hpp"
#include "liftsim/synthesis.hpp"

namespace liftsim {
namespace {

UnliftedSystem duffing() { return parse_unlifted(parse_json_text(data::kDuffingModel)); }

std::vector<Polynomial> psi(int i) {
  const char* docs[] = {data::kDuffingPsi1, data::kDuffingPsi2, data::kDuffingPsi3};
  return parse_lifting(parse_json_text(docs[i - 1]), 2);
}

// 1D system x+ = c x (input unused) on X = U = [-1, 1].
UnliftedSystem scalar_system(double c) {
  UnliftedSystem s;
  s.n_x = 1;
  s.n_u = 1;
  s.variables = {"x", "u"};
  Polynomial f(2);
  if (c != 0.0) f = c * Polynomial::variable(2, 0);
  s.dynamics = {f};
  const Box unit(Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 1.0));
  s.X = StateSet::from_box(unit);
  s.U = unit;
  s.generators = halfspace_generators(Box(Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1)).to_h());
  validate(s);
  return s;
}

const SynthesisResult& duffing_result(int i) {
  static std::map<int, SynthesisResult> cache;
  auto it = cache.find(i);
  if (it == cache.end()) {
    SynthesisRequest req;
    req.system = duffing();
    req.lifting = psi(i);
    it = cache.emplace(i, synthesize(req)).first;
  }
  return it->second;
}

TEST(BuildResidual, ScalarIdentity) {
  UnliftedSystem s = scalar_system(1.0);
  ConicProblem prob;
  auto vars = declare_residual_variables(prob, 1, 1, 2);
  Eigen::MatrixXd H(2, 1);
  H << 1, -1;
  auto res = build_residual(s, {Polynomial::variable(1, 0)}, H, vars);
  ASSERT_EQ(res.size(), 2u);
  // a = 0.3, b = -2, h = (0.7, 0.4)
  std::vector<double> v(prob.num_variables());
  v[vars.A[0][0]] = 0.3;
  v[vars.B[0][0]] = -2.0;
  v[vars.h[0]] = 0.7;
  v[vars.h[1]] = 0.4;
  const Polynomial x = Polynomial::variable(2, 0), u = Polynomial::variable(2, 1);
  const Polynomial inner = x - 0.3 * x + 2.0 * u;
  EXPECT_EQ(res[0].substitute(v), Polynomial::constant(2, 0.7) - inner);
  EXPECT_EQ(res[1].substitute(v), Polynomial::constant(2, 0.4) + inner);
}

TEST(BuildResidual, ZeroDynamics) {
  UnliftedSystem s = scalar_system(0.0);
  ConicProblem prob;
  auto vars = declare_residual_variables(prob, 1, 1, 2);
  Eigen::MatrixXd H(2, 1);
  H << 1, -1;
  auto res = build_residual(s, {Polynomial::variable(1, 0)}, H, vars);
  std::vector<double> v(prob.num_variables());
  v[vars.A[0][0]] = 1.5;
  v[vars.B[0][0]] = 0.5;
  const Polynomial x = Polynomial::variable(2, 0), u = Polynomial::variable(2, 1);
  const Polynomial inner = -1.5 * x - 0.5 * u;
  EXPECT_EQ(res[0].substitute(v), -inner);
  EXPECT_EQ(res[1].substitute(v), inner);
}

TEST(BuildResidual, DuffingPsi1IsCubic) {
  ConicProblem prob;
  auto vars = declare_residual_variables(prob, 2, 1, 4);
  SynthesisRequest req;
  req.lifting = psi(1);
  auto res = build_residual(duffing(), req.lifting, disturbance_template(req), vars);
  ASSERT_EQ(res.size(), 4u);
  EXPECT_EQ(res[0].degree(), 1);  // x+ = x + 0.1 xdot is linear
  EXPECT_EQ(res[2].degree(), 3);  // -0.2 x^3 term
  EXPECT_EQ(res[3].degree(), 3);
}

TEST(Synthesize, ExactlyLiftableSystem) {
  SynthesisRequest req;
  req.system = scalar_system(0.5);
  req.lifting = {Polynomial::variable(1, 0)};
  SynthesisResult r = synthesize(req);
  EXPECT_NEAR(r.lifted.A(0, 0), 0.5, 1e-6);
  EXPECT_NEAR(r.lifted.B(0, 0), 0.0, 1e-6);
  EXPECT_LE(r.objective, 1e-6);
  EXPECT_LE(r.final_l1, 1e-6);
}

TEST(Synthesize, RejectsLiftingWithoutPrefix) {
  SynthesisRequest req;
  req.system = duffing();
  req.lifting = psi(2);
  std::swap(req.lifting[0], req.lifting[2]);
  EXPECT_THROW(synthesize(req), AssumptionError);
}

class DuffingSynthesis : public ::testing::TestWithParam<int> {};

TEST_P(DuffingSynthesis, FeasibleAndSound) {
  const SynthesisResult& r = duffing_result(GetParam());
  EXPECT_EQ(r.lifted.n_y(), GetParam() + 1);
  EXPECT_TRUE(std::isfinite(r.objective));
  EXPECT_EQ(r.certificates.size(), static_cast<size_t>(2 * r.lifted.n_y()));
  for (const auto& c : r.certificates) EXPECT_LE(c.residual, 1e-6);
  EXPECT_LE(r.seconds, 300.0);
  SoundnessReport rep = sample_soundness(duffing(), r.lifted, 1000, 42 + GetParam());
  EXPECT_EQ(rep.n_samples, 1000);
  EXPECT_EQ(rep.n_violations, 0) << "max violation " << rep.max_violation;
}

TEST_P(DuffingSynthesis, EquilibriumResidualInW) {
  const SynthesisResult& r = duffing_result(GetParam());
  EXPECT_LE(residual_violation(duffing(), r.lifted, Eigen::Vector2d(1, 0), Eigen::VectorXd::Zero(1)), 1e-6);
}

TEST_P(DuffingSynthesis, CorruptedModelIsCaught) {
  AffineLiftedSystem bad = duffing_result(GetParam()).lifted;
  bad.A(0, 0) += 1.0;
  SoundnessReport rep = sample_soundness(duffing(), bad, 1000, 7);
  EXPECT_GT(rep.n_violations, 0);
  EXPECT_GT(rep.max_violation, 1e-6);
}

TEST_P(DuffingSynthesis, FixedOffsetsStayFeasible) {
  const SynthesisResult& r = duffing_result(GetParam());
  RecertifyReport rep = certify_lifted(duffing(), r.lifted, r.mult_degree);
  EXPECT_TRUE(rep.feasible) << rep.message;
  EXPECT_LE(rep.max_shift, 1e-6);
  EXPECT_EQ(rep.certificates.size(), r.certificates.size());
}

TEST(Synthesize, RecertifyDetectsShrunkOffsets) {
  AffineLiftedSystem bad = duffing_result(2).lifted;
  bad.W.h[3] -= 0.1;
  RecertifyReport rep = certify_lifted(duffing(), bad, 2);
  EXPECT_FALSE(rep.feasible);
  EXPECT_NEAR(rep.max_shift, 0.1, 1e-5);
}

INSTANTIATE_TEST_SUITE_P(Liftings, DuffingSynthesis, ::testing::Values(1, 2, 3));

}  // namespace
}  // namespace liftsim
