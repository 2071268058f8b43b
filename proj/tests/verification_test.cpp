#include <map>
#include <random>

#include <gtest/gtest.h>

#include "liftsim/duffing_data.hpp"
#include "liftsim/errors.hpp"
#include "liftsim/synthesis.hpp"
#include "liftsim/verification.hpp"

namespace liftsim {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

const AffineLiftedSystem& duffing_lifted(int i) {
  static std::map<int, AffineLiftedSystem> cache;
  auto it = cache.find(i);
  if (it == cache.end()) {
    const char* docs[] = {data::kDuffingPsi1, data::kDuffingPsi2, data::kDuffingPsi3};
    SynthesisRequest req;
    req.system = parse_unlifted(parse_json_text(data::kDuffingModel));
    req.lifting = parse_lifting(parse_json_text(docs[i - 1]), 2);
    it = cache.emplace(i, synthesize(req).lifted).first;
  }
  return it->second;
}

AffineLiftedSystem inflated(int i, double delta = 10.0) { return inflate(duffing_lifted(i), delta); }

const VerificationOutcome& inflated_outcome(int i, int j) {
  static std::map<std::pair<int, int>, VerificationOutcome> cache;
  auto key = std::make_pair(i, j);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, verify(duffing_lifted(i), inflated(j), {})).first;
  return it->second;
}

// (A_Y R - R A_Z) restricted to the lifted columns of Z, plus the output rows.
double homogeneous_defect(const AffineLiftedSystem& Y, const AffineLiftedSystem& Z, const MatrixXd& R,
                          const MatrixXd& prefix) {
  const int nx = Y.n_x;
  const MatrixXd D = Y.A * R - R * Z.A;
  double d = (R.topRows(nx) - prefix).lpNorm<Eigen::Infinity>();
  if (Z.n_y() > nx) d = std::max(d, D.rightCols(Z.n_y() - nx).lpNorm<Eigen::Infinity>());
  return d;
}

TEST(SolveR, IdentityLiesInSolutionSet) {
  const auto& Y = duffing_lifted(3);
  const RSolution rs = solve_R(Y, Y);
  ASSERT_TRUE(rs.solvable);
  // Project I - R0 onto the (orthonormal) nullspace basis; nothing may remain.
  MatrixXd gap = MatrixXd::Identity(Y.n_y(), Y.n_y()) - rs.R0;
  for (const auto& N : rs.basis) gap -= (N.array() * gap.array()).sum() * N;
  EXPECT_LT(gap.lpNorm<Eigen::Infinity>(), 1e-9);
}

TEST(SolveR, EveryParameterSatisfiesTheLinearConditions) {
  for (auto [i, j] : {std::pair{3, 1}, {3, 2}, {2, 1}, {2, 2}}) {
    const auto& Y = duffing_lifted(i);
    const auto& Z = duffing_lifted(j);
    const RSolution rs = solve_R(Y, Z);
    ASSERT_TRUE(rs.solvable) << i << j;
    MatrixXd prefix = MatrixXd::Zero(Y.n_x, Z.n_y());
    prefix.leftCols(Y.n_x).setIdentity();
    std::mt19937_64 rng(i * 10 + j);
    std::normal_distribution<double> normal(0.0, 3.0);
    for (int t = 0; t < 20; ++t) {
      MatrixXd R = rs.R0;
      for (const auto& N : rs.basis) R += normal(rng) * N;
      EXPECT_LT(homogeneous_defect(Y, Z, R, prefix), 1e-9) << i << j;
    }
    for (const auto& N : rs.basis)
      EXPECT_LT(homogeneous_defect(Y, Z, N, MatrixXd::Zero(Y.n_x, Z.n_y())), 1e-9);
  }
}

TEST(SolveR, NoLiftedRowsForcesOutputProjection) {
  const RSolution rs = solve_R(duffing_lifted(1), duffing_lifted(2));
  ASSERT_TRUE(rs.solvable);
  EXPECT_TRUE(rs.basis.empty());
  MatrixXd expect = MatrixXd::Zero(2, duffing_lifted(2).n_y());
  expect.leftCols(2).setIdentity();
  EXPECT_LT((rs.R0 - expect).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(SolveR, UnsolvableWhenTargetCouplesStateToLiftedCoordinates) {
  const auto& Y = duffing_lifted(1);
  const auto& Z = duffing_lifted(3);
  const RSolution rs = solve_R(Y, Z);
  EXPECT_FALSE(rs.solvable);
  // With n_Y = n_x there are no unknowns, so the residual is the largest
  // coefficient of a lifted coordinate in Z's state rows.
  const double oracle = Z.A.topRightCorner(2, Z.n_y() - 2).lpNorm<Eigen::Infinity>();
  EXPECT_NEAR(rs.residual, oracle, 1e-12);
  EXPECT_GT(oracle, 0.1);
  const VerificationOutcome out = verify(Y, inflate(Z, 10.0), {});
  EXPECT_EQ(out.status, VerifyStatus::inconclusive);
  EXPECT_EQ(out.solves, 0);
}

// Minimal lifted system for solve_R: only n_x, the lifting count and A matter.
AffineLiftedSystem with_dynamics(const MatrixXd& A, int n_x) {
  AffineLiftedSystem s;
  s.n_x = n_x;
  s.n_u = 1;
  for (int i = 0; i < A.rows(); ++i) s.lifting.push_back(Polynomial::variable(n_x, 0));
  s.A = A;
  s.B = MatrixXd::Zero(A.rows(), 1);
  return s;
}

TEST(SolveR, SolvabilityMatchesBruteForceRankOracle) {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> entry(-1, 1);
  int solvable = 0, unsolvable = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int nx = 1 + trial % 2, ny = nx + 1 + trial % 3, nz = nx + 1 + (trial / 3) % 3;
    const MatrixXd AY = MatrixXd::NullaryExpr(ny, ny, [&] { return double(entry(rng)); });
    const MatrixXd AZ = MatrixXd::NullaryExpr(nz, nz, [&] { return double(entry(rng)); });
    const auto Y = with_dynamics(AY, nx), Z = with_dynamics(AZ, nx);
    // Residual of the lifted-column condition as an affine map of the free rows.
    const int unknowns = (ny - nx) * nz;
    auto F = [&](const VectorXd& r) {
      MatrixXd R = MatrixXd::Zero(ny, nz);
      R.topLeftCorner(nx, nx).setIdentity();
      R.bottomRows(ny - nx) = Eigen::Map<const MatrixXd>(r.data(), ny - nx, nz);
      const MatrixXd D = (AY * R - R * AZ).rightCols(nz - nx);
      return VectorXd(Eigen::Map<const VectorXd>(D.data(), D.size()));
    };
    const VectorXd f0 = F(VectorXd::Zero(unknowns));
    MatrixXd M(f0.size(), unknowns);
    for (int k = 0; k < unknowns; ++k) M.col(k) = F(VectorXd::Unit(unknowns, k)) - f0;
    MatrixXd Mg(M.rows(), unknowns + 1);
    Mg << M, -f0;
    Eigen::FullPivLU<MatrixXd> lu(M), lug(Mg);
    lu.setThreshold(1e-9);
    lug.setThreshold(1e-9);
    const bool oracle = lu.rank() == lug.rank();
    const RSolution rs = solve_R(Y, Z);
    EXPECT_EQ(rs.solvable, oracle) << trial;
    EXPECT_EQ(static_cast<int>(rs.basis.size()), unknowns - lu.rank()) << trial;
    oracle ? ++solvable : ++unsolvable;
  }
  EXPECT_GT(solvable, 20);
  EXPECT_GT(unsolvable, 20);
}

class DuffingChecks : public ::testing::TestWithParam<int> {};

TEST_P(DuffingChecks, Reflexivity) {
  const auto& Y = duffing_lifted(GetParam());
  const CertificateReport rep = check_certificate(Y, Y, identity_certificate(Y), {});
  EXPECT_TRUE(rep.pass) << rep.failure;
  EXPECT_LE(rep.residuals.output_rows, 1e-8);
  EXPECT_LE(rep.residuals.commutation, 1e-8);
  EXPECT_LE(rep.residuals.lifting, 1e-8);
  EXPECT_LE(rep.residuals.containment, 1e-8);
}

TEST_P(DuffingChecks, InflationMonotonicity) {
  const auto& Y = duffing_lifted(GetParam());
  const CertificateReport rep = check_certificate(Y, inflated(GetParam()), identity_certificate(Y), {});
  EXPECT_TRUE(rep.pass) << rep.failure;
  EXPECT_LE(rep.residuals.containment, 1e-8);
  // The reverse direction needs the larger disturbance set to fit inside.
  const CertificateReport back = check_certificate(inflated(GetParam()), Y, identity_certificate(Y), {});
  EXPECT_FALSE(back.pass);
  EXPECT_GT(back.residuals.containment, 1.0);
}

TEST_P(DuffingChecks, VerifyFindsReflexiveCertificate) {
  const auto& Y = duffing_lifted(GetParam());
  const VerificationOutcome out = verify(Y, Y, {});
  EXPECT_EQ(out.status, VerifyStatus::verified) << out.message;
}

INSTANTIATE_TEST_SUITE_P(Lifting, DuffingChecks, ::testing::Values(1, 2, 3));

class InflatedPair : public ::testing::TestWithParam<std::pair<int, int>> {};

TEST_P(InflatedPair, VerifiedWithRecheckedCertificate) {
  auto [i, j] = GetParam();
  const VerificationOutcome& out = inflated_outcome(i, j);
  ASSERT_EQ(out.status, VerifyStatus::verified) << out.message;
  ASSERT_TRUE(out.certificate.has_value());
  EXPECT_TRUE(out.check.pass);
  // Fresh check with a different sampling seed.
  VerifyOptions opts;
  opts.seed = 99;
  const CertificateReport rep = check_certificate(duffing_lifted(i), inflated(j), *out.certificate, opts);
  EXPECT_TRUE(rep.pass) << rep.failure;
  for (double r : {rep.residuals.output_rows, rep.residuals.lifting, rep.residuals.containment,
                   rep.residuals.commutation})
    EXPECT_LE(r, 1e-7);
}

TEST_P(InflatedPair, PerturbedCertificateFails) {
  auto [i, j] = GetParam();
  const VerificationOutcome& out = inflated_outcome(i, j);
  ASSERT_TRUE(out.certificate.has_value());
  const auto& Y = duffing_lifted(i);
  const auto Z = inflated(j);
  RefinementCertificate bad = *out.certificate;
  bad.R(0, 0) += 0.5;
  EXPECT_FALSE(check_certificate(Y, Z, bad, {}).pass);
  // Unit perturbations of the lifted rows. Those that break the commutation
  // condition (computed here directly) must fail; others may lie in the
  // nullspace and, with the inflated margins, stay valid. When Z has no
  // lifted columns no perturbation breaks it.
  MatrixXd prefix = MatrixXd::Zero(2, Z.n_y());
  prefix.leftCols(2).setIdentity();
  for (int k = 2; k < Y.n_y(); ++k)
    for (int c = 0; c < Z.n_y(); ++c) {
      RefinementCertificate lifted_row = *out.certificate;
      lifted_row.R(k, c) += 1.0;
      if (homogeneous_defect(Y, Z, lifted_row.R, prefix) <= 1e-6) continue;
      const CertificateReport rep = check_certificate(Y, Z, lifted_row, {});
      EXPECT_FALSE(rep.pass) << k << "," << c;
      EXPECT_GT(rep.residuals.commutation, 1e-8) << k << "," << c;
    }
  // A large change in an x column moves the lifting gap far outside W_rho.
  RefinementCertificate far = *out.certificate;
  far.R(2, 1) += 1e3;
  const CertificateReport rep = check_certificate(Y, Z, far, {});
  EXPECT_FALSE(rep.pass);
  EXPECT_GT(rep.residuals.lifting, 1.0);
  if (i != j) {
    // Collapsing W_rho to its center loses the lifting gap (for i == j the
    // gap can vanish identically, so the collapsed certificate stays valid).
    RefinementCertificate shrunk = *out.certificate;
    const Box b = std::get<Box>(shrunk.W_rho);
    shrunk.W_rho = Box(b.center(), b.center());
    const CertificateReport rep = check_certificate(Y, Z, shrunk, {});
    EXPECT_FALSE(rep.pass);
    EXPECT_GT(rep.residuals.lifting, 1e-3);
  }
}

INSTANTIATE_TEST_SUITE_P(Duffing, InflatedPair,
                         ::testing::Values(std::pair{2, 1}, std::pair{2, 2}, std::pair{3, 1},
                                           std::pair{3, 2}, std::pair{3, 3}),
                         [](const auto& info) {
                           return "Y" + std::to_string(info.param.first) + "_Z" + std::to_string(info.param.second);
                         });

TEST(Verify, UninflatedCrossPairsAreInconclusive) {
  for (auto [i, j] : {std::pair{1, 2}, {3, 1}}) {
    const VerificationOutcome out = verify(duffing_lifted(i), duffing_lifted(j), {});
    EXPECT_EQ(out.status, VerifyStatus::inconclusive) << i << j;
    EXPECT_FALSE(out.certificate.has_value());
    EXPECT_GT(out.final_slack, 1e-8);
    EXPECT_FALSE(out.message.empty());
  }
}

TEST(Verify, RejectsIncompatibleOrDegenerateSystems) {
  const auto& Y = duffing_lifted(2);
  AffineLiftedSystem other = duffing_lifted(1);
  other.U = Box(VectorXd::Constant(1, -1.0), VectorXd::Constant(1, 1.0));
  EXPECT_THROW(verify(Y, other, {}), InputError);

  AffineLiftedSystem unbounded = duffing_lifted(1);
  unbounded.W = HPolytope(unbounded.W.H.topRows(1), unbounded.W.h.head(1));
  EXPECT_THROW(verify(Y, unbounded, {}), InputError);

  AffineLiftedSystem flat = duffing_lifted(1);
  // Pin the first coordinate: W becomes a segment.
  flat.W.h[0] = 0.0;
  flat.W.h[1] = 0.0;
  EXPECT_THROW(verify(Y, flat, {}), AssumptionError);
}

TEST(Compose, DoublyInflatedChainPassesCheck) {
  const auto& L3 = duffing_lifted(3);
  const AffineLiftedSystem L2i = inflated(2);
  const AffineLiftedSystem L1ii = inflate(inflated(1), 10.0);
  const VerificationOutcome first = verify(L3, L2i, {});
  const VerificationOutcome second = verify(L2i, L1ii, {});
  ASSERT_EQ(first.status, VerifyStatus::verified) << first.message;
  ASSERT_EQ(second.status, VerifyStatus::verified) << second.message;
  const RefinementCertificate c = compose(*first.certificate, *second.certificate, 2);
  EXPECT_EQ(c.R.rows(), L3.n_y());
  EXPECT_EQ(c.R.cols(), L1ii.n_y());
  ASSERT_TRUE(std::holds_alternative<VPolytope>(c.W_rho));
  const CertificateReport rep = check_certificate(L3, L1ii, c, {});
  EXPECT_TRUE(rep.pass) << rep.failure;
  EXPECT_LE(rep.residuals.containment, 1e-7);
}

TEST(Compose, ReflexiveWithReflexiveIsReflexive) {
  const auto& Y = duffing_lifted(3);
  const RefinementCertificate c = compose(identity_certificate(Y), identity_certificate(Y), 2);
  EXPECT_EQ(c.R, MatrixXd::Identity(Y.n_y(), Y.n_y()));
  const auto& V = std::get<VPolytope>(c.W_rho);
  ASSERT_EQ(V.size(), 1);
  EXPECT_EQ(V.vertices[0], VectorXd::Zero(2));
  EXPECT_TRUE(check_certificate(Y, Y, c, {}).pass);
}

TEST(Compose, IdentityIsNeutral) {
  const auto& out = inflated_outcome(3, 2);
  ASSERT_TRUE(out.certificate.has_value());
  const auto& Y = duffing_lifted(3);
  const RefinementCertificate c = compose(identity_certificate(Y), *out.certificate, 2);
  EXPECT_LT((c.R - out.certificate->R).lpNorm<Eigen::Infinity>(), 1e-12);
  const Box b = std::get<Box>(out.certificate->W_rho);
  const auto& V = std::get<VPolytope>(c.W_rho);
  EXPECT_EQ(V.size(), 4);
  for (const auto& v : V.vertices) EXPECT_TRUE(b.contains(v, 1e-12));
}

TEST(CertificateJson, RoundTrip) {
  RefinementCertificate c;
  c.R = MatrixXd::Identity(3, 3);
  c.R(2, 0) = -1.25;
  c.W_rho = Box(VectorXd::Constant(1, -0.5), VectorXd::Constant(1, 2.0));
  const json j = to_json(c);
  const RefinementCertificate back = certificate_from_json(j, 3, 3);
  EXPECT_EQ(back.R, c.R);
  EXPECT_EQ(std::get<Box>(back.W_rho).upper, std::get<Box>(c.W_rho).upper);
  EXPECT_EQ(to_json(back).dump(), j.dump());

  c.W_rho = VPolytope({VectorXd::Constant(1, 1.0), VectorXd::Constant(1, 3.0)});
  const RefinementCertificate back2 = certificate_from_json(to_json(c), 3, 3);
  EXPECT_EQ(std::get<VPolytope>(back2.W_rho).size(), 2);
}

TEST(CertificateJson, SchemaErrors) {
  EXPECT_THROW(certificate_from_json(json::parse(R"({"W_rho": {"lower": [0], "upper": [1]}})"), 2, 2),
               SchemaError);
  EXPECT_THROW(certificate_from_json(json::parse(R"({"R": [[1, 0], [0, 1]], "W_rho": {}})"), 2, 2),
               SchemaError);
  EXPECT_THROW(certificate_from_json(json::parse(R"({"R": [[1, 0]], "W_rho": {"lower": [], "upper": []}})"), 2, 2),
               SchemaError);
}

TEST(CheckCertificate, WrongShapesFailWithoutThrowing) {
  const auto& Y = duffing_lifted(2);
  RefinementCertificate c = identity_certificate(Y);
  c.W_rho = Box(VectorXd::Zero(3), VectorXd::Zero(3));
  const CertificateReport rep = check_certificate(Y, Y, c, {});
  EXPECT_FALSE(rep.pass);
  EXPECT_NE(rep.failure.find("dimension"), std::string::npos);
}

}  // namespace
}  // namespace liftsim
