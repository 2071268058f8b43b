#include <cmath>

#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "liftsim/conic.hpp"
#include "liftsim/errors.hpp"

namespace liftsim {
namespace {

TEST(Conic, MinimizeWithLowerBound) {
  ConicProblem p;
  VarId x = p.add_variable();
  p.add_nonneg(AffineExpr::var(x) - 1.0);
  p.set_objective(AffineExpr::var(x));
  SolveResult r = solve(p);
  ASSERT_EQ(r.status, SolveStatus::optimal) << r.diagnostics.message;
  EXPECT_NEAR(r.value(x), 1.0, 1e-7);
}

TEST(Conic, ContradictoryBoundsInfeasible) {
  ConicProblem p;
  VarId x = p.add_variable();
  p.add_nonneg(AffineExpr::var(x) - 1.0);
  p.add_nonneg(-AffineExpr::var(x));
  SolveResult r = solve(p);
  EXPECT_EQ(r.status, SolveStatus::infeasible) << r.diagnostics.message;
  EXPECT_TRUE(r.values.empty());
}

TEST(Conic, NegativeScalarPsdInfeasible) {
  ConicProblem p;
  PsdBlock b = p.add_psd_block(1);
  p.add_equality(AffineExpr::var(b.at(0, 0)) + 1.0);
  SolveResult r = solve(p);
  EXPECT_EQ(r.status, SolveStatus::infeasible) << r.diagnostics.message;
}

TEST(Conic, UnboundedLp) {
  ConicProblem p;
  VarId x = p.add_variable();
  p.add_nonneg(AffineExpr::var(x));
  p.set_objective(-AffineExpr::var(x));
  SolveResult r = solve(p);
  EXPECT_EQ(r.status, SolveStatus::unbounded) << r.diagnostics.message;
}

// min trace(C X) s.t. X_00 + X_11 = 1, X psd; optimum is the smallest
// eigenvalue of C.
TEST(Conic, SmallSdpMatchesEigenvalue) {
  ConicProblem p;
  PsdBlock b = p.add_psd_block(2);
  p.add_equality(AffineExpr::var(b.at(0, 0)) + AffineExpr::var(b.at(1, 1)) - 1.0);
  // C = [[2,1],[1,3]]
  AffineExpr obj = 2.0 * AffineExpr::var(b.at(0, 0)) + 3.0 * AffineExpr::var(b.at(1, 1)) +
                   2.0 * AffineExpr::var(b.at(1, 0));
  p.set_objective(obj);
  SolveResult r = solve(p);
  ASSERT_EQ(r.status, SolveStatus::optimal) << r.diagnostics.message;
  EXPECT_NEAR(r.objective, 2.5 - std::sqrt(1.25), 1e-7);
}

TEST(Conic, LpWithEqualitiesAndBounds) {
  // max x + 2y s.t. x + y = 4, 0 <= x <= 3, 0 <= y <= 2  -> x = 2, y = 2
  ConicProblem p;
  VarId x = p.add_variable(0, 3), y = p.add_variable(0, 2);
  p.add_equality(AffineExpr::var(x) + AffineExpr::var(y) - 4.0);
  p.set_objective(-AffineExpr::var(x) - 2.0 * AffineExpr::var(y));
  SolveResult r = solve(p);
  ASSERT_EQ(r.status, SolveStatus::optimal) << r.diagnostics.message;
  EXPECT_NEAR(r.value(x), 2.0, 1e-7);
  EXPECT_NEAR(r.value(y), 2.0, 1e-7);
}

// Oracle: enumerate all vertices of {x | Hx <= h} in R^3 and take the best.
TEST(ConicProperty, RandomLpMatchesVertexOracle) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(0.2, 1.5);
  for (int trial = 0; trial < 40; ++trial) {
    const int m = 8;
    Eigen::MatrixXd H(m + 6, 3);
    Eigen::VectorXd h(m + 6);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < 3; ++j) H(i, j) = g(rng);
      h[i] = u(rng);
    }
    // Bounding box keeps the LP bounded.
    for (int j = 0; j < 3; ++j) {
      H.row(m + 2 * j).setZero();
      H(m + 2 * j, j) = 1;
      h[m + 2 * j] = 3;
      H.row(m + 2 * j + 1).setZero();
      H(m + 2 * j + 1, j) = -1;
      h[m + 2 * j + 1] = 3;
    }
    Eigen::Vector3d c(g(rng), g(rng), g(rng));
    double best = 1e300;
    const int rows = m + 6;
    for (int a = 0; a < rows; ++a)
      for (int b = a + 1; b < rows; ++b)
        for (int d = b + 1; d < rows; ++d) {
          Eigen::Matrix3d M;
          M << H.row(a), H.row(b), H.row(d);
          if (std::abs(M.determinant()) < 1e-10) continue;
          Eigen::Vector3d v = M.lu().solve(Eigen::Vector3d(h[a], h[b], h[d]));
          if (((H * v - h).array() <= 1e-9).all()) best = std::min(best, c.dot(v));
        }
    ConicProblem p;
    auto x = p.add_variables(3);
    for (int i = 0; i < rows; ++i) {
      AffineExpr e(h[i]);
      for (int j = 0; j < 3; ++j) e.add_term(x[j], -H(i, j));
      p.add_nonneg(e);
    }
    AffineExpr obj;
    for (int j = 0; j < 3; ++j) obj.add_term(x[j], c[j]);
    p.set_objective(obj);
    SolveResult r = solve(p);
    ASSERT_EQ(r.status, SolveStatus::optimal) << r.diagnostics.message;
    EXPECT_NEAR(r.objective, best, 1e-6 * std::max(1.0, std::abs(best)));
  }
}

// min <C, X> s.t. trace X = 1, X psd equals the smallest eigenvalue of C.
TEST(ConicProperty, RandomSdpMatchesEigenvalueOracle) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 30; ++trial) {
    const int d = 2 + trial % 6;
    Eigen::MatrixXd C = Eigen::MatrixXd::NullaryExpr(d, d, [&] { return g(rng); });
    C = 0.5 * (C + C.transpose()).eval();
    ConicProblem p;
    PsdBlock b = p.add_psd_block(d);
    AffineExpr tr(-1.0), obj;
    for (int i = 0; i < d; ++i) {
      tr.add_term(b.at(i, i), 1.0);
      for (int j = 0; j <= i; ++j) obj.add_term(b.at(i, j), i == j ? C(i, i) : 2 * C(i, j));
    }
    p.add_equality(tr);
    p.set_objective(obj);
    SolveResult r = solve(p);
    ASSERT_EQ(r.status, SolveStatus::optimal) << r.diagnostics.message;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
    EXPECT_NEAR(r.objective, es.eigenvalues()(0), 1e-6);
  }
}

// Every optimal answer survives an independent re-evaluation.
TEST(ConicProperty, OptimalAnswersPassRecheck) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 30; ++trial) {
    ConicProblem p;
    auto x = p.add_variables(4, -5.0, 5.0);
    PsdBlock b = p.add_psd_block(3);
    for (int k = 0; k < 3; ++k) {
      AffineExpr e(g(rng));
      for (VarId v : x) e.add_term(v, g(rng));
      e.add_term(b.at(k, k), 1.0);
      p.add_equality(e);
    }
    AffineExpr obj;
    for (VarId v : x) obj.add_term(v, g(rng));
    for (int i = 0; i < 3; ++i) obj.add_term(b.at(i, i), 1.0);
    p.set_objective(obj);
    SolveResult r = solve(p);
    if (r.status != SolveStatus::optimal) continue;
    SolveDiagnostics d;
    EXPECT_TRUE(recheck(p, r.values, 1e-7, d));
  }
}

TEST(Conic, UndeclaredVariableRejected) {
  ConicProblem p;
  p.add_variable();
  EXPECT_THROW(p.add_equality(AffineExpr::var(3)), InputError);
}

}  // namespace
}  // namespace liftsim
