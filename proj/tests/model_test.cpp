#include <random>

#include <gtest/gtest.h>

#include "liftsim/duffing_data.hpp"
#include "liftsim/errors.hpp"
#include "liftsim/model.hpp"

namespace liftsim {
namespace {

UnliftedSystem duffing() { return parse_unlifted(parse_json_text(data::kDuffingModel)); }

AffineLiftedSystem lifted_with(const char* lifting_doc) {
  UnliftedSystem d = duffing();
  AffineLiftedSystem s;
  s.n_x = 2;
  s.n_u = 1;
  s.variables = d.variables;
  s.lifting = parse_lifting(parse_json_text(lifting_doc), 2);
  const int ny = s.n_y();
  s.A = Eigen::MatrixXd::Identity(ny, ny);
  s.B = Eigen::MatrixXd::Zero(ny, 1);
  s.W = Box(Eigen::VectorXd::Constant(ny, -1.0), Eigen::VectorXd::Constant(ny, 1.0)).to_h();
  s.X = d.X;
  s.U = d.U;
  validate(s);
  return s;
}

TEST(Model, DuffingDocument) {
  UnliftedSystem d = duffing();
  EXPECT_EQ(d.n_x, 2);
  EXPECT_EQ(d.n_u, 1);
  ASSERT_EQ(d.dynamics.size(), 2u);
  EXPECT_EQ(d.generators.size(), 6u);
  Eigen::VectorXd x(2), u(1);
  x << 1.0, 0.0;
  u << 0.0;
  Eigen::VectorXd nx = d.step(x, u);
  EXPECT_DOUBLE_EQ(nx[0], 1.0);
  EXPECT_NEAR(nx[1], 0.0, 1e-15);
  // Hand computation: xdot+ = 3 + 0.1 (4 - 16 - 1.5 + 50) = 6.65.
  x << 2.0, 3.0;
  u << 50.0;
  EXPECT_NEAR(d.step(x, u)[1], 6.65, 1e-12);
}

TEST(Model, RejectsMissingIdentityPrefix) {
  json doc = serialize(lifted_with(data::kDuffingPsi2));
  std::swap(doc["lifting"][0], doc["lifting"][2]);
  try {
    parse_lifted(doc);
    FAIL() << "expected an assumption error";
  } catch (const AssumptionError& e) {
    EXPECT_EQ(e.assumption(), std::string(kIdentityPrefix));
  }
}

TEST(Model, RejectsEmptyDisturbance) {
  AffineLiftedSystem s = lifted_with(data::kDuffingPsi1);
  s.W.h.array() = -1.0;
  EXPECT_THROW(validate(s), AssumptionError);
}

TEST(Model, SchemaErrorsCarryPath) {
  json doc = parse_json_text(data::kDuffingModel);
  doc["dynamics"][1][2]["exps"] = json::array({0, 0});
  try {
    parse_model(doc);
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.path(), "/dynamics/1/2/exps");
  }
  doc = parse_json_text(data::kDuffingModel);
  doc.erase("U");
  EXPECT_THROW(parse_model(doc), SchemaError);
  try {
    parse_json_text("{\n\"kind\": \n}", "bad.json");
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.path(), "bad.json:3");
  }
}

TEST(Model, GeneratorsMustDescribeDomain) {
  json doc = parse_json_text(data::kDuffingModel);
  // 4 - x^2 >= 0 alone leaves xdot and u unconstrained.
  doc["generators"] = json::array({json::array({json{{"coeff", 4.0}, {"exps", {0, 0, 0}}},
                                                json{{"coeff", -1.0}, {"exps", {2, 0, 0}}}})});
  EXPECT_THROW(parse_model(doc), AssumptionError);
}

TEST(Model, RoundTripIsByteStable) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> coef(-3.0, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    AffineLiftedSystem s = lifted_with(trial % 2 ? data::kDuffingPsi3 : data::kDuffingPsi2);
    for (int i = 0; i < s.A.rows(); ++i) {
      for (int j = 0; j < s.A.cols(); ++j) s.A(i, j) = coef(rng);
      s.B(i, 0) = coef(rng);
    }
    s.W.h.array() += std::abs(coef(rng));
    Policy p;
    p.U = s.U;
    p.pi.push_back(coef(rng) * Polynomial::variable(2, 1));
    s.policy = p;
    const std::string once = serialize(parse_lifted(serialize(s))).dump(2);
    const std::string twice = serialize(parse_lifted(parse_json_text(once))).dump(2);
    EXPECT_EQ(once, twice);
  }
  const std::string a = serialize(duffing()).dump();
  EXPECT_EQ(serialize(parse_unlifted(parse_json_text(a))).dump(), a);
}

TEST(Model, LiftExamples) {
  AffineLiftedSystem s2 = lifted_with(data::kDuffingPsi2);
  AffineLiftedSystem s3 = lifted_with(data::kDuffingPsi3);
  AffineLiftedSystem s1 = lifted_with(data::kDuffingPsi1);
  Eigen::VectorXd x(2);
  x << 1.0, 2.0;
  EXPECT_EQ(lift(s2, x), Eigen::Vector3d(1, 2, 1));
  EXPECT_EQ(lift(s1, x), x);
  x << -2.0, 0.0;
  Eigen::VectorXd y(4);
  y << -2, 0, 4, -8;
  EXPECT_EQ(lift(s3, x), y);
  EXPECT_THROW(lift(s3, Eigen::VectorXd::Zero(3)), InputError);
}

TEST(Model, LiftPrefixIsExact) {
  AffineLiftedSystem s3 = lifted_with(data::kDuffingPsi3);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ux(-2.0, 2.0), uv(-3.0, 3.0);
  for (int k = 0; k < 100; ++k) {
    Eigen::VectorXd x(2);
    x << ux(rng), uv(rng);
    Eigen::VectorXd y = lift(s3, x);
    EXPECT_EQ(y[0], x[0]);
    EXPECT_EQ(y[1], x[1]);
  }
}

TEST(Model, InDomain) {
  AffineLiftedSystem s2 = lifted_with(data::kDuffingPsi2);
  EXPECT_TRUE(in_domain(s2, Eigen::Vector3d(0, 0, 0)));
  EXPECT_FALSE(in_domain(s2, Eigen::Vector3d(3, 0, 9)));
  EXPECT_TRUE(in_domain(s2, Eigen::Vector3d(2, 0, 100)));
}

TEST(Model, PolicyClamps) {
  Policy p;
  p.U = Box(Eigen::VectorXd::Constant(1, -50.0), Eigen::VectorXd::Constant(1, 50.0));
  p.pi.push_back(-10.0 * Polynomial::variable(2, 1));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> big(-100.0, 100.0);
  for (int k = 0; k < 200; ++k) {
    Eigen::VectorXd x(2);
    x << big(rng), big(rng);
    const double u = p.eval(x)[0];
    EXPECT_GE(u, -50.0);
    EXPECT_LE(u, 50.0);
    if (std::abs(x[1]) <= 5.0) EXPECT_DOUBLE_EQ(u, -10.0 * x[1]);
  }
}

TEST(Model, InflateRaisesEveryOffset) {
  AffineLiftedSystem s = lifted_with(data::kDuffingPsi2);
  AffineLiftedSystem t = inflate(s, 10.0);
  EXPECT_TRUE(((t.W.h - s.W.h).array() == 10.0).all());
  EXPECT_EQ(t.A, s.A);
}

}  // namespace
}  // namespace liftsim

namespace liftsim {
namespace {

TEST(LocateJsonPointer, FindsLinesOfNestedValues) {
  const std::string text = "{\n  \"a\": 1,\n  \"b\": [\n    {\"c\": 2},\n    {\"d\": [1,\n 2]}\n  ]\n}\n";
  EXPECT_EQ(locate_json_pointer(text, ""), 1);
  EXPECT_EQ(locate_json_pointer(text, "/a"), 2);
  EXPECT_EQ(locate_json_pointer(text, "/b"), 3);
  EXPECT_EQ(locate_json_pointer(text, "/b/1/d/1"), 6);
  // Missing member: deepest existing ancestor.
  EXPECT_EQ(locate_json_pointer(text, "/b/0/zzz"), 4);
  EXPECT_EQ(locate_json_pointer("{ broken", "/a"), 0);
}

TEST(LocateJsonPointer, PointsAtSchemaErrorInDuffingDocument) {
  std::string text = data::kDuffingModel;
  text.replace(text.find("\"U\""), 3, "\"V\"");
  try {
    parse_model(parse_json_text(text));
    FAIL() << "expected a schema error";
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.path(), "/U");
    EXPECT_GT(locate_json_pointer(text, e.path()), 0);
  }
}

}  // namespace
}  // namespace liftsim
