#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "liftsim/affine_expr.hpp"

namespace liftsim {

/// Product of variable powers, stored as sorted (variable, power) pairs with
/// no zero powers.
class Monomial {
 public:
  Monomial() = default;
  explicit Monomial(const std::vector<int>& dense_exponents);
  static Monomial var(int index, int power = 1);

  int degree() const { return degree_; }
  int power(int var) const;
  /// Largest variable index referenced plus one.
  int min_arity() const { return pairs_.empty() ? 0 : pairs_.back().first + 1; }
  const std::vector<std::pair<int, int>>& pairs() const { return pairs_; }
  std::vector<int> dense(int arity) const;

  Monomial operator*(const Monomial& o) const;
  double eval(const double* point) const;
  std::string str(const std::vector<std::string>& names = {}) const;

  bool operator==(const Monomial& o) const { return pairs_ == o.pairs_; }
  bool operator!=(const Monomial& o) const { return pairs_ != o.pairs_; }

 private:
  std::vector<std::pair<int, int>> pairs_;
  int degree_ = 0;
};

/// Graded lexicographic order: lower total degree first, ties broken by the
/// exponent of variable 0, then 1, ... (larger exponent sorts later).
struct GrlexLess {
  bool operator()(const Monomial& a, const Monomial& b) const;
};

class Polynomial {
 public:
  using Terms = std::map<Monomial, double, GrlexLess>;

  Polynomial() = default;
  explicit Polynomial(int arity) : arity_(arity) {}
  static Polynomial constant(int arity, double c);
  static Polynomial variable(int arity, int index);
  static Polynomial monomial(int arity, const Monomial& m, double coeff = 1.0);

  int arity() const { return arity_; }
  /// Total degree; the zero polynomial has degree -1.
  int degree() const;
  bool is_zero() const { return terms_.empty(); }
  const Terms& terms() const { return terms_; }
  double coeff(const Monomial& m) const;

  void add_term(const Monomial& m, double c);

  double eval(const std::vector<double>& point) const;
  double eval(const Eigen::VectorXd& point) const;

  Polynomial& operator+=(const Polynomial& o);
  Polynomial& operator-=(const Polynomial& o);
  Polynomial& operator*=(double s);
  Polynomial operator*(const Polynomial& o) const;
  Polynomial pow(int k) const;

  /// Max absolute coefficient.
  double max_abs_coeff() const;
  std::string str(const std::vector<std::string>& names = {}) const;

  bool operator==(const Polynomial& o) const {
    return arity_ == o.arity_ && terms_ == o.terms_;
  }

 private:
  void check_arity(const Polynomial& o) const;

  int arity_ = 0;
  Terms terms_;
};

Polynomial operator+(Polynomial a, const Polynomial& b);
Polynomial operator-(Polynomial a, const Polynomial& b);
Polynomial operator-(Polynomial a);
Polynomial operator*(double s, Polynomial a);
Polynomial add(const Polynomial& p, const Polynomial& q);
Polynomial sub(const Polynomial& p, const Polynomial& q);
Polynomial mul(const Polynomial& p, const Polynomial& q);
Polynomial scale(const Polynomial& p, double s);

/// p(subs_1, ..., subs_n), fully expanded. All subs share one arity, which
/// becomes the arity of the result.
Polynomial compose(const Polynomial& p, const std::vector<Polynomial>& subs);

/// Same polynomial viewed over more variables (new variables appended).
Polynomial extend_arity(const Polynomial& p, int arity);

/// Polynomial whose coefficients are affine in decision variables.
class ParametricPolynomial {
 public:
  using Terms = std::map<Monomial, AffineExpr, GrlexLess>;

  ParametricPolynomial() = default;
  explicit ParametricPolynomial(int arity) : arity_(arity) {}
  /// Lift a numeric polynomial (constant coefficients).
  explicit ParametricPolynomial(const Polynomial& p);

  int arity() const { return arity_; }
  int degree() const;
  const Terms& terms() const { return terms_; }

  void add_term(const Monomial& m, const AffineExpr& c);
  /// this += e * p
  void add_scaled(const Polynomial& p, const AffineExpr& e);

  ParametricPolynomial& operator+=(const ParametricPolynomial& o);
  ParametricPolynomial& operator-=(const ParametricPolynomial& o);
  ParametricPolynomial& operator*=(double s);

  /// Substitute decision values.
  Polynomial substitute(const std::vector<double>& values) const;

 private:
  int arity_ = 0;
  Terms terms_;
};

/// One entry per distinct monomial, graded-lex ordered; identically zero
/// coefficients are dropped.
std::vector<std::pair<Monomial, AffineExpr>> collect(const ParametricPolynomial& p);

}  // namespace liftsim
