#pragma once

#include <map>
#include <string>
#include <vector>

namespace liftsim {

using VarId = int;

/// constant + sum_k coeff_k * var_k over decision variables. Zero
/// coefficients are never stored, so equal expressions compare equal.
class AffineExpr {
 public:
  AffineExpr() = default;
  AffineExpr(double constant) : constant_(constant) {}  // NOLINT
  static AffineExpr var(VarId v, double coeff = 1.0);

  double constant() const { return constant_; }
  const std::map<VarId, double>& coeffs() const { return coeffs_; }
  bool is_constant() const { return coeffs_.empty(); }
  bool is_zero() const { return coeffs_.empty() && constant_ == 0.0; }

  void add_term(VarId v, double coeff);
  void add_constant(double c) { constant_ += c; }

  AffineExpr& operator+=(const AffineExpr& o);
  AffineExpr& operator-=(const AffineExpr& o);
  AffineExpr& operator*=(double s);

  double eval(const std::vector<double>& values) const;
  bool operator==(const AffineExpr& o) const {
    return constant_ == o.constant_ && coeffs_ == o.coeffs_;
  }
  std::string str() const;

 private:
  double constant_ = 0.0;
  std::map<VarId, double> coeffs_;
};

AffineExpr operator+(AffineExpr a, const AffineExpr& b);
AffineExpr operator-(AffineExpr a, const AffineExpr& b);
AffineExpr operator-(AffineExpr a);
AffineExpr operator*(double s, AffineExpr a);
AffineExpr operator*(AffineExpr a, double s);

}  // namespace liftsim
