#include "liftsim/affine_expr.hpp"

#include <cmath>
#include <sstream>

namespace liftsim {

AffineExpr AffineExpr::var(VarId v, double coeff) {
  AffineExpr e;
  e.add_term(v, coeff);
  return e;
}

void AffineExpr::add_term(VarId v, double coeff) {
  if (coeff == 0.0) return;
  auto [it, inserted] = coeffs_.try_emplace(v, coeff);
  if (!inserted) {
    it->second += coeff;
    if (it->second == 0.0) coeffs_.erase(it);
  }
}

AffineExpr& AffineExpr::operator+=(const AffineExpr& o) {
  constant_ += o.constant_;
  for (const auto& [v, c] : o.coeffs_) add_term(v, c);
  return *this;
}

AffineExpr& AffineExpr::operator-=(const AffineExpr& o) {
  constant_ -= o.constant_;
  for (const auto& [v, c] : o.coeffs_) add_term(v, -c);
  return *this;
}

AffineExpr& AffineExpr::operator*=(double s) {
  if (s == 0.0) {
    constant_ = 0.0;
    coeffs_.clear();
    return *this;
  }
  constant_ *= s;
  for (auto& kv : coeffs_) kv.second *= s;
  return *this;
}

double AffineExpr::eval(const std::vector<double>& values) const {
  double r = constant_;
  for (const auto& [v, c] : coeffs_) r += c * values.at(v);
  return r;
}

std::string AffineExpr::str() const {
  std::ostringstream os;
  os << constant_;
  for (const auto& [v, c] : coeffs_) os << (c < 0 ? " - " : " + ") << std::abs(c) << "*v" << v;
  return os.str();
}

AffineExpr operator+(AffineExpr a, const AffineExpr& b) { return a += b; }
AffineExpr operator-(AffineExpr a, const AffineExpr& b) { return a -= b; }
AffineExpr operator-(AffineExpr a) { return a *= -1.0; }
AffineExpr operator*(double s, AffineExpr a) { return a *= s; }
AffineExpr operator*(AffineExpr a, double s) { return a *= s; }

}  // namespace liftsim
