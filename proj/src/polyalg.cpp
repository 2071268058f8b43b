#include "liftsim/polyalg.hpp"

#include <algorithm>
#include <cmath>
#include <climits>
#include <sstream>

#include "liftsim/errors.hpp"

namespace liftsim {

Monomial::Monomial(const std::vector<int>& dense_exponents) {
  for (int i = 0; i < static_cast<int>(dense_exponents.size()); ++i) {
    if (dense_exponents[i] < 0) throw InputError("negative exponent");
    if (dense_exponents[i] > 0) {
      pairs_.emplace_back(i, dense_exponents[i]);
      degree_ += dense_exponents[i];
    }
  }
}

Monomial Monomial::var(int index, int power) {
  Monomial m;
  if (power < 0 || index < 0) throw InputError("bad monomial");
  if (power > 0) {
    m.pairs_.emplace_back(index, power);
    m.degree_ = power;
  }
  return m;
}

int Monomial::power(int var) const {
  for (const auto& [v, p] : pairs_)
    if (v == var) return p;
  return 0;
}

std::vector<int> Monomial::dense(int arity) const {
  std::vector<int> e(arity, 0);
  for (const auto& [v, p] : pairs_) {
    if (v >= arity) throw InputError("monomial exceeds arity");
    e[v] = p;
  }
  return e;
}

Monomial Monomial::operator*(const Monomial& o) const {
  Monomial r;
  r.degree_ = degree_ + o.degree_;
  auto a = pairs_.begin();
  auto b = o.pairs_.begin();
  while (a != pairs_.end() || b != o.pairs_.end()) {
    if (b == o.pairs_.end() || (a != pairs_.end() && a->first < b->first)) {
      r.pairs_.push_back(*a++);
    } else if (a == pairs_.end() || b->first < a->first) {
      r.pairs_.push_back(*b++);
    } else {
      r.pairs_.emplace_back(a->first, a->second + b->second);
      ++a;
      ++b;
    }
  }
  return r;
}

double Monomial::eval(const double* point) const {
  double r = 1.0;
  for (const auto& [v, p] : pairs_) {
    const double x = point[v];
    for (int k = 0; k < p; ++k) r *= x;
  }
  return r;
}

std::string Monomial::str(const std::vector<std::string>& names) const {
  if (pairs_.empty()) return "1";
  std::ostringstream os;
  bool first = true;
  for (const auto& [v, p] : pairs_) {
    if (!first) os << "*";
    first = false;
    if (v < static_cast<int>(names.size()))
      os << names[v];
    else
      os << "x" << v;
    if (p > 1) os << "^" << p;
  }
  return os.str();
}

bool GrlexLess::operator()(const Monomial& a, const Monomial& b) const {
  if (a.degree() != b.degree()) return a.degree() < b.degree();
  // Walk both sparse lists in variable order; the first variable where the
  // exponents differ decides.
  const auto& pa = a.pairs();
  const auto& pb = b.pairs();
  size_t i = 0, j = 0;
  while (i < pa.size() || j < pb.size()) {
    const int va = i < pa.size() ? pa[i].first : INT_MAX;
    const int vb = j < pb.size() ? pb[j].first : INT_MAX;
    const int v = std::min(va, vb);
    const int ea = va == v ? pa[i].second : 0;
    const int eb = vb == v ? pb[j].second : 0;
    if (ea != eb) return ea < eb;
    if (va == v) ++i;
    if (vb == v) ++j;
  }
  return false;
}

Polynomial Polynomial::constant(int arity, double c) {
  Polynomial p(arity);
  p.add_term(Monomial(), c);
  return p;
}

Polynomial Polynomial::variable(int arity, int index) {
  if (index < 0 || index >= arity) throw InputError("variable index out of range");
  Polynomial p(arity);
  p.add_term(Monomial::var(index), 1.0);
  return p;
}

Polynomial Polynomial::monomial(int arity, const Monomial& m, double coeff) {
  Polynomial p(arity);
  p.add_term(m, coeff);
  return p;
}

int Polynomial::degree() const {
  int d = -1;
  for (const auto& kv : terms_) d = std::max(d, kv.first.degree());
  return d;
}

double Polynomial::coeff(const Monomial& m) const {
  auto it = terms_.find(m);
  return it == terms_.end() ? 0.0 : it->second;
}

void Polynomial::add_term(const Monomial& m, double c) {
  if (m.min_arity() > arity_) throw InputError("monomial exceeds polynomial arity");
  if (c == 0.0) return;
  auto [it, inserted] = terms_.try_emplace(m, c);
  if (!inserted) {
    it->second += c;
    if (it->second == 0.0) terms_.erase(it);
  }
}

double Polynomial::eval(const std::vector<double>& point) const {
  if (static_cast<int>(point.size()) != arity_)
    throw InputError("eval: point has " + std::to_string(point.size()) +
                     " entries, polynomial arity is " + std::to_string(arity_));
  double r = 0.0;
  for (const auto& [m, c] : terms_) r += c * m.eval(point.data());
  return r;
}

double Polynomial::eval(const Eigen::VectorXd& point) const {
  if (point.size() != arity_)
    throw InputError("eval: point arity mismatch");
  double r = 0.0;
  for (const auto& [m, c] : terms_) r += c * m.eval(point.data());
  return r;
}

void Polynomial::check_arity(const Polynomial& o) const {
  if (arity_ != o.arity_)
    throw InputError("polynomial arity mismatch (" + std::to_string(arity_) +
                     " vs " + std::to_string(o.arity_) + ")");
}

Polynomial& Polynomial::operator+=(const Polynomial& o) {
  check_arity(o);
  for (const auto& [m, c] : o.terms_) add_term(m, c);
  return *this;
}

Polynomial& Polynomial::operator-=(const Polynomial& o) {
  check_arity(o);
  for (const auto& [m, c] : o.terms_) add_term(m, -c);
  return *this;
}

Polynomial& Polynomial::operator*=(double s) {
  if (s == 0.0) {
    terms_.clear();
    return *this;
  }
  for (auto& kv : terms_) kv.second *= s;
  return *this;
}

Polynomial Polynomial::operator*(const Polynomial& o) const {
  check_arity(o);
  Polynomial r(arity_);
  for (const auto& [ma, ca] : terms_)
    for (const auto& [mb, cb] : o.terms_) r.add_term(ma * mb, ca * cb);
  return r;
}

Polynomial Polynomial::pow(int k) const {
  if (k < 0) throw InputError("negative power");
  Polynomial r = constant(arity_, 1.0);
  Polynomial base = *this;
  while (k > 0) {
    if (k & 1) r = r * base;
    k >>= 1;
    if (k > 0) base = base * base;
  }
  return r;
}

double Polynomial::max_abs_coeff() const {
  double m = 0.0;
  for (const auto& kv : terms_) m = std::max(m, std::abs(kv.second));
  return m;
}

std::string Polynomial::str(const std::vector<std::string>& names) const {
  if (terms_.empty()) return "0";
  std::ostringstream os;
  bool first = true;
  // Highest degree first reads more naturally.
  for (auto it = terms_.rbegin(); it != terms_.rend(); ++it) {
    const double c = it->second;
    if (!first) os << (c < 0 ? " - " : " + ");
    else if (c < 0) os << "-";
    first = false;
    const bool unit = it->first.degree() == 0;
    if (std::abs(c) != 1.0 || unit) {
      os << std::abs(c);
      if (!unit) os << "*";
    }
    if (!unit) os << it->first.str(names);
  }
  return os.str();
}

Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }
Polynomial operator-(Polynomial a, const Polynomial& b) { return a -= b; }
Polynomial operator-(Polynomial a) { return a *= -1.0; }
Polynomial operator*(double s, Polynomial a) { return a *= s; }
Polynomial add(const Polynomial& p, const Polynomial& q) { return p + q; }
Polynomial sub(const Polynomial& p, const Polynomial& q) { return p - q; }
Polynomial mul(const Polynomial& p, const Polynomial& q) { return p * q; }
Polynomial scale(const Polynomial& p, double s) { return s * p; }

Polynomial compose(const Polynomial& p, const std::vector<Polynomial>& subs) {
  if (static_cast<int>(subs.size()) != p.arity())
    throw InputError("compose: " + std::to_string(subs.size()) +
                     " substitutions for arity " + std::to_string(p.arity()));
  int arity = subs.empty() ? 0 : subs[0].arity();
  for (const auto& s : subs)
    if (s.arity() != arity) throw InputError("compose: substitutions differ in arity");
  // powers[v][k] = subs[v]^k, built lazily.
  std::vector<std::vector<Polynomial>> powers(subs.size());
  auto power = [&](int v, int k) -> const Polynomial& {
    auto& pv = powers[v];
    if (pv.empty()) pv.push_back(Polynomial::constant(arity, 1.0));
    while (static_cast<int>(pv.size()) <= k) pv.push_back(pv.back() * subs[v]);
    return pv[k];
  };
  Polynomial r(arity);
  for (const auto& [m, c] : p.terms()) {
    Polynomial t = Polynomial::constant(arity, c);
    for (const auto& [v, e] : m.pairs()) t = t * power(v, e);
    r += t;
  }
  return r;
}

Polynomial extend_arity(const Polynomial& p, int arity) {
  if (arity < p.arity()) throw InputError("extend_arity: cannot shrink");
  Polynomial r(arity);
  for (const auto& [m, c] : p.terms()) r.add_term(m, c);
  return r;
}

ParametricPolynomial::ParametricPolynomial(const Polynomial& p) : arity_(p.arity()) {
  for (const auto& [m, c] : p.terms()) terms_.emplace(m, AffineExpr(c));
}

int ParametricPolynomial::degree() const {
  int d = -1;
  for (const auto& [m, e] : terms_)
    if (!e.is_zero()) d = std::max(d, m.degree());
  return d;
}

void ParametricPolynomial::add_term(const Monomial& m, const AffineExpr& c) {
  if (m.min_arity() > arity_) throw InputError("monomial exceeds polynomial arity");
  if (c.is_zero()) return;
  auto [it, inserted] = terms_.try_emplace(m, c);
  if (!inserted) {
    it->second += c;
    if (it->second.is_zero()) terms_.erase(it);
  }
}

void ParametricPolynomial::add_scaled(const Polynomial& p, const AffineExpr& e) {
  if (p.arity() != arity_) throw InputError("parametric arity mismatch");
  for (const auto& [m, c] : p.terms()) add_term(m, c * e);
}

ParametricPolynomial& ParametricPolynomial::operator+=(const ParametricPolynomial& o) {
  if (o.arity_ != arity_) throw InputError("parametric arity mismatch");
  for (const auto& [m, e] : o.terms_) add_term(m, e);
  return *this;
}

ParametricPolynomial& ParametricPolynomial::operator-=(const ParametricPolynomial& o) {
  if (o.arity_ != arity_) throw InputError("parametric arity mismatch");
  for (const auto& [m, e] : o.terms_) add_term(m, -e);
  return *this;
}

ParametricPolynomial& ParametricPolynomial::operator*=(double s) {
  if (s == 0.0) {
    terms_.clear();
    return *this;
  }
  for (auto& kv : terms_) kv.second *= s;
  return *this;
}

Polynomial ParametricPolynomial::substitute(const std::vector<double>& values) const {
  Polynomial p(arity_);
  for (const auto& [m, e] : terms_) p.add_term(m, e.eval(values));
  return p;
}

std::vector<std::pair<Monomial, AffineExpr>> collect(const ParametricPolynomial& p) {
  std::vector<std::pair<Monomial, AffineExpr>> out;
  out.reserve(p.terms().size());
  for (const auto& [m, e] : p.terms())
    if (!e.is_zero()) out.emplace_back(m, e);
  return out;
}

}  // namespace liftsim
