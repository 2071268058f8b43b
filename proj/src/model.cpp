#include "liftsim/model.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "liftsim/errors.hpp"
#include "liftsim/sosrelax.hpp"

namespace liftsim {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

const json& field(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw SchemaError(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError(path + "/" + key, "missing field");
  return *it;
}

int get_int(const json& j, const std::string& path, int min_value) {
  if (!j.is_number_integer()) throw SchemaError(path, "expected an integer");
  const int v = j.get<int>();
  if (v < min_value) throw SchemaError(path, "must be >= " + std::to_string(min_value));
  return v;
}

double get_double(const json& j, const std::string& path) {
  if (!j.is_number()) throw SchemaError(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw SchemaError(path, "must be finite");
  return v;
}

std::vector<std::string> default_names(int n_x, int n_u) {
  std::vector<std::string> names;
  for (int i = 0; i < n_x; ++i) names.push_back("x" + std::to_string(i + 1));
  for (int i = 0; i < n_u; ++i) names.push_back("u" + std::to_string(i + 1));
  return names;
}

std::vector<std::string> parse_names(const json& doc, int n_x, int n_u) {
  auto it = doc.find("variables");
  if (it == doc.end()) return default_names(n_x, n_u);
  if (!it->is_array() || static_cast<int>(it->size()) != n_x + n_u)
    throw SchemaError("/variables", "expected " + std::to_string(n_x + n_u) + " names");
  std::vector<std::string> names;
  for (size_t i = 0; i < it->size(); ++i) {
    if (!(*it)[i].is_string()) throw SchemaError("/variables/" + std::to_string(i), "expected a string");
    names.push_back((*it)[i].get<std::string>());
  }
  return names;
}

Box parse_box(const json& j, int n, const std::string& path) {
  Box b(parse_vector(field(j, "lower", path), n, path + "/lower"),
        parse_vector(field(j, "upper", path), n, path + "/upper"));
  return b;
}

StateSet parse_state_set(const json& j, int n, const std::string& path) {
  if (!j.is_object()) throw SchemaError(path, "expected an object");
  if (j.contains("lower") || j.contains("upper")) return StateSet::from_box(parse_box(j, n, path));
  if (j.contains("H")) return StateSet::from_h(
      HPolytope(parse_matrix(field(j, "H", path), -1, n, path + "/H"),
                parse_vector(field(j, "h", path), -1, path + "/h")));
  throw SchemaError(path, "expected {lower, upper} or {H, h}");
}

json serialize_state_set(const StateSet& s) {
  if (s.bounds) return json{{"lower", to_json(s.bounds->lower)}, {"upper", to_json(s.bounds->upper)}};
  return json{{"H", to_json(s.H.H)}, {"h", to_json(s.H.h)}};
}

json serialize_policy(const Policy& p, int width) {
  json arr = json::array();
  for (const auto& q : p.pi) arr.push_back(serialize_polynomial(q, width));
  return arr;
}

}  // namespace

std::optional<Policy> parse_policy(const json& doc, int n_x, int n_u, const Box& U) {
  auto it = doc.find("policy");
  if (it == doc.end() || it->is_null()) return std::nullopt;
  if (!it->is_array() || static_cast<int>(it->size()) != n_u)
    throw SchemaError("/policy", "expected " + std::to_string(n_u) + " polynomial records");
  Policy p;
  p.U = U;
  for (int i = 0; i < n_u; ++i)
    p.pi.push_back(parse_polynomial((*it)[i], n_x, "/policy/" + std::to_string(i), n_x + n_u));
  return p;
}

Eigen::VectorXd Policy::eval(const VectorXd& x) const {
  VectorXd u(pi.size());
  for (size_t i = 0; i < pi.size(); ++i)
    u[i] = std::clamp(pi[i].eval(x), U.lower[i], U.upper[i]);
  return u;
}

StateSet StateSet::from_box(const Box& b) {
  StateSet s;
  s.H = b.to_h();
  s.bounds = b;
  return s;
}

StateSet StateSet::from_h(const HPolytope& P) {
  StateSet s;
  s.H = P;
  return s;
}

bool StateSet::contains(const VectorXd& x, double tol) const {
  if (bounds) return bounds->contains(x, tol);
  return H.contains(x, tol);
}

VectorXd UnliftedSystem::step(const VectorXd& x, const VectorXd& u) const {
  if (x.size() != n_x || u.size() != n_u) throw InputError("step: dimension mismatch");
  VectorXd xu(n_x + n_u);
  xu << x, u;
  VectorXd out(n_x);
  for (int i = 0; i < n_x; ++i) out[i] = dynamics[i].eval(xu);
  return out;
}

Polynomial parse_polynomial(const json& j, int arity, const std::string& path, int alt_arity) {
  if (!j.is_array()) throw SchemaError(path, "expected a list of {coeff, exps} records");
  Polynomial p(arity);
  for (size_t k = 0; k < j.size(); ++k) {
    const std::string rp = path + "/" + std::to_string(k);
    const double c = get_double(field(j[k], "coeff", rp), rp + "/coeff");
    const json& e = field(j[k], "exps", rp);
    if (!e.is_array()) throw SchemaError(rp + "/exps", "expected an integer list");
    const int len = static_cast<int>(e.size());
    if (len != arity && len != alt_arity)
      throw SchemaError(rp + "/exps", "expected " + std::to_string(arity) + " exponents, got " +
                                          std::to_string(len));
    std::vector<int> exps(arity, 0);
    for (int i = 0; i < len; ++i) {
      const int v = get_int(e[i], rp + "/exps/" + std::to_string(i), 0);
      if (i < arity) exps[i] = v;
      else if (v != 0)
        throw SchemaError(rp + "/exps/" + std::to_string(i), "must be zero for this polynomial");
    }
    p.add_term(Monomial(exps), c);
  }
  return p;
}

json serialize_polynomial(const Polynomial& p, int width) {
  json arr = json::array();
  for (const auto& [m, c] : p.terms()) {
    std::vector<int> e = m.dense(std::max(width, p.arity()));
    e.resize(width);
    arr.push_back(json{{"coeff", c}, {"exps", e}});
  }
  return arr;
}

MatrixXd parse_matrix(const json& j, int rows, int cols, const std::string& path) {
  if (!j.is_array()) throw SchemaError(path, "expected a row-major list of rows");
  if (rows >= 0 && static_cast<int>(j.size()) != rows)
    throw SchemaError(path, "expected " + std::to_string(rows) + " rows, got " + std::to_string(j.size()));
  const int r = static_cast<int>(j.size());
  MatrixXd M(r, cols);
  for (int i = 0; i < r; ++i) {
    const std::string rp = path + "/" + std::to_string(i);
    if (!j[i].is_array() || static_cast<int>(j[i].size()) != cols)
      throw SchemaError(rp, "expected " + std::to_string(cols) + " entries");
    for (int k = 0; k < cols; ++k) M(i, k) = get_double(j[i][k], rp + "/" + std::to_string(k));
  }
  return M;
}

VectorXd parse_vector(const json& j, int n, const std::string& path) {
  if (!j.is_array()) throw SchemaError(path, "expected a list of numbers");
  if (n >= 0 && static_cast<int>(j.size()) != n)
    throw SchemaError(path, "expected " + std::to_string(n) + " entries, got " + std::to_string(j.size()));
  VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[i] = get_double(j[i], path + "/" + std::to_string(i));
  return v;
}

json to_json(const MatrixXd& M) {
  json arr = json::array();
  for (int i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (int k = 0; k < M.cols(); ++k) row.push_back(M(i, k));
    arr.push_back(row);
  }
  return arr;
}

json to_json(const VectorXd& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

void check_identity_prefix(const std::vector<Polynomial>& lifting, int n_x) {
  if (static_cast<int>(lifting.size()) < n_x)
    throw AssumptionError(kIdentityPrefix, "lifting has fewer components than the state");
  for (int i = 0; i < n_x; ++i)
    if (!(lifting[i] == Polynomial::variable(lifting[i].arity(), i)))
      throw AssumptionError(kIdentityPrefix, "lifting component " + std::to_string(i) +
                                                 " must be the coordinate x" + std::to_string(i + 1));
}

namespace {

void validate_sets(const StateSet& X, const Box& U, int n_x, int n_u) {
  if (X.dim() != n_x) throw AssumptionError(kPolytopicDomain, "X dimension differs from n_x");
  if (U.dim() != n_u) throw AssumptionError(kPolytopicDomain, "U dimension differs from n_u");
  if (!U.nonempty()) throw AssumptionError(kPolytopicDomain, "U is empty");
  if (X.bounds) {
    if (!X.bounds->nonempty()) throw AssumptionError(kPolytopicDomain, "X is empty");
  } else {
    auto nb = is_nonempty_bounded(X.H);
    if (!nb.nonempty) throw AssumptionError(kPolytopicDomain, "X is empty");
    if (!nb.bounded) throw AssumptionError(kPolytopicDomain, "X is unbounded");
  }
}

}  // namespace

void validate(const UnliftedSystem& sys) {
  if (static_cast<int>(sys.dynamics.size()) != sys.n_x)
    throw InputError("dynamics must have n_x components");
  for (const auto& f : sys.dynamics)
    if (f.arity() != sys.n_x + sys.n_u) throw InputError("dynamics arity must be n_x + n_u");
  validate_sets(sys.X, sys.U, sys.n_x, sys.n_u);
  // The generator set must agree with X x U: sampled members satisfy every
  // l_j, sampled non-members violate at least one.
  const Box xb = sys.X.bounds ? *sys.X.bounds : bounding_box(sys.X.H);
  const int n = sys.n_x + sys.n_u;
  VectorXd lo(n), up(n);
  lo << xb.lower, sys.U.lower;
  up << xb.upper, sys.U.upper;
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int k = 0; k < 400; ++k) {
    // Half the samples in the bounding box, half in a box twice as large.
    const double grow = k % 2 ? 1.0 : 2.0;
    VectorXd p(n);
    for (int i = 0; i < n; ++i) {
      const double c = 0.5 * (lo[i] + up[i]), r = 0.5 * (up[i] - lo[i]) * grow;
      p[i] = c + r * (2.0 * unit(rng) - 1.0);
    }
    const bool member = sys.X.contains(p.head(sys.n_x)) && sys.U.contains(p.tail(sys.n_u));
    double worst = kInf;
    for (const auto& g : sys.generators) worst = std::min(worst, g.eval(p));
    const double scale = 1e-9 * std::max(1.0, up.cwiseAbs().maxCoeff());
    if (member && worst < -scale)
      throw AssumptionError(kGeneratorDescription, "a point of X x U violates a generator");
    if (!member && worst > scale && !sys.generators.empty())
      throw AssumptionError(kGeneratorDescription, "a point outside X x U satisfies all generators");
  }
}

void validate(const AffineLiftedSystem& sys) {
  check_identity_prefix(sys.lifting, sys.n_x);
  for (const auto& p : sys.lifting)
    if (p.arity() != sys.n_x) throw InputError("lifting arity must be n_x");
  const int ny = sys.n_y();
  if (sys.A.rows() != ny || sys.A.cols() != ny) throw InputError("A must be n_y x n_y");
  if (sys.B.rows() != ny || sys.B.cols() != sys.n_u) throw InputError("B must be n_y x n_u");
  if (sys.W.dim() != ny) throw InputError("W dimension must be n_y");
  validate_sets(sys.X, sys.U, sys.n_x, sys.n_u);
  if (!is_nonempty_bounded(sys.W).nonempty) throw AssumptionError(kNonemptyDisturbance, "W is empty");
}

UnliftedSystem parse_unlifted(const json& doc) {
  if (!doc.is_object()) throw SchemaError("", "expected an object");
  const json& kind = field(doc, "kind", "");
  if (kind != "unlifted") throw SchemaError("/kind", "expected \"unlifted\"");
  UnliftedSystem s;
  s.n_x = get_int(field(doc, "n_x", ""), "/n_x", 1);
  s.n_u = get_int(field(doc, "n_u", ""), "/n_u", 0);
  s.variables = parse_names(doc, s.n_x, s.n_u);
  const json& dyn = field(doc, "dynamics", "");
  if (!dyn.is_array() || static_cast<int>(dyn.size()) != s.n_x)
    throw SchemaError("/dynamics", "expected " + std::to_string(s.n_x) + " polynomial records");
  for (int i = 0; i < s.n_x; ++i)
    s.dynamics.push_back(parse_polynomial(dyn[i], s.n_x + s.n_u, "/dynamics/" + std::to_string(i)));
  s.X = parse_state_set(field(doc, "X", ""), s.n_x, "/X");
  s.U = parse_box(field(doc, "U", ""), s.n_u, "/U");
  if (auto it = doc.find("generators"); it != doc.end()) {
    if (!it->is_array()) throw SchemaError("/generators", "expected a list of polynomial records");
    for (size_t k = 0; k < it->size(); ++k)
      s.generators.push_back(parse_polynomial((*it)[k], s.n_x + s.n_u,
                                              "/generators/" + std::to_string(k)));
    s.generators_explicit = true;
  } else {
    const HPolytope Uh = s.U.to_h();
    const int m1 = s.X.H.H.rows(), m2 = Uh.H.rows();
    MatrixXd H = MatrixXd::Zero(m1 + m2, s.n_x + s.n_u);
    H.topLeftCorner(m1, s.n_x) = s.X.H.H;
    H.bottomRightCorner(m2, s.n_u) = Uh.H;
    VectorXd h(m1 + m2);
    h << s.X.H.h, Uh.h;
    s.generators = halfspace_generators(HPolytope(H, h));
  }
  s.policy = parse_policy(doc, s.n_x, s.n_u, s.U);
  validate(s);
  return s;
}

AffineLiftedSystem parse_lifted(const json& doc) {
  if (!doc.is_object()) throw SchemaError("", "expected an object");
  const json& kind = field(doc, "kind", "");
  if (kind != "lifted") throw SchemaError("/kind", "expected \"lifted\"");
  AffineLiftedSystem s;
  s.n_x = get_int(field(doc, "n_x", ""), "/n_x", 1);
  s.n_u = get_int(field(doc, "n_u", ""), "/n_u", 0);
  s.variables = parse_names(doc, s.n_x, s.n_u);
  const json& lif = field(doc, "lifting", "");
  if (!lif.is_array()) throw SchemaError("/lifting", "expected a list of polynomial records");
  for (size_t i = 0; i < lif.size(); ++i)
    s.lifting.push_back(parse_polynomial(lif[i], s.n_x, "/lifting/" + std::to_string(i), s.n_x + s.n_u));
  const int ny = s.n_y();
  s.A = parse_matrix(field(doc, "A", ""), ny, ny, "/A");
  s.B = parse_matrix(field(doc, "B", ""), ny, s.n_u, "/B");
  const json& W = field(doc, "W", "");
  s.W = HPolytope(parse_matrix(field(W, "H", "/W"), -1, ny, "/W/H"),
                  parse_vector(field(W, "h", "/W"), -1, "/W/h"));
  if (s.W.H.rows() != s.W.h.size()) throw SchemaError("/W/h", "length differs from the rows of H");
  s.X = parse_state_set(field(doc, "X", ""), s.n_x, "/X");
  s.U = parse_box(field(doc, "U", ""), s.n_u, "/U");
  s.policy = parse_policy(doc, s.n_x, s.n_u, s.U);
  validate(s);
  return s;
}

Model parse_model(const json& doc) {
  if (!doc.is_object()) throw SchemaError("", "expected an object");
  const json& kind = field(doc, "kind", "");
  if (kind == "unlifted") return parse_unlifted(doc);
  if (kind == "lifted") return parse_lifted(doc);
  throw SchemaError("/kind", "expected \"unlifted\" or \"lifted\"");
}

json serialize(const UnliftedSystem& s) {
  const int w = s.n_x + s.n_u;
  json doc;
  doc["kind"] = "unlifted";
  doc["n_x"] = s.n_x;
  doc["n_u"] = s.n_u;
  doc["variables"] = s.variables;
  json dyn = json::array();
  for (const auto& f : s.dynamics) dyn.push_back(serialize_polynomial(f, w));
  doc["dynamics"] = dyn;
  doc["X"] = serialize_state_set(s.X);
  doc["U"] = json{{"lower", to_json(s.U.lower)}, {"upper", to_json(s.U.upper)}};
  if (s.generators_explicit) {
    json g = json::array();
    for (const auto& l : s.generators) g.push_back(serialize_polynomial(l, w));
    doc["generators"] = g;
  }
  if (s.policy) doc["policy"] = serialize_policy(*s.policy, w);
  return doc;
}

json serialize(const AffineLiftedSystem& s) {
  const int w = s.n_x + s.n_u;
  json doc;
  doc["kind"] = "lifted";
  doc["n_x"] = s.n_x;
  doc["n_u"] = s.n_u;
  doc["variables"] = s.variables;
  json lif = json::array();
  for (const auto& p : s.lifting) lif.push_back(serialize_polynomial(p, w));
  doc["lifting"] = lif;
  doc["A"] = to_json(s.A);
  doc["B"] = to_json(s.B);
  doc["W"] = json{{"H", to_json(s.W.H)}, {"h", to_json(s.W.h)}};
  doc["X"] = serialize_state_set(s.X);
  doc["U"] = json{{"lower", to_json(s.U.lower)}, {"upper", to_json(s.U.upper)}};
  if (s.policy) doc["policy"] = serialize_policy(*s.policy, w);
  return doc;
}

json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const size_t upto = std::min<size_t>(e.byte, text.size());
    const long line = 1 + std::count(text.begin(), text.begin() + upto, '\n');
    throw SchemaError(source + ":" + std::to_string(line), e.what());
  }
}

namespace {

/// Minimal JSON walker that tracks line numbers.
class PointerLocator {
 public:
  explicit PointerLocator(const std::string& text) : s_(text) {}

  int find(const std::vector<std::string>& tokens) {
    ws();
    int line = line_;
    size_t depth = 0;
    while (depth < tokens.size()) {
      const char c = peek();
      bool found = false;
      if (c == '{') {
        ++i_;
        ws();
        if (peek() == '}') break;
        while (true) {
          ws();
          const std::string key = string();
          ws();
          expect(':');
          ws();
          if (key == tokens[depth]) {
            found = true;
            break;
          }
          skip_value();
          ws();
          if (peek() != ',') break;
          ++i_;
        }
      } else if (c == '[') {
        ++i_;
        ws();
        if (peek() == ']') break;
        long want = -1;
        try {
          want = std::stol(tokens[depth]);
        } catch (...) {
          break;
        }
        for (long k = 0;; ++k) {
          ws();
          if (k == want) {
            found = true;
            break;
          }
          skip_value();
          ws();
          if (peek() != ',') break;
          ++i_;
        }
      }
      if (!found) break;
      line = line_;
      ++depth;
    }
    return line;
  }

 private:
  char peek() const {
    if (i_ >= s_.size()) throw std::runtime_error("eof");
    return s_[i_];
  }
  void expect(char c) {
    if (peek() != c) throw std::runtime_error("syntax");
    ++i_;
  }
  void ws() {
    while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) {
      if (s_[i_] == '\n') ++line_;
      ++i_;
    }
  }
  std::string string() {
    expect('"');
    std::string out;
    while (peek() != '"') {
      if (s_[i_] == '\\') ++i_;
      out += s_[i_++];
    }
    ++i_;
    return out;
  }
  void skip_value() {
    ws();
    const char c = peek();
    if (c == '"') {
      string();
    } else if (c == '{' || c == '[') {
      const char close = c == '{' ? '}' : ']';
      ++i_;
      ws();
      if (peek() == close) {
        ++i_;
        return;
      }
      while (true) {
        ws();
        if (c == '{') {
          string();
          ws();
          expect(':');
        }
        skip_value();
        ws();
        if (peek() == ',') {
          ++i_;
          continue;
        }
        expect(close);
        return;
      }
    } else {
      while (i_ < s_.size() && !std::strchr(",]}", s_[i_]) && !std::isspace(static_cast<unsigned char>(s_[i_]))) ++i_;
    }
  }

  const std::string& s_;
  size_t i_ = 0;
  int line_ = 1;
};

}  // namespace

int locate_json_pointer(const std::string& text, const std::string& pointer) {
  std::vector<std::string> tokens;
  if (!pointer.empty()) {
    size_t pos = 1;
    while (pos <= pointer.size()) {
      size_t next = pointer.find('/', pos);
      if (next == std::string::npos) next = pointer.size();
      std::string t = pointer.substr(pos, next - pos);
      for (size_t k; (k = t.find("~1")) != std::string::npos;) t.replace(k, 2, "/");
      for (size_t k; (k = t.find("~0")) != std::string::npos;) t.replace(k, 2, "~");
      tokens.push_back(t);
      pos = next + 1;
    }
  }
  try {
    return PointerLocator(text).find(tokens);
  } catch (const std::exception&) {
    return 0;
  }
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_json_text(ss.str(), path);
}

void write_json_file(const std::string& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  out << doc.dump(2) << "\n";
}

std::vector<Polynomial> parse_lifting(const json& doc, int n_x) {
  if (!doc.is_object()) throw SchemaError("", "expected an object");
  if (doc.contains("n_x") && get_int(doc["n_x"], "/n_x", 1) != n_x)
    throw SchemaError("/n_x", "lifting state dimension differs from the model");
  const json& lif = field(doc, "lifting", "");
  if (!lif.is_array()) throw SchemaError("/lifting", "expected a list of polynomial records");
  const int n_u = doc.contains("n_u") ? get_int(doc["n_u"], "/n_u", 0) : 0;
  std::vector<Polynomial> out;
  for (size_t i = 0; i < lif.size(); ++i)
    out.push_back(parse_polynomial(lif[i], n_x, "/lifting/" + std::to_string(i), n_x + n_u));
  check_identity_prefix(out, n_x);
  return out;
}

VectorXd lift(const AffineLiftedSystem& sys, const VectorXd& x) {
  if (x.size() != sys.n_x)
    throw InputError("lift: expected " + std::to_string(sys.n_x) + " coordinates");
  VectorXd y(sys.n_y());
  for (int i = 0; i < sys.n_y(); ++i) y[i] = sys.lifting[i].eval(x);
  y.head(sys.n_x) = x;
  return y;
}

bool in_domain(const AffineLiftedSystem& sys, const VectorXd& y, double tol) {
  if (y.size() != sys.n_y()) throw InputError("in_domain: dimension mismatch");
  return sys.X.contains(y.head(sys.n_x), tol);
}

VectorXd sample_box(const Box& b, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  VectorXd p(b.dim());
  for (int i = 0; i < b.dim(); ++i) p[i] = b.lower[i] + (b.upper[i] - b.lower[i]) * unit(rng);
  return p;
}

VectorXd sample_state(const StateSet& X, std::mt19937_64& rng) {
  if (X.bounds) return sample_box(*X.bounds, rng);
  const Box bb = bounding_box(X.H);
  for (int k = 0; k < 100000; ++k) {
    VectorXd p = sample_box(bb, rng);
    if (X.contains(p)) return p;
  }
  throw CapacityError("rejection sampling of X failed after 100000 draws");
}

VPolytope state_vertices(const StateSet& X) {
  return X.bounds ? vertices(*X.bounds) : vertices(X.H);
}

AffineLiftedSystem inflate(const AffineLiftedSystem& sys, double delta) {
  AffineLiftedSystem r = sys;
  r.W.h.array() += delta;
  return r;
}

}  // namespace liftsim
