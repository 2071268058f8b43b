#pragma once

#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "liftsim/polyalg.hpp"
#include "liftsim/polytope.hpp"

namespace liftsim {

using json = nlohmann::json;

/// Memoryless polynomial state feedback, clamped to U.
struct Policy {
  std::vector<Polynomial> pi;  // n_u polynomials over x
  Box U;

  Eigen::VectorXd eval(const Eigen::VectorXd& x) const;
};

/// Polynomial state set: X either as bounds or as halfspaces.
struct StateSet {
  HPolytope H;
  std::optional<Box> bounds;  // set when the document used bounds

  static StateSet from_box(const Box& b);
  static StateSet from_h(const HPolytope& P);
  bool contains(const Eigen::VectorXd& x, double tol = 0.0) const;
  int dim() const { return H.dim(); }
};

/// x+ = f(x, u) with x in X, u in U.
struct UnliftedSystem {
  int n_x = 0, n_u = 0;
  std::vector<std::string> variables;  // n_x + n_u names
  std::vector<Polynomial> dynamics;    // n_x polynomials over (x, u)
  StateSet X;
  Box U;
  /// l_j over (x, u) with {l_j >= 0} = X x U. Defaults to the halfspaces.
  std::vector<Polynomial> generators;
  bool generators_explicit = false;
  std::optional<Policy> policy;

  Eigen::VectorXd step(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
};

/// y+ in A y + B u + W, y(0) = psi(x(0)), output x = y[0:n_x].
struct AffineLiftedSystem {
  int n_x = 0, n_u = 0;
  std::vector<std::string> variables;  // n_x + n_u names
  std::vector<Polynomial> lifting;     // n_y polynomials over x
  Eigen::MatrixXd A, B;
  HPolytope W;
  StateSet X;
  Box U;
  std::optional<Policy> policy;

  int n_y() const { return static_cast<int>(lifting.size()); }
  int n_bar() const { return n_y() - n_x; }
};

/// Named assumptions used in AssumptionError.
inline constexpr const char* kIdentityPrefix = "identity-prefix lifting";
inline constexpr const char* kNonemptyDisturbance = "nonempty disturbance set";
inline constexpr const char* kPolytopicDomain = "polytopic state and input sets";
inline constexpr const char* kGeneratorDescription = "generators describe X x U";
inline constexpr const char* kBoundedDisturbance = "bounded disturbance set";
inline constexpr const char* kFullDimensional = "full-dimensional disturbance set";

using Model = std::variant<UnliftedSystem, AffineLiftedSystem>;

/// Parses and validates a model document. Throws SchemaError or
/// AssumptionError.
Model parse_model(const json& doc);
UnliftedSystem parse_unlifted(const json& doc);
AffineLiftedSystem parse_lifted(const json& doc);
json serialize(const UnliftedSystem& sys);
json serialize(const AffineLiftedSystem& sys);

/// Reads a JSON file; syntax errors become SchemaError with a line number.
json read_json_file(const std::string& path);
json parse_json_text(const std::string& text, const std::string& source = "<input>");
/// 1-based line of the value a JSON pointer names in `text`; for a missing
/// member, the line of the deepest enclosing value that exists. 0 when the
/// text is not valid JSON.
int locate_json_pointer(const std::string& text, const std::string& pointer);
void write_json_file(const std::string& path, const json& doc);

/// Polynomial record list <-> Polynomial. Exponent vectors may have length
/// `arity` or `alt_arity` (trailing entries must then be zero).
Polynomial parse_polynomial(const json& j, int arity, const std::string& path, int alt_arity = -1);
json serialize_polynomial(const Polynomial& p, int width);

Eigen::MatrixXd parse_matrix(const json& j, int rows, int cols, const std::string& path);
Eigen::VectorXd parse_vector(const json& j, int n, const std::string& path);
json to_json(const Eigen::MatrixXd& M);
json to_json(const Eigen::VectorXd& v);

/// Lifting functions document: {n_x, lifting: [records], variables?}.
std::vector<Polynomial> parse_lifting(const json& doc, int n_x);
/// The "policy" field of doc (n_u polynomials over x), nullopt if absent.
std::optional<Policy> parse_policy(const json& doc, int n_x, int n_u, const Box& U);

/// Assumption checks (also run by the parsers).
void validate(const UnliftedSystem& sys);
void validate(const AffineLiftedSystem& sys);
void check_identity_prefix(const std::vector<Polynomial>& lifting, int n_x);

/// psi(x); first n_x entries equal x.
Eigen::VectorXd lift(const AffineLiftedSystem& sys, const Eigen::VectorXd& x);
/// First n_x entries of y lie in X.
bool in_domain(const AffineLiftedSystem& sys, const Eigen::VectorXd& y, double tol = 0.0);

/// Uniform sample of X (rejection from the bounding box for H-polytopes).
Eigen::VectorXd sample_state(const StateSet& X, std::mt19937_64& rng);
Eigen::VectorXd sample_box(const Box& b, std::mt19937_64& rng);

/// Vertices of X (box corners or H-polytope enumeration).
VPolytope state_vertices(const StateSet& X);

/// Same system with every W offset increased by delta.
AffineLiftedSystem inflate(const AffineLiftedSystem& sys, double delta);

}  // namespace liftsim
