#pragma once

#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace liftsim {

/// {w | H w <= h}
struct HPolytope {
  Eigen::MatrixXd H;
  Eigen::VectorXd h;

  HPolytope() = default;
  HPolytope(Eigen::MatrixXd H_, Eigen::VectorXd h_);
  int dim() const { return static_cast<int>(H.cols()); }
  int rows() const { return static_cast<int>(H.rows()); }
  /// max_i (H_i w - h_i)
  double violation(const Eigen::VectorXd& w) const;
  bool contains(const Eigen::VectorXd& w, double tol = 1e-8) const { return violation(w) <= tol; }
  /// Same set with every row scaled to unit Euclidean norm.
  HPolytope normalized() const;
};

/// Axis-aligned box [lower, upper].
struct Box {
  Eigen::VectorXd lower, upper;

  Box() = default;
  Box(Eigen::VectorXd lo, Eigen::VectorXd up);
  int dim() const { return static_cast<int>(lower.size()); }
  bool nonempty() const { return (lower.array() <= upper.array()).all(); }
  bool contains(const Eigen::VectorXd& w, double tol = 0.0) const;
  Eigen::VectorXd center() const { return 0.5 * (lower + upper); }
  /// Rows +e_i (offset upper_i) then -e_i (offset -lower_i), interleaved per axis.
  HPolytope to_h() const;
};

/// Convex hull of a finite point list (not necessarily irredundant).
struct VPolytope {
  std::vector<Eigen::VectorXd> vertices;

  VPolytope() = default;
  explicit VPolytope(std::vector<Eigen::VectorXd> v);
  int dim() const { return vertices.empty() ? 0 : static_cast<int>(vertices[0].size()); }
  int size() const { return static_cast<int>(vertices.size()); }
  /// max over vertices of d'v
  double support(const Eigen::VectorXd& d) const;
  /// Drop duplicate points (within tol, infinity norm).
  VPolytope deduplicated(double tol = 1e-12) const;
};

/// Maximum dimension accepted by H-polytope vertex enumeration.
constexpr int kMaxEnumerationDim = 8;

VPolytope vertices(const Box& box);
/// Exact facet-intersection enumeration with feasibility filtering.
/// Throws EmptyError, UnboundedError or CapacityError.
VPolytope vertices(const HPolytope& P, double tol = 1e-9);

/// H-representation of conv(P): facets of the hull within its affine hull,
/// plus each affine-hull equality as a pair of opposite rows. Facets come
/// from every affinely independent subset of r points (r = hull dimension)
/// whose hyperplane leaves all points on one side. Throws CapacityError past
/// 5e6 subsets and EmptyError for an empty list.
HPolytope facets(const VPolytope& P, double tol = 1e-9);

VPolytope minkowski_sum(const VPolytope& P, const VPolytope& Q);
VPolytope affine_image(const Eigen::MatrixXd& M, const VPolytope& P);
VPolytope affine_image(const Eigen::MatrixXd& M, const VPolytope& P, const Eigen::VectorXd& offset);

struct ContainmentResult {
  bool contained = false;
  double max_violation = 0.0;
};

/// Every vertex v of P satisfies H v <= h + tol.
ContainmentResult contains(const VPolytope& P, const HPolytope& Q, double tol = 1e-8);

/// One term M * S of a Minkowski sum, S in H- or V-representation.
struct SumTerm {
  Eigen::MatrixXd M;
  std::variant<HPolytope, VPolytope> set;
};

/// Point membership in sum_k M_k S_k decided by one LP. The equality is
/// exact; the reported violation is the smallest uniform relaxation t of the
/// (row-normalized) H inequalities and of the convex weights that admits a
/// witness. kInf when the equality system itself has no solution.
ContainmentResult point_in_sum(const Eigen::VectorXd& v, const std::vector<SumTerm>& terms,
                               double tol = 1e-8);
/// All vertices of P in sum_k M_k S_k.
ContainmentResult contains_in_sum(const VPolytope& P, const std::vector<SumTerm>& terms,
                                  double tol = 1e-8);

struct NonemptyBounded {
  bool nonempty = false;
  bool bounded = false;
};
/// Nonemptiness by a feasibility LP with slack 1e-9, boundedness by
/// maximizing +-e_i.
NonemptyBounded is_nonempty_bounded(const HPolytope& P);

/// Tightest axis-aligned box (LP per axis). Throws on empty/unbounded.
Box bounding_box(const HPolytope& P);
/// Center of the largest inscribed ball. Throws EmptyError.
Eigen::VectorXd chebyshev_center(const HPolytope& P);

}  // namespace liftsim
