#pragma once

#include <limits>
#include <string>
#include <vector>

#include "liftsim/affine_expr.hpp"

namespace liftsim {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Symmetric matrix variable constrained to be PSD. Entry (i,j) and (j,i)
/// share one scalar variable.
struct PsdBlock {
  int dim = 0;
  std::vector<VarId> lower;  // column-major lower triangle, size dim(dim+1)/2
  VarId at(int i, int j) const;
};

/// Linear objective, linear equalities, nonnegativity constraints, variable
/// bounds and PSD blocks over scalar decision variables. Always minimizes.
class ConicProblem {
 public:
  VarId add_variable(double lb = -kInf, double ub = kInf, std::string name = {});
  std::vector<VarId> add_variables(int n, double lb = -kInf, double ub = kInf);
  PsdBlock add_psd_block(int dim);

  /// e == 0
  void add_equality(const AffineExpr& e);
  /// e >= 0
  void add_nonneg(const AffineExpr& e);
  /// a <= b
  void add_le(const AffineExpr& a, const AffineExpr& b) { add_nonneg(b - a); }
  void set_bounds(VarId v, double lb, double ub);
  void set_objective(const AffineExpr& e) { objective_ = e; }

  int num_variables() const { return static_cast<int>(lb_.size()); }
  const std::vector<double>& lower_bounds() const { return lb_; }
  const std::vector<double>& upper_bounds() const { return ub_; }
  const std::vector<AffineExpr>& equalities() const { return eqs_; }
  const std::vector<AffineExpr>& nonnegs() const { return nonnegs_; }
  const std::vector<PsdBlock>& psd_blocks() const { return blocks_; }
  const AffineExpr& objective() const { return objective_; }
  const std::string& name(VarId v) const { return names_.at(v); }

 private:
  void check_expr(const AffineExpr& e) const;

  std::vector<double> lb_, ub_;
  std::vector<std::string> names_;
  std::vector<AffineExpr> eqs_, nonnegs_;
  std::vector<PsdBlock> blocks_;
  AffineExpr objective_;
};

enum class SolveStatus { optimal, infeasible, unbounded, inconclusive };
const char* to_string(SolveStatus s);

enum class Backend { hsd_interior_point };

struct SolverOptions {
  Backend backend = Backend::hsd_interior_point;
  int max_iters = 120;
  double feastol = 1e-9;
  double abstol = 1e-9;
  double reltol = 1e-9;
  /// Reduced tolerances accepted when the method stalls.
  double stall_feastol = 1e-7;
  double stall_reltol = 1e-6;
  /// Independent re-check of returned solutions.
  double recheck_tol = 1e-7;
  bool equilibrate = true;
  bool verbose = false;
};

struct SolveDiagnostics {
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  double recheck_equality = 0.0;  // max |row| / max(1, ||row coeffs||_inf)
  double recheck_nonneg = 0.0;    // max violation of e >= 0 and bounds
  double recheck_psd = 0.0;       // max(0, -min eigenvalue)
  std::string message;
};

struct SolveResult {
  SolveStatus status = SolveStatus::inconclusive;
  std::vector<double> values;  // non-empty iff optimal
  double objective = 0.0;
  SolveDiagnostics diagnostics;

  bool optimal() const { return status == SolveStatus::optimal; }
  double value(VarId v) const { return values.at(v); }
  double eval(const AffineExpr& e) const { return e.eval(values); }
};

/// Never throws on numerical trouble; malformed problems raise InputError.
SolveResult solve(const ConicProblem& problem, const SolverOptions& options = {});

/// Re-evaluates every constraint at `values`; fills the recheck fields and
/// returns true when all are within `tol`.
bool recheck(const ConicProblem& problem, const std::vector<double>& values,
             double tol, SolveDiagnostics& diag);

}  // namespace liftsim
