#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "motbounds/marginal.hpp"
#include "motbounds/simplex.hpp"

namespace motb {

/// Product grid over all (maturity, asset) axes of a marginal system, in
/// row-major order over axes sorted lexicographically by (maturity, asset),
/// last axis fastest. Candidate martingale measures are vectors of cell
/// masses on this grid.
class JointGrid {
 public:
  JointGrid(const MarginalSystem& ms, std::size_t cell_cap = 5000000);

  std::size_t maturities() const { return n_; }
  std::size_t assets() const { return d_; }
  std::size_t axis_count() const { return n_ * d_; }
  std::size_t cells() const { return cells_; }

  std::size_t axis(std::size_t maturity, std::size_t asset) const {
    return maturity * d_ + asset;
  }
  const std::vector<double>& atoms(std::size_t axis_idx) const { return atoms_[axis_idx]; }

  /// Atom index on one axis of a given cell.
  std::size_t atom_index(std::size_t cell, std::size_t axis_idx) const {
    return (cell / strides_[axis_idx]) % atoms_[axis_idx].size();
  }
  /// Coordinate value S_{t_i}^k of a cell.
  double coordinate(std::size_t cell, std::size_t maturity, std::size_t asset) const {
    std::size_t a = axis(maturity, asset);
    return atoms_[a][atom_index(cell, a)];
  }
  std::vector<std::size_t> unrank(std::size_t cell) const;

 private:
  std::size_t n_, d_;
  std::vector<std::vector<double>> atoms_;
  std::vector<std::size_t> strides_;
  std::size_t cells_;
};

JointGrid build_joint_grid(const MarginalSystem& ms, std::size_t cell_cap = 5000000);

/// A linear constraint on the cell masses, with bookkeeping that lets dual
/// values be mapped back to hedging instruments.
struct LinearConstraint {
  enum class Sense { eq, le };
  enum class Kind { marginal, mass, martingale, extra };

  Sense sense = Sense::eq;
  std::vector<std::pair<std::size_t, double>> coefficients;  // sorted by cell
  double rhs = 0.0;
  std::string label;

  Kind kind = Kind::extra;
  std::size_t axis = 0;      // marginal rows: axis index
  std::size_t atom = 0;      // marginal rows: atom index
  std::size_t asset = 0;     // martingale rows: asset k
  std::size_t step = 0;      // martingale rows: step j (0 = mean row)
};

/// One equality row per (axis, atom) — the projection of the measure onto
/// that axis must reproduce the marginal weight — plus the total-mass row.
/// Exact duplicate rows are removed.
std::vector<LinearConstraint> marginal_constraints(const JointGrid& grid,
                                                   const MarginalSystem& ms);

/// Martingale rows: for each asset k and step j = 0..n-1, one equality row
/// per combination y of atoms over the first j maturities (all assets),
///   sum_{cells with prefix y} q * (x_{j+1}^k - x_j^k) = 0,
/// where j = 0 contributes the unconditional mean row E[S_{t_1}^k] = S_0^k.
std::vector<LinearConstraint> martingale_constraints(const JointGrid& grid,
                                                     const MarginalSystem& ms);

/// Removes exact duplicates (same sense, coefficients and rhs), keeping the
/// first occurrence.
void dedupe_constraints(std::vector<LinearConstraint>& constraints);

struct SideResult {
  SolveStatus status = SolveStatus::tolerance_failure;
  double value = 0.0;
  LpSolution solution;
};

struct BoundResult {
  SideResult lower;
  SideResult upper;
};

/// Minimum and maximum of sum_cell q * payoff over the feasible masses.
BoundResult solve_bounds(const JointGrid& grid, const std::vector<double>& payoff,
                         const std::vector<LinearConstraint>& constraints,
                         const SimplexOptions& options = {});

/// Range of E_Q[f] over the current feasible set.
std::pair<double, double> functional_range(const JointGrid& grid,
                                           const std::vector<LinearConstraint>& constraints,
                                           const std::vector<double>& f,
                                           const SimplexOptions& options = {});

struct FeasibilityStep {
  std::string label;
  bool consistent = false;
  double admissible_lo = 0.0;
  double admissible_hi = 0.0;
  double rhs = 0.0;
};

struct FeasibilityReport {
  bool consistent = true;
  std::vector<FeasibilityStep> steps;  // stops after the first violation
};

/// Adds the extra constraints one at a time (declared order) and checks each
/// right-hand side against the admissible interval of its functional over
/// the partially constrained set.
FeasibilityReport feasibility_check(const JointGrid& grid,
                                    const std::vector<LinearConstraint>& base,
                                    const std::vector<LinearConstraint>& extras,
                                    const SimplexOptions& options = {});

/// Static/dynamic hedge read off the LP duals of one bound side.
struct DualStrategy {
  bool upper = true;  // super-replication (true) or sub-replication (false)
  double cash = 0.0;  // total-mass row dual
  /// Per axis, dual value at each atom: the static option position u_i^k.
  std::vector<std::vector<double>> marginal_positions;
  struct Trading {
    std::size_t asset = 0;
    std::size_t step = 0;  // 0 = position entered at time 0
    std::string label;
    double delta = 0.0;  // units of asset k held over (t_j, t_{j+1}]
  };
  std::vector<Trading> trading;
  std::vector<double> alpha;  // duals of extra eq rows, in input order
  std::vector<double> beta;   // duals of extra le rows, >= 0 for valid hedges
  double price = 0.0;         // value of the hedge portfolio
  double worst_slack = 0.0;   // min over cells of replication slack (>= -1e-7)
};

/// Maps row duals to hedge instruments and verifies super-(sub-)replication
/// against the payoff on every cell as well as the price match with the
/// primal optimum. Throws std::runtime_error when verification fails.
DualStrategy extract_dual(const JointGrid& grid, const std::vector<LinearConstraint>& constraints,
                          const std::vector<double>& payoff, const SideResult& side, bool upper);

/// Writes the problem in LP interchange text format for external
/// cross-checks.
void dump_lp(std::ostream& os, const std::vector<double>& objective,
             const std::vector<LinearConstraint>& constraints, bool maximize);

}  // namespace motb
