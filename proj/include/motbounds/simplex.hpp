#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace motb {

enum class SolveStatus { optimal, infeasible, unbounded, tolerance_failure };

std::string to_string(SolveStatus s);

/// One row of a linear program over non-negative variables.
struct LpRow {
  enum class Sense { eq, le };
  Sense sense = Sense::eq;
  std::vector<std::pair<std::size_t, double>> coefficients;  // sorted by column
  double rhs = 0.0;
};

struct LpSolution {
  SolveStatus status = SolveStatus::tolerance_failure;
  double objective = 0.0;
  std::vector<double> primal;     // one value per variable
  std::vector<double> row_duals;  // one value per input row, input order
  std::size_t iterations = 0;
  double max_residual = 0.0;      // worst absolute row violation at the optimum
  std::string message;
};

struct SimplexOptions {
  double pivot_tol = 1e-9;
  double reduced_cost_tol = 1e-9;
  double feasibility_tol = 1e-9;        // residuals above this are flagged
  double infeasibility_threshold = 1e-6;  // phase-1 mass above this => infeasible
  std::size_t refactor_interval = 500;
  std::size_t max_iterations = 0;  // 0 = automatic (50000 + 200 * rows)
};

/// Minimizes (or maximizes) objective . x subject to the rows and x >= 0.
///
/// Bundled backend: sparse revised two-phase simplex with a dense basis
/// inverse maintained by elementary row updates and periodically rebuilt by
/// Gaussian elimination. Dantzig pricing with lowest-index tie-breaking,
/// switching to Bland's rule after a degeneracy streak, so repeated runs on
/// identical input are deterministic.
LpSolution solve_lp(std::size_t num_vars, const std::vector<LpRow>& rows,
                    const std::vector<double>& objective, bool maximize,
                    const SimplexOptions& options = {});

/// Abstraction point for alternative LP backends (same contract as solve_lp).
class LpBackend {
 public:
  virtual ~LpBackend() = default;
  virtual LpSolution solve(std::size_t num_vars, const std::vector<LpRow>& rows,
                           const std::vector<double>& objective, bool maximize) const = 0;
};

class SimplexBackend final : public LpBackend {
 public:
  explicit SimplexBackend(SimplexOptions options = {}) : options_(options) {}
  LpSolution solve(std::size_t num_vars, const std::vector<LpRow>& rows,
                   const std::vector<double>& objective, bool maximize) const override {
    return solve_lp(num_vars, rows, objective, maximize, options_);
  }

 private:
  SimplexOptions options_;
};

}  // namespace motb
