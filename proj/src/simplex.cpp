#include "motbounds/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace motb {

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    case SolveStatus::tolerance_failure: return "tolerance-failure";
  }
  return "unknown";
}

namespace {

using Column = std::vector<std::pair<std::size_t, double>>;  // (row, coefficient)

// Dense m x m matrix, row-major.
class DenseMatrix {
 public:
  explicit DenseMatrix(std::size_t m) : m_(m), a_(m * m, 0.0) {}
  double& at(std::size_t i, std::size_t j) { return a_[i * m_ + j]; }
  double at(std::size_t i, std::size_t j) const { return a_[i * m_ + j]; }
  double* row(std::size_t i) { return a_.data() + i * m_; }
  const double* row(std::size_t i) const { return a_.data() + i * m_; }
  std::size_t size() const { return m_; }
  void set_identity() {
    std::fill(a_.begin(), a_.end(), 0.0);
    for (std::size_t i = 0; i < m_; ++i) at(i, i) = 1.0;
  }

 private:
  std::size_t m_;
  std::vector<double> a_;
};

// Inverts the matrix whose columns are the given sparse columns, by
// Gauss-Jordan elimination with partial pivoting. Returns false when the
// basis is numerically singular.
bool invert_basis(const std::vector<const Column*>& basis_cols, DenseMatrix& inv) {
  const std::size_t m = inv.size();
  DenseMatrix work(m);
  for (std::size_t j = 0; j < m; ++j) {
    for (const auto& [r, v] : *basis_cols[j]) work.at(r, j) = v;
  }
  inv.set_identity();
  for (std::size_t col = 0; col < m; ++col) {
    std::size_t piv = col;
    double best = std::fabs(work.at(col, col));
    for (std::size_t r = col + 1; r < m; ++r) {
      double cand = std::fabs(work.at(r, col));
      if (cand > best) {
        best = cand;
        piv = r;
      }
    }
    if (best < 1e-12) return false;
    if (piv != col) {
      std::swap_ranges(work.row(piv), work.row(piv) + m, work.row(col));
      std::swap_ranges(inv.row(piv), inv.row(piv) + m, inv.row(col));
    }
    double scale = 1.0 / work.at(col, col);
    for (std::size_t j = 0; j < m; ++j) {
      work.at(col, j) *= scale;
      inv.at(col, j) *= scale;
    }
    for (std::size_t r = 0; r < m; ++r) {
      if (r == col) continue;
      double f = work.at(r, col);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) {
        work.at(r, j) -= f * work.at(col, j);
        inv.at(r, j) -= f * inv.at(col, j);
      }
    }
  }
  return true;
}

struct Tableau {
  std::size_t m = 0;            // rows
  std::vector<Column> cols;     // all columns: structural, slack, artificial
  std::vector<double> cost;     // phase-2 costs
  std::vector<double> b;        // right-hand side, >= 0
  std::size_t n_struct = 0;
  std::size_t first_artificial = 0;  // columns >= this are artificial
};

}  // namespace

LpSolution solve_lp(std::size_t num_vars, const std::vector<LpRow>& rows,
                    const std::vector<double>& objective, bool maximize,
                    const SimplexOptions& options) {
  if (objective.size() != num_vars) {
    throw std::invalid_argument("solve_lp: objective length != variable count");
  }
  const std::size_t m = rows.size();
  LpSolution out;
  out.primal.assign(num_vars, 0.0);
  out.row_duals.assign(m, 0.0);
  if (m == 0) {
    // Only x >= 0: optimum at zero unless improving directions exist.
    for (std::size_t j = 0; j < num_vars; ++j) {
      double c = maximize ? -objective[j] : objective[j];
      if (c < -options.reduced_cost_tol) {
        out.status = SolveStatus::unbounded;
        return out;
      }
    }
    out.status = SolveStatus::optimal;
    out.objective = 0.0;
    return out;
  }

  // Assemble columns in standard form: structural, then one slack per `le`
  // row, with rows negated where needed so b >= 0.
  Tableau t;
  t.m = m;
  t.n_struct = num_vars;
  std::vector<double> row_sign(m, 1.0);
  t.b.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (const auto& [j, v] : rows[i].coefficients) {
      if (j >= num_vars) throw std::invalid_argument("solve_lp: column index out of range");
      if (!std::isfinite(v)) throw std::invalid_argument("solve_lp: non-finite coefficient");
    }
    row_sign[i] = rows[i].rhs < 0.0 ? -1.0 : 1.0;
    t.b[i] = rows[i].rhs * row_sign[i];
  }
  t.cols.resize(num_vars);
  for (std::size_t i = 0; i < m; ++i) {
    for (const auto& [j, v] : rows[i].coefficients) {
      if (v != 0.0) t.cols[j].push_back({i, v * row_sign[i]});
    }
  }
  t.cost.assign(num_vars, 0.0);
  for (std::size_t j = 0; j < num_vars; ++j) {
    t.cost[j] = maximize ? -objective[j] : objective[j];
  }
  std::vector<std::size_t> slack_of_row(m, SIZE_MAX);
  for (std::size_t i = 0; i < m; ++i) {
    if (rows[i].sense == LpRow::Sense::le) {
      slack_of_row[i] = t.cols.size();
      t.cols.push_back({{i, row_sign[i]}});
      t.cost.push_back(0.0);
    }
  }
  t.first_artificial = t.cols.size();

  // Initial basis: the slack where it enters with +1, an artificial
  // otherwise.
  std::vector<std::size_t> basis(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (slack_of_row[i] != SIZE_MAX && row_sign[i] > 0.0) {
      basis[i] = slack_of_row[i];
    } else {
      basis[i] = t.cols.size();
      t.cols.push_back({{i, 1.0}});
      t.cost.push_back(0.0);
    }
  }
  const std::size_t n_total = t.cols.size();
  std::vector<double> phase1_cost(n_total, 0.0);
  for (std::size_t j = t.first_artificial; j < n_total; ++j) phase1_cost[j] = 1.0;

  DenseMatrix binv(m);
  binv.set_identity();
  std::vector<double> xb = t.b;
  std::vector<char> in_basis(n_total, 0);
  for (std::size_t i = 0; i < m; ++i) in_basis[basis[i]] = 1;

  const std::size_t max_iter =
      options.max_iterations ? options.max_iterations : 50000 + 200 * m;
  std::size_t total_iters = 0;
  std::size_t since_refactor = 0;
  std::size_t degenerate_streak = 0;
  bool bland = false;

  std::vector<double> y(m), d(m);

  // Replaces basis[leaving] by `entering`, assuming d = B^{-1} a_entering has
  // already been computed and d[leaving] != 0.
  auto do_pivot = [&](std::size_t entering, std::size_t leaving, double theta) {
    const double piv = d[leaving];
    for (std::size_t i = 0; i < m; ++i) {
      if (i != leaving) xb[i] -= theta * d[i];
    }
    xb[leaving] = theta;
    in_basis[basis[leaving]] = 0;
    in_basis[entering] = 1;
    basis[leaving] = entering;
    double* lr = binv.row(leaving);
    for (std::size_t j = 0; j < m; ++j) lr[j] /= piv;
    for (std::size_t i = 0; i < m; ++i) {
      if (i == leaving) continue;
      double f = d[i];
      if (f == 0.0) continue;
      double* ir = binv.row(i);
      for (std::size_t j = 0; j < m; ++j) ir[j] -= f * lr[j];
    }
  };

  auto refactor = [&]() -> bool {
    std::vector<const Column*> bc(m);
    for (std::size_t i = 0; i < m; ++i) bc[i] = &t.cols[basis[i]];
    if (!invert_basis(bc, binv)) return false;
    for (std::size_t i = 0; i < m; ++i) {
      double v = 0.0;
      const double* row = binv.row(i);
      for (std::size_t r = 0; r < m; ++r) v += row[r] * t.b[r];
      xb[i] = v;
    }
    since_refactor = 0;
    return true;
  };

  // Runs simplex iterations for the given cost vector; `allow` marks the
  // columns that may enter. Returns status.
  auto iterate = [&](const std::vector<double>& cost,
                     const std::vector<char>& allow) -> SolveStatus {
    while (true) {
      if (++total_iters > max_iter) return SolveStatus::tolerance_failure;
      // Duals of the working cost: y = c_B B^{-1}.
      for (std::size_t r = 0; r < m; ++r) {
        double v = 0.0;
        for (std::size_t i = 0; i < m; ++i) v += cost[basis[i]] * binv.at(i, r);
        y[r] = v;
      }
      // Pricing.
      std::size_t entering = SIZE_MAX;
      double best = -options.reduced_cost_tol;
      for (std::size_t j = 0; j < n_total; ++j) {
        if (in_basis[j] || !allow[j]) continue;
        double r = cost[j];
        for (const auto& [row, v] : t.cols[j]) r -= y[row] * v;
        if (bland) {
          if (r < -options.reduced_cost_tol) {
            entering = j;
            break;
          }
        } else if (r < best) {
          best = r;
          entering = j;
        }
      }
      if (entering == SIZE_MAX) return SolveStatus::optimal;

      // Direction d = B^{-1} a_j.
      std::fill(d.begin(), d.end(), 0.0);
      for (const auto& [row, v] : t.cols[entering]) {
        for (std::size_t i = 0; i < m; ++i) d[i] += binv.at(i, row) * v;
      }
      // Ratio test, lowest basis-index tie-break.
      std::size_t leaving = SIZE_MAX;
      double theta = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < m; ++i) {
        if (d[i] > options.pivot_tol) {
          double ratio = xb[i] / d[i];
          if (ratio < theta - 1e-12 ||
              (ratio < theta + 1e-12 &&
               (leaving == SIZE_MAX || basis[i] < basis[leaving]))) {
            theta = ratio;
            leaving = i;
          }
        }
      }
      if (leaving == SIZE_MAX) return SolveStatus::unbounded;
      if (theta <= options.pivot_tol) {
        if (++degenerate_streak > 50 + m) bland = true;
      } else {
        degenerate_streak = 0;
        bland = false;
      }

      // Pivot: update basis, values and the inverse.
      do_pivot(entering, leaving, theta);
      if (++since_refactor >= options.refactor_interval) {
        if (!refactor()) return SolveStatus::tolerance_failure;
      }
    }
  };

  // Phase 1: minimize the artificial mass.
  std::vector<char> allow_all(n_total, 1);
  SolveStatus st = iterate(phase1_cost, allow_all);
  if (st != SolveStatus::optimal) {
    out.status = st == SolveStatus::unbounded ? SolveStatus::tolerance_failure : st;
    out.iterations = total_iters;
    out.message = "phase-1 " + to_string(st);
    return out;
  }
  double artificial_mass = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (basis[i] >= t.first_artificial) artificial_mass += xb[i];
  }
  if (artificial_mass > options.infeasibility_threshold) {
    out.status = SolveStatus::infeasible;
    out.iterations = total_iters;
    std::ostringstream os;
    os << "infeasible: residual mass " << artificial_mass << " after phase 1";
    out.message = os.str();
    return out;
  }
  if (artificial_mass > options.feasibility_tol) {
    out.status = SolveStatus::tolerance_failure;
    out.iterations = total_iters;
    std::ostringstream os;
    os << "marginally inconsistent rows: phase-1 mass " << artificial_mass;
    out.message = os.str();
    return out;
  }

  // Drive zero-level artificials out of the basis: left in place, a later
  // pivot with a negative direction entry could push them positive and
  // silently violate their rows. Where no pivot entry exists, the row is
  // linearly dependent and the artificial can never move off zero.
  for (std::size_t i = 0; i < m; ++i) {
    if (basis[i] < t.first_artificial) continue;
    std::size_t entering = SIZE_MAX;
    for (std::size_t j = 0; j < t.first_artificial && entering == SIZE_MAX; ++j) {
      if (in_basis[j]) continue;
      double di = 0.0;
      for (const auto& [row, v] : t.cols[j]) di += binv.at(i, row) * v;
      if (std::fabs(di) > options.pivot_tol) entering = j;
    }
    if (entering == SIZE_MAX) continue;
    std::fill(d.begin(), d.end(), 0.0);
    for (const auto& [row, v] : t.cols[entering]) {
      for (std::size_t r = 0; r < m; ++r) d[r] += binv.at(r, row) * v;
    }
    do_pivot(entering, i, 0.0);
    if (++since_refactor >= options.refactor_interval && !refactor()) {
      out.status = SolveStatus::tolerance_failure;
      out.iterations = total_iters;
      out.message = "singular basis while removing artificials";
      return out;
    }
  }

  // Phase 2: artificials may not re-enter.
  std::vector<char> allow(n_total, 1);
  for (std::size_t j = t.first_artificial; j < n_total; ++j) allow[j] = 0;
  degenerate_streak = 0;
  bland = false;
  st = iterate(t.cost, allow);
  if (st == SolveStatus::tolerance_failure || st == SolveStatus::unbounded) {
    out.status = st;
    out.iterations = total_iters;
    out.message = "phase-2 " + to_string(st);
    return out;
  }

  // Recover the primal/dual pair in the caller's orientation.
  if (!refactor()) {
    out.status = SolveStatus::tolerance_failure;
    out.message = "singular basis at termination";
    return out;
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (basis[i] < num_vars) out.primal[basis[i]] = std::max(xb[i], 0.0);
  }
  double obj = 0.0;
  for (std::size_t j = 0; j < num_vars; ++j) obj += objective[j] * out.primal[j];
  out.objective = obj;
  for (std::size_t r = 0; r < m; ++r) {
    double v = 0.0;
    for (std::size_t i = 0; i < m; ++i) v += t.cost[basis[i]] * binv.at(i, r);
    // Undo the row-sign normalization and the min/max flip.
    double dual = v * row_sign[r];
    out.row_duals[r] = maximize ? -dual : dual;
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double lhs = 0.0;
    for (const auto& [j, v] : rows[i].coefficients) lhs += v * out.primal[j];
    double viol = rows[i].sense == LpRow::Sense::eq ? std::fabs(lhs - rows[i].rhs)
                                                    : std::max(lhs - rows[i].rhs, 0.0);
    worst = std::max(worst, viol);
  }
  out.max_residual = worst;
  out.iterations = total_iters;
  if (worst > options.infeasibility_threshold) {
    out.status = SolveStatus::tolerance_failure;
    std::ostringstream os;
    os << "optimal basis violates rows by " << worst;
    out.message = os.str();
    return out;
  }
  out.status = SolveStatus::optimal;
  return out;
}

}  // namespace motb
