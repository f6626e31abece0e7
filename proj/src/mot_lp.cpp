#include "motbounds/mot_lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace motb {

namespace {

std::vector<LpRow> to_lp_rows(const std::vector<LinearConstraint>& constraints) {
  std::vector<LpRow> rows;
  rows.reserve(constraints.size());
  for (const LinearConstraint& c : constraints) {
    LpRow r;
    r.sense = c.sense == LinearConstraint::Sense::eq ? LpRow::Sense::eq : LpRow::Sense::le;
    r.coefficients = c.coefficients;
    r.rhs = c.rhs;
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace

JointGrid::JointGrid(const MarginalSystem& ms, std::size_t cell_cap)
    : n_(ms.maturities()), d_(ms.assets()) {
  atoms_.resize(n_ * d_);
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t k = 0; k < d_; ++k) {
      atoms_[axis(i, k)] = ms.marginal(i, k).atoms();
      if (atoms_[axis(i, k)].empty()) {
        throw std::invalid_argument("JointGrid: empty marginal");
      }
    }
  }
  strides_.assign(atoms_.size(), 1);
  cells_ = 1;
  for (std::size_t a = atoms_.size(); a-- > 0;) {
    strides_[a] = cells_;
    if (cells_ > cell_cap / atoms_[a].size() + 1) {
      std::ostringstream os;
      os << "JointGrid: cell count exceeds cap " << cell_cap;
      throw std::invalid_argument(os.str());
    }
    cells_ *= atoms_[a].size();
  }
  if (cells_ > cell_cap) {
    std::ostringstream os;
    os << "JointGrid: cell count " << cells_ << " exceeds cap " << cell_cap;
    throw std::invalid_argument(os.str());
  }
}

std::vector<std::size_t> JointGrid::unrank(std::size_t cell) const {
  std::vector<std::size_t> idx(atoms_.size());
  for (std::size_t a = 0; a < atoms_.size(); ++a) idx[a] = atom_index(cell, a);
  return idx;
}

JointGrid build_joint_grid(const MarginalSystem& ms, std::size_t cell_cap) {
  return JointGrid(ms, cell_cap);
}

std::vector<LinearConstraint> marginal_constraints(const JointGrid& grid,
                                                   const MarginalSystem& ms) {
  std::vector<LinearConstraint> out;
  const std::size_t N = grid.cells();
  for (std::size_t i = 0; i < grid.maturities(); ++i) {
    for (std::size_t k = 0; k < grid.assets(); ++k) {
      const std::size_t a = grid.axis(i, k);
      const auto& weights = ms.marginal(i, k).weights();
      std::size_t base = out.size();
      for (std::size_t j = 0; j < weights.size(); ++j) {
        LinearConstraint c;
        c.sense = LinearConstraint::Sense::eq;
        c.rhs = weights[j];
        c.kind = LinearConstraint::Kind::marginal;
        c.axis = a;
        c.atom = j;
        std::ostringstream os;
        os << "marginal t" << i + 1 << " a" << k + 1 << " atom" << j;
        c.label = os.str();
        out.push_back(std::move(c));
      }
      for (std::size_t cell = 0; cell < N; ++cell) {
        out[base + grid.atom_index(cell, a)].coefficients.push_back({cell, 1.0});
      }
    }
  }
  LinearConstraint mass;
  mass.sense = LinearConstraint::Sense::eq;
  mass.rhs = 1.0;
  mass.kind = LinearConstraint::Kind::mass;
  mass.label = "mass";
  mass.coefficients.reserve(N);
  for (std::size_t cell = 0; cell < N; ++cell) mass.coefficients.push_back({cell, 1.0});
  out.push_back(std::move(mass));
  dedupe_constraints(out);
  return out;
}

std::vector<LinearConstraint> martingale_constraints(const JointGrid& grid,
                                                     const MarginalSystem& ms) {
  const std::size_t n = grid.maturities(), d = grid.assets(), N = grid.cells();
  std::vector<LinearConstraint> out;
  for (std::size_t j = 0; j < n; ++j) {
    // Number of atom combinations over the first j maturities (all assets).
    std::size_t prefixes = 1;
    for (std::size_t i = 0; i < j; ++i) {
      for (std::size_t k = 0; k < d; ++k) prefixes *= grid.atoms(grid.axis(i, k)).size();
    }
    for (std::size_t k = 0; k < d; ++k) {
      std::size_t base = out.size();
      for (std::size_t p = 0; p < prefixes; ++p) {
        LinearConstraint c;
        c.sense = LinearConstraint::Sense::eq;
        c.rhs = 0.0;
        c.kind = LinearConstraint::Kind::martingale;
        c.asset = k;
        c.step = j;
        std::ostringstream os;
        if (j == 0) {
          os << "martingale a" << k + 1 << " mean";
        } else {
          os << "martingale a" << k + 1 << " step" << j << " prefix" << p;
        }
        c.label = os.str();
        out.push_back(std::move(c));
      }
      for (std::size_t cell = 0; cell < N; ++cell) {
        std::size_t prefix = 0;
        for (std::size_t i = 0; i < j; ++i) {
          for (std::size_t kk = 0; kk < d; ++kk) {
            std::size_t a = grid.axis(i, kk);
            prefix = prefix * grid.atoms(a).size() + grid.atom_index(cell, a);
          }
        }
        double from = j == 0 ? ms.spot(k) : grid.coordinate(cell, j - 1, k);
        double diff = grid.coordinate(cell, j, k) - from;
        if (diff != 0.0) out[base + prefix].coefficients.push_back({cell, diff});
      }
    }
  }
  dedupe_constraints(out);
  return out;
}

void dedupe_constraints(std::vector<LinearConstraint>& constraints) {
  std::vector<LinearConstraint> unique;
  for (auto& c : constraints) {
    bool dup = false;
    for (const auto& u : unique) {
      if (u.sense == c.sense && u.rhs == c.rhs && u.coefficients == c.coefficients) {
        dup = true;
        break;
      }
    }
    if (!dup) unique.push_back(std::move(c));
  }
  constraints = std::move(unique);
}

BoundResult solve_bounds(const JointGrid& grid, const std::vector<double>& payoff,
                         const std::vector<LinearConstraint>& constraints,
                         const SimplexOptions& options) {
  if (payoff.size() != grid.cells()) {
    throw std::invalid_argument("solve_bounds: payoff size != cell count");
  }
  for (double v : payoff) {
    if (!std::isfinite(v)) throw std::invalid_argument("solve_bounds: non-finite payoff value");
  }
  auto rows = to_lp_rows(constraints);
  BoundResult out;
  out.lower.solution = solve_lp(grid.cells(), rows, payoff, /*maximize=*/false, options);
  out.lower.status = out.lower.solution.status;
  out.lower.value = out.lower.solution.objective;
  out.upper.solution = solve_lp(grid.cells(), rows, payoff, /*maximize=*/true, options);
  out.upper.status = out.upper.solution.status;
  out.upper.value = out.upper.solution.objective;
  return out;
}

std::pair<double, double> functional_range(const JointGrid& grid,
                                           const std::vector<LinearConstraint>& constraints,
                                           const std::vector<double>& f,
                                           const SimplexOptions& options) {
  BoundResult r = solve_bounds(grid, f, constraints, options);
  if (r.lower.status != SolveStatus::optimal || r.upper.status != SolveStatus::optimal) {
    std::ostringstream os;
    os << "functional_range: solve failed (lower " << to_string(r.lower.status) << ", upper "
       << to_string(r.upper.status) << ")";
    throw std::runtime_error(os.str());
  }
  return {r.lower.value, r.upper.value};
}

FeasibilityReport feasibility_check(const JointGrid& grid,
                                    const std::vector<LinearConstraint>& base,
                                    const std::vector<LinearConstraint>& extras,
                                    const SimplexOptions& options) {
  FeasibilityReport report;
  std::vector<LinearConstraint> working = base;
  for (const LinearConstraint& e : extras) {
    std::vector<double> f(grid.cells(), 0.0);
    for (const auto& [cell, v] : e.coefficients) f[cell] = v;
    auto [lo, hi] = functional_range(grid, working, f, options);
    FeasibilityStep step;
    step.label = e.label;
    step.admissible_lo = lo;
    step.admissible_hi = hi;
    step.rhs = e.rhs;
    const double tol = 1e-9 * std::max({1.0, std::fabs(lo), std::fabs(hi)});
    if (e.sense == LinearConstraint::Sense::eq) {
      step.consistent = (e.rhs >= lo - tol && e.rhs <= hi + tol);
    } else {
      step.consistent = (e.rhs >= lo - tol);
    }
    report.steps.push_back(step);
    if (!step.consistent) {
      report.consistent = false;
      return report;
    }
    working.push_back(e);
  }
  return report;
}

DualStrategy extract_dual(const JointGrid& grid, const std::vector<LinearConstraint>& constraints,
                          const std::vector<double>& payoff, const SideResult& side, bool upper) {
  if (side.status != SolveStatus::optimal) {
    throw std::runtime_error("extract_dual: side is not optimal");
  }
  const std::vector<double>& y = side.solution.row_duals;
  if (y.size() != constraints.size()) {
    throw std::runtime_error("extract_dual: dual/constraint size mismatch");
  }

  DualStrategy s;
  s.upper = upper;
  s.marginal_positions.resize(grid.axis_count());
  for (std::size_t a = 0; a < grid.axis_count(); ++a) {
    s.marginal_positions[a].assign(grid.atoms(a).size(), 0.0);
  }
  double price = 0.0;
  for (std::size_t r = 0; r < constraints.size(); ++r) {
    const LinearConstraint& c = constraints[r];
    price += y[r] * c.rhs;
    switch (c.kind) {
      case LinearConstraint::Kind::mass:
        s.cash += y[r];
        break;
      case LinearConstraint::Kind::marginal:
        s.marginal_positions[c.axis][c.atom] += y[r];
        break;
      case LinearConstraint::Kind::martingale: {
        DualStrategy::Trading t;
        t.asset = c.asset;
        t.step = c.step;
        t.label = c.label;
        t.delta = y[r];
        s.trading.push_back(std::move(t));
        break;
      }
      case LinearConstraint::Kind::extra:
        if (c.sense == LinearConstraint::Sense::eq) {
          s.alpha.push_back(y[r]);
        } else {
          // Oriented so that a valid hedge has beta >= 0 on either side.
          double beta = upper ? y[r] : -y[r];
          if (beta < -1e-9) {
            std::ostringstream os;
            os << "extract_dual: inequality dual with wrong sign (" << beta << ") on row '"
               << c.label << "'";
            throw std::runtime_error(os.str());
          }
          s.beta.push_back(beta);
        }
        break;
    }
  }
  s.price = price;

  // Replication check: the hedge value y.A must dominate (upper) or be
  // dominated by (lower) the payoff at every grid cell.
  std::vector<double> hedge(grid.cells(), 0.0);
  for (std::size_t r = 0; r < constraints.size(); ++r) {
    if (y[r] == 0.0) continue;
    for (const auto& [cell, v] : constraints[r].coefficients) hedge[cell] += y[r] * v;
  }
  double worst = std::numeric_limits<double>::infinity();
  std::size_t worst_cell = 0;
  for (std::size_t cell = 0; cell < grid.cells(); ++cell) {
    double slack = upper ? hedge[cell] - payoff[cell] : payoff[cell] - hedge[cell];
    if (slack < worst) {
      worst = slack;
      worst_cell = cell;
    }
  }
  s.worst_slack = worst;
  if (worst < -1e-7) {
    std::ostringstream os;
    os << "extract_dual: replication fails by " << -worst << " at cell " << worst_cell;
    throw std::runtime_error(os.str());
  }
  double scale = std::max({1.0, std::fabs(price), std::fabs(side.value)});
  if (std::fabs(price - side.value) > 1e-6 * scale) {
    std::ostringstream os;
    os << "extract_dual: dual price " << price << " does not match primal optimum " << side.value;
    throw std::runtime_error(os.str());
  }
  return s;
}

void dump_lp(std::ostream& os, const std::vector<double>& objective,
             const std::vector<LinearConstraint>& constraints, bool maximize) {
  os << (maximize ? "Maximize" : "Minimize") << "\n obj:";
  for (std::size_t j = 0; j < objective.size(); ++j) {
    if (objective[j] == 0.0) continue;
    os << (objective[j] >= 0 ? " + " : " - ") << std::fabs(objective[j]) << " x" << j;
  }
  os << "\nSubject To\n";
  for (std::size_t r = 0; r < constraints.size(); ++r) {
    const LinearConstraint& c = constraints[r];
    os << " r" << r << ":";
    for (const auto& [j, v] : c.coefficients) {
      os << (v >= 0 ? " + " : " - ") << std::fabs(v) << " x" << j;
    }
    os << (c.sense == LinearConstraint::Sense::eq ? " = " : " <= ") << c.rhs << "\n";
  }
  os << "Bounds\n";
  for (std::size_t j = 0; j < objective.size(); ++j) os << " 0 <= x" << j << "\n";
  os << "End\n";
}

}  // namespace motb
