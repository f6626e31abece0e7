#include "motbounds/copula.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include "motbounds/normal.hpp"

namespace motb {

namespace {

void check_unit_cube(const std::vector<double>& u, std::size_t m, const char* where) {
  if (u.size() != m) {
    std::ostringstream os;
    os << where << ": expected " << m << " coordinates, got " << u.size();
    throw std::invalid_argument(os.str());
  }
  for (double x : u) {
    if (!(x >= 0.0 && x <= 1.0)) {
      std::ostringstream os;
      os << where << ": coordinate " << x << " outside [0,1]";
      throw std::invalid_argument(os.str());
    }
  }
}

double frechet_lower_value(const std::vector<double>& u) {
  double s = 0.0;
  for (double x : u) s += x;
  return std::max(s - static_cast<double>(u.size()) + 1.0, 0.0);
}

double frechet_upper_value(const std::vector<double>& u) {
  return *std::min_element(u.begin(), u.end());
}

}  // namespace

// ---------------------------------------------------------------------------
// PrescribedSet

PrescribedSet::PrescribedSet(std::vector<Point> points, std::size_t dim, double tol)
    : points_(std::move(points)), dim_(dim) {
  if (dim_ < 2) throw std::invalid_argument("PrescribedSet: dimension must be >= 2");
  for (const Point& p : points_) {
    check_unit_cube(p.u, dim_, "PrescribedSet");
    double lo = frechet_lower_value(p.u);
    double hi = frechet_upper_value(p.u);
    if (p.value < lo - tol || p.value > hi + tol) {
      std::ostringstream os;
      os << "PrescribedSet: value " << p.value << " outside Frechet band [" << lo << ", " << hi
         << "]";
      throw std::invalid_argument(os.str());
    }
  }
  // Any quasi-copula is 1-Lipschitz in the l1 norm, so two prescriptions can
  // only coexist when |q - q'| <= sum_i |x_i - x'_i|.
  for (std::size_t a = 0; a < points_.size(); ++a) {
    for (std::size_t b = a + 1; b < points_.size(); ++b) {
      double dist = 0.0;
      for (std::size_t i = 0; i < dim_; ++i) {
        dist += std::fabs(points_[a].u[i] - points_[b].u[i]);
      }
      if (std::fabs(points_[a].value - points_[b].value) > dist + tol) {
        std::ostringstream os;
        os << "PrescribedSet: points " << a << " and " << b
           << " violate Lipschitz compatibility: |q-q'| = "
           << std::fabs(points_[a].value - points_[b].value) << " > l1 distance " << dist;
        throw std::invalid_argument(os.str());
      }
    }
  }
}

// ---------------------------------------------------------------------------
// QuasiCopula impl

struct QuasiCopula::Impl {
  std::size_t m = 2;
  std::string name;
  std::function<double(const std::vector<double>&)> eval;
  // Optional closed-form survival; when absent, inclusion-exclusion is used.
  std::function<double(const std::vector<double>&)> survival;
  // Optional d/dt of a bivariate member evaluated at (u, t).
  std::function<double(double, double)> d2;
};

std::size_t QuasiCopula::dimension() const { return impl_->m; }
const std::string& QuasiCopula::name() const { return impl_->name; }

double QuasiCopula::operator()(const std::vector<double>& u) const {
  check_unit_cube(u, impl_->m, "QuasiCopula");
  if (!impl_->eval) throw std::logic_error("QuasiCopula: no pointwise evaluation available");
  return impl_->eval(u);
}

double QuasiCopula::survival(const std::vector<double>& u) const {
  check_unit_cube(u, impl_->m, "QuasiCopula::survival");
  if (impl_->survival) return impl_->survival(u);
  if (!impl_->eval) throw std::logic_error("QuasiCopula: no evaluation available");
  // Inclusion-exclusion over the 2^m corners of [u, 1].
  const std::size_t m = impl_->m;
  std::vector<double> y(m);
  double s = 0.0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << m); ++mask) {
    std::size_t ones = 0;
    for (std::size_t i = 0; i < m; ++i) {
      if (mask & (std::size_t{1} << i)) {
        y[i] = 1.0;
        ++ones;
      } else {
        y[i] = u[i];
      }
    }
    double sign = ((m - ones) % 2 == 0) ? 1.0 : -1.0;
    s += sign * impl_->eval(y);
  }
  return s;
}

double QuasiCopula::partial2(double u, double t) const {
  if (!impl_->d2) throw std::logic_error("QuasiCopula: no second-argument derivative available");
  if (!(u >= 0.0 && u <= 1.0 && t >= 0.0 && t <= 1.0)) {
    throw std::invalid_argument("QuasiCopula::partial2: arguments outside [0,1]");
  }
  return impl_->d2(u, t);
}

bool QuasiCopula::has_partial2() const { return static_cast<bool>(impl_->d2); }

namespace {

QuasiCopula make(std::shared_ptr<QuasiCopula::Impl> impl) {
  return QuasiCopula(std::shared_ptr<const QuasiCopula::Impl>(std::move(impl)));
}

void require_dim(std::size_t m, const char* where) {
  if (m < 2) {
    std::ostringstream os;
    os << where << ": dimension must be >= 2";
    throw std::invalid_argument(os.str());
  }
}

}  // namespace

QuasiCopula QuasiCopula::frechet_lower(std::size_t m) {
  require_dim(m, "frechet_lower");
  auto impl = std::make_shared<Impl>();
  impl->m = m;
  impl->name = "frechet_lower";
  impl->eval = frechet_lower_value;
  if (m == 2) {
    // Countermonotone survival: (1 - u - v)_+.
    impl->survival = [](const std::vector<double>& u) {
      return std::max(1.0 - u[0] - u[1], 0.0);
    };
    impl->d2 = [](double u, double t) { return (u + t > 1.0) ? 1.0 : 0.0; };
  }
  return make(std::move(impl));
}

QuasiCopula QuasiCopula::frechet_upper(std::size_t m) {
  require_dim(m, "frechet_upper");
  auto impl = std::make_shared<Impl>();
  impl->m = m;
  impl->name = "frechet_upper";
  impl->eval = frechet_upper_value;
  // Comonotone survival: min_i (1 - u_i).
  impl->survival = [](const std::vector<double>& u) {
    double v = 1.0;
    for (double x : u) v = std::min(v, 1.0 - x);
    return v;
  };
  if (m == 2) {
    impl->d2 = [](double u, double t) { return (t < u) ? 1.0 : 0.0; };
  }
  return make(std::move(impl));
}

QuasiCopula QuasiCopula::independence(std::size_t m) {
  require_dim(m, "independence");
  auto impl = std::make_shared<Impl>();
  impl->m = m;
  impl->name = "independence";
  impl->eval = [](const std::vector<double>& u) {
    double p = 1.0;
    for (double x : u) p *= x;
    return p;
  };
  impl->survival = [](const std::vector<double>& u) {
    double p = 1.0;
    for (double x : u) p *= 1.0 - x;
    return p;
  };
  if (m == 2) {
    impl->d2 = [](double u, double /*t*/) { return u; };
  }
  return make(std::move(impl));
}

QuasiCopula QuasiCopula::gaussian(double rho) {
  if (!(rho >= -1.0 && rho <= 1.0)) {
    throw std::invalid_argument("gaussian: rho outside [-1,1]");
  }
  if (rho == 1.0) return frechet_upper(2);
  if (rho == -1.0) return frechet_lower(2);
  auto impl = std::make_shared<Impl>();
  impl->m = 2;
  {
    std::ostringstream os;
    os << "gaussian(rho=" << rho << ")";
    impl->name = os.str();
  }
  impl->eval = [rho](const std::vector<double>& u) {
    if (u[0] == 0.0 || u[1] == 0.0) return 0.0;
    if (u[0] == 1.0) return u[1];
    if (u[1] == 1.0) return u[0];
    return bivariate_normal_cdf(norm_quantile(u[0]), norm_quantile(u[1]), rho);
  };
  const double denom = std::sqrt(1.0 - rho * rho);
  impl->d2 = [rho, denom](double u, double t) {
    if (u == 0.0) return 0.0;
    if (u == 1.0) return 1.0;
    if (t == 0.0) return (rho > 0.0) ? 1.0 : 0.0;
    if (t == 1.0) return (rho > 0.0) ? 0.0 : 1.0;
    return norm_cdf((norm_quantile(u) - rho * norm_quantile(t)) / denom);
  };
  return make(std::move(impl));
}

QuasiCopula QuasiCopula::transpose(const QuasiCopula& base) {
  if (base.dimension() != 2) throw std::invalid_argument("transpose: bivariate only");
  auto impl = std::make_shared<Impl>();
  impl->m = 2;
  impl->name = "transpose(" + base.name() + ")";
  impl->eval = [base](const std::vector<double>& u) {
    return base(std::vector<double>{u[1], u[0]});
  };
  impl->survival = [base](const std::vector<double>& u) {
    return base.survival(std::vector<double>{u[1], u[0]});
  };
  return make(std::move(impl));
}

QuasiCopula QuasiCopula::pointwise_max(std::vector<QuasiCopula> members) {
  if (members.empty()) throw std::invalid_argument("pointwise_max: no members");
  const std::size_t m = members.front().dimension();
  for (const QuasiCopula& q : members) {
    if (q.dimension() != m) {
      throw std::invalid_argument("pointwise_max: mixed dimensions");
    }
  }
  auto impl = std::make_shared<Impl>();
  impl->m = m;
  impl->name = "pointwise_max";
  impl->eval = [members](const std::vector<double>& u) {
    double v = -std::numeric_limits<double>::infinity();
    for (const QuasiCopula& q : members) v = std::max(v, q(u));
    return v;
  };
  return make(std::move(impl));
}

QuasiCopula QuasiCopula::qstar(const QuasiCopula& q2, std::size_t m) {
  if (q2.dimension() != 2) throw std::invalid_argument("qstar: base must be bivariate");
  require_dim(m, "qstar");
  auto impl = std::make_shared<Impl>();
  impl->m = m;
  impl->name = "qstar(" + q2.name() + ")";
  impl->eval = [q2](const std::vector<double>& u) {
    double lo = 1.0;
    for (std::size_t i = 1; i < u.size(); ++i) lo = std::min(lo, u[i]);
    return q2(std::vector<double>{lo, u[0]});
  };
  // Survival of the star construction reduces to the bivariate survival at
  // the worst coordinate of the tail block.
  impl->survival = [q2](const std::vector<double>& u) {
    double hi = 0.0;
    for (std::size_t i = 1; i < u.size(); ++i) hi = std::max(hi, u[i]);
    return q2.survival(std::vector<double>{hi, u[0]});
  };
  return make(std::move(impl));
}

QuasiCopula QuasiCopula::grid_interpolated(std::size_t m, std::size_t n,
                                           std::vector<double> values) {
  require_dim(m, "grid_interpolated");
  if (n == 0) throw std::invalid_argument("grid_interpolated: n must be positive");
  std::size_t expected = 1;
  for (std::size_t i = 0; i < m; ++i) expected *= n + 1;
  if (values.size() != expected) {
    throw std::invalid_argument("grid_interpolated: wrong number of lattice values");
  }
  auto table = std::make_shared<const std::vector<double>>(std::move(values));
  auto impl = std::make_shared<Impl>();
  impl->m = m;
  impl->name = "grid_interpolated";
  impl->eval = [m, n, table](const std::vector<double>& u) {
    // Multilinear interpolation over the cell containing u.
    std::vector<std::size_t> base(m);
    std::vector<double> frac(m);
    for (std::size_t i = 0; i < m; ++i) {
      double s = u[i] * static_cast<double>(n);
      std::size_t b = static_cast<std::size_t>(std::floor(s));
      if (b >= n) {
        b = n - 1;
        s = static_cast<double>(n);
      }
      base[i] = b;
      frac[i] = s - static_cast<double>(b);
    }
    double v = 0.0;
    for (std::size_t corner = 0; corner < (std::size_t{1} << m); ++corner) {
      double w = 1.0;
      std::size_t idx = 0;
      for (std::size_t i = 0; i < m; ++i) {
        bool hi = (corner >> i) & 1u;
        w *= hi ? frac[i] : (1.0 - frac[i]);
        idx = idx * (n + 1) + base[i] + (hi ? 1 : 0);
      }
      if (w != 0.0) v += w * (*table)[idx];
    }
    return v;
  };
  return make(std::move(impl));
}

QuasiCopula QuasiCopula::reflected(const QuasiCopula& base) {
  const std::size_t m = base.dimension();
  auto impl = std::make_shared<Impl>();
  impl->m = m;
  impl->name = "reflected(" + base.name() + ")";
  impl->survival = [base](const std::vector<double>& u) {
    std::vector<double> r(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) r[i] = 1.0 - u[i];
    return base(r);
  };
  if (m == 2) {
    // For bivariate laws the survival transform is invertible:
    // Q(u, v) = base(1-u, 1-v) - 1 + u + v.
    impl->eval = [base](const std::vector<double>& u) {
      return base(std::vector<double>{1.0 - u[0], 1.0 - u[1]}) - 1.0 + u[0] + u[1];
    };
  }
  return make(std::move(impl));
}

// ---------------------------------------------------------------------------
// Improved Frechet bounds

std::pair<QuasiCopula, QuasiCopula> improved_frechet_bounds(const PrescribedSet& prescribed,
                                                            std::size_t m) {
  require_dim(m, "improved_frechet_bounds");
  if (!prescribed.empty() && prescribed.dimension() != m) {
    throw std::invalid_argument("improved_frechet_bounds: prescription dimension mismatch");
  }
  auto pts = std::make_shared<const std::vector<PrescribedSet::Point>>(prescribed.points());

  auto up = std::make_shared<QuasiCopula::Impl>();
  up->m = m;
  up->name = "improved_frechet_upper";
  up->eval = [pts](const std::vector<double>& u) {
    double v = frechet_upper_value(u);
    for (const auto& p : *pts) {
      double cand = p.value;
      for (std::size_t i = 0; i < u.size(); ++i) cand += std::max(u[i] - p.u[i], 0.0);
      v = std::min(v, cand);
    }
    return std::max(v, 0.0);
  };

  auto lo = std::make_shared<QuasiCopula::Impl>();
  lo->m = m;
  lo->name = "improved_frechet_lower";
  lo->eval = [pts](const std::vector<double>& u) {
    double v = frechet_lower_value(u);
    for (const auto& p : *pts) {
      double cand = p.value;
      for (std::size_t i = 0; i < u.size(); ++i) cand -= std::max(p.u[i] - u[i], 0.0);
      v = std::max(v, cand);
    }
    return std::min(v, frechet_upper_value(u));
  };

  return {QuasiCopula(std::shared_ptr<const QuasiCopula::Impl>(std::move(up))),
          QuasiCopula(std::shared_ptr<const QuasiCopula::Impl>(std::move(lo)))};
}

// ---------------------------------------------------------------------------
// Upper products

namespace {

double upper_product_fixed(const std::vector<QuasiCopula>& copulas, const std::vector<double>& u,
                           std::size_t nodes) {
  double s = 0.0;
  for (std::size_t k = 0; k < nodes; ++k) {
    double t = (static_cast<double>(k) + 0.5) / static_cast<double>(nodes);
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < copulas.size(); ++i) {
      lo = std::min(lo, copulas[i].partial2(u[i], t));
    }
    s += lo;
  }
  return s / static_cast<double>(nodes);
}

}  // namespace

double upper_product(const std::vector<QuasiCopula>& copulas, const std::vector<double>& u,
                     std::size_t nodes, double rel_tol) {
  if (copulas.size() < 2) throw std::invalid_argument("upper_product: need at least two factors");
  if (u.size() != copulas.size()) {
    throw std::invalid_argument("upper_product: argument/factor count mismatch");
  }
  for (const QuasiCopula& c : copulas) {
    if (c.dimension() != 2 || !c.has_partial2()) {
      throw std::invalid_argument(
          "upper_product: every factor must be bivariate with a second-argument derivative");
    }
  }
  for (double x : u) {
    if (!(x >= 0.0 && x <= 1.0)) {
      throw std::invalid_argument("upper_product: argument outside [0,1]");
    }
  }
  if (nodes < 4) nodes = 4;
  std::size_t n = std::max<std::size_t>(4, nodes / 4);
  double prev = upper_product_fixed(copulas, u, n);
  while (true) {
    n *= 2;
    double cur = upper_product_fixed(copulas, u, n);
    double scale = std::max({std::fabs(cur), std::fabs(prev), 1e-12});
    if (std::fabs(cur - prev) <= rel_tol * scale || n >= 8 * nodes) return cur;
    prev = cur;
  }
}

std::vector<double> upper_product_on_lattice(const std::vector<QuasiCopula>& copulas,
                                             const std::vector<std::vector<double>>& axes,
                                             std::size_t nodes) {
  const std::size_t m = copulas.size();
  if (m < 2) throw std::invalid_argument("upper_product_on_lattice: need at least two factors");
  if (axes.size() != m) {
    throw std::invalid_argument("upper_product_on_lattice: axis/factor count mismatch");
  }
  for (const QuasiCopula& c : copulas) {
    if (c.dimension() != 2 || !c.has_partial2()) {
      throw std::invalid_argument(
          "upper_product_on_lattice: factors must be bivariate with derivatives");
    }
  }
  // Precompute per-axis derivative tables: table[i][a * nodes + k] =
  // d2 D^i(axes[i][a], t_k) at midpoint nodes t_k.
  std::vector<std::vector<double>> table(m);
  for (std::size_t i = 0; i < m; ++i) {
    table[i].resize(axes[i].size() * nodes);
    for (std::size_t a = 0; a < axes[i].size(); ++a) {
      for (std::size_t k = 0; k < nodes; ++k) {
        double t = (static_cast<double>(k) + 0.5) / static_cast<double>(nodes);
        table[i][a * nodes + k] = copulas[i].partial2(axes[i][a], t);
      }
    }
  }
  std::size_t total = 1;
  for (const auto& ax : axes) total *= ax.size();
  std::vector<double> out(total);
  std::vector<std::size_t> idx(m, 0);
  std::vector<double> acc(nodes);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::fill(acc.begin(), acc.end(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < m; ++i) {
      const double* row = table[i].data() + idx[i] * nodes;
      for (std::size_t k = 0; k < nodes; ++k) acc[k] = std::min(acc[k], row[k]);
    }
    double s = 0.0;
    for (std::size_t k = 0; k < nodes; ++k) s += acc[k];
    out[flat] = s / static_cast<double>(nodes);
    // Advance the multi-index, last axis fastest.
    for (std::size_t i = m; i-- > 0;) {
      if (++idx[i] < axes[i].size()) break;
      idx[i] = 0;
    }
  }
  return out;
}

GridCopula GridCopula::discretize(const QuasiCopula& c, std::size_t n) {
  if (c.dimension() != 2) throw std::invalid_argument("GridCopula: bivariate only");
  if (n == 0) throw std::invalid_argument("GridCopula: n must be positive");
  GridCopula g;
  g.n = n;
  g.values.resize((n + 1) * (n + 1));
  for (std::size_t i = 0; i <= n; ++i) {
    for (std::size_t j = 0; j <= n; ++j) {
      g.values[i * (n + 1) + j] = c(std::vector<double>{static_cast<double>(i) / n,
                                                        static_cast<double>(j) / n});
    }
  }
  return g;
}

std::vector<double> upper_product_grid(const std::vector<GridCopula>& grids) {
  const std::size_t m = grids.size();
  if (m < 2) throw std::invalid_argument("upper_product_grid: need at least two factors");
  const std::size_t n = grids.front().n;
  for (const GridCopula& g : grids) {
    if (g.n != n) throw std::invalid_argument("upper_product_grid: mixed grid sizes");
    if (g.values.size() != (n + 1) * (n + 1)) {
      throw std::invalid_argument("upper_product_grid: malformed value table");
    }
  }
  std::size_t total = 1;
  for (std::size_t i = 0; i < m; ++i) total *= n + 1;
  std::vector<double> out(total);
  std::vector<std::size_t> idx(m, 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    double s = 0.0;
    for (std::size_t k = 1; k <= n; ++k) {
      double lo = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < m; ++i) {
        double step = grids[i].at(idx[i], k) - grids[i].at(idx[i], k - 1);
        lo = std::min(lo, step);
      }
      s += lo;
    }
    out[flat] = s;
    for (std::size_t i = m; i-- > 0;) {
      if (++idx[i] <= n) break;
      idx[i] = 0;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Axiom verification

AxiomReport verify_axioms(const QuasiCopula& q, std::size_t samples, std::uint64_t seed,
                          double exact_tol, double lipschitz_tol) {
  const std::size_t m = q.dimension();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, m - 1);

  AxiomReport rep;
  auto record = [&](double violation, double& slot, const std::vector<double>& at,
                    const char* what) {
    if (violation > slot) {
      slot = violation;
      if (violation > 0.0 && rep.violation_point.empty()) {
        rep.violation_point = at;
        rep.detail = what;
      }
    }
  };

  std::vector<double> u(m), v(m);
  for (std::size_t s = 0; s < samples; ++s) {
    for (std::size_t i = 0; i < m; ++i) u[i] = unif(rng);

    // Groundedness: zero out one coordinate.
    v = u;
    v[pick(rng)] = 0.0;
    record(std::fabs(q(v)) - exact_tol, rep.worst_grounded, v, "groundedness");

    // Uniform marginal: all other coordinates at 1.
    std::size_t j = pick(rng);
    std::fill(v.begin(), v.end(), 1.0);
    v[j] = u[j];
    record(std::fabs(q(v) - u[j]) - exact_tol, rep.worst_marginal, v, "uniform marginal");

    // Monotonicity: bump one coordinate up.
    double base = q(u);
    j = pick(rng);
    v = u;
    v[j] = u[j] + unif(rng) * (1.0 - u[j]);
    double bumped = q(v);
    record(base - bumped - lipschitz_tol, rep.worst_monotone, u, "monotonicity");
    // 1-Lipschitz in that coordinate (implies the l1 bound jointly).
    record(bumped - base - (v[j] - u[j]) - lipschitz_tol, rep.worst_lipschitz, u, "Lipschitz");

    // Frechet band.
    double lo = frechet_lower_value(u);
    double hi = frechet_upper_value(u);
    record(std::max(lo - base, base - hi) - lipschitz_tol, rep.worst_frechet, u, "Frechet band");
  }

  rep.pass = rep.worst_grounded <= 0.0 && rep.worst_marginal <= 0.0 && rep.worst_monotone <= 0.0 &&
             rep.worst_lipschitz <= 0.0 && rep.worst_frechet <= 0.0;
  return rep;
}

}  // namespace motb
