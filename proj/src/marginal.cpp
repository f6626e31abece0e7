#include "motbounds/marginal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace motb {

DiscreteMarginal::DiscreteMarginal(std::vector<double> atoms, std::vector<double> weights)
    : atoms_(std::move(atoms)), weights_(std::move(weights)) {
  if (atoms_.empty() || atoms_.size() != weights_.size()) {
    throw std::invalid_argument("DiscreteMarginal: atoms/weights size mismatch or empty");
  }
  double total = 0.0;
  for (std::size_t j = 0; j < atoms_.size(); ++j) {
    if (atoms_[j] < 0.0) throw std::invalid_argument("DiscreteMarginal: negative atom");
    if (j > 0 && !(atoms_[j] > atoms_[j - 1])) {
      throw std::invalid_argument("DiscreteMarginal: atoms not strictly increasing");
    }
    if (!(weights_[j] > 0.0)) throw std::invalid_argument("DiscreteMarginal: non-positive weight");
    total += weights_[j];
    mean_ += atoms_[j] * weights_[j];
    second_moment_ += atoms_[j] * atoms_[j] * weights_[j];
  }
  if (std::fabs(total - 1.0) > 1e-12) {
    throw std::invalid_argument("DiscreteMarginal: weights do not sum to 1");
  }
  cum_.resize(weights_.size());
  double acc = 0.0;
  for (std::size_t j = 0; j < weights_.size(); ++j) {
    acc += weights_[j];
    cum_[j] = acc;
  }
  cum_.back() = 1.0;
}

double DiscreteMarginal::cdf(double x) const {
  auto it = std::upper_bound(atoms_.begin(), atoms_.end(), x);
  if (it == atoms_.begin()) return 0.0;
  return cum_[static_cast<std::size_t>(it - atoms_.begin()) - 1];
}

double DiscreteMarginal::quantile(double u) const {
  if (u <= 0.0) return atoms_.front();
  auto it = std::lower_bound(cum_.begin(), cum_.end(), u);
  if (it == cum_.end()) return atoms_.back();
  return atoms_[static_cast<std::size_t>(it - cum_.begin())];
}

double DiscreteMarginal::call_price(double strike) const {
  double v = 0.0;
  for (std::size_t j = 0; j < atoms_.size(); ++j) {
    v += std::max(atoms_[j] - strike, 0.0) * weights_[j];
  }
  return v;
}

DiscreteMarginal uniform_atoms(std::vector<double> atoms) {
  std::vector<double> w(atoms.size(), 1.0 / static_cast<double>(atoms.size()));
  return DiscreteMarginal(std::move(atoms), std::move(w));
}

MarginalCdf MarginalCdf::discrete(DiscreteMarginal m) {
  MarginalCdf c;
  c.discrete_ = std::make_shared<const DiscreteMarginal>(std::move(m));
  auto p = c.discrete_;
  c.cdf_ = [p](double x) { return p->cdf(x); };
  c.quantile_ = [p](double u) { return p->quantile(u); };
  return c;
}

MarginalCdf MarginalCdf::continuous(std::function<double(double)> cdf,
                                    std::function<double(double)> quantile) {
  MarginalCdf c;
  c.cdf_ = std::move(cdf);
  c.quantile_ = std::move(quantile);
  return c;
}

const DiscreteMarginal& MarginalCdf::as_discrete() const {
  if (!discrete_) throw std::logic_error("MarginalCdf: not a discrete marginal");
  return *discrete_;
}

ConvexOrderReport check_convex_order(const DiscreteMarginal& m1, const DiscreteMarginal& m2,
                                     double mean_tol, double tol) {
  ConvexOrderReport rep;
  rep.mean_gap = std::fabs(m1.mean() - m2.mean());
  if (rep.mean_gap > mean_tol) {
    rep.pass = false;
    std::ostringstream os;
    os << "means differ by " << rep.mean_gap;
    rep.message = os.str();
    return rep;
  }
  std::vector<double> strikes = m1.atoms();
  strikes.insert(strikes.end(), m2.atoms().begin(), m2.atoms().end());
  std::sort(strikes.begin(), strikes.end());
  rep.pass = true;
  rep.worst_margin = -std::numeric_limits<double>::infinity();
  for (double k : strikes) {
    double margin = m1.call_price(k) - m2.call_price(k);
    if (margin > rep.worst_margin) {
      rep.worst_margin = margin;
      rep.worst_strike = k;
    }
  }
  if (rep.worst_margin > tol) {
    rep.pass = false;
    std::ostringstream os;
    os << "call transform exceeded at K=" << rep.worst_strike << " by " << rep.worst_margin;
    rep.message = os.str();
  }
  return rep;
}

MarginalSystem::MarginalSystem(std::size_t maturities, std::size_t assets,
                               std::vector<DiscreteMarginal> marginals, std::vector<double> spots,
                               double mean_tol)
    : n_(maturities), d_(assets), marginals_(std::move(marginals)), spots_(std::move(spots)) {
  if (marginals_.size() != n_ * d_) {
    throw std::invalid_argument("MarginalSystem: expected n*d marginals");
  }
  if (spots_.size() != d_) throw std::invalid_argument("MarginalSystem: expected d spots");
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t k = 0; k < d_; ++k) {
      double gap = std::fabs(marginal(i, k).mean() - spots_[k]);
      if (gap > mean_tol) {
        std::ostringstream os;
        os << "MarginalSystem: marginal (" << i + 1 << "," << k + 1 << ") mean "
           << marginal(i, k).mean() << " != spot " << spots_[k];
        throw std::invalid_argument(os.str());
      }
    }
  }
  for (std::size_t k = 0; k < d_; ++k) {
    for (std::size_t i = 0; i + 1 < n_; ++i) {
      // The validation tolerance scales with the configured mean tolerance:
      // quantized inputs carry quadrature error in both moments alike.
      auto rep = check_convex_order(marginal(i, k), marginal(i + 1, k), mean_tol,
                                    std::max(mean_tol, 1e-12));
      if (!rep.pass) {
        std::ostringstream os;
        os << "MarginalSystem: asset " << k + 1 << " maturities " << i + 1 << "->" << i + 2
           << " violate convex order: " << rep.message;
        throw std::invalid_argument(os.str());
      }
    }
  }
}

}  // namespace motb
