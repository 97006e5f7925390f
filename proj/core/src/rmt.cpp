#include "freegauss/rmt.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <ostream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace freegauss::rmt {

MpParams MpParams::from_shape(double c) {
  if (!(c > 0.0 && c <= 1.0)) {
    throw Error(ErrorKind::ConstraintViolation,
                "Marchenko-Pastur shape must lie in (0, 1], got " + format_double(c));
  }
  const double r = std::sqrt(c);
  return MpParams{c, (1.0 - r) * (1.0 - r), (1.0 + r) * (1.0 + r)};
}

DiscreteMeasure::DiscreteMeasure(std::vector<double> atoms, std::vector<double> weights)
    : atoms_(std::move(atoms)), weights_(std::move(weights)) {
  if (atoms_.empty() || atoms_.size() != weights_.size()) {
    throw Error(ErrorKind::ShapeError, "measure needs matching non-empty atoms and weights");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < atoms_.size(); ++i) {
    if (!std::isfinite(atoms_[i]) || !std::isfinite(weights_[i])) {
      throw Error(ErrorKind::NonFinite, "measure atoms and weights must be finite");
    }
    if (weights_[i] < 0.0) throw Error(ErrorKind::ConstraintViolation, "negative weight");
    total += weights_[i];
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw Error(ErrorKind::ConstraintViolation,
                "weights sum to " + format_double(total) + ", expected 1");
  }
}

DiscreteMeasure DiscreteMeasure::uniform(std::vector<double> atoms) {
  const auto n = atoms.size();
  if (n == 0) throw Error(ErrorKind::ShapeError, "measure needs at least one atom");
  std::vector<double> weights(n, 1.0 / static_cast<double>(n));
  // Absorb the rounding of n * (1/n) into the last weight.
  double head = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) head += weights[i];
  weights.back() = 1.0 - head;
  return DiscreteMeasure(std::move(atoms), std::move(weights));
}

DiscreteMeasure DiscreteMeasure::scaled(double factor) const {
  auto atoms = atoms_;
  for (auto& a : atoms) a *= factor;
  return DiscreteMeasure(std::move(atoms), weights_);
}

double DiscreteMeasure::cdf(double x) const {
  double total = 0.0;
  for (std::size_t i = 0; i < atoms_.size(); ++i) {
    if (atoms_[i] <= x) total += weights_[i];
  }
  return std::min(total, 1.0);
}

// ---------------------------------------------------------------------------

double mp_density(const MpParams& p, double lambda) {
  if (!(lambda > p.a_minus && lambda < p.a_plus) || lambda <= 0.0) return 0.0;
  const double radicand = (p.a_plus - lambda) * (lambda - p.a_minus);
  if (radicand <= 0.0) return 0.0;
  return std::sqrt(radicand) / (2.0 * std::numbers::pi * p.c * lambda);
}

double mp_cdf(const MpParams& p, double lambda) {
  if (lambda <= p.a_minus) return 0.0;
  if (lambda >= p.a_plus) return 1.0;
  // lambda(t) = a- + h (1 - cos t), h = (a+ - a-)/2, t in [0, pi]. The square-root
  // edges of the density cancel against d lambda / dt, leaving a smooth integrand.
  const double h = 0.5 * (p.a_plus - p.a_minus);
  const auto integrand = [&](double t) {
    // 1 - cos t written as 2 sin^2(t/2) so the c = 1 edge has no cancellation.
    const double half = std::sin(0.5 * t);
    const double l = p.a_minus + 2.0 * h * half * half;
    if (l <= 0.0) {
      // Only reachable at t = 0 when c = 1; the limit of h^2 sin^2 t / l is 2h.
      return 2.0 * h / (2.0 * std::numbers::pi * p.c);
    }
    const double s = std::sin(t);
    return h * h * s * s / (2.0 * std::numbers::pi * p.c * l);
  };
  const double arg = std::clamp(1.0 - (lambda - p.a_minus) / h, -1.0, 1.0);
  const double t_end = std::acos(arg);
  const double mass = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      integrand, 0.0, t_end, 15, 1e-14);
  return std::clamp(mass, 0.0, 1.0);
}

DiscreteMeasure esd_from_matrix(const Matrix& y, bool normalize_by_b) {
  if (y.rows() > y.cols()) {
    throw Error(ErrorKind::ShapeError, "ESD expects d <= b");
  }
  require_finite(y);
  const Matrix gram = y * y.transpose();
  // The product is symmetric up to summation order; symmetrize before the check.
  const Matrix sym = 0.5 * (gram + gram.transpose());
  const Vector eig = eig_sym(sym);
  std::vector<double> atoms(eig.data(), eig.data() + eig.size());
  if (normalize_by_b) {
    for (auto& a : atoms) a /= static_cast<double>(y.cols());
  }
  return DiscreteMeasure::uniform(std::move(atoms));
}

double mp_sup_distance(const DiscreteMeasure& m, const MpParams& p) {
  std::vector<std::size_t> order(m.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](auto a, auto b) { return m.atoms()[a] < m.atoms()[b]; });
  double below = 0.0;
  double sup = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const double x = m.atoms()[order[k]];
    const double f = mp_cdf(p, x);
    sup = std::max(sup, std::abs(f - below));
    below += m.weights()[order[k]];
    // Ties: the upper limit is only reached after the last equal atom.
    if (k + 1 < order.size() && m.atoms()[order[k + 1]] == x) continue;
    sup = std::max(sup, std::abs(f - std::min(below, 1.0)));
  }
  return sup;
}

double free_entropy(const DiscreteMeasure& m) {
  const auto& a = m.atoms();
  const auto& w = m.weights();
  if (a.size() < 2) {
    throw Error(ErrorKind::CoalescedAtoms, "free entropy needs at least two atoms");
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const double gap = std::abs(a[i] - a[j]);
      if (gap == 0.0) {
        throw Error(ErrorKind::CoalescedAtoms,
                    "atoms " + std::to_string(i) + " and " + std::to_string(j) + " coincide");
      }
      const double ww = w[i] * w[j];
      num += ww * std::log(gap);
      den += ww;
    }
  }
  if (den <= 0.0) throw Error(ErrorKind::CoalescedAtoms, "fewer than two atoms carry weight");
  // Both sums cover i<j only; the symmetric i>j half doubles numerator and denominator alike.
  return num / den;
}

namespace {

double log_potential(const DiscreteMeasure& m, double linear, double log_coeff) {
  double total = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double l = m.atoms()[i];
    if (!(l > 0.0)) {
      throw Error(ErrorKind::NonPositiveAtom, "atom " + std::to_string(i) + " = " +
                                                  format_double(l) + " is not positive");
    }
    total += m.weights()[i] * (linear * l - log_coeff * std::log(l));
  }
  return total;
}

}  // namespace

double phi_c(const DiscreteMeasure& m, double c) {
  if (!(c > 0.0)) throw Error(ErrorKind::ConstraintViolation, "c must be positive");
  const double potential = log_potential(m, 1.0 / c, 1.0 / c - 1.0);
  return free_entropy(m) - potential;
}

double psi_theta(const DiscreteMeasure& m, double theta) {
  if (!(theta > 0.0)) throw Error(ErrorKind::ConstraintViolation, "theta must be positive");
  const double potential = log_potential(m, 1.0, theta - 1.0);
  return free_entropy(m) - potential;
}

double pushforward_check(const DiscreteMeasure& m, double theta) {
  const double rhs = psi_theta(m, theta) - theta * std::log(theta);
  const double lhs = phi_c(m.scaled(1.0 / theta), 1.0 / theta);
  return std::abs(lhs - rhs);
}

void write_mp_curve_csv(std::ostream& os, const MpParams& p, double lo, double hi, int points) {
  if (points < 2 || !(hi > lo)) {
    throw Error(ErrorKind::ConstraintViolation, "curve grid needs >= 2 points and hi > lo");
  }
  os << "lambda,density,cdf\n";
  for (int i = 0; i < points; ++i) {
    const double x = lo + (hi - lo) * static_cast<double>(i) / (points - 1);
    os << format_double(x) << ',' << format_double(mp_density(p, x)) << ','
       << format_double(mp_cdf(p, x)) << '\n';
  }
}

}  // namespace freegauss::rmt
