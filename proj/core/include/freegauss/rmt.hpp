#pragma once

// Marchenko-Pastur analytics, discrete spectral measures and free-entropy functionals.

#include <iosfwd>
#include <vector>

#include "freegauss/matcore.hpp"

namespace freegauss::rmt {

/// Marchenko-Pastur law with shape c = d/b in (0, 1].
struct MpParams {
  double c;
  double a_minus;
  double a_plus;

  /// Throws ConstraintViolation unless 0 < c <= 1.
  static MpParams from_shape(double c);
};

/// Finite weighted point set on the real line.
class DiscreteMeasure {
 public:
  /// Weights must be non-negative and sum to 1 within 1e-12.
  DiscreteMeasure(std::vector<double> atoms, std::vector<double> weights);
  /// Uniform weights 1/n (an empirical spectral distribution).
  static DiscreteMeasure uniform(std::vector<double> atoms);

  const std::vector<double>& atoms() const noexcept { return atoms_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  std::size_t size() const noexcept { return atoms_.size(); }

  /// Same weights, every atom multiplied by `factor`.
  DiscreteMeasure scaled(double factor) const;
  /// Right-continuous CDF.
  double cdf(double x) const;

 private:
  std::vector<double> atoms_;
  std::vector<double> weights_;
};

double mp_density(const MpParams& p, double lambda);
/// Integral of mp_density from -inf to lambda (adaptive Simpson, tolerance 1e-12).
double mp_cdf(const MpParams& p, double lambda);

/// ESD of Y Y^T (or Y Y^T / b when normalize_by_b); Y must be d x b with d <= b.
DiscreteMeasure esd_from_matrix(const Matrix& y, bool normalize_by_b);

/// sup_x |F_measure(x) - F_MP(x)|, evaluated at both one-sided limits of every atom.
double mp_sup_distance(const DiscreteMeasure& m, const MpParams& p);

/// Discrete Voiculescu free entropy: sum_{i!=j} w_i w_j log|l_i - l_j| divided by
/// sum_{i!=j} w_i w_j. For uniform weights this is the off-diagonal average
/// 1/(n(n-1)) sum_{i!=j}. CoalescedAtoms on an exact tie or a single atom.
double free_entropy(const DiscreteMeasure& m);

/// free_entropy(m) - sum_i w_i (l_i / c - (1/c - 1) log l_i).
double phi_c(const DiscreteMeasure& m, double c);

/// free_entropy(m) - sum_i w_i (l_i - (theta - 1) log l_i).
double psi_theta(const DiscreteMeasure& m, double theta);

/// |phi_c(nu, 1/theta) - (psi_theta(m, theta) - theta log theta)| where nu has
/// atoms l_i / theta. Zero up to rounding for every valid input.
double pushforward_check(const DiscreteMeasure& m, double theta);

/// CSV with header lambda,density,cdf on `points` equally spaced values in [lo, hi].
void write_mp_curve_csv(std::ostream& os, const MpParams& p, double lo, double hi, int points);

}  // namespace freegauss::rmt
