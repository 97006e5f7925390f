#pragma once

// Matricial free energy of a batch-code matrix, the Free Loss built from it,
// its analytic gradient and the Gaussian reference value.

#include <cstdint>
#include <iosfwd>
#include <span>

#include "freegauss/matcore.hpp"

namespace freegauss::freeloss {

/// How the linear part of the potential is normalized.
enum class PotentialConvention {
  /// (1/d) sum_i sigma_i^2 / d. The default; matches the -34.69 Gaussian reference at 32x256.
  Normalized,
  /// (1/d) sum_i (sum_j sigma_j^2) / d, as in the short published reference listing.
  /// Kept for comparison only.
  ListingCompat,
};

struct FreeLossReport {
  double loss = 0.0;            // -(entropy_term - potential_term)
  double entropy_term = 0.0;    // 1/(d(d-1)) sum_{i!=j} log|s_i^2 - s_j^2|
  double potential_term = 0.0;  // 1/d sum_i [s_i^2/d - (1/c - 1) log s_i^2]
  double c = 0.0;
  int d = 0;
  int b = 0;
};

/// Resolution of singular values computed by a backward-stable SVD of a
/// d x b matrix: max(d, b) * eps * sigma_max. Values at or below it count as
/// zero, and adjacent values closer than it as coalesced.
double sigma_resolution(double sigma_max, int d, int b);

/// Free energy from singular values of a d x b matrix (any order).
/// Errors: ShapeError (d < 2 or d >= b), ZeroSingularValue, CoalescedSingularValues.
FreeLossReport free_energy_from_singular_values(
    std::span<const double> sigma, int b,
    PotentialConvention convention = PotentialConvention::Normalized);

FreeLossReport free_energy(const Matrix& y,
                           PotentialConvention convention = PotentialConvention::Normalized);
double free_loss(const Matrix& y);

/// Gradient of free_loss with respect to y: U diag(g) V^T with
/// g_k = -(4 s_k / (d(d-1))) sum_{j!=k} 1/(s_k^2 - s_j^2) + (2/d)(s_k/d - (1/c-1)/s_k).
Matrix free_loss_grad(const Matrix& y);

/// Loss and gradient from one SVD.
struct LossAndGrad {
  FreeLossReport report;
  Matrix grad;
};
LossAndGrad free_loss_with_grad(const Matrix& y);

struct GaussianReference {
  int d = 0;
  int b = 0;
  double mean_loss = 0.0;
  double std_loss = 0.0;  // sample standard deviation (n-1)
  int n_samples = 0;
  std::uint64_t seed = 0;
  int retries = 0;
};

/// Mean and spread of free_loss over n independent d x b standard Gaussian draws.
/// Draw k uses Rng::derive(seed, k); coalesced draws are redrawn up to 10 times.
GaussianReference gaussian_reference(int d, int b, int n_samples, std::uint64_t seed);

/// |(ref.mean_loss - free_loss(y)) / ref.mean_loss|.
double rel_err_free_loss(const Matrix& y, const GaussianReference& ref);
double rel_err_free_loss(double loss, const GaussianReference& ref);

// key=value records
void write_record(std::ostream& os, const FreeLossReport& r);
void write_record(std::ostream& os, const GaussianReference& r);
FreeLossReport read_free_loss_report(std::istream& is);
GaussianReference read_gaussian_reference(std::istream& is);

}  // namespace freegauss::freeloss
