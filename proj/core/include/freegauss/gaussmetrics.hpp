#pragma once

// Scalar, vectorial and matricial deviation-from-Gaussianity metrics.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "freegauss/freeloss.hpp"
#include "freegauss/matcore.hpp"

namespace freegauss::gaussmetrics {

/// Standard normal CDF through erfc; absolute error well below 1e-12.
double normal_cdf(double x);
double normal_pdf(double x);
/// Inverse of normal_cdf on (0, 1): rational initial guess plus Halley refinement.
double normal_quantile(double p);

/// sup_x |F_emp(x) - Phi(x)| over both one-sided limits at every sample point.
/// With `standardize`, values are first shifted and scaled to zero mean and unit
/// (population) variance; DegenerateSample when that variance is zero.
double ks_statistic(std::span<const double> values, bool standardize);

/// Largest problem accepted by the exact assignment solver.
inline constexpr int kMaxAssignmentSize = 1024;

/// Exact minimum-cost perfect matching on a square cost matrix (shortest augmenting
/// paths with potentials, O(n^3)). Returns assignment[row] = column.
std::vector<int> solve_assignment(const Matrix& cost);

/// min over permutations pi of (1/b) sum_j ||a_j - b_pi(j)||^2; columns are points.
double ot_cost(const Matrix& a, const Matrix& b);

struct OtReference {
  int d = 0;
  int b = 0;
  double mean_cost = 0.0;
  int n_samples = 0;
  std::uint64_t seed = 0;
};

/// Mean ot_cost between independent pairs of d x b standard Gaussian matrices.
/// Pair k uses Rng::derive(seed, k).
OtReference ot_reference(int d, int b, int n_samples, std::uint64_t seed);

/// |ot_cost(z, G) - ref.mean_cost| / ref.mean_cost for one fresh Gaussian G drawn from rng.
double delta_ot(const Matrix& z, const OtReference& ref, Rng& rng);

/// Orders compared against standard normal central moments.
inline const std::map<int, double> kNormalMoments{{2, 1.0}, {4, 3.0}, {6, 15.0}, {8, 105.0}};

/// (1/n) sum (x - mean)^k for each requested order.
std::map<int, double> central_moments(std::span<const double> values,
                                      std::span<const int> orders);

struct MetricReport {
  double ks = 0.0;
  double delta_ot = 0.0;
  std::map<int, double> moments;
  std::map<int, double> rel_err_moments;
  double rel_err_free_loss = 0.0;
  double free_loss = 0.0;
  long long n_entries = 0;
};

/// Fixed CSV header shared by every metric table.
inline constexpr const char* kMetricCsvHeader = "ks,delta_ot,m2,m4,m6,m8,rel_free,n_entries";
std::string metric_csv_row(const MetricReport& r);

MetricReport full_report(const Matrix& z, const freeloss::GaussianReference& gref,
                         const OtReference& otref, Rng& rng, bool standardize_ks);

struct QqRow {
  double theoretical;
  double empirical;
};
/// n_quantiles rows (Phi^-1((i - 0.5)/n), empirical quantile), both ascending.
std::vector<QqRow> qq_dump(std::span<const double> values, int n_quantiles);
void write_qq_csv(std::ostream& os, const std::vector<QqRow>& rows);

struct HistogramRow {
  double lo;
  double hi;
  long long count;
  double density;
  double normal_density;
};
/// Equal-width bins on [lo, hi]; values outside are clamped into the edge bins.
std::vector<HistogramRow> histogram(std::span<const double> values, int bins, double lo,
                                    double hi);
void write_histogram_csv(std::ostream& os, const std::vector<HistogramRow>& rows);

/// Entries of a matrix in row-major order.
std::vector<double> flatten(const Matrix& m);

}  // namespace freegauss::gaussmetrics
