#include "freegauss/gaussmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

namespace freegauss::gaussmetrics {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw Error(ErrorKind::ConstraintViolation, "quantile level outside [0, 1]");
  }
  // Acklam's rational approximation (relative error ~1e-9) ...
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x = 0.0;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // ... then one Halley step against the erfc-based CDF brings it to full precision.
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

double ks_statistic(std::span<const double> values, bool standardize) {
  const auto n = values.size();
  if (n < 2) throw Error(ErrorKind::DegenerateSample, "KS statistic needs at least 2 values");
  std::vector<double> sorted(values.begin(), values.end());
  if (standardize) {
    double mean = 0.0;
    for (double v : sorted) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : sorted) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    if (!(var > 0.0)) throw Error(ErrorKind::DegenerateSample, "sample has zero variance");
    const double sd = std::sqrt(var);
    for (double& v : sorted) v = (v - mean) / sd;
  }
  std::sort(sorted.begin(), sorted.end());
  const double nn = static_cast<double>(n);
  double sup = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = normal_cdf(sorted[i]);
    sup = std::max({sup, static_cast<double>(i + 1) / nn - f, f - static_cast<double>(i) / nn});
  }
  return sup;
}

std::vector<int> solve_assignment(const Matrix& cost) {
  const int n = static_cast<int>(cost.rows());
  if (n != cost.cols() || n < 1) {
    throw Error(ErrorKind::ShapeError, "assignment needs a non-empty square cost matrix");
  }
  if (n > kMaxAssignmentSize) {
    throw Error(ErrorKind::ShapeError, "assignment size " + std::to_string(n) +
                                           " exceeds the exact-solver limit " +
                                           std::to_string(kMaxAssignmentSize));
  }
  require_finite(cost, "cost matrix");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based arrays; column 0 is the virtual source of each augmenting path.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  std::vector<double> minv(n + 1);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(n);
  for (int j = 1; j <= n; ++j) assignment[match[j] - 1] = j - 1;
  return assignment;
}

double ot_cost(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorKind::ShapeError, "ot_cost needs equally shaped point clouds");
  }
  require_finite(a);
  require_finite(b);
  const Eigen::Index n = a.cols();
  Matrix cost(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) cost(i, j) = (a.col(i) - b.col(j)).squaredNorm();
  }
  const auto assignment = solve_assignment(cost);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) total += cost(i, assignment[static_cast<size_t>(i)]);
  return total / static_cast<double>(n);
}

OtReference ot_reference(int d, int b, int n_samples, std::uint64_t seed) {
  if (n_samples < 2) throw Error(ErrorKind::ConstraintViolation, "ot reference needs n >= 2");
  if (d < 1 || b < 1) throw Error(ErrorKind::ShapeError, "ot reference needs positive shape");
  double total = 0.0;
  for (int k = 0; k < n_samples; ++k) {
    Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(k));
    const Matrix g = sample_gaussian(rng, d, b);
    const Matrix h = sample_gaussian(rng, d, b);
    total += ot_cost(g, h);
  }
  return OtReference{d, b, total / n_samples, n_samples, seed};
}

double delta_ot(const Matrix& z, const OtReference& ref, Rng& rng) {
  if (z.rows() != ref.d || z.cols() != ref.b) {
    throw Error(ErrorKind::ShapeError, "code matrix shape does not match the OT reference");
  }
  const Matrix g = sample_gaussian(rng, ref.d, ref.b);
  return std::abs(ot_cost(z, g) - ref.mean_cost) / ref.mean_cost;
}

std::map<int, double> central_moments(std::span<const double> values,
                                      std::span<const int> orders) {
  if (values.size() < 2) throw Error(ErrorKind::DegenerateSample, "moments need >= 2 values");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  std::map<int, double> out;
  for (int k : orders) {
    double acc = 0.0;
    for (double v : values) acc += std::pow(v - mean, k);
    out[k] = acc / n;
  }
  return out;
}

std::vector<double> flatten(const Matrix& m) { return to_row_major(m); }

MetricReport full_report(const Matrix& z, const freeloss::GaussianReference& gref,
                         const OtReference& otref, Rng& rng, bool standardize_ks) {
  if (z.rows() != gref.d || z.cols() != gref.b) {
    throw Error(ErrorKind::ShapeError, "code matrix shape does not match the Gaussian reference");
  }
  const auto entries = flatten(z);
  MetricReport r;
  r.n_entries = static_cast<long long>(entries.size());
  r.ks = ks_statistic(entries, standardize_ks);
  r.delta_ot = delta_ot(z, otref, rng);
  static constexpr int kOrders[] = {2, 4, 6, 8};
  r.moments = central_moments(entries, kOrders);
  for (const auto& [k, ref] : kNormalMoments) {
    r.rel_err_moments[k] = std::abs((ref - r.moments[k]) / ref);
  }
  r.free_loss = freeloss::free_loss(z);
  r.rel_err_free_loss = freeloss::rel_err_free_loss(r.free_loss, gref);
  return r;
}

std::string metric_csv_row(const MetricReport& r) {
  auto moment = [&](int k) {
    const auto it = r.moments.find(k);
    return it == r.moments.end() ? std::string("nan") : format_double(it->second);
  };
  return format_double(r.ks) + ',' + format_double(r.delta_ot) + ',' + moment(2) + ',' +
         moment(4) + ',' + moment(6) + ',' + moment(8) + ',' + format_double(r.rel_err_free_loss) +
         ',' + std::to_string(r.n_entries);
}

std::vector<QqRow> qq_dump(std::span<const double> values, int n_quantiles) {
  if (n_quantiles < 2 || values.size() < static_cast<std::size_t>(n_quantiles)) {
    throw Error(ErrorKind::ConstraintViolation, "qq_dump needs values >= n_quantiles >= 2");
  }
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  std::vector<QqRow> rows;
  rows.reserve(static_cast<std::size_t>(n_quantiles));
  for (int i = 1; i <= n_quantiles; ++i) {
    const double p = (i - 0.5) / n_quantiles;
    // Empirical quantile with the same plotting position, linearly interpolated.
    const double pos = std::clamp(p * n - 0.5, 0.0, n - 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    rows.push_back({normal_quantile(p), sorted[lo] + frac * (sorted[hi] - sorted[lo])});
  }
  return rows;
}

void write_qq_csv(std::ostream& os, const std::vector<QqRow>& rows) {
  os << "theoretical,empirical\n";
  for (const auto& r : rows) os << format_double(r.theoretical) << ',' << format_double(r.empirical) << '\n';
}

std::vector<HistogramRow> histogram(std::span<const double> values, int bins, double lo,
                                    double hi) {
  if (bins < 1 || !(hi > lo)) {
    throw Error(ErrorKind::ConstraintViolation, "histogram needs bins >= 1 and hi > lo");
  }
  const double width = (hi - lo) / bins;
  std::vector<long long> counts(static_cast<std::size_t>(bins), 0);
  for (double v : values) {
    auto k = static_cast<long long>(std::floor((v - lo) / width));
    k = std::clamp<long long>(k, 0, bins - 1);
    ++counts[static_cast<std::size_t>(k)];
  }
  const double n = values.empty() ? 1.0 : static_cast<double>(values.size());
  std::vector<HistogramRow> rows;
  for (int k = 0; k < bins; ++k) {
    const double a = lo + k * width;
    const double b = a + width;
    rows.push_back({a, b, counts[static_cast<std::size_t>(k)],
                    static_cast<double>(counts[static_cast<std::size_t>(k)]) / (n * width),
                    normal_pdf(0.5 * (a + b))});
  }
  return rows;
}

void write_histogram_csv(std::ostream& os, const std::vector<HistogramRow>& rows) {
  os << "bin_lo,bin_hi,count,density,normal_density\n";
  for (const auto& r : rows) {
    os << format_double(r.lo) << ',' << format_double(r.hi) << ',' << r.count << ','
       << format_double(r.density) << ',' << format_double(r.normal_density) << '\n';
  }
}

}  // namespace freegauss::gaussmetrics
