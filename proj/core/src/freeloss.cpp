#include "freegauss/freeloss.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <vector>

namespace freegauss::freeloss {

double sigma_resolution(double sigma_max, int d, int b) {
  return std::max(d, b) * std::numeric_limits<double>::epsilon() * sigma_max;
}

namespace {

void check_shape(int d, int b) {
  if (d < 2 || d >= b) {
    throw Error(ErrorKind::ShapeError, "free energy needs 2 <= d < b, got d=" + std::to_string(d) +
                                           " b=" + std::to_string(b));
  }
}

// Validates positivity and separation of the squared singular values.
void check_spectrum(std::span<const double> sigma, int b) {
  std::vector<double> s(sigma.begin(), sigma.end());
  std::sort(s.begin(), s.end());
  const double tol = sigma_resolution(s.back(), static_cast<int>(s.size()), b);
  if (!(s.front() > tol)) {
    throw Error(ErrorKind::ZeroSingularValue, "smallest singular value " +
                                                  format_double(s.front()) +
                                                  " is within SVD resolution " + format_double(tol));
  }
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (s[i] - s[i - 1] <= tol) {
      throw Error(ErrorKind::CoalescedSingularValues,
                  "singular values " + format_double(s[i - 1]) + " and " + format_double(s[i]) +
                      " are within SVD resolution " + format_double(tol));
    }
  }
}

}  // namespace

FreeLossReport free_energy_from_singular_values(std::span<const double> sigma, int b,
                                                PotentialConvention convention) {
  const int d = static_cast<int>(sigma.size());
  check_shape(d, b);
  for (double s : sigma) {
    if (!std::isfinite(s)) throw Error(ErrorKind::NonFinite, "singular value is not finite");
  }
  check_spectrum(sigma, b);

  const double dd = d;
  const double c = dd / b;
  double entropy = 0.0;
  for (int i = 0; i < d; ++i) {
    const double li = sigma[i] * sigma[i];
    for (int j = i + 1; j < d; ++j) {
      entropy += std::log(std::abs(li - sigma[j] * sigma[j]));
    }
  }
  // i<j pairs counted once; the sum over i!=j doubles them.
  entropy = 2.0 * entropy / (dd * (dd - 1.0));

  double trace = 0.0;
  double log_sum = 0.0;
  for (double s : sigma) {
    trace += s * s;
    log_sum += std::log(s * s);
  }
  const double barrier = 1.0 / c - 1.0;
  double potential = 0.0;
  switch (convention) {
    case PotentialConvention::Normalized:
      potential = (trace / dd - barrier * log_sum) / dd;
      break;
    case PotentialConvention::ListingCompat:
      potential = (dd * (trace / dd) - barrier * log_sum) / dd;
      break;
  }

  FreeLossReport r;
  r.entropy_term = entropy;
  r.potential_term = potential;
  r.loss = -(entropy - potential);
  r.c = c;
  r.d = d;
  r.b = b;
  return r;
}

FreeLossReport free_energy(const Matrix& y, PotentialConvention convention) {
  check_shape(static_cast<int>(y.rows()), static_cast<int>(y.cols()));
  const Vector s = singular_values(y);
  return free_energy_from_singular_values(std::span<const double>(s.data(), s.size()),
                                          static_cast<int>(y.cols()), convention);
}

double free_loss(const Matrix& y) { return free_energy(y).loss; }

LossAndGrad free_loss_with_grad(const Matrix& y) {
  check_shape(static_cast<int>(y.rows()), static_cast<int>(y.cols()));
  const Svd dec = svd(y);
  const auto& s = dec.s;
  const auto report = free_energy_from_singular_values(
      std::span<const double>(s.data(), s.size()), static_cast<int>(y.cols()));

  const Eigen::Index d = s.size();
  const double dd = static_cast<double>(d);
  const double barrier = 1.0 / report.c - 1.0;
  Vector g(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    const double lk = s[k] * s[k];
    double repulsion = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      if (j != k) repulsion += 1.0 / (lk - s[j] * s[j]);
    }
    g[k] = -(4.0 * s[k] / (dd * (dd - 1.0))) * repulsion +
           (2.0 / dd) * (s[k] / dd - barrier / s[k]);
  }
  return LossAndGrad{report, dec.u * g.asDiagonal() * dec.vt};
}

Matrix free_loss_grad(const Matrix& y) { return free_loss_with_grad(y).grad; }

GaussianReference gaussian_reference(int d, int b, int n_samples, std::uint64_t seed) {
  check_shape(d, b);
  if (n_samples < 2) {
    throw Error(ErrorKind::ConstraintViolation, "gaussian reference needs n_samples >= 2");
  }
  constexpr int kMaxConsecutiveRetries = 10;
  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(n_samples));
  int retries = 0;
  for (int k = 0; k < n_samples; ++k) {
    Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(k));
    for (int attempt = 0;; ++attempt) {
      try {
        losses.push_back(free_loss(sample_gaussian(rng, d, b)));
        break;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::CoalescedSingularValues) throw;
        ++retries;
        if (attempt + 1 >= kMaxConsecutiveRetries) {
          throw Error(ErrorKind::CoalescedSingularValues,
                      "draw " + std::to_string(k) + " failed " +
                          std::to_string(kMaxConsecutiveRetries) + " consecutive times");
        }
      }
    }
  }
  double mean = 0.0;
  for (double l : losses) mean += l;
  mean /= n_samples;
  double var = 0.0;
  for (double l : losses) var += (l - mean) * (l - mean);
  var /= (n_samples - 1);
  return GaussianReference{d, b, mean, std::sqrt(var), n_samples, seed, retries};
}

double rel_err_free_loss(double loss, const GaussianReference& ref) {
  return std::abs((ref.mean_loss - loss) / ref.mean_loss);
}

double rel_err_free_loss(const Matrix& y, const GaussianReference& ref) {
  if (y.rows() != ref.d || y.cols() != ref.b) {
    throw Error(ErrorKind::ShapeError, "matrix shape does not match the reference (" +
                                           std::to_string(ref.d) + "x" + std::to_string(ref.b) +
                                           ")");
  }
  return rel_err_free_loss(free_loss(y), ref);
}

void write_record(std::ostream& os, const FreeLossReport& r) {
  os << "record=free_loss_report\n"
     << "loss=" << format_double(r.loss) << '\n'
     << "entropy_term=" << format_double(r.entropy_term) << '\n'
     << "potential_term=" << format_double(r.potential_term) << '\n'
     << "c=" << format_double(r.c) << '\n'
     << "d=" << r.d << '\n'
     << "b=" << r.b << '\n';
}

void write_record(std::ostream& os, const GaussianReference& r) {
  os << "record=gaussian_reference\n"
     << "d=" << r.d << '\n'
     << "b=" << r.b << '\n'
     << "mean_loss=" << format_double(r.mean_loss) << '\n'
     << "std_loss=" << format_double(r.std_loss) << '\n'
     << "n_samples=" << r.n_samples << '\n'
     << "seed=" << r.seed << '\n'
     << "retries=" << r.retries << '\n';
}

namespace {

void expect_record(const std::map<std::string, std::string>& kv, const std::string& name) {
  const auto it = kv.find("record");
  if (it == kv.end() || it->second != name) {
    throw Error(ErrorKind::ParseError, "expected record=" + name);
  }
}

}  // namespace

FreeLossReport read_free_loss_report(std::istream& is) {
  const auto kv = read_key_values(is);
  expect_record(kv, "free_loss_report");
  FreeLossReport r;
  r.loss = kv_double(kv, "loss");
  r.entropy_term = kv_double(kv, "entropy_term");
  r.potential_term = kv_double(kv, "potential_term");
  r.c = kv_double(kv, "c");
  r.d = static_cast<int>(kv_int(kv, "d"));
  r.b = static_cast<int>(kv_int(kv, "b"));
  return r;
}

GaussianReference read_gaussian_reference(std::istream& is) {
  const auto kv = read_key_values(is);
  expect_record(kv, "gaussian_reference");
  GaussianReference r;
  r.d = static_cast<int>(kv_int(kv, "d"));
  r.b = static_cast<int>(kv_int(kv, "b"));
  r.mean_loss = kv_double(kv, "mean_loss");
  r.std_loss = kv_double(kv, "std_loss");
  r.n_samples = static_cast<int>(kv_int(kv, "n_samples"));
  r.seed = kv_u64(kv, "seed");
  r.retries = static_cast<int>(kv_int(kv, "retries"));
  return r;
}

}  // namespace freegauss::freeloss
