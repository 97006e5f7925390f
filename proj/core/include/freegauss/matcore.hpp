#pragma once

// Dense linear algebra, seeded sampling and spectral decompositions.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "freegauss/error.hpp"

namespace freegauss {

/// Dense real matrix. Batch-code matrices are stored d x b (columns are samples).
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Throws NonFinite if any entry is NaN or Inf.
void require_finite(const Matrix& m, std::string_view what = "matrix");

/// Builds a matrix from row-major entries; validates size and finiteness.
Matrix matrix_from_row_major(Eigen::Index rows, Eigen::Index cols,
                             const std::vector<double>& entries);
std::vector<double> to_row_major(const Matrix& m);

/// xoshiro256** seeded through splitmix64. Bit-identical streams for identical
/// seeds on every platform. Single owner: never share one instance between threads.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Independent stream for (seed, index); used to give each worker or draw its own Rng.
  static Rng derive(std::uint64_t seed, std::uint64_t index);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal via Box-Muller; the second variate is cached.
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  template <class It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = below(i);
      std::iter_swap(first + (i - 1), first + j);
    }
  }

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> state_{};
  std::optional<double> spare_normal_;
};

std::uint64_t splitmix64(std::uint64_t& state);

Matrix sample_gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols);
/// Entries are squares of independent standard normals.
Matrix sample_chisq1(Rng& rng, Eigen::Index rows, Eigen::Index cols);

/// Thin SVD of a d x b matrix with d <= b.
struct Svd {
  Matrix u;   // d x d
  Vector s;   // d, descending
  Matrix vt;  // d x b
};

/// Errors: NonFinite, ShapeError (rows > cols), NoConvergence.
Svd svd(const Matrix& m);
/// Singular values only (descending); cheaper than svd().
Vector singular_values(const Matrix& m);

/// Eigenvalues of a symmetric matrix, descending. Symmetry is checked against
/// 1e-12 * max(1, max|m|); NotSymmetric otherwise.
Vector eig_sym(const Matrix& m);

// CSV: one matrix row per line, comma separated, '.' decimal, no header,
// 17 significant digits, LF line endings.
std::string format_double(double x);
void write_matrix_csv(std::ostream& os, const Matrix& m);
void write_matrix_csv(const std::filesystem::path& path, const Matrix& m);
/// ParseError names the 1-based line (and column) of the first malformed field.
Matrix read_matrix_csv(std::istream& is);
Matrix read_matrix_csv(const std::filesystem::path& path);

/// Parses a double with std::from_chars (exact round trip of format_double).
std::optional<double> parse_double(std::string_view text);

/// key=value lines; blank lines and '#' comments skipped. ParseError on a line
/// without '=' or a duplicated key.
std::map<std::string, std::string> read_key_values(std::istream& is);
double kv_double(const std::map<std::string, std::string>& kv, const std::string& key);
long long kv_int(const std::map<std::string, std::string>& kv, const std::string& key);
std::uint64_t kv_u64(const std::map<std::string, std::string>& kv, const std::string& key);

}  // namespace freegauss
