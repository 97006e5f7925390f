#include "freegauss/matcore.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace freegauss {

void require_finite(const Matrix& m, std::string_view what) {
  if (!m.allFinite()) {
    throw Error(ErrorKind::NonFinite, std::string(what) + " contains NaN or Inf entries");
  }
}

Matrix matrix_from_row_major(Eigen::Index rows, Eigen::Index cols,
                             const std::vector<double>& entries) {
  if (rows < 1 || cols < 1 || static_cast<Eigen::Index>(entries.size()) != rows * cols) {
    throw Error(ErrorKind::ShapeError, "row-major entries do not match shape " +
                                           std::to_string(rows) + "x" + std::to_string(cols));
  }
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = entries[static_cast<size_t>(i * cols + j)];
  }
  require_finite(m);
  return m;
}

std::vector<double> to_row_major(const Matrix& m) {
  std::vector<double> out;
  out.reserve(static_cast<size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rng

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {
constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t sm = seed;
  for (auto& s : state_) s = splitmix64(sm);
}

Rng Rng::derive(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t sm = index ^ 0x6a09e667f3bcc909ULL;
  const std::uint64_t mixed = seed ^ splitmix64(sm);
  return Rng(mixed);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  if (spare_normal_) {
    const double z = *spare_normal_;
    spare_normal_.reset();
    return z;
  }
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_normal_ = r * std::sin(angle);
  return r * std::cos(angle);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw Error(ErrorKind::ConstraintViolation, "Rng::below(0)");
  // Reject the incomplete final block so every residue is equally likely.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  for (;;) {
    const std::uint64_t x = next_u64();
    if (x < limit) return x % n;
  }
}

Matrix sample_gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  if (rows < 1 || cols < 1) throw Error(ErrorKind::ShapeError, "sample shape must be positive");
  Matrix m(rows, cols);
  // Row-major fill order so the stream layout matches the CSV layout.
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  }
  return m;
}

Matrix sample_chisq1(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix m = sample_gaussian(rng, rows, cols);
  return m.array().square().matrix();
}

// ---------------------------------------------------------------------------
// Decompositions

namespace {

void check_wide(const Matrix& m) {
  if (m.rows() < 1 || m.cols() < 1) throw Error(ErrorKind::ShapeError, "empty matrix");
  if (m.rows() > m.cols()) {
    throw Error(ErrorKind::ShapeError, "svd expects rows <= cols, got " +
                                           std::to_string(m.rows()) + "x" +
                                           std::to_string(m.cols()));
  }
  require_finite(m);
}

}  // namespace

Svd svd(const Matrix& m) {
  check_wide(m);
  Eigen::JacobiSVD<Matrix> dec(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (dec.info() != Eigen::Success) {
    throw Error(ErrorKind::NoConvergence, "Jacobi SVD did not converge on " +
                                              std::to_string(m.rows()) + "x" +
                                              std::to_string(m.cols()) + " input");
  }
  // Eigen returns singular values already sorted in decreasing order.
  return Svd{dec.matrixU(), dec.singularValues(), dec.matrixV().transpose()};
}

Vector singular_values(const Matrix& m) {
  check_wide(m);
  Eigen::JacobiSVD<Matrix> dec(m);
  if (dec.info() != Eigen::Success) {
    throw Error(ErrorKind::NoConvergence, "Jacobi SVD did not converge");
  }
  return dec.singularValues();
}

Vector eig_sym(const Matrix& m) {
  if (m.rows() != m.cols() || m.rows() < 1) {
    throw Error(ErrorKind::ShapeError, "eig_sym expects a non-empty square matrix");
  }
  require_finite(m);
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * scale) {
    throw Error(ErrorKind::NotSymmetric,
                "max |m - m^T| = " + format_double(asym) + " exceeds tolerance");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorKind::NoConvergence, "symmetric eigensolver did not converge");
  }
  // Eigen sorts ascending.
  return solver.eigenvalues().reverse();
}

// ---------------------------------------------------------------------------
// CSV

std::string format_double(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::general, 17);
  return std::string(buf, end);
}

std::optional<double> parse_double(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) {
    text.remove_suffix(1);
  }
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (text.empty()) return std::nullopt;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

void write_matrix_csv(std::ostream& os, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) os << ',';
      os << format_double(m(i, j));
    }
    os << '\n';
  }
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  write_matrix_csv(os, m);
}

Matrix read_matrix_csv(std::istream& is) {
  std::vector<double> entries;
  Eigen::Index rows = 0;
  Eigen::Index cols = -1;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    Eigen::Index count = 0;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      const auto field = std::string_view(line).substr(
          start, comma == std::string::npos ? std::string::npos : comma - start);
      const auto value = parse_double(field);
      if (!value || !std::isfinite(*value)) {
        throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ", column " +
                                               std::to_string(count + 1) +
                                               ": not a finite number: '" + std::string(field) +
                                               "'");
      }
      entries.push_back(*value);
      ++count;
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (cols >= 0 && count != cols) {
      throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": expected " +
                                             std::to_string(cols) + " fields, found " +
                                             std::to_string(count));
    }
    cols = count;
    ++rows;
  }
  if (rows == 0) throw Error(ErrorKind::ParseError, "no data rows");
  return matrix_from_row_major(rows, cols, entries);
}

Matrix read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return read_matrix_csv(is);
}

std::map<std::string, std::string> read_key_values(std::istream& is) {
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": expected key=value");
    }
    auto [it, inserted] = out.emplace(line.substr(0, eq), line.substr(eq + 1));
    if (!inserted) {
      throw Error(ErrorKind::ParseError,
                  "line " + std::to_string(line_no) + ": duplicate key '" + it->first + "'");
    }
  }
  return out;
}

double kv_double(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw Error(ErrorKind::ParseError, "missing key '" + key + "'");
  const auto v = parse_double(it->second);
  if (!v) throw Error(ErrorKind::ParseError, "key '" + key + "' is not a number");
  return *v;
}

long long kv_int(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw Error(ErrorKind::ParseError, "missing key '" + key + "'");
  long long value = 0;
  const auto& s = it->second;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorKind::ParseError, "key '" + key + "' is not an integer");
  }
  return value;
}

std::uint64_t kv_u64(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw Error(ErrorKind::ParseError, "missing key '" + key + "'");
  std::uint64_t value = 0;
  const auto& s = it->second;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorKind::ParseError, "key '" + key + "' is not an unsigned integer");
  }
  return value;
}

}  // namespace freegauss
