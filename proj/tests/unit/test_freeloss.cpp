#include <doctest.h>

#include <cmath>
#include <sstream>

#include "freegauss/freeloss.hpp"
#include "freegauss/rmt.hpp"
#include "frozen_values.hpp"
#include "oracle.hpp"
#include "support.hpp"

using namespace freegauss;
using namespace freegauss::freeloss;

namespace {

Matrix padded_diag(const std::vector<double>& s, int b) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(s.size()), b);
  for (size_t i = 0; i < s.size(); ++i) m(i, i) = s[i];
  return m;
}

}  // namespace

TEST_SUITE("freeloss") {
  TEST_CASE("hand example from singular values") {
    const std::vector<double> sigma{2.0, 1.0};
    const auto r = free_energy_from_singular_values(sigma, 4);
    CHECK(std::abs(r.entropy_term - frozen::kHandEntropy) < 1e-14);
    CHECK(std::abs(r.potential_term - frozen::kHandPotential) < 1e-14);
    CHECK(std::abs(r.loss - frozen::kHandLoss) < 1e-14);
    CHECK(r.c == 0.5);
    CHECK(r.d == 2);
    CHECK(r.b == 4);
    CHECK(r.loss == -(r.entropy_term - r.potential_term));
  }

  TEST_CASE("hand example from a matrix, in any singular value order") {
    CHECK(std::abs(free_loss(padded_diag({2, 1}, 4)) - frozen::kHandLoss) < 1e-14);
    CHECK(std::abs(free_loss(padded_diag({1, 2}, 4)) - frozen::kHandLoss) < 1e-14);
    const std::vector<double> reversed{1.0, 2.0};
    CHECK(std::abs(free_energy_from_singular_values(reversed, 4).loss - frozen::kHandLoss) < 1e-14);
  }

  TEST_CASE("hand gradient") {
    const Matrix g = free_loss_grad(padded_diag({2, 1}, 4));
    Matrix expected = Matrix::Zero(2, 4);
    expected(0, 0) = frozen::kHandGrad1;
    expected(1, 1) = frozen::kHandGrad2;
    CHECK((g - expected).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(std::abs(frozen::kHandGrad1 - (-5.0 / 6.0)) < 1e-15);
  }

  TEST_CASE("loss and gradient from one decomposition agree with the separate calls") {
    Rng rng(1);
    const Matrix y = sample_gaussian(rng, 6, 20);
    const auto lg = free_loss_with_grad(y);
    CHECK(lg.report.loss == free_loss(y));
    CHECK((lg.grad - free_loss_grad(y)).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("invariance under orthogonal maps and column permutations") {
    Rng rng(2);
    const Matrix y = sample_gaussian(rng, 8, 40);
    const Matrix q = oracle::random_orthogonal(rng, 8);
    CHECK(std::abs(free_loss(q * y) - free_loss(y)) < 1e-10);
    Matrix permuted(8, 40);
    for (int j = 0; j < 40; ++j) permuted.col(j) = y.col((j * 7 + 3) % 40);
    CHECK(std::abs(free_loss(permuted) - free_loss(y)) < 1e-10);
  }

  TEST_CASE("gradient matches central differences on separated 4 x 16 spectra") {
    for (std::uint64_t k = 0; k < 10; ++k) {
      Rng rng = Rng::derive(3, k);
      std::vector<double> sigma{0.5, 0.0, 0.0, 0.0};
      for (int i = 1; i < 4; ++i) sigma[i] = sigma[i - 1] + 0.1 + rng.uniform();
      const Matrix y = oracle::with_singular_values(rng, sigma, 16);
      const Matrix fd = oracle::central_difference([](const Matrix& m) { return free_loss(m); }, y, 1e-5);
      CHECK(oracle::max_rel_error(free_loss_grad(y), fd, 1e-3 * fd.cwiseAbs().maxCoeff()) < 1e-4);
    }
  }

  TEST_CASE("gradient is equivariant under left orthogonal maps") {
    Rng rng(4);
    const Matrix y = sample_gaussian(rng, 5, 20);
    const Matrix q = oracle::random_orthogonal(rng, 5);
    CHECK((free_loss_grad(q * y) - q * free_loss_grad(y)).cwiseAbs().maxCoeff() < 1e-8);
  }

  TEST_CASE("repulsion: shrinking one gap raises the loss") {
    double prev = -INFINITY;
    for (double gap : {1.0, 0.5, 0.25, 0.1, 0.01, 1e-4}) {
      const double loss = free_loss(padded_diag({1.0, 1.0 + gap, 3.0}, 12));
      CHECK(loss > prev);
      prev = loss;
    }
  }

  TEST_CASE("entropy term equals the free entropy of the squared singular values") {
    Rng rng(5);
    const Matrix y = sample_gaussian(rng, 10, 50);
    const Vector s = singular_values(y);
    std::vector<double> atoms;
    for (Eigen::Index i = 0; i < s.size(); ++i) atoms.push_back(s(i) * s(i));
    CHECK(std::abs(free_energy(y).entropy_term - rmt::free_entropy(rmt::DiscreteMeasure::uniform(atoms))) <
          1e-12);
  }

  TEST_CASE("shape and spectrum errors") {
    CHECK_ERROR_KIND(free_loss(Matrix::Ones(1, 4)), ShapeError);
    CHECK_ERROR_KIND(free_loss(Matrix::Identity(3, 3)), ShapeError);
    CHECK_ERROR_KIND(free_loss(Matrix::Ones(4, 3)), ShapeError);
    CHECK_ERROR_KIND(free_loss(padded_diag({1.0, 0.0}, 4)), ZeroSingularValue);
    CHECK_ERROR_KIND(free_loss(padded_diag({1.0, 1.0}, 4)), CoalescedSingularValues);
    CHECK_ERROR_KIND(free_loss_grad(padded_diag({2.0, 2.0, 1.0}, 5)), CoalescedSingularValues);
    Matrix bad = padded_diag({2, 1}, 4);
    bad(0, 3) = NAN;
    CHECK_ERROR_KIND(free_loss(bad), NonFinite);
    const std::vector<double> coalesced{1.0, 1.0 + 1e-17};
    CHECK_ERROR_KIND(free_energy_from_singular_values(coalesced, 4), CoalescedSingularValues);
    // Tiny but resolvable singular values are accepted.
    CHECK_NOTHROW(free_loss(padded_diag({1.0, 1e-6}, 4)));
  }

  TEST_CASE("sigma resolution scales with the largest singular value") {
    CHECK(sigma_resolution(1.0, 32, 256) == 256 * std::numeric_limits<double>::epsilon());
    CHECK(sigma_resolution(10.0, 32, 256) == 10 * sigma_resolution(1.0, 32, 256));
  }

  TEST_CASE("gaussian reference at 32 x 256") {
    const auto ref = gaussian_reference(32, 256, 200, 1);
    CHECK(std::abs(ref.mean_loss - (-34.69)) <= 0.5);
    // Independent Monte Carlo with a different generator.
    CHECK(std::abs(ref.mean_loss - frozen::kNumpyGaussRefNormalized) < 0.005);
    CHECK(ref.std_loss > 0);
    CHECK(ref.n_samples == 200);
    const auto again = gaussian_reference(32, 256, 200, 1);
    CHECK(again.mean_loss == ref.mean_loss);
    CHECK(again.std_loss == ref.std_loss);
    CHECK(gaussian_reference(32, 256, 10, 2).mean_loss != gaussian_reference(32, 256, 10, 3).mean_loss);
    CHECK_ERROR_KIND(gaussian_reference(32, 256, 1, 1), ConstraintViolation);
    CHECK_ERROR_KIND(gaussian_reference(32, 32, 10, 1), ShapeError);
  }

  TEST_CASE("listing convention gives a very different reference") {
    double mean = 0;
    for (std::uint64_t k = 0; k < 20; ++k) {
      Rng rng = Rng::derive(6, k);
      mean += free_energy(sample_gaussian(rng, 32, 256), PotentialConvention::ListingCompat).loss / 20;
    }
    CHECK(std::abs(mean - frozen::kNumpyGaussRefListing) < 2.0);
  }

  TEST_CASE("relative error against the reference") {
    const auto ref = gaussian_reference(8, 64, 50, 7);
    CHECK(rel_err_free_loss(ref.mean_loss, ref) == 0.0);
    Rng rng(8);
    CHECK(rel_err_free_loss(sample_gaussian(rng, 8, 64), ref) < 0.05);
    CHECK_ERROR_KIND(rel_err_free_loss(sample_gaussian(rng, 8, 65), ref), ShapeError);
  }

  TEST_CASE("records round trip") {
    const auto ref = gaussian_reference(4, 16, 10, 9);
    std::stringstream ss;
    write_record(ss, ref);
    const auto back = read_gaussian_reference(ss);
    CHECK(back.mean_loss == ref.mean_loss);
    CHECK(back.std_loss == ref.std_loss);
    CHECK(back.d == 4);
    CHECK(back.b == 16);
    CHECK(back.seed == 9);
    const auto r = free_energy(padded_diag({2, 1}, 4));
    std::stringstream rs;
    write_record(rs, r);
    const auto rb = read_free_loss_report(rs);
    CHECK(rb.loss == r.loss);
    CHECK(rb.entropy_term == r.entropy_term);
    std::stringstream wrong;
    write_record(wrong, r);
    CHECK_ERROR_KIND(read_gaussian_reference(wrong), ParseError);
  }
}
