#include <doctest.h>

#include <cmath>
#include <sstream>

#include "freegauss/matcore.hpp"
#include "oracle.hpp"
#include "support.hpp"

using namespace freegauss;

TEST_SUITE("matcore") {
  TEST_CASE("svd of the identity is all ones") {
    const auto s = svd(Matrix::Identity(3, 3));
    CHECK(s.s.isApprox(Vector::Ones(3)));
    CHECK(s.u.rows() == 3);
    CHECK(s.vt.rows() == 3);
    CHECK(s.vt.cols() == 3);
  }

  TEST_CASE("svd of a zero-padded diagonal") {
    Matrix m = Matrix::Zero(2, 4);
    m(0, 0) = 3;
    m(1, 1) = 2;
    const auto s = singular_values(m);
    CHECK(s(0) == doctest::Approx(3).epsilon(1e-15));
    CHECK(s(1) == doctest::Approx(2).epsilon(1e-15));
  }

  TEST_CASE("svd matches the one-sided Jacobi oracle") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed);
      const Matrix m = sample_gaussian(rng, 4, 8);
      const auto expected = oracle::jacobi_singular_values(oracle::to_rows(m));
      const auto got = svd(m);
      for (int i = 0; i < 4; ++i) CHECK(std::abs(got.s(i) - expected[i]) < 1e-10);
    }
  }

  TEST_CASE("svd factors reconstruct the input and are orthonormal") {
    Rng rng(3);
    const Matrix m = sample_gaussian(rng, 5, 12);
    const auto s = svd(m);
    CHECK((s.u * s.s.asDiagonal() * s.vt - m).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((s.u.transpose() * s.u - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((s.vt * s.vt.transpose() - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-12);
    for (int i = 1; i < 5; ++i) CHECK(s.s(i - 1) >= s.s(i));
  }

  TEST_CASE("svd values are invariant under left orthogonal maps") {
    Rng rng(4);
    const Matrix y = sample_gaussian(rng, 6, 20);
    const Matrix q = oracle::random_orthogonal(rng, 6);
    CHECK((singular_values(q * y) - singular_values(y)).cwiseAbs().maxCoeff() < 1e-10);
  }

  TEST_CASE("svd rejects non-finite and tall input") {
    Matrix m = Matrix::Ones(2, 3);
    m(1, 2) = NAN;
    CHECK_ERROR_KIND(svd(m), NonFinite);
    m(1, 2) = INFINITY;
    CHECK_ERROR_KIND(singular_values(m), NonFinite);
    CHECK_ERROR_KIND(svd(Matrix::Ones(3, 2)), ShapeError);
  }

  TEST_CASE("eig_sym on hand-solvable matrices") {
    const Vector a = eig_sym((Matrix(2, 2) << 5, 0, 0, 1).finished());
    CHECK(a(0) == doctest::Approx(5));
    CHECK(a(1) == doctest::Approx(1));
    // Characteristic polynomial (2 - x)^2 - 1 has roots 3 and 1.
    const Vector b = eig_sym((Matrix(2, 2) << 2, 1, 1, 2).finished());
    CHECK(std::abs(b(0) - 3) < 1e-14);
    CHECK(std::abs(b(1) - 1) < 1e-14);
  }

  TEST_CASE("eig_sym of Y Y^T equals squared singular values") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng(seed);
      const Matrix y = sample_gaussian(rng, 3, 6);
      const Vector e = eig_sym(y * y.transpose());
      const Vector s = singular_values(y);
      for (int i = 0; i < 3; ++i) CHECK(std::abs(e(i) - s(i) * s(i)) <= 1e-8 * s(i) * s(i));
    }
  }

  TEST_CASE("eig_sym rejects asymmetric and non-square input") {
    CHECK_ERROR_KIND(eig_sym((Matrix(2, 2) << 1, 2, 2.001, 1).finished()), NotSymmetric);
    CHECK_ERROR_KIND(eig_sym(Matrix::Ones(2, 3)), ShapeError);
    // Asymmetry within tolerance is accepted.
    CHECK_NOTHROW(eig_sym((Matrix(2, 2) << 1, 2, 2 + 1e-14, 1).finished()));
  }

  TEST_CASE("gaussian sampler moments, shape and determinism") {
    Rng rng(11);
    const Matrix m = sample_gaussian(rng, 1, 100000);
    const double mean = m.mean();
    const double var = (m.array() - mean).square().mean();
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1) < 0.02);
    Rng a(5);
    Rng b(5);
    CHECK(sample_gaussian(a, 2, 3) == sample_gaussian(b, 2, 3));
    Rng c(5);
    const Matrix shaped = sample_gaussian(c, 2, 3);
    CHECK(shaped.rows() == 2);
    CHECK(shaped.cols() == 3);
    CHECK_ERROR_KIND(sample_gaussian(c, 0, 3), ShapeError);
  }

  TEST_CASE("chi-squared sampler support and moments") {
    Rng rng(12);
    const Matrix m = sample_chisq1(rng, 1, 100000);
    CHECK(m.minCoeff() >= 0.0);
    const double mean = m.mean();
    const double var = (m.array() - mean).square().sum() / (m.size() - 1);
    CHECK(std::abs(mean - 1) < 0.03);
    CHECK(std::abs(var - 2) < 0.1);
  }

  TEST_CASE("rng streams are reproducible and derived streams differ") {
    Rng a(42);
    Rng b(42);
    for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());
    Rng d0 = Rng::derive(42, 0);
    Rng d1 = Rng::derive(42, 1);
    CHECK(d0.next_u64() != d1.next_u64());
    Rng u(1);
    for (int i = 0; i < 1000; ++i) {
      const double x = u.uniform();
      REQUIRE(x >= 0.0);
      REQUIRE(x < 1.0);
      REQUIRE(u.below(7) < 7);
    }
    CHECK_ERROR_KIND(u.below(0), ConstraintViolation);
  }

  TEST_CASE("csv round trip is exact") {
    Rng rng(13);
    Matrix m = sample_gaussian(rng, 3, 5);
    m(0, 0) = 0.1 + 0.2;
    m(1, 1) = -0.0;
    m(2, 2) = 1e-310;
    std::stringstream ss;
    write_matrix_csv(ss, m);
    CHECK(ss.str().find('\r') == std::string::npos);
    const Matrix back = read_matrix_csv(ss);
    CHECK(back == m);
    CHECK(parse_double(format_double(0.1)) == 0.1);
  }

  TEST_CASE("csv errors name the offending line") {
    std::stringstream bad_field("1,2\n3,x\n");
    try {
      read_matrix_csv(bad_field);
      FAIL("expected ParseError");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::ParseError);
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    std::stringstream ragged("1,2\n3\n");
    CHECK_ERROR_KIND(read_matrix_csv(ragged), ParseError);
    std::stringstream empty("");
    CHECK_ERROR_KIND(read_matrix_csv(empty), ParseError);
    std::stringstream nan_cell("1,nan\n");
    CHECK(error_kind([&] { read_matrix_csv(nan_cell); }).has_value());
    CHECK_ERROR_KIND(read_matrix_csv(std::filesystem::path("/nonexistent/m.csv")), Io);
  }

  TEST_CASE("row-major conversion validates size") {
    const Matrix m = matrix_from_row_major(2, 2, {1, 2, 3, 4});
    CHECK(m(0, 1) == 2);
    CHECK(to_row_major(m) == std::vector<double>{1, 2, 3, 4});
    CHECK_ERROR_KIND(matrix_from_row_major(2, 2, {1, 2, 3}), ShapeError);
    CHECK_ERROR_KIND(matrix_from_row_major(1, 2, {1, NAN}), NonFinite);
  }

  TEST_CASE("key=value records") {
    std::stringstream ss("# comment\n\na=1.5\nn=-3\nu=18446744073709551615\n");
    const auto kv = read_key_values(ss);
    CHECK(kv_double(kv, "a") == 1.5);
    CHECK(kv_int(kv, "n") == -3);
    CHECK(kv_u64(kv, "u") == 18446744073709551615ull);
    CHECK_ERROR_KIND(kv_double(kv, "missing"), ParseError);
    CHECK_ERROR_KIND(kv_int(kv, "a"), ParseError);
    std::stringstream dup("a=1\na=2\n");
    CHECK_ERROR_KIND(read_key_values(dup), ParseError);
    std::stringstream no_eq("oops\n");
    CHECK_ERROR_KIND(read_key_values(no_eq), ParseError);
  }
}
