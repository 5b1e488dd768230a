#include <doctest.h>

#include "spbgc/linalg.hpp"
#include "test_helpers.hpp"

using namespace spbgc;
using namespace spbgc::testing;

TEST_SUITE("linalg") {

TEST_CASE("cholesky of the identity") {
  const CholeskyFactor f = cholesky(Matrixd::Identity(3, 3));
  CHECK((f.lower - Matrixd::Identity(3, 3)).norm() == doctest::Approx(0.0));
  CHECK(f.log_det == doctest::Approx(0.0));
}

TEST_CASE("cholesky of a hand-checkable 2x2") {
  Matrixd m(2, 2);
  m << 4.0, 2.0, 2.0, 3.0;
  const CholeskyFactor f = cholesky(m);
  CHECK(f.lower(0, 0) == doctest::Approx(2.0));
  CHECK(f.lower(1, 0) == doctest::Approx(1.0));
  CHECK(f.lower(0, 1) == doctest::Approx(0.0));
  CHECK(f.lower(1, 1) == doctest::Approx(std::sqrt(2.0)));
  CHECK(f.log_det == doctest::Approx(std::log(m.determinant())));
}

TEST_CASE("random SPD reconstruction") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrixd m = random_spd(10, rng);
    const CholeskyFactor f = cholesky(m);
    const double rel = (f.lower * f.lower.transpose() - m).norm() / m.norm();
    CHECK(rel < 1e-10);
  }
}

TEST_CASE("indefinite matrix fails even after jitter") {
  Matrixd m(2, 2);
  m << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(cholesky(m), NotPositiveDefinite);
}

TEST_CASE("singular PSD matrix passes through the jitter retry") {
  const Matrixd m = Matrixd::Ones(3, 3);
  const CholeskyFactor f = cholesky(m);
  CHECK((f.lower * f.lower.transpose() - m).norm() < 1e-6);
}

TEST_CASE("non-square input is rejected") {
  CHECK_THROWS_AS(cholesky(Matrixd::Zero(2, 3)), ShapeMismatch);
}

TEST_CASE("conditional of an identity joint is the marginal") {
  const auto c = conditional_normal(Matrixd::Identity(4, 4), {0, 2}, {1, 3},
                                    (Vectord(2) << 1.5, -2.0).finished());
  CHECK(c.mean.norm() == doctest::Approx(0.0));
  CHECK((c.cov - Matrixd::Identity(2, 2)).norm() == doctest::Approx(0.0));
}

TEST_CASE("textbook bivariate conditional") {
  const double rho = 0.7, v = 1.3;
  Matrixd joint(2, 2);
  joint << 1.0, rho, rho, 1.0;
  const auto c = conditional_normal(joint, {0}, {1}, Vectord::Constant(1, v));
  CHECK(c.mean[0] == doctest::Approx(rho * v));
  CHECK(c.cov(0, 0) == doctest::Approx(1.0 - rho * rho));
}

TEST_CASE("conditional matches the explicit-inverse Schur oracle") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrixd joint = random_spd(6, rng);
    const IndexVector target{0, 1};
    const IndexVector given{2, 3, 4, 5};
    Vectord gv(4);
    for (Index i = 0; i < 4; ++i) gv[i] = rng.normal();

    Matrixd s_tt(2, 2), s_tg(2, 4), s_gg(4, 4);
    for (Index r = 0; r < 2; ++r)
      for (Index c = 0; c < 2; ++c) s_tt(r, c) = joint(target[r], target[c]);
    for (Index r = 0; r < 2; ++r)
      for (Index c = 0; c < 4; ++c) s_tg(r, c) = joint(target[r], given[c]);
    for (Index r = 0; r < 4; ++r)
      for (Index c = 0; c < 4; ++c) s_gg(r, c) = joint(given[r], given[c]);
    const Matrixd gg_inv = s_gg.inverse();  // oracle path
    const Vectord mean_oracle = s_tg * gg_inv * gv;
    const Matrixd cov_oracle = s_tt - s_tg * gg_inv * s_tg.transpose();

    const auto c = conditional_normal(joint, target, given, gv);
    CHECK((c.mean - mean_oracle).norm() < 1e-9);
    CHECK((c.cov - cov_oracle).norm() < 1e-9);
  }
}

TEST_CASE("conditional with empty conditioning set returns the marginal exactly") {
  Rng rng(17);
  const Matrixd joint = random_spd(5, rng);
  const auto c = conditional_normal(joint, {1, 3}, {}, Vectord(0));
  CHECK(c.mean.size() == 2);
  CHECK(c.mean.norm() == 0.0);
  CHECK(c.cov(0, 0) == joint(1, 1));
  CHECK(c.cov(0, 1) == joint(1, 3));
  CHECK(c.cov(1, 1) == joint(3, 3));
}

TEST_CASE("conditional covariance does not depend on the conditioning values") {
  Rng rng(23);
  const Matrixd joint = random_spd(5, rng);
  Vectord g1(3), g2(3);
  for (Index i = 0; i < 3; ++i) {
    g1[i] = rng.normal();
    g2[i] = rng.normal();
  }
  const auto c1 = conditional_normal(joint, {0, 4}, {1, 2, 3}, g1);
  const auto c2 = conditional_normal(joint, {0, 4}, {1, 2, 3}, g2);
  CHECK((c1.cov - c2.cov).norm() == 0.0);
}

TEST_CASE("overlapping target and given sets are rejected") {
  CHECK_THROWS_AS(conditional_normal(Matrixd::Identity(3, 3), {0, 1}, {1, 2},
                                     Vectord::Zero(2)),
                  ShapeMismatch);
}

TEST_CASE("standard normal density at the origin") {
  CHECK(mvn_logpdf(Vectord::Zero(2), Vectord::Zero(2), Matrixd::Identity(2, 2)) ==
        doctest::Approx(-std::log(2.0 * M_PI)));
}

TEST_CASE("zero quadratic form at the mean") {
  Rng rng(31);
  const Matrixd cov = random_spd(4, rng);
  Vectord x(4);
  for (Index i = 0; i < 4; ++i) x[i] = rng.normal();
  const double expected =
      -0.5 * (4.0 * std::log(2.0 * M_PI) + std::log(cov.determinant()));
  CHECK(mvn_logpdf(x, x, cov) == doctest::Approx(expected));
}

TEST_CASE("density matches the explicit-inverse formula") {
  Rng rng(37);
  for (int trial = 0; trial < 25; ++trial) {
    const Matrixd cov = random_spd(5, rng);
    Vectord x(5), mean(5);
    for (Index i = 0; i < 5; ++i) {
      x[i] = rng.normal();
      mean[i] = rng.normal();
    }
    const Vectord d = x - mean;
    const double direct = -0.5 * (5.0 * std::log(2.0 * M_PI) +
                                  std::log(cov.determinant()) +
                                  d.dot(cov.inverse() * d));
    CHECK(std::abs(mvn_logpdf(x, mean, cov) - direct) < 1e-8);
  }
}

}  // TEST_SUITE
