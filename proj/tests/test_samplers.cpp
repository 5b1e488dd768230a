#include <doctest.h>

#include <cmath>

#include "spbgc/samplers.hpp"
#include "test_helpers.hpp"

using namespace spbgc;
using namespace spbgc::testing;

namespace {

double std_normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

// Composite Simpson rule on [a, b].
template <typename F>
double simpson(F&& f, double a, double b, int intervals) {
  const double h = (b - a) / intervals;
  double s = f(a) + f(b);
  for (int i = 1; i < intervals; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

}  // namespace

TEST_SUITE("samplers") {

TEST_CASE("unbounded box reproduces the target moments") {
  Rng rng(101);
  Matrixd cov(2, 2);
  cov << 2.0, 0.8, 0.8, 1.0;
  Vectord mean(2);
  mean << -1.0, 0.5;
  const TruncationBox box = TruncationBox::unbounded(2);
  const int n = 50000;
  Vectord sum = Vectord::Zero(2);
  Matrixd sum2 = Matrixd::Zero(2, 2);
  for (int i = 0; i < n; ++i) {
    const Vectord x = sample_tmvn(mean, cov, box, rng);
    sum += x;
    sum2 += x * x.transpose();
  }
  const Vectord m = sum / n;
  const Matrixd c = sum2 / n - m * m.transpose();
  for (Index k = 0; k < 2; ++k) {
    const double se = std::sqrt(cov(k, k) / n);
    CHECK(std::abs(m[k] - mean[k]) < 3.0 * se);
  }
  // covariance entries: se of order sqrt(2) * var / sqrt(n)
  CHECK(std::abs(c(0, 0) - 2.0) < 3.0 * 2.0 * std::sqrt(2.0 / n));
  CHECK(std::abs(c(0, 1) - 0.8) < 3.0 * 1.6 * std::sqrt(2.0 / n));
  CHECK(std::abs(c(1, 1) - 1.0) < 3.0 * 1.0 * std::sqrt(2.0 / n));
}

TEST_CASE("half-normal first moment") {
  Rng rng(103);
  TruncationBox box{Vectord::Constant(1, 0.0), Vectord::Constant(1, kInf)};
  const int n = 50000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i)
    sum += sample_tmvn(Vectord::Zero(1), Matrixd::Identity(1, 1), box, rng)[0];
  const double target = std::sqrt(2.0 / M_PI);
  const double sd = std::sqrt(1.0 - 2.0 / M_PI);
  CHECK(std::abs(sum / n - target) < 3.0 * sd / std::sqrt(double(n)));
}

TEST_CASE("positive orthant mean matches the quadrature oracle") {
  // independent standard normal components restricted to (0, inf)^2
  const double mass = simpson([](double x) { return std_normal_pdf(x); }, 0.0, 9.0, 900);
  const double first = simpson([](double x) { return x * std_normal_pdf(x); }, 0.0, 9.0, 900);
  const double oracle = first / mass;

  Rng rng(107);
  TruncationBox box{Vectord::Zero(2), Vectord::Constant(2, kInf)};
  const int n = 50000;
  Vectord sum = Vectord::Zero(2);
  for (int i = 0; i < n; ++i)
    sum += sample_tmvn(Vectord::Zero(2), Matrixd::Identity(2, 2), box, rng);
  CHECK(std::abs(sum[0] / n - oracle) < 1e-2);
  CHECK(std::abs(sum[1] / n - oracle) < 1e-2);
}

TEST_CASE("every draw lies strictly inside the box") {
  Rng rng(109);
  Matrixd cov(3, 3);
  cov << 1.0, 0.6, 0.2, 0.6, 1.0, -0.3, 0.2, -0.3, 1.0;
  for (int trial = 0; trial < 2000; ++trial) {
    TruncationBox box;
    box.lower = Vectord::Constant(3, -0.05 + 0.1 * rng.normal());
    box.upper = box.lower.array() + 0.02 + 0.3 * rng.uniform();
    Vectord mean(3);
    for (Index k = 0; k < 3; ++k) mean[k] = rng.normal();
    const Vectord x = sample_tmvn(mean, cov, box, rng);
    for (Index k = 0; k < 3; ++k) {
      CHECK(x[k] > box.lower[k]);
      CHECK(x[k] < box.upper[k]);
    }
  }
}

TEST_CASE("deep-tail boxes are handled exactly") {
  Rng rng(113);
  TruncationBox box{Vectord::Constant(1, 8.0), Vectord::Constant(1, kInf)};
  const int n = 20000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = sample_tmvn(Vectord::Zero(1), Matrixd::Identity(1, 1), box, rng)[0];
    CHECK(x > 8.0);
    sum += x;
  }
  // E[X | X > a] = phi(a) / Phi(-a); a = 8
  const double oracle = std_normal_pdf(8.0) / std::exp(ln_norm_cdf(-8.0));
  CHECK(sum / n == doctest::Approx(oracle).epsilon(2e-3));
}

TEST_CASE("invalid boxes and shapes are rejected") {
  Rng rng(127);
  TruncationBox bad{Vectord::Constant(2, 1.0), Vectord::Constant(2, 1.0)};
  CHECK_THROWS_AS(sample_tmvn(Vectord::Zero(2), Matrixd::Identity(2, 2), bad, rng),
                  ShapeMismatch);
  TruncationBox box3 = TruncationBox::unbounded(3);
  CHECK_THROWS_AS(sample_tmvn(Vectord::Zero(2), Matrixd::Identity(2, 2), box3, rng),
                  ShapeMismatch);
}

TEST_CASE("dimensions beyond 100 use Gibbs unless accept-reject is forced") {
  Rng rng(131);
  const Index d = 120;
  TruncationBox box{Vectord::Constant(d, -1.0), Vectord::Constant(d, 1.0)};
  const Vectord x = sample_tmvn(Vectord::Zero(d), Matrixd::Identity(d, d), box, rng);
  for (Index k = 0; k < d; ++k) {
    CHECK(x[k] > -1.0);
    CHECK(x[k] < 1.0);
  }
  TmvnOptions opts;
  opts.force_accept_reject = true;
  CHECK_THROWS_AS(sample_tmvn(Vectord::Zero(d), Matrixd::Identity(d, d), box, rng, opts),
                  DimensionTooLarge);
}

TEST_CASE("fixed seeds reproduce draw sequences exactly") {
  Matrixd cov(2, 2);
  cov << 1.0, 0.4, 0.4, 1.0;
  TruncationBox box{Vectord::Constant(2, -0.5), Vectord::Constant(2, 2.0)};
  Rng a(555), b(555);
  for (int i = 0; i < 200; ++i) {
    const Vectord xa = sample_tmvn(Vectord::Zero(2), cov, box, a);
    const Vectord xb = sample_tmvn(Vectord::Zero(2), cov, box, b);
    CHECK(xa[0] == xb[0]);
    CHECK(xa[1] == xb[1]);
  }
  Rng c(556);
  bool any_diff = false;
  for (int i = 0; i < 10; ++i)
    if (sample_tmvn(Vectord::Zero(2), cov, box, c)[0] !=
        sample_tmvn(Vectord::Zero(2), cov, box, a)[0])
      any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("inverse-Wishart Monte-Carlo mean") {
  Rng rng(137);
  const Matrixd scale = 7.0 * Matrixd::Identity(2, 2);
  const int n = 50000;
  Matrixd sum = Matrixd::Zero(2, 2);
  for (int i = 0; i < n; ++i) sum += sample_inverse_wishart(10.0, scale, rng);
  const Matrixd m = sum / n;
  // target scale/(df-dim-1) = I; var(V_jj) = 2 s^2 / ((df-d-1)^2 (df-d-3))
  const double sd = std::sqrt(2.0 * 49.0 / (49.0 * 5.0));
  CHECK(std::abs(m(0, 0) - 1.0) < 3.0 * sd / std::sqrt(double(n)));
  CHECK(std::abs(m(1, 1) - 1.0) < 3.0 * sd / std::sqrt(double(n)));
  CHECK(std::abs(m(0, 1)) < 3.0 * sd / std::sqrt(double(n)));
}

TEST_CASE("every inverse-Wishart draw is SPD") {
  Rng rng(139);
  const Matrixd scale = random_spd(4, rng);
  for (int i = 0; i < 200; ++i) {
    const Matrixd v = sample_inverse_wishart(7.5, scale, rng);
    CHECK_NOTHROW(cholesky(v));
    CHECK((v - v.transpose()).norm() < 1e-12 * v.norm());
  }
}

TEST_CASE("one-dimensional reduction matches inverse-gamma moments") {
  Rng rng(149);
  const double v = 9.0, s = 4.0;
  const int n = 50000;
  double sum = 0.0, sum_inv = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = sample_inverse_wishart(v, Matrixd::Constant(1, 1, s), rng)(0, 0);
    sum += x;
    sum_inv += 1.0 / x;
  }
  // X ~ IG(v/2, s/2): E[X] = s/(v-2), E[1/X] = v/s
  const double mean_target = s / (v - 2.0);
  // var(X) = (s/2)^2 / ((v/2-1)^2 (v/2-2))
  const double sd = std::sqrt(std::pow(0.5 * s, 2) / (std::pow(0.5 * v - 1.0, 2) * (0.5 * v - 2.0)));
  CHECK(std::abs(sum / n - mean_target) < 3.0 * sd / std::sqrt(double(n)));
  const double sd_inv = std::sqrt(2.0 * v / (s * s));  // 1/X ~ Gamma(v/2, rate s/2)
  CHECK(std::abs(sum_inv / n - v / s) < 3.0 * sd_inv / std::sqrt(double(n)));
}

TEST_CASE("degrees-of-freedom precondition") {
  Rng rng(151);
  CHECK_THROWS_AS(sample_inverse_wishart(1.5, Matrixd::Identity(3, 3), rng),
                  InvalidDegreesOfFreedom);
}

TEST_CASE("flat target accepts everything") {
  Rng rng(157);
  RwmhState st{0.0, 1.0};
  for (int i = 0; i < 500; ++i) st = rwmh_step(st, [](double) { return 0.0; }, rng);
  CHECK(st.accept_count == st.total_count);
  CHECK(st.total_count == 500);
}

TEST_CASE("standard-normal target recovers unit variance") {
  Rng rng(163);
  RwmhState st{0.0, 2.4};
  const auto target = [](double x) { return -0.5 * x * x; };
  for (int i = 0; i < 2000; ++i) st = rwmh_step(st, target, rng);  // warm up
  const int n = 200000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    st = rwmh_step(st, target, rng);
    sum += st.current;
    sum2 += st.current * st.current;
  }
  const double var = sum2 / n - (sum / n) * (sum / n);
  CHECK(var == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("a minus-infinity proposal target leaves the state put") {
  Rng rng(167);
  RwmhState st{0.7, 1.0};
  const RwmhState out = rwmh_step(st, [](double x) { return x == 0.7 ? 0.0 : -kInf; }, rng);
  CHECK(out.current == 0.7);
  CHECK(out.total_count == 1);
  CHECK(out.accept_count == 0);
}

TEST_CASE("adaptation drives acceptance into [0.2, 0.5]") {
  Rng rng(173);
  RwmhState st{0.0, 50.0};  // start far too wide
  const auto target = [](double x) { return -0.5 * x * x; };
  for (long i = 0; i < 3000; ++i) {
    const RwmhResult res = rwmh_step_cached(st, target, rng, target(st.current));
    st = res.state;
    rwmh_adapt(st, res.accepted, i + 1);
  }
  st.accept_count = st.total_count = 0;  // measure with frozen step
  for (int i = 0; i < 4000; ++i) st = rwmh_step(st, target, rng);
  CHECK(st.acceptance_rate() > 0.2);
  CHECK(st.acceptance_rate() < 0.5);
}

}  // TEST_SUITE
