#pragma once

#include <cmath>

#include "spbgc/errors.hpp"
#include "spbgc/rng.hpp"
#include "spbgc/types.hpp"

namespace spbgc {

inline double norm_cdf(double x) {
  return 0.5 * std::erfc(-x * 0.7071067811865475244);
}

/// Standard normal quantile, Wichura's AS 241 (double precision branch).
inline double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidProbability("norm_quantile: p must lie in (0,1)");
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                 6.7265770927008700853e+4) *
                    r +
                4.5921953931549871457e+4) *
                   r +
               1.3731693765509461125e+4) *
                  r +
              1.9715909503065514427e+3) *
                 r +
             1.3314166789178437745e+2) *
                r +
            3.3871328727963666080e+0) /
           (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                 3.9307895800092710610e+4) *
                    r +
                2.1213794301586595867e+4) *
                   r +
               5.3941960214247511077e+3) *
                  r +
              6.8718700749205790830e+2) *
                 r +
             4.2313330701600911252e+1) *
                r +
            1.0);
  }
  double r = (q < 0.0) ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                2.41780725177450611770e-1) *
                   r +
               1.27045825245236838258e+0) *
                  r +
              3.64784832476320460504e+0) *
                 r +
             5.76949722146069140550e+0) *
                r +
            4.63033784615654529590e+0) *
               r +
           1.42343711074968357734e+0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                1.51986665636164571966e-2) *
                   r +
               1.48103976427480074590e-1) *
                  r +
              6.89767334985100004550e-1) *
                 r +
             1.67638483018380384940e+0) *
                r +
            2.05319162663775882187e+0) *
               r +
           1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                1.24266094738807843860e-3) *
                   r +
               2.65321895265761230930e-2) *
                  r +
              2.96560571828504891230e-1) *
                 r +
             1.78482653991729133580e+0) *
                r +
            5.46378491116411436990e+0) *
               r +
           6.65790464350110377720e+0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                1.84631831751005468180e-5) *
                   r +
               7.86869131145613259100e-4) *
                  r +
              1.48753612908506148525e-2) *
                 r +
             1.36929880922735805310e-1) *
                r +
            5.99832206555887937690e-1) *
               r +
           1.0);
  }
  return (q < 0.0) ? -val : val;
}

/// log Phi(x), stable into the far left tail.
inline double ln_norm_cdf(double x) {
  if (x == kInf) return 0.0;
  if (x == -kInf) return -kInf;
  if (x > -37.0) return std::log(norm_cdf(x));
  // Asymptotic expansion of the Mills ratio.
  const double x2 = x * x;
  return -0.5 * x2 - std::log(-x) - 0.91893853320467274178 +
         std::log1p(-1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2));
}

/// log( Phi(b) - Phi(a) ) for a < b, stable when the interval sits deep in a
/// tail; either endpoint may be infinite.
inline double ln_trunc_prob(double a, double b) {
  if (a == -kInf && b == kInf) return 0.0;
  if (a > 0.0) {
    const double pa = ln_norm_cdf(-a);
    const double pb = ln_norm_cdf(-b);  // -inf when b = inf
    return pa + std::log1p(-std::exp(pb - pa));
  }
  if (b < 0.0) {
    const double pb = ln_norm_cdf(b);
    const double pa = ln_norm_cdf(a);
    return pb + std::log1p(-std::exp(pa - pb));
  }
  // Interval straddles zero: both pieces are well conditioned.
  return std::log1p(-(norm_cdf(a) + norm_cdf(-b)));
}

namespace detail {

// Rayleigh accept-reject for N(0,1) restricted to [a,b] with a > 0.
inline double trunc_normal_tail(double a, double b, Rng& rng) {
  const double c = 0.5 * a * a;
  const double f = std::expm1(c - 0.5 * b * b);  // -1 when b = inf
  for (;;) {
    const double x = c - std::log1p(rng.uniform() * f);
    const double u = rng.uniform();
    if (u * u * x <= c) return std::sqrt(2.0 * x);
  }
}

}  // namespace detail

/// Exact draw from N(0,1) truncated to (a, b).
inline double trunc_std_normal(double a, double b, Rng& rng) {
  constexpr double kTailThreshold = 0.66;
  if (a > kTailThreshold) return detail::trunc_normal_tail(a, b, rng);
  if (b < -kTailThreshold) return -detail::trunc_normal_tail(-b, -a, rng);
  if (b - a > 2.0) {
    // Wide central interval: plain rejection from N(0,1).
    for (;;) {
      const double x = rng.normal();
      if (x > a && x < b) return x;
    }
  }
  const double pa = norm_cdf(a);
  const double pb = norm_cdf(b);
  double x = norm_quantile(pa + (pb - pa) * rng.uniform());
  // Roundoff can push the quantile onto an endpoint; the box is open.
  if (!(x > a)) x = std::nextafter(a, b);
  if (!(x < b)) x = std::nextafter(b, a);
  return x;
}

}  // namespace spbgc
