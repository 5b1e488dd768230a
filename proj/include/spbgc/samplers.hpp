#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>

#include "spbgc/errors.hpp"
#include "spbgc/linalg.hpp"
#include "spbgc/normal.hpp"
#include "spbgc/rng.hpp"
#include "spbgc/types.hpp"

namespace spbgc {

/// Axis-aligned truncation region; bounds may be infinite but must satisfy
/// lower < upper elementwise.
struct TruncationBox {
  Vectord lower;
  Vectord upper;

  static TruncationBox unbounded(Index d) {
    return {Vectord::Constant(d, -kInf), Vectord::Constant(d, kInf)};
  }
};

struct TmvnOptions {
  int max_rejections = 1000;     // proposals before declaring a stall
  int fallback_sweeps = 10;      // coordinate-wise Gibbs sweeps on stall
  bool force_accept_reject = false;
  int max_newton_iters = 150;
};

namespace detail {

inline constexpr double kInvSqrt2Pi = 0.3989422804014327;

struct CholPerm {
  Matrixd lower;   // unscaled permuted Cholesky factor
  Vectord l, u;    // permuted bounds
  IndexVector perm;  // position j holds the original index
};

// Cholesky with the greedy variable reordering of Gibson-Glasbey-Elston:
// at each step pick the remaining variable with the smallest conditional
// truncation probability. Improves the tilting acceptance rate markedly.
inline CholPerm gge_cholesky(Matrixd sig, Vectord l, Vectord u) {
  const Index d = sig.rows();
  CholPerm out;
  out.lower = Matrixd::Zero(d, d);
  out.perm.resize(static_cast<std::size_t>(d));
  for (Index i = 0; i < d; ++i) out.perm[static_cast<std::size_t>(i)] = i;
  Vectord z = Vectord::Zero(d);
  Matrixd& L = out.lower;

  for (Index j = 0; j < d; ++j) {
    Index best = j;
    double best_pr = kInf;
    for (Index k = j; k < d; ++k) {
      double s2 = sig(k, k) - L.row(k).head(j).squaredNorm();
      const double s = std::sqrt(std::max(s2, 1e-14 * std::abs(sig(k, k)) + 1e-300));
      const double cm = L.row(k).head(j).dot(z.head(j));
      const double pr = ln_trunc_prob((l[k] - cm) / s, (u[k] - cm) / s);
      if (pr < best_pr) {
        best_pr = pr;
        best = k;
      }
    }
    if (best != j) {
      sig.row(j).swap(sig.row(best));
      sig.col(j).swap(sig.col(best));
      L.row(j).head(j).swap(L.row(best).head(j));
      std::swap(l[j], l[best]);
      std::swap(u[j], u[best]);
      std::swap(out.perm[static_cast<std::size_t>(j)],
                out.perm[static_cast<std::size_t>(best)]);
    }
    const double s2 = sig(j, j) - L.row(j).head(j).squaredNorm();
    if (!(s2 > 0.0))
      throw NotPositiveDefinite("truncated-normal covariance is not positive definite");
    L(j, j) = std::sqrt(s2);
    for (Index k = j + 1; k < d; ++k)
      L(k, j) = (sig(k, j) - L.row(k).head(j).dot(L.row(j).head(j))) / L(j, j);
    const double cm = L.row(j).head(j).dot(z.head(j));
    const double tl = (l[j] - cm) / L(j, j);
    const double tu = (u[j] - cm) / L(j, j);
    const double w = ln_trunc_prob(tl, tu);
    const double el = std::isfinite(tl) ? std::exp(-0.5 * tl * tl - w) : 0.0;
    const double eu = std::isfinite(tu) ? std::exp(-0.5 * tu * tu - w) : 0.0;
    z[j] = (el - eu) * kInvSqrt2Pi;  // truncated conditional expectation
  }
  out.l = std::move(l);
  out.u = std::move(u);
  return out;
}

// Scaled problem: unit-diagonal factor with the diagonal removed, so that
// lt = l - mu - Lt x stays in standard-normal units.
struct TiltedProblem {
  Matrixd lt_strict;  // strictly lower triangular
  Vectord l, u;
};

inline TiltedProblem scale_problem(const CholPerm& cp) {
  const Index d = cp.lower.rows();
  TiltedProblem prob;
  prob.lt_strict = Matrixd::Zero(d, d);
  prob.l.resize(d);
  prob.u.resize(d);
  for (Index k = 0; k < d; ++k) {
    const double dk = cp.lower(k, k);
    prob.l[k] = cp.l[k] / dk;
    prob.u[k] = cp.u[k] / dk;
    for (Index t = 0; t < k; ++t) prob.lt_strict(k, t) = cp.lower(k, t) / dk;
  }
  return prob;
}

// Gradient (and optionally Jacobian) of the saddle-point objective in the
// free variables y = (x_1..x_{d-1}, mu_1..mu_{d-1}).
inline Vectord grad_psi(const Vectord& y, const TiltedProblem& prob, Matrixd* jac) {
  const Index d = prob.l.size();
  Vectord x = Vectord::Zero(d), mu = Vectord::Zero(d);
  x.head(d - 1) = y.head(d - 1);
  mu.head(d - 1) = y.tail(d - 1);

  const Vectord c = prob.lt_strict * x;
  const Vectord lt = prob.l - mu - c;
  const Vectord ut = prob.u - mu - c;
  Vectord w(d), pl(d), pu(d);
  for (Index k = 0; k < d; ++k) {
    w[k] = ln_trunc_prob(lt[k], ut[k]);
    pl[k] = std::isfinite(lt[k]) ? std::exp(-0.5 * lt[k] * lt[k] - w[k]) * kInvSqrt2Pi : 0.0;
    pu[k] = std::isfinite(ut[k]) ? std::exp(-0.5 * ut[k] * ut[k] - w[k]) * kInvSqrt2Pi : 0.0;
  }
  const Vectord p = pl - pu;

  Vectord grad(2 * (d - 1));
  grad.head(d - 1) =
      (p.transpose() * prob.lt_strict).transpose().head(d - 1) - mu.head(d - 1);
  grad.tail(d - 1) = (mu - x + p).head(d - 1);

  if (jac) {
    Vectord lt0 = lt, ut0 = ut;
    for (Index k = 0; k < d; ++k) {
      if (!std::isfinite(lt0[k])) lt0[k] = 0.0;
      if (!std::isfinite(ut0[k])) ut0[k] = 0.0;
    }
    const Vectord dp =
        (-p.array().square() + lt0.array() * pl.array() - ut0.array() * pu.array()).matrix();
    const Matrixd dl = dp.asDiagonal() * prob.lt_strict;
    const Matrixd mx = dl - Matrixd::Identity(d, d);
    const Matrixd xx = prob.lt_strict.transpose() * dl;
    jac->resize(2 * (d - 1), 2 * (d - 1));
    jac->topLeftCorner(d - 1, d - 1) = xx.topLeftCorner(d - 1, d - 1);
    jac->topRightCorner(d - 1, d - 1) = mx.topLeftCorner(d - 1, d - 1).transpose();
    jac->bottomLeftCorner(d - 1, d - 1) = mx.topLeftCorner(d - 1, d - 1);
    jac->bottomRightCorner(d - 1, d - 1) =
        (1.0 + dp.head(d - 1).array()).matrix().asDiagonal();
  }
  return grad;
}

// Newton with backtracking on the gradient norm.
inline std::pair<Vectord, Vectord> solve_tilting(const TiltedProblem& prob, int max_iters,
                                                 bool& converged) {
  const Index d = prob.l.size();
  Vectord y = Vectord::Zero(2 * (d - 1));
  Matrixd jac;
  Vectord grad = grad_psi(y, prob, &jac);
  double gn = grad.norm();
  converged = false;
  for (int iter = 0; iter < max_iters && !converged; ++iter) {
    if (gn < 1e-10 || !std::isfinite(gn)) break;
    const Vectord step = jac.ldlt().solve(-grad);
    double t = 1.0;
    bool improved = false;
    for (int h = 0; h < 24; ++h, t *= 0.5) {
      const Vectord y_try = y + t * step;
      Matrixd jac_try;
      const Vectord grad_try = grad_psi(y_try, prob, &jac_try);
      const double gn_try = grad_try.norm();
      if (std::isfinite(gn_try) && gn_try < gn) {
        y = y_try;
        grad = grad_try;
        jac = std::move(jac_try);
        gn = gn_try;
        improved = true;
        break;
      }
    }
    if (!improved) break;
    if (gn < 1e-9) converged = true;
  }
  if (gn < 1e-6) converged = true;  // good enough in double precision
  Vectord x = Vectord::Zero(d), mu = Vectord::Zero(d);
  x.head(d - 1) = y.head(d - 1);
  mu.head(d - 1) = y.tail(d - 1);
  return {x, mu};
}

inline double tilting_psi(const TiltedProblem& prob, const Vectord& x, const Vectord& mu) {
  const Vectord c = prob.lt_strict * x;
  const Vectord lt = prob.l - mu - c;
  const Vectord ut = prob.u - mu - c;
  double total = 0.0;
  for (Index k = 0; k < prob.l.size(); ++k)
    total += ln_trunc_prob(lt[k], ut[k]) + 0.5 * mu[k] * mu[k] - x[k] * mu[k];
  return total;
}

// One draw from the exponentially tilted sequential proposal; returns the
// log weight used in the acceptance test.
inline double tilted_proposal(const TiltedProblem& prob, const Vectord& mu, Rng& rng,
                              Vectord& w) {
  const Index d = prob.l.size();
  w.resize(d);
  double logpr = 0.0;
  for (Index k = 0; k < d; ++k) {
    const double c = prob.lt_strict.row(k).head(k).dot(w.head(k));
    const double tl = prob.l[k] - mu[k] - c;
    const double tu = prob.u[k] - mu[k] - c;
    w[k] = mu[k] + trunc_std_normal(tl, tu, rng);
    logpr += ln_trunc_prob(tl, tu) + 0.5 * mu[k] * mu[k] - mu[k] * w[k];
  }
  return logpr;
}

// Coordinate-wise Gibbs pass; exact per-coordinate conditionals through the
// precision matrix. Used as the stall fallback and for dim > 100.
inline Vectord gibbs_tmvn(const Eigen::Ref<const Vectord>& mean,
                          const Eigen::Ref<const Matrixd>& cov, const TruncationBox& box,
                          Vectord x, int sweeps, Rng& rng) {
  const Index d = mean.size();
  const Matrixd prec = cholesky(cov).inverse();
  for (int s = 0; s < sweeps; ++s) {
    for (Index k = 0; k < d; ++k) {
      const double pkk = prec(k, k);
      const double csd = std::sqrt(1.0 / pkk);
      const double dm = prec.row(k).dot(x - mean) - pkk * (x[k] - mean[k]);
      const double cm = mean[k] - dm / pkk;
      x[k] = cm + csd * trunc_std_normal((box.lower[k] - cm) / csd,
                                         (box.upper[k] - cm) / csd, rng);
    }
  }
  return x;
}

inline Vectord feasible_point(const TruncationBox& box) {
  const Index d = box.lower.size();
  Vectord x(d);
  for (Index k = 0; k < d; ++k) {
    const bool lf = std::isfinite(box.lower[k]);
    const bool uf = std::isfinite(box.upper[k]);
    if (lf && uf)
      x[k] = 0.5 * (box.lower[k] + box.upper[k]);
    else if (lf)
      x[k] = box.lower[k] + 1.0;
    else if (uf)
      x[k] = box.upper[k] - 1.0;
    else
      x[k] = 0.0;
  }
  return x;
}

}  // namespace detail

/// One exact draw from N(mean, cov) restricted to an axis-aligned box, via
/// the minimax-tilting accept-reject sampler. A proposal stall falls back to
/// coordinate-wise Gibbs started from `start` (the caller's current point)
/// when provided, otherwise from a feasible point of the box.
inline Vectord sample_tmvn(const Eigen::Ref<const Vectord>& mean,
                           const Eigen::Ref<const Matrixd>& cov, const TruncationBox& box,
                           Rng& rng, const TmvnOptions& opts = {},
                           const Vectord* start = nullptr) {
  const Index d = mean.size();
  if (cov.rows() != d || cov.cols() != d || box.lower.size() != d || box.upper.size() != d)
    throw ShapeMismatch("sample_tmvn: dimension mismatch");
  for (Index k = 0; k < d; ++k)
    if (!(box.lower[k] < box.upper[k]))
      throw ShapeMismatch("sample_tmvn: box must satisfy lower < upper");

  Vectord l = box.lower - mean;
  Vectord u = box.upper - mean;

  // Fully unbounded box: plain multivariate normal.
  bool unbounded = true;
  for (Index k = 0; k < d; ++k)
    if (std::isfinite(l[k]) || std::isfinite(u[k])) {
      unbounded = false;
      break;
    }
  if (unbounded) {
    Vectord e(d);
    for (Index k = 0; k < d; ++k) e[k] = rng.normal();
    return mean + cholesky(cov).lower * e;
  }

  if (d == 1) {
    const double s = std::sqrt(cov(0, 0));
    return Vectord::Constant(1, mean[0] + s * trunc_std_normal(l[0] / s, u[0] / s, rng));
  }

  if (d > 100) {
    if (opts.force_accept_reject)
      throw DimensionTooLarge("sample_tmvn: accept-reject forced beyond 100 dimensions");
    Vectord x0 = start ? *start : detail::feasible_point(box);
    return detail::gibbs_tmvn(mean, cov, box, std::move(x0), opts.fallback_sweeps, rng);
  }

  const detail::CholPerm cp = detail::gge_cholesky(cov, std::move(l), std::move(u));
  const detail::TiltedProblem prob = detail::scale_problem(cp);
  bool converged = false;
  const auto [x_star, mu_star] = detail::solve_tilting(prob, opts.max_newton_iters, converged);
  if (converged) {
    const double psi_star = detail::tilting_psi(prob, x_star, mu_star);
    Vectord w(d);
    for (int trial = 0; trial < opts.max_rejections; ++trial) {
      const double logpr = detail::tilted_proposal(prob, mu_star, rng, w);
      if (-std::log(rng.uniform()) > psi_star - logpr) {
        Vectord out = mean;
        const Vectord v = cp.lower * w;
        for (Index k = 0; k < d; ++k) out[cp.perm[static_cast<std::size_t>(k)]] += v[k];
        // Roundoff guard: the box is open.
        for (Index k = 0; k < d; ++k) {
          if (!(out[k] > box.lower[k])) out[k] = std::nextafter(box.lower[k], kInf);
          if (!(out[k] < box.upper[k])) out[k] = std::nextafter(box.upper[k], -kInf);
        }
        return out;
      }
    }
  }
  // AcceptanceStall (or tilting failed to converge): Gibbs from the caller's
  // current point.
  Vectord x0 = start ? *start : detail::feasible_point(box);
  return detail::gibbs_tmvn(mean, cov, box, std::move(x0), opts.fallback_sweeps, rng);
}

/// Inverse-Wishart draw with density parameterized so that the Monte-Carlo
/// mean is scale / (df - dim - 1); Bartlett construction.
inline Matrixd sample_inverse_wishart(double df, const Eigen::Ref<const Matrixd>& scale,
                                      Rng& rng) {
  const Index d = scale.rows();
  if (!(df > static_cast<double>(d - 1)))
    throw InvalidDegreesOfFreedom("inverse-Wishart needs df > dim - 1");
  const Matrixd ls = cholesky(scale).lower;
  Matrixd a = Matrixd::Zero(d, d);
  for (Index i = 0; i < d; ++i) {
    a(i, i) = std::sqrt(rng.chi_squared(df - static_cast<double>(i)));
    for (Index j = 0; j < i; ++j) a(i, j) = rng.normal();
  }
  Matrixd x = ls.transpose();
  a.triangularView<Eigen::Lower>().solveInPlace(x);  // x = A^{-1} Ls^T
  Matrixd v = x.transpose() * x;
  return 0.5 * (v + v.transpose());
}

/// Random-walk Metropolis-Hastings state for a scalar parameter (log phi in
/// the spatial chains).
struct RwmhState {
  double current = 0.0;
  double step = 1.0;
  long accept_count = 0;
  long total_count = 0;

  double acceptance_rate() const {
    return total_count > 0 ? static_cast<double>(accept_count) / total_count : 0.0;
  }
};

struct RwmhResult {
  RwmhState state;
  double log_target_current;
  bool accepted;
};

/// One random-walk step against a cached current log-target value. A
/// non-finite proposal target is a rejection.
template <typename LogTarget>
RwmhResult rwmh_step_cached(RwmhState state, LogTarget&& log_target, Rng& rng,
                            double current_log_target) {
  const double proposal = state.current + state.step * rng.normal();
  const double lt_prop = log_target(proposal);
  ++state.total_count;
  bool accepted = false;
  if (std::isfinite(lt_prop) &&
      std::log(rng.uniform()) < lt_prop - current_log_target) {
    state.current = proposal;
    current_log_target = lt_prop;
    ++state.accept_count;
    accepted = true;
  }
  return {state, current_log_target, accepted};
}

template <typename LogTarget>
RwmhState rwmh_step(RwmhState state, LogTarget&& log_target, Rng& rng) {
  return rwmh_step_cached(state, log_target, rng, log_target(state.current)).state;
}

/// Robbins-Monro step-size update toward a target acceptance rate. Applied
/// during burn-in only; the step is frozen afterwards.
inline void rwmh_adapt(RwmhState& state, bool accepted, long adapt_iter,
                       double target_accept = 0.35) {
  const double gain = 1.0 / std::pow(static_cast<double>(adapt_iter) + 1.0, 0.6);
  state.step *= std::exp(gain * ((accepted ? 1.0 : 0.0) - target_accept));
  state.step = std::clamp(state.step, 1e-4, 1e4);
}

}  // namespace spbgc
