#pragma once

#include <cmath>
#include <utility>

#include "spbgc/errors.hpp"
#include "spbgc/types.hpp"

namespace spbgc {

/// Lower Cholesky factor of a symmetric positive-definite matrix together
/// with the log-determinant of the source.
struct CholeskyFactor {
  Matrixd lower;
  double log_det = 0.0;

  Index dim() const { return lower.rows(); }

  /// Solves L y = b (forward substitution).
  Vectord forward(const Eigen::Ref<const Vectord>& b) const {
    return lower.triangularView<Eigen::Lower>().solve(b);
  }

  /// Solves (L L^T) x = b.
  Vectord solve(const Eigen::Ref<const Vectord>& b) const {
    Vectord y = lower.triangularView<Eigen::Lower>().solve(b);
    lower.transpose().triangularView<Eigen::Upper>().solveInPlace(y);
    return y;
  }

  /// Full inverse of the source matrix.
  Matrixd inverse() const {
    Matrixd inv = Matrixd::Identity(dim(), dim());
    lower.triangularView<Eigen::Lower>().solveInPlace(inv);
    lower.transpose().triangularView<Eigen::Upper>().solveInPlace(inv);
    return inv;
  }
};

/// Cholesky factorization with a single jitter retry: on pivot failure,
/// 1e-10 * mean(diagonal) is added to the diagonal once; a second failure
/// throws NotPositiveDefinite. Near-coincident spatial locations are the
/// usual trigger.
inline CholeskyFactor cholesky(const Eigen::Ref<const Matrixd>& m) {
  if (m.rows() != m.cols()) throw ShapeMismatch("cholesky: matrix must be square");
  Eigen::LLT<Matrixd> llt(m);
  if (llt.info() != Eigen::Success) {
    const double jitter = 1e-10 * m.diagonal().mean();
    Matrixd jittered = m;
    jittered.diagonal().array() += jitter;
    llt.compute(jittered);
    if (llt.info() != Eigen::Success)
      throw NotPositiveDefinite("cholesky: pivot failure after jitter retry");
  }
  CholeskyFactor factor;
  factor.lower = llt.matrixL();
  factor.log_det = 2.0 * factor.lower.diagonal().array().log().sum();
  return factor;
}

struct ConditionalNormal {
  Vectord mean;
  Matrixd cov;
};

/// Gaussian conditional moments of x[target] given x[given] = given_values,
/// for x ~ N(0, joint): mean = S_tg S_gg^{-1} v, cov = S_tt - S_tg S_gg^{-1} S_gt.
/// An empty conditioning set returns the marginal block exactly.
inline ConditionalNormal conditional_normal(const Eigen::Ref<const Matrixd>& joint,
                                            const IndexVector& target_idx,
                                            const IndexVector& given_idx,
                                            const Eigen::Ref<const Vectord>& given_values) {
  const Index t = static_cast<Index>(target_idx.size());
  const Index g = static_cast<Index>(given_idx.size());
  if (given_values.size() != g)
    throw ShapeMismatch("conditional_normal: given_values length mismatch");
  for (Index a : target_idx)
    for (Index b : given_idx)
      if (a == b) throw ShapeMismatch("conditional_normal: target and given sets overlap");

  ConditionalNormal out;
  out.mean = Vectord::Zero(t);
  out.cov.resize(t, t);
  for (Index r = 0; r < t; ++r)
    for (Index c = 0; c < t; ++c) out.cov(r, c) = joint(target_idx[r], target_idx[c]);
  if (g == 0) return out;

  Matrixd s_gg(g, g);
  Matrixd s_tg(t, g);
  for (Index r = 0; r < g; ++r)
    for (Index c = 0; c < g; ++c) s_gg(r, c) = joint(given_idx[r], given_idx[c]);
  for (Index r = 0; r < t; ++r)
    for (Index c = 0; c < g; ++c) s_tg(r, c) = joint(target_idx[r], given_idx[c]);

  const CholeskyFactor f = cholesky(s_gg);
  Matrixd solved = s_tg.transpose();  // g x t, becomes S_gg^{-1} S_gt
  f.lower.triangularView<Eigen::Lower>().solveInPlace(solved);
  f.lower.transpose().triangularView<Eigen::Upper>().solveInPlace(solved);
  out.mean = solved.transpose() * given_values;
  out.cov -= s_tg * solved;
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

/// Multivariate normal log-density using a precomputed factor of cov.
inline double mvn_logpdf(const Eigen::Ref<const Vectord>& x,
                         const Eigen::Ref<const Vectord>& mean,
                         const CholeskyFactor& cov_factor) {
  const Index d = x.size();
  if (mean.size() != d || cov_factor.dim() != d)
    throw ShapeMismatch("mvn_logpdf: dimension mismatch");
  const Vectord w = cov_factor.forward(x - mean);
  return -0.5 * (static_cast<double>(d) * std::log(2.0 * M_PI) + cov_factor.log_det +
                 w.squaredNorm());
}

inline double mvn_logpdf(const Eigen::Ref<const Vectord>& x,
                         const Eigen::Ref<const Vectord>& mean,
                         const Eigen::Ref<const Matrixd>& cov) {
  return mvn_logpdf(x, mean, cholesky(cov));
}

}  // namespace spbgc
