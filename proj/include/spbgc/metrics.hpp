#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "spbgc/errors.hpp"
#include "spbgc/linalg.hpp"
#include "spbgc/mcmc.hpp"
#include "spbgc/types.hpp"

namespace spbgc {

/// Mean squared error of pairwise-correlation point estimates, averaged over
/// the q = p(p-1)/2 upper-triangular pairs.
inline double mse(const Eigen::Ref<const Matrixd>& estimate,
                  const Eigen::Ref<const Matrixd>& truth) {
  if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols())
    throw ShapeMismatch("mse: estimate and truth must be conformable");
  const Index p = truth.rows();
  double total = 0.0;
  for (Index j = 0; j < p; ++j)
    for (Index k = j + 1; k < p; ++k) {
      const double d = estimate(j, k) - truth(j, k);
      total += d * d;
    }
  return total / static_cast<double>(pair_count(p));
}

/// Empirical coverage and average length of per-pair credible intervals.
inline std::pair<double, double> coverage_and_length(const Eigen::Ref<const Matrixd>& lo,
                                                     const Eigen::Ref<const Matrixd>& hi,
                                                     const Eigen::Ref<const Matrixd>& truth) {
  const Index p = truth.rows();
  if (lo.rows() != p || hi.rows() != p) throw ShapeMismatch("coverage: shape mismatch");
  double cover = 0.0, length = 0.0;
  for (Index j = 0; j < p; ++j)
    for (Index k = j + 1; k < p; ++k) {
      if (!(lo(j, k) <= hi(j, k))) throw ShapeMismatch("coverage: interval not ordered");
      if (truth(j, k) >= lo(j, k) && truth(j, k) <= hi(j, k)) cover += 1.0;
      length += hi(j, k) - lo(j, k);
    }
  const double q = static_cast<double>(pair_count(p));
  return {cover / q, length / q};
}

/// Partial correlations from the precision matrix: -P_jk / sqrt(P_jj P_kk),
/// unit diagonal.
inline Matrixd partial_correlations(const Eigen::Ref<const Matrixd>& r) {
  const Matrixd prec = cholesky(r).inverse();
  const Vectord d = prec.diagonal().array().sqrt().matrix();
  Matrixd pcor = (-prec.array() / (d * d.transpose()).array()).matrix();
  pcor.diagonal().setOnes();
  return pcor;
}

/// Sample autocorrelation at lags 0..max_lag (acf(0) = 1).
inline Vectord acf(const Eigen::Ref<const Vectord>& chain, Index max_lag) {
  const Index n = chain.size();
  if (n <= max_lag) throw ChainTooShort("acf: chain length must exceed max_lag");
  const double mean = chain.mean();
  const Vectord c = chain.array() - mean;
  const double var = c.squaredNorm() / static_cast<double>(n);
  if (!(var > 0.0)) throw DegenerateChain("acf: constant chain has undefined autocorrelation");
  Vectord out(max_lag + 1);
  for (Index lag = 0; lag <= max_lag; ++lag)
    out[lag] = c.head(n - lag).dot(c.tail(n - lag)) / (static_cast<double>(n) * var);
  return out;
}

/// Effective sample size via the initial-monotone-sequence estimator over
/// paired autocorrelation sums.
inline double effective_sample_size(const Eigen::Ref<const Vectord>& chain) {
  const Index n = chain.size();
  if (n < 4) throw ChainTooShort("effective_sample_size: need at least 4 draws");
  const Index max_lag = std::min<Index>(n - 1, 2 * static_cast<Index>(std::sqrt(n)) + 20);
  Vectord rho;
  try {
    rho = acf(chain, max_lag);
  } catch (const DegenerateChain&) {
    throw;
  }
  double sum = 0.0;
  double prev_pair = kInf;
  for (Index k = 1; k + 1 <= max_lag; k += 2) {
    double pair = rho[k] + rho[k + 1];
    if (pair < 0.0) break;
    pair = std::min(pair, prev_pair);  // enforce monotone decrease
    sum += pair;
    prev_pair = pair;
  }
  const double denom = 1.0 + 2.0 * sum;
  return static_cast<double>(n) / std::max(denom, 1e-12);
}

/// Type-7 empirical quantile (linear interpolation of order statistics).
inline double quantile_type7(std::vector<double> values, double q) {
  if (values.empty()) throw ChainTooShort("quantile of empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw InvalidProbability("quantile level outside [0,1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

inline double column_quantile(const Eigen::Ref<const Vectord>& col, double q) {
  return quantile_type7(std::vector<double>(col.data(), col.data() + col.size()), q);
}

/// Per-pair posterior quantiles for the correlations and the partial
/// correlations derived draw by draw.
struct PairSummary {
  Index j = 0, k = 0;
  double lo = 0.0, median = 0.0, hi = 0.0;
};

struct SummaryTable {
  std::vector<PairSummary> correlations;
  std::vector<PairSummary> partials;
};

inline SummaryTable summarize_draws(const PosteriorDraws& draws, double level = 0.95) {
  const Index p = draws.p;
  const Index q = pair_count(p);
  const Index stored = draws.stored();
  if (stored < 2) throw ChainTooShort("summarize_draws: need at least 2 stored draws");
  Matrixd pcor_draws(stored, q);
  for (Index d = 0; d < stored; ++d)
    pcor_draws.row(d) = pack_upper(partial_correlations(draws.r_matrix(d))).transpose();

  const double alpha = 0.5 * (1.0 - level);
  SummaryTable table;
  Index t = 0;
  for (Index j = 0; j < p; ++j)
    for (Index k = j + 1; k < p; ++k, ++t) {
      PairSummary cor{j, k, column_quantile(draws.r_draws.col(t), alpha),
                      column_quantile(draws.r_draws.col(t), 0.5),
                      column_quantile(draws.r_draws.col(t), 1.0 - alpha)};
      PairSummary par{j, k, column_quantile(pcor_draws.col(t), alpha),
                      column_quantile(pcor_draws.col(t), 0.5),
                      column_quantile(pcor_draws.col(t), 1.0 - alpha)};
      table.correlations.push_back(cor);
      table.partials.push_back(par);
    }
  return table;
}

/// Posterior medians of the pairwise correlations as a p x p matrix.
inline Matrixd posterior_median_matrix(const PosteriorDraws& draws) {
  Vectord med(pair_count(draws.p));
  for (Index t = 0; t < med.size(); ++t) med[t] = column_quantile(draws.r_draws.col(t), 0.5);
  return unpack_upper(med, draws.p);
}

/// Equal-tailed interval endpoints as matrices (upper triangle meaningful).
inline std::pair<Matrixd, Matrixd> credible_interval_matrices(const PosteriorDraws& draws,
                                                              double level = 0.95) {
  const double alpha = 0.5 * (1.0 - level);
  Vectord lo(pair_count(draws.p)), hi(pair_count(draws.p));
  for (Index t = 0; t < lo.size(); ++t) {
    lo[t] = column_quantile(draws.r_draws.col(t), alpha);
    hi[t] = column_quantile(draws.r_draws.col(t), 1.0 - alpha);
  }
  return {unpack_upper(lo, draws.p), unpack_upper(hi, draws.p)};
}

}  // namespace spbgc
