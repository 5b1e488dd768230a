#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "spbgc/errors.hpp"
#include "spbgc/normal.hpp"
#include "spbgc/types.hpp"

namespace spbgc {

enum class ColumnKind { continuous, count, binary, ordinal };

inline std::string to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::continuous: return "continuous";
    case ColumnKind::count: return "count";
    case ColumnKind::binary: return "binary";
    case ColumnKind::ordinal: return "ordinal";
  }
  return "?";
}

/// n x p mixed outcomes: discrete outcomes stored as their numeric levels,
/// missing cells masked. Only the within-column order of values ever enters
/// the samplers.
struct MixedOutcomeMatrix {
  Matrixd values;
  std::vector<ColumnKind> column_kind;
  ArrayXb missing;

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }

  bool observed(Index i, Index j) const { return !missing(i, j); }

  static MixedOutcomeMatrix from_values(Matrixd values, std::vector<ColumnKind> kinds) {
    MixedOutcomeMatrix y;
    y.missing = ArrayXb::Constant(values.rows(), values.cols(), false);
    y.values = std::move(values);
    y.column_kind = std::move(kinds);
    if (static_cast<Index>(y.column_kind.size()) != y.cols())
      throw ShapeMismatch("one column kind per outcome column expected");
    return y;
  }
};

/// Per-element truncation bounds (lower, upper) encoding the rank
/// constraints: the latent value for (i, j) must stay above every latent
/// value with a strictly smaller observation in column j and below every one
/// with a strictly larger observation. Ties impose no constraint; missing
/// cells are unbounded.
struct RankBounds {
  Matrixd lower;
  Matrixd upper;
};

/// Bounds for a single site against the current latent matrix; O(n) per
/// column. The samplers call this per site per sweep so the bounds always
/// reflect the latest latent values of the other sites.
inline void site_bounds(const MixedOutcomeMatrix& y, const Eigen::Ref<const Matrixd>& z,
                        Index i, Vectord& lower, Vectord& upper) {
  const Index n = y.rows();
  const Index p = y.cols();
  lower.resize(p);
  upper.resize(p);
  for (Index j = 0; j < p; ++j) {
    double lo = -kInf;
    double hi = kInf;
    if (y.observed(i, j)) {
      const double yij = y.values(i, j);
      for (Index k = 0; k < n; ++k) {
        if (k == i || !y.observed(k, j)) continue;
        const double ykj = y.values(k, j);
        if (ykj < yij)
          lo = std::max(lo, z(k, j));
        else if (ykj > yij)
          hi = std::min(hi, z(k, j));
      }
    }
    lower[j] = lo;
    upper[j] = hi;
  }
}

inline RankBounds extract_bounds(const MixedOutcomeMatrix& y, const Eigen::Ref<const Matrixd>& z) {
  if (z.rows() != y.rows() || z.cols() != y.cols())
    throw ShapeMismatch("extract_bounds: latent matrix must match outcomes");
  RankBounds b;
  b.lower.resize(y.rows(), y.cols());
  b.upper.resize(y.rows(), y.cols());
  Vectord lo, hi;
  for (Index i = 0; i < y.rows(); ++i) {
    site_bounds(y, z, i, lo, hi);
    b.lower.row(i) = lo.transpose();
    b.upper.row(i) = hi.transpose();
  }
  return b;
}

/// True iff lower < z < upper elementwise (strict; infinite bounds vacuous).
inline bool validate_latent(const Eigen::Ref<const Matrixd>& z, const RankBounds& b) {
  if (z.rows() != b.lower.rows() || z.cols() != b.lower.cols())
    throw ShapeMismatch("validate_latent: shape mismatch");
  for (Index i = 0; i < z.rows(); ++i)
    for (Index j = 0; j < z.cols(); ++j)
      if (!(z(i, j) > b.lower(i, j) && z(i, j) < b.upper(i, j))) return false;
  return true;
}

/// Normal scores from column-wise midranks: Phi^{-1}(rank / (n_j + 1)) over
/// the non-missing entries; missing cells get 0. Columns with fewer than two
/// distinct values carry no rank information and are reported back.
inline Matrixd normal_scores(const MixedOutcomeMatrix& y,
                             std::vector<Index>* degenerate_columns = nullptr) {
  const Index n = y.rows();
  const Index p = y.cols();
  Matrixd z = Matrixd::Zero(n, p);
  for (Index j = 0; j < p; ++j) {
    std::vector<std::pair<double, Index>> obs;
    obs.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i)
      if (y.observed(i, j)) obs.emplace_back(y.values(i, j), i);
    std::sort(obs.begin(), obs.end());
    const std::size_t nj = obs.size();
    std::size_t distinct = 0;
    std::size_t k = 0;
    while (k < nj) {
      std::size_t e = k;
      while (e + 1 < nj && obs[e + 1].first == obs[k].first) ++e;
      const double midrank = 0.5 * (static_cast<double>(k + 1) + static_cast<double>(e + 1));
      const double score = norm_quantile(midrank / (static_cast<double>(nj) + 1.0));
      for (std::size_t t = k; t <= e; ++t) z(obs[t].second, j) = score;
      ++distinct;
      k = e + 1;
    }
    if (distinct < 2 && degenerate_columns) degenerate_columns->push_back(j);
  }
  return z;
}

}  // namespace spbgc
