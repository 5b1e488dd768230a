#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "spbgc/errors.hpp"
#include "spbgc/linalg.hpp"
#include "spbgc/normal.hpp"
#include "spbgc/rank.hpp"
#include "spbgc/rng.hpp"
#include "spbgc/spatial.hpp"
#include "spbgc/types.hpp"

namespace spbgc {

/// Marginal distribution attached to one outcome column; only its quantile
/// function is ever needed.
struct MarginalSpec {
  enum class Kind { bernoulli, poisson, ordered_categorical, normal };

  Kind kind = Kind::normal;
  double a = 0.0;  // bernoulli p / poisson lambda / normal mu
  double b = 1.0;  // normal sigma
  Vectord probs;   // ordered-categorical cell probabilities

  static MarginalSpec bernoulli(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidProbability("bernoulli p outside [0,1]");
    MarginalSpec s;
    s.kind = Kind::bernoulli;
    s.a = p;
    return s;
  }
  static MarginalSpec poisson(double lambda) {
    if (!(lambda > 0.0)) throw InvalidProbability("poisson rate must be positive");
    MarginalSpec s;
    s.kind = Kind::poisson;
    s.a = lambda;
    return s;
  }
  static MarginalSpec ordered_categorical(Vectord cell_probs) {
    double total = 0.0;
    for (Index k = 0; k < cell_probs.size(); ++k) {
      if (!(cell_probs[k] >= 0.0 && cell_probs[k] <= 1.0))
        throw InvalidProbability("categorical cell probability outside [0,1]");
      total += cell_probs[k];
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw InvalidProbability("categorical probabilities must sum to 1");
    MarginalSpec s;
    s.kind = Kind::ordered_categorical;
    s.probs = std::move(cell_probs);
    return s;
  }
  static MarginalSpec normal(double mu, double sigma) {
    if (!(sigma > 0.0)) throw InvalidProbability("normal sigma must be positive");
    MarginalSpec s;
    s.kind = Kind::normal;
    s.a = mu;
    s.b = sigma;
    return s;
  }

  ColumnKind column_kind() const {
    switch (kind) {
      case Kind::bernoulli: return ColumnKind::binary;
      case Kind::poisson: return ColumnKind::count;
      case Kind::ordered_categorical: return ColumnKind::ordinal;
      case Kind::normal: return ColumnKind::continuous;
    }
    return ColumnKind::continuous;
  }

  /// Generalized inverse CDF: smallest support value v with F(v) >= u for
  /// the discrete margins, the exact quantile for the continuous one.
  /// Ordered-categorical levels are 1-based.
  double quantile(double u) const {
    if (!(u > 0.0 && u < 1.0)) throw InvalidProbability("quantile argument outside (0,1)");
    switch (kind) {
      case Kind::bernoulli:
        return (u <= 1.0 - a) ? 0.0 : 1.0;
      case Kind::poisson: {
        double pmf = std::exp(-a);
        double cdf = pmf;
        double k = 0.0;
        const double kmax = a + 40.0 * std::sqrt(a) + 100.0;
        while (cdf < u && k < kmax) {
          k += 1.0;
          pmf *= a / k;
          cdf += pmf;
        }
        return k;
      }
      case Kind::ordered_categorical: {
        double cdf = 0.0;
        for (Index k = 0; k < probs.size(); ++k) {
          cdf += probs[k];
          if (u <= cdf) return static_cast<double>(k + 1);
        }
        return static_cast<double>(probs.size());
      }
      case Kind::normal:
        return a + b * norm_quantile(u);
    }
    return 0.0;
  }
};

/// One simulation scenario: sites on the unit square, a sparse list of true
/// cross-outcome correlations, and one marginal per outcome. phi = 0 means
/// spatially independent sites (H = I).
struct ScenarioSpec {
  Index n = 50;
  Index p = 6;
  double phi = 0.25;
  CorrelationKind correlation = CorrelationKind::exponential;
  std::vector<std::tuple<Index, Index, double>> r_entries;  // (j, k, value), 0-based, j < k
  std::vector<MarginalSpec> margins;
  long replications = 1;
  std::uint64_t seed = 1;

  Matrixd correlation_matrix() const {
    Matrixd r = Matrixd::Identity(p, p);
    for (const auto& [j, k, v] : r_entries) {
      if (j < 0 || k < 0 || j >= p || k >= p || j == k)
        throw ShapeMismatch("scenario correlation entry out of range");
      r(j, k) = v;
      r(k, j) = v;
    }
    cholesky(r);  // must embed to a valid correlation matrix
    return r;
  }
};

/// The reference simulation scenario: Bernoulli(0.5), Poisson(15),
/// Poisson(5), and a five-level ordered categorical in columns 1-4, standard
/// normals elsewhere; sparse correlations on the first five outcomes.
inline ScenarioSpec default_scenario(Index n, Index p, double phi) {
  if (p < 4) throw ShapeMismatch("default scenario needs p >= 4");
  ScenarioSpec s;
  s.n = n;
  s.p = p;
  s.phi = phi;
  const std::vector<std::tuple<Index, Index, double>> all = {
      {0, 1, 0.5}, {0, 3, 0.3}, {0, 4, 0.2}, {1, 2, -0.2},
      {1, 3, -0.3}, {2, 4, 0.4}, {3, 4, -0.5}};
  for (const auto& e : all)
    if (std::get<1>(e) < p) s.r_entries.push_back(e);
  s.margins.push_back(MarginalSpec::bernoulli(0.5));
  s.margins.push_back(MarginalSpec::poisson(15.0));
  s.margins.push_back(MarginalSpec::poisson(5.0));
  Vectord cat(5);
  cat << 0.3, 0.15, 0.1, 0.25, 0.2;
  s.margins.push_back(MarginalSpec::ordered_categorical(cat));
  for (Index j = 4; j < p; ++j) s.margins.push_back(MarginalSpec::normal(0.0, 1.0));
  return s;
}

struct SyntheticDataset {
  MixedOutcomeMatrix y;
  LocationSet locs;
  Matrixd z_true;
};

/// Draws locations uniformly on the unit square, the latent matrix from the
/// separable field (Z = L_H E L_R^T, so vec(Z^T) ~ N(0, H kron R)), and maps
/// each latent column through its marginal quantile.
inline SyntheticDataset generate(const ScenarioSpec& scenario, Rng& rng) {
  if (static_cast<Index>(scenario.margins.size()) != scenario.p)
    throw ShapeMismatch("scenario needs one marginal per outcome");
  const Index n = scenario.n;
  const Index p = scenario.p;

  Matrixd coords(n, 2);
  for (Index i = 0; i < n; ++i) {
    coords(i, 0) = rng.uniform();
    coords(i, 1) = rng.uniform();
  }
  SyntheticDataset out;
  out.locs = make_locations(std::move(coords));

  const Matrixd r = scenario.correlation_matrix();
  const Matrixd l_r = cholesky(r).lower;
  Matrixd e(n, p);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) e(i, j) = rng.normal();

  if (scenario.phi > 0.0) {
    const CorrelationFunction corr{scenario.correlation, scenario.phi};
    const Matrixd l_h = cholesky(build_H(out.locs, corr)).lower;
    out.z_true = l_h * e * l_r.transpose();
  } else {
    out.z_true = e * l_r.transpose();
  }

  Matrixd values(n, p);
  std::vector<ColumnKind> kinds;
  kinds.reserve(static_cast<std::size_t>(p));
  for (Index j = 0; j < p; ++j) {
    const MarginalSpec& spec = scenario.margins[static_cast<std::size_t>(j)];
    kinds.push_back(spec.column_kind());
    for (Index i = 0; i < n; ++i) values(i, j) = spec.quantile(norm_cdf(out.z_true(i, j)));
  }
  out.y = MixedOutcomeMatrix::from_values(std::move(values), std::move(kinds));
  return out;
}

}  // namespace spbgc
