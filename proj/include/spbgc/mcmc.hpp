#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "spbgc/errors.hpp"
#include "spbgc/linalg.hpp"
#include "spbgc/rank.hpp"
#include "spbgc/rng.hpp"
#include "spbgc/samplers.hpp"
#include "spbgc/spatial.hpp"
#include "spbgc/types.hpp"

namespace spbgc {

enum class SamplerKind { bgc, spbgc, spbgc_nngp };

inline std::string to_string(SamplerKind s) {
  switch (s) {
    case SamplerKind::bgc: return "bgc";
    case SamplerKind::spbgc: return "spbgc";
    case SamplerKind::spbgc_nngp: return "spbgc_nngp";
  }
  return "?";
}

inline SamplerKind parse_sampler(const std::string& s) {
  if (s == "bgc") return SamplerKind::bgc;
  if (s == "spbgc") return SamplerKind::spbgc;
  if (s == "spbgc_nngp") return SamplerKind::spbgc_nngp;
  throw ParseError("unknown sampler '" + s + "' (expected bgc, spbgc, spbgc_nngp)");
}

enum class OrderingKind { input, maxmin };

/// Priors. Unset fields resolve at chain start: v0 = p + 2, V0 = I (so the
/// expanded covariance prior is IW(p+2, (p+2) I)); the spatial range gets a
/// uniform prior on [phi_min, phi_max] defaulting to [0.01, 1] times the
/// maximum pairwise distance.
struct PriorConfig {
  double v0 = 0.0;
  Matrixd V0;
  double phi_min = 0.0;
  double phi_max = 0.0;
};

struct ChainConfig {
  SamplerKind sampler = SamplerKind::spbgc;
  long iterations = 3000;
  long burn_in = 1000;
  long thin = 1;
  std::uint64_t seed = 1;
  Index m = 15;  // neighbor budget (spbgc_nngp)
  CorrelationKind correlation = CorrelationKind::exponential;
  OrderingKind ordering = OrderingKind::input;
  double initial_step = 0.5;          // RWMH step on log phi
  bool sample_phi = true;             // false holds phi at its initial value
  bool fix_identity_spatial = false;  // H = I through the spatial code path
  bool debug_validate = false;        // assert rank bounds after every sweep
  TmvnOptions tmvn;

  void validate() const {
    if (iterations <= 0 || burn_in < 0 || burn_in >= iterations)
      throw ShapeMismatch("chain config: need 0 <= burn_in < iterations");
    if (thin < 1) throw ShapeMismatch("chain config: thin >= 1 required");
  }
};

/// Current sampler state: latent matrix, expanded covariance V and its
/// correlation projection R (unit diagonal), and the spatial range.
struct CorrelationState {
  Matrixd z;
  Matrixd V;
  Matrixd R;
  double phi = 0.0;
};

struct PhaseTimings {
  double z_seconds = 0.0;
  double r_seconds = 0.0;
  double phi_seconds = 0.0;
  double setup_seconds = 0.0;
  double total_seconds = 0.0;
};

inline Index pair_count(Index p) { return p * (p - 1) / 2; }

/// Upper-triangular pairs (j, k), j < k, lexicographic.
inline Vectord pack_upper(const Eigen::Ref<const Matrixd>& r) {
  const Index p = r.rows();
  Vectord v(pair_count(p));
  Index t = 0;
  for (Index j = 0; j < p; ++j)
    for (Index k = j + 1; k < p; ++k) v[t++] = r(j, k);
  return v;
}

inline Matrixd unpack_upper(const Eigen::Ref<const Vectord>& v, Index p) {
  Matrixd r = Matrixd::Identity(p, p);
  Index t = 0;
  for (Index j = 0; j < p; ++j)
    for (Index k = j + 1; k < p; ++k) {
      r(j, k) = v[t];
      r(k, j) = v[t];
      ++t;
    }
  return r;
}

/// Thinned post-burn-in draws of (R, phi) plus run metadata. On a kernel
/// failure the chain stops, keeps the draws stored so far, and flags itself.
struct PosteriorDraws {
  Index n = 0, p = 0;
  SamplerKind sampler = SamplerKind::bgc;
  std::uint64_t seed = 0;
  Matrixd r_draws;    // stored x pair_count(p)
  Vectord phi_draws;  // stored (zero column for bgc)
  double phi_acceptance = 0.0;
  PhaseTimings timings;
  bool aborted = false;
  std::string error;
  std::vector<std::string> warnings;

  Index stored() const { return r_draws.rows(); }
  Matrixd r_matrix(Index draw) const { return unpack_upper(r_draws.row(draw), p); }
};

/// Initial state: latent matrix from column-wise normal scores (midranks for
/// ties, zero for missing), identity V and R, and the spatial range at the
/// geometric mean of its prior bounds.
inline CorrelationState init_state(const MixedOutcomeMatrix& y, const PriorConfig& prior,
                                   Rng& /*rng*/,
                                   std::vector<std::string>* warnings = nullptr) {
  if (y.rows() < 2 || y.cols() < 2)
    throw ShapeMismatch("init_state: need at least 2 sites and 2 outcomes");
  CorrelationState st;
  std::vector<Index> degenerate;
  st.z = normal_scores(y, &degenerate);
  if (warnings)
    for (Index j : degenerate)
      warnings->push_back("column " + std::to_string(j) +
                          " has fewer than two distinct values; it contributes no rank "
                          "information");
  const Index p = y.cols();
  st.V = Matrixd::Identity(p, p);
  st.R = Matrixd::Identity(p, p);
  st.phi = (prior.phi_min > 0.0 && prior.phi_max > 0.0)
               ? std::sqrt(prior.phi_min * prior.phi_max)
               : 0.0;
  return st;
}

/// Conditional moments of site i given all other sites under the spatial
/// factor, through the precision matrix Q = H^{-1}: weight vector
/// -Q_{i,-i}/Q_{ii} applied to the latent rows and scalar variance 1/Q_{ii}.
/// Equals the Schur-complement moments without any (n-1)-dimensional solve.
inline std::pair<Vectord, double> full_conditional_moments(
    const Eigen::Ref<const Matrixd>& q, const Eigen::Ref<const Matrixd>& z, Index i) {
  const double qii = q(i, i);
  const Vectord mu = z.row(i).transpose() - (q.row(i) * z).transpose() / qii;
  return {mu, 1.0 / qii};
}

/// Conditional moments of site i given its dependent set (cached weights).
inline std::pair<Vectord, double> nngp_conditional_moments(const NeighborGraph& graph,
                                                           const Eigen::Ref<const Matrixd>& z,
                                                           Index i) {
  const std::size_t si = static_cast<std::size_t>(i);
  const auto& dep = graph.dependents[si];
  const RowVectord& w = graph.cond_weights[si];
  Vectord mu = Vectord::Zero(z.cols());
  for (std::size_t k = 0; k < dep.size(); ++k)
    mu += w[static_cast<Index>(k)] * z.row(dep[k]).transpose();
  return {mu, graph.cond_var[i]};
}

namespace detail {

inline void draw_site(CorrelationState& st, const MixedOutcomeMatrix& y, Index i,
                      const Vectord& mu, double scale, Rng& rng, const TmvnOptions& opts,
                      Vectord& lo, Vectord& hi) {
  site_bounds(y, st.z, i, lo, hi);
  TruncationBox box{std::move(lo), std::move(hi)};
  const Vectord start = st.z.row(i).transpose();
  const Matrixd cov = scale * st.R;
  st.z.row(i) = sample_tmvn(mu, cov, box, rng, opts, &start).transpose();
  lo = std::move(box.lower);
  hi = std::move(box.upper);
}

}  // namespace detail

/// One full-conditional sweep of the latent matrix under the full spatial
/// factor (Q = H^{-1} for the current range). Sites are updated sequentially;
/// each conditional sees the latest values of all other sites.
inline void update_z_full(CorrelationState& st, const MixedOutcomeMatrix& y,
                          const Eigen::Ref<const Matrixd>& q, Rng& rng,
                          const TmvnOptions& opts = {}) {
  Vectord lo, hi;
  for (Index i = 0; i < y.rows(); ++i) {
    auto [mu, scale] = full_conditional_moments(q, st.z, i);
    detail::draw_site(st, y, i, mu, scale, rng, opts, lo, hi);
  }
}

/// Independent-site sweep (H = I): every conditional is N(0, R) in the box.
inline void update_z_independent(CorrelationState& st, const MixedOutcomeMatrix& y, Rng& rng,
                                 const TmvnOptions& opts = {}) {
  Vectord lo, hi;
  const Vectord mu = Vectord::Zero(y.cols());
  for (Index i = 0; i < y.rows(); ++i) detail::draw_site(st, y, i, mu, 1.0, rng, opts, lo, hi);
}

/// Sweep under the nearest-neighbor factor: site i conditions only on its
/// dependent set D_i, so every factorization stays at most |D_i|-dimensional.
inline void update_z_nngp(CorrelationState& st, const MixedOutcomeMatrix& y,
                          const NeighborGraph& graph, Rng& rng, const TmvnOptions& opts = {}) {
  Vectord lo, hi;
  for (Index t = 0; t < graph.size(); ++t) {
    const Index i = graph.ordering[static_cast<std::size_t>(t)];
    auto [mu, scale] = nngp_conditional_moments(graph, st.z, i);
    detail::draw_site(st, y, i, mu, scale, rng, opts, lo, hi);
  }
}

/// Sequential-conditioning scatter sum_i h_i^{-1} (z_i - zbar_i)(z_i - zbar_i)^T
/// over predecessors, which telescopes to Z^T H^{-1} Z; computed by one
/// forward solve against the cached factor of H.
inline Matrixd sequential_scatter_full(const CholeskyFactor& h_factor,
                                       const Eigen::Ref<const Matrixd>& z) {
  const Matrixd e = h_factor.lower.triangularView<Eigen::Lower>().solve(z);
  return e.transpose() * e;
}

/// Same scatter under the nearest-neighbor factor, from the cached (B_i, F_i).
inline Matrixd nngp_scatter(const NeighborGraph& graph, const Eigen::Ref<const Matrixd>& z) {
  const Index p = z.cols();
  Matrixd s = Matrixd::Zero(p, p);
  for (Index i = 0; i < graph.size(); ++i) {
    const std::size_t si = static_cast<std::size_t>(i);
    const auto& nbrs = graph.neighbors[si];
    Vectord r = z.row(i).transpose();
    for (std::size_t k = 0; k < nbrs.size(); ++k)
      r -= graph.weights[si][static_cast<Index>(k)] * z.row(nbrs[k]).transpose();
    s.noalias() += (r * r.transpose()) / graph.residual_var[i];
  }
  return s;
}

/// Parameter-expanded correlation update: V ~ IW(v0 + n, v0 V0 + scatter),
/// then R_jk = V_jk / sqrt(V_jj V_kk) with an exactly unit diagonal.
inline void update_correlation(CorrelationState& st, const Eigen::Ref<const Matrixd>& scatter,
                               Index n, double v0, const Eigen::Ref<const Matrixd>& v0_scale,
                               Rng& rng) {
  const Matrixd scale = v0_scale + scatter;
  st.V = sample_inverse_wishart(v0 + static_cast<double>(n), scale, rng);
  const Vectord d = st.V.diagonal().array().sqrt().matrix();
  st.R = st.V.array() / (d * d.transpose()).array();
  st.R.diagonal().setOnes();
}

/// Range log-density terms under the nearest-neighbor factor for an
/// arbitrary correlation function (proposal evaluation): sum_i log F_i and
/// the V^{-1}-weighted quadratic form of the conditional residuals.
struct PhiTerms {
  double sum_log_f = 0.0;
  double quad = 0.0;
};

inline PhiTerms nngp_phi_terms(const NeighborGraph& graph, const CorrelationFunction& corr,
                               const Eigen::Ref<const Matrixd>& z,
                               const Eigen::Ref<const Matrixd>& v_inv) {
  PhiTerms terms;
  RowVectord b;
  double f = 1.0;
  for (Index i = 0; i < graph.size(); ++i) {
    const std::size_t si = static_cast<std::size_t>(i);
    site_vecchia_factors(graph, i, corr, b, f);
    const auto& nbrs = graph.neighbors[si];
    Vectord r = z.row(i).transpose();
    for (std::size_t k = 0; k < nbrs.size(); ++k)
      r -= b[static_cast<Index>(k)] * z.row(nbrs[k]).transpose();
    terms.sum_log_f += std::log(f);
    terms.quad += r.dot(v_inv * r) / f;
  }
  return terms;
}

/// Same terms from the graph's cached factors (current range).
inline PhiTerms nngp_phi_terms_cached(const NeighborGraph& graph,
                                      const Eigen::Ref<const Matrixd>& z,
                                      const Eigen::Ref<const Matrixd>& v_inv) {
  PhiTerms terms;
  for (Index i = 0; i < graph.size(); ++i) {
    const std::size_t si = static_cast<std::size_t>(i);
    const auto& nbrs = graph.neighbors[si];
    Vectord r = z.row(i).transpose();
    for (std::size_t k = 0; k < nbrs.size(); ++k)
      r -= graph.weights[si][static_cast<Index>(k)] * z.row(nbrs[k]).transpose();
    terms.sum_log_f += std::log(graph.residual_var[i]);
    terms.quad += r.dot(v_inv * r) / graph.residual_var[i];
  }
  return terms;
}

/// Full-factor range terms: logdet H and tr(V^{-1} Z^T H^{-1} Z).
inline PhiTerms full_phi_terms(const CholeskyFactor& h_factor,
                               const Eigen::Ref<const Matrixd>& z,
                               const Eigen::Ref<const Matrixd>& v_inv) {
  PhiTerms terms;
  terms.sum_log_f = h_factor.log_det;
  const Matrixd e = h_factor.lower.triangularView<Eigen::Lower>().solve(z);
  terms.quad = (v_inv.array() * (e.transpose() * e).array()).sum();
  return terms;
}

namespace detail {

inline double phi_log_target(const PhiTerms& terms, Index p, double log_phi) {
  // -p/2 logdet - quad/2 + log-scale Jacobian; the uniform prior is constant.
  return -0.5 * static_cast<double>(p) * terms.sum_log_f - 0.5 * terms.quad + log_phi;
}

class StopWatch {
 public:
  StopWatch() : t0_(std::chrono::steady_clock::now()) {}
  double lap() {
    const auto t1 = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(t1 - t0_).count();
    t0_ = t1;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point t0_;
};

}  // namespace detail

/// Resolved prior with concrete v0, V0, and range bounds.
struct ResolvedPrior {
  double v0;
  Matrixd v0_scale;  // v0 * V0
  double phi_min;
  double phi_max;
};

inline ResolvedPrior resolve_prior(const PriorConfig& prior, Index p, const LocationSet* locs,
                                   bool spatial) {
  ResolvedPrior out;
  out.v0 = prior.v0 > 0.0 ? prior.v0 : static_cast<double>(p) + 2.0;
  if (!(out.v0 > static_cast<double>(p) - 1.0))
    throw InvalidDegreesOfFreedom("prior degrees of freedom must exceed p - 1");
  Matrixd v0m = prior.V0.size() > 0 ? prior.V0 : Matrixd::Identity(p, p);
  if (v0m.rows() != p || v0m.cols() != p) throw ShapeMismatch("prior scale must be p x p");
  out.v0_scale = out.v0 * v0m;
  out.phi_min = prior.phi_min;
  out.phi_max = prior.phi_max;
  if (spatial && (out.phi_min <= 0.0 || out.phi_max <= 0.0)) {
    const double dmax = locs->max_pairwise_distance();
    if (!(dmax > 0.0)) throw ShapeMismatch("all locations coincide; no spatial scale");
    if (out.phi_min <= 0.0) out.phi_min = 0.01 * dmax;
    if (out.phi_max <= 0.0) out.phi_max = dmax;
  }
  if (spatial && !(out.phi_min < out.phi_max))
    throw ShapeMismatch("phi prior needs phi_min < phi_max");
  return out;
}

/// Runs one chain of the requested sampler. The iteration order is: latent
/// sweep, correlation update, then (spatial samplers) the range step. Caches
/// keyed on the range (H^{-1} or the neighbor factors) are rebuilt only when
/// a range proposal is accepted.
inline PosteriorDraws run_chain(const MixedOutcomeMatrix& y, const LocationSet& locs,
                                const PriorConfig& prior, const ChainConfig& cfg) {
  cfg.validate();
  const Index n = y.rows();
  const Index p = y.cols();
  const bool spatial = cfg.sampler != SamplerKind::bgc;
  const bool identity_h = cfg.fix_identity_spatial;
  if (spatial && locs.size() != n)
    throw ShapeMismatch("run_chain: one location per observation row expected");

  PosteriorDraws draws;
  draws.n = n;
  draws.p = p;
  draws.sampler = cfg.sampler;
  draws.seed = cfg.seed;

  detail::StopWatch total_watch;
  detail::StopWatch watch;

  const ResolvedPrior rp = resolve_prior(prior, p, &locs, spatial && !identity_h);
  Rng rng(cfg.seed);

  PriorConfig init_prior = prior;
  init_prior.phi_min = rp.phi_min;
  init_prior.phi_max = rp.phi_max;
  CorrelationState st = init_state(y, init_prior, rng, &draws.warnings);

  LocationSet ordered_locs = locs;
  if (spatial && cfg.ordering == OrderingKind::maxmin)
    ordered_locs.ordering = maxmin_ordering(locs.coords);

  // Range-dependent caches.
  CorrelationFunction corr{cfg.correlation, st.phi > 0.0 ? st.phi : 1.0};
  Matrixd h, q;
  CholeskyFactor h_factor;
  NeighborGraph graph;
  const bool full_gp = cfg.sampler == SamplerKind::spbgc;
  const bool nngp = cfg.sampler == SamplerKind::spbgc_nngp;
  if (spatial) {
    if (identity_h) {
      h = Matrixd::Identity(n, n);
      h_factor = cholesky(h);
      if (full_gp) q = Matrixd::Identity(n, n);
      if (nngp) {
        // Build the sets with a placeholder range, then zero the factors so
        // the sites decouple exactly.
        graph = build_neighbor_graph(ordered_locs, std::min(cfg.m, n - 1),
                                     CorrelationFunction{cfg.correlation, 1.0});
        for (Index i = 0; i < n; ++i) {
          graph.weights[static_cast<std::size_t>(i)].setZero();
          graph.cond_weights[static_cast<std::size_t>(i)].setZero();
          graph.residual_var[i] = 1.0;
          graph.cond_var[i] = 1.0;
        }
      }
    } else {
      if (full_gp) {
        h = build_H(ordered_locs, corr);
        h_factor = cholesky(h);
        q = h_factor.inverse();
      }
      if (nngp) graph = build_neighbor_graph(ordered_locs, cfg.m, corr);
    }
  }

  RwmhState rwmh;
  rwmh.current = std::log(st.phi > 0.0 ? st.phi : 1.0);
  rwmh.step = cfg.initial_step;

  const long kept = (cfg.iterations - cfg.burn_in) / cfg.thin;
  draws.r_draws.resize(kept, pair_count(p));
  draws.phi_draws = Vectord::Zero(kept);
  Index stored = 0;

  draws.timings.setup_seconds = watch.lap();

  const bool do_phi = spatial && !identity_h && cfg.sample_phi;
  try {
    for (long it = 0; it < cfg.iterations; ++it) {
      // Latent sweep.
      if (!spatial)
        update_z_independent(st, y, rng, cfg.tmvn);
      else if (full_gp)
        update_z_full(st, y, q, rng, cfg.tmvn);
      else
        update_z_nngp(st, y, graph, rng, cfg.tmvn);
      if (cfg.debug_validate && !validate_latent(st.z, extract_bounds(y, st.z)))
        throw Error("latent matrix violates rank bounds after sweep");
      draws.timings.z_seconds += watch.lap();

      // Correlation update.
      Matrixd scatter;
      if (!spatial)
        scatter = st.z.transpose() * st.z;
      else if (full_gp)
        scatter = sequential_scatter_full(h_factor, st.z);
      else
        scatter = nngp_scatter(graph, st.z);
      update_correlation(st, scatter, n, rp.v0, rp.v0_scale, rng);
      draws.timings.r_seconds += watch.lap();

      // Range step.
      if (do_phi) {
        const Matrixd v_inv = cholesky(st.V).inverse();
        double current_target;
        if (full_gp) {
          current_target =
              detail::phi_log_target(full_phi_terms(h_factor, st.z, v_inv), p, rwmh.current);
          CholeskyFactor proposal_factor;
          Matrixd proposal_h;
          const auto log_target = [&](double lphi) {
            const double phi = std::exp(lphi);
            if (phi < rp.phi_min || phi > rp.phi_max) return -kInf;
            proposal_h = build_H(ordered_locs, CorrelationFunction{cfg.correlation, phi});
            try {
              proposal_factor = cholesky(proposal_h);
            } catch (const NotPositiveDefinite&) {
              return -kInf;
            }
            return detail::phi_log_target(full_phi_terms(proposal_factor, st.z, v_inv), p,
                                          lphi);
          };
          const RwmhResult res = rwmh_step_cached(rwmh, log_target, rng, current_target);
          rwmh = res.state;
          if (res.accepted) {
            h = std::move(proposal_h);
            h_factor = std::move(proposal_factor);
            q = h_factor.inverse();
            st.phi = std::exp(rwmh.current);
            corr.range = st.phi;
          }
          if (it < cfg.burn_in) rwmh_adapt(rwmh, res.accepted, it + 1);
        } else {
          current_target = detail::phi_log_target(nngp_phi_terms_cached(graph, st.z, v_inv),
                                                  p, rwmh.current);
          const auto log_target = [&](double lphi) {
            const double phi = std::exp(lphi);
            if (phi < rp.phi_min || phi > rp.phi_max) return -kInf;
            try {
              return detail::phi_log_target(
                  nngp_phi_terms(graph, CorrelationFunction{cfg.correlation, phi}, st.z,
                                 v_inv),
                  p, lphi);
            } catch (const NotPositiveDefinite&) {
              return -kInf;
            }
          };
          const RwmhResult res = rwmh_step_cached(rwmh, log_target, rng, current_target);
          rwmh = res.state;
          if (res.accepted) {
            st.phi = std::exp(rwmh.current);
            corr.range = st.phi;
            refresh_vecchia_factors(graph, corr);
          }
          if (it < cfg.burn_in) rwmh_adapt(rwmh, res.accepted, it + 1);
        }
      }
      draws.timings.phi_seconds += watch.lap();

      if (it >= cfg.burn_in && ((it - cfg.burn_in + 1) % cfg.thin) == 0 && stored < kept) {
        draws.r_draws.row(stored) = pack_upper(st.R).transpose();
        draws.phi_draws[stored] = spatial && !identity_h ? st.phi : 0.0;
        ++stored;
      }
    }
  } catch (const std::exception& e) {
    draws.aborted = true;
    draws.error = e.what();
  }
  draws.r_draws.conservativeResize(stored, Eigen::NoChange);
  draws.phi_draws.conservativeResize(stored);
  draws.phi_acceptance = rwmh.acceptance_rate();
  draws.timings.total_seconds = total_watch.lap();
  return draws;
}

}  // namespace spbgc
