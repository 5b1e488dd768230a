#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "spbgc/errors.hpp"
#include "spbgc/kdtree.hpp"
#include "spbgc/linalg.hpp"
#include "spbgc/types.hpp"

namespace spbgc {

/// Observation sites with the permutation used for sequential conditioning.
/// The default ordering is the input order; a max-min ordering can be
/// requested through the chain configuration.
struct LocationSet {
  Matrixd coords;        // n x 2
  IndexVector ordering;  // permutation of 0..n-1

  Index size() const { return coords.rows(); }

  double distance(Index i, Index j) const {
    return (coords.row(i) - coords.row(j)).norm();
  }

  double max_pairwise_distance() const {
    double d = 0.0;
    for (Index i = 0; i < size(); ++i)
      for (Index j = i + 1; j < size(); ++j) d = std::max(d, distance(i, j));
    return d;
  }
};

inline LocationSet make_locations(Matrixd coords) {
  if (coords.cols() != 2) throw ShapeMismatch("locations must have two coordinate columns");
  if (!coords.allFinite()) throw ParseError("locations contain non-finite coordinates");
  LocationSet locs;
  locs.ordering.resize(static_cast<std::size_t>(coords.rows()));
  std::iota(locs.ordering.begin(), locs.ordering.end(), Index{0});
  locs.coords = std::move(coords);
  return locs;
}

/// Max-min ordering: start nearest the centroid, then repeatedly add the
/// site farthest from those already placed.
inline IndexVector maxmin_ordering(const Eigen::Ref<const Matrixd>& coords) {
  const Index n = coords.rows();
  IndexVector order;
  order.reserve(static_cast<std::size_t>(n));
  const RowVectord centroid = coords.colwise().mean();
  Index first = 0;
  double best = kInf;
  for (Index i = 0; i < n; ++i) {
    const double d = (coords.row(i) - centroid).norm();
    if (d < best) {
      best = d;
      first = i;
    }
  }
  order.push_back(first);
  Vectord min_dist(n);
  for (Index i = 0; i < n; ++i) min_dist[i] = (coords.row(i) - coords.row(first)).norm();
  min_dist[first] = -1.0;
  for (Index step = 1; step < n; ++step) {
    Index pick = 0;
    double far = -1.0;
    for (Index i = 0; i < n; ++i)
      if (min_dist[i] > far) {
        far = min_dist[i];
        pick = i;
      }
    order.push_back(pick);
    for (Index i = 0; i < n; ++i)
      if (min_dist[i] >= 0.0)
        min_dist[i] = std::min(min_dist[i], (coords.row(i) - coords.row(pick)).norm());
    min_dist[pick] = -1.0;
  }
  return order;
}

enum class CorrelationKind { exponential, gaussian };

/// Isotropic spatial correlation rho(d; phi) with rho(0) = 1, nonincreasing
/// in distance. Distances are Euclidean in the supplied coordinate units.
struct CorrelationFunction {
  CorrelationKind kind = CorrelationKind::exponential;
  double range = 1.0;  // phi > 0

  double operator()(double dist) const {
    const double r = dist / range;
    return kind == CorrelationKind::exponential ? std::exp(-r) : std::exp(-r * r);
  }

  void validate() const {
    if (!(range > 0.0)) throw ShapeMismatch("spatial range must be positive");
  }
};

/// Dense spatial correlation matrix H with H(i,i') = rho(||s_i - s_i'||).
inline Matrixd build_H(const LocationSet& locs, const CorrelationFunction& corr) {
  corr.validate();
  const Index n = locs.size();
  Matrixd h(n, n);
  for (Index i = 0; i < n; ++i) {
    h(i, i) = 1.0;
    for (Index j = i + 1; j < n; ++j) {
      const double v = corr(locs.distance(i, j));
      h(i, j) = v;
      h(j, i) = v;
    }
  }
  return h;
}

/// Nearest-predecessor neighbor sets with cached sequential-conditioning
/// factors. For each site i (in conditioning order): neighbors N_i are the
/// min(i, m) nearest predecessors, weights B_i = H_{i,N} H_N^{-1}, residual
/// variance F_i = 1 - B_i H_{N,i}, and dependents D_i = {i' : i in N_{i'}}
/// union N_i, the minimal set that d-separates site i from the rest.
/// Neighbor sets depend only on the geometry; the factors depend on the
/// correlation function and are refreshed whenever the range changes.
struct NeighborGraph {
  Index m = 0;
  IndexVector ordering;   // visit order (site ids)
  IndexVector position;   // site id -> position in ordering

  std::vector<IndexVector> neighbors;   // N_i, ascending by distance
  std::vector<IndexVector> dependents;  // D_i, ascending by id

  std::vector<RowVectord> weights;  // B_i over neighbors
  Vectord residual_var;             // F_i

  std::vector<RowVectord> cond_weights;  // over dependents
  Vectord cond_var;

  // Pairwise distances over [i ; D_i], cached once; row/col 0 is site i.
  std::vector<Matrixd> dep_dist;
  std::vector<IndexVector> nbr_pos_in_dep;

  Index size() const { return static_cast<Index>(neighbors.size()); }
  Index max_dependents() const {
    std::size_t d = 0;
    for (const auto& v : dependents) d = std::max(d, v.size());
    return static_cast<Index>(d);
  }
};

namespace detail {

// Correlation sub-blocks over [i ; D_i] from the cached distance block.
inline Matrixd corr_block(const Matrixd& dist, const CorrelationFunction& corr) {
  Matrixd h(dist.rows(), dist.cols());
  for (Index r = 0; r < dist.rows(); ++r) {
    h(r, r) = 1.0;
    for (Index c = r + 1; c < dist.cols(); ++c) {
      const double v = corr(dist(r, c));
      h(r, c) = v;
      h(c, r) = v;
    }
  }
  return h;
}

// Weights w = H_{0,rest} H_rest^{-1} and residual 1 - w h_cross from an
// augmented correlation block whose row/col 0 is the conditioned site.
inline void conditioning_factors(const Matrixd& h_aug, RowVectord& w, double& resid) {
  const Index d = h_aug.rows() - 1;
  if (d == 0) {
    w.resize(0);
    resid = 1.0;
    return;
  }
  const Vectord h_cross = h_aug.col(0).tail(d);
  const CholeskyFactor f = cholesky(h_aug.bottomRightCorner(d, d));
  w = f.solve(h_cross).transpose();
  resid = 1.0 - w.dot(h_cross);
  if (!(resid > 0.0))
    throw NotPositiveDefinite("conditioning residual variance is not positive");
  resid = std::min(resid, 1.0);
}

}  // namespace detail

/// Per-site Vecchia factors (B_i, F_i) for an arbitrary correlation function,
/// computed from the cached distance blocks without mutating the graph.
inline void site_vecchia_factors(const NeighborGraph& graph, Index site,
                                 const CorrelationFunction& corr, RowVectord& b,
                                 double& f) {
  const auto& pos = graph.nbr_pos_in_dep[static_cast<std::size_t>(site)];
  const Index k = static_cast<Index>(pos.size());
  if (k == 0) {
    b.resize(0);
    f = 1.0;
    return;
  }
  const Matrixd& dist = graph.dep_dist[static_cast<std::size_t>(site)];
  Matrixd aug(k + 1, k + 1);
  aug(0, 0) = 0.0;
  for (Index r = 0; r < k; ++r) {
    aug(0, r + 1) = dist(0, pos[static_cast<std::size_t>(r)] + 1);
    aug(r + 1, 0) = aug(0, r + 1);
    for (Index c = 0; c < k; ++c)
      aug(r + 1, c + 1) =
          dist(pos[static_cast<std::size_t>(r)] + 1, pos[static_cast<std::size_t>(c)] + 1);
  }
  detail::conditioning_factors(detail::corr_block(aug, corr), b, f);
}

/// Recomputes all cached factors for a new correlation function (same sets).
inline void refresh_vecchia_factors(NeighborGraph& graph, const CorrelationFunction& corr) {
  corr.validate();
  const Index n = graph.size();
  for (Index i = 0; i < n; ++i) {
    const std::size_t si = static_cast<std::size_t>(i);
    const Matrixd h_aug = detail::corr_block(graph.dep_dist[si], corr);
    detail::conditioning_factors(h_aug, graph.cond_weights[si], graph.cond_var[i]);
    site_vecchia_factors(graph, i, corr, graph.weights[si], graph.residual_var[i]);
  }
}

/// Builds neighbor/dependent sets (exact nearest predecessors; kd-tree for
/// large n, brute force below 200 sites) and the factors for `corr`.
inline NeighborGraph build_neighbor_graph(const LocationSet& locs, Index m,
                                          const CorrelationFunction& corr) {
  const Index n = locs.size();
  if (m < 1 || m > n - 1)
    throw ShapeMismatch("neighbor budget m must satisfy 1 <= m <= n-1");

  NeighborGraph graph;
  graph.m = m;
  graph.ordering = locs.ordering;
  graph.position.assign(static_cast<std::size_t>(n), 0);
  for (Index t = 0; t < n; ++t)
    graph.position[static_cast<std::size_t>(graph.ordering[static_cast<std::size_t>(t)])] = t;
  graph.neighbors.resize(static_cast<std::size_t>(n));
  graph.dependents.resize(static_cast<std::size_t>(n));

  const bool use_tree = n >= 200;
  KdTree2d tree;
  tree.reserve(n);
  for (Index t = 0; t < n; ++t) {
    const Index site = graph.ordering[static_cast<std::size_t>(t)];
    const Index k = std::min<Index>(t, m);
    auto& nbrs = graph.neighbors[static_cast<std::size_t>(site)];
    if (k > 0) {
      if (use_tree) {
        nbrs = tree.knn(locs.coords(site, 0), locs.coords(site, 1), k);
      } else {
        std::vector<std::pair<double, Index>> cand;
        cand.reserve(static_cast<std::size_t>(t));
        for (Index u = 0; u < t; ++u) {
          const Index prev = graph.ordering[static_cast<std::size_t>(u)];
          cand.emplace_back(locs.distance(site, prev), prev);
        }
        std::sort(cand.begin(), cand.end());
        for (Index u = 0; u < k; ++u) nbrs.push_back(cand[static_cast<std::size_t>(u)].second);
      }
    }
    if (use_tree) tree.insert(locs.coords(site, 0), locs.coords(site, 1), site);
  }

  for (Index i = 0; i < n; ++i) {
    auto dep = graph.neighbors[static_cast<std::size_t>(i)];
    for (Index other = 0; other < n; ++other)
      for (Index nb : graph.neighbors[static_cast<std::size_t>(other)])
        if (nb == i) dep.push_back(other);
    std::sort(dep.begin(), dep.end());
    dep.erase(std::unique(dep.begin(), dep.end()), dep.end());
    graph.dependents[static_cast<std::size_t>(i)] = std::move(dep);
  }

  graph.dep_dist.resize(static_cast<std::size_t>(n));
  graph.nbr_pos_in_dep.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const std::size_t si = static_cast<std::size_t>(i);
    const auto& dep = graph.dependents[si];
    const Index d = static_cast<Index>(dep.size());
    Matrixd dist(d + 1, d + 1);
    dist(0, 0) = 0.0;
    for (Index r = 0; r < d; ++r) {
      dist(0, r + 1) = locs.distance(i, dep[static_cast<std::size_t>(r)]);
      dist(r + 1, 0) = dist(0, r + 1);
      for (Index c = 0; c < d; ++c)
        dist(r + 1, c + 1) =
            locs.distance(dep[static_cast<std::size_t>(r)], dep[static_cast<std::size_t>(c)]);
    }
    graph.dep_dist[si] = std::move(dist);
    auto& pos = graph.nbr_pos_in_dep[si];
    for (Index nb : graph.neighbors[si]) {
      const auto it = std::lower_bound(dep.begin(), dep.end(), nb);
      pos.push_back(static_cast<Index>(it - dep.begin()));
    }
  }

  graph.weights.resize(static_cast<std::size_t>(n));
  graph.cond_weights.resize(static_cast<std::size_t>(n));
  graph.residual_var.resize(n);
  graph.cond_var.resize(n);
  refresh_vecchia_factors(graph, corr);
  return graph;
}

/// Joint log-density of the latent matrix under the sequential product of
/// p-dimensional conditionals phi_p(z_i ; B_i z_{N_i}, F_i R).
inline double nngp_joint_logpdf(const Eigen::Ref<const Matrixd>& z, const NeighborGraph& graph,
                                const Eigen::Ref<const Matrixd>& r_matrix) {
  const Index n = graph.size();
  const Index p = z.cols();
  if (z.rows() != n) throw ShapeMismatch("nngp_joint_logpdf: one latent row per site expected");
  const CholeskyFactor r_factor = cholesky(r_matrix);
  const double lconst = static_cast<double>(p) * std::log(2.0 * M_PI) + r_factor.log_det;
  double total = 0.0;
  for (Index t = 0; t < n; ++t) {
    const Index site = graph.ordering[static_cast<std::size_t>(t)];
    const std::size_t si = static_cast<std::size_t>(site);
    const auto& nbrs = graph.neighbors[si];
    Vectord resid = z.row(site).transpose();
    for (std::size_t k = 0; k < nbrs.size(); ++k)
      resid -= graph.weights[si][static_cast<Index>(k)] * z.row(nbrs[k]).transpose();
    const double f = graph.residual_var[site];
    const Vectord w = r_factor.forward(resid);
    total += -0.5 * (lconst + static_cast<double>(p) * std::log(f) + w.squaredNorm() / f);
  }
  return total;
}

}  // namespace spbgc
