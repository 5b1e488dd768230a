// Acceptance suite: every criterion prints one PASS/FAIL line; the exit code
// is the number of failures. Criterion numbers can be passed as arguments to
// run a subset, e.g. `acceptance_tests 2 7 8 9`.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "spbgc/harness.hpp"
#include "spbgc/mcmc.hpp"
#include "spbgc/metrics.hpp"
#include "spbgc/synthetic.hpp"
#include "test_helpers.hpp"

using namespace spbgc;
using namespace spbgc::testing;

namespace {

int failures = 0;

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

void report(int criterion, bool pass, const std::string& detail, double seconds) {
  std::printf("criterion %d: %s - %s [%.1fs]\n", criterion, pass ? "PASS" : "FAIL",
              detail.c_str(), seconds);
  std::fflush(stdout);
  if (!pass) ++failures;
}

void info(const std::string& line) {
  std::printf("    %s\n", line.c_str());
  std::fflush(stdout);
}

ChainConfig simulation_protocol(SamplerKind sampler, std::uint64_t seed) {
  ChainConfig cfg;
  cfg.sampler = sampler;
  cfg.iterations = 3000;  // 2000 retained draws after 1000 burn-in
  cfg.burn_in = 1000;
  cfg.thin = 1;
  cfg.seed = seed;
  return cfg;
}

template <typename Work>
void parallel_reps(long reps, int threads, Work&& work) {
  std::atomic<long> next{0};
  const auto runner = [&]() {
    for (;;) {
      const long r = next.fetch_add(1);
      if (r >= reps) return;
      work(r);
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < std::max(1, threads); ++t) pool.emplace_back(runner);
  for (auto& t : pool) t.join();
}

// 1. BGC and the spatial code path with H fixed at the identity give the
//    same posterior medians (mean absolute difference below 0.02 across 30
//    replications of n=100, p=4; independently seeded chains).
void criterion_1() {
  Timer timer;
  const long reps = 30;
  std::vector<double> mean_abs_diff(reps, 0.0);
  parallel_reps(reps, 2, [&](long rep) {
    ScenarioSpec sc = default_scenario(100, 4, 0.0);  // independent sites
    sc.seed = 1000 + static_cast<std::uint64_t>(rep);
    Rng rng(sc.seed);
    const SyntheticDataset data = generate(sc, rng);

    ChainConfig bgc = simulation_protocol(SamplerKind::bgc, 2 * sc.seed + 1);
    ChainConfig sp = simulation_protocol(SamplerKind::spbgc, 2 * sc.seed + 2);
    sp.fix_identity_spatial = true;
    const PosteriorDraws d_bgc = run_chain(data.y, data.locs, PriorConfig{}, bgc);
    const PosteriorDraws d_sp = run_chain(data.y, data.locs, PriorConfig{}, sp);
    const Matrixd m_bgc = posterior_median_matrix(d_bgc);
    const Matrixd m_sp = posterior_median_matrix(d_sp);
    double acc = 0.0;
    for (Index j = 0; j < 4; ++j)
      for (Index k = j + 1; k < 4; ++k) acc += std::abs(m_bgc(j, k) - m_sp(j, k));
    mean_abs_diff[static_cast<std::size_t>(rep)] = acc / pair_count(4);
  });
  double overall = 0.0;
  for (double d : mean_abs_diff) overall += d;
  overall /= static_cast<double>(reps);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "independence reduction: mean |median difference| = %.4f (< 0.02)", overall);
  report(1, overall < 0.02, buf, timer.seconds());
}

// 2. Nearest-neighbor factorization is exact at m = n-1: joint log-density
//    equals the explicit Kronecker construction and sum log F telescopes to
//    logdet H (n=20, p=3, 1e-8).
void criterion_2() {
  Timer timer;
  Rng rng(2025);
  const Index n = 20, p = 3;
  const LocationSet locs = random_locations(n, rng);
  const CorrelationFunction corr{CorrelationKind::exponential, 0.4};
  const NeighborGraph graph = build_neighbor_graph(locs, n - 1, corr);
  const Matrixd r = random_correlation(p, rng);
  const Matrixd z = random_matrix(n, p, rng);

  const double nngp = nngp_joint_logpdf(z, graph, r);
  const Matrixd h = build_H(locs, corr);
  const Matrixd kron = kronecker(h, r);
  const Vectord x = stack_rows(z);
  const double dense = -0.5 * (static_cast<double>(n * p) * std::log(2.0 * M_PI) +
                               std::log(kron.determinant()) + x.dot(kron.inverse() * x));
  const double density_err = std::abs(nngp - dense);

  const double telescoped = graph.residual_var.array().log().sum();
  const double logdet_err = std::abs(telescoped - cholesky(h).log_det);

  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "NNGP exactness at m=n-1: |logpdf diff| = %.2e, |logdet diff| = %.2e (< 1e-8)",
                density_err, logdet_err);
  report(2, density_err < 1e-8 && logdet_err < 1e-8, buf, timer.seconds());
}

// 3. Scaled reproduction of the weak-correlation grid cell (n=50, p=6,
//    phi=0.05, 50 replications): mean log(MSE) within 0.3 of the reference
//    values -3.939 (spbgc) and -3.861 (bgc).
void criterion_3() {
  Timer timer;
  SimulationPlan plan;
  plan.scenario = default_scenario(50, 6, 0.05);
  plan.scenario.replications = 50;
  plan.scenario.seed = 30;
  plan.methods = {SamplerKind::bgc, SamplerKind::spbgc};
  plan.chain = simulation_protocol(SamplerKind::bgc, 0);
  plan.threads = 2;
  const SimulationReport rep = run_simulation(plan);
  double bgc = 0.0, sp = 0.0;
  for (const auto& a : rep.aggregates) {
    if (a.method == SamplerKind::bgc) bgc = a.mean_log_mse;
    if (a.method == SamplerKind::spbgc) sp = a.mean_log_mse;
  }
  const bool pass = std::abs(sp - (-3.939)) <= 0.3 && std::abs(bgc - (-3.861)) <= 0.3;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "weak-correlation log(MSE): spbgc = %.3f (ref -3.939 +/- 0.3), bgc = %.3f "
                "(ref -3.861 +/- 0.3)",
                sp, bgc);
  report(3, pass, buf, timer.seconds());
}

// 4. Coverage gap at strong spatial correlation (n=50, p=6, phi=0.50, 50
//    replications): hard condition CP(spbgc) - CP(bgc) >= 0.10; the absolute
//    bands are soft targets at this replication count.
void criterion_4() {
  Timer timer;
  SimulationPlan plan;
  plan.scenario = default_scenario(50, 6, 0.50);
  plan.scenario.replications = 50;
  plan.scenario.seed = 40;
  plan.methods = {SamplerKind::bgc, SamplerKind::spbgc};
  plan.chain = simulation_protocol(SamplerKind::bgc, 0);
  plan.threads = 2;
  const SimulationReport rep = run_simulation(plan);
  double bgc = 0.0, sp = 0.0;
  for (const auto& a : rep.aggregates) {
    if (a.method == SamplerKind::bgc) bgc = a.mean_cp;
    if (a.method == SamplerKind::spbgc) sp = a.mean_cp;
  }
  const double gap = sp - bgc;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "coverage gap: CP(spbgc) = %.3f, CP(bgc) = %.3f, gap = %.3f (>= 0.10)", sp,
                bgc, gap);
  report(4, gap >= 0.10, buf, timer.seconds());
  info(std::string("soft target CP(spbgc) in [0.90, 0.98] (ref 0.944): ") +
       (sp >= 0.90 && sp <= 0.98 ? "met" : "missed"));
  info(std::string("soft target CP(bgc) < 0.85 (ref 0.722): ") +
       (bgc < 0.85 ? "met" : "missed"));
}

// 5. Qualitative interval behavior on one strongly correlated dataset
//    (n=300, four mixed outcomes, phi=0.5): the spatial sampler's 95%
//    intervals cover at least 5 of the 6 true pairwise correlations, the
//    independence sampler's at most 3.
void criterion_5() {
  Timer timer;
  ScenarioSpec sc = default_scenario(300, 4, 0.5);
  sc.seed = 50;
  Rng rng(sc.seed);
  const SyntheticDataset data = generate(sc, rng);
  const Matrixd truth = sc.correlation_matrix();

  const auto covered = [&](const PosteriorDraws& draws) {
    const auto [lo, hi] = credible_interval_matrices(draws);
    int count = 0;
    for (Index j = 0; j < 4; ++j)
      for (Index k = j + 1; k < 4; ++k)
        if (truth(j, k) >= lo(j, k) && truth(j, k) <= hi(j, k)) ++count;
    return count;
  };
  const PosteriorDraws d_sp = run_chain(
      data.y, data.locs, PriorConfig{}, simulation_protocol(SamplerKind::spbgc, 51));
  const PosteriorDraws d_bgc = run_chain(
      data.y, data.locs, PriorConfig{}, simulation_protocol(SamplerKind::bgc, 52));
  const int c_sp = covered(d_sp);
  const int c_bgc = covered(d_bgc);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "interval coverage of 6 true pairs: spbgc = %d (>= 5), bgc = %d (<= 3)", c_sp,
                c_bgc);
  report(5, c_sp >= 5 && c_bgc <= 3, buf, timer.seconds());
}

// 6. Performance ordering at n=500, p=6 with the simulation protocol: the
//    nearest-neighbor chain finishes in at most 0.7x the full-GP wall clock
//    (reference ratio about 0.54). Absolute seconds are machine-dependent.
void criterion_6() {
  Timer timer;
  ScenarioSpec sc = default_scenario(500, 6, 0.05);
  sc.seed = 60;
  Rng rng(sc.seed);
  const SyntheticDataset data = generate(sc, rng);

  ChainConfig full = simulation_protocol(SamplerKind::spbgc, 61);
  ChainConfig nngp = simulation_protocol(SamplerKind::spbgc_nngp, 62);
  nngp.m = 15;
  const PosteriorDraws d_full = run_chain(data.y, data.locs, PriorConfig{}, full);
  const PosteriorDraws d_nngp = run_chain(data.y, data.locs, PriorConfig{}, nngp);
  const double t_full = d_full.timings.total_seconds;
  const double t_nngp = d_nngp.timings.total_seconds;
  const double ratio = t_nngp / t_full;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "wall clock at n=500: nngp = %.1fs, full = %.1fs, ratio = %.3f (<= 0.7)",
                t_nngp, t_full, ratio);
  const bool ok = !d_full.aborted && !d_nngp.aborted && ratio <= 0.7;
  report(6, ok, buf, timer.seconds());
}

// 7. Kernel-level statistical oracles: half-normal mean within 3 Monte-Carlo
//    standard errors, inverse-Wishart mean within 3 MC standard errors, and
//    random-walk MH variance on a standard-normal target within 5%.
void criterion_7() {
  Timer timer;
  bool pass = true;
  std::string detail;

  {
    Rng rng(701);
    TruncationBox box{Vectord::Constant(1, 0.0), Vectord::Constant(1, kInf)};
    const int n = 50000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i)
      sum += sample_tmvn(Vectord::Zero(1), Matrixd::Identity(1, 1), box, rng)[0];
    const double mean = sum / n;
    const double target = std::sqrt(2.0 / M_PI);
    const double se = std::sqrt(1.0 - 2.0 / M_PI) / std::sqrt(double(n));
    const bool ok = std::abs(mean - target) < 3.0 * se;
    pass = pass && ok;
    char buf[120];
    std::snprintf(buf, sizeof(buf), "tmvn half-normal mean %.4f vs %.4f (3se = %.4f)", mean,
                  target, 3.0 * se);
    detail += buf;
  }
  {
    Rng rng(703);
    const int n = 50000;
    Matrixd sum = Matrixd::Zero(2, 2);
    for (int i = 0; i < n; ++i)
      sum += sample_inverse_wishart(10.0, 7.0 * Matrixd::Identity(2, 2), rng);
    const Matrixd mean = sum / n;
    const double se = std::sqrt(2.0 * 49.0 / (49.0 * 5.0)) / std::sqrt(double(n));
    const bool ok = std::abs(mean(0, 0) - 1.0) < 3.0 * se &&
                    std::abs(mean(1, 1) - 1.0) < 3.0 * se &&
                    std::abs(mean(0, 1)) < 3.0 * se;
    pass = pass && ok;
    char buf[120];
    std::snprintf(buf, sizeof(buf), "; IW mean diag (%.4f, %.4f) vs 1 (3se = %.4f)",
                  mean(0, 0), mean(1, 1), 3.0 * se);
    detail += buf;
  }
  {
    Rng rng(709);
    RwmhState st{0.0, 2.4};
    const auto target = [](double x) { return -0.5 * x * x; };
    for (int i = 0; i < 2000; ++i) st = rwmh_step(st, target, rng);
    const int n = 200000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
      st = rwmh_step(st, target, rng);
      sum += st.current;
      sum2 += st.current * st.current;
    }
    const double var = sum2 / n - (sum / n) * (sum / n);
    const bool ok = std::abs(var - 1.0) < 0.05;
    pass = pass && ok;
    char buf[80];
    std::snprintf(buf, sizeof(buf), "; RWMH variance %.4f vs 1 (5%%)", var);
    detail += buf;
  }
  report(7, pass, detail, timer.seconds());
}

// 8. Rank-likelihood invariance: exponentiating every continuous column
//    leaves all stored correlation draws bitwise identical under a fixed
//    seed.
void criterion_8() {
  Timer timer;
  ScenarioSpec sc = default_scenario(40, 6, 0.4);
  sc.seed = 80;
  Rng rng(sc.seed);
  const SyntheticDataset data = generate(sc, rng);
  MixedOutcomeMatrix transformed = data.y;
  int transformed_cols = 0;
  for (Index j = 0; j < transformed.cols(); ++j)
    if (transformed.column_kind[static_cast<std::size_t>(j)] == ColumnKind::continuous) {
      transformed.values.col(j) = transformed.values.col(j).array().exp().matrix();
      ++transformed_cols;
    }

  ChainConfig cfg = simulation_protocol(SamplerKind::spbgc, 81);
  cfg.iterations = 400;
  cfg.burn_in = 100;
  const PosteriorDraws a = run_chain(data.y, data.locs, PriorConfig{}, cfg);
  const PosteriorDraws b = run_chain(transformed, data.locs, PriorConfig{}, cfg);
  const bool identical = a.stored() == b.stored() &&
                         (a.r_draws.array() == b.r_draws.array()).all() &&
                         (a.phi_draws.array() == b.phi_draws.array()).all();
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "exp() on %d continuous columns: %td draws bitwise identical = %s",
                transformed_cols, a.stored(), identical ? "yes" : "no");
  report(8, identical, buf, timer.seconds());
}

// 9. The precision-matrix shortcut for the full-GP site conditionals equals
//    the Schur-complement moments within 1e-10 on 1000 random n=8 instances.
void criterion_9() {
  Timer timer;
  Rng rng(900);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Index n = 8, p = 2;
    const LocationSet locs = random_locations(n, rng);
    const CorrelationFunction corr{CorrelationKind::exponential,
                                   0.1 + 0.9 * rng.uniform()};
    const Matrixd h = build_H(locs, corr);
    const Matrixd q = cholesky(h).inverse();
    const Matrixd z = random_matrix(n, p, rng);
    const Index i = static_cast<Index>(std::floor(rng.uniform() * n));
    const auto [mu, scale] = full_conditional_moments(q, z, i);
    IndexVector given;
    for (Index k = 0; k < n; ++k)
      if (k != i) given.push_back(k);
    for (Index j = 0; j < p; ++j) {
      Vectord gv(n - 1);
      for (Index k = 0; k < n - 1; ++k) gv[k] = z(given[static_cast<std::size_t>(k)], j);
      const auto cond = conditional_normal(h, {i}, given, gv);
      worst = std::max(worst, std::abs(mu[j] - cond.mean[0]));
      worst = std::max(worst, std::abs(scale - cond.cov(0, 0)));
    }
  }
  char buf[120];
  std::snprintf(buf, sizeof(buf),
                "precision-trick vs Schur moments: worst |diff| = %.2e (< 1e-10)", worst);
  report(9, worst < 1e-10, buf, timer.seconds());
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int a = 1; a < argc; ++a) selected.insert(std::atoi(argv[a]));
  const auto want = [&](int c) { return selected.empty() || selected.count(c) > 0; };

  if (want(1)) criterion_1();
  if (want(2)) criterion_2();
  if (want(3)) criterion_3();
  if (want(4)) criterion_4();
  if (want(5)) criterion_5();
  if (want(6)) criterion_6();
  if (want(7)) criterion_7();
  if (want(8)) criterion_8();
  if (want(9)) criterion_9();

  if (failures == 0)
    std::printf("all selected criteria passed\n");
  else
    std::printf("%d criterion(s) failed\n", failures);
  return failures;
}
