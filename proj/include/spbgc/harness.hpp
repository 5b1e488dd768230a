#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "spbgc/io.hpp"
#include "spbgc/mcmc.hpp"
#include "spbgc/metrics.hpp"
#include "spbgc/synthetic.hpp"

namespace spbgc {

struct FitArtifacts {
  PosteriorDraws draws;
  SummaryTable summary;
  std::string digest;
};

/// Fits one dataset end to end and persists the artifacts: draw archive,
/// correlation / partial-correlation summary tables, per-pair ACF traces,
/// and a timing report. A chain abort still writes the partial archive,
/// flagged in its header.
inline FitArtifacts run_fit(const RunConfig& cfg) {
  const LoadedData data = load_csv(cfg.input, cfg);
  if (cfg.chain.sampler != SamplerKind::bgc && !data.has_locations)
    throw ParseError("spatial samplers need exactly two location columns in the data");

  FitArtifacts art;
  art.digest = cfg.digest();
  art.draws = run_chain(data.y, data.locs, cfg.prior, cfg.chain);

  namespace fs = std::filesystem;
  fs::create_directories(cfg.output);
  const fs::path out(cfg.output);
  write_draw_archive((out / "draws.csv").string(), art.draws, art.digest);
  {
    std::ofstream cfg_out(out / "config_resolved.json");
    cfg_out << run_config_to_json(cfg).dump(2) << '\n';
  }
  if (art.draws.stored() >= 2) {
    art.summary = summarize_draws(art.draws);
    write_summary_csv((out / "summary_correlations.csv").string(), art.summary.correlations,
                      art.digest);
    write_summary_csv((out / "summary_partial_correlations.csv").string(),
                      art.summary.partials, art.digest);
    write_acf_csv((out / "acf.csv").string(), art.draws, 50, art.digest);
  }
  {
    json t{{"config_digest", art.digest},
           {"sampler", to_string(art.draws.sampler)},
           {"seed", art.draws.seed},
           {"aborted", art.draws.aborted},
           {"error", art.draws.error},
           {"warnings", art.draws.warnings},
           {"phi_acceptance", art.draws.phi_acceptance},
           {"stored_draws", art.draws.stored()},
           {"seconds",
            {{"z_update", art.draws.timings.z_seconds},
             {"r_update", art.draws.timings.r_seconds},
             {"phi_update", art.draws.timings.phi_seconds},
             {"setup", art.draws.timings.setup_seconds},
             {"total", art.draws.timings.total_seconds}}}};
    std::ofstream t_out(out / "timings.json");
    t_out << t.dump(2) << '\n';
  }
  return art;
}

// ---------------------------------------------------------------------------
// simulation study harness

struct ReplicationMetrics {
  long replication = 0;
  SamplerKind method = SamplerKind::bgc;
  std::uint64_t chain_seed = 0;
  bool ok = false;
  std::string error;
  double mse_value = 0.0, log_mse = 0.0, cp = 0.0, al = 0.0;
  double seconds = 0.0, phi_acceptance = 0.0;
};

struct MethodAggregate {
  SamplerKind method = SamplerKind::bgc;
  long ok = 0, failed = 0;
  double mean_log_mse = 0.0, se_log_mse = 0.0;
  double mean_cp = 0.0, se_cp = 0.0;
  double mean_al = 0.0, se_al = 0.0;
  double mean_seconds = 0.0, se_seconds = 0.0;
};

struct SimulationPlan {
  ScenarioSpec scenario;
  std::vector<SamplerKind> methods{SamplerKind::bgc, SamplerKind::spbgc,
                                   SamplerKind::spbgc_nngp};
  ChainConfig chain;   // protocol; sampler and seed are set per run
  PriorConfig prior;
  int threads = 0;     // 0 = hardware concurrency
};

struct SimulationReport {
  std::vector<ReplicationMetrics> rows;  // replication-major, method-minor
  std::vector<MethodAggregate> aggregates;
  Matrixd truth;
  long replications = 0;
};

inline std::string scenario_label(const ScenarioSpec& s) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "n%td_p%td_phi%g", s.n, s.p, s.phi);
  return buf;
}

inline std::string csv_safe(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '"' || c == '\n') c = ';';
  return s;
}

namespace detail {

inline void mean_se(const std::vector<double>& xs, double& mean, double& se) {
  const std::size_t k = xs.size();
  if (k == 0) {
    mean = se = 0.0;
    return;
  }
  double s = 0.0;
  for (double x : xs) s += x;
  mean = s / static_cast<double>(k);
  if (k < 2) {
    se = 0.0;
    return;
  }
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  se = std::sqrt(ss / static_cast<double>(k - 1) / static_cast<double>(k));
}

}  // namespace detail

/// Per-replication seeds derive from the scenario seed: the data stream uses
/// seed + r, the chain for method index k uses (seed + r) * 1000 + k, so
/// results do not depend on thread scheduling.
inline SimulationReport run_simulation(const SimulationPlan& plan,
                                       const std::string& out_dir = "") {
  const long reps = plan.scenario.replications;
  const std::size_t n_methods = plan.methods.size();
  SimulationReport report;
  report.truth = plan.scenario.correlation_matrix();
  report.replications = reps;
  report.rows.resize(static_cast<std::size_t>(reps) * n_methods);

  std::atomic<long> next_rep{0};
  const auto worker = [&]() {
    for (;;) {
      const long rep = next_rep.fetch_add(1);
      if (rep >= reps) return;
      Rng data_rng(plan.scenario.seed + static_cast<std::uint64_t>(rep));
      SyntheticDataset data;
      bool data_ok = true;
      std::string data_err;
      try {
        data = generate(plan.scenario, data_rng);
      } catch (const std::exception& e) {
        data_ok = false;
        data_err = e.what();
      }
      for (std::size_t mi = 0; mi < n_methods; ++mi) {
        ReplicationMetrics& row =
            report.rows[static_cast<std::size_t>(rep) * n_methods + mi];
        row.replication = rep;
        row.method = plan.methods[mi];
        row.chain_seed =
            (plan.scenario.seed + static_cast<std::uint64_t>(rep)) * 1000 +
            static_cast<std::uint64_t>(mi);
        if (!data_ok) {
          row.ok = false;
          row.error = data_err;
          continue;
        }
        ChainConfig cc = plan.chain;
        cc.sampler = plan.methods[mi];
        cc.seed = row.chain_seed;
        try {
          const PosteriorDraws draws = run_chain(data.y, data.locs, plan.prior, cc);
          if (draws.aborted) {
            row.ok = false;
            row.error = draws.error;
            continue;
          }
          const Matrixd median = posterior_median_matrix(draws);
          const auto [lo, hi] = credible_interval_matrices(draws);
          row.mse_value = mse(median, report.truth);
          row.log_mse = std::log(row.mse_value);
          const auto [cp, al] = coverage_and_length(lo, hi, report.truth);
          row.cp = cp;
          row.al = al;
          row.seconds = draws.timings.total_seconds;
          row.phi_acceptance = draws.phi_acceptance;
          row.ok = true;
        } catch (const std::exception& e) {
          row.ok = false;
          row.error = e.what();
        }
      }
    }
  };

  int threads = plan.threads > 0 ? plan.threads
                                 : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min<int>(threads, static_cast<int>(reps)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (SamplerKind method : plan.methods) {
    MethodAggregate agg;
    agg.method = method;
    std::vector<double> log_mses, cps, als, secs;
    for (const auto& row : report.rows) {
      if (row.method != method) continue;
      if (!row.ok) {
        ++agg.failed;
        continue;
      }
      ++agg.ok;
      log_mses.push_back(row.log_mse);
      cps.push_back(row.cp);
      als.push_back(row.al);
      secs.push_back(row.seconds);
    }
    detail::mean_se(log_mses, agg.mean_log_mse, agg.se_log_mse);
    detail::mean_se(cps, agg.mean_cp, agg.se_cp);
    detail::mean_se(als, agg.mean_al, agg.se_al);
    detail::mean_se(secs, agg.mean_seconds, agg.se_seconds);
    report.aggregates.push_back(agg);
  }

  if (!out_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const fs::path out(out_dir);
    const std::string label = scenario_label(plan.scenario);
    const std::string digest = fnv1a_hex(scenario_to_json(plan.scenario).dump());
    {
      std::ofstream f(out / "replication_metrics.csv");
      f << "#scenario_digest=" << digest << '\n';
      f << "scenario,method,replication,chain_seed,status,error,mse,log_mse,cp,al,seconds,"
           "phi_acceptance\n";
      for (const auto& r : report.rows) {
        f << label << ',' << to_string(r.method) << ',' << r.replication << ','
          << r.chain_seed << ',' << (r.ok ? "ok" : "failed") << ','
          << '"' << csv_safe(r.error) << '"'
          << ',' << format_double(r.mse_value) << ',' << format_double(r.log_mse) << ','
          << format_double(r.cp) << ',' << format_double(r.al) << ','
          << format_double(r.seconds) << ',' << format_double(r.phi_acceptance) << '\n';
      }
    }
    {
      std::ofstream f(out / "simulation_report.csv");
      f << "#scenario_digest=" << digest << '\n';
      f << "scenario,method,replications_ok,replications_failed,mean_log_mse,se_log_mse,"
           "mean_cp,se_cp,mean_al,se_al,mean_seconds,se_seconds\n";
      for (const auto& a : report.aggregates) {
        f << label << ',' << to_string(a.method) << ',' << a.ok << ',' << a.failed << ','
          << format_double(a.mean_log_mse) << ',' << format_double(a.se_log_mse) << ','
          << format_double(a.mean_cp) << ',' << format_double(a.se_cp) << ','
          << format_double(a.mean_al) << ',' << format_double(a.se_al) << ','
          << format_double(a.mean_seconds) << ',' << format_double(a.se_seconds) << '\n';
      }
    }
    {
      std::ofstream f(out / "scenario_resolved.json");
      f << scenario_to_json(plan.scenario).dump(2) << '\n';
    }
  }
  return report;
}

/// Concatenates several draw archives of the same configuration; archives
/// whose config digests disagree refuse to aggregate.
inline PosteriorDraws concat_archives(const std::vector<std::string>& paths,
                                      std::string* digest_out = nullptr) {
  if (paths.empty()) throw ParseError("no archives given");
  std::string digest0;
  PosteriorDraws merged = load_draw_archive(paths[0], &digest0);
  if (digest_out) *digest_out = digest0;
  for (std::size_t i = 1; i < paths.size(); ++i) {
    std::string digest;
    const PosteriorDraws next = load_draw_archive(paths[i], &digest);
    if (digest != digest0)
      throw Error("config digest mismatch: '" + paths[i] + "' was produced by a different "
                  "configuration; refusing to aggregate");
    if (next.p != merged.p || next.n != merged.n)
      throw ShapeMismatch("archive dimensions disagree");
    const Index old = merged.stored();
    merged.r_draws.conservativeResize(old + next.stored(), Eigen::NoChange);
    merged.phi_draws.conservativeResize(old + next.stored());
    merged.r_draws.bottomRows(next.stored()) = next.r_draws;
    merged.phi_draws.tail(next.stored()) = next.phi_draws;
  }
  return merged;
}

}  // namespace spbgc
