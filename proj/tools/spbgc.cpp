#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "spbgc/harness.hpp"

namespace fs = std::filesystem;
using namespace spbgc;

namespace {

std::vector<std::pair<std::string, ColumnKind>> parse_column_spec(const std::string& spec) {
  std::vector<std::pair<std::string, ColumnKind>> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos)
      throw ParseError("column spec entries look like name:kind, got '" + item + "'");
    out.emplace_back(trim(item.substr(0, colon)),
                     parse_column_kind(trim(item.substr(colon + 1))));
  }
  if (out.empty()) throw ParseError("empty column spec");
  return out;
}

SimulationPlan plan_from_json(const json& j) {
  SimulationPlan plan;
  plan.scenario = scenario_from_json(j);
  if (j.contains("methods")) {
    plan.methods.clear();
    for (const auto& m : j.at("methods"))
      plan.methods.push_back(parse_sampler(m.get<std::string>()));
  }
  if (j.contains("chain")) plan.chain = chain_from_json(j.at("chain"));
  if (j.contains("prior")) plan.prior = prior_from_json(j.at("prior"));
  if (j.contains("threads")) plan.threads = j.at("threads").get<int>();
  return plan;
}

void print_summary(const SummaryTable& table) {
  std::printf("%-8s %12s %12s %12s   %12s %12s %12s\n", "pair", "corr 2.5%", "corr 50%",
              "corr 97.5%", "pcor 2.5%", "pcor 50%", "pcor 97.5%");
  for (std::size_t t = 0; t < table.correlations.size(); ++t) {
    const auto& c = table.correlations[t];
    const auto& pc = table.partials[t];
    std::printf("%-8s %12.4f %12.4f %12.4f   %12.4f %12.4f %12.4f\n",
                pair_label(c.j, c.k).c_str(), c.lo, c.median, c.hi, pc.lo, pc.median, pc.hi);
  }
}

int cmd_fit(const RunConfig& cfg) {
  const FitArtifacts art = run_fit(cfg);
  for (const auto& w : art.draws.warnings) std::cerr << "warning: " << w << '\n';
  std::printf("sampler=%s n=%td p=%td stored=%td phi_acceptance=%.3f total=%.2fs\n",
              to_string(art.draws.sampler).c_str(), art.draws.n, art.draws.p,
              art.draws.stored(), art.draws.phi_acceptance,
              art.draws.timings.total_seconds);
  if (art.draws.stored() >= 2) print_summary(art.summary);
  std::printf("artifacts written to %s (config digest %s)\n", cfg.output.c_str(),
              art.digest.c_str());
  if (art.draws.aborted) {
    json err{{"error", "ChainAborted"},
             {"message", art.draws.error},
             {"stored_draws", art.draws.stored()},
             {"output", cfg.output}};
    std::cerr << err.dump() << '\n';
    return 2;
  }
  return 0;
}

int cmd_generate(const ScenarioSpec& scenario, const std::string& out_dir, bool with_latent) {
  Rng rng(scenario.seed);
  const SyntheticDataset data = generate(scenario, rng);
  fs::create_directories(out_dir);
  const fs::path out(out_dir);

  std::vector<std::string> names;
  for (Index j = 0; j < scenario.p; ++j) names.push_back("y" + std::to_string(j + 1));
  write_dataset_csv((out / "data.csv").string(), data.y, &data.locs, names);

  const Matrixd truth = scenario.correlation_matrix();
  json truth_json{{"phi", scenario.phi}, {"correlation", to_string(scenario.correlation)}};
  json r_rows = json::array();
  for (Index j = 0; j < truth.rows(); ++j) {
    json row = json::array();
    for (Index k = 0; k < truth.cols(); ++k) row.push_back(truth(j, k));
    r_rows.push_back(row);
  }
  truth_json["R"] = r_rows;
  json cols = json::object();
  for (Index j = 0; j < scenario.p; ++j)
    cols[names[static_cast<std::size_t>(j)]] =
        to_string(data.y.column_kind[static_cast<std::size_t>(j)]);
  truth_json["columns"] = cols;
  {
    std::ofstream f(out / "truth.json");
    f << truth_json.dump(2) << '\n';
  }
  {
    std::ofstream f(out / "scenario_resolved.json");
    f << scenario_to_json(scenario).dump(2) << '\n';
  }
  if (with_latent) {
    std::ofstream f(out / "z_true.csv");
    for (Index j = 0; j < scenario.p; ++j) f << (j ? "," : "") << "z" << (j + 1);
    f << '\n';
    for (Index i = 0; i < scenario.n; ++i) {
      for (Index j = 0; j < scenario.p; ++j)
        f << (j ? "," : "") << format_double(data.z_true(i, j));
      f << '\n';
    }
  }
  std::printf("generated n=%td p=%td phi=%g into %s\n", scenario.n, scenario.p, scenario.phi,
              out_dir.c_str());
  return 0;
}

int cmd_simulate(const SimulationPlan& plan, const std::string& out_dir) {
  const SimulationReport report = run_simulation(plan, out_dir);
  long failed = 0;
  for (const auto& r : report.rows)
    if (!r.ok) {
      ++failed;
      std::cerr << "replication " << r.replication << " (" << to_string(r.method)
                << ") failed: " << r.error << '\n';
    }
  std::printf("%-12s %4s %4s %14s %10s %10s %12s\n", "method", "ok", "fail", "mean log(MSE)",
              "mean CP", "mean AL", "mean seconds");
  for (const auto& a : report.aggregates)
    std::printf("%-12s %4ld %4ld %14.3f %10.3f %10.3f %12.2f\n", to_string(a.method).c_str(),
                a.ok, a.failed, a.mean_log_mse, a.mean_cp, a.mean_al, a.mean_seconds);
  if (!out_dir.empty()) std::printf("report written to %s\n", out_dir.c_str());
  return failed == 0 ? 0 : 3;
}

int cmd_summarize(const std::vector<std::string>& archives, const std::string& out_dir) {
  std::string digest;
  const PosteriorDraws draws = concat_archives(archives, &digest);
  const SummaryTable table = summarize_draws(draws);
  print_summary(table);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    const fs::path out(out_dir);
    write_summary_csv((out / "summary_correlations.csv").string(), table.correlations,
                      digest);
    write_summary_csv((out / "summary_partial_correlations.csv").string(), table.partials,
                      digest);
    write_acf_csv((out / "acf.csv").string(), draws, 50, digest);
    std::printf("summaries written to %s\n", out_dir.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian Gaussian copula inference for spatially correlated mixed outcomes"};
  app.require_subcommand(1);

  // fit -----------------------------------------------------------------
  auto* fit = app.add_subcommand("fit", "Run a sampler on a CSV dataset");
  std::string fit_config, fit_input, fit_output, fit_columns, fit_sampler, fit_correlation,
      fit_ordering;
  std::vector<std::string> fit_loc_cols;
  long fit_iterations = 0, fit_burn_in = -1, fit_thin = 0;
  std::uint64_t fit_seed = 0;
  Index fit_m = 0;
  double fit_phi_min = 0.0, fit_phi_max = 0.0, fit_v0 = 0.0;
  fit->add_option("--config", fit_config, "JSON run configuration (spbgc-config-v1)");
  fit->add_option("--input", fit_input, "CSV dataset path");
  fit->add_option("--output", fit_output, "artifact directory");
  fit->add_option("--columns", fit_columns,
                  "outcome columns as name:kind[,name:kind...] "
                  "(kinds: continuous,count,binary,ordinal)");
  fit->add_option("--location-columns", fit_loc_cols, "two location column names")
      ->expected(2);
  fit->add_option("--sampler", fit_sampler, "bgc | spbgc | spbgc_nngp");
  fit->add_option("--iterations", fit_iterations, "total MCMC iterations");
  fit->add_option("--burn-in", fit_burn_in, "discarded initial iterations");
  fit->add_option("--thin", fit_thin, "keep every thin-th post-burn-in draw");
  fit->add_option("--seed", fit_seed, "RNG seed");
  fit->add_option("--m", fit_m, "neighbor budget (spbgc_nngp)");
  fit->add_option("--correlation", fit_correlation, "exponential | gaussian");
  fit->add_option("--ordering", fit_ordering, "input | maxmin");
  fit->add_option("--phi-min", fit_phi_min, "lower bound of the uniform range prior");
  fit->add_option("--phi-max", fit_phi_max, "upper bound of the uniform range prior");
  fit->add_option("--v0", fit_v0, "prior degrees of freedom (default p+2)");

  // generate ------------------------------------------------------------
  auto* gen = app.add_subcommand("generate", "Draw a synthetic dataset from a scenario");
  std::string gen_scenario, gen_out = "generated";
  Index gen_n = 50, gen_p = 6;
  double gen_phi = 0.25;
  std::uint64_t gen_seed = 0;
  bool gen_latent = false;
  gen->add_option("--scenario", gen_scenario, "scenario JSON (spbgc-scenario-v1)");
  gen->add_option("--n", gen_n, "sites (used when no scenario file is given)");
  gen->add_option("--p", gen_p, "outcomes (used when no scenario file is given)");
  gen->add_option("--phi", gen_phi, "spatial range (used when no scenario file is given)");
  gen->add_option("--seed", gen_seed, "seed override");
  gen->add_option("--out", gen_out, "output directory");
  gen->add_flag("--with-latent", gen_latent, "also write the latent matrix");

  // simulate ------------------------------------------------------------
  auto* sim = app.add_subcommand("simulate", "Replicate generate+fit+metrics for a scenario");
  std::string sim_scenario, sim_out = "simulation";
  std::string sim_methods;
  long sim_reps = 0, sim_iterations = 0, sim_burn_in = -1, sim_thin = 0;
  std::uint64_t sim_seed = 0;
  Index sim_m = 0;
  int sim_threads = 0;
  sim->add_option("--scenario", sim_scenario, "scenario JSON (spbgc-scenario-v1)")
      ->required();
  sim->add_option("--out", sim_out, "report directory");
  sim->add_option("--methods", sim_methods, "comma list of bgc,spbgc,spbgc_nngp");
  sim->add_option("--replications", sim_reps, "replication count override");
  sim->add_option("--iterations", sim_iterations, "chain iterations override");
  sim->add_option("--burn-in", sim_burn_in, "burn-in override");
  sim->add_option("--thin", sim_thin, "thinning override");
  sim->add_option("--seed", sim_seed, "scenario seed override");
  sim->add_option("--m", sim_m, "neighbor budget override");
  sim->add_option("--threads", sim_threads, "worker threads (0 = all cores)");

  // summarize -----------------------------------------------------------
  auto* sum = app.add_subcommand("summarize", "Summarize one or more draw archives");
  std::vector<std::string> sum_archives;
  std::string sum_out;
  sum->add_option("--draws", sum_archives, "draw archive(s); digests must match")
      ->required();
  sum->add_option("--out", sum_out, "output directory for summary files");

  CLI11_PARSE(app, argc, argv);

  try {
    if (fit->parsed()) {
      RunConfig cfg;
      cfg.chain.iterations = 25000;  // real-data default protocol
      cfg.chain.burn_in = 5000;
      cfg.chain.thin = 10;
      if (!fit_config.empty()) cfg = run_config_from_json(load_json_file(fit_config), cfg);
      if (!fit_input.empty()) cfg.input = fit_input;
      if (!fit_output.empty()) cfg.output = fit_output;
      if (!fit_columns.empty()) cfg.columns = parse_column_spec(fit_columns);
      if (!fit_loc_cols.empty()) cfg.location_columns = fit_loc_cols;
      if (!fit_sampler.empty()) cfg.chain.sampler = parse_sampler(fit_sampler);
      if (fit_iterations > 0) cfg.chain.iterations = fit_iterations;
      if (fit_burn_in >= 0) cfg.chain.burn_in = fit_burn_in;
      if (fit_thin > 0) cfg.chain.thin = fit_thin;
      if (fit->count("--seed")) cfg.chain.seed = fit_seed;
      if (fit_m > 0) cfg.chain.m = fit_m;
      if (!fit_correlation.empty())
        cfg.chain.correlation = parse_correlation_kind(fit_correlation);
      if (!fit_ordering.empty()) cfg.chain.ordering = parse_ordering_kind(fit_ordering);
      if (fit_phi_min > 0.0) cfg.prior.phi_min = fit_phi_min;
      if (fit_phi_max > 0.0) cfg.prior.phi_max = fit_phi_max;
      if (fit_v0 > 0.0) cfg.prior.v0 = fit_v0;
      if (cfg.input.empty()) throw ParseError("fit needs --input or a config with one");
      if (cfg.columns.empty()) throw ParseError("fit needs --columns or a config with them");
      return cmd_fit(cfg);
    }
    if (gen->parsed()) {
      ScenarioSpec scenario;
      if (!gen_scenario.empty())
        scenario = scenario_from_json(load_json_file(gen_scenario));
      else
        scenario = default_scenario(gen_n, gen_p, gen_phi);
      if (gen->count("--seed")) scenario.seed = gen_seed;
      return cmd_generate(scenario, gen_out, gen_latent);
    }
    if (sim->parsed()) {
      SimulationPlan plan = plan_from_json(load_json_file(sim_scenario));
      if (!sim_methods.empty()) {
        plan.methods.clear();
        std::stringstream ss(sim_methods);
        std::string item;
        while (std::getline(ss, item, ',')) plan.methods.push_back(parse_sampler(trim(item)));
      }
      if (sim_reps > 0) plan.scenario.replications = sim_reps;
      if (sim_iterations > 0) plan.chain.iterations = sim_iterations;
      if (sim_burn_in >= 0) plan.chain.burn_in = sim_burn_in;
      if (sim_thin > 0) plan.chain.thin = sim_thin;
      if (sim->count("--seed")) plan.scenario.seed = sim_seed;
      if (sim_m > 0) plan.chain.m = sim_m;
      if (sim_threads > 0) plan.threads = sim_threads;
      return cmd_simulate(plan, sim_out);
    }
    if (sum->parsed()) return cmd_summarize(sum_archives, sum_out);
  } catch (const std::exception& e) {
    const char* type = "Error";
    if (dynamic_cast<const ParseError*>(&e)) type = "ParseError";
    else if (dynamic_cast<const KindMismatch*>(&e)) type = "KindMismatch";
    else if (dynamic_cast<const NotPositiveDefinite*>(&e)) type = "NotPositiveDefinite";
    else if (dynamic_cast<const ShapeMismatch*>(&e)) type = "ShapeMismatch";
    json err{{"error", type}, {"message", e.what()}};
    std::cerr << err.dump() << '\n';
    return 1;
  }
  return 0;
}
