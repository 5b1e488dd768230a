#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "spbgc/errors.hpp"
#include "spbgc/mcmc.hpp"
#include "spbgc/metrics.hpp"
#include "spbgc/rank.hpp"
#include "spbgc/spatial.hpp"
#include "spbgc/synthetic.hpp"
#include "spbgc/types.hpp"

namespace spbgc {

using nlohmann::json;

inline constexpr const char* kConfigFormat = "spbgc-config-v1";
inline constexpr const char* kScenarioFormat = "spbgc-scenario-v1";
inline constexpr const char* kDrawsFormat = "spbgc-draws-v1";

// ---------------------------------------------------------------------------
// small formatting / hashing helpers

/// Shortest-exact double formatting: %.17g round-trips bitwise via strtod.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

// ---------------------------------------------------------------------------
// column kinds

inline ColumnKind parse_column_kind(const std::string& s) {
  if (s == "continuous") return ColumnKind::continuous;
  if (s == "count") return ColumnKind::count;
  if (s == "binary") return ColumnKind::binary;
  if (s == "ordinal") return ColumnKind::ordinal;
  throw ParseError("unknown column kind '" + s + "'");
}

inline CorrelationKind parse_correlation_kind(const std::string& s) {
  if (s == "exponential") return CorrelationKind::exponential;
  if (s == "gaussian") return CorrelationKind::gaussian;
  throw ParseError("unknown correlation kind '" + s + "'");
}

inline std::string to_string(CorrelationKind k) {
  return k == CorrelationKind::exponential ? "exponential" : "gaussian";
}

inline OrderingKind parse_ordering_kind(const std::string& s) {
  if (s == "input") return OrderingKind::input;
  if (s == "maxmin") return OrderingKind::maxmin;
  throw ParseError("unknown ordering kind '" + s + "'");
}

inline std::string to_string(OrderingKind k) {
  return k == OrderingKind::input ? "input" : "maxmin";
}

// ---------------------------------------------------------------------------
// run configuration

/// Everything needed to fit one dataset: where the data lives, how columns
/// are typed, priors, and the chain protocol. Serialized as JSON
/// (spbgc-config-v1); the digest covers the statistically meaningful fields
/// (columns, prior, chain protocol) and excludes the seed and file paths so
/// that parallel chains of the same setup aggregate.
struct RunConfig {
  std::string input;
  std::vector<std::string> location_columns = {"x", "y"};
  std::vector<std::pair<std::string, ColumnKind>> columns;  // outcome name -> kind
  PriorConfig prior;
  ChainConfig chain;
  std::string output = "out";

  json digest_fields() const {
    json j;
    j["location_columns"] = location_columns;
    json cols = json::object();
    for (const auto& [name, kind] : columns) cols[name] = to_string(kind);
    j["columns"] = cols;
    j["prior"] = {{"v0", prior.v0},
                  {"phi_min", prior.phi_min},
                  {"phi_max", prior.phi_max}};
    j["chain"] = {{"sampler", to_string(chain.sampler)},
                  {"iterations", chain.iterations},
                  {"burn_in", chain.burn_in},
                  {"thin", chain.thin},
                  {"m", chain.m},
                  {"correlation", to_string(chain.correlation)},
                  {"ordering", to_string(chain.ordering)},
                  {"sample_phi", chain.sample_phi},
                  {"fix_identity_spatial", chain.fix_identity_spatial}};
    return j;
  }

  std::string digest() const { return fnv1a_hex(json{{"format", kConfigFormat},
                                                     {"fields", digest_fields()}}
                                                    .dump()); }
};

inline json chain_to_json(const ChainConfig& c) {
  return json{{"sampler", to_string(c.sampler)},
              {"iterations", c.iterations},
              {"burn_in", c.burn_in},
              {"thin", c.thin},
              {"seed", c.seed},
              {"m", c.m},
              {"correlation", to_string(c.correlation)},
              {"ordering", to_string(c.ordering)},
              {"sample_phi", c.sample_phi},
              {"fix_identity_spatial", c.fix_identity_spatial}};
}

inline ChainConfig chain_from_json(const json& j, ChainConfig c = {}) {
  if (j.contains("sampler")) c.sampler = parse_sampler(j.at("sampler").get<std::string>());
  if (j.contains("iterations")) c.iterations = j.at("iterations").get<long>();
  if (j.contains("burn_in")) c.burn_in = j.at("burn_in").get<long>();
  if (j.contains("thin")) c.thin = j.at("thin").get<long>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("m")) c.m = j.at("m").get<Index>();
  if (j.contains("correlation"))
    c.correlation = parse_correlation_kind(j.at("correlation").get<std::string>());
  if (j.contains("ordering"))
    c.ordering = parse_ordering_kind(j.at("ordering").get<std::string>());
  if (j.contains("sample_phi")) c.sample_phi = j.at("sample_phi").get<bool>();
  if (j.contains("fix_identity_spatial"))
    c.fix_identity_spatial = j.at("fix_identity_spatial").get<bool>();
  return c;
}

inline json prior_to_json(const PriorConfig& p) {
  return json{{"v0", p.v0}, {"phi_min", p.phi_min}, {"phi_max", p.phi_max}};
}

inline PriorConfig prior_from_json(const json& j) {
  PriorConfig p;
  if (j.contains("v0")) p.v0 = j.at("v0").get<double>();
  if (j.contains("phi_min")) p.phi_min = j.at("phi_min").get<double>();
  if (j.contains("phi_max")) p.phi_max = j.at("phi_max").get<double>();
  return p;
}

inline json run_config_to_json(const RunConfig& cfg) {
  json cols = json::object();
  for (const auto& [name, kind] : cfg.columns) cols[name] = to_string(kind);
  return json{{"format", kConfigFormat}, {"input", cfg.input},
              {"location_columns", cfg.location_columns}, {"columns", cols},
              {"prior", prior_to_json(cfg.prior)}, {"chain", chain_to_json(cfg.chain)},
              {"output", cfg.output}};
}

inline RunConfig run_config_from_json(const json& j, RunConfig cfg = {}) {
  if (j.contains("format") && j.at("format").get<std::string>() != kConfigFormat)
    throw ParseError("unexpected config format tag");
  if (j.contains("input")) cfg.input = j.at("input").get<std::string>();
  if (j.contains("location_columns"))
    cfg.location_columns = j.at("location_columns").get<std::vector<std::string>>();
  if (j.contains("columns")) {
    cfg.columns.clear();
    for (const auto& [name, kind] : j.at("columns").items())
      cfg.columns.emplace_back(name, parse_column_kind(kind.get<std::string>()));
  }
  if (j.contains("prior")) cfg.prior = prior_from_json(j.at("prior"));
  if (j.contains("chain")) cfg.chain = chain_from_json(j.at("chain"), cfg.chain);
  if (j.contains("output")) cfg.output = j.at("output").get<std::string>();
  return cfg;
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("invalid JSON in '" + path + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// scenario files

inline MarginalSpec margin_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "bernoulli") return MarginalSpec::bernoulli(j.at("p").get<double>());
  if (kind == "poisson") return MarginalSpec::poisson(j.at("rate").get<double>());
  if (kind == "ordered_categorical") {
    const auto probs = j.at("probs").get<std::vector<double>>();
    Vectord v(static_cast<Index>(probs.size()));
    for (Index i = 0; i < v.size(); ++i) v[i] = probs[static_cast<std::size_t>(i)];
    return MarginalSpec::ordered_categorical(v);
  }
  if (kind == "normal")
    return MarginalSpec::normal(j.value("mu", 0.0), j.value("sigma", 1.0));
  throw ParseError("unknown marginal kind '" + kind + "'");
}

inline json margin_to_json(const MarginalSpec& m) {
  switch (m.kind) {
    case MarginalSpec::Kind::bernoulli: return json{{"kind", "bernoulli"}, {"p", m.a}};
    case MarginalSpec::Kind::poisson: return json{{"kind", "poisson"}, {"rate", m.a}};
    case MarginalSpec::Kind::ordered_categorical: {
      std::vector<double> probs(m.probs.data(), m.probs.data() + m.probs.size());
      return json{{"kind", "ordered_categorical"}, {"probs", probs}};
    }
    case MarginalSpec::Kind::normal:
      return json{{"kind", "normal"}, {"mu", m.a}, {"sigma", m.b}};
  }
  throw ParseError("unknown marginal kind");
}

/// Scenario files use 1-based outcome indices in r_entries; "margins" may be
/// the string "default" for the reference mixed-margin set.
inline ScenarioSpec scenario_from_json(const json& j) {
  if (j.contains("format") && j.at("format").get<std::string>() != kScenarioFormat)
    throw ParseError("unexpected scenario format tag");
  ScenarioSpec s;
  s.n = j.at("n").get<Index>();
  s.p = j.at("p").get<Index>();
  s.phi = j.at("phi").get<double>();
  if (j.contains("correlation"))
    s.correlation = parse_correlation_kind(j.at("correlation").get<std::string>());
  if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("replications")) s.replications = j.at("replications").get<long>();

  const bool default_margins =
      !j.contains("margins") ||
      (j.at("margins").is_string() && j.at("margins").get<std::string>() == "default");
  if (default_margins) {
    const ScenarioSpec ref = default_scenario(s.n, s.p, s.phi);
    s.margins = ref.margins;
    if (!j.contains("r_entries")) s.r_entries = ref.r_entries;
  } else {
    for (const auto& m : j.at("margins")) s.margins.push_back(margin_from_json(m));
  }
  if (j.contains("r_entries")) {
    s.r_entries.clear();
    for (const auto& e : j.at("r_entries")) {
      if (!e.is_array() || e.size() != 3)
        throw ParseError("r_entries rows must be [j, k, value] with 1-based j < k");
      s.r_entries.emplace_back(e[0].get<Index>() - 1, e[1].get<Index>() - 1,
                               e[2].get<double>());
    }
  }
  return s;
}

inline json scenario_to_json(const ScenarioSpec& s) {
  json entries = json::array();
  for (const auto& [j, k, v] : s.r_entries) entries.push_back({j + 1, k + 1, v});
  json margins = json::array();
  for (const auto& m : s.margins) margins.push_back(margin_to_json(m));
  return json{{"format", kScenarioFormat}, {"n", s.n},
              {"p", s.p}, {"phi", s.phi},
              {"correlation", to_string(s.correlation)}, {"r_entries", entries},
              {"margins", margins}, {"replications", s.replications},
              {"seed", s.seed}};
}

// ---------------------------------------------------------------------------
// dataset CSV

struct LoadedData {
  MixedOutcomeMatrix y;
  LocationSet locs;
  std::vector<std::string> outcome_names;
  bool has_locations = false;
};

namespace detail {

inline double parse_cell(const std::string& field, Index row, const std::string& col) {
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (end == field.c_str() || *end != '\0')
    throw ParseError("row " + std::to_string(row + 2) + ", column '" + col +
                     "': cannot parse '" + field + "'");
  if (!std::isfinite(v))
    throw ParseError("row " + std::to_string(row + 2) + ", column '" + col +
                     "': non-finite value");
  return v;
}

inline void check_kind(double v, ColumnKind kind, Index row, const std::string& col) {
  const bool integral = v == std::floor(v);
  switch (kind) {
    case ColumnKind::binary:
      if (!(v == 0.0 || v == 1.0))
        throw KindMismatch("row " + std::to_string(row + 2) + ", column '" + col +
                           "': binary columns admit only 0 and 1");
      break;
    case ColumnKind::count:
      if (!integral || v < 0.0)
        throw KindMismatch("row " + std::to_string(row + 2) + ", column '" + col +
                           "': count columns admit only nonnegative integers");
      break;
    case ColumnKind::ordinal:
      if (!integral)
        throw KindMismatch("row " + std::to_string(row + 2) + ", column '" + col +
                           "': ordinal levels must be integers");
      break;
    case ColumnKind::continuous: break;
  }
}

}  // namespace detail

/// Reads a comma-separated dataset: mandatory header row, UTF-8, empty field
/// means missing. Declared outcome columns are typed and validated;
/// undeclared columns are ignored.
inline LoadedData load_csv(const std::string& path, const RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError("'" + path + "': empty file (header required)");
  const std::vector<std::string> header = split_csv_line(line);

  std::map<std::string, Index> col_of;
  for (Index c = 0; c < static_cast<Index>(header.size()); ++c)
    col_of[header[static_cast<std::size_t>(c)]] = c;

  std::vector<Index> loc_cols;
  for (const auto& name : cfg.location_columns) {
    const auto it = col_of.find(name);
    if (it != col_of.end()) loc_cols.push_back(it->second);
  }
  const bool has_locs = loc_cols.size() == cfg.location_columns.size() &&
                        cfg.location_columns.size() == 2;

  std::vector<std::pair<std::string, ColumnKind>> outcome_cols;
  std::vector<Index> outcome_idx;
  for (const auto& [name, kind] : cfg.columns) {
    const auto it = col_of.find(name);
    if (it == col_of.end())
      throw ParseError("declared column '" + name + "' not present in '" + path + "'");
    outcome_cols.emplace_back(name, kind);
    outcome_idx.push_back(it->second);
  }
  if (outcome_cols.empty()) throw ParseError("no outcome columns declared");

  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    rows.push_back(split_csv_line(line));
    if (rows.back().size() != header.size())
      throw ParseError("row " + std::to_string(rows.size() + 1) + ": expected " +
                       std::to_string(header.size()) + " fields, got " +
                       std::to_string(rows.back().size()));
  }
  const Index n = static_cast<Index>(rows.size());
  if (n == 0) throw ParseError("'" + path + "': no data rows");

  LoadedData out;
  const Index p = static_cast<Index>(outcome_cols.size());
  Matrixd values = Matrixd::Zero(n, p);
  ArrayXb missing = ArrayXb::Constant(n, p, false);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p; ++j) {
      const std::string& field = rows[static_cast<std::size_t>(i)]
                                     [static_cast<std::size_t>(outcome_idx[static_cast<std::size_t>(j)])];
      if (field.empty()) {
        missing(i, j) = true;
        continue;
      }
      const auto& [name, kind] = outcome_cols[static_cast<std::size_t>(j)];
      const double v = detail::parse_cell(field, i, name);
      detail::check_kind(v, kind, i, name);
      values(i, j) = v;
    }
  }
  std::vector<ColumnKind> kinds;
  for (const auto& [name, kind] : outcome_cols) {
    out.outcome_names.push_back(name);
    kinds.push_back(kind);
  }
  out.y = MixedOutcomeMatrix::from_values(std::move(values), std::move(kinds));
  out.y.missing = std::move(missing);

  if (has_locs) {
    Matrixd coords(n, 2);
    for (Index i = 0; i < n; ++i)
      for (Index c = 0; c < 2; ++c) {
        const std::string& field =
            rows[static_cast<std::size_t>(i)]
                [static_cast<std::size_t>(loc_cols[static_cast<std::size_t>(c)])];
        if (field.empty())
          throw ParseError("row " + std::to_string(i + 2) + ": missing location coordinate");
        coords(i, c) = detail::parse_cell(field, i, cfg.location_columns[static_cast<std::size_t>(c)]);
      }
    out.locs = make_locations(std::move(coords));
    out.has_locations = true;
  }
  return out;
}

/// Writes a dataset in the same dialect load_csv reads (bitwise round trip).
inline void write_dataset_csv(const std::string& path, const MixedOutcomeMatrix& y,
                              const LocationSet* locs,
                              const std::vector<std::string>& outcome_names,
                              const std::vector<std::string>& location_names = {"x", "y"}) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  bool first = true;
  if (locs) {
    out << location_names[0] << ',' << location_names[1];
    first = false;
  }
  for (const auto& name : outcome_names) {
    if (!first) out << ',';
    out << name;
    first = false;
  }
  out << '\n';
  for (Index i = 0; i < y.rows(); ++i) {
    first = true;
    if (locs) {
      out << format_double(locs->coords(i, 0)) << ',' << format_double(locs->coords(i, 1));
      first = false;
    }
    for (Index j = 0; j < y.cols(); ++j) {
      if (!first) out << ',';
      if (y.observed(i, j)) out << format_double(y.values(i, j));
      first = false;
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// draw archive

inline std::string pair_label(Index j, Index k) {
  return "r_" + std::to_string(j + 1) + "_" + std::to_string(k + 1);
}

/// Archive layout: a marker line carrying a JSON header (n, p, sampler,
/// seed, config digest, chain protocol, run flags), a CSV header with the
/// flattened upper-triangular pairs plus phi, then %.17g rows. Loading an
/// archive reproduces the draws bitwise.
inline void write_draw_archive(const std::string& path, const PosteriorDraws& draws,
                               const std::string& config_digest) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  json header{{"format", kDrawsFormat},
              {"n", draws.n},
              {"p", draws.p},
              {"sampler", to_string(draws.sampler)},
              {"seed", draws.seed},
              {"config_digest", config_digest},
              {"phi_acceptance", draws.phi_acceptance},
              {"aborted", draws.aborted},
              {"error", draws.error}};
  out << "#" << kDrawsFormat << " " << header.dump() << '\n';
  for (Index j = 0; j < draws.p; ++j)
    for (Index k = j + 1; k < draws.p; ++k)
      out << pair_label(j, k) << ',';
  out << "phi\n";
  for (Index d = 0; d < draws.stored(); ++d) {
    for (Index t = 0; t < draws.r_draws.cols(); ++t)
      out << format_double(draws.r_draws(d, t)) << ',';
    out << format_double(draws.phi_draws[d]) << '\n';
  }
}

inline PosteriorDraws load_draw_archive(const std::string& path,
                                        std::string* config_digest = nullptr) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line.rfind("#", 0) != 0)
    throw ParseError("'" + path + "': missing archive marker line");
  const auto sp = line.find(' ');
  if (sp == std::string::npos) throw ParseError("'" + path + "': malformed marker line");
  json header;
  try {
    header = json::parse(line.substr(sp + 1));
  } catch (const json::exception& e) {
    throw ParseError("'" + path + "': bad archive header: " + e.what());
  }
  if (header.value("format", "") != kDrawsFormat)
    throw ParseError("'" + path + "': not a draw archive");

  PosteriorDraws draws;
  draws.n = header.at("n").get<Index>();
  draws.p = header.at("p").get<Index>();
  draws.sampler = parse_sampler(header.at("sampler").get<std::string>());
  draws.seed = header.at("seed").get<std::uint64_t>();
  draws.phi_acceptance = header.value("phi_acceptance", 0.0);
  draws.aborted = header.value("aborted", false);
  draws.error = header.value("error", "");
  if (config_digest) *config_digest = header.value("config_digest", "");

  if (!std::getline(in, line)) throw ParseError("'" + path + "': missing column header");
  const Index q = pair_count(draws.p);
  std::vector<Vectord> rows;
  Index row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (static_cast<Index>(fields.size()) != q + 1)
      throw ParseError("'" + path + "': row " + std::to_string(row + 3) +
                       " has wrong field count");
    Vectord v(q + 1);
    for (Index t = 0; t <= q; ++t)
      v[t] = detail::parse_cell(fields[static_cast<std::size_t>(t)], row, "draws");
    rows.push_back(std::move(v));
    ++row;
  }
  draws.r_draws.resize(static_cast<Index>(rows.size()), q);
  draws.phi_draws.resize(static_cast<Index>(rows.size()));
  for (Index d = 0; d < static_cast<Index>(rows.size()); ++d) {
    draws.r_draws.row(d) = rows[static_cast<std::size_t>(d)].head(q).transpose();
    draws.phi_draws[d] = rows[static_cast<std::size_t>(d)][q];
  }
  return draws;
}

// ---------------------------------------------------------------------------
// summary / diagnostic files

inline void write_summary_csv(const std::string& path, const std::vector<PairSummary>& rows,
                              const std::string& config_digest = "") {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  if (!config_digest.empty()) out << "#config_digest=" << config_digest << '\n';
  out << "pair,j,k,q025,median,q975\n";
  for (const auto& r : rows)
    out << pair_label(r.j, r.k) << ',' << (r.j + 1) << ',' << (r.k + 1) << ','
        << format_double(r.lo) << ',' << format_double(r.median) << ','
        << format_double(r.hi) << '\n';
}

inline void write_acf_csv(const std::string& path, const PosteriorDraws& draws,
                          Index max_lag = 50, const std::string& config_digest = "") {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  if (!config_digest.empty()) out << "#config_digest=" << config_digest << '\n';
  const Index lags = std::min<Index>(max_lag, draws.stored() > 1 ? draws.stored() - 1 : 0);
  out << "lag";
  for (Index j = 0; j < draws.p; ++j)
    for (Index k = j + 1; k < draws.p; ++k) out << ',' << pair_label(j, k);
  const bool spatial = draws.sampler != SamplerKind::bgc;
  if (spatial) out << ",phi";
  out << '\n';
  std::vector<Vectord> cols;
  for (Index t = 0; t < draws.r_draws.cols(); ++t) {
    try {
      cols.push_back(acf(draws.r_draws.col(t), lags));
    } catch (const DegenerateChain&) {
      cols.push_back(Vectord::Constant(lags + 1, std::nan("")));
    }
  }
  if (spatial) {
    try {
      cols.push_back(acf(draws.phi_draws, lags));
    } catch (const DegenerateChain&) {
      cols.push_back(Vectord::Constant(lags + 1, std::nan("")));
    }
  }
  for (Index lag = 0; lag <= lags; ++lag) {
    out << lag;
    for (const auto& c : cols) out << ',' << format_double(c[lag]);
    out << '\n';
  }
}

}  // namespace spbgc
