// JSON grid configuration and the parallel grid runner.
//
// {
//   "scenario": "semi-6.1-desk" | { inline scenario } | [ ... ],
//   "agents": ["mtss", {"kind": "agnostic", "name": "agnostic-ts"}, ...],
//   "T": 2000, "replications": 20, "seed_base": 1,
//   "schedule": "every_round" | {"every": 100} | {"times": [1, 50, 500]},
//   "eb": {"enabled": true, "period": 100, "grid": [0.1, 0.2, 0.4]},
//   "sampler": {"n_burnin": 500, "n_keep": 500, "n_refresh": 50},
//   "output_dir": "out"
// }
#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mtss/harness.hpp"
#include "mtss/version.hpp"

namespace mtss {

using json = nlohmann::json;

struct GridConfig {
  std::vector<ScenarioConfig> scenarios;
  std::vector<AgentConfig> agents;
  std::int64_t T = 1000;
  std::size_t replications = 10;
  std::uint64_t seed_base = 0;
  std::string output_dir = "out";
  json source;  // the document as given, after preset expansion

  void validate() const {
    if (scenarios.empty()) throw ConfigError("no scenario given");
    if (agents.empty()) throw ConfigError("no agent given");
    if (T < 1) throw ConfigError("T must be at least 1");
    if (replications < 1) throw ConfigError("replications must be at least 1");
    for (const auto& s : scenarios) s.validate();
    for (std::size_t i = 0; i < agents.size(); ++i) {
      if (agents[i].schedule) agents[i].schedule->validate();
      agents[i].eb.validate();
      agents[i].sampler.validate();
      for (std::size_t j = 0; j < i; ++j)
        if (agents[i].label() == agents[j].label())
          throw ConfigError("duplicate agent name '" + agents[i].label() + "'");
    }
    for (std::size_t i = 0; i < scenarios.size(); ++i)
      for (std::size_t j = 0; j < i; ++j)
        if (scenarios[i].name == scenarios[j].name)
          throw ConfigError("duplicate scenario name '" + scenarios[i].name + "'");
  }
};

namespace detail {

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

inline void reject_unknown(const json& j, std::initializer_list<std::string_view> known, std::string_view where) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto k : known) ok = ok || key == k;
    if (!ok) throw ConfigError("unknown field '" + key + "' in " + std::string(where));
  }
}

inline ThetaSource parse_source(const json& j) {
  reject_unknown(j, {"type", "sigma1", "psi", "link", "lambda"}, "source");
  const auto type = get_or<std::string>(j, "type", "lmm");
  if (type == "lmm") return LmmSource{get_or(j, "sigma1", 0.5)};
  if (type == "cos" || type == "misspecified")
    return MisspecifiedCosSource{get_or(j, "lambda", 0.0), get_or(j, "sigma1", 0.5)};
  if (type == "beta") {
    const auto link = get_or<std::string>(j, "link", "plain");
    if (link != "plain" && link != "shifted") throw ConfigError("link must be 'plain' or 'shifted'");
    return BetaLogisticSource{get_or(j, "psi", 1.0), link == "plain" ? LogisticLink::plain : LogisticLink::shifted};
  }
  throw ConfigError("unknown source type '" + type + "'");
}

inline json source_to_json(const ThetaSource& src) {
  return std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, LmmSource>) return {{"type", "lmm"}, {"sigma1", s.sigma1}};
        else if constexpr (std::is_same_v<T, MisspecifiedCosSource>)
          return {{"type", "cos"}, {"lambda", s.lambda}, {"sigma1", s.sigma1}};
        else
          return {{"type", "beta"}, {"psi", s.psi}, {"link", s.link == LogisticLink::plain ? "plain" : "shifted"}};
      },
      src);
}

inline ScenarioConfig parse_scenario(const json& j) {
  if (j.is_string()) return preset(j.get<std::string>()).scenario;
  if (!j.is_object()) throw ConfigError("scenario must be a preset name or an object");
  reject_unknown(j,
                 {"name", "base", "problem", "n_items", "slate_size", "dim", "source", "sigma2", "revenue",
                  "prior_variance", "cold_start", "catalog_csv", "gamma_true"},
                 "scenario");
  ScenarioConfig s = j.contains("base") ? preset(j.at("base").get<std::string>()).scenario : ScenarioConfig{};
  s.name = get_or(j, "name", s.name.empty() ? std::string("scenario") : s.name);
  if (j.contains("problem")) s.problem = parse_problem_kind(j.at("problem").get<std::string>());
  s.n_items = get_or(j, "n_items", s.n_items);
  s.slate_size = get_or(j, "slate_size", s.slate_size);
  s.dim = get_or(j, "dim", s.dim);
  if (j.contains("source")) s.theta_source = parse_source(j.at("source"));
  s.sigma2 = get_or(j, "sigma2", s.sigma2);
  s.revenue = get_or(j, "revenue", s.revenue);
  s.prior_variance = get_or(j, "prior_variance", s.prior_variance);
  if (j.contains("cold_start")) {
    const auto& c = j.at("cold_start");
    reject_unknown(c, {"period", "delta_n"}, "cold_start");
    s.cold_start = ColdStart{get_or<std::size_t>(c, "period", 100), get_or<std::size_t>(c, "delta_n", 0)};
  }
  if (j.contains("catalog_csv")) s.catalog_csv = j.at("catalog_csv").get<std::string>();
  if (j.contains("gamma_true")) {
    const auto g = j.at("gamma_true").get<std::vector<double>>();
    s.gamma_true = Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
  }
  return s;
}

inline json scenario_to_json(const ScenarioConfig& s) {
  json j = {{"name", s.name},
            {"problem", std::string(to_string(s.problem))},
            {"n_items", s.n_items},
            {"slate_size", s.slate_size},
            {"dim", s.dim},
            {"source", source_to_json(s.theta_source)},
            {"sigma2", s.sigma2},
            {"revenue", s.revenue},
            {"prior_variance", s.gamma_prior_variance()}};
  if (s.cold_start) j["cold_start"] = {{"period", s.cold_start->period}, {"delta_n", s.cold_start->delta_n}};
  if (s.catalog_csv) j["catalog_csv"] = *s.catalog_csv;
  if (s.gamma_true) j["gamma_true"] = std::vector<double>(s.gamma_true->begin(), s.gamma_true->end());
  return j;
}

inline Schedule parse_schedule(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "every_round") return Schedule::every_round();
    throw ConfigError("schedule string must be 'every_round'");
  }
  reject_unknown(j, {"every", "times"}, "schedule");
  if (j.contains("every")) return Schedule::every(j.at("every").get<std::int64_t>());
  if (j.contains("times")) return Schedule::at(j.at("times").get<std::vector<std::int64_t>>());
  throw ConfigError("schedule needs 'every' or 'times'");
}

inline EbConfig parse_eb(const json& j) {
  reject_unknown(j, {"enabled", "period", "grid"}, "eb");
  EbConfig eb;
  eb.enabled = get_or(j, "enabled", true);
  eb.refresh_period = get_or(j, "period", eb.refresh_period);
  eb.grid = get_or(j, "grid", eb.grid);
  return eb;
}

inline GammaSamplerConfig parse_sampler(const json& j) {
  reject_unknown(j, {"n_burnin", "n_keep", "n_refresh", "proposal_scale", "adapt_target", "gibbs_theta_refresh"},
                 "sampler");
  GammaSamplerConfig c;
  c.n_burnin = get_or(j, "n_burnin", c.n_burnin);
  c.n_keep = get_or(j, "n_keep", c.n_keep);
  c.n_refresh = get_or(j, "n_refresh", c.n_refresh);
  c.proposal_scale = get_or(j, "proposal_scale", c.proposal_scale);
  c.adapt_target = get_or(j, "adapt_target", c.adapt_target);
  c.gibbs_theta_refresh = get_or(j, "gibbs_theta_refresh", c.gibbs_theta_refresh);
  return c;
}

inline AgentConfig parse_agent(const json& j, const AgentConfig& defaults) {
  AgentConfig a = defaults;
  if (j.is_string()) {
    a.kind = parse_agent_kind(j.get<std::string>());
    return a;
  }
  reject_unknown(j, {"kind", "name", "schedule", "eb", "sampler", "prior_variance", "alpha", "beta"}, "agent");
  a.kind = parse_agent_kind(get_or<std::string>(j, "kind", "mtss"));
  a.name = get_or<std::string>(j, "name", "");
  if (j.contains("schedule")) a.schedule = parse_schedule(j.at("schedule"));
  if (j.contains("eb")) a.eb = parse_eb(j.at("eb"));
  if (j.contains("sampler")) a.sampler = parse_sampler(j.at("sampler"));
  if (j.contains("prior_variance")) a.agnostic_prior_variance = j.at("prior_variance").get<double>();
  a.agnostic_alpha = get_or(j, "alpha", a.agnostic_alpha);
  a.agnostic_beta = get_or(j, "beta", a.agnostic_beta);
  return a;
}

}  // namespace detail

/// Parses and validates a grid configuration. Throws ConfigError.
[[nodiscard]] inline GridConfig parse_grid_config(const json& j) {
  try {
    if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
    detail::reject_unknown(j, {"scenario", "agents", "T", "replications", "seed_base", "schedule", "eb",
                               "sampler", "output_dir"},
                           "configuration");
    GridConfig g;
    if (!j.contains("scenario")) throw ConfigError("missing field 'scenario'");
    const json& sc = j.at("scenario");
    if (sc.is_array())
      for (const auto& s : sc) g.scenarios.push_back(detail::parse_scenario(s));
    else
      g.scenarios.push_back(detail::parse_scenario(sc));

    AgentConfig defaults;
    if (j.contains("schedule")) defaults.schedule = detail::parse_schedule(j.at("schedule"));
    if (j.contains("eb")) defaults.eb = detail::parse_eb(j.at("eb"));
    if (j.contains("sampler")) defaults.sampler = detail::parse_sampler(j.at("sampler"));
    const json agents = j.value("agents", json::array({"mtss", "oracle", "agnostic", "determined"}));
    if (!agents.is_array()) throw ConfigError("'agents' must be a list");
    for (const auto& a : agents) g.agents.push_back(detail::parse_agent(a, defaults));

    const bool single_preset = sc.is_string();
    g.T = detail::get_or<std::int64_t>(j, "T", single_preset ? preset(sc.get<std::string>()).T : 1000);
    g.replications = detail::get_or<std::size_t>(
        j, "replications", single_preset ? preset(sc.get<std::string>()).replications : 10);
    g.seed_base = detail::get_or<std::uint64_t>(j, "seed_base", 0);
    g.output_dir = detail::get_or<std::string>(j, "output_dir", "out");
    g.source = j;
    g.validate();
    return g;
  } catch (const json::exception& e) {
    throw ConfigError(e.what());
  }
}

[[nodiscard]] inline GridConfig load_grid_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_grid_config(j);
}

/// Writes a curve CSV: one row per round, LF line endings.
inline void write_curve_csv(std::ostream& out, const CurveSummary& c) {
  out << "round,mean_cum_regret,stderr_cum_regret,mean_inst_regret,n_replications\n";
  char buf[256];
  for (std::size_t r = 0; r < c.rounds(); ++r) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%zu\n", r + 1, c.mean_cum_regret[r],
                  c.stderr_cum_regret[r], c.mean_inst_regret[r], c.n_replications);
    out << buf;
  }
}

struct CellResult {
  std::string scenario;
  std::string agent;
  std::vector<RegretTrace> traces;    // successful replications, by replication index
  std::vector<ReplicationInfo> infos;
  std::vector<std::pair<std::size_t, std::string>> failures;  // (replication, message)
  std::optional<CurveSummary> curve;
};

struct GridResult {
  std::vector<CellResult> cells;  // scenario-major, agents in config order
  double wall_seconds = 0.0;
  [[nodiscard]] bool any_failure() const {
    for (const auto& c : cells)
      if (!c.failures.empty()) return true;
    return false;
  }
};

/// Seed of replication r. Independent of scenario and agent so every cell
/// sees the same instances and removing a cell changes nothing else.
[[nodiscard]] inline std::uint64_t replication_seed(std::uint64_t seed_base, std::size_t r) {
  return seed_base + r;
}

/// Runs every (scenario, agent, replication) unit on a pool of `workers`
/// threads. Results are placed by index, so output is independent of
/// scheduling.
[[nodiscard]] inline GridResult run_grid(const GridConfig& config, unsigned workers = 1,
                                         const std::function<void(std::size_t, std::size_t)>& progress = {}) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t S = config.scenarios.size(), A = config.agents.size(), M = config.replications;
  const std::size_t units = S * A * M;

  struct Unit {
    std::optional<RegretTrace> trace;
    ReplicationInfo info;
    std::string error;
  };
  std::vector<Unit> results(units);
  std::atomic<std::size_t> next{0}, done{0};
  std::mutex progress_mutex;

  auto work = [&] {
    for (std::size_t u = next++; u < units; u = next++) {
      const std::size_t r = u % M, a = (u / M) % A, s = u / (M * A);
      try {
        results[u].trace = run_replication(config.scenarios[s], config.agents[a], config.T,
                                           replication_seed(config.seed_base, r), &results[u].info);
        results[u].trace->replication = r;
      } catch (const std::exception& e) {
        results[u].error = e.what();
      }
      const std::size_t k = ++done;
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress(k, units);
      }
    }
  };
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(units, 1))));
  std::vector<std::jthread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  pool.clear();

  GridResult out;
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a) {
      CellResult cell;
      cell.scenario = config.scenarios[s].name;
      cell.agent = config.agents[a].label();
      for (std::size_t r = 0; r < M; ++r) {
        Unit& u = results[(s * A + a) * M + r];
        if (u.trace) {
          cell.traces.push_back(std::move(*u.trace));
          cell.infos.push_back(std::move(u.info));
        } else {
          cell.failures.emplace_back(r, u.error);
        }
      }
      if (!cell.traces.empty()) cell.curve = aggregate(cell.traces);
      out.cells.push_back(std::move(cell));
    }
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

[[nodiscard]] inline std::string curve_file_name(const CellResult& cell) {
  return cell.scenario + "__" + cell.agent + ".csv";
}

[[nodiscard]] inline json grid_metadata(const GridConfig& config, const GridResult& result) {
  json scenarios = json::array();
  for (const auto& s : config.scenarios) scenarios.push_back(detail::scenario_to_json(s));
  json agents = json::array();
  for (const auto& a : config.agents) {
    json j = {{"name", a.label()}, {"kind", std::string(to_string(a.kind))}};
    if (a.eb.enabled) j["eb"] = {{"period", a.eb.refresh_period}, {"grid", a.eb.grid}};
    agents.push_back(j);
  }
  json cells = json::array();
  for (const auto& c : result.cells) {
    json reps = json::array();
    for (std::size_t k = 0; k < c.traces.size(); ++k) {
      const auto& info = c.infos[k];
      reps.push_back({{"replication", c.traces[k].replication},
                      {"seed", info.seed},
                      {"final_cum_regret", c.traces[k].cumulative.back()},
                      {"gamma_refreshes", info.gamma_refreshes},
                      {"decisions", info.decisions},
                      {"rotations", info.rotations},
                      {"cos_normalizer", info.cos_normalizer},
                      {"final_hyperparameter", info.final_hyperparameter}});
    }
    json fails = json::array();
    for (const auto& [r, msg] : c.failures) fails.push_back({{"replication", r}, {"error", msg}});
    cells.push_back({{"scenario", c.scenario},
                     {"agent", c.agent},
                     {"curve", c.curve ? json(curve_file_name(c)) : json(nullptr)},
                     {"replications", reps},
                     {"failures", fails}});
  }
  return {{"version", std::string(kVersion)},
          {"config", config.source},
          {"resolved", {{"scenarios", scenarios},
                        {"agents", agents},
                        {"T", config.T},
                        {"replications", config.replications},
                        {"seed_base", config.seed_base}}},
          {"wall_seconds", result.wall_seconds},
          {"cells", cells}};
}

/// Writes one curve CSV per cell with at least one successful replication
/// and metadata.json into config.output_dir.
inline void write_grid_outputs(const GridConfig& config, const GridResult& result) {
  namespace fs = std::filesystem;
  fs::create_directories(config.output_dir);
  for (const auto& c : result.cells) {
    if (!c.curve) continue;
    std::ofstream out(fs::path(config.output_dir) / curve_file_name(c), std::ios::binary);
    write_curve_csv(out, *c.curve);
    if (!out) throw Error("failed to write " + curve_file_name(c));
  }
  std::ofstream meta(fs::path(config.output_dir) / "metadata.json", std::ios::binary);
  meta << grid_metadata(config, result).dump(2) << '\n';
  if (!meta) throw Error("failed to write metadata.json");
}

}  // namespace mtss
