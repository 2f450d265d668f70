// Replication runner, Bayes-regret aggregation and scenario presets.
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mtss/agents.hpp"
#include "mtss/catalog_io.hpp"
#include "mtss/core.hpp"
#include "mtss/environments.hpp"
#include "mtss/rng.hpp"

namespace mtss {

/// Side information about one replication.
struct ReplicationInfo {
  std::uint64_t seed = 0;
  Eigen::VectorXd gamma_true;
  double cos_normalizer = 0.0;
  std::int64_t gamma_refreshes = 0;
  std::int64_t rotations = 0;
  std::int64_t decisions = 0;  // rounds (epochs for MNL) at which the agent acted
  double final_hyperparameter = 0.0;
};

namespace detail {

inline DrawnInstance instance_for(const ScenarioConfig& scenario, Rng& rng) {
  if (scenario.catalog_csv) {
    DrawnInstance inst;
    inst.catalog = read_catalog_csv(*scenario.catalog_csv);
    if (inst.catalog.dim() != scenario.dim || inst.catalog.n_items() != scenario.n_items)
      throw ConfigError(scenario.name + ": catalog shape does not match n_items / dim");
    if (!inst.catalog.true_theta) throw ConfigError(scenario.name + ": catalog needs a theta column");
    if (scenario.problem == ProblemKind::mnl && !inst.catalog.revenues)
      inst.catalog.revenues = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(scenario.n_items),
                                                        scenario.revenue);
    if (scenario.gamma_true) inst.gamma_true = *scenario.gamma_true;
    std::uint64_t next = 0;
    for (auto id : inst.catalog.item_ids) next = std::max(next, id + 1);
    inst.next_item_id = next;
    return inst;
  }
  const Eigen::VectorXd gamma = scenario.gamma_true ? *scenario.gamma_true : scenario.gamma_prior().sample(rng);
  return draw_instance(scenario, gamma, rng);
}

}  // namespace detail

/// Runs one agent for T rounds on a fresh instance. gamma_true ~ Q (unless
/// the scenario fixes it), then the catalog, then T rounds of interaction.
/// MNL runs whole epochs; the last one is truncated at T and regret is
/// charged for every elapsed round. Streams: "instance", "env", "agent",
/// "rotation" under seeded_rng(seed, "replication").
[[nodiscard]] inline RegretTrace run_replication(const ScenarioConfig& scenario, const AgentConfig& agent_cfg,
                                                 std::int64_t T, std::uint64_t seed,
                                                 ReplicationInfo* info = nullptr) {
  if (T < 1) throw ConfigError("T must be at least 1");
  scenario.validate();
  const Rng base = seeded_rng(seed, "replication");
  Rng inst_rng = base.stream("instance");
  Rng env_rng = base.stream("env");
  const Rng agent_rng = base.stream("agent");
  const Rng rotation_rng = base.stream("rotation");

  DrawnInstance inst = detail::instance_for(scenario, inst_rng);
  if (agent_cfg.kind == AgentKind::oracle && inst.gamma_true.size() == 0)
    throw ConfigError(scenario.name + ": oracle-TS on a CSV catalog needs gamma_true");
  auto agent = make_agent(agent_cfg, model_context(scenario, inst.gamma_true));
  auto env = std::make_unique<Environment>(scenario.problem, inst.catalog, scenario.slate_size, scenario.sigma2);
  InteractionHistory history(scenario.problem, inst.catalog.n_items());

  RegretTrace trace;
  trace.seed = seed;
  trace.instantaneous.reserve(static_cast<std::size_t>(T));
  trace.cumulative.reserve(static_cast<std::size_t>(T));
  std::int64_t rotations = 0, decisions = 0;
  const auto period = scenario.cold_start ? static_cast<std::int64_t>(scenario.cold_start->period) : 0;

  std::int64_t t = 0;
  while (t < T) {
    if (period > 0 && t / period > rotations) {
      rotations = t / period;
      Rng r = rotation_rng.stream(static_cast<std::uint64_t>(rotations));
      RotationResult rot = rotate_items(inst, scenario, scenario.cold_start->delta_n, r);
      inst = std::move(rot.instance);
      history.forget_items(rot.replaced);
      env = std::make_unique<Environment>(scenario.problem, inst.catalog, scenario.slate_size, scenario.sigma2);
    }
    const Action action = agent->select_action(env->catalog(), history, agent_rng);
    ++decisions;
    const double delta = env->regret(action);
    switch (scenario.problem) {
      case ProblemKind::semi_bandit: {
        const auto& a = std::get<SubsetAction>(action);
        auto step = env->step_semi(a, env_rng);
        history.record(Event{a, std::move(step.feedback)});
        trace.push(std::max(delta, 0.0));
        ++t;
        break;
      }
      case ProblemKind::cascade: {
        const auto& a = std::get<RankedListAction>(action);
        history.record(Event{a, env->step_cascade(a, env_rng)});
        trace.push(std::max(delta, 0.0));
        ++t;
        break;
      }
      case ProblemKind::mnl: {
        const auto& a = std::get<SubsetAction>(action);
        MnlEpochFeedback fb = env->run_epoch_mnl(a, env_rng);
        const std::int64_t charged = std::min(fb.epoch_length, T - t);
        for (std::int64_t k = 0; k < charged; ++k) trace.push(std::max(delta, 0.0));
        t += charged;
        history.record(Event{a, std::move(fb)});
        break;
      }
    }
  }

  if (info) {
    info->seed = seed;
    info->gamma_true = inst.gamma_true;
    info->cos_normalizer = inst.cos_normalizer;
    info->gamma_refreshes = agent->gamma_refreshes();
    info->rotations = rotations;
    info->decisions = decisions;
    info->final_hyperparameter = agent->hyperparameter();
  }
  return trace;
}

/// Per-round summary over M replications.
struct CurveSummary {
  std::vector<double> mean_cum_regret;
  std::vector<double> stderr_cum_regret;  // sample std / sqrt(M); 0 when M = 1
  std::vector<double> mean_inst_regret;
  std::size_t n_replications = 0;
  bool single_replication = false;  // SE is 0 by convention, not an estimate

  [[nodiscard]] std::size_t rounds() const noexcept { return mean_cum_regret.size(); }
};

[[nodiscard]] inline CurveSummary aggregate(std::span<const RegretTrace> traces) {
  if (traces.empty()) throw std::invalid_argument("aggregate needs at least one trace");
  const std::size_t T = traces.front().rounds();
  for (const auto& tr : traces)
    if (tr.rounds() != T) throw std::invalid_argument("traces differ in length");
  const std::size_t M = traces.size();
  CurveSummary out;
  out.n_replications = M;
  out.single_replication = M == 1;
  out.mean_cum_regret.resize(T);
  out.stderr_cum_regret.resize(T);
  out.mean_inst_regret.resize(T);
  for (std::size_t r = 0; r < T; ++r) {
    double sum = 0.0, inst = 0.0;
    for (const auto& tr : traces) {
      sum += tr.cumulative[r];
      inst += tr.instantaneous[r];
    }
    const double mean = sum / static_cast<double>(M);
    double ss = 0.0;
    for (const auto& tr : traces) ss += (tr.cumulative[r] - mean) * (tr.cumulative[r] - mean);
    out.mean_cum_regret[r] = mean;
    out.mean_inst_regret[r] = inst / static_cast<double>(M);
    out.stderr_cum_regret[r] = M > 1 ? std::sqrt(ss / static_cast<double>(M - 1) / static_cast<double>(M)) : 0.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Presets

struct Preset {
  std::string_view name;
  std::string_view description;
  ScenarioConfig scenario;
  std::int64_t T;
  std::size_t replications;
};

namespace detail {

inline ScenarioConfig make_scenario(std::string name, ProblemKind p, std::size_t n, std::size_t k,
                                    std::size_t d, ThetaSource src) {
  ScenarioConfig s;
  s.name = std::move(name);
  s.problem = p;
  s.n_items = n;
  s.slate_size = k;
  s.dim = d;
  s.theta_source = src;
  return s;
}

}  // namespace detail

[[nodiscard]] inline std::vector<Preset> presets() {
  using detail::make_scenario;
  std::vector<Preset> out;
  out.push_back({"semi-6.1", "semi-bandit, N=3000 K=10 d=5, LMM sigma1=0.5",
                 make_scenario("semi-6.1", ProblemKind::semi_bandit, 3000, 10, 5, LmmSource{0.5}), 10000, 50});
  out.push_back({"cascade-6.1", "cascading bandit, N=1000 K=3 d=5, Beta-Bernoulli psi=1",
                 make_scenario("cascade-6.1", ProblemKind::cascade, 1000, 3, 5,
                               BetaLogisticSource{1.0, LogisticLink::plain}),
                 10000, 50});
  out.push_back({"mnl-6.1", "MNL bandit, N=1000 K=5 d=5, Beta-Geometric psi=1",
                 make_scenario("mnl-6.1", ProblemKind::mnl, 1000, 5, 5,
                               BetaLogisticSource{1.0, LogisticLink::shifted}),
                 10000, 50});
  out.push_back({"semi-6.1-desk", "semi-bandit, N=200 K=5 d=5, LMM sigma1=0.5",
                 make_scenario("semi-6.1-desk", ProblemKind::semi_bandit, 200, 5, 5, LmmSource{0.5}), 2000, 20});
  out.push_back({"cascade-6.1-desk", "cascading bandit, N=200 K=3 d=5, Beta-Bernoulli psi=1",
                 make_scenario("cascade-6.1-desk", ProblemKind::cascade, 200, 3, 5,
                               BetaLogisticSource{1.0, LogisticLink::plain}),
                 2000, 20});
  out.push_back({"mnl-6.1-desk", "MNL bandit, N=200 K=5 d=5, Beta-Geometric psi=1",
                 make_scenario("mnl-6.1-desk", ProblemKind::mnl, 200, 5, 5,
                               BetaLogisticSource{1.0, LogisticLink::shifted}),
                 2000, 20});
  {
    auto s = make_scenario("semi-coldstart-desk", ProblemKind::semi_bandit, 200, 5, 5, LmmSource{1.0});
    s.cold_start = ColdStart{100, 40};
    out.push_back({"semi-coldstart-desk", "semi-bandit with 40 of 200 items replaced every 100 rounds, sigma1=1",
                   s, 1000, 20});
  }
  out.push_back({"semi-misspec-desk", "semi-bandit, N=200 K=5 d=5, theta mean cos-transformed (lambda=1)",
                 make_scenario("semi-misspec-desk", ProblemKind::semi_bandit, 200, 5, 5,
                               MisspecifiedCosSource{1.0, 0.5}),
                 2000, 20});
  return out;
}

[[nodiscard]] inline const Preset& preset(std::string_view name) {
  static const std::vector<Preset> all = presets();
  for (const auto& p : all)
    if (p.name == name) return p;
  throw ConfigError("unknown preset '" + std::string(name) + "'");
}

}  // namespace mtss
