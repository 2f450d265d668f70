// Thompson-sampling policies for the three problems.
//
//   MTSS        sample gamma from its posterior (on a schedule), then theta | gamma, H
//   oracle-TS   theta | gamma_true, H
//   agnostic TS independent conjugate posteriors with a manual prior per item
//   determined  theta_i = g(x_i; gamma) with gamma from the degenerate-model posterior
//
// Every agent maps a sampled theta to the greedy action of its problem.
// Randomness is addressed by round: round t uses stream(t) of the agent's
// stream, and item i's draw uses a further stream keyed by its item id.
#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mtss/beta_logistic.hpp"
#include "mtss/core.hpp"
#include "mtss/environments.hpp"
#include "mtss/lmm.hpp"
#include "mtss/optimizers.hpp"
#include "mtss/rng.hpp"

namespace mtss {

enum class AgentKind { mtss, oracle, agnostic, determined };

[[nodiscard]] inline std::string_view to_string(AgentKind k) noexcept {
  switch (k) {
    case AgentKind::mtss: return "mtss";
    case AgentKind::oracle: return "oracle";
    case AgentKind::agnostic: return "agnostic";
    case AgentKind::determined: return "determined";
  }
  return "unknown";
}

[[nodiscard]] inline AgentKind parse_agent_kind(std::string_view s) {
  if (s == "mtss" || s == "MTSS") return AgentKind::mtss;
  if (s == "oracle" || s == "oracle-ts" || s == "oracle_ts") return AgentKind::oracle;
  if (s == "agnostic" || s == "feature-agnostic") return AgentKind::agnostic;
  if (s == "determined" || s == "feature-determined") return AgentKind::determined;
  throw ConfigError("unknown agent kind '" + std::string(s) + "'");
}

/// When to draw a new gamma. Rounds are 1-based.
struct Schedule {
  enum class Mode { every_round, every_m_rounds, at_times };
  Mode mode = Mode::every_round;
  std::int64_t period = 1;
  std::vector<std::int64_t> times;

  static Schedule every_round() { return {}; }
  static Schedule every(std::int64_t m) { return {Mode::every_m_rounds, m, {}}; }
  static Schedule at(std::vector<std::int64_t> t) { return {Mode::at_times, 1, std::move(t)}; }

  void validate() const {
    if (mode == Mode::every_m_rounds && period < 1) throw ConfigError("refresh period must be >= 1");
    for (std::size_t i = 1; i < times.size(); ++i)
      if (times[i] <= times[i - 1]) throw ConfigError("refresh times must be strictly increasing");
  }

  /// Whether the decision at round t needs a fresh gamma, given the round of
  /// the previous refresh (0 = none yet). The first decision always refreshes.
  /// every_m_rounds fires once per block {1..m}, {m+1..2m}, ...; with one
  /// decision per round that is ceil(T / m) refreshes over T rounds.
  [[nodiscard]] bool fires(std::int64_t t, std::int64_t last) const {
    if (last == 0) return true;
    switch (mode) {
      case Mode::every_round: return t > last;
      case Mode::every_m_rounds: return (t - 1) / period > (last - 1) / period;
      case Mode::at_times:
        for (auto tau : times)
          if (tau > last && tau <= t) return true;
        return false;
    }
    return false;
  }
};

/// Empirical-Bayes refresh of sigma1 (LMM) or psi (Beta models) by grid search.
struct EbConfig {
  bool enabled = false;
  std::int64_t refresh_period = 100;
  std::vector<double> grid;

  void validate() const {
    if (!enabled) return;
    if (grid.empty()) throw ConfigError("empirical-Bayes grid must not be empty");
    if (refresh_period < 1) throw ConfigError("empirical-Bayes period must be >= 1");
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (!(grid[i] > 0.0)) throw ConfigError("empirical-Bayes grid values must be positive");
      if (i > 0 && grid[i] <= grid[i - 1]) throw ConfigError("empirical-Bayes grid must be sorted");
    }
  }
};

/// Grid maximizer of the LMM marginal likelihood over sigma1; ties go to
/// the smaller value. Returns `current` when the history is empty.
[[nodiscard]] inline double empirical_bayes_refresh(const LmmSpec& spec, const ItemStatistics& stats,
                                                    const ItemCatalog& catalog,
                                                    const std::vector<double>& grid) {
  if (stats.total_pulls() == 0 || grid.empty()) return spec.sigma1();
  double best = grid.front();
  double best_ll = -std::numeric_limits<double>::infinity();
  for (double s1 : grid) {
    const double ll = lmm_log_marginal_likelihood(spec.with_sigma1(s1), stats, catalog);
    if (ll > best_ll) {
      best_ll = ll;
      best = s1;
    }
  }
  return best;
}

/// Grid maximizer over psi of the Monte-Carlo marginal likelihood built
/// from the supplied gamma draws; ties go to the smaller value.
[[nodiscard]] inline double empirical_bayes_refresh(const BetaLogisticSpec& spec,
                                                    const ItemCatalog& catalog,
                                                    const ItemStatistics& stats, CountFamily family,
                                                    const std::vector<Eigen::VectorXd>& gamma_draws,
                                                    const std::vector<double>& grid) {
  if (stats.total_pulls() == 0 || grid.empty() || gamma_draws.empty()) return spec.psi;
  double best = grid.front();
  double best_ll = -std::numeric_limits<double>::infinity();
  for (double psi : grid) {
    const double ll = beta_log_marginal_likelihood(spec.with_psi(psi), catalog, stats, family, gamma_draws);
    if (ll > best_ll) {
      best_ll = ll;
      best = psi;
    }
  }
  return best;
}

/// What an agent is told about the problem. Agents never see true theta.
struct ModelContext {
  ProblemKind problem = ProblemKind::semi_bandit;
  std::size_t slate_size = 1;
  GaussianBelief gamma_prior;                 // Q(gamma)
  double sigma1 = 0.5;                        // LMM generalization std
  double sigma2 = 1.0;                        // LMM observation std
  double psi = 1.0;                           // Beta precision
  LogisticLink link = LogisticLink::plain;    // Beta link
  std::optional<Eigen::VectorXd> gamma_true;  // oracle-TS only
};

struct AgentConfig {
  AgentKind kind = AgentKind::mtss;
  std::string name;                   // output label; defaults to the kind name
  std::optional<Schedule> schedule;   // default: every 100 rounds (semi), 500 (cascade, MNL)
  EbConfig eb;
  GammaSamplerConfig sampler;
  std::optional<double> agnostic_prior_variance;  // semi; default lambda_1(Sigma_gamma) + sigma1^2
  double agnostic_alpha = 1.0;                    // cascade / MNL Beta(alpha, beta) prior
  double agnostic_beta = 1.0;

  [[nodiscard]] std::string label() const { return name.empty() ? std::string(to_string(kind)) : name; }
};

[[nodiscard]] inline Schedule default_schedule(ProblemKind p) {
  return p == ProblemKind::semi_bandit ? Schedule::every(100) : Schedule::every(500);
}

/// Greedy action for sampled item parameters.
[[nodiscard]] inline Action greedy_action(ProblemKind problem, const Eigen::VectorXd& theta,
                                          const ItemCatalog& catalog, std::size_t k) {
  switch (problem) {
    case ProblemKind::semi_bandit: return top_k(theta, k);
    case ProblemKind::cascade: return rank_top_k(theta, k);
    case ProblemKind::mnl: {
      const auto n = theta.size();
      Eigen::VectorXd v(n), eta(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        v(i) = 1.0 / clamp_theta(theta(i)) - 1.0;
        eta(i) = catalog.revenue(static_cast<Index>(i));
      }
      return optimal_assortment(v, eta, k);
    }
  }
  throw std::logic_error("unknown problem kind");
}

class Agent {
 public:
  virtual ~Agent() = default;

  /// Action for the next round (the next epoch for MNL). `stream` is the
  /// agent's stream for this replication; it is only read, never advanced.
  [[nodiscard]] Action select_action(const ItemCatalog& catalog, const InteractionHistory& history,
                                     const Rng& stream) {
    const std::int64_t t = history.round_index() + 1;
    const Rng round = stream.stream(static_cast<std::uint64_t>(t));
    const Eigen::VectorXd theta = sample_theta(catalog, history, t, round);
    return greedy_action(ctx_.problem, theta, catalog, ctx_.slate_size);
  }

  /// One draw of theta as used for the decision at round t.
  [[nodiscard]] virtual Eigen::VectorXd sample_theta(const ItemCatalog& catalog,
                                                     const InteractionHistory& history,
                                                     std::int64_t t, const Rng& round) = 0;

  [[nodiscard]] const std::string& name() const noexcept { return name_; }
  [[nodiscard]] AgentKind kind() const noexcept { return kind_; }
  [[nodiscard]] const ModelContext& context() const noexcept { return ctx_; }
  /// Number of times a new gamma was drawn from its posterior.
  [[nodiscard]] std::int64_t gamma_refreshes() const noexcept { return refreshes_; }
  /// Current generalization hyperparameter (sigma1 or psi); moves under empirical Bayes.
  [[nodiscard]] virtual double hyperparameter() const noexcept { return 0.0; }

 protected:
  Agent(AgentKind kind, std::string name, ModelContext ctx)
      : kind_(kind), name_(std::move(name)), ctx_(std::move(ctx)) {}

  AgentKind kind_;
  std::string name_;
  ModelContext ctx_;
  std::int64_t refreshes_ = 0;
};

namespace detail {

inline Eigen::VectorXd draw_gaussian_items(const PerItemGaussian& post, const ItemCatalog& catalog,
                                           const Rng& base) {
  Eigen::VectorXd theta(post.mean.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Rng r = base.stream(catalog.item_ids[static_cast<std::size_t>(i)]);
    theta(i) = post.mean(i) + std::sqrt(post.variance(i)) * r.normal();
  }
  return theta;
}

// ---------------------------------------------------------------------------
// Semi-bandits with the linear mixed model

class LmmMetaAgent final : public Agent {
 public:
  LmmMetaAgent(const AgentConfig& cfg, ModelContext ctx)
      : Agent(AgentKind::mtss, cfg.label(), std::move(ctx)),
        schedule_(cfg.schedule.value_or(default_schedule(ctx_.problem))),
        eb_(cfg.eb),
        sigma1_(ctx_.sigma1) {}

  Eigen::VectorXd sample_theta(const ItemCatalog& catalog, const InteractionHistory& history,
                               std::int64_t t, const Rng& round) override {
    const auto& stats = history.statistics();
    if (eb_.enabled && Schedule::every(eb_.refresh_period).fires(t, last_eb_) && t > 1) {
      sigma1_ = empirical_bayes_refresh(spec(), stats, catalog, eb_.grid);
      last_eb_ = t;
    }
    if (schedule_.fires(t, last_refresh_)) {
      Rng r = round.stream("gamma");
      gamma_ = posterior_gamma(spec(), stats, catalog).sample(r);
      last_refresh_ = t;
      ++refreshes_;
    }
    return draw_gaussian_items(posterior_theta_given_gamma(spec(), stats, catalog, gamma_), catalog,
                               round.stream("theta"));
  }

  [[nodiscard]] double hyperparameter() const noexcept override { return sigma1_; }

 private:
  [[nodiscard]] LmmSpec spec() const {
    return LmmSpec(ctx_.gamma_prior.mean(), ctx_.gamma_prior.covariance(), sigma1_, ctx_.sigma2);
  }

  Schedule schedule_;
  EbConfig eb_;
  double sigma1_;
  Eigen::VectorXd gamma_;
  std::int64_t last_refresh_ = 0;
  std::int64_t last_eb_ = 0;
};

class LmmOracleAgent final : public Agent {
 public:
  LmmOracleAgent(const AgentConfig& cfg, ModelContext ctx)
      : Agent(AgentKind::oracle, cfg.label(), std::move(ctx)) {
    if (!ctx_.gamma_true) throw ConfigError("oracle-TS needs the true gamma");
  }

  Eigen::VectorXd sample_theta(const ItemCatalog& catalog, const InteractionHistory& history,
                               std::int64_t, const Rng& round) override {
    const PerItemGaussian post = gaussian_item_posterior(catalog.features * *ctx_.gamma_true,
                                                         ctx_.sigma1 * ctx_.sigma1, ctx_.sigma2,
                                                         history.statistics());
    return draw_gaussian_items(post, catalog, round.stream("theta"));
  }

  [[nodiscard]] double hyperparameter() const noexcept override { return ctx_.sigma1; }
};

class LmmAgnosticAgent final : public Agent {
 public:
  LmmAgnosticAgent(const AgentConfig& cfg, ModelContext ctx)
      : Agent(AgentKind::agnostic, cfg.label(), std::move(ctx)) {
    if (cfg.agnostic_prior_variance) {
      prior_var_ = *cfg.agnostic_prior_variance;
    } else {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(ctx_.gamma_prior.covariance(),
                                                         Eigen::EigenvaluesOnly);
      prior_var_ = eig.eigenvalues().maxCoeff() + ctx_.sigma1 * ctx_.sigma1;
    }
    if (!(prior_var_ > 0.0)) throw ConfigError("agnostic prior variance must be positive");
  }

  Eigen::VectorXd sample_theta(const ItemCatalog& catalog, const InteractionHistory& history,
                               std::int64_t, const Rng& round) override {
    const auto n = static_cast<Eigen::Index>(catalog.n_items());
    const PerItemGaussian post =
        gaussian_item_posterior(Eigen::VectorXd::Zero(n), prior_var_, ctx_.sigma2, history.statistics());
    return draw_gaussian_items(post, catalog, round.stream("theta"));
  }

  [[nodiscard]] double hyperparameter() const noexcept override { return prior_var_; }

 private:
  double prior_var_ = 1.0;
};

class LmmDeterminedAgent final : public Agent {
 public:
  LmmDeterminedAgent(const AgentConfig& cfg, ModelContext ctx)
      : Agent(AgentKind::determined, cfg.label(), std::move(ctx)),
        schedule_(cfg.schedule.value_or(default_schedule(ctx_.problem))) {}

  Eigen::VectorXd sample_theta(const ItemCatalog& catalog, const InteractionHistory& history,
                               std::int64_t t, const Rng& round) override {
    if (schedule_.fires(t, last_refresh_)) {
      Rng r = round.stream("gamma");
      gamma_ = bayes_linear_posterior(ctx_.gamma_prior, ctx_.sigma2, history.statistics(), catalog).sample(r);
      last_refresh_ = t;
      ++refreshes_;
    }
    return catalog.features * gamma_;
  }

 private:
  Schedule schedule_;
  Eigen::VectorXd gamma_;
  std::int64_t last_refresh_ = 0;
};

// ---------------------------------------------------------------------------
// Cascading and MNL bandits with Beta-logistic models

class BetaMetaAgent final : public Agent {
 public:
  BetaMetaAgent(const AgentConfig& cfg, ModelContext ctx)
      : Agent(AgentKind::mtss, cfg.label(), std::move(ctx)),
        schedule_(cfg.schedule.value_or(default_schedule(ctx_.problem))),
        eb_(cfg.eb),
        sampler_(cfg.sampler),
        psi_(ctx_.psi),
        family_(count_family_for(ctx_.problem)) {
    sampler_.validate();
  }

  Eigen::VectorXd sample_theta(const ItemCatalog& catalog, const InteractionHistory& history,
                               std::int64_t t, const Rng& round) override {
    const auto& stats = history.statistics();
    if (eb_.enabled && !draws_.empty() && Schedule::every(eb_.refresh_period).fires(t, last_eb_) && t > 1) {
      psi_ = empirical_bayes_refresh(spec(), catalog, stats, family_, draws_, eb_.grid);
      last_eb_ = t;
    }
    if (schedule_.fires(t, last_refresh_)) {
      Rng r = round.stream("mcmc");
      const BetaLogisticSpec s = spec();
      draws_.clear();
      if (!started_) {
        chain_ = start_gamma_chain(s, sampler_, r);
        advance_gamma_chain(chain_, s, catalog, stats, family_, sampler_, sampler_.n_burnin, true, r);
        advance_gamma_chain(chain_, s, catalog, stats, family_, sampler_, sampler_.n_keep, false, r, &draws_);
        started_ = true;
      } else {
        advance_gamma_chain(chain_, s, catalog, stats, family_, sampler_, sampler_.n_refresh, false, r,
                            &draws_);
      }
      last_refresh_ = t;
      ++refreshes_;
    }
    return sample_theta_given_gamma(spec(), catalog, stats, family_, chain_.gamma, round.stream("theta"));
  }

  [[nodiscard]] double hyperparameter() const noexcept override { return psi_; }
  [[nodiscard]] const GammaChain& chain() const noexcept { return chain_; }

 private:
  [[nodiscard]] BetaLogisticSpec spec() const { return {psi_, ctx_.link, ctx_.gamma_prior}; }

  Schedule schedule_;
  EbConfig eb_;
  GammaSamplerConfig sampler_;
  double psi_;
  CountFamily family_;
  GammaChain chain_;
  std::vector<Eigen::VectorXd> draws_;
  bool started_ = false;
  std::int64_t last_refresh_ = 0;
  std::int64_t last_eb_ = 0;
};

class BetaOracleAgent final : public Agent {
 public:
  BetaOracleAgent(const AgentConfig& cfg, ModelContext ctx)
      : Agent(AgentKind::oracle, cfg.label(), std::move(ctx)), family_(count_family_for(ctx_.problem)) {
    if (!ctx_.gamma_true) throw ConfigError("oracle-TS needs the true gamma");
  }

  Eigen::VectorXd sample_theta(const ItemCatalog& catalog, const InteractionHistory& history,
                               std::int64_t, const Rng& round) override {
    const BetaLogisticSpec spec(ctx_.psi, ctx_.link, ctx_.gamma_prior);
    return sample_theta_given_gamma(spec, catalog, history.statistics(), family_, *ctx_.gamma_true,
                                    round.stream("theta"));
  }

  [[nodiscard]] double hyperparameter() const noexcept override { return ctx_.psi; }

 private:
  CountFamily family_;
};

class BetaAgnosticAgent final : public Agent {
 public:
  BetaAgnosticAgent(const AgentConfig& cfg, ModelContext ctx)
      : Agent(AgentKind::agnostic, cfg.label(), std::move(ctx)),
        alpha_(cfg.agnostic_alpha),
        beta_(cfg.agnostic_beta),
        family_(count_family_for(ctx_.problem)) {
    if (!(alpha_ > 0.0) || !(beta_ > 0.0)) throw ConfigError("agnostic Beta prior must be positive");
  }

  Eigen::VectorXd sample_theta(const ItemCatalog& catalog, const InteractionHistory& history,
                               std::int64_t, const Rng& round) override {
    const auto n = static_cast<Eigen::Index>(catalog.n_items());
    BetaBelief prior{Eigen::VectorXd::Constant(n, alpha_), Eigen::VectorXd::Constant(n, beta_)};
    return sample_beta_belief(conjugate_posterior(std::move(prior), history.statistics(), family_),
                              catalog, round.stream("theta"));
  }

 private:
  double alpha_, beta_;
  CountFamily family_;
};

class BetaDeterminedAgent final : public Agent {
 public:
  BetaDeterminedAgent(const AgentConfig& cfg, ModelContext ctx)
      : Agent(AgentKind::determined, cfg.label(), std::move(ctx)),
        schedule_(cfg.schedule.value_or(default_schedule(ctx_.problem))),
        sampler_(cfg.sampler),
        family_(count_family_for(ctx_.problem)) {
    sampler_.validate();
  }

  Eigen::VectorXd sample_theta(const ItemCatalog& catalog, const InteractionHistory& history,
                               std::int64_t t, const Rng& round) override {
    const auto& stats = history.statistics();
    if (schedule_.fires(t, last_refresh_)) {
      Rng r = round.stream("mcmc");
      if (!started_) {
        chain_.gamma = ctx_.gamma_prior.sample(r);
        chain_.proposal_scale = sampler_.initial_scale(ctx_.gamma_prior.dim());
        advance_determined_chain(chain_, ctx_.gamma_prior, ctx_.link, catalog, stats, family_, sampler_,
                                 sampler_.n_burnin, true, r);
        advance_determined_chain(chain_, ctx_.gamma_prior, ctx_.link, catalog, stats, family_, sampler_,
                                 sampler_.n_keep, false, r);
        started_ = true;
      } else {
        advance_determined_chain(chain_, ctx_.gamma_prior, ctx_.link, catalog, stats, family_, sampler_,
                                 sampler_.n_refresh, false, r);
      }
      last_refresh_ = t;
      ++refreshes_;
    }
    const Eigen::VectorXd z = catalog.features * chain_.gamma;
    return z.unaryExpr([this](double v) { return link_mean(ctx_.link, v); });
  }

 private:
  Schedule schedule_;
  GammaSamplerConfig sampler_;
  CountFamily family_;
  GammaChain chain_;
  bool started_ = false;
  std::int64_t last_refresh_ = 0;
};

}  // namespace detail

[[nodiscard]] inline std::unique_ptr<Agent> make_agent(const AgentConfig& cfg, ModelContext ctx) {
  if (cfg.schedule) cfg.schedule->validate();
  cfg.eb.validate();
  const bool lmm = ctx.problem == ProblemKind::semi_bandit;
  switch (cfg.kind) {
    case AgentKind::mtss:
      if (lmm) return std::make_unique<detail::LmmMetaAgent>(cfg, std::move(ctx));
      return std::make_unique<detail::BetaMetaAgent>(cfg, std::move(ctx));
    case AgentKind::oracle:
      if (lmm) return std::make_unique<detail::LmmOracleAgent>(cfg, std::move(ctx));
      return std::make_unique<detail::BetaOracleAgent>(cfg, std::move(ctx));
    case AgentKind::agnostic:
      if (lmm) return std::make_unique<detail::LmmAgnosticAgent>(cfg, std::move(ctx));
      return std::make_unique<detail::BetaAgnosticAgent>(cfg, std::move(ctx));
    case AgentKind::determined:
      if (lmm) return std::make_unique<detail::LmmDeterminedAgent>(cfg, std::move(ctx));
      return std::make_unique<detail::BetaDeterminedAgent>(cfg, std::move(ctx));
  }
  throw std::logic_error("unknown agent kind");
}

/// The agent's view of a scenario: prior, known hyperparameters and, for
/// oracle-TS, the true gamma.
[[nodiscard]] inline ModelContext model_context(const ScenarioConfig& scenario,
                                                const Eigen::VectorXd& gamma_true) {
  ModelContext ctx;
  ctx.problem = scenario.problem;
  ctx.slate_size = scenario.slate_size;
  ctx.gamma_prior = scenario.gamma_prior();
  ctx.sigma2 = scenario.sigma2;
  ctx.gamma_true = gamma_true;
  std::visit(
      [&](const auto& src) {
        using T = std::decay_t<decltype(src)>;
        if constexpr (std::is_same_v<T, BetaLogisticSource>) {
          ctx.psi = src.psi;
          ctx.link = src.link;
        } else {
          ctx.sigma1 = src.sigma1;
        }
      },
      scenario.theta_source);
  return ctx;
}

struct MnlEpochResult {
  SubsetAction assortment;
  MnlEpochFeedback feedback;
};

/// One MNL epoch: the agent picks an assortment from sampled theta, the
/// environment offers it until no purchase, and the history gets a single
/// epoch record (one geometric observation per offered item).
inline MnlEpochResult run_mnl_agent_epoch(Agent& agent, const Environment& env,
                                          InteractionHistory& history, const Rng& agent_stream,
                                          Rng& env_rng) {
  Action a = agent.select_action(env.catalog(), history, agent_stream);
  MnlEpochResult out{std::get<SubsetAction>(std::move(a)), {}};
  out.feedback = env.run_epoch_mnl(out.assortment, env_rng);
  history.record(Event{out.assortment, out.feedback});
  return out;
}

}  // namespace mtss
