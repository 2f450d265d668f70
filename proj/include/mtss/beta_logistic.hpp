// Beta generalization models with a logistic mean:
//
//   theta_i ~ Beta(m(x_i' gamma), psi)          (mean-precision form)
//   plain link:   m(z) = logistic(z)             cascading bandits, Bernoulli clicks
//   shifted link: m(z) = (logistic(z) + 1) / 2   MNL bandits, geometric epoch counts
//
// Given gamma, theta has a conjugate Beta posterior. The posterior of gamma
// is sampled with Metropolis-within-Gibbs: exact Beta draws of theta given
// gamma alternate with a random-walk Metropolis step on gamma.
#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/gamma.hpp>

#include "mtss/core.hpp"
#include "mtss/lmm.hpp"
#include "mtss/rng.hpp"

namespace mtss {

enum class LogisticLink { plain, shifted };

/// Observation family for the Beta-conjugate models.
///   bernoulli: success = click on an examined item (cascade)
///   geometric: one epoch with y purchases, pmf theta (1 - theta)^y, y = 0, 1, ... (MNL)
enum class CountFamily { bernoulli, geometric };

[[nodiscard]] inline CountFamily count_family_for(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::cascade: return CountFamily::bernoulli;
    case ProblemKind::mnl: return CountFamily::geometric;
    case ProblemKind::semi_bandit: break;
  }
  throw std::invalid_argument("semi-bandits have no Beta-conjugate count family");
}

[[nodiscard]] inline double logistic(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// log(logistic(z)) without overflow.
[[nodiscard]] inline double log_logistic(double z) noexcept {
  return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
}

[[nodiscard]] inline double link_mean(LogisticLink link, double z) noexcept {
  const double p = logistic(z);
  return link == LogisticLink::plain ? p : 0.5 * (p + 1.0);
}

/// (log m, log(1 - m)) for the link mean at z.
[[nodiscard]] inline std::pair<double, double> log_link_mean(LogisticLink link, double z) noexcept {
  if (link == LogisticLink::plain) return {log_logistic(z), log_logistic(-z)};
  constexpr double ln2 = std::numbers::ln2;
  return {std::log1p(logistic(z)) - ln2, log_logistic(-z) - ln2};
}

inline constexpr double kThetaFloor = 1e-12;

[[nodiscard]] inline double clamp_theta(double t) noexcept {
  return std::clamp(t, kThetaFloor, 1.0 - kThetaFloor);
}

struct BetaLogisticSpec {
  double psi = 1.0;
  LogisticLink link = LogisticLink::plain;
  GaussianBelief gamma_prior;

  BetaLogisticSpec(double psi_, LogisticLink link_, GaussianBelief prior)
      : psi(psi_), link(link_), gamma_prior(std::move(prior)) {
    if (!(psi > 0.0) || !std::isfinite(psi)) throw ConfigError("psi must be positive and finite");
  }

  [[nodiscard]] BetaLogisticSpec with_psi(double p) const { return {p, link, gamma_prior}; }
};

struct BetaBelief {
  Eigen::VectorXd alpha;
  Eigen::VectorXd beta;

  [[nodiscard]] Eigen::Index size() const noexcept { return alpha.size(); }
  [[nodiscard]] Eigen::VectorXd mean() const {
    return (alpha.array() / (alpha.array() + beta.array())).matrix();
  }
  friend bool operator==(const BetaBelief& a, const BetaBelief& b) {
    return a.alpha == b.alpha && a.beta == b.beta;
  }
};

/// alpha_i = m_i psi, beta_i = (1 - m_i) psi with m_i the link mean at x_i' gamma.
/// Shapes are floored at 1e-300 so that saturated means stay valid Beta shapes.
[[nodiscard]] inline BetaBelief prior_from_gamma(const BetaLogisticSpec& spec,
                                                 const ItemCatalog& catalog,
                                                 const Eigen::VectorXd& gamma) {
  const Eigen::VectorXd z = catalog.features * gamma;
  BetaBelief b{Eigen::VectorXd(z.size()), Eigen::VectorXd(z.size())};
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double m = link_mean(spec.link, z(i));
    const double one_minus =
        spec.link == LogisticLink::plain ? logistic(-z(i)) : 0.5 * logistic(-z(i));
    b.alpha(i) = std::max(m * spec.psi, 1e-300);
    b.beta(i) = std::max(one_minus * spec.psi, 1e-300);
  }
  return b;
}

[[nodiscard]] inline BetaBelief update_bernoulli(BetaBelief belief, Index item, bool success) {
  const auto i = static_cast<Eigen::Index>(item);
  if (success)
    belief.alpha(i) += 1.0;
  else
    belief.beta(i) += 1.0;
  return belief;
}

/// One epoch with `purchases` purchases: likelihood theta (1 - theta)^purchases.
[[nodiscard]] inline BetaBelief update_geometric(BetaBelief belief, Index item, std::int64_t purchases) {
  if (purchases < 0) throw std::invalid_argument("purchases must be non-negative");
  const auto i = static_cast<Eigen::Index>(item);
  belief.alpha(i) += 1.0;
  belief.beta(i) += static_cast<double>(purchases);
  return belief;
}

/// Conjugate pseudo-counts carried by the history: (alpha increment, beta increment).
[[nodiscard]] inline std::pair<Eigen::VectorXd, Eigen::VectorXd> conjugate_counts(
    const ItemStatistics& stats, CountFamily family) {
  const auto n = static_cast<Eigen::Index>(stats.size());
  Eigen::VectorXd a(n), b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (family == CountFamily::bernoulli) {
      a(i) = stats.totals[k];
      b(i) = stats.failures(k);
    } else {
      a(i) = static_cast<double>(stats.pulls[k]);
      b(i) = stats.totals[k];
    }
  }
  return {std::move(a), std::move(b)};
}

[[nodiscard]] inline BetaBelief conjugate_posterior(BetaBelief prior, const ItemStatistics& stats,
                                                    CountFamily family) {
  auto [a, b] = conjugate_counts(stats, family);
  prior.alpha += a;
  prior.beta += b;
  return prior;
}

/// Independent draws theta_i ~ Beta(alpha_i, beta_i), each from the stream
/// addressed by the item's id so that draws follow items, not positions.
[[nodiscard]] inline Eigen::VectorXd sample_beta_belief(const BetaBelief& belief,
                                                        const ItemCatalog& catalog, const Rng& base,
                                                        std::int64_t* clamped = nullptr) {
  Eigen::VectorXd theta(belief.size());
  for (Eigen::Index i = 0; i < belief.size(); ++i) {
    Rng r = base.stream(catalog.item_ids[static_cast<std::size_t>(i)]);
    const double t = r.beta(belief.alpha(i), belief.beta(i));
    const double c = clamp_theta(t);
    if (clamped != nullptr && c != t) ++*clamped;
    theta(i) = c;
  }
  return theta;
}

/// theta ~ P(theta | H, gamma): Beta prior at gamma composed with the conjugate update.
[[nodiscard]] inline Eigen::VectorXd sample_theta_given_gamma(const BetaLogisticSpec& spec,
                                                              const ItemCatalog& catalog,
                                                              const ItemStatistics& stats,
                                                              CountFamily family,
                                                              const Eigen::VectorXd& gamma,
                                                              const Rng& base) {
  return sample_beta_belief(conjugate_posterior(prior_from_gamma(spec, catalog, gamma), stats, family),
                            catalog, base);
}

// ---------------------------------------------------------------------------
// Metropolis-within-Gibbs for gamma

struct GammaSamplerConfig {
  std::size_t n_burnin = 500;
  std::size_t n_keep = 500;
  std::size_t n_refresh = 50;     // warm-start iterations per later refresh
  double proposal_scale = 0.0;    // <= 0 selects 0.1 / sqrt(d)
  double adapt_target = 0.3;
  bool gibbs_theta_refresh = true;  // false: theta block redrawn once per advance call

  void validate() const {
    if (n_keep < 1) throw ConfigError("n_keep must be at least 1");
    if (!(adapt_target > 0.0 && adapt_target < 1.0))
      throw ConfigError("adapt_target must lie in (0, 1)");
    if (proposal_scale < 0.0 || !std::isfinite(proposal_scale))
      throw ConfigError("proposal_scale must be positive");
  }

  [[nodiscard]] double initial_scale(Eigen::Index dim) const {
    return proposal_scale > 0.0 ? proposal_scale : 0.1 / std::sqrt(static_cast<double>(dim));
  }
};

/// Persistent state of a gamma chain; carried across refreshes (warm start).
struct GammaChain {
  Eigen::VectorXd gamma;
  Eigen::VectorXd theta;
  double proposal_scale = 0.1;
  std::int64_t iterations = 0;
  std::int64_t proposed = 0;
  std::int64_t accepted = 0;
  std::int64_t theta_draws = 0;
  std::int64_t clamped = 0;  // theta draws that hit [1e-12, 1 - 1e-12]

  [[nodiscard]] double acceptance_rate() const noexcept {
    return proposed == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(proposed);
  }
  [[nodiscard]] double clamped_fraction() const noexcept {
    return theta_draws == 0 ? 0.0 : static_cast<double>(clamped) / static_cast<double>(theta_draws);
  }
};

namespace detail {

inline double log_beta_fn(double a, double b) {
  return boost::math::lgamma(a) + boost::math::lgamma(b) - boost::math::lgamma(a + b);
}

// sum_i log Beta(theta_i; m_i psi, (1 - m_i) psi), dropping the psi-only constant.
inline double theta_block_log_density(const BetaLogisticSpec& spec, const Eigen::VectorXd& z,
                                      const Eigen::VectorXd& log_theta,
                                      const Eigen::VectorXd& log_one_minus) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double m = link_mean(spec.link, z(i));
    const double a = std::max(m * spec.psi, 1e-300);
    const double b = std::max(
        (spec.link == LogisticLink::plain ? logistic(-z(i)) : 0.5 * logistic(-z(i))) * spec.psi,
        1e-300);
    s += (a - 1.0) * log_theta(i) + (b - 1.0) * log_one_minus(i) - boost::math::lgamma(a) -
         boost::math::lgamma(b);
  }
  return s;
}

// Robbins-Monro style update of the proposal scale on batch acceptance rates.
inline constexpr std::int64_t kAdaptBatch = 25;

inline double adapted_scale(double scale, double batch_rate, double target, std::int64_t batch_no) {
  const double step = 2.0 / std::sqrt(static_cast<double>(std::max<std::int64_t>(batch_no, 1)));
  return std::clamp(scale * std::exp(step * (batch_rate - target)), 1e-6, 1e3);
}

}  // namespace detail

/// Fresh chain started from a prior draw of gamma.
[[nodiscard]] inline GammaChain start_gamma_chain(const BetaLogisticSpec& spec,
                                                  const GammaSamplerConfig& config, Rng& rng) {
  GammaChain chain;
  chain.gamma = spec.gamma_prior.sample(rng);
  chain.proposal_scale = config.initial_scale(spec.gamma_prior.dim());
  return chain;
}

/// Runs `iterations` Metropolis-within-Gibbs sweeps targeting P(gamma | H).
/// With `adapt`, the proposal scale is tuned toward config.adapt_target.
/// Kept states are appended to `kept` when it is non-null.
inline void advance_gamma_chain(GammaChain& chain, const BetaLogisticSpec& spec,
                                const ItemCatalog& catalog, const ItemStatistics& stats,
                                CountFamily family, const GammaSamplerConfig& config,
                                std::size_t iterations, bool adapt, Rng& rng,
                                std::vector<Eigen::VectorXd>* kept = nullptr) {
  const auto n = static_cast<Eigen::Index>(catalog.n_items());
  auto [add_a, add_b] = conjugate_counts(stats, family);
  Eigen::VectorXd z = catalog.features * chain.gamma;
  Eigen::VectorXd log_theta(n), log_one_minus(n);

  auto refresh_theta = [&] {
    if (chain.theta.size() != n) chain.theta.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double m = link_mean(spec.link, z(i));
      const double a = std::max(m * spec.psi, 1e-300) + add_a(i);
      const double b =
          std::max((spec.link == LogisticLink::plain ? logistic(-z(i)) : 0.5 * logistic(-z(i))) *
                       spec.psi,
                   1e-300) +
          add_b(i);
      const double t = rng.beta(a, b);
      const double c = clamp_theta(t);
      if (c != t) ++chain.clamped;
      ++chain.theta_draws;
      chain.theta(i) = c;
      log_theta(i) = std::log(c);
      log_one_minus(i) = std::log1p(-c);
    }
  };

  std::int64_t batch_accepted = 0, batch_count = 0;
  const Eigen::Index d = chain.gamma.size();
  Eigen::VectorXd proposal(d);
  double current = 0.0;
  for (std::size_t it = 0; it < iterations; ++it) {
    if (it == 0 || config.gibbs_theta_refresh) {
      refresh_theta();
      current = spec.gamma_prior.log_kernel(chain.gamma) +
                detail::theta_block_log_density(spec, z, log_theta, log_one_minus);
    }
    for (Eigen::Index k = 0; k < d; ++k) proposal(k) = chain.gamma(k) + chain.proposal_scale * rng.normal();
    const Eigen::VectorXd z_prop = catalog.features * proposal;
    const double cand = spec.gamma_prior.log_kernel(proposal) +
                        detail::theta_block_log_density(spec, z_prop, log_theta, log_one_minus);
    ++chain.proposed;
    const double log_u = std::log(rng.uniform_open());
    if (std::isfinite(cand) && log_u < cand - current) {
      chain.gamma = proposal;
      z = z_prop;
      current = cand;
      ++chain.accepted;
      ++batch_accepted;
    }
    ++chain.iterations;
    if (adapt && ++batch_count == detail::kAdaptBatch) {
      const double rate = static_cast<double>(batch_accepted) / static_cast<double>(batch_count);
      chain.proposal_scale = detail::adapted_scale(chain.proposal_scale, rate, config.adapt_target,
                                                   chain.iterations / detail::kAdaptBatch);
      batch_accepted = batch_count = 0;
    }
    if (kept != nullptr) kept->push_back(chain.gamma);
  }
}

struct GammaPosteriorSample {
  Eigen::VectorXd gamma;                // final chain state
  std::vector<Eigen::VectorXd> draws;   // the n_keep retained states
  GammaChain chain;
};

/// Fresh chain: n_burnin adaptive sweeps, then n_keep retained sweeps.
[[nodiscard]] inline GammaPosteriorSample sample_gamma_posterior(const BetaLogisticSpec& spec,
                                                                 const ItemCatalog& catalog,
                                                                 const ItemStatistics& stats,
                                                                 CountFamily family,
                                                                 const GammaSamplerConfig& config,
                                                                 Rng& rng) {
  config.validate();
  GammaPosteriorSample out;
  out.chain = start_gamma_chain(spec, config, rng);
  advance_gamma_chain(out.chain, spec, catalog, stats, family, config, config.n_burnin, true, rng);
  out.draws.reserve(config.n_keep);
  advance_gamma_chain(out.chain, spec, catalog, stats, family, config, config.n_keep, false, rng,
                      &out.draws);
  out.gamma = out.chain.gamma;
  return out;
}

// ---------------------------------------------------------------------------
// Deterministic-link model (theta_i = m(x_i' gamma)), used by feature-determined TS

/// log Q(gamma) + sum_i [a_i log m_i + b_i log(1 - m_i)] up to a constant.
[[nodiscard]] inline double determined_log_posterior(const GaussianBelief& prior, LogisticLink link,
                                                     const ItemCatalog& catalog,
                                                     const Eigen::VectorXd& add_a,
                                                     const Eigen::VectorXd& add_b,
                                                     const Eigen::VectorXd& gamma) {
  const Eigen::VectorXd z = catalog.features * gamma;
  double s = prior.log_kernel(gamma);
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (add_a(i) == 0.0 && add_b(i) == 0.0) continue;
    const auto [lm, l1m] = log_link_mean(link, z(i));
    s += add_a(i) * lm + add_b(i) * l1m;
  }
  return s;
}

/// Random-walk Metropolis on gamma for the deterministic-link model; state
/// lives in `chain` (its theta block is unused).
inline void advance_determined_chain(GammaChain& chain, const GaussianBelief& prior, LogisticLink link,
                                     const ItemCatalog& catalog, const ItemStatistics& stats,
                                     CountFamily family, const GammaSamplerConfig& config,
                                     std::size_t iterations, bool adapt, Rng& rng) {
  auto [add_a, add_b] = conjugate_counts(stats, family);
  double current = determined_log_posterior(prior, link, catalog, add_a, add_b, chain.gamma);
  std::int64_t batch_accepted = 0, batch_count = 0;
  Eigen::VectorXd proposal(chain.gamma.size());
  for (std::size_t it = 0; it < iterations; ++it) {
    for (Eigen::Index k = 0; k < proposal.size(); ++k)
      proposal(k) = chain.gamma(k) + chain.proposal_scale * rng.normal();
    const double cand = determined_log_posterior(prior, link, catalog, add_a, add_b, proposal);
    ++chain.proposed;
    if (std::isfinite(cand) && std::log(rng.uniform_open()) < cand - current) {
      chain.gamma = proposal;
      current = cand;
      ++chain.accepted;
      ++batch_accepted;
    }
    ++chain.iterations;
    if (adapt && ++batch_count == detail::kAdaptBatch) {
      const double rate = static_cast<double>(batch_accepted) / static_cast<double>(batch_count);
      chain.proposal_scale = detail::adapted_scale(chain.proposal_scale, rate, config.adapt_target,
                                                   chain.iterations / detail::kAdaptBatch);
      batch_accepted = batch_count = 0;
    }
  }
}

// ---------------------------------------------------------------------------
// Empirical Bayes for psi

/// Monte-Carlo log marginal likelihood of the history at precision `psi`,
/// averaging the Beta-conjugate evidence over the supplied gamma draws:
///   log mean_g prod_i B(a_i + s_i, b_i + f_i) / B(a_i, b_i).
[[nodiscard]] inline double beta_log_marginal_likelihood(const BetaLogisticSpec& spec,
                                                         const ItemCatalog& catalog,
                                                         const ItemStatistics& stats,
                                                         CountFamily family,
                                                         const std::vector<Eigen::VectorXd>& gamma_draws) {
  if (gamma_draws.empty()) throw std::invalid_argument("need at least one gamma draw");
  auto [add_a, add_b] = conjugate_counts(stats, family);
  std::vector<double> terms;
  terms.reserve(gamma_draws.size());
  for (const auto& g : gamma_draws) {
    const BetaBelief prior = prior_from_gamma(spec, catalog, g);
    double s = 0.0;
    for (Eigen::Index i = 0; i < prior.size(); ++i) {
      if (add_a(i) == 0.0 && add_b(i) == 0.0) continue;
      s += detail::log_beta_fn(prior.alpha(i) + add_a(i), prior.beta(i) + add_b(i)) -
           detail::log_beta_fn(prior.alpha(i), prior.beta(i));
    }
    terms.push_back(s);
  }
  const double top = *std::max_element(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - top);
  return top + std::log(acc / static_cast<double>(terms.size()));
}

}  // namespace mtss
