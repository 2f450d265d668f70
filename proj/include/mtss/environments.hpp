// Ground-truth simulators for the three problems and the scenario
// generators that draw item catalogs (including the misspecified and
// cold-start variants).
#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "mtss/beta_logistic.hpp"
#include "mtss/core.hpp"
#include "mtss/lmm.hpp"
#include "mtss/optimizers.hpp"
#include "mtss/rng.hpp"

namespace mtss {

// ---------------------------------------------------------------------------
// Scenarios

/// theta_i ~ N(x_i' gamma, sigma1^2)
struct LmmSource {
  double sigma1 = 0.5;
};

/// theta_i ~ Beta(m(x_i' gamma), psi)
struct BetaLogisticSource {
  double psi = 1.0;
  LogisticLink link = LogisticLink::plain;
};

/// theta_i ~ N(lambda cos(c x_i' gamma) / c + (1 - lambda) x_i' gamma, sigma1^2),
/// with one c per instance scaling every c x_i' gamma into [-pi/2, pi/2].
struct MisspecifiedCosSource {
  double lambda = 0.0;
  double sigma1 = 0.5;
};

using ThetaSource = std::variant<LmmSource, BetaLogisticSource, MisspecifiedCosSource>;

/// Every `period` rounds, `delta_n` uniformly chosen items are replaced by fresh draws.
struct ColdStart {
  std::size_t period = 100;
  std::size_t delta_n = 0;
};

struct ScenarioConfig {
  std::string name;
  ProblemKind problem = ProblemKind::semi_bandit;
  std::size_t n_items = 100;
  std::size_t slate_size = 5;  // K
  std::size_t dim = 5;         // d, intercept included
  ThetaSource theta_source = LmmSource{};
  double sigma2 = 1.0;          // semi-bandit observation noise
  double revenue = 1.0;         // eta_i for every item (MNL)
  double prior_variance = 0.0;  // Q(gamma) = N(0, prior_variance I); <= 0 selects 1/d
  std::optional<ColdStart> cold_start;
  std::optional<std::string> catalog_csv;     // precomputed (features, theta) table
  std::optional<Eigen::VectorXd> gamma_true;  // fixed gamma instead of a draw from Q

  [[nodiscard]] double gamma_prior_variance() const {
    return prior_variance > 0.0 ? prior_variance : 1.0 / static_cast<double>(dim);
  }

  [[nodiscard]] GaussianBelief gamma_prior() const {
    const auto d = static_cast<Eigen::Index>(dim);
    return GaussianBelief::from_moments(Eigen::VectorXd::Zero(d),
                                        gamma_prior_variance() * Eigen::MatrixXd::Identity(d, d));
  }

  /// Generalization std (LMM-type sources) or 0 when not applicable.
  [[nodiscard]] double sigma1() const {
    if (const auto* s = std::get_if<LmmSource>(&theta_source)) return s->sigma1;
    if (const auto* s = std::get_if<MisspecifiedCosSource>(&theta_source)) return s->sigma1;
    return 0.0;
  }

  void validate() const {
    if (n_items == 0 || dim == 0) throw ConfigError(name + ": n_items and dim must be positive");
    if (slate_size == 0 || slate_size > n_items)
      throw ConfigError(name + ": K must lie in [1, N]");
    if (!(sigma2 >= 0.0)) throw ConfigError(name + ": sigma2 must be non-negative");
    if (!(revenue > 0.0)) throw ConfigError(name + ": revenue must be positive");
    std::visit(
        [&](const auto& src) {
          using T = std::decay_t<decltype(src)>;
          if constexpr (std::is_same_v<T, LmmSource>) {
            if (!(src.sigma1 >= 0.0)) throw ConfigError(name + ": sigma1 must be non-negative");
            if (problem != ProblemKind::semi_bandit)
              throw ConfigError(name + ": the LMM source needs a semi-bandit problem");
          } else if constexpr (std::is_same_v<T, MisspecifiedCosSource>) {
            if (!(src.lambda >= 0.0 && src.lambda <= 1.0))
              throw ConfigError(name + ": lambda must lie in [0, 1]");
            if (!(src.sigma1 >= 0.0)) throw ConfigError(name + ": sigma1 must be non-negative");
            if (problem != ProblemKind::semi_bandit)
              throw ConfigError(name + ": the misspecified source needs a semi-bandit problem");
          } else {
            if (!(src.psi > 0.0)) throw ConfigError(name + ": psi must be positive");
            if (problem == ProblemKind::semi_bandit)
              throw ConfigError(name + ": Beta sources need a cascade or MNL problem");
          }
        },
        theta_source);
    if (cold_start) {
      if (cold_start->period == 0) throw ConfigError(name + ": cold-start period must be positive");
      if (cold_start->delta_n > n_items) throw ConfigError(name + ": delta_n exceeds N");
      if (catalog_csv) throw ConfigError(name + ": cold start needs generated items");
    }
    if (gamma_true && static_cast<std::size_t>(gamma_true->size()) != dim)
      throw ConfigError(name + ": gamma_true has the wrong dimension");
  }
};

/// A drawn instance: catalog with true theta plus what later draws need.
struct DrawnInstance {
  ItemCatalog catalog;
  Eigen::VectorXd gamma_true;
  double cos_normalizer = 0.0;  // c of the misspecified source, 0 otherwise
  std::uint64_t next_item_id = 0;
};

namespace detail {

inline Eigen::MatrixXd draw_features(std::size_t n, std::size_t d, Rng& rng) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    x(i, 0) = 1.0;
    for (Eigen::Index j = 1; j < x.cols(); ++j) x(i, j) = rng.normal();
  }
  return x;
}

inline double cos_normalizer(const Eigen::VectorXd& z) {
  const double m = z.cwiseAbs().maxCoeff();
  return m > 0.0 ? 0.5 * std::numbers::pi / m : 1.0;
}

inline Eigen::VectorXd draw_theta(const ThetaSource& source, const Eigen::VectorXd& z, double c,
                                  Rng& rng) {
  Eigen::VectorXd theta(z.size());
  std::visit(
      [&](const auto& src) {
        using T = std::decay_t<decltype(src)>;
        for (Eigen::Index i = 0; i < z.size(); ++i) {
          if constexpr (std::is_same_v<T, LmmSource>) {
            theta(i) = z(i) + src.sigma1 * rng.normal();
          } else if constexpr (std::is_same_v<T, MisspecifiedCosSource>) {
            const double mean = src.lambda * std::cos(c * z(i)) / c + (1.0 - src.lambda) * z(i);
            theta(i) = mean + src.sigma1 * rng.normal();
          } else {
            const double m = link_mean(src.link, z(i));
            const double a = std::max(m * src.psi, 1e-300);
            const double b = std::max(
                (src.link == LogisticLink::plain ? logistic(-z(i)) : 0.5 * logistic(-z(i))) * src.psi,
                1e-300);
            theta(i) = clamp_theta(rng.beta(a, b));
          }
        }
      },
      source);
  return theta;
}

}  // namespace detail

/// Draws features (leading intercept 1, remaining coordinates N(0, 1)) and
/// theta for every item.
[[nodiscard]] inline DrawnInstance draw_instance(const ScenarioConfig& scenario,
                                                 const Eigen::VectorXd& gamma_true, Rng& rng) {
  scenario.validate();
  if (static_cast<std::size_t>(gamma_true.size()) != scenario.dim)
    throw std::invalid_argument("gamma_true has dimension " + std::to_string(gamma_true.size()) +
                                ", scenario needs " + std::to_string(scenario.dim));
  DrawnInstance out;
  out.gamma_true = gamma_true;
  out.catalog = ItemCatalog(detail::draw_features(scenario.n_items, scenario.dim, rng));
  const Eigen::VectorXd z = out.catalog.features * gamma_true;
  if (std::holds_alternative<MisspecifiedCosSource>(scenario.theta_source))
    out.cos_normalizer = detail::cos_normalizer(z);
  out.catalog.true_theta = detail::draw_theta(scenario.theta_source, z, out.cos_normalizer, rng);
  if (scenario.problem == ProblemKind::mnl)
    out.catalog.revenues = Eigen::VectorXd::Constant(z.size(), scenario.revenue);
  out.next_item_id = scenario.n_items;
  return out;
}

struct RotationResult {
  DrawnInstance instance;
  std::vector<bool> replaced;  // per position: true if the item there is new
};

/// Replaces delta_n uniformly chosen items by fresh draws (new features,
/// new theta, new ids). Positions are kept so surviving items keep their
/// statistics; the caller drops the history of replaced positions.
[[nodiscard]] inline RotationResult rotate_items(const DrawnInstance& current,
                                                 const ScenarioConfig& scenario, std::size_t delta_n,
                                                 Rng& rng) {
  const std::size_t n = current.catalog.n_items();
  if (delta_n > n) throw ConfigError("cannot rotate " + std::to_string(delta_n) + " of " +
                                     std::to_string(n) + " items");
  RotationResult out{current, std::vector<bool>(n, false)};
  if (delta_n == 0) return out;

  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  for (std::size_t k = 0; k < delta_n; ++k) {
    const auto j = k + static_cast<std::size_t>(rng.below(n - k));
    std::swap(order[k], order[j]);
    out.replaced[order[k]] = true;
  }
  const Eigen::MatrixXd fresh = detail::draw_features(delta_n, scenario.dim, rng);
  const Eigen::VectorXd z = fresh * current.gamma_true;
  const Eigen::VectorXd theta = detail::draw_theta(scenario.theta_source, z, current.cos_normalizer, rng);
  auto& cat = out.instance.catalog;
  std::size_t k = 0;
  for (Index i = 0; i < n; ++i) {
    if (!out.replaced[i]) continue;
    const auto row = static_cast<Eigen::Index>(i);
    cat.features.row(row) = fresh.row(static_cast<Eigen::Index>(k));
    (*cat.true_theta)(row) = theta(static_cast<Eigen::Index>(k));
    cat.item_ids[i] = out.instance.next_item_id++;
    ++k;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Environments

struct SemiBanditStep {
  SemiBanditFeedback feedback;
  double reward = 0.0;
};

inline constexpr std::int64_t kMaxEpochRounds = 1'000'000;

/// Immutable simulator for one problem instance.
class Environment {
 public:
  Environment(ProblemKind kind, ItemCatalog catalog, std::size_t slate_size, double sigma2 = 1.0)
      : kind_(kind), catalog_(std::move(catalog)), k_(slate_size), sigma2_(sigma2) {
    catalog_.validate();
    if (!catalog_.true_theta) throw ConfigError("environment needs true theta");
    if (k_ == 0 || k_ > catalog_.n_items()) throw ConfigError("K must lie in [1, N]");
    const Eigen::VectorXd& theta = *catalog_.true_theta;
    switch (kind_) {
      case ProblemKind::semi_bandit:
        optimal_ = top_k(theta, k_);
        break;
      case ProblemKind::cascade:
        if ((theta.array() < 0.0).any() || (theta.array() > 1.0).any())
          throw ConfigError("cascade attraction probabilities must lie in [0, 1]");
        optimal_ = rank_top_k(theta, k_);
        break;
      case ProblemKind::mnl: {
        if ((theta.array() <= 0.0).any() || (theta.array() > 1.0).any())
          throw ConfigError("MNL item parameters must lie in (0, 1]");
        utilities_ = (1.0 / theta.array() - 1.0).matrix();
        revenues_ = catalog_.revenues ? *catalog_.revenues
                                      : Eigen::VectorXd::Ones(static_cast<Eigen::Index>(catalog_.n_items()));
        // Zero-utility items never sell; keep them out of the optimizer.
        Eigen::VectorXd v = utilities_.cwiseMax(1e-300);
        optimal_ = optimal_assortment(v, revenues_, k_);
        break;
      }
    }
    optimal_value_ = expected_reward(optimal_);
  }

  [[nodiscard]] ProblemKind kind() const noexcept { return kind_; }
  [[nodiscard]] const ItemCatalog& catalog() const noexcept { return catalog_; }
  [[nodiscard]] const Eigen::VectorXd& theta() const { return *catalog_.true_theta; }
  [[nodiscard]] std::size_t slate_size() const noexcept { return k_; }
  [[nodiscard]] double sigma2() const noexcept { return sigma2_; }
  /// v_i = 1 / theta_i - 1 (MNL only).
  [[nodiscard]] const Eigen::VectorXd& utilities() const noexcept { return utilities_; }
  [[nodiscard]] const Eigen::VectorXd& revenues() const noexcept { return revenues_; }
  [[nodiscard]] const Action& optimal_action() const noexcept { return optimal_; }
  [[nodiscard]] double optimal_value() const noexcept { return optimal_value_; }

  /// r(a, theta):
  ///   semi:    sum_{i in A} theta_i
  ///   cascade: 1 - prod_k (1 - theta_{a_k})
  ///   MNL:     sum_{i in A} eta_i v_i / (1 + sum_{j in A} v_j)
  [[nodiscard]] double expected_reward(const Action& action) const {
    const auto& items = action_items(action);
    const Eigen::VectorXd& theta = *catalog_.true_theta;
    switch (kind_) {
      case ProblemKind::semi_bandit: {
        double s = 0.0;
        for (Index i : items) s += theta(static_cast<Eigen::Index>(i));
        return s;
      }
      case ProblemKind::cascade: {
        double miss = 1.0;
        for (Index i : items) miss *= 1.0 - theta(static_cast<Eigen::Index>(i));
        return 1.0 - miss;
      }
      case ProblemKind::mnl:
        return assortment_revenue({utilities_.data(), static_cast<std::size_t>(utilities_.size())},
                                  {revenues_.data(), static_cast<std::size_t>(revenues_.size())},
                                  items);
    }
    return 0.0;
  }

  /// Instantaneous regret of one round under `action`; never below zero
  /// beyond rounding.
  [[nodiscard]] double regret(const Action& action) const {
    return optimal_value_ - expected_reward(action);
  }

  /// Y_i ~ N(theta_i, sigma2^2) for every chosen item; reward is their sum.
  [[nodiscard]] SemiBanditStep step_semi(const SubsetAction& action, Rng& rng) const {
    if (kind_ != ProblemKind::semi_bandit) throw std::logic_error("not a semi-bandit environment");
    if (action.size() > k_) throw std::invalid_argument("action larger than K");
    SemiBanditStep out;
    out.feedback.rewards.reserve(action.size());
    for (Index i : action.items()) {
      const double y = theta()(static_cast<Eigen::Index>(i)) + sigma2_ * rng.normal();
      out.feedback.rewards.push_back(y);
      out.reward += y;
    }
    return out;
  }

  /// The user scans the list top-down and clicks the first attractive item.
  [[nodiscard]] CascadeFeedback step_cascade(const RankedListAction& action, Rng& rng) const {
    if (kind_ != ProblemKind::cascade) throw std::logic_error("not a cascade environment");
    if (action.size() != k_) throw std::invalid_argument("cascade list must hold exactly K items");
    for (std::size_t k = 0; k < action.size(); ++k)
      if (rng.bernoulli(theta()(static_cast<Eigen::Index>(action.items()[k]))))
        return CascadeFeedback{k};
    return CascadeFeedback{std::nullopt};
  }

  /// Offers the assortment until the no-purchase option is chosen. Each
  /// round picks item i in A with probability v_i / (1 + sum_{j in A} v_j)
  /// and no purchase with probability 1 / (1 + sum v_j).
  [[nodiscard]] MnlEpochFeedback run_epoch_mnl(const SubsetAction& assortment, Rng& rng,
                                               std::int64_t max_rounds = kMaxEpochRounds) const {
    if (kind_ != ProblemKind::mnl) throw std::logic_error("not an MNL environment");
    if (assortment.size() > k_) throw std::invalid_argument("assortment larger than K");
    const auto& items = assortment.items();
    std::vector<double> cumulative(items.size());
    double total = 1.0;
    for (std::size_t k = 0; k < items.size(); ++k) {
      total += utilities_(static_cast<Eigen::Index>(items[k]));
      cumulative[k] = total;
    }
    MnlEpochFeedback out;
    out.purchases.assign(items.size(), 0);
    out.epoch_length = 0;
    while (true) {
      if (++out.epoch_length > max_rounds)
        throw NumericalError("MNL epoch exceeded " + std::to_string(max_rounds) +
                             " rounds; item parameters are invalid");
      const double u = rng.uniform() * total;
      if (u < 1.0) break;
      const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
      const auto k = static_cast<std::size_t>(
          std::min<std::ptrdiff_t>(it - cumulative.begin(), static_cast<std::ptrdiff_t>(items.size()) - 1));
      ++out.purchases[k];
    }
    return out;
  }

 private:
  ProblemKind kind_;
  ItemCatalog catalog_;
  std::size_t k_;
  double sigma2_;
  Eigen::VectorXd utilities_;
  Eigen::VectorXd revenues_;
  Action optimal_;
  double optimal_value_ = 0.0;
};

}  // namespace mtss
