// Domain types shared by every module: items, actions, observations,
// interaction histories and regret bookkeeping.
//
// Item indices are 0-based. Actions are validated when they are built; no
// downstream code checks them again.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace mtss {

using Index = std::size_t;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user-supplied configuration or input data.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Requested computation exceeds what this code path supports.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Malformed entry in an event log; carries the offending position.
class MalformedEventError : public Error {
 public:
  MalformedEventError(std::size_t position, const std::string& what)
      : Error("event " + std::to_string(position) + ": " + what), position_(position) {}
  [[nodiscard]] std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

enum class ProblemKind { semi_bandit, cascade, mnl };

[[nodiscard]] inline std::string_view to_string(ProblemKind kind) noexcept {
  switch (kind) {
    case ProblemKind::semi_bandit: return "semi";
    case ProblemKind::cascade: return "cascade";
    case ProblemKind::mnl: return "mnl";
  }
  return "unknown";
}

[[nodiscard]] inline ProblemKind parse_problem_kind(std::string_view s) {
  if (s == "semi" || s == "semi_bandit" || s == "semi-bandit") return ProblemKind::semi_bandit;
  if (s == "cascade" || s == "cascading") return ProblemKind::cascade;
  if (s == "mnl") return ProblemKind::mnl;
  throw ConfigError("unknown problem kind '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Items

struct ItemCatalog {
  Eigen::MatrixXd features;            // N x d, row i is x_i
  std::vector<std::uint64_t> item_ids;  // stable identity, addresses per-item RNG streams
  std::optional<Eigen::VectorXd> true_theta;
  std::optional<Eigen::VectorXd> revenues;

  ItemCatalog() = default;
  explicit ItemCatalog(Eigen::MatrixXd x) : features(std::move(x)) {
    item_ids.resize(static_cast<std::size_t>(features.rows()));
    std::iota(item_ids.begin(), item_ids.end(), std::uint64_t{0});
  }

  [[nodiscard]] std::size_t n_items() const noexcept {
    return static_cast<std::size_t>(features.rows());
  }
  [[nodiscard]] std::size_t dim() const noexcept {
    return static_cast<std::size_t>(features.cols());
  }
  [[nodiscard]] auto feature(Index i) const { return features.row(static_cast<Eigen::Index>(i)); }

  [[nodiscard]] double revenue(Index i) const {
    return revenues ? (*revenues)(static_cast<Eigen::Index>(i)) : 1.0;
  }

  /// Throws ConfigError on violation. With `unit_norm`, also requires
  /// ||x_i||_2 <= 1.
  void validate(bool unit_norm = false) const {
    if (features.rows() == 0 || features.cols() == 0)
      throw ConfigError("catalog needs at least one item and one feature");
    if (!features.allFinite()) throw ConfigError("catalog features must be finite");
    if (item_ids.size() != n_items()) throw ConfigError("item_ids length differs from item count");
    if (unit_norm) {
      for (Eigen::Index i = 0; i < features.rows(); ++i)
        if (features.row(i).norm() > 1.0 + 1e-12)
          throw ConfigError("feature row " + std::to_string(i) + " has norm above 1");
    }
    if (true_theta) {
      if (static_cast<std::size_t>(true_theta->size()) != n_items())
        throw ConfigError("true_theta length differs from item count");
      if (!true_theta->allFinite()) throw ConfigError("true_theta must be finite");
    }
    if (revenues) {
      if (static_cast<std::size_t>(revenues->size()) != n_items())
        throw ConfigError("revenue length differs from item count");
      if ((revenues->array() <= 0.0).any()) throw ConfigError("revenues must be positive");
    }
  }
};

// ---------------------------------------------------------------------------
// Actions

namespace detail {

inline void check_item_list(const std::vector<Index>& items, std::size_t n_items,
                            std::size_t max_size) {
  if (items.size() > max_size)
    throw std::invalid_argument("action has " + std::to_string(items.size()) +
                                " items, limit is " + std::to_string(max_size));
  std::vector<Index> sorted = items;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument("action items must be distinct");
  if (!sorted.empty() && sorted.back() >= n_items)
    throw std::invalid_argument("action item " + std::to_string(sorted.back()) +
                                " out of range");
}

}  // namespace detail

/// Unordered set of items (semi-bandit slate, MNL assortment).
class SubsetAction {
 public:
  SubsetAction() = default;
  SubsetAction(std::vector<Index> items, std::size_t n_items, std::size_t max_size)
      : items_(std::move(items)) {
    detail::check_item_list(items_, n_items, max_size);
  }
  [[nodiscard]] const std::vector<Index>& items() const noexcept { return items_; }
  [[nodiscard]] std::size_t size() const noexcept { return items_.size(); }
  friend bool operator==(const SubsetAction&, const SubsetAction&) = default;

 private:
  std::vector<Index> items_;
};

/// Ordered list of items, top position first (cascading bandits).
class RankedListAction {
 public:
  RankedListAction() = default;
  RankedListAction(std::vector<Index> items, std::size_t n_items, std::size_t max_size)
      : items_(std::move(items)) {
    detail::check_item_list(items_, n_items, max_size);
  }
  [[nodiscard]] const std::vector<Index>& items() const noexcept { return items_; }
  [[nodiscard]] std::size_t size() const noexcept { return items_.size(); }
  friend bool operator==(const RankedListAction&, const RankedListAction&) = default;

 private:
  std::vector<Index> items_;
};

using Action = std::variant<SubsetAction, RankedListAction>;

[[nodiscard]] inline const std::vector<Index>& action_items(const Action& a) noexcept {
  return std::visit([](const auto& x) -> const std::vector<Index>& { return x.items(); }, a);
}

// ---------------------------------------------------------------------------
// Observations

struct SemiBanditFeedback {
  std::vector<double> rewards;  // aligned with the action's items
};

struct CascadeFeedback {
  std::optional<std::size_t> click;  // 0-based position of the click, if any
};

struct MnlEpochFeedback {
  std::vector<std::int64_t> purchases;  // aligned with the assortment
  std::int64_t epoch_length = 1;        // rounds in the epoch, the no-purchase included
};

using Observation = std::variant<SemiBanditFeedback, CascadeFeedback, MnlEpochFeedback>;

struct Event {
  Action action;
  Observation observation;
};

// ---------------------------------------------------------------------------
// Sufficient statistics

/// Per-item sufficient statistics. The meaning of the two columns depends
/// on the problem:
///   semi-bandit: pulls = n(i),        totals = reward sum S(i)
///   cascade:     pulls = examinations, totals = clicks (failures = pulls - totals)
///   MNL:         pulls = epochs L(i), totals = purchases P(i)
struct ItemStatistics {
  std::vector<std::int64_t> pulls;
  std::vector<double> totals;

  ItemStatistics() = default;
  explicit ItemStatistics(std::size_t n) : pulls(n, 0), totals(n, 0.0) {}

  [[nodiscard]] std::size_t size() const noexcept { return pulls.size(); }
  [[nodiscard]] std::int64_t total_pulls() const noexcept {
    return std::accumulate(pulls.begin(), pulls.end(), std::int64_t{0});
  }
  [[nodiscard]] double failures(Index i) const noexcept {
    return static_cast<double>(pulls[i]) - totals[i];
  }
  friend bool operator==(const ItemStatistics&, const ItemStatistics&) = default;
};

namespace detail {

inline void accumulate_event(ItemStatistics& stats, const Event& event, ProblemKind kind,
                             std::size_t position) {
  const auto& items = action_items(event.action);
  for (Index i : items)
    if (i >= stats.size())
      throw MalformedEventError(position, "item index " + std::to_string(i) + " out of range");

  switch (kind) {
    case ProblemKind::semi_bandit: {
      const auto* fb = std::get_if<SemiBanditFeedback>(&event.observation);
      if (fb == nullptr) throw MalformedEventError(position, "expected semi-bandit feedback");
      if (fb->rewards.size() != items.size())
        throw MalformedEventError(position, "reward count differs from action size");
      for (std::size_t k = 0; k < items.size(); ++k) {
        if (!std::isfinite(fb->rewards[k]))
          throw MalformedEventError(position, "non-finite reward");
        stats.pulls[items[k]] += 1;
        stats.totals[items[k]] += fb->rewards[k];
      }
      break;
    }
    case ProblemKind::cascade: {
      const auto* fb = std::get_if<CascadeFeedback>(&event.observation);
      if (fb == nullptr || !std::holds_alternative<RankedListAction>(event.action))
        throw MalformedEventError(position, "expected ranked list with cascade feedback");
      if (fb->click && *fb->click >= items.size())
        throw MalformedEventError(position, "click position outside the ranked list");
      // Only examined positions carry information: k <= click, or all when no click.
      const std::size_t examined = fb->click ? *fb->click + 1 : items.size();
      for (std::size_t k = 0; k < examined; ++k) {
        stats.pulls[items[k]] += 1;
        if (fb->click && k == *fb->click) stats.totals[items[k]] += 1.0;
      }
      break;
    }
    case ProblemKind::mnl: {
      const auto* fb = std::get_if<MnlEpochFeedback>(&event.observation);
      if (fb == nullptr) throw MalformedEventError(position, "expected MNL epoch feedback");
      if (fb->purchases.size() != items.size())
        throw MalformedEventError(position, "purchase count differs from assortment size");
      std::int64_t bought = 0;
      for (std::size_t k = 0; k < items.size(); ++k) {
        if (fb->purchases[k] < 0) throw MalformedEventError(position, "negative purchase count");
        bought += fb->purchases[k];
      }
      if (fb->epoch_length != 1 + bought)
        throw MalformedEventError(position, "epoch length must be 1 + total purchases");
      for (std::size_t k = 0; k < items.size(); ++k) {
        stats.pulls[items[k]] += 1;
        stats.totals[items[k]] += static_cast<double>(fb->purchases[k]);
      }
      break;
    }
  }
}

}  // namespace detail

/// Rebuilds per-item statistics from an event log. Throws
/// MalformedEventError naming the first bad event.
[[nodiscard]] inline ItemStatistics replay_statistics(std::span<const Event> log,
                                                      ProblemKind kind, std::size_t n_items) {
  ItemStatistics stats(n_items);
  for (std::size_t p = 0; p < log.size(); ++p) detail::accumulate_event(stats, log[p], kind, p);
  return stats;
}

// ---------------------------------------------------------------------------
// History

/// H_t: incremental statistics plus the append-only event log they came from.
/// One writer at a time; copies are independent snapshots.
class InteractionHistory {
 public:
  InteractionHistory(ProblemKind kind, std::size_t n_items) : kind_(kind), stats_(n_items) {}

  [[nodiscard]] ProblemKind kind() const noexcept { return kind_; }
  [[nodiscard]] std::size_t n_items() const noexcept { return stats_.size(); }
  [[nodiscard]] const ItemStatistics& statistics() const noexcept { return stats_; }
  [[nodiscard]] const std::vector<Event>& log() const noexcept { return log_; }
  /// Rounds elapsed so far; an MNL epoch advances this by its length.
  [[nodiscard]] std::int64_t round_index() const noexcept { return rounds_; }

  void record(Event event) {
    detail::accumulate_event(stats_, event, kind_, log_.size());
    if (const auto* fb = std::get_if<MnlEpochFeedback>(&event.observation))
      rounds_ += fb->epoch_length;
    else
      rounds_ += 1;
    log_.push_back(std::move(event));
  }

  /// Drops every observation of the flagged items (cold-start rotation).
  /// The log is rewritten so that replaying it still reproduces the
  /// statistics; the round counter is unchanged.
  void forget_items(const std::vector<bool>& removed) {
    if (removed.size() != n_items()) throw std::invalid_argument("mask size differs from item count");
    std::vector<Event> kept;
    kept.reserve(log_.size());
    for (const Event& e : log_) {
      if (auto filtered = filter_event(e, removed)) kept.push_back(std::move(*filtered));
    }
    log_ = std::move(kept);
    stats_ = replay_statistics(log_, kind_, n_items());
  }

 private:
  std::optional<Event> filter_event(const Event& e, const std::vector<bool>& removed) const {
    const auto& items = action_items(e.action);
    const std::size_t n = n_items();
    std::vector<Index> keep_items;
    switch (kind_) {
      case ProblemKind::semi_bandit: {
        const auto& fb = std::get<SemiBanditFeedback>(e.observation);
        SemiBanditFeedback out;
        for (std::size_t k = 0; k < items.size(); ++k)
          if (!removed[items[k]]) {
            keep_items.push_back(items[k]);
            out.rewards.push_back(fb.rewards[k]);
          }
        if (keep_items.empty()) return std::nullopt;
        const auto sz = keep_items.size();
        return Event{SubsetAction(std::move(keep_items), n, sz), std::move(out)};
      }
      case ProblemKind::cascade: {
        // Keep the examined prefix minus removed items. A click on a removed
        // item leaves the surviving prefix as examined-without-click.
        const auto& fb = std::get<CascadeFeedback>(e.observation);
        const std::size_t examined = fb.click ? *fb.click + 1 : items.size();
        CascadeFeedback out;
        for (std::size_t k = 0; k < examined; ++k) {
          if (removed[items[k]]) continue;
          if (fb.click && k == *fb.click) out.click = keep_items.size();
          keep_items.push_back(items[k]);
        }
        if (keep_items.empty()) return std::nullopt;
        const auto sz = keep_items.size();
        return Event{RankedListAction(std::move(keep_items), n, sz), out};
      }
      case ProblemKind::mnl: {
        const auto& fb = std::get<MnlEpochFeedback>(e.observation);
        MnlEpochFeedback out;
        out.epoch_length = 1;
        for (std::size_t k = 0; k < items.size(); ++k)
          if (!removed[items[k]]) {
            keep_items.push_back(items[k]);
            out.purchases.push_back(fb.purchases[k]);
            out.epoch_length += fb.purchases[k];
          }
        if (keep_items.empty()) return std::nullopt;
        const auto sz = keep_items.size();
        return Event{SubsetAction(std::move(keep_items), n, sz), std::move(out)};
      }
    }
    return std::nullopt;
  }

  ProblemKind kind_;
  ItemStatistics stats_;
  std::vector<Event> log_;
  std::int64_t rounds_ = 0;
};

// ---------------------------------------------------------------------------
// Regret

inline constexpr double kRegretTolerance = 1e-12;

struct RegretTrace {
  std::size_t replication = 0;
  std::uint64_t seed = 0;
  std::vector<double> instantaneous;
  std::vector<double> cumulative;

  void push(double delta) {
    if (!(delta >= -kRegretTolerance))
      throw NumericalError("negative instantaneous regret " + std::to_string(delta));
    instantaneous.push_back(delta);
    cumulative.push_back((cumulative.empty() ? 0.0 : cumulative.back()) + delta);
  }
  [[nodiscard]] std::size_t rounds() const noexcept { return instantaneous.size(); }
};

}  // namespace mtss
