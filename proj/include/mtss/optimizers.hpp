// Greedy-action oracles: given (sampled) item parameters, return the best
// action for each problem. Ties are broken by smaller item index.
#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mtss/core.hpp"

namespace mtss {

namespace detail {

// Indices of the k largest values, ordered by value descending then index ascending.
inline std::vector<Index> largest_k(std::span<const double> values, std::size_t k) {
  if (k > values.size())
    throw std::invalid_argument("K = " + std::to_string(k) + " exceeds item count " +
                                std::to_string(values.size()));
  std::vector<Index> idx(values.size());
  std::iota(idx.begin(), idx.end(), Index{0});
  auto before = [&](Index a, Index b) {
    return values[a] > values[b] || (values[a] == values[b] && a < b);
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), before);
  idx.resize(k);
  return idx;
}

inline std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace detail

/// The K items with the largest theta.
[[nodiscard]] inline SubsetAction top_k(std::span<const double> theta, std::size_t k) {
  auto idx = detail::largest_k(theta, k);
  std::sort(idx.begin(), idx.end());
  return SubsetAction(std::move(idx), theta.size(), k);
}

[[nodiscard]] inline SubsetAction top_k(const Eigen::VectorXd& theta, std::size_t k) {
  return top_k(detail::as_span(theta), k);
}

/// The K items with the largest theta, best first.
[[nodiscard]] inline RankedListAction rank_top_k(std::span<const double> theta, std::size_t k) {
  return RankedListAction(detail::largest_k(theta, k), theta.size(), k);
}

[[nodiscard]] inline RankedListAction rank_top_k(const Eigen::VectorXd& theta, std::size_t k) {
  return rank_top_k(detail::as_span(theta), k);
}

struct AssortmentSolverConfig {
  double tolerance = 1e-10;
  int max_iter = 200;
};

/// Thrown when the revenue bisection does not converge.
class AssortmentSolverError : public NumericalError {
 public:
  AssortmentSolverError(double lo, double hi)
      : NumericalError("assortment search did not converge in bracket [" + std::to_string(lo) +
                       ", " + std::to_string(hi) + "]"),
        lo_(lo),
        hi_(hi) {}
  [[nodiscard]] double lower() const noexcept { return lo_; }
  [[nodiscard]] double upper() const noexcept { return hi_; }

 private:
  double lo_, hi_;
};

/// Expected MNL revenue of an assortment: sum eta_i v_i / (1 + sum v_j).
[[nodiscard]] inline double assortment_revenue(std::span<const double> v, std::span<const double> eta,
                                               std::span<const Index> items) {
  double num = 0.0, den = 1.0;
  for (Index i : items) {
    num += eta[i] * v[i];
    den += v[i];
  }
  return num / den;
}

namespace detail {

// Best |A| <= k set for the linearized objective sum_{i in A} v_i (eta_i - lambda):
// the top-k strictly positive terms. Returns (set sorted by index, objective).
inline std::pair<std::vector<Index>, double> linearized_best(std::span<const double> v,
                                                             std::span<const double> eta,
                                                             std::size_t k, double lambda) {
  std::vector<double> score(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) score[i] = v[i] * (eta[i] - lambda);
  auto idx = largest_k(score, k);
  std::vector<Index> chosen;
  double total = 0.0;
  for (Index i : idx)
    if (score[i] > 0.0) {
      chosen.push_back(i);
      total += score[i];
    }
  std::sort(chosen.begin(), chosen.end());
  return {std::move(chosen), total};
}

}  // namespace detail

/// Revenue-maximizing assortment of at most K items under the MNL model
/// with utilities v and revenues eta.
///
/// The optimal revenue lambda* is the root of
///   f(lambda) = max_{|A|<=K} sum_{i in A} v_i (eta_i - lambda) - lambda,
/// which is strictly decreasing. Bisection on [0, max eta] brackets it;
/// fixed-point steps lambda <- r(A(lambda)) from the lower end then land
/// on the exact optimal set.
[[nodiscard]] inline SubsetAction optimal_assortment(std::span<const double> v,
                                                     std::span<const double> eta, std::size_t k,
                                                     const AssortmentSolverConfig& config = {}) {
  if (v.size() != eta.size()) throw std::invalid_argument("v and eta lengths differ");
  if (k > v.size()) throw std::invalid_argument("K exceeds item count");
  if (!(config.tolerance > 0.0)) throw std::invalid_argument("tolerance must be positive");
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!(v[i] > 0.0) || !(eta[i] > 0.0) || !std::isfinite(v[i]) || !std::isfinite(eta[i]))
      throw std::invalid_argument("utilities and revenues must be finite and positive");
  if (k == 0 || v.empty()) return SubsetAction({}, v.size(), k);

  double lo = 0.0;
  double hi = *std::max_element(eta.begin(), eta.end());
  int iter = 0;
  while (hi - lo > config.tolerance) {
    if (++iter > config.max_iter) throw AssortmentSolverError(lo, hi);
    const double mid = 0.5 * (lo + hi);
    const auto [set, value] = detail::linearized_best(v, eta, k, mid);
    if (value >= mid)
      lo = mid;
    else
      hi = mid;
  }

  auto [best, value] = detail::linearized_best(v, eta, k, lo);
  double revenue = assortment_revenue(v, eta, best);
  // Each step strictly increases revenue until the optimal set is reached.
  for (int step = 0; step < config.max_iter; ++step) {
    auto [next, next_value] = detail::linearized_best(v, eta, k, revenue);
    const double next_revenue = assortment_revenue(v, eta, next);
    if (!(next_revenue > revenue)) break;
    best = std::move(next);
    revenue = next_revenue;
  }
  return SubsetAction(std::move(best), v.size(), k);
}

[[nodiscard]] inline SubsetAction optimal_assortment(const Eigen::VectorXd& v, const Eigen::VectorXd& eta,
                                                     std::size_t k,
                                                     const AssortmentSolverConfig& config = {}) {
  return optimal_assortment(detail::as_span(v), detail::as_span(eta), k, config);
}

}  // namespace mtss
