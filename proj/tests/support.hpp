// Independent reference computations used by the tests. Nothing here calls
// into the library's posterior code.
#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/special_functions/beta.hpp>

#include "mtss/core.hpp"
#include "mtss/rng.hpp"

namespace mtss::ref {

/// Raw semi-bandit observations: item index and reward of every pull.
struct RawObservations {
  std::vector<Index> item;
  std::vector<double> reward;

  [[nodiscard]] ItemStatistics statistics(std::size_t n_items) const {
    ItemStatistics s(n_items);
    for (std::size_t k = 0; k < item.size(); ++k) {
      s.pulls[item[k]] += 1;
      s.totals[item[k]] += reward[k];
    }
    return s;
  }
};

inline Eigen::MatrixXd random_features(std::size_t n, std::size_t d, Rng& rng) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = rng.normal();
  return x;
}

inline Eigen::MatrixXd random_spd(std::size_t d, Rng& rng) {
  Eigen::MatrixXd a = random_features(d, d, rng);
  return a * a.transpose() / static_cast<double>(d) +
         0.5 * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
}

/// Uniformly random pulls over `rounds` rounds, up to k items per round.
inline RawObservations random_pulls(std::size_t n, std::size_t rounds, std::size_t k, Rng& rng,
                                    double scale = 1.0) {
  RawObservations out;
  for (std::size_t t = 0; t < rounds; ++t)
    for (std::size_t j = 0; j < k; ++j) {
      out.item.push_back(static_cast<Index>(rng.below(n)));
      out.reward.push_back(scale * rng.normal());
    }
  return out;
}

/// Posterior of gamma from the uncollapsed model over every raw reward:
///   Y = Z gamma + B e + eps,  e ~ N(0, s1^2 I), eps ~ N(0, s2^2 I)
/// where row k of Z is the feature of the item pulled at observation k and
/// B maps observations to items. Returns (precision, information).
inline std::pair<Eigen::MatrixXd, Eigen::VectorXd> dense_gamma_posterior(
    const Eigen::MatrixXd& x, const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, double s1,
    double s2, const RawObservations& obs) {
  const auto m = static_cast<Eigen::Index>(obs.item.size());
  const auto d = x.cols();
  Eigen::MatrixXd z(m, d);
  Eigen::MatrixXd v = s2 * s2 * Eigen::MatrixXd::Identity(m, m);
  Eigen::VectorXd y(m);
  for (Eigen::Index a = 0; a < m; ++a) {
    z.row(a) = x.row(static_cast<Eigen::Index>(obs.item[static_cast<std::size_t>(a)]));
    y(a) = obs.reward[static_cast<std::size_t>(a)];
    for (Eigen::Index b = 0; b < m; ++b)
      if (obs.item[static_cast<std::size_t>(a)] == obs.item[static_cast<std::size_t>(b)]) v(a, b) += s1 * s1;
  }
  const Eigen::MatrixXd sigma_inv = sigma.inverse();
  if (m == 0) return {sigma_inv, sigma_inv * mu};
  const Eigen::MatrixXd v_inv = v.inverse();
  return {sigma_inv + z.transpose() * v_inv * z, sigma_inv * mu + z.transpose() * v_inv * y};
}

/// Joint posterior of theta by Gaussian conditioning in covariance form:
///   theta ~ N(X mu, C), C = X Sigma X' + s1^2 I;  Y = B theta + eps
///   mean = X mu + C B' (B C B' + s2^2 I)^-1 (Y - B X mu)
///   cov  = C - C B' (B C B' + s2^2 I)^-1 B C
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> dense_theta_posterior(
    const Eigen::MatrixXd& x, const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, double s1,
    double s2, const RawObservations& obs) {
  const auto n = x.rows();
  const auto m = static_cast<Eigen::Index>(obs.item.size());
  Eigen::MatrixXd c = x * sigma * x.transpose();
  c.diagonal().array() += s1 * s1;
  const Eigen::VectorXd m0 = x * mu;
  if (m == 0) return {m0, c};
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(m, n);
  Eigen::VectorXd y(m);
  for (Eigen::Index a = 0; a < m; ++a) {
    b(a, static_cast<Eigen::Index>(obs.item[static_cast<std::size_t>(a)])) = 1.0;
    y(a) = obs.reward[static_cast<std::size_t>(a)];
  }
  Eigen::MatrixXd s = b * c * b.transpose();
  s.diagonal().array() += s2 * s2;
  const Eigen::MatrixXd gain = c * b.transpose() * s.inverse();
  return {m0 + gain * (y - b * m0), c - gain * b * c};
}

/// Gaussian log density of all raw rewards with gamma and theta integrated out.
inline double dense_log_evidence(const Eigen::MatrixXd& x, const Eigen::VectorXd& mu,
                                 const Eigen::MatrixXd& sigma, double s1, double s2,
                                 const RawObservations& obs) {
  const auto m = static_cast<Eigen::Index>(obs.item.size());
  Eigen::MatrixXd z(m, x.cols());
  Eigen::VectorXd y(m);
  Eigen::MatrixXd v = s2 * s2 * Eigen::MatrixXd::Identity(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    z.row(a) = x.row(static_cast<Eigen::Index>(obs.item[static_cast<std::size_t>(a)]));
    y(a) = obs.reward[static_cast<std::size_t>(a)];
    for (Eigen::Index b = 0; b < m; ++b)
      if (obs.item[static_cast<std::size_t>(a)] == obs.item[static_cast<std::size_t>(b)]) v(a, b) += s1 * s1;
  }
  const Eigen::MatrixXd cov = z * sigma * z.transpose() + v;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
  const Eigen::VectorXd r = y - z * mu;
  return -0.5 * (r.dot(ldlt.solve(r)) + ldlt.vectorD().array().log().sum() +
                 static_cast<double>(m) * std::log(2.0 * std::numbers::pi));
}

/// Max-norm relative error ||a - b||_max / max(||b||_max, tiny).
template <class A, class B>
double rel_err(const A& a, const B& b) {
  const double scale = std::max(b.cwiseAbs().maxCoeff(), 1e-300);
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

/// Posterior mean of gamma for d = 1, one item with x = 1, Beta-Bernoulli
/// counts (s, f) and theta ~ Beta(psi m(g), psi (1 - m(g))), m = logistic,
/// g ~ N(0, 1). Theta is integrated analytically; gamma on a grid.
inline double grid_gamma_mean(double psi, double s, double f, double lo = -6.0, double hi = 6.0,
                              int points = 2001) {
  std::vector<double> g(points), logw(points);
  double mx = -1e300;
  for (int k = 0; k < points; ++k) {
    g[k] = lo + (hi - lo) * k / (points - 1);
    const double m = 1.0 / (1.0 + std::exp(-g[k]));
    const double a = psi * m, b = psi * (1.0 - m);
    logw[k] = -0.5 * g[k] * g[k] + std::log(boost::math::beta(a + s, b + f)) - std::log(boost::math::beta(a, b));
    mx = std::max(mx, logw[k]);
  }
  double num = 0.0, den = 0.0;
  for (int k = 0; k < points; ++k) {
    const double w = std::exp(logw[k] - mx);
    num += w * g[k];
    den += w;
  }
  return num / den;
}

/// Pearson chi-square p-value for observed counts against expected counts.
inline double chi_square_p(const std::vector<double>& observed, const std::vector<double>& expected,
                           int dof) {
  double stat = 0.0;
  for (std::size_t k = 0; k < observed.size(); ++k)
    stat += (observed[k] - expected[k]) * (observed[k] - expected[k]) / expected[k];
  boost::math::chi_squared dist(dof);
  return boost::math::cdf(boost::math::complement(dist, stat));
}

/// Every subset of {0..n-1} of size <= k, maximizing sum eta v / (1 + sum v)
/// (first maximum in lexicographic-bitmask order; revenue tie tolerance 0).
inline std::vector<Index> brute_force_assortment(const std::vector<double>& v, const std::vector<double>& eta,
                                                 std::size_t k) {
  const std::size_t n = v.size();
  double best = 0.0;
  std::vector<Index> best_set;
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) > k) continue;
    double num = 0.0, den = 1.0;
    std::vector<Index> set;
    for (std::size_t i = 0; i < n; ++i)
      if (mask & (1u << i)) {
        num += eta[i] * v[i];
        den += v[i];
        set.push_back(i);
      }
    if (num / den > best) {
      best = num / den;
      best_set = set;
    }
  }
  return best_set;
}

}  // namespace mtss::ref
