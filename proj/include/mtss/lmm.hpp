// Exact Gaussian posteriors for the linear mixed model
//
//   gamma   ~ N(mu_gamma, Sigma_gamma)
//   theta_i ~ N(x_i' gamma, sigma1^2)
//   Y_i,t   ~ N(theta_i, sigma2^2)
//
// All routines work from collapsed per-item statistics (n(i), S(i)); the
// response vector over every past observation is never formed.
#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "mtss/core.hpp"
#include "mtss/rng.hpp"

namespace mtss {

/// Cholesky factor of an SPD matrix. On failure a jitter of
/// 1e-10 * trace / dim is added to the diagonal once; a second failure
/// throws NumericalError.
[[nodiscard]] inline Eigen::LLT<Eigen::MatrixXd> robust_cholesky(const Eigen::MatrixXd& m) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() == Eigen::Success) return llt;
  const double jitter = 1e-10 * m.trace() / static_cast<double>(m.rows());
  Eigen::MatrixXd bumped = m;
  bumped.diagonal().array() += std::abs(jitter);
  llt.compute(bumped);
  if (llt.info() != Eigen::Success)
    throw NumericalError("Cholesky factorization failed after jitter");
  return llt;
}

/// Gaussian over R^m held in information form (precision and
/// precision * mean). Immutable once built.
class GaussianBelief {
 public:
  GaussianBelief() = default;

  static GaussianBelief from_information(Eigen::MatrixXd precision, Eigen::VectorXd information) {
    GaussianBelief b;
    b.precision_ = 0.5 * (precision + precision.transpose());
    b.information_ = std::move(information);
    b.factor_ = robust_cholesky(b.precision_);
    b.mean_ = b.factor_.solve(b.information_);
    return b;
  }

  static GaussianBelief from_moments(const Eigen::VectorXd& mean, const Eigen::MatrixXd& covariance) {
    const auto llt = robust_cholesky(covariance);
    Eigen::MatrixXd precision =
        llt.solve(Eigen::MatrixXd::Identity(covariance.rows(), covariance.cols()));
    Eigen::VectorXd information = precision * mean;
    return from_information(std::move(precision), std::move(information));
  }

  [[nodiscard]] Eigen::Index dim() const noexcept { return mean_.size(); }
  [[nodiscard]] const Eigen::VectorXd& mean() const noexcept { return mean_; }
  [[nodiscard]] const Eigen::MatrixXd& precision() const noexcept { return precision_; }
  [[nodiscard]] const Eigen::VectorXd& information() const noexcept { return information_; }

  [[nodiscard]] Eigen::MatrixXd covariance() const {
    Eigen::MatrixXd cov = factor_.solve(Eigen::MatrixXd::Identity(dim(), dim()));
    return 0.5 * (cov + cov.transpose());
  }

  [[nodiscard]] double log_det_precision() const {
    return 2.0 * factor_.matrixLLT().diagonal().array().log().sum();
  }

  /// -1/2 (g - mean)' P (g - mean), the log density up to a constant.
  [[nodiscard]] double log_kernel(const Eigen::VectorXd& g) const {
    const Eigen::VectorXd r = g - mean_;
    return -0.5 * r.dot(precision_ * r);
  }

  /// One draw: mean + L z with L the Cholesky factor of the covariance.
  [[nodiscard]] Eigen::VectorXd sample(Rng& rng) const {
    const auto llt = robust_cholesky(covariance());
    Eigen::VectorXd z(dim());
    for (Eigen::Index k = 0; k < dim(); ++k) z(k) = rng.normal();
    return mean_ + llt.matrixL() * z;
  }

 private:
  Eigen::MatrixXd precision_;
  Eigen::VectorXd information_;
  Eigen::VectorXd mean_;
  Eigen::LLT<Eigen::MatrixXd> factor_;
};

/// Known quantities of the linear mixed model.
class LmmSpec {
 public:
  LmmSpec(Eigen::VectorXd mu_gamma, Eigen::MatrixXd sigma_gamma, double sigma1, double sigma2)
      : mu_gamma_(std::move(mu_gamma)),
        sigma_gamma_(std::move(sigma_gamma)),
        sigma1_(sigma1),
        sigma2_(sigma2) {
    if (mu_gamma_.size() == 0 || sigma_gamma_.rows() != mu_gamma_.size() ||
        sigma_gamma_.cols() != mu_gamma_.size())
      throw ConfigError("prior mean and covariance dimensions disagree");
    if (!(sigma1_ > 0.0) || !(sigma2_ > 0.0) || !std::isfinite(sigma1_) || !std::isfinite(sigma2_))
      throw ConfigError("sigma1 and sigma2 must be positive and finite");
    if (!sigma_gamma_.isApprox(sigma_gamma_.transpose(), 1e-12))
      throw ConfigError("prior covariance must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma_gamma_, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() <= 0.0)
      throw ConfigError("prior covariance must be positive definite");
    lambda_max_ = eig.eigenvalues().maxCoeff();
    prior_ = GaussianBelief::from_moments(mu_gamma_, sigma_gamma_);
  }

  [[nodiscard]] const Eigen::VectorXd& mu_gamma() const noexcept { return mu_gamma_; }
  [[nodiscard]] const Eigen::MatrixXd& sigma_gamma() const noexcept { return sigma_gamma_; }
  [[nodiscard]] double sigma1() const noexcept { return sigma1_; }
  [[nodiscard]] double sigma2() const noexcept { return sigma2_; }
  [[nodiscard]] Eigen::Index dim() const noexcept { return mu_gamma_.size(); }
  /// Largest eigenvalue of Sigma_gamma.
  [[nodiscard]] double lambda_max() const noexcept { return lambda_max_; }
  [[nodiscard]] const GaussianBelief& prior() const noexcept { return prior_; }

  [[nodiscard]] LmmSpec with_sigma1(double s1) const {
    return LmmSpec(mu_gamma_, sigma_gamma_, s1, sigma2_);
  }

 private:
  Eigen::VectorXd mu_gamma_;
  Eigen::MatrixXd sigma_gamma_;
  double sigma1_;
  double sigma2_;
  double lambda_max_ = 0.0;
  GaussianBelief prior_;
};

struct PerItemGaussian {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};

namespace detail {

inline void check_stats(const ItemStatistics& stats, const ItemCatalog& catalog) {
  if (stats.size() != catalog.n_items())
    throw std::invalid_argument("statistics cover " + std::to_string(stats.size()) +
                                " items, catalog has " + std::to_string(catalog.n_items()));
}

// Gamma posterior with sigma1 >= 0; sigma1 = 0 is Bayesian linear regression.
inline GaussianBelief gamma_posterior(const GaussianBelief& prior, double sigma1, double sigma2,
                                      const ItemStatistics& stats, const ItemCatalog& catalog) {
  check_stats(stats, catalog);
  if (prior.dim() != static_cast<Eigen::Index>(catalog.dim()))
    throw std::invalid_argument("prior dimension differs from feature dimension");
  const double s1sq = sigma1 * sigma1;
  const double s2sq = sigma2 * sigma2;
  const auto n = static_cast<Eigen::Index>(stats.size());
  Eigen::VectorXd weight(n), scaled_sum(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ni = static_cast<double>(stats.pulls[static_cast<std::size_t>(i)]);
    const double denom = s2sq + s1sq * ni;
    weight(i) = ni / denom;
    scaled_sum(i) = stats.totals[static_cast<std::size_t>(i)] / denom;
  }
  const auto& x = catalog.features;
  Eigen::MatrixXd precision = prior.precision();
  precision.noalias() += x.transpose() * weight.asDiagonal() * x;
  Eigen::VectorXd information = prior.information();
  information.noalias() += x.transpose() * scaled_sum;
  return GaussianBelief::from_information(std::move(precision), std::move(information));
}

}  // namespace detail

/// Posterior of gamma given H:
///   precision   = Sigma_gamma^-1 + sum_i n(i) / (sigma2^2 + sigma1^2 n(i)) x_i x_i'
///   information = Sigma_gamma^-1 mu_gamma + sum_i S(i) / (sigma2^2 + sigma1^2 n(i)) x_i
[[nodiscard]] inline GaussianBelief posterior_gamma(const LmmSpec& spec, const ItemStatistics& stats,
                                                    const ItemCatalog& catalog) {
  return detail::gamma_posterior(spec.prior(), spec.sigma1(), spec.sigma2(), stats, catalog);
}

/// Posterior of gamma under the degenerate model theta_i = x_i' gamma
/// (ordinary Bayesian linear regression with noise sigma2).
[[nodiscard]] inline GaussianBelief bayes_linear_posterior(const GaussianBelief& prior, double sigma2,
                                                           const ItemStatistics& stats,
                                                           const ItemCatalog& catalog) {
  return detail::gamma_posterior(prior, 0.0, sigma2, stats, catalog);
}

/// Independent Gaussian-Gaussian conjugate update per item:
/// prior N(prior_mean(i), prior_var), observations N(theta_i, sigma2^2).
[[nodiscard]] inline PerItemGaussian gaussian_item_posterior(const Eigen::VectorXd& prior_mean,
                                                             double prior_var, double sigma2,
                                                             const ItemStatistics& stats) {
  const auto n = prior_mean.size();
  PerItemGaussian out{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  if (!(prior_var >= 0.0) || !(sigma2 >= 0.0)) throw std::invalid_argument("variances must be non-negative");
  const double prior_prec = 1.0 / prior_var;
  const double noise_prec = 1.0 / (sigma2 * sigma2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    // Degenerate limits: a point-mass prior, or noiseless observations.
    if (prior_var == 0.0) {
      out.variance(i) = 0.0;
      out.mean(i) = prior_mean(i);
      continue;
    }
    if (sigma2 == 0.0 && stats.pulls[k] > 0) {
      out.variance(i) = 0.0;
      out.mean(i) = stats.totals[k] / static_cast<double>(stats.pulls[k]);
      continue;
    }
    const double v = 1.0 / (prior_prec + noise_prec * static_cast<double>(stats.pulls[k]));
    out.variance(i) = v;
    out.mean(i) = v * (prior_prec * prior_mean(i) + noise_prec * stats.totals[k]);
  }
  return out;
}

/// theta_i | gamma, H ~ N(mean_i, var_i) with
///   var_i  = 1 / (sigma1^-2 + sigma2^-2 n(i))
///   mean_i = var_i (sigma1^-2 x_i' gamma + sigma2^-2 S(i)).
[[nodiscard]] inline PerItemGaussian posterior_theta_given_gamma(const LmmSpec& spec,
                                                                 const ItemStatistics& stats,
                                                                 const ItemCatalog& catalog,
                                                                 const Eigen::VectorXd& gamma) {
  detail::check_stats(stats, catalog);
  const Eigen::VectorXd prior_mean = catalog.features * gamma;
  return gaussian_item_posterior(prior_mean, spec.sigma1() * spec.sigma1(), spec.sigma2(), stats);
}

/// Exact per-item marginals of theta | H with gamma integrated out. Since
/// E[theta_i | gamma, H] is affine in gamma with slope var_i sigma1^-2 x_i,
///   Var(theta_i | H) = var_i + (var_i sigma1^-2)^2 x_i' Cov(gamma | H) x_i.
[[nodiscard]] inline PerItemGaussian posterior_theta_per_item(const LmmSpec& spec,
                                                              const ItemStatistics& stats,
                                                              const ItemCatalog& catalog) {
  const GaussianBelief g = posterior_gamma(spec, stats, catalog);
  const Eigen::MatrixXd cov = g.covariance();
  const double p1 = 1.0 / (spec.sigma1() * spec.sigma1());
  const double p2 = 1.0 / (spec.sigma2() * spec.sigma2());
  const auto n = static_cast<Eigen::Index>(catalog.n_items());
  PerItemGaussian out{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const Eigen::VectorXd x = catalog.features.row(i).transpose();
    const double v = 1.0 / (p1 + p2 * static_cast<double>(stats.pulls[k]));
    const double slope = v * p1;
    out.mean(i) = slope * x.dot(g.mean()) + v * p2 * stats.totals[k];
    out.variance(i) = v + slope * slope * x.dot(cov * x);
  }
  return out;
}

/// Joint posterior of all N item parameters.
struct ThetaMarginal {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  Eigen::MatrixXd precision;  // covariance^-1; its diagonal grows by sigma2^-2 per pull
};

inline constexpr std::size_t kDenseItemLimit = 200;

/// Dense N x N posterior of theta | H:
///   precision = (Phi Sigma_gamma Phi' + sigma1^2 I)^-1 + sigma2^-2 diag(n)
///   mean      = covariance ((Phi Sigma_gamma Phi' + sigma1^2 I)^-1 Phi mu_gamma + sigma2^-2 S).
/// Intended for validation at small N; throws CapabilityError above 200 items.
[[nodiscard]] inline ThetaMarginal posterior_theta_marginal(const LmmSpec& spec,
                                                            const ItemStatistics& stats,
                                                            const ItemCatalog& catalog) {
  detail::check_stats(stats, catalog);
  const std::size_t n_items = catalog.n_items();
  if (n_items > kDenseItemLimit)
    throw CapabilityError("dense theta posterior limited to " + std::to_string(kDenseItemLimit) +
                          " items, got " + std::to_string(n_items));
  const auto n = static_cast<Eigen::Index>(n_items);
  const auto& phi = catalog.features;
  Eigen::MatrixXd prior_cov = phi * spec.sigma_gamma() * phi.transpose();
  prior_cov.diagonal().array() += spec.sigma1() * spec.sigma1();
  const auto prior_llt = robust_cholesky(prior_cov);

  ThetaMarginal out;
  out.precision = prior_llt.solve(Eigen::MatrixXd::Identity(n, n));
  out.precision = 0.5 * (out.precision + out.precision.transpose());
  Eigen::VectorXd information = out.precision * (phi * spec.mu_gamma());
  const double p2 = 1.0 / (spec.sigma2() * spec.sigma2());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    out.precision(i, i) += p2 * static_cast<double>(stats.pulls[k]);
    information(i) += p2 * stats.totals[k];
  }
  const auto post_llt = robust_cholesky(out.precision);
  out.covariance = post_llt.solve(Eigen::MatrixXd::Identity(n, n));
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
  out.mean = post_llt.solve(information);
  return out;
}

/// 1/2 logdet(Sigma_gamma * posterior precision): the information H
/// carries about gamma.
[[nodiscard]] inline double gamma_information_gain(const LmmSpec& spec, const ItemStatistics& stats,
                                                   const ItemCatalog& catalog) {
  const GaussianBelief post = posterior_gamma(spec, stats, catalog);
  const double value = 0.5 * (post.log_det_precision() - spec.prior().log_det_precision());
  return std::max(value, 0.0);
}

/// 1/2 log(1 + sigma1^2 / sigma2^2 * n).
[[nodiscard]] inline double theta_information_gain(const LmmSpec& spec, std::int64_t pulls) {
  if (pulls < 0) throw std::invalid_argument("pull count must be non-negative");
  const double ratio = (spec.sigma1() * spec.sigma1()) / (spec.sigma2() * spec.sigma2());
  return 0.5 * std::log1p(ratio * static_cast<double>(pulls));
}

/// Log density of the per-item mean rewards ybar_i = S(i)/n(i) (items with
/// n(i) > 0) with gamma integrated out:
///   ybar ~ N(X mu_gamma, X Sigma_gamma X' + diag(sigma1^2 + sigma2^2 / n(i))).
/// Differs from the log density of all raw rewards by a term that does not
/// depend on sigma1, so it ranks sigma1 candidates identically.
[[nodiscard]] inline double lmm_log_marginal_likelihood(const LmmSpec& spec,
                                                        const ItemStatistics& stats,
                                                        const ItemCatalog& catalog) {
  detail::check_stats(stats, catalog);
  const double s1sq = spec.sigma1() * spec.sigma1();
  const double s2sq = spec.sigma2() * spec.sigma2();
  const auto d = spec.dim();
  Eigen::MatrixXd inner = spec.prior().precision();  // Sigma^-1 + X' W X
  Eigen::VectorXd xwr = Eigen::VectorXd::Zero(d);
  double quad = 0.0, logdet_d = 0.0;
  std::size_t m = 0;
  for (std::size_t i = 0; i < stats.size(); ++i) {
    if (stats.pulls[i] == 0) continue;
    ++m;
    const auto ni = static_cast<double>(stats.pulls[i]);
    const double dvar = s1sq + s2sq / ni;
    const double w = 1.0 / dvar;
    const Eigen::VectorXd x = catalog.features.row(static_cast<Eigen::Index>(i)).transpose();
    const double r = stats.totals[i] / ni - x.dot(spec.mu_gamma());
    logdet_d += std::log(dvar);
    quad += w * r * r;
    inner.noalias() += w * x * x.transpose();
    xwr += w * r * x;
  }
  if (m == 0) return 0.0;
  const auto llt = robust_cholesky(inner);
  const double logdet_inner = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double logdet_total = logdet_d - spec.prior().log_det_precision() + logdet_inner;
  quad -= xwr.dot(llt.solve(xwr));
  return -0.5 * (static_cast<double>(m) * std::log(2.0 * std::numbers::pi) + logdet_total + quad);
}

}  // namespace mtss
