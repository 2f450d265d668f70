#include <gtest/gtest.h>

#include "mtss/lmm.hpp"
#include "support.hpp"

using namespace mtss;
using namespace mtss::ref;

namespace {

ItemCatalog one_item() {
  Eigen::MatrixXd x(1, 1);
  x << 1.0;
  return ItemCatalog(x);
}

ItemStatistics stats1(std::int64_t n, double s) {
  ItemStatistics st(1);
  st.pulls[0] = n;
  st.totals[0] = s;
  return st;
}

LmmSpec unit_spec(double s1 = 1.0, double s2 = 1.0) {
  return LmmSpec(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1), s1, s2);
}

}  // namespace

TEST(GammaPosterior, OneDimensionalConjugate) {
  // y ~ N(gamma, sigma1^2 + sigma2^2): precision 1 + 1/2, mean (y / 2) / 1.5.
  const GaussianBelief g = posterior_gamma(unit_spec(), stats1(1, 2.0), one_item());
  EXPECT_NEAR(g.mean()(0), 2.0 / 3.0, 1e-14);
  EXPECT_NEAR(g.covariance()(0, 0), 2.0 / 3.0, 1e-14);
}

TEST(ThetaGivenGamma, OneDimensionalConjugate) {
  const PerItemGaussian p =
      posterior_theta_given_gamma(unit_spec(), stats1(1, 3.0), one_item(), Eigen::VectorXd::Ones(1));
  EXPECT_NEAR(p.mean(0), 2.0, 1e-14);
  EXPECT_NEAR(p.variance(0), 0.5, 1e-14);
}

TEST(ThetaGivenGamma, DegenerateLimits) {
  const PerItemGaussian point = gaussian_item_posterior(Eigen::VectorXd::Constant(1, 0.3), 0.0, 1.0, stats1(4, 10.0));
  EXPECT_EQ(point.mean(0), 0.3);
  EXPECT_EQ(point.variance(0), 0.0);
  const PerItemGaussian exact = gaussian_item_posterior(Eigen::VectorXd::Zero(1), 1.0, 0.0, stats1(4, 10.0));
  EXPECT_EQ(exact.mean(0), 2.5);
  EXPECT_EQ(exact.variance(0), 0.0);
}

TEST(GammaPosterior, NoDataReturnsPrior) {
  Rng rng = seeded_rng(2, "prior");
  const Eigen::MatrixXd sigma = random_spd(3, rng);
  const Eigen::VectorXd mu = Eigen::Vector3d(0.1, -0.2, 0.3);
  const LmmSpec spec(mu, sigma, 0.5, 1.0);
  ItemCatalog cat(random_features(6, 3, rng));
  const GaussianBelief g = posterior_gamma(spec, ItemStatistics(6), cat);
  EXPECT_LT(rel_err(g.mean(), mu), 1e-12);
  EXPECT_LT(rel_err(g.covariance(), sigma), 1e-12);
}

TEST(GammaPosterior, MatchesDenseUncollapsedModel) {
  Rng rng = seeded_rng(3, "dense");
  for (int rep = 0; rep < 25; ++rep) {
    const std::size_t n = 2 + rng.below(8), d = 1 + rng.below(4), t = 1 + rng.below(20);
    ItemCatalog cat(random_features(n, d, rng));
    const Eigen::MatrixXd sigma = random_spd(d, rng);
    Eigen::VectorXd mu(d);
    for (auto& v : mu) v = rng.normal();
    const double s1 = 0.2 + rng.uniform(), s2 = 0.2 + rng.uniform();
    const RawObservations obs = random_pulls(n, t, 1 + rng.below(3), rng, 2.0);
    const LmmSpec spec(mu, sigma, s1, s2);
    const GaussianBelief g = posterior_gamma(spec, obs.statistics(n), cat);
    const auto [prec, info] = dense_gamma_posterior(cat.features, mu, sigma, s1, s2, obs);
    EXPECT_LT(rel_err(g.precision(), prec), 1e-8);
    EXPECT_LT(rel_err(g.mean(), Eigen::VectorXd(prec.ldlt().solve(info))), 1e-8);
  }
}

TEST(ThetaMarginal, MatchesConditioningInCovarianceForm) {
  Rng rng = seeded_rng(4, "dense-theta");
  for (int rep = 0; rep < 25; ++rep) {
    const std::size_t n = 2 + rng.below(8), d = 1 + rng.below(4), t = 1 + rng.below(20);
    ItemCatalog cat(random_features(n, d, rng));
    const Eigen::MatrixXd sigma = random_spd(d, rng);
    const Eigen::VectorXd mu = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(d), 0.3);
    const double s1 = 0.2 + rng.uniform(), s2 = 0.2 + rng.uniform();
    const RawObservations obs = random_pulls(n, t, 2, rng);
    const LmmSpec spec(mu, sigma, s1, s2);
    const ItemStatistics st = obs.statistics(n);
    const ThetaMarginal m = posterior_theta_marginal(spec, st, cat);
    const auto [mean, cov] = dense_theta_posterior(cat.features, mu, sigma, s1, s2, obs);
    EXPECT_LT(rel_err(m.mean, mean), 1e-8);
    EXPECT_LT(rel_err(m.covariance, cov), 1e-8);
    // The per-item marginals agree with the dense diagonal.
    const PerItemGaussian p = posterior_theta_per_item(spec, st, cat);
    EXPECT_LT(rel_err(p.mean, mean), 1e-8);
    EXPECT_LT(rel_err(p.variance, Eigen::VectorXd(cov.diagonal())), 1e-8);
  }
}

TEST(ThetaMarginal, RefusesLargeCatalogs) {
  Rng rng = seeded_rng(5, "big");
  ItemCatalog cat(random_features(kDenseItemLimit + 1, 2, rng));
  EXPECT_THROW((void)posterior_theta_marginal(LmmSpec(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2), 1, 1),
                                              ItemStatistics(cat.n_items()), cat),
               CapabilityError);
}

TEST(ThetaMarginal, PrecisionDiagonalGrowsBySigma2PerPull) {
  Rng rng = seeded_rng(6, "recursion");
  ItemCatalog cat(random_features(5, 3, rng));
  const LmmSpec spec(Eigen::VectorXd::Zero(3), random_spd(3, rng), 0.7, 1.3);
  ItemStatistics st(5);
  Eigen::MatrixXd prev = posterior_theta_marginal(spec, st, cat).precision;
  for (int k = 0; k < 30; ++k) {
    const Index i = rng.below(5);
    st.pulls[i] += 1;
    st.totals[i] += rng.normal();
    const Eigen::MatrixXd next = posterior_theta_marginal(spec, st, cat).precision;
    Eigen::MatrixXd diff = next - prev;
    diff(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) -= 1.0 / (1.3 * 1.3);
    EXPECT_LT(diff.cwiseAbs().maxCoeff(), 1e-12 * next.cwiseAbs().maxCoeff());
    prev = next;
  }
}

TEST(BayesLinear, SmallSigma1ApproachesDeterminedModel) {
  Rng rng = seeded_rng(7, "limit");
  ItemCatalog cat(random_features(6, 2, rng));
  const RawObservations obs = random_pulls(6, 15, 2, rng);
  const ItemStatistics st = obs.statistics(6);
  const GaussianBelief prior = GaussianBelief::from_moments(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2));
  const GaussianBelief lin = bayes_linear_posterior(prior, 1.0, st, cat);
  const GaussianBelief near = posterior_gamma(LmmSpec(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2), 1e-6, 1.0), st, cat);
  EXPECT_LT(rel_err(near.mean(), lin.mean()), 1e-9);
  EXPECT_LT(rel_err(near.covariance(), lin.covariance()), 1e-9);
}

TEST(InformationGain, ClosedFormsAndMonotonicity) {
  EXPECT_NEAR(theta_information_gain(unit_spec(1.0, 2.0), 8), 0.5 * std::log(3.0), 1e-15);
  EXPECT_EQ(theta_information_gain(unit_spec(), 0), 0.0);
  // d = 1, one item x = 1, n pulls: posterior precision 1 + n / (1 + n).
  for (int n : {0, 1, 5, 50}) {
    const double expect = 0.5 * std::log(1.0 + n / (1.0 + n));
    EXPECT_NEAR(gamma_information_gain(unit_spec(), stats1(n, 0.0), one_item()), expect, 1e-14);
  }
}

TEST(MarginalLikelihood, RanksSigma1LikeTheFullEvidence) {
  Rng rng = seeded_rng(8, "evidence");
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t n = 3 + rng.below(5), d = 1 + rng.below(3);
    ItemCatalog cat(random_features(n, d, rng));
    const Eigen::MatrixXd sigma = random_spd(d, rng);
    const Eigen::VectorXd mu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
    const RawObservations obs = random_pulls(n, 12, 2, rng, 1.5);
    const ItemStatistics st = obs.statistics(n);
    const double s2 = 0.8;
    const LmmSpec a(mu, sigma, 0.3, s2), b(mu, sigma, 1.7, s2);
    const double mine = lmm_log_marginal_likelihood(a, st, cat) - lmm_log_marginal_likelihood(b, st, cat);
    const double full = dense_log_evidence(cat.features, mu, sigma, 0.3, s2, obs) -
                        dense_log_evidence(cat.features, mu, sigma, 1.7, s2, obs);
    EXPECT_NEAR(mine, full, 1e-8 * std::max(1.0, std::abs(full)));
  }
}

TEST(LmmSpec, RejectsInvalidParameters) {
  EXPECT_THROW(LmmSpec(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2), 0.0, 1.0), ConfigError);
  EXPECT_THROW(LmmSpec(Eigen::VectorXd::Zero(2), -Eigen::MatrixXd::Identity(2, 2), 1.0, 1.0), ConfigError);
  EXPECT_THROW(LmmSpec(Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(2, 2), 1.0, 1.0), ConfigError);
}

TEST(GaussianBelief, SampleMoments) {
  Rng rng = seeded_rng(9, "sample");
  Eigen::Matrix2d cov;
  cov << 2.0, 0.6, 0.6, 0.5;
  const GaussianBelief g = GaussianBelief::from_moments(Eigen::Vector2d(1.0, -1.0), cov);
  Eigen::Vector2d s = Eigen::Vector2d::Zero();
  Eigen::Matrix2d ss = Eigen::Matrix2d::Zero();
  const int n = 100000;
  for (int k = 0; k < n; ++k) {
    const Eigen::VectorXd z = g.sample(rng);
    s += z;
    ss += z * z.transpose();
  }
  const Eigen::Vector2d m = s / n;
  EXPECT_LT((m - Eigen::Vector2d(1.0, -1.0)).cwiseAbs().maxCoeff(), 0.02);
  EXPECT_LT((ss / n - m * m.transpose() - cov).cwiseAbs().maxCoeff(), 0.03);
}
