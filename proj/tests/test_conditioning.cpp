#include "nlrecon/conditioning.hpp"
#include "nlrecon/errors.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace nlrecon;

namespace {

Eigen::MatrixXd random_spd(int n, std::mt19937_64& gen, double ridge = 0.1) {
    std::normal_distribution<double> normal;
    Eigen::MatrixXd B = Eigen::MatrixXd::NullaryExpr(n, n, [&] { return normal(gen); });
    Eigen::MatrixXd S = B * B.transpose() / n + ridge * Eigen::MatrixXd::Identity(n, n);
    return 0.5 * (S + S.transpose());
}

Eigen::VectorXd random_vec(int n, std::mt19937_64& gen) {
    std::normal_distribution<double> normal;
    return Eigen::VectorXd::NullaryExpr(n, [&] { return normal(gen); });
}

double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return (a - b).norm() / std::max(1.0, b.norm());
}

UKFResult posterior_only(GaussianDist posterior) {
    return UKFResult{std::move(posterior), {}, {}, {}, {}, false};
}

}  // namespace

TEST(SigmaPoints, OneDimensionalHandExample) {
    UTParams p;
    p.alpha = 1.0;
    p.beta = 0.0;
    p.kappa = 2.0;
    auto set = sigma_points(GaussianDist(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Ones(1, 1)), p);
    EXPECT_DOUBLE_EQ(p.lambda(1), 2.0);
    ASSERT_EQ(set.points.rows(), 3);
    EXPECT_EQ(set.points(0, 0), 0.0);
    EXPECT_NEAR(set.points(1, 0), std::sqrt(3.0), 1e-15);
    EXPECT_NEAR(set.points(2, 0), -std::sqrt(3.0), 1e-15);
    EXPECT_NEAR(set.w_mean(0), 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(set.w_mean(1), 1.0 / 6.0, 1e-15);
    EXPECT_NEAR(set.w_mean(2), 1.0 / 6.0, 1e-15);
    EXPECT_NEAR(set.w_cov(0), 2.0 / 3.0, 1e-15);
}

TEST(SigmaPoints, ReproduceMoments) {
    std::mt19937_64 gen(21);
    for (int n = 1; n <= 30; n += 3) {
        GaussianDist prior(random_vec(n, gen), random_spd(n, gen));
        auto set = sigma_points(prior, {});
        EXPECT_NEAR(set.w_mean.sum(), 1.0, 1e-12);
        Eigen::VectorXd mean = set.points.transpose() * set.w_mean;
        EXPECT_LE((mean - prior.mean()).norm(), 1e-12 * std::max(1.0, prior.mean().norm())) << n;
        Eigen::MatrixXd dx = set.points.rowwise() - prior.mean().transpose();
        Eigen::MatrixXd cov = dx.transpose() * set.w_cov.asDiagonal() * dx;
        EXPECT_LE(rel_err(cov, prior.cov()), 1e-10) << n;
    }
}

TEST(SigmaPoints, SemidefinitePriorGetsJitter) {
    Eigen::Matrix2d cov;
    cov << 1, 1, 1, 1;
    EXPECT_NO_THROW(sigma_points(GaussianDist(Eigen::Vector2d::Zero(), cov), {}));
}

TEST(UTParamsCheck, KappaTooSmall) {
    UTParams p;
    p.kappa = -10.0;
    EXPECT_THROW(p.validate(2), ConfigError);
    p = {};
    p.alpha = 0.0;
    EXPECT_THROW(p.validate(2), ConfigError);
    EXPECT_NO_THROW(UTParams{}.validate(30));
}

TEST(Ukf, LinearMatchesKalmanUpdate) {
    std::mt19937_64 gen(22);
    std::normal_distribution<double> normal;
    for (int rep = 0; rep < 20; ++rep) {
        const int n_b = 1 + rep % 10;
        const int n_u = 1 + rep % 3;
        Eigen::MatrixXd A = Eigen::MatrixXd::NullaryExpr(n_u, n_b, [&] { return normal(gen); });
        HierarchySpec spec(linear_map(A));
        GaussianDist prior(random_vec(n_b, gen), random_spd(n_b, gen));
        Eigen::MatrixXd R = random_spd(n_u, gen);
        Eigen::VectorXd u_hat = random_vec(n_u, gen);
        auto res = ukf_reconcile(spec, prior, u_hat, R);
        auto exact = oracle::linear_conditional(A, prior.mean(), prior.cov(), R, u_hat);
        EXPECT_LE(rel_err(res.posterior.mean(), exact.mean), 1e-10) << rep;
        EXPECT_LE(rel_err(res.posterior.cov(), exact.cov), 1e-10) << rep;
        EXPECT_LE(rel_err(res.K * res.S_u, res.P_bu), 1e-10);
        EXPECT_EQ(res.posterior.cov(), res.posterior.cov().transpose());
    }
}

TEST(Ukf, ZeroInnovationKeepsMean) {
    HierarchySpec spec(builtin("paraboloid"));
    GaussianDist prior(Eigen::Vector2d(0.7, -0.2), Eigen::Vector2d(0.04, 0.09).asDiagonal());
    auto first = ukf_reconcile(spec, prior, Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1) * 0.01);
    auto res = ukf_reconcile(spec, prior, first.u_pred, Eigen::MatrixXd::Identity(1, 1) * 0.01);
    EXPECT_LT((res.posterior.mean() - prior.mean()).norm(), 1e-14);
}

TEST(Ukf, UninformativeObservation) {
    HierarchySpec spec(builtin("ratio"));
    GaussianDist prior(Eigen::Vector2d(1.0, 2.0), Eigen::Vector2d(0.01, 0.01).asDiagonal());
    auto res = ukf_reconcile(spec, prior, Eigen::VectorXd::Constant(1, 3.0), Eigen::MatrixXd::Identity(1, 1) * 1e12);
    EXPECT_LE((res.posterior.mean() - prior.mean()).norm(), 1e-4 * prior.mean().norm());
    EXPECT_LE(rel_err(res.posterior.cov(), prior.cov()), 1e-6);
}

TEST(Ukf, PosteriorContracts) {
    std::mt19937_64 gen(23);
    for (const char* name : {"paraboloid", "saddle", "ripples", "product"}) {
        HierarchySpec spec(builtin(name));
        for (int rep = 0; rep < 10; ++rep) {
            GaussianDist prior(random_vec(2, gen), random_spd(2, gen));
            auto res = ukf_reconcile(spec, prior, random_vec(1, gen), random_spd(1, gen));
            EXPECT_LE(res.posterior.cov().trace(), prior.cov().trace() + 1e-10) << name;
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(res.posterior.cov());
            EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-8 * res.posterior.cov().trace() / 2);
            EXPECT_LE(rel_err(res.K * res.S_u, res.P_bu), 1e-10);
        }
    }
}

TEST(Ukf, SigmaPointOutsideDomain) {
    HierarchySpec spec(builtin("ratio"));
    GaussianDist prior(Eigen::Vector2d(1.0, 0.0), Eigen::Matrix2d::Identity());
    try {
        ukf_reconcile(spec, prior, Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1));
        FAIL();
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("sigma point 0"), std::string::npos) << e.what();
    }
}

TEST(Ukf, MatchesRejectionOracleOnRatio) {
    HierarchySpec spec(builtin("ratio"));
    const Eigen::Vector2d b_hat(1.0, 2.0);
    const Eigen::Matrix2d cov = Eigen::Vector2d(0.01, 0.01).asDiagonal();
    const double u_hat = 0.55;
    auto res = ukf_reconcile(spec, GaussianDist(b_hat, cov), Eigen::VectorXd::Constant(1, u_hat),
                             Eigen::MatrixXd::Identity(1, 1) * 1e-4);
    Eigen::Vector2d mc = oracle::rejection_ratio_mean(b_hat, cov, u_hat, 0.01, 20000, 24);
    EXPECT_LT((res.posterior.mean() - mc).cwiseAbs().maxCoeff(), 0.05);
}

TEST(SamplePosterior, MeanWithinStandardError) {
    HierarchySpec spec(builtin("ripples"));
    const UKFResult r = posterior_only(GaussianDist(Eigen::Vector2d(0.3, -0.4), (Eigen::Matrix2d() << 0.5, 0.2, 0.2, 0.3).finished()));
    const int M = 50000;
    auto cloud = sample_posterior(r, spec, M, 77);
    Eigen::VectorXd mean = cloud.free_block().colwise().mean().transpose();
    for (int k = 0; k < 2; ++k) {
        EXPECT_LT(std::abs(mean(k) - r.posterior.mean()(k)), 3.0 * std::sqrt(r.posterior.cov()(k, k) / M));
    }
    EXPECT_TRUE(coherence_check(spec, cloud, 1e-10).coherent());
}

TEST(SamplePosterior, DegenerateCovariance) {
    HierarchySpec spec(builtin("saddle"));
    const UKFResult r = posterior_only(GaussianDist(Eigen::Vector2d(1.5, 0.5), Eigen::Matrix2d::Zero()));
    auto cloud = sample_posterior(r, spec, 10, 1);
    const Eigen::VectorXd expected = fta(spec, r.posterior.mean());
    for (int i = 0; i < cloud.size(); ++i) {
        EXPECT_EQ(Eigen::Map<const Eigen::VectorXd>(cloud.row(i).data(), 3), expected);
    }
}

TEST(SamplePosterior, WorkerCountDoesNotChangeCloud) {
    HierarchySpec spec(builtin("ratio_block", {3}));
    const UKFResult r = posterior_only(GaussianDist(Eigen::VectorXd::Constant(6, 10.0), Eigen::MatrixXd::Identity(6, 6)));
    auto one = sample_posterior(r, spec, 1001, 5, 1);
    auto three = sample_posterior(r, spec, 1001, 5, 3);
    auto other_seed = sample_posterior(r, spec, 1001, 6, 1);
    EXPECT_TRUE(one == three);
    EXPECT_FALSE(one == other_seed);
    EXPECT_THROW(sample_posterior(r, spec, 1, 5), ConfigError);
}

TEST(SamplePosterior, CoherentForBuiltins) {
    std::mt19937_64 gen(25);
    for (const auto& name : builtin_names()) {
        HierarchySpec spec(builtin(name));
        const int n_b = spec.n_b();
        // Positive means keep ratio-type maps inside their domain.
        Eigen::VectorXd mean = Eigen::VectorXd::Constant(n_b, 5.0);
        GaussianDist prior(mean, 0.01 * random_spd(n_b, gen));
        auto res = ukf_reconcile(spec, prior, fta(spec, mean).head(spec.n_u()),
                                 0.01 * Eigen::MatrixXd::Identity(spec.n_u(), spec.n_u()));
        auto cloud = sample_posterior(res, spec, 500, 3);
        EXPECT_TRUE(coherence_check(spec, cloud, 1e-10).coherent()) << name;
    }
}

TEST(GaussianPrior, FromCloudAndMean) {
    std::mt19937_64 gen(26);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd res = Eigen::MatrixXd::NullaryExpr(400, 3, [&] { return normal(gen); });
    ResidualMatrix r(res);
    RowMatrix rows = Eigen::RowVector3d(9.0, 1.0, 2.0).replicate(5, 1);
    auto prior = gaussian_prior_from(SampleCloud(rows, 1), r);
    EXPECT_EQ(prior.mean(), Eigen::Vector2d(1.0, 2.0));
    EXPECT_EQ(prior.cov(), shrink_cov(r).cov.bottomRightCorner(2, 2));
    EXPECT_LT(std::abs(prior.cov()(0, 1)), 0.1);

    Eigen::Vector2d m(-3.0, 4.0);
    EXPECT_EQ(gaussian_prior_from(m, r).mean(), m);
    EXPECT_THROW(gaussian_prior_from(Eigen::Vector3d(1, 2, 3), r), DimensionError);
}

TEST(PsdSqrt, Factorizes) {
    std::mt19937_64 gen(27);
    Eigen::MatrixXd S = random_spd(4, gen);
    Eigen::MatrixXd F = psd_sqrt(S);
    EXPECT_LE(rel_err(F * F.transpose(), S), 1e-12);
    Eigen::MatrixXd v = random_vec(4, gen);
    Eigen::MatrixXd low_rank = v * v.transpose();
    F = psd_sqrt(low_rank);
    EXPECT_LE(rel_err(F * F.transpose(), low_rank), 1e-12);
    EXPECT_THROW(psd_sqrt(-Eigen::MatrixXd::Identity(2, 2)), NumericalError);
}
