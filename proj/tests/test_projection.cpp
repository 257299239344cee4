#include "nlrecon/errors.hpp"
#include "nlrecon/projection.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace nlrecon;

namespace {

Eigen::MatrixXd random_spd(int n, std::mt19937_64& gen) {
    std::normal_distribution<double> normal;
    Eigen::MatrixXd B = Eigen::MatrixXd::NullaryExpr(n, n, [&] { return normal(gen); });
    Eigen::MatrixXd W = B * B.transpose() + 0.5 * Eigen::MatrixXd::Identity(n, n);
    return 0.5 * (W + W.transpose());
}

RowMatrix noisy_rows(const HierarchySpec& spec, int M, double spread, double noise, unsigned seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> uni(-spread, spread);
    std::normal_distribution<double> normal(0.0, noise);
    RowMatrix out(M, spec.n());
    for (int i = 0; i < M; ++i) {
        Eigen::VectorXd b = Eigen::VectorXd::NullaryExpr(spec.n_b(), [&] { return uni(gen); });
        Eigen::VectorXd y = fta(spec, b);
        for (int j = 0; j < spec.n(); ++j) out(i, j) = y(j) + normal(gen);
    }
    return out;
}

}  // namespace

TEST(ProjectPoint, OnManifoldQueryIsFixed) {
    HierarchySpec spec(builtin("paraboloid"));
    Eigen::Vector2d b0(0.3, -1.2);
    auto p = project_point(spec, identity_weights(3), fta(spec, b0));
    EXPECT_TRUE(p.converged);
    EXPECT_LE(p.iterations, 1);
    EXPECT_LT((p.b_star - b0).norm(), 1e-12);
}

TEST(ProjectPoint, ParaboloidExample) {
    // Symmetric minimizer b1 = b2 = t with 4 t^3 + t - 1 = 0, i.e. t = 1/2.
    HierarchySpec spec(builtin("paraboloid"));
    auto p = project_point(spec, identity_weights(3), Eigen::Vector3d(0, 1, 1));
    ASSERT_TRUE(p.converged);
    auto grid = oracle::grid_projection(oracle::paraboloid, Eigen::Vector3d(0, 1, 1), -2, 2, 1e-2);
    EXPECT_LT((p.b_star - grid).norm(), 1e-3);
    EXPECT_NEAR(p.b_star(0), 0.5, 1e-9);
    EXPECT_NEAR(p.b_star(1), 0.5, 1e-9);
}

TEST(ProjectPoint, GridOracleOnSurfaces) {
    const std::pair<const char*, oracle::Surface> surfaces[] = {
        {"paraboloid", oracle::paraboloid}, {"saddle", oracle::saddle}, {"ripples", oracle::ripples}};
    for (const auto& [name, f] : surfaces) {
        HierarchySpec spec(builtin(name));
        RowMatrix q = noisy_rows(spec, 4, 1.0, 0.2, 11);
        for (int i = 0; i < q.rows(); ++i) {
            Eigen::Vector3d y = q.row(i).transpose();
            auto p = project_point(spec, identity_weights(3), y);
            ASSERT_TRUE(p.converged) << name;
            auto grid = oracle::grid_projection(f, y, -2, 2, 1e-2);
            EXPECT_LT((p.b_star - grid).norm(), 1e-3) << name << " query " << i;
        }
    }
}

TEST(ProjectPoint, LinearMatchesClosedFormForAllWeights) {
    std::mt19937_64 gen(12);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd A = Eigen::MatrixXd::NullaryExpr(2, 3, [&] { return normal(gen); });
    HierarchySpec spec(linear_map(A));
    Eigen::MatrixXd full = random_spd(5, gen);
    Eigen::VectorXd var = Eigen::VectorXd::NullaryExpr(5, [&] { return 0.5 + std::abs(normal(gen)); });
    const WeightSpec weights[] = {identity_weights(5), WeightSpec(WeightKind::WLS, var.asDiagonal()),
                                  WeightSpec(WeightKind::FULL, full)};
    for (const auto& W : weights) {
        for (int k = 0; k < 20; ++k) {
            Eigen::VectorXd y = Eigen::VectorXd::NullaryExpr(5, [&] { return 3.0 * normal(gen); });
            auto p = project_point(spec, W, y);
            ASSERT_TRUE(p.converged);
            Eigen::VectorXd expected = oracle::linear_projection(A, W.W(), y);
            EXPECT_LT((fta(spec, p.b_star) - expected).cwiseAbs().maxCoeff(), 1e-8) << to_string(W.kind());
        }
    }
}

TEST(ProjectPoint, StationarityAtConvergence) {
    HierarchySpec spec(builtin("ratio"));
    std::mt19937_64 gen(13);
    std::uniform_real_distribution<double> uni(1.0, 2.0);
    std::normal_distribution<double> normal(0.0, 0.05);
    for (int i = 0; i < 50; ++i) {
        Eigen::Vector2d b(uni(gen), uni(gen));
        Eigen::Vector3d y = fta(spec, b) + Eigen::Vector3d(normal(gen), normal(gen), normal(gen));
        auto p = project_point(spec, identity_weights(3), y);
        ASSERT_TRUE(p.converged);
        Eigen::MatrixXd J(3, 2);
        J << spec.ftc().jacobian(p.b_star), Eigen::Matrix2d::Identity();
        const Eigen::VectorXd r = fta(spec, p.b_star) - y;
        EXPECT_LE((J.transpose() * r).norm(), 1e-10 * std::max(1.0, r.squaredNorm()));
        EXPECT_NEAR(p.objective, r.squaredNorm(), 1e-12);
    }
}

TEST(ProjectCloud, CoherentInputUnchanged) {
    HierarchySpec spec(builtin("ripples"));
    RowMatrix b = noisy_rows(spec, 200, 1.5, 0.0, 14).rightCols(2);
    SampleCloud coherent = fta_cloud(spec, b);
    auto out = project_cloud(spec, identity_weights(3), coherent);
    EXPECT_LT((out.cloud.samples() - coherent.samples()).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_EQ(out.diagnostics.fallback_count, 0);
}

TEST(ProjectCloud, IdempotentAndCoherent) {
    std::mt19937_64 gen(15);
    for (const char* name : {"paraboloid", "saddle", "ripples"}) {
        HierarchySpec spec(builtin(name));
        WeightSpec W(WeightKind::FULL, random_spd(3, gen));
        SampleCloud base(noisy_rows(spec, 300, 1.0, 0.1, 16), 1);
        auto once = project_cloud(spec, W, base);
        auto twice = project_cloud(spec, W, once.cloud);
        // Gauss-Newton is only linearly convergent when the residual is large
        // against the curvature; such rows may fall back, but rarely.
        EXPECT_LE(once.diagnostics.fallback_count, 3) << name;
        EXPECT_LT((twice.cloud.samples() - once.cloud.samples()).cwiseAbs().maxCoeff(), 1e-7) << name;
        auto report = coherence_check(spec, once.cloud, 1e-8);
        EXPECT_TRUE(report.coherent()) << name << " max residual " << report.max_residual;
    }
}

TEST(ProjectCloud, ObjectiveNeverAboveWarmStart) {
    HierarchySpec spec(builtin("saddle"));
    SampleCloud base(noisy_rows(spec, 200, 1.0, 0.5, 17), 1);
    auto out = project_cloud(spec, identity_weights(3), base);
    for (int i = 0; i < base.size(); ++i) {
        Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(base.row(i).data(), 3);
        Eigen::VectorXd start = fta(spec, y.tail(2));
        EXPECT_LE(out.diagnostics.objective[i], (y - start).squaredNorm());
    }
}

TEST(ProjectCloud, WorkerCountDoesNotChangeResult) {
    HierarchySpec spec(builtin("ripples"));
    SampleCloud base(noisy_rows(spec, 257, 1.0, 0.3, 18), 1);
    auto one = project_cloud(spec, identity_weights(3), base, {}, 1);
    auto four = project_cloud(spec, identity_weights(3), base, {}, 4);
    EXPECT_TRUE(one.cloud == four.cloud);
    EXPECT_EQ(one.diagnostics.iterations, four.diagnostics.iterations);
}

TEST(ProjectCloud, TooManyFallbacksIsAnError) {
    HierarchySpec spec(builtin("paraboloid"));
    SampleCloud base(noisy_rows(spec, 20, 1.0, 1.0, 19), 1);
    ProjectionConfig cfg;
    cfg.max_iter = 1;
    cfg.grad_tol = 1e-300;
    EXPECT_THROW(project_cloud(spec, identity_weights(3), base, cfg), NumericalError);
}

TEST(ProjectCloud, FallbackKeepsFreeBlock) {
    HierarchySpec spec(builtin("paraboloid"));
    Eigen::Vector3d y(5.0, 1.0, -1.0);
    ProjectionConfig cfg;
    cfg.max_iter = 1;
    cfg.grad_tol = 1e-300;
    auto p = project_point(spec, identity_weights(3), y, cfg);
    EXPECT_TRUE(p.fell_back);
    EXPECT_FALSE(p.converged);
    EXPECT_EQ(p.b_star, y.tail(2));
}

TEST(ProjectionConfigCheck, RejectsInvalid) {
    HierarchySpec spec(builtin("paraboloid"));
    ProjectionConfig cfg;
    cfg.max_iter = 0;
    EXPECT_THROW(project_point(spec, identity_weights(3), Eigen::Vector3d(1, 1, 1), cfg), ConfigError);
    cfg = {};
    cfg.grad_tol = -1;
    EXPECT_THROW(cfg.validate(), ConfigError);
    EXPECT_THROW(project_point(spec, identity_weights(4), Eigen::Vector3d(1, 1, 1)), DimensionError);
}

TEST(ProjectPoint, ConvergesWithSmallWeights) {
    // Small residual variances make W^{-1} large: steps get very short and
    // g changes below its rounding error near the minimizer.
    std::mt19937_64 gen(20);
    std::uniform_real_distribution<double> uni(1.0, 2.0);
    std::normal_distribution<double> noise(0.0, 0.05);
    for (const char* name : {"product", "ratio", "saddle"}) {
        HierarchySpec spec(builtin(name));
        WeightSpec W(WeightKind::WLS, Eigen::Vector3d(0.0030, 0.0026, 0.0026).asDiagonal());
        for (int i = 0; i < 300; ++i) {
            const Eigen::Vector2d b(uni(gen), uni(gen));
            const Eigen::Vector3d y = fta(spec, b) + Eigen::Vector3d(noise(gen), noise(gen), noise(gen));
            auto p = project_point(spec, W, y);
            ASSERT_TRUE(p.converged) << name << " query " << i << " gradient " << p.grad_norm;
        }
    }
}
