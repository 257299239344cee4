#include "nlrecon/core.hpp"
#include "nlrecon/errors.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace nlrecon;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> xs) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index k = 0;
    for (double x : xs) v(k++) = x;
    return v;
}

RowMatrix random_free(int M, int n_b, unsigned seed, double lo = -2.0, double hi = 2.0) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> unif(lo, hi);
    RowMatrix b(M, n_b);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = unif(gen);
    return b;
}

}  // namespace

TEST(Fta, Examples) {
    EXPECT_EQ(fta(HierarchySpec(builtin("ratio")), vec({4, 2})), vec({2, 4, 2}));
    EXPECT_EQ(fta(HierarchySpec(builtin("paraboloid")), vec({0, 0})), vec({0, 0, 0}));
    EXPECT_EQ(fta(HierarchySpec(builtin("saddle")), vec({3, 2})), vec({3.0 * 3.0 - 2.0 * 2.0, 3, 2}));
}

TEST(Fta, FreeBlockIsCopiedExactly) {
    HierarchySpec spec(builtin("ripples"));
    auto b = random_free(200, 2, 3);
    for (Eigen::Index i = 0; i < b.rows(); ++i) {
        Eigen::VectorXd bi = b.row(i).transpose();
        auto y = fta(spec, bi);
        EXPECT_EQ(y.tail(2), bi);
    }
}

TEST(Fta, DomainErrorNamesTheInput) {
    HierarchySpec spec(builtin("ratio"));
    try {
        fta(spec, vec({3, 0}));
        FAIL();
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("(3, 0)"), std::string::npos) << e.what();
    }
    EXPECT_THROW(fta(spec, vec({1, std::numeric_limits<double>::quiet_NaN()})), DomainError);
}

TEST(Spec, Counts) {
    HierarchySpec spec(builtin("ratio_block", {3}));
    EXPECT_EQ(spec.n_b(), 6);
    EXPECT_EQ(spec.n_u(), 6);
    EXPECT_EQ(spec.n(), 12);
}

TEST(SampleCloudType, Validation) {
    EXPECT_THROW(SampleCloud(RowMatrix(2, 3), 0), DimensionError);
    EXPECT_THROW(SampleCloud(RowMatrix(2, 3), 3), DimensionError);
    RowMatrix bad = RowMatrix::Zero(2, 3);
    bad(1, 2) = std::numeric_limits<double>::infinity();
    EXPECT_THROW(SampleCloud(bad, 1), DomainError);
    SampleCloud ok(RowMatrix::Zero(2, 3), 1);
    EXPECT_EQ(ok.size(), 2);
    EXPECT_EQ(ok.n_b(), 2);
}

TEST(GaussianDistType, Validation) {
    Eigen::MatrixXd asym(2, 2);
    asym << 1, 0.5, 0.4, 1;
    EXPECT_THROW(GaussianDist(Eigen::VectorXd::Zero(2), asym), NumericalError);
    Eigen::MatrixXd indef(2, 2);
    indef << 1, 2, 2, 1;
    EXPECT_THROW(GaussianDist(Eigen::VectorXd::Zero(2), indef), NumericalError);
    Eigen::MatrixXd psd(2, 2);
    psd << 1, 1, 1, 1;
    EXPECT_NO_THROW(GaussianDist(Eigen::VectorXd::Zero(2), psd));
    EXPECT_THROW(GaussianDist(Eigen::VectorXd::Zero(3), psd), DimensionError);
}

TEST(Coherence, PbuOutputIsCoherent) {
    HierarchySpec spec(builtin("saddle"));
    RowMatrix y(300, 3);
    y.rightCols(2) = random_free(300, 2, 11);
    y.col(0).setRandom();
    auto rep = coherence_check(spec, pbu_reconcile(spec, SampleCloud(y, 1)), 1e-10);
    EXPECT_EQ(rep.frac_coherent, 1.0);
    EXPECT_TRUE(rep.coherent());
}

TEST(Coherence, NoisyConstrainedBlockIsIncoherent) {
    HierarchySpec spec(builtin("paraboloid"));
    auto coherent = fta_cloud(spec, random_free(500, 2, 5));
    RowMatrix noisy = coherent.samples();
    std::mt19937_64 gen(9);
    std::normal_distribution<double> noise;
    for (Eigen::Index i = 0; i < noisy.rows(); ++i) noisy(i, 0) += noise(gen);
    auto rep = coherence_check(spec, SampleCloud(noisy, 1), 1e-8);
    EXPECT_LT(rep.frac_coherent, 0.01);
    EXPECT_GT(rep.max_residual, 1e-8);
    EXPECT_FALSE(rep.coherent());
}

TEST(Coherence, RepeatedPoint) {
    HierarchySpec spec(builtin("ripples"));
    auto y = fta(spec, vec({0.3, -1.2}));
    RowMatrix rows = y.transpose().replicate(50, 1);
    auto rep = coherence_check(spec, SampleCloud(rows, 1), 1e-12);
    EXPECT_LE(rep.max_residual, 1e-12);
    EXPECT_EQ(rep.frac_coherent, 1.0);
}

TEST(Coherence, FracIsOneIffMaxResidualWithinTolerance) {
    HierarchySpec spec(builtin("paraboloid"));
    RowMatrix y = fta_cloud(spec, random_free(20, 2, 4)).samples();
    y(7, 0) += 1e-6;
    SampleCloud cloud(y, 1);
    for (double tol : {1e-9, 1e-7, 1e-5}) {
        auto rep = coherence_check(spec, cloud, tol);
        EXPECT_EQ(rep.frac_coherent == 1.0, rep.max_residual <= tol) << tol;
    }
    EXPECT_EQ(coherence_check(spec, cloud, 1e-9).violations, 1);
}

TEST(Coherence, DimensionMismatchAndBadTolerance) {
    HierarchySpec spec(builtin("paraboloid"));
    SampleCloud cloud(RowMatrix::Zero(3, 4), 1);
    EXPECT_THROW(coherence_check(spec, cloud, 1e-8), DimensionError);
    SampleCloud ok(RowMatrix::Zero(3, 3), 1);
    EXPECT_THROW(coherence_check(spec, ok, 0.0), ConfigError);
}

TEST(Pbu, Example) {
    HierarchySpec spec(builtin("paraboloid"));
    RowMatrix y(1, 3);
    y << 99, 1, 2;
    auto out = pbu_reconcile(spec, SampleCloud(y, 1));
    EXPECT_EQ(out.samples(), (RowMatrix(1, 3) << 5, 1, 2).finished());
}

TEST(Pbu, CoherentInputUnchanged) {
    HierarchySpec spec(builtin("product"));
    auto cloud = fta_cloud(spec, random_free(100, 2, 2));
    EXPECT_EQ(pbu_reconcile(spec, cloud), cloud);
}

TEST(Pbu, IdempotentAndKeepsFreeBlock) {
    HierarchySpec spec(builtin("ripples"));
    RowMatrix y(400, 3);
    y.rightCols(2) = random_free(400, 2, 8);
    y.col(0).setRandom();
    SampleCloud base(y, 1);
    auto once = pbu_reconcile(spec, base);
    auto twice = pbu_reconcile(spec, once);
    EXPECT_EQ(once, twice);
    EXPECT_EQ(once.free_block(), base.free_block());
}

TEST(Pbu, RatioCloudCoherent) {
    HierarchySpec spec(builtin("ratio"));
    RowMatrix y(1000, 3);
    y.rightCols(2) = random_free(1000, 2, 21, 0.5, 3.0);
    y.col(0).setRandom();
    auto rep = coherence_check(spec, pbu_reconcile(spec, SampleCloud(y, 1)), 1e-10);
    EXPECT_EQ(rep.frac_coherent, 1.0);
}

TEST(Pbu, RowErrorCarriesIndex) {
    HierarchySpec spec(builtin("ratio"));
    RowMatrix y = RowMatrix::Ones(5, 3);
    y(3, 2) = 0.0;
    try {
        pbu_reconcile(spec, SampleCloud(y, 1));
        FAIL();
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos) << e.what();
    }
}

TEST(Parallel, FtaCloudIndependentOfThreads) {
    HierarchySpec spec(builtin("saddle"));
    auto b = random_free(1001, 2, 13);
    auto one = fta_cloud(spec, b, 1);
    for (int t : {2, 3, 8}) EXPECT_EQ(fta_cloud(spec, b, t), one);
}
