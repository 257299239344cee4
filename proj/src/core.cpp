#include "nlrecon/core.hpp"

#include "nlrecon/errors.hpp"
#include "nlrecon/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

namespace nlrecon {

namespace {

void check_columns(const HierarchySpec& spec, int n, const char* what) {
    if (n != spec.n()) {
        throw DimensionError(std::string(what) + ": expected " + std::to_string(spec.n()) +
                             " columns, got " + std::to_string(n));
    }
}

}  // namespace

HierarchySpec::HierarchySpec(ConstraintFn ftc) : ftc_(std::move(ftc)) {}

SampleCloud::SampleCloud(RowMatrix samples, int n_u) : samples_(std::move(samples)), n_u_(n_u) {
    if (samples_.rows() < 1) throw DimensionError("sample cloud has no rows");
    if (n_u_ < 1 || n_u_ >= samples_.cols()) {
        throw DimensionError("sample cloud needs at least one constrained and one free column");
    }
    const double* p = samples_.data();
    if (!std::all_of(p, p + samples_.size(), [](double v) { return std::isfinite(v); })) {
        throw DomainError("sample cloud contains non-finite entries");
    }
}

GaussianDist::GaussianDist(Eigen::VectorXd mean, Eigen::MatrixXd cov)
    : mean_(std::move(mean)), cov_(std::move(cov)) {
    const auto d = mean_.size();
    if (d < 1 || cov_.rows() != d || cov_.cols() != d) {
        throw DimensionError("gaussian: mean/covariance shape mismatch");
    }
    if (!mean_.allFinite() || !cov_.allFinite()) throw DomainError("gaussian: non-finite parameters");
    if ((cov_ - cov_.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
        throw NumericalError("gaussian: covariance is not symmetric");
    }
    const double trace = cov_.trace();
    const double min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cov_, Eigen::EigenvaluesOnly)
                               .eigenvalues()
                               .minCoeff();
    if (min_eig < -1e-8 * std::abs(trace) / static_cast<double>(d)) {
        throw NumericalError("gaussian: covariance is not positive semidefinite (min eigenvalue " +
                             std::to_string(min_eig) + ")");
    }
}

void fta_into(const HierarchySpec& spec, std::span<const double> b, std::span<double> y) {
    const auto n_u = static_cast<std::size_t>(spec.n_u());
    spec.ftc().evaluate_into(b, y.first(n_u));
    std::copy(b.begin(), b.end(), y.begin() + static_cast<std::ptrdiff_t>(n_u));
}

Eigen::VectorXd fta(const HierarchySpec& spec, const Eigen::VectorXd& b) {
    if (b.size() != spec.n_b()) throw DimensionError("fta: free vector has wrong length");
    if (!b.allFinite()) throw DomainError("fta: non-finite free vector");
    Eigen::VectorXd y(spec.n());
    fta_into(spec, {b.data(), static_cast<std::size_t>(b.size())}, {y.data(), static_cast<std::size_t>(y.size())});
    return y;
}

double coherence_residual(const HierarchySpec& spec, std::span<const double> y) {
    const auto n_u = static_cast<std::size_t>(spec.n_u());
    Eigen::VectorXd fu(spec.n_u());
    spec.ftc().evaluate_into(y.subspan(n_u), {fu.data(), n_u});
    double resid = 0.0;
    double scale = 1.0;
    for (std::size_t k = 0; k < n_u; ++k) resid = std::max(resid, std::abs(y[k] - fu[k]));
    for (double v : y) scale = std::max(scale, std::abs(v));
    return resid / scale;
}

CoherenceReport coherence_check(const HierarchySpec& spec, const SampleCloud& cloud, double tol) {
    if (!(tol > 0.0)) throw ConfigError("coherence_check: tolerance must be positive");
    check_columns(spec, cloud.n(), "coherence_check");
    CoherenceReport report;
    report.tolerance = tol;
    for (int i = 0; i < cloud.size(); ++i) {
        double r;
        try {
            r = coherence_residual(spec, cloud.row(i));
        } catch (const DomainError&) {
            r = std::numeric_limits<double>::infinity();
        }
        report.max_residual = std::max(report.max_residual, r);
        if (!(r <= tol)) ++report.violations;
    }
    report.frac_coherent =
        static_cast<double>(cloud.size() - report.violations) / static_cast<double>(cloud.size());
    return report;
}

SampleCloud fta_cloud(const HierarchySpec& spec, const RowMatrix& free_samples, int threads) {
    if (free_samples.cols() != spec.n_b()) throw DimensionError("fta_cloud: free block has wrong width");
    RowMatrix out(free_samples.rows(), spec.n());
    const auto n_b = static_cast<std::size_t>(spec.n_b());
    const auto n = static_cast<std::size_t>(spec.n());
    parallel_for(static_cast<std::size_t>(free_samples.rows()), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            std::span<const double> b(free_samples.data() + i * n_b, n_b);
            try {
                fta_into(spec, b, {out.data() + i * n, n});
            } catch (const DomainError& e) {
                throw DomainError("row " + std::to_string(i) + ": " + e.what());
            }
        }
    });
    return SampleCloud(std::move(out), spec.n_u());
}

SampleCloud pbu_reconcile(const HierarchySpec& spec, const SampleCloud& base_cloud, int threads) {
    check_columns(spec, base_cloud.n(), "pbu_reconcile");
    RowMatrix free = base_cloud.samples().rightCols(spec.n_b());
    return fta_cloud(spec, free, threads);
}

}  // namespace nlrecon
