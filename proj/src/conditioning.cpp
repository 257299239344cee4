#include "nlrecon/conditioning.hpp"

#include "nlrecon/errors.hpp"
#include "nlrecon/parallel.hpp"
#include "nlrecon/rng.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>

namespace nlrecon {

namespace {

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

Eigen::LLT<Eigen::MatrixXd> llt_with_jitter(const Eigen::MatrixXd& m, const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() == Eigen::Success) return llt;
    const double jitter = 1e-10 * std::abs(m.trace()) / static_cast<double>(m.rows());
    Eigen::MatrixXd bumped = m;
    bumped.diagonal().array() += jitter;
    llt.compute(bumped);
    if (llt.info() != Eigen::Success) {
        throw NumericalError(std::string(what) + " is not positive definite");
    }
    return llt;
}

}  // namespace

double UTParams::lambda(int n_b) const { return alpha * alpha * (n_b + kappa_for(n_b)) - n_b; }

void UTParams::validate(int n_b) const {
    if (!(alpha > 0.0)) throw ConfigError("UT alpha must be positive");
    if (!(n_b + lambda(n_b) > 0.0)) {
        throw ConfigError("UT parameters give n_b + lambda <= 0 (kappa too small)");
    }
}

SigmaSet sigma_points(const GaussianDist& prior, const UTParams& params) {
    const int d = prior.dim();
    params.validate(d);
    const double lambda = params.lambda(d);
    const double spread = std::sqrt(d + lambda);
    const Eigen::MatrixXd L = llt_with_jitter(prior.cov(), "prior covariance").matrixL();

    SigmaSet set;
    set.points.resize(2 * d + 1, d);
    set.points.row(0) = prior.mean().transpose();
    for (int i = 0; i < d; ++i) {
        set.points.row(1 + i) = (prior.mean() + spread * L.col(i)).transpose();
        set.points.row(1 + d + i) = (prior.mean() - spread * L.col(i)).transpose();
    }
    set.w_mean = Eigen::VectorXd::Constant(2 * d + 1, 1.0 / (2.0 * (d + lambda)));
    set.w_cov = set.w_mean;
    set.w_mean[0] = lambda / (d + lambda);
    set.w_cov[0] = set.w_mean[0] + (1.0 - params.alpha * params.alpha + params.beta);
    return set;
}

UKFResult ukf_reconcile(const HierarchySpec& spec, const GaussianDist& prior, const Eigen::VectorXd& u_hat,
                        const Eigen::MatrixXd& sigma_u, const UTParams& params) {
    const int n_b = spec.n_b();
    const int n_u = spec.n_u();
    if (prior.dim() != n_b) throw DimensionError("ukf: prior dimension differs from n_b");
    if (u_hat.size() != n_u || sigma_u.rows() != n_u || sigma_u.cols() != n_u) {
        throw DimensionError("ukf: observation shape differs from n_u");
    }
    if (!u_hat.allFinite() || !sigma_u.allFinite()) throw DomainError("ukf: non-finite observation");

    const SigmaSet set = sigma_points(prior, params);
    const int count = static_cast<int>(set.points.rows());

    Eigen::MatrixXd z(count, n_u);
    for (int j = 0; j < count; ++j) {
        const Eigen::VectorXd chi = set.points.row(j).transpose();
        try {
            z.row(j) = spec.ftc()(chi).transpose();
        } catch (const DomainError& e) {
            throw DomainError("ukf: sigma point " + std::to_string(j) + ": " + e.what());
        }
    }

    const Eigen::VectorXd u_pred = z.transpose() * set.w_mean;
    const Eigen::MatrixXd dx = set.points.rowwise() - prior.mean().transpose();
    const Eigen::MatrixXd dz = z.rowwise() - u_pred.transpose();
    const Eigen::MatrixXd P_bu = dx.transpose() * set.w_cov.asDiagonal() * dz;
    const Eigen::MatrixXd S_u = symmetrize(sigma_u + dz.transpose() * set.w_cov.asDiagonal() * dz);

    // K S_u = P_bu  <=>  S_u K' = P_bu'
    const auto llt = llt_with_jitter(S_u, "innovation covariance");
    const Eigen::MatrixXd K = llt.solve(P_bu.transpose()).transpose();

    const Eigen::VectorXd b_post = prior.mean() + K * (u_hat - u_pred);
    Eigen::MatrixXd cov_post = symmetrize(prior.cov() - K * S_u * K.transpose());

    bool repaired = false;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov_post);
    const double floor = -1e-8 * std::abs(cov_post.trace()) / n_b;
    if (eig.eigenvalues().minCoeff() < floor) {
        cov_post = symmetrize(eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).asDiagonal() *
                              eig.eigenvectors().transpose());
        repaired = true;
    }

    return UKFResult{GaussianDist(b_post, cov_post), u_pred, S_u, P_bu, K, repaired};
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& cov) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(symmetrize(cov));
    const double floor = -1e-8 * std::abs(cov.trace()) / static_cast<double>(cov.rows());
    if (eig.eigenvalues().minCoeff() < floor) throw NumericalError("covariance is not positive semidefinite");
    return eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

SampleCloud sample_posterior(const UKFResult& result, const HierarchySpec& spec, int M, std::uint64_t seed,
                             int threads) {
    if (M < 2) throw ConfigError("sample_posterior: need at least 2 samples");
    const int n_b = spec.n_b();
    if (result.posterior.dim() != n_b) throw DimensionError("sample_posterior: posterior dimension mismatch");
    const Eigen::MatrixXd F = psd_sqrt(result.posterior.cov());
    const Eigen::VectorXd& mean = result.posterior.mean();
    const rng::CounterRng gen(seed);

    const int n = spec.n();
    const auto n_u = static_cast<std::size_t>(spec.n_u());
    RowMatrix out(M, n);
    parallel_for(static_cast<std::size_t>(M), threads, [&](std::size_t begin, std::size_t end) {
        Eigen::VectorXd z(n_b);
        for (std::size_t i = begin; i < end; ++i) {
            gen.normals(i, {z.data(), static_cast<std::size_t>(n_b)});
            double* row = out.data() + i * static_cast<std::size_t>(n);
            double* b = row + n_u;
            for (int r = 0; r < n_b; ++r) {
                double v = mean[r];
                for (int c = 0; c < n_b; ++c) v += F(r, c) * z[c];
                b[r] = v;
            }
            try {
                spec.ftc().evaluate_into({b, static_cast<std::size_t>(n_b)}, {row, n_u});
            } catch (const DomainError& e) {
                throw DomainError("posterior sample " + std::to_string(i) + ": " + e.what());
            }
        }
    });
    return SampleCloud(std::move(out), spec.n_u());
}

GaussianDist gaussian_prior_from(const Eigen::VectorXd& free_mean, const ResidualMatrix& residuals) {
    const auto n_b = free_mean.size();
    if (residuals.cols() <= n_b) {
        throw DimensionError("gaussian prior: residuals must hold constrained and free columns");
    }
    const Eigen::MatrixXd cov = shrink_cov(residuals).cov;
    return GaussianDist(free_mean, cov.bottomRightCorner(n_b, n_b));
}

GaussianDist gaussian_prior_from(const SampleCloud& base_cloud, const ResidualMatrix& residuals) {
    if (residuals.cols() != base_cloud.n()) throw DimensionError("gaussian prior: residual width mismatch");
    const Eigen::VectorXd mean = base_cloud.column_means().tail(base_cloud.n_b());
    return gaussian_prior_from(mean, residuals);
}

}  // namespace nlrecon
