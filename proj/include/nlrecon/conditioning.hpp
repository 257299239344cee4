#pragma once

#include "nlrecon/core.hpp"
#include "nlrecon/covariance.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>

namespace nlrecon {

/// Scaled unscented-transform parameters. kappa defaults to 3 - n_b.
struct UTParams {
    double alpha = 0.1;
    double beta = 2.0;
    std::optional<double> kappa;

    double kappa_for(int n_b) const { return kappa.value_or(3.0 - n_b); }
    /// lambda = alpha^2 (n_b + kappa) - n_b
    double lambda(int n_b) const;
    /// Throws ConfigError unless alpha > 0 and n_b + lambda > 0.
    void validate(int n_b) const;
};

/// 2 n_b + 1 sigma points (one per row) with their mean/covariance weights.
struct SigmaSet {
    Eigen::MatrixXd points;
    Eigen::VectorXd w_mean;
    Eigen::VectorXd w_cov;
};

/**
 * chi_0 = mean, chi_{i} / chi_{n_b+i} = mean +/- sqrt(n_b + lambda) L_i with
 * L the lower Cholesky factor of the covariance;
 * W_m^0 = lambda / (n_b + lambda), W_c^0 = W_m^0 + 1 - alpha^2 + beta,
 * W_m^i = W_c^i = 1 / (2 (n_b + lambda)).
 *
 * A failed Cholesky is retried once with 1e-10 * trace / n_b added to the
 * diagonal, then NumericalError.
 */
SigmaSet sigma_points(const GaussianDist& prior, const UTParams& params = {});

struct UKFResult {
    GaussianDist posterior;  ///< reconciled free-series distribution
    Eigen::VectorXd u_pred;  ///< transformed mean u^-
    Eigen::MatrixXd S_u;     ///< innovation covariance
    Eigen::MatrixXd P_bu;    ///< free/constrained cross-covariance
    Eigen::MatrixXd K;       ///< gain, n_b x n_u
    bool psd_repaired = false;  ///< posterior eigenvalues were floored at zero
};

/**
 * Conditions N(b_hat, Sigma_B) on the observation u_hat = f_u(B) + eps,
 * eps ~ N(0, sigma_u), with moments propagated by the unscented transform:
 *
 *   b~ = b_hat + K (u_hat - u^-),  Sigma~ = Sigma_B - K S_u K',  K S_u = P_bu.
 */
UKFResult ukf_reconcile(const HierarchySpec& spec, const GaussianDist& prior, const Eigen::VectorXd& u_hat,
                        const Eigen::MatrixXd& sigma_u, const UTParams& params = {});

/**
 * M draws b^(i) ~ N(b~, Sigma~) mapped through fta. Row i uses the counter
 * stream (seed, i), so the cloud is identical for every worker count.
 */
SampleCloud sample_posterior(const UKFResult& result, const HierarchySpec& spec, int M, std::uint64_t seed,
                             int threads = 1);

/// Mean = free-block column means of the base cloud; covariance = free block
/// of shrink_cov(residuals). Residuals carry all n series.
GaussianDist gaussian_prior_from(const SampleCloud& base_cloud, const ResidualMatrix& residuals);
/// Mean passed through unchanged.
GaussianDist gaussian_prior_from(const Eigen::VectorXd& free_mean, const ResidualMatrix& residuals);

/// Square root F with F F' = cov: lower Cholesky factor, or V sqrt(max(D, 0))
/// when the covariance is only semidefinite.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& cov);

}  // namespace nlrecon
