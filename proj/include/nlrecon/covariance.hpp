#pragma once

#include <Eigen/Dense>

namespace nlrecon {

/// T_in x n in-sample one-step forecast errors, columns in SampleCloud order.
class ResidualMatrix {
public:
    explicit ResidualMatrix(Eigen::MatrixXd residuals);

    int rows() const { return static_cast<int>(residuals_.rows()); }
    int cols() const { return static_cast<int>(residuals_.cols()); }
    const Eigen::MatrixXd& values() const { return residuals_; }

private:
    Eigen::MatrixXd residuals_;
};

/// Unbiased sample covariance (divisor T_in - 1).
Eigen::MatrixXd sample_cov(const ResidualMatrix& r);

struct ShrinkageEstimate {
    Eigen::MatrixXd cov;
    double lambda = 1.0;  ///< correlation shrinkage intensity in [0, 1]
};

/**
 * Schafer-Strimmer shrinkage of the correlation matrix toward the identity,
 * variances untouched:
 *
 *   cov = (1 - lambda) S + lambda diag(S),
 *   lambda = sum_{i != j} Var(r_ij) / sum_{i != j} r_ij^2, clipped to [0, 1].
 *
 * lambda = 1 when T_in < 3. Throws DomainError naming the first
 * zero-variance column.
 */
ShrinkageEstimate shrink_cov(const ResidualMatrix& r);

}  // namespace nlrecon
