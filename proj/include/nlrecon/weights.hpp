#pragma once

#include "nlrecon/covariance.hpp"

#include <Eigen/Dense>

#include <string>
#include <string_view>

namespace nlrecon {

enum class WeightKind { OLS, WLS, FULL };

std::string_view to_string(WeightKind kind);
WeightKind parse_weight_kind(std::string_view text);

/**
 * Projection metric ||x||_W = sqrt(x' W^{-1} x).
 *
 * Keeps the lower Cholesky factor G of W^{-1} (G G' = W^{-1}) so that the
 * norm and the whitened residual G' x are cheap to evaluate.
 */
class WeightSpec {
public:
    WeightSpec(WeightKind kind, Eigen::MatrixXd W);

    WeightKind kind() const { return kind_; }
    const Eigen::MatrixXd& W() const { return W_; }
    const Eigen::MatrixXd& W_inv_chol() const { return W_inv_chol_; }
    int dim() const { return static_cast<int>(W_.rows()); }

    /// Factorized form ||G' x||_2.
    double norm(const Eigen::VectorXd& x) const;
    /// Direct form sqrt(x' W^{-1} x) via a linear solve against W.
    double norm_direct(const Eigen::VectorXd& x) const;

private:
    WeightKind kind_;
    Eigen::MatrixXd W_;
    Eigen::MatrixXd W_inv_chol_;
};

/// OLS -> identity, WLS -> diagonal sample variances, FULL -> shrink_cov.
WeightSpec weight_matrix(WeightKind kind, const ResidualMatrix& r);
WeightSpec identity_weights(int n);

}  // namespace nlrecon
