#include "nlrecon/covariance.hpp"

#include "nlrecon/errors.hpp"
#include "nlrecon/weights.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace nlrecon {

ResidualMatrix::ResidualMatrix(Eigen::MatrixXd residuals) : residuals_(std::move(residuals)) {
    if (residuals_.rows() < 2) throw DimensionError("residual matrix needs at least 2 rows");
    if (residuals_.cols() < 1) throw DimensionError("residual matrix has no columns");
    if (!residuals_.allFinite()) throw DomainError("residual matrix contains non-finite entries");
}

Eigen::MatrixXd sample_cov(const ResidualMatrix& r) {
    const Eigen::MatrixXd centered = r.values().rowwise() - r.values().colwise().mean();
    Eigen::MatrixXd S = (centered.transpose() * centered) / static_cast<double>(r.rows() - 1);
    return 0.5 * (S + S.transpose());
}

ShrinkageEstimate shrink_cov(const ResidualMatrix& r) {
    const Eigen::MatrixXd S = sample_cov(r);
    const Eigen::Index p = S.rows();
    const auto T = static_cast<double>(r.rows());
    for (Eigen::Index j = 0; j < p; ++j) {
        if (!(S(j, j) > 0.0)) {
            throw DomainError("residual column " + std::to_string(j) + " has zero variance");
        }
    }

    double lambda = 1.0;
    if (r.rows() >= 3 && p > 1) {
        // Standardized residuals x_ti; w_tij = x_ti x_tj.
        const Eigen::ArrayXd sd = S.diagonal().array().sqrt();
        const Eigen::MatrixXd x =
            ((r.values().rowwise() - r.values().colwise().mean()).array().rowwise() / sd.transpose()).matrix();
        double sum_var = 0.0;
        double sum_sq = 0.0;
        for (Eigen::Index i = 0; i < p; ++i) {
            for (Eigen::Index j = i + 1; j < p; ++j) {
                const Eigen::ArrayXd w = x.col(i).array() * x.col(j).array();
                const double w_bar = w.mean();
                const double r_ij = T / (T - 1.0) * w_bar;
                const double var_ij = T / ((T - 1.0) * (T - 1.0) * (T - 1.0)) * (w - w_bar).square().sum();
                sum_var += var_ij;
                sum_sq += r_ij * r_ij;
            }
        }
        if (sum_sq > 0.0) lambda = std::clamp(sum_var / sum_sq, 0.0, 1.0);
    }

    ShrinkageEstimate out;
    out.lambda = lambda;
    out.cov = (1.0 - lambda) * S;
    out.cov.diagonal() = S.diagonal();
    return out;
}


std::string_view to_string(WeightKind kind) {
    switch (kind) {
        case WeightKind::OLS: return "ols";
        case WeightKind::WLS: return "wls";
        case WeightKind::FULL: return "full";
    }
    return "?";
}

WeightKind parse_weight_kind(std::string_view text) {
    if (text == "ols") return WeightKind::OLS;
    if (text == "wls") return WeightKind::WLS;
    if (text == "full") return WeightKind::FULL;
    throw ConfigError("unknown weight kind '" + std::string(text) + "' (expected ols|wls|full)");
}

WeightSpec::WeightSpec(WeightKind kind, Eigen::MatrixXd W) : kind_(kind), W_(std::move(W)) {
    if (W_.rows() < 1 || W_.rows() != W_.cols()) throw DimensionError("weight matrix must be square");
    if ((W_ - W_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * W_.cwiseAbs().maxCoeff()) {
        throw NumericalError("weight matrix is not symmetric");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(W_);
    if (llt.info() != Eigen::Success) throw NumericalError("weight matrix is not positive definite");
    Eigen::MatrixXd W_inv = llt.solve(Eigen::MatrixXd::Identity(W_.rows(), W_.cols()));
    W_inv = 0.5 * (W_inv + W_inv.transpose());
    Eigen::LLT<Eigen::MatrixXd> inv_llt(W_inv);
    if (inv_llt.info() != Eigen::Success) throw NumericalError("inverse weight matrix is not positive definite");
    W_inv_chol_ = inv_llt.matrixL();
}

double WeightSpec::norm(const Eigen::VectorXd& x) const {
    return (W_inv_chol_.transpose() * x).norm();
}

double WeightSpec::norm_direct(const Eigen::VectorXd& x) const {
    return std::sqrt(x.dot(W_.llt().solve(x)));
}

WeightSpec identity_weights(int n) {
    return WeightSpec(WeightKind::OLS, Eigen::MatrixXd::Identity(n, n));
}

WeightSpec weight_matrix(WeightKind kind, const ResidualMatrix& r) {
    switch (kind) {
        case WeightKind::OLS:
            return identity_weights(r.cols());
        case WeightKind::WLS: {
            const Eigen::VectorXd var = sample_cov(r).diagonal();
            for (Eigen::Index j = 0; j < var.size(); ++j) {
                if (!(var[j] > 0.0)) {
                    throw DomainError("residual column " + std::to_string(j) + " has zero variance");
                }
            }
            return WeightSpec(kind, var.asDiagonal());
        }
        case WeightKind::FULL:
            return WeightSpec(kind, shrink_cov(r).cov);
    }
    throw ConfigError("unknown weight kind");
}

}  // namespace nlrecon
