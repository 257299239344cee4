#pragma once

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nlrecon {

enum class JacobianMode { Analytic, FiniteDifference };

/**
 * Free-to-constrained map f_u : R^{n_b} -> R^{n_u}.
 *
 * A ConstraintFn is immutable after construction; evaluation is reentrant.
 * Kernels write into caller-provided storage so that hot loops (projection,
 * sigma-point propagation) do not allocate.
 */
class ConstraintFn {
public:
    using ValueKernel = std::function<void(std::span<const double> b, std::span<double> u)>;
    using JacobianKernel =
        std::function<void(std::span<const double> b, Eigen::Ref<Eigen::MatrixXd> jac)>;

    /// Without a Jacobian kernel the function runs in FiniteDifference mode.
    ConstraintFn(std::string name, int arity_in, int arity_out, std::vector<double> params,
                 ValueKernel value, JacobianKernel jacobian = nullptr);

    const std::string& name() const { return name_; }
    int arity_in() const { return arity_in_; }
    int arity_out() const { return arity_out_; }
    const std::vector<double>& params() const { return params_; }
    JacobianMode jacobian_mode() const { return jacobian_ ? JacobianMode::Analytic : JacobianMode::FiniteDifference; }

    /// Writes f_u(b) into `u`. Throws DomainError on a domain violation or a
    /// non-finite result.
    void evaluate_into(std::span<const double> b, std::span<double> u) const;
    Eigen::VectorXd operator()(const Eigen::VectorXd& b) const;

    /// n_u x n_b Jacobian; analytic when available, central differences otherwise.
    void jacobian_into(std::span<const double> b, Eigen::Ref<Eigen::MatrixXd> jac) const;
    Eigen::MatrixXd jacobian(const Eigen::VectorXd& b) const;

    /// Central differences with step 1e-6 * max(1, |b_k|) per coordinate,
    /// regardless of the configured mode.
    Eigen::MatrixXd finite_difference_jacobian(const Eigen::VectorXd& b) const;

private:
    std::string name_;
    int arity_in_;
    int arity_out_;
    std::vector<double> params_;
    ValueKernel value_;
    JacobianKernel jacobian_;
};

/// Names accepted by builtin().
const std::vector<std::string>& builtin_names();

/**
 * Registered constraint functions.
 *
 *   paraboloid   u = b1^2 + b2^2                      (n_b = 2)
 *   saddle       u = b1^2 - b2^2                      (n_b = 2)
 *   ripples      u = sin b1 + cos b2                  (n_b = 2)
 *   ratio        params = flattened 0-based pairs (i, j): one output b_i / b_j
 *                per pair; default {0, 1}
 *   product      same pair convention, outputs b_i * b_j
 *   sum          params = {n_b}; u = sum_k b_k; default n_b = 2
 *   ratio_block  params = {K} or {K, mode}
 *                mode 0 (default): b = [N_1..N_K, D_1..D_K] counts,
 *                  u = [sum N, sum D, sum N / sum D, N_1/D_1, .., N_K/D_K]
 *                mode 1: b = [B_1..B_K], u = [T, B_1/T, .., B_K/T], T = sum B
 *
 * Throws ConfigError for unknown names or parameters inconsistent with arity.
 */
ConstraintFn builtin(std::string_view name, const std::vector<double>& params = {});

/// Linear map u = A b with constant analytic Jacobian A.
ConstraintFn linear_map(const Eigen::MatrixXd& A);

/// Wraps a user-supplied black-box function; its Jacobian is computed by
/// central differences.
ConstraintFn from_callable(std::string name, int arity_in, int arity_out,
                           ConstraintFn::ValueKernel value);

}  // namespace nlrecon
