#pragma once

#include "nlrecon/constraints.hpp"

#include <Eigen/Dense>

#include <span>

namespace nlrecon {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Default coherence tolerance, relative to max(1, ||y||_inf) of each sample.
inline constexpr double kDefaultCoherenceTol = 1e-8;

/// Free/constrained split plus the free-to-constrained map. Defines the
/// coherent manifold M = { [f_u(b); b] }.
class HierarchySpec {
public:
    explicit HierarchySpec(ConstraintFn ftc);

    int n_b() const { return ftc_.arity_in(); }
    int n_u() const { return ftc_.arity_out(); }
    int n() const { return n_b() + n_u(); }
    const ConstraintFn& ftc() const { return ftc_; }

private:
    ConstraintFn ftc_;
};

/**
 * M x n matrix of forecast samples, one sample per row, columns ordered
 * [u_1..u_{n_u}, b_1..b_{n_b}]. Stored row-major so each sample is a
 * contiguous span. Entries are finite.
 *
 * Scoring needs M >= 2; a single-row cloud is accepted for reconciliation.
 */
class SampleCloud {
public:
    SampleCloud(RowMatrix samples, int n_u);

    int size() const { return static_cast<int>(samples_.rows()); }
    int n() const { return static_cast<int>(samples_.cols()); }
    int n_u() const { return n_u_; }
    int n_b() const { return n() - n_u_; }

    const RowMatrix& samples() const { return samples_; }
    std::span<const double> row(int i) const {
        return {samples_.data() + static_cast<std::ptrdiff_t>(i) * n(), static_cast<std::size_t>(n())};
    }
    Eigen::MatrixXd constrained_block() const { return samples_.leftCols(n_u_); }
    Eigen::MatrixXd free_block() const { return samples_.rightCols(n_b()); }
    Eigen::VectorXd column_means() const { return samples_.colwise().mean().transpose(); }

    bool operator==(const SampleCloud& other) const {
        return n_u_ == other.n_u_ && samples_.rows() == other.samples_.rows() &&
               samples_.cols() == other.samples_.cols() && samples_ == other.samples_;
    }

private:
    RowMatrix samples_;
    int n_u_;
};

/// Multivariate normal N(mean, cov) with symmetric PSD covariance.
class GaussianDist {
public:
    GaussianDist(Eigen::VectorXd mean, Eigen::MatrixXd cov);

    int dim() const { return static_cast<int>(mean_.size()); }
    const Eigen::VectorXd& mean() const { return mean_; }
    const Eigen::MatrixXd& cov() const { return cov_; }

private:
    Eigen::VectorXd mean_;
    Eigen::MatrixXd cov_;
};

struct CoherenceReport {
    double max_residual = 0.0;   ///< max_i ||u_i - f_u(b_i)||_inf / max(1, ||y_i||_inf)
    double frac_coherent = 1.0;  ///< share of samples with residual <= tolerance
    double tolerance = kDefaultCoherenceTol;
    int violations = 0;

    bool coherent() const { return violations == 0; }
};

/// Free-to-all map f(b) = [f_u(b); b].
Eigen::VectorXd fta(const HierarchySpec& spec, const Eigen::VectorXd& b);
void fta_into(const HierarchySpec& spec, std::span<const double> b, std::span<double> y);

/// Scaled coherence residual of one sample y = [u; b].
double coherence_residual(const HierarchySpec& spec, std::span<const double> y);

CoherenceReport coherence_check(const HierarchySpec& spec, const SampleCloud& cloud,
                                double tol = kDefaultCoherenceTol);

/// Probabilistic bottom-up: keep the free block and recompute the
/// constrained block with f_u. DomainError messages carry the row index.
SampleCloud pbu_reconcile(const HierarchySpec& spec, const SampleCloud& base_cloud, int threads = 1);

/// Applies fta to every row of an M x n_b matrix of free samples.
SampleCloud fta_cloud(const HierarchySpec& spec, const RowMatrix& free_samples, int threads = 1);

}  // namespace nlrecon
