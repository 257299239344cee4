#pragma once

#include "nlrecon/core.hpp"
#include "nlrecon/weights.hpp"

#include <Eigen/Dense>

#include <vector>

namespace nlrecon {

struct ProjectionConfig {
    int max_iter = 100;
    double grad_tol = 1e-10;  ///< on ||J' W^{-1} (f(b) - y)||_2, scaled by max(1, g)
    double step_tol = 1e-12;
    double damping = 1e-3;    ///< initial Levenberg parameter
    double line_search_shrink = 0.5;
    int max_backtracks = 25;

    void validate() const;
};

/// Outcome of projecting one point.
struct PointProjection {
    Eigen::VectorXd b_star;
    int iterations = 0;
    bool converged = false;
    bool fell_back = false;  ///< b_star is the free block of the query (PBU)
    double objective = 0.0;  ///< g(b_star) = ||y - f(b_star)||_W^2
    double grad_norm = 0.0;
};

struct ProjectionDiagnostics {
    std::vector<int> iterations;
    std::vector<char> converged;
    std::vector<double> objective;
    std::vector<double> grad_norm;
    int fallback_count = 0;
};

struct ProjectedCloud {
    SampleCloud cloud;
    ProjectionDiagnostics diagnostics;
};

/**
 * Nearest point on M in the W-metric: minimizes
 *   g(b) = (y - f(b))' W^{-1} (y - f(b))
 * by Levenberg-damped Gauss-Newton with backtracking, started from the free
 * block of `y_hat`. Accepted steps never increase g. If the gradient test is
 * not met within max_iter the result falls back to the warm start.
 *
 * With several local minima (e.g. ripples) the minimizer of the warm-start
 * basin is returned.
 */
PointProjection project_point(const HierarchySpec& spec, const WeightSpec& W, const Eigen::VectorXd& y_hat,
                              const ProjectionConfig& cfg = {});

/// Row-wise project_point, reconciled rows = fta(b_star). Row order is
/// preserved and the result does not depend on `threads`. Throws
/// NumericalError when more than half of the rows fall back.
ProjectedCloud project_cloud(const HierarchySpec& spec, const WeightSpec& W, const SampleCloud& base_cloud,
                             const ProjectionConfig& cfg = {}, int threads = 1);

}  // namespace nlrecon
