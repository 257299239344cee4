#pragma once

#include "nlrecon/core.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>

namespace nlrecon {

/**
 * Sample energy score
 *   ES = 1/M sum_j ||x_j - y|| - 1/(2 M^2) sum_j sum_k ||x_j - x_k||
 * with self-pairs included in the double sum. Requires M >= 2.
 */
double energy_score(const SampleCloud& cloud, const Eigen::VectorXd& y);

/// Sample CRPS, the one-dimensional form of energy_score. Requires M >= 2.
double crps(std::span<const double> samples, double y);

struct ScoreReport {
    double es = 0.0;
    Eigen::VectorXd crps_per_series;
    std::optional<double> rel_es;       ///< set once a baseline is attached
    std::optional<double> rel_crps_gm;
    double runtime_seconds = 0.0;
};

/// ES and per-series CRPS of one forecast cloud against the realized vector.
ScoreReport score_cloud(const SampleCloud& cloud, const Eigen::VectorXd& y);

struct RelativeScores {
    double rel_es = 1.0;
    double rel_crps_gm = 1.0;
};

/**
 * Relative scores over T windows: per-series CRPS is averaged over windows,
 * divided by the baseline's average, and combined by geometric mean over
 * series; RelES is the ratio of window-mean energy scores.
 */
RelativeScores aggregate(std::span<const ScoreReport> method, std::span<const ScoreReport> baseline);

}  // namespace nlrecon
