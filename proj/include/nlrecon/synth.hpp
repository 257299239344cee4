#pragma once

#include "nlrecon/core.hpp"
#include "nlrecon/covariance.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace nlrecon {

/// Independent AR(1) free series B_k,t = phi_k B_k,t-1 + eps_k,t.
struct Ar1Config {
    std::vector<double> phi{0.9, 0.9};
    std::vector<double> noise_sd{0.1, 0.1};
    int T = 1000;
    int burn_in = 100;
    std::uint64_t seed = 0;

    void validate(int n_b) const;
};

/// T x n dataset [U, B] with U_t = f_u(B_t). The free series start at zero
/// and the first burn_in steps are discarded.
RowMatrix generate(const Ar1Config& cfg, const HierarchySpec& spec);

/// Per-series lag-1 least-squares predictors y_{t+1} = a + c y_t.
struct ForecastFit {
    Eigen::VectorXd intercept;
    Eigen::VectorXd slope;
    ResidualMatrix residuals;  ///< in-sample one-step errors, SampleCloud column order
    int n_train = 0;

    Eigen::VectorXd predict(const Eigen::VectorXd& previous) const;
};

/// Fits every column independently, so the constrained series get their
/// own predictor and base forecasts are generally incoherent.
ForecastFit fit_lag1(const RowMatrix& train);

/// point + residual row indices[s] for each sample s; one index per sample is
/// shared across all series.
SampleCloud bootstrap_cloud(const Eigen::VectorXd& point, const ResidualMatrix& residuals,
                            std::span<const std::size_t> indices, int n_u);

/// Uniform row indices in [0, rows) drawn from the counter stream `seed`.
std::vector<std::size_t> bootstrap_indices(std::uint64_t seed, int M, int rows);

struct WindowForecast {
    int time_index = 0;  ///< row of the dataset being forecast
    Eigen::VectorXd point;
    Eigen::VectorXd truth;
    SampleCloud cloud;
};

struct ForecastSet {
    ForecastFit fit;
    std::vector<WindowForecast> windows;
};

/**
 * Chronological split at floor(split * T): predictors are fitted on the
 * training block and every test step gets a one-step-ahead joint residual
 * bootstrap cloud of M samples. `n_test_steps` keeps an evenly spaced
 * subset of the test steps.
 */
ForecastSet fit_and_forecast(const RowMatrix& dataset, int n_u, double split, int M, std::uint64_t seed,
                             std::optional<int> n_test_steps = std::nullopt);

}  // namespace nlrecon
