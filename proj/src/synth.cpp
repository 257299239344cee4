#include "nlrecon/synth.hpp"

#include "nlrecon/errors.hpp"
#include "nlrecon/rng.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace nlrecon {

void Ar1Config::validate(int n_b) const {
    if (static_cast<int>(phi.size()) != n_b || static_cast<int>(noise_sd.size()) != n_b) {
        throw ConfigError("AR(1) config needs one phi and one noise_sd per free series (" + std::to_string(n_b) + ")");
    }
    for (double p : phi) {
        if (!(std::abs(p) < 1.0)) throw ConfigError("AR(1) coefficients must satisfy |phi| < 1");
    }
    for (double s : noise_sd) {
        if (!(s >= 0.0)) throw ConfigError("AR(1) noise_sd must be non-negative");
    }
    if (T < 10) throw ConfigError("AR(1) series length must be at least 10");
    if (burn_in < 0) throw ConfigError("AR(1) burn-in must be non-negative");
}

RowMatrix generate(const Ar1Config& cfg, const HierarchySpec& spec) {
    const int n_b = spec.n_b();
    cfg.validate(n_b);
    const rng::CounterRng gen(rng::derive(cfg.seed, "ar1"));
    RowMatrix data(cfg.T, spec.n());
    Eigen::VectorXd state = Eigen::VectorXd::Zero(n_b);
    Eigen::VectorXd eps(n_b);
    const int steps = cfg.T + cfg.burn_in;
    for (int t = 0; t < steps; ++t) {
        gen.normals(static_cast<std::uint64_t>(t), {eps.data(), static_cast<std::size_t>(n_b)});
        for (int k = 0; k < n_b; ++k) state[k] = cfg.phi[k] * state[k] + cfg.noise_sd[k] * eps[k];
        if (t >= cfg.burn_in) {
            const int row = t - cfg.burn_in;
            fta_into(spec, {state.data(), static_cast<std::size_t>(n_b)},
                     {data.data() + static_cast<std::ptrdiff_t>(row) * spec.n(), static_cast<std::size_t>(spec.n())});
        }
    }
    return data;
}

Eigen::VectorXd ForecastFit::predict(const Eigen::VectorXd& previous) const {
    return intercept + slope.cwiseProduct(previous);
}

ForecastFit fit_lag1(const RowMatrix& train) {
    const auto T = train.rows();
    if (T < 3) throw DimensionError("training block needs at least 3 observations");
    const auto n = train.cols();
    const Eigen::MatrixXd x = train.topRows(T - 1);
    const Eigen::MatrixXd y = train.bottomRows(T - 1);

    Eigen::VectorXd a(n);
    Eigen::VectorXd c(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double mx = x.col(j).mean();
        const double my = y.col(j).mean();
        const double sxx = (x.col(j).array() - mx).square().sum();
        const double sxy = ((x.col(j).array() - mx) * (y.col(j).array() - my)).sum();
        c[j] = sxx > 0.0 ? sxy / sxx : 0.0;
        a[j] = my - c[j] * mx;
    }
    Eigen::MatrixXd resid = y - ((x.array().rowwise() * c.transpose().array()).rowwise() + a.transpose().array()).matrix();
    return ForecastFit{a, c, ResidualMatrix(std::move(resid)), static_cast<int>(T)};
}

SampleCloud bootstrap_cloud(const Eigen::VectorXd& point, const ResidualMatrix& residuals,
                            std::span<const std::size_t> indices, int n_u) {
    if (point.size() != residuals.cols()) throw DimensionError("bootstrap: point and residual widths differ");
    RowMatrix cloud(static_cast<Eigen::Index>(indices.size()), point.size());
    for (std::size_t s = 0; s < indices.size(); ++s) {
        if (indices[s] >= static_cast<std::size_t>(residuals.rows())) {
            throw DimensionError("bootstrap: residual index out of range");
        }
        cloud.row(static_cast<Eigen::Index>(s)) =
            point.transpose() + residuals.values().row(static_cast<Eigen::Index>(indices[s]));
    }
    return SampleCloud(std::move(cloud), n_u);
}

std::vector<std::size_t> bootstrap_indices(std::uint64_t seed, int M, int rows) {
    const rng::CounterRng gen(seed);
    std::vector<std::size_t> idx(static_cast<std::size_t>(M));
    for (int s = 0; s < M; ++s) {
        idx[static_cast<std::size_t>(s)] = static_cast<std::size_t>(gen.below(static_cast<std::uint64_t>(s),
                                                                             static_cast<std::uint64_t>(rows)));
    }
    return idx;
}

ForecastSet fit_and_forecast(const RowMatrix& dataset, int n_u, double split, int M, std::uint64_t seed,
                             std::optional<int> n_test_steps) {
    if (M < 2) throw ConfigError("bootstrap needs at least 2 samples");
    if (!(split > 0.0 && split < 1.0)) throw ConfigError("split must lie in (0, 1)");
    const auto T = static_cast<int>(dataset.rows());
    const int n_train = static_cast<int>(std::floor(split * T));
    if (n_train < 3) throw DimensionError("training block needs at least 3 observations");
    const int n_test = T - n_train;
    if (n_test < 1) throw DimensionError("split leaves no test steps");

    ForecastSet out{fit_lag1(dataset.topRows(n_train)), {}};
    int keep = n_test;
    if (n_test_steps) {
        if (*n_test_steps < 1) throw ConfigError("n_test_steps must be positive");
        keep = std::min(*n_test_steps, n_test);
    }
    const std::uint64_t boot_seed = rng::derive(seed, "bootstrap");
    out.windows.reserve(static_cast<std::size_t>(keep));
    for (int w = 0; w < keep; ++w) {
        const int t = n_train + static_cast<int>(static_cast<long long>(w) * n_test / keep);
        const Eigen::VectorXd previous = dataset.row(t - 1).transpose();
        Eigen::VectorXd point = out.fit.predict(previous);
        const auto idx = bootstrap_indices(rng::derive(boot_seed, static_cast<std::uint64_t>(t)), M,
                                           out.fit.residuals.rows());
        SampleCloud cloud = bootstrap_cloud(point, out.fit.residuals, idx, n_u);
        out.windows.push_back(WindowForecast{t, std::move(point), dataset.row(t).transpose(), std::move(cloud)});
    }
    return out;
}

}  // namespace nlrecon
