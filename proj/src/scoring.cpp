#include "nlrecon/scoring.hpp"

#include "nlrecon/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace nlrecon {

double energy_score(const SampleCloud& cloud, const Eigen::VectorXd& y) {
    const int M = cloud.size();
    const int n = cloud.n();
    if (M < 2) throw DimensionError("energy score needs at least 2 samples");
    if (y.size() != n) throw DimensionError("energy score: observation has wrong length");
    if (!y.allFinite()) throw DomainError("energy score: non-finite observation");

    const RowMatrix& x = cloud.samples();
    double to_obs = 0.0;
    for (int j = 0; j < M; ++j) to_obs += (x.row(j) - y.transpose()).norm();

    // Symmetric double sum over ordered pairs; the diagonal is zero.
    double pairs = 0.0;
    for (int j = 0; j < M; ++j) {
        const double* xj = x.data() + static_cast<std::ptrdiff_t>(j) * n;
        double row_sum = 0.0;
        for (int k = j + 1; k < M; ++k) {
            const double* xk = x.data() + static_cast<std::ptrdiff_t>(k) * n;
            double sq = 0.0;
            for (int c = 0; c < n; ++c) {
                const double d = xj[c] - xk[c];
                sq += d * d;
            }
            row_sum += std::sqrt(sq);
        }
        pairs += row_sum;
    }
    const double Md = static_cast<double>(M);
    return to_obs / Md - (2.0 * pairs) / (2.0 * Md * Md);
}

double crps(std::span<const double> samples, double y) {
    const std::size_t M = samples.size();
    if (M < 2) throw DimensionError("CRPS needs at least 2 samples");
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    double to_obs = 0.0;
    double spread = 0.0;
    // sum_j sum_k |x_j - x_k| = 2 sum_i (2 i - M - 1) x_(i), i = 1..M
    for (std::size_t i = 0; i < M; ++i) {
        to_obs += std::abs(sorted[i] - y);
        spread += (2.0 * static_cast<double>(i + 1) - static_cast<double>(M) - 1.0) * sorted[i];
    }
    const double Md = static_cast<double>(M);
    return to_obs / Md - (2.0 * spread) / (2.0 * Md * Md);
}

ScoreReport score_cloud(const SampleCloud& cloud, const Eigen::VectorXd& y) {
    ScoreReport report;
    report.es = energy_score(cloud, y);
    report.crps_per_series.resize(cloud.n());
    std::vector<double> column(static_cast<std::size_t>(cloud.size()));
    for (int c = 0; c < cloud.n(); ++c) {
        for (int i = 0; i < cloud.size(); ++i) column[static_cast<std::size_t>(i)] = cloud.samples()(i, c);
        report.crps_per_series[c] = crps(column, y[c]);
    }
    return report;
}

RelativeScores aggregate(std::span<const ScoreReport> method, std::span<const ScoreReport> baseline) {
    if (method.empty() || method.size() != baseline.size()) {
        throw DimensionError("aggregate: method and baseline need the same non-zero number of windows");
    }
    const auto n = method.front().crps_per_series.size();
    Eigen::VectorXd crps_m = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd crps_b = Eigen::VectorXd::Zero(n);
    double es_m = 0.0;
    double es_b = 0.0;
    for (std::size_t t = 0; t < method.size(); ++t) {
        if (method[t].crps_per_series.size() != n || baseline[t].crps_per_series.size() != n) {
            throw DimensionError("aggregate: series count differs across windows");
        }
        crps_m += method[t].crps_per_series;
        crps_b += baseline[t].crps_per_series;
        es_m += method[t].es;
        es_b += baseline[t].es;
    }
    const double T = static_cast<double>(method.size());
    crps_m /= T;
    crps_b /= T;

    double log_sum = 0.0;
    for (Eigen::Index j = 0; j < crps_b.size(); ++j) {
        if (!(crps_b[j] > 0.0)) {
            throw DomainError("aggregate: baseline CRPS of series " + std::to_string(j) + " is zero");
        }
        log_sum += std::log(crps_m[j] / crps_b[j]);
    }
    if (!(es_b > 0.0)) throw DomainError("aggregate: baseline energy score is zero");

    RelativeScores out;
    out.rel_crps_gm = std::exp(log_sum / static_cast<double>(n));
    out.rel_es = (es_m / T) / (es_b / T);
    return out;
}

}  // namespace nlrecon
