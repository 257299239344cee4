#pragma once

#include "nlrecon/conditioning.hpp"
#include "nlrecon/core.hpp"
#include "nlrecon/covariance.hpp"
#include "nlrecon/projection.hpp"
#include "nlrecon/scoring.hpp"
#include "nlrecon/synth.hpp"
#include "nlrecon/weights.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nlrecon {

enum class Method { Base, Pbu, ProjOls, ProjWls, ProjFull, Ukf };

std::string_view to_string(Method m);
Method parse_method(std::string_view text);
const std::vector<Method>& all_methods();
/// WLS/FULL projection and UKF need in-sample residuals.
bool needs_residuals(Method m);
/// Coherence tolerance a reconciled cloud of this method must meet.
double coherence_tolerance(Method m);

struct ConstraintSpec {
    std::string name;
    std::vector<double> params;

    std::string label() const;
    ConstraintFn build() const { return builtin(name, params); }
};

struct ReconcileOptions {
    UTParams ut;
    ProjectionConfig projection;
    std::optional<int> samples;  ///< UKF draws; defaults to the base cloud size
    int threads = 1;
};

/**
 * Applies any of the configured methods to base clouds of one hierarchy.
 * Weight matrices and UKF covariance blocks are computed once from the
 * residuals at construction, so run() times only the reconciliation.
 */
class Reconciler {
public:
    Reconciler(HierarchySpec spec, std::optional<ResidualMatrix> residuals, ReconcileOptions options = {});

    struct Output {
        SampleCloud cloud;
        double seconds = 0.0;
        int fallbacks = 0;
        bool psd_repaired = false;
    };

    /// `seed` feeds the UKF posterior sampler; other methods are deterministic.
    Output run(Method method, const SampleCloud& base, std::uint64_t seed) const;

    const HierarchySpec& spec() const { return spec_; }

private:
    const WeightSpec& weights_for(Method method) const;

    HierarchySpec spec_;
    ReconcileOptions options_;
    std::optional<WeightSpec> ols_;
    std::optional<WeightSpec> wls_;
    std::optional<WeightSpec> full_;
    std::optional<Eigen::MatrixXd> sigma_b_;
    std::optional<Eigen::MatrixXd> sigma_u_;
};

/// Stream seed for the UKF sampler of window `window` and `method` under a
/// dataset seed.
std::uint64_t window_method_seed(std::uint64_t dataset_seed, int window, Method method);
/// Dataset seed of (replication, surface) under the master seed.
std::uint64_t dataset_seed(std::uint64_t master_seed, int replication, const std::string& surface_label);

struct ExperimentConfig {
    std::vector<ConstraintSpec> surfaces{{"paraboloid", {}}, {"saddle", {}}, {"ripples", {}}};
    std::vector<Method> methods = all_methods();
    int samples = 1000;
    std::uint64_t seed = 42;
    int replications = 1;
    Ar1Config ar1;
    double split = 0.8;
    std::optional<int> n_test_steps;
    ReconcileOptions recon;
    int threads = 1;
    bool verify = true;
    std::optional<std::filesystem::path> out_dir;
    bool dump_clouds = false;

    void validate() const;
};

/// JSON keys: surfaces ([name | {name, params}]), methods, samples, seed,
/// replications, ar1 {phi, noise_sd, T, burn_in}, split, n_test_steps,
/// ut {alpha, beta, kappa}, projection {max_iter, grad_tol, step_tol, damping},
/// ukf_samples,
/// threads, verify, out_dir, dump_clouds.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct MethodSummary {
    Method method = Method::Base;
    std::string surface;
    double rel_es = 1.0;       ///< mean over replications
    double rel_crps_gm = 1.0;  ///< mean over replications
    std::vector<double> rel_es_per_replication;
    std::vector<double> rel_crps_per_replication;
    double mean_step_seconds = 0.0;
    int windows = 0;
    int coherence_violations = 0;  ///< reconciled samples off the manifold
    int fallbacks = 0;             ///< projection samples that fell back to PBU
};

struct SimulationResult {
    std::vector<std::string> surfaces;
    std::vector<Method> methods;
    std::vector<MethodSummary> rows;  ///< surface-major, methods in config order
    int samples = 0;

    const MethodSummary& at(Method method, const std::string& surface) const;
    int total_violations() const;
};

/// generate -> fit_and_forecast -> reconcile -> score -> aggregate, for every
/// surface, replication and method. Module errors are rethrown with the
/// surface, method and window attached.
SimulationResult run_simulation(const ExperimentConfig& config);

/// Rows = methods, columns = surfaces x {CRPS, ES}; relative to base.
std::string format_score_table(const SimulationResult& result);
std::string score_csv(const SimulationResult& result);
/// Mean per-step reconciliation wall time; not reproducible run to run.
std::string format_runtime_table(const SimulationResult& result);
std::string runtime_csv(const SimulationResult& result);
void write_simulation_outputs(const SimulationResult& result, const std::filesystem::path& out_dir);

struct ExternalConfig {
    ConstraintSpec constraint;
    std::vector<std::filesystem::path> clouds;  ///< one base cloud per window
    std::filesystem::path truth;                ///< one row per window
    std::optional<std::filesystem::path> residuals;
    std::vector<Method> methods = all_methods();
    std::uint64_t seed = 0;  ///< dataset seed for the UKF sampler streams
    ReconcileOptions recon;
    int threads = 1;
    bool verify = true;

    /// Throws ConfigError on missing files or a method that needs residuals
    /// when none are given.
    void validate() const;
};

/// JSON keys: constraint {name, params}, clouds [paths], truth, residuals,
/// methods, seed, ukf_samples, ut, projection, threads, verify. Relative paths
/// resolve against the config file's directory.
ExternalConfig load_external_config(const std::filesystem::path& path);

struct ExternalRow {
    Method method = Method::Base;
    double rel_es = 1.0;
    double rel_crps_gm = 1.0;
    double mean_step_seconds = 0.0;
    int coherence_violations = 0;
    int fallbacks = 0;
};

struct ExternalResult {
    std::vector<ExternalRow> rows;
    int windows = 0;

    const ExternalRow& at(Method method) const;
};

ExternalResult run_external(const ExternalConfig& config);
std::string format_external_table(const ExternalResult& result);
std::string external_csv(const ExternalResult& result);

}  // namespace nlrecon
