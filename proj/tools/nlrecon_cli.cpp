// Command-line front end: simulate, reconcile, score, bench, external.

#include "nlrecon/csv_io.hpp"
#include "nlrecon/errors.hpp"
#include "nlrecon/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace nlrecon;

namespace {

struct ReconFlags {
    std::optional<double> alpha, beta, kappa, grad_tol;
    std::optional<int> max_iter, samples;

    void add(CLI::App* app) {
        app->add_option("--alpha", alpha, "UT spread parameter");
        app->add_option("--beta", beta, "UT prior-knowledge parameter");
        app->add_option("--kappa", kappa, "UT secondary scaling (default 3 - n_b)");
        app->add_option("--max-iter", max_iter, "Gauss-Newton iteration cap");
        app->add_option("--grad-tol", grad_tol, "Gauss-Newton gradient tolerance");
    }

    void apply(ReconcileOptions& opts) const {
        if (alpha) opts.ut.alpha = *alpha;
        if (beta) opts.ut.beta = *beta;
        if (kappa) opts.ut.kappa = *kappa;
        if (max_iter) opts.projection.max_iter = *max_iter;
        if (grad_tol) opts.projection.grad_tol = *grad_tol;
    }
};

std::vector<Method> methods_from(const std::vector<std::string>& names) {
    std::vector<Method> out;
    for (const auto& n : names) out.push_back(parse_method(n));
    return out;
}

std::vector<ConstraintSpec> surfaces_from(const std::vector<std::string>& names) {
    std::vector<ConstraintSpec> out;
    for (const auto& n : names) out.push_back({n, {}});
    return out;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write " + path.string());
    os << text;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Probabilistic forecast reconciliation under nonlinear constraints"};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "Run the synthetic surface study and print the score tables");
    std::optional<std::string> sim_config;
    std::optional<std::uint64_t> sim_seed;
    std::optional<std::string> sim_out;
    std::optional<int> sim_threads, sim_samples, sim_reps, sim_steps;
    std::vector<std::string> sim_methods, sim_surfaces;
    bool sim_dump = false, sim_no_verify = false;
    ReconFlags sim_recon;
    sim->add_option("--config", sim_config, "JSON experiment config")->check(CLI::ExistingFile);
    sim->add_option("--seed", sim_seed, "Master seed");
    sim->add_option("--out-dir", sim_out, "Directory for CSV tables and dumps");
    sim->add_option("--threads", sim_threads, "Worker threads");
    sim->add_option("--samples", sim_samples, "Cloud size M");
    sim->add_option("--replications", sim_reps, "Independent datasets per surface");
    sim->add_option("--n-test-steps", sim_steps, "Evenly spaced subset of test steps to score");
    sim->add_option("--methods", sim_methods, "Subset of base,pbu,proj-ols,proj-wls,proj-full,ukf")->delimiter(',');
    sim->add_option("--surfaces", sim_surfaces, "Builtin constraints to simulate")->delimiter(',');
    sim->add_flag("--dump-clouds", sim_dump, "Write base clouds and an external config per dataset");
    sim->add_flag("--no-verify", sim_no_verify, "Skip the coherence assertion on reconciled clouds");
    sim_recon.add(sim);

    // reconcile
    auto* rec = app.add_subcommand("reconcile", "Reconcile one base cloud");
    std::string rec_constraint, rec_in, rec_out, rec_method = "proj", rec_weights = "ols";
    std::vector<double> rec_params;
    std::optional<std::string> rec_residuals;
    std::optional<int> rec_samples;
    std::uint64_t rec_seed = 42;
    int rec_threads = 1;
    ReconFlags rec_recon;
    rec->add_option("--constraint", rec_constraint, "Builtin constraint name")->required();
    rec->add_option("--params", rec_params, "Constraint parameters")->delimiter(',');
    rec->add_option("--in", rec_in, "Base cloud CSV")->required()->check(CLI::ExistingFile);
    rec->add_option("--out", rec_out, "Reconciled cloud CSV")->required();
    rec->add_option("--method", rec_method, "proj | ukf | pbu")->check(CLI::IsMember({"proj", "ukf", "pbu"}));
    rec->add_option("--weights", rec_weights, "ols | wls | full")->check(CLI::IsMember({"ols", "wls", "full"}));
    rec->add_option("--residuals", rec_residuals, "In-sample residual CSV")->check(CLI::ExistingFile);
    rec->add_option("--samples", rec_samples, "UKF posterior draws (default: input size)");
    rec->add_option("--seed", rec_seed, "UKF sampler seed");
    rec->add_option("--threads", rec_threads, "Worker threads");
    rec_recon.add(rec);

    // score
    auto* sc = app.add_subcommand("score", "Energy score and CRPS of a cloud against a realized vector");
    std::string sc_cloud, sc_truth;
    sc->add_option("--cloud", sc_cloud, "Cloud CSV")->required()->check(CLI::ExistingFile);
    sc->add_option("--truth", sc_truth, "One-row series CSV")->required()->check(CLI::ExistingFile);

    // bench
    auto* bench = app.add_subcommand("bench", "Per-step runtime of proj-full and ukf");
    std::vector<std::string> bench_surfaces{"paraboloid", "saddle", "ripples"};
    int bench_samples = 2000, bench_steps = 5;
    std::uint64_t bench_seed = 42;
    std::optional<std::string> bench_out;
    bench->add_option("--surfaces", bench_surfaces, "Builtin constraints")->delimiter(',');
    bench->add_option("--samples", bench_samples, "Cloud size M");
    bench->add_option("--n-test-steps", bench_steps, "Test steps timed per surface");
    bench->add_option("--seed", bench_seed, "Master seed");
    bench->add_option("--out-dir", bench_out, "Directory for runtime.csv");

    // external
    auto* ext = app.add_subcommand("external", "Reconcile and score externally supplied per-window clouds");
    std::string ext_config;
    std::optional<std::string> ext_out;
    std::optional<int> ext_threads;
    ext->add_option("--config", ext_config, "JSON external config")->required()->check(CLI::ExistingFile);
    ext->add_option("--out-dir", ext_out, "Directory for external.csv");
    ext->add_option("--threads", ext_threads, "Worker threads");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sim) {
            ExperimentConfig cfg = sim_config ? load_experiment_config(*sim_config) : ExperimentConfig{};
            if (sim_seed) cfg.seed = *sim_seed;
            if (sim_out) cfg.out_dir = *sim_out;
            if (sim_threads) cfg.threads = *sim_threads;
            if (sim_samples) cfg.samples = *sim_samples;
            if (sim_reps) cfg.replications = *sim_reps;
            if (sim_steps) cfg.n_test_steps = *sim_steps;
            if (!sim_methods.empty()) cfg.methods = methods_from(sim_methods);
            if (!sim_surfaces.empty()) cfg.surfaces = surfaces_from(sim_surfaces);
            if (sim_dump) cfg.dump_clouds = true;
            if (sim_no_verify) cfg.verify = false;
            sim_recon.apply(cfg.recon);
            const SimulationResult result = run_simulation(cfg);
            std::cout << format_score_table(result) << '\n' << format_runtime_table(result);
            if (cfg.out_dir) write_simulation_outputs(result, *cfg.out_dir);
            if (cfg.verify && result.total_violations() > 0) {
                std::cerr << "error: " << result.total_violations() << " reconciled samples failed coherence_check\n";
                return 3;
            }
        } else if (*rec) {
            HierarchySpec spec(builtin(rec_constraint, rec_params));
            const SampleCloud base = csv::read_cloud(rec_in);
            std::optional<ResidualMatrix> residuals;
            if (rec_residuals) residuals.emplace(Eigen::MatrixXd(csv::read_series(*rec_residuals).values));
            ReconcileOptions opts;
            rec_recon.apply(opts);
            opts.samples = rec_samples;
            opts.threads = rec_threads;
            Method method = Method::Pbu;
            if (rec_method == "ukf") method = Method::Ukf;
            if (rec_method == "proj") {
                const WeightKind kind = parse_weight_kind(rec_weights);
                method = kind == WeightKind::OLS ? Method::ProjOls
                         : kind == WeightKind::WLS ? Method::ProjWls
                                                   : Method::ProjFull;
            }
            if (needs_residuals(method) && !residuals) {
                throw ConfigError("--method " + rec_method + (method == Method::Ukf ? "" : " --weights " + rec_weights) +
                                  " needs --residuals");
            }
            const Reconciler reconciler(spec, std::move(residuals), opts);
            const auto out = reconciler.run(method, base, rec_seed);
            csv::write_cloud(rec_out, out.cloud);
            std::cerr << to_string(method) << ": " << out.cloud.size() << " samples in " << out.seconds << " s";
            if (out.fallbacks) std::cerr << ", " << out.fallbacks << " fell back to pbu";
            std::cerr << '\n';
        } else if (*sc) {
            const SampleCloud cloud = csv::read_cloud(sc_cloud);
            const auto truth = csv::read_series(sc_truth);
            if (truth.values.rows() != 1 || truth.values.cols() != cloud.n()) {
                throw DimensionError("truth must be one row with the cloud's columns");
            }
            const ScoreReport report = score_cloud(cloud, truth.values.row(0).transpose());
            const auto header = csv::series_header(cloud.n_u(), cloud.n_b());
            std::cout << "series,crps\n";
            for (int k = 0; k < cloud.n(); ++k) {
                std::cout << header[static_cast<std::size_t>(k)] << ',' << csv::format_double(report.crps_per_series(k))
                          << '\n';
            }
            std::cout << "energy_score," << csv::format_double(report.es) << '\n';
        } else if (*bench) {
            ExperimentConfig cfg;
            cfg.surfaces = surfaces_from(bench_surfaces);
            cfg.methods = {Method::ProjFull, Method::Ukf};
            cfg.samples = bench_samples;
            cfg.n_test_steps = bench_steps;
            cfg.seed = bench_seed;
            const SimulationResult result = run_simulation(cfg);
            std::cout << format_runtime_table(result);
            for (const auto& s : result.surfaces) {
                const double ratio =
                    result.at(Method::ProjFull, s).mean_step_seconds / result.at(Method::Ukf, s).mean_step_seconds;
                std::printf("%s: proj-full / ukf = %.1f\n", s.c_str(), ratio);
            }
            if (bench_out) write_file(std::filesystem::path(*bench_out) / "runtime.csv", runtime_csv(result));
        } else if (*ext) {
            ExternalConfig cfg = load_external_config(ext_config);
            if (ext_threads) cfg.threads = *ext_threads;
            const ExternalResult result = run_external(cfg);
            std::cout << format_external_table(result);
            if (ext_out) write_file(std::filesystem::path(*ext_out) / "external.csv", external_csv(result));
        }
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
