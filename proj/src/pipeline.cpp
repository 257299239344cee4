#include "nlrecon/pipeline.hpp"

#include "nlrecon/csv_io.hpp"
#include "nlrecon/errors.hpp"
#include "nlrecon/parallel.hpp"
#include "nlrecon/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <utility>

namespace nlrecon {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

std::string fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

std::string scientific(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3e", v);
    return buf;
}

std::string pad(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string lpad(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::string read_text(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write " + path.string());
    os << text;
}

json parse_json(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid JSON config: ") + e.what());
    }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

ConstraintSpec parse_constraint(const json& j) {
    if (j.is_string()) return {j.get<std::string>(), {}};
    if (!j.is_object() || !j.contains("name")) throw ConfigError("constraint must be a name or {name, params}");
    return {j.at("name").get<std::string>(), get_or<std::vector<double>>(j, "params", {})};
}

std::vector<Method> parse_methods(const json& j) {
    std::vector<Method> methods;
    for (const auto& m : j) methods.push_back(parse_method(m.get<std::string>()));
    return methods;
}

void parse_recon_options(const json& j, ReconcileOptions& recon) {
    if (j.contains("ut")) {
        const auto& ut = j.at("ut");
        recon.ut.alpha = get_or(ut, "alpha", recon.ut.alpha);
        recon.ut.beta = get_or(ut, "beta", recon.ut.beta);
        if (ut.contains("kappa") && !ut.at("kappa").is_null()) recon.ut.kappa = ut.at("kappa").get<double>();
    }
    if (j.contains("projection")) {
        const auto& p = j.at("projection");
        recon.projection.max_iter = get_or(p, "max_iter", recon.projection.max_iter);
        recon.projection.grad_tol = get_or(p, "grad_tol", recon.projection.grad_tol);
        recon.projection.step_tol = get_or(p, "step_tol", recon.projection.step_tol);
        recon.projection.damping = get_or(p, "damping", recon.projection.damping);
    }
    if (j.contains("ukf_samples") && !j.at("ukf_samples").is_null()) recon.samples = j.at("ukf_samples").get<int>();
}

json recon_options_json(const ReconcileOptions& recon) {
    json ut = {{"alpha", recon.ut.alpha}, {"beta", recon.ut.beta}};
    ut["kappa"] = recon.ut.kappa ? json(*recon.ut.kappa) : json(nullptr);
    json proj = {{"max_iter", recon.projection.max_iter},
                 {"grad_tol", recon.projection.grad_tol},
                 {"step_tol", recon.projection.step_tol},
                 {"damping", recon.projection.damping}};
    return {{"ut", ut}, {"projection", proj}};
}

Ar1Config ar1_for(const Ar1Config& base, int n_b, std::uint64_t seed) {
    Ar1Config cfg = base;
    cfg.seed = seed;
    auto broadcast = [n_b](std::vector<double>& v) {
        if (static_cast<int>(v.size()) != n_b && !v.empty() &&
            std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); })) {
            v.assign(static_cast<std::size_t>(n_b), v.front());
        }
    };
    broadcast(cfg.phi);
    broadcast(cfg.noise_sd);
    return cfg;
}

// Scores of every method on every window of one dataset.
struct WindowScores {
    std::vector<std::vector<ScoreReport>> reports;  // [method][window]
    std::vector<std::vector<double>> seconds;
    std::vector<std::vector<int>> violations;
    std::vector<std::vector<int>> fallbacks;
};

// `methods` must start with Base.
WindowScores score_windows(const Reconciler& reconciler, const std::vector<Method>& methods,
                           const std::vector<const SampleCloud*>& clouds, const std::vector<Eigen::VectorXd>& truths,
                           std::uint64_t seed, bool verify, int threads, const std::string& context) {
    const std::size_t W = clouds.size();
    WindowScores out;
    out.reports.assign(methods.size(), std::vector<ScoreReport>(W));
    out.seconds.assign(methods.size(), std::vector<double>(W, 0.0));
    out.violations.assign(methods.size(), std::vector<int>(W, 0));
    out.fallbacks.assign(methods.size(), std::vector<int>(W, 0));

    parallel_for(W, threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t w = begin; w < end; ++w) {
            for (std::size_t m = 0; m < methods.size(); ++m) {
                const Method method = methods[m];
                try {
                    auto result = reconciler.run(method, *clouds[w], window_method_seed(seed, static_cast<int>(w), method));
                    if (verify && method != Method::Base) {
                        out.violations[m][w] =
                            coherence_check(reconciler.spec(), result.cloud, coherence_tolerance(method)).violations;
                    }
                    out.reports[m][w] = score_cloud(result.cloud, truths[w]);
                    out.reports[m][w].runtime_seconds = result.seconds;
                    out.seconds[m][w] = result.seconds;
                    out.fallbacks[m][w] = result.fallbacks;
                } catch (const std::exception& e) {
                    throw Error(context + ", method " + std::string(to_string(method)) + ", window " +
                                std::to_string(w) + ": " + e.what());
                }
            }
        }
    });
    return out;
}

std::vector<Method> with_base_first(const std::vector<Method>& methods) {
    std::vector<Method> out{Method::Base};
    for (Method m : methods) {
        if (m != Method::Base) out.push_back(m);
    }
    return out;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

int sum_of(const std::vector<int>& v) {
    int s = 0;
    for (int x : v) s += x;
    return s;
}

void dump_dataset(const fs::path& dir, const ConstraintSpec& surface, const ForecastSet& forecasts,
                  const ExperimentConfig& config, std::uint64_t seed) {
    fs::create_directories(dir);
    json clouds = json::array();
    RowMatrix truth(static_cast<Eigen::Index>(forecasts.windows.size()), forecasts.fit.residuals.cols());
    for (std::size_t w = 0; w < forecasts.windows.size(); ++w) {
        char name[32];
        std::snprintf(name, sizeof(name), "window_%04zu.csv", w);
        csv::write_cloud(dir / name, forecasts.windows[w].cloud);
        clouds.push_back(name);
        truth.row(static_cast<Eigen::Index>(w)) = forecasts.windows[w].truth.transpose();
    }
    const int n_u = forecasts.windows.front().cloud.n_u();
    csv::write_series(dir / "truth.csv", truth, n_u);
    csv::write_series(dir / "residuals.csv", RowMatrix(forecasts.fit.residuals.values()), n_u);

    json cfg = recon_options_json(config.recon);
    cfg["constraint"] = {{"name", surface.name}, {"params", surface.params}};
    cfg["clouds"] = clouds;
    cfg["truth"] = "truth.csv";
    cfg["residuals"] = "residuals.csv";
    json methods = json::array();
    for (Method m : config.methods) methods.push_back(std::string(to_string(m)));
    cfg["methods"] = methods;
    cfg["seed"] = seed;
    if (config.recon.samples) cfg["ukf_samples"] = *config.recon.samples;
    cfg["verify"] = config.verify;
    write_text(dir / "external.json", cfg.dump(2) + "\n");
}

}  // namespace

std::string_view to_string(Method m) {
    switch (m) {
        case Method::Base: return "base";
        case Method::Pbu: return "pbu";
        case Method::ProjOls: return "proj-ols";
        case Method::ProjWls: return "proj-wls";
        case Method::ProjFull: return "proj-full";
        case Method::Ukf: return "ukf";
    }
    return "?";
}

Method parse_method(std::string_view text) {
    for (Method m : all_methods()) {
        if (to_string(m) == text) return m;
    }
    throw ConfigError("unknown method '" + std::string(text) +
                      "' (expected base|pbu|proj-ols|proj-wls|proj-full|ukf)");
}

const std::vector<Method>& all_methods() {
    static const std::vector<Method> methods{Method::Base,    Method::Pbu,      Method::ProjOls,
                                             Method::ProjWls, Method::ProjFull, Method::Ukf};
    return methods;
}

bool needs_residuals(Method m) { return m == Method::ProjWls || m == Method::ProjFull || m == Method::Ukf; }

double coherence_tolerance(Method m) {
    switch (m) {
        case Method::ProjOls:
        case Method::ProjWls:
        case Method::ProjFull: return 1e-8;
        default: return 1e-10;
    }
}

std::string ConstraintSpec::label() const {
    if (params.empty()) return name;
    std::string s = name + "(";
    for (std::size_t k = 0; k < params.size(); ++k) s += (k ? "," : "") + csv::format_double(params[k]);
    return s + ")";
}

Reconciler::Reconciler(HierarchySpec spec, std::optional<ResidualMatrix> residuals, ReconcileOptions options)
    : spec_(std::move(spec)), options_(std::move(options)) {
    options_.projection.validate();
    options_.ut.validate(spec_.n_b());
    ols_ = identity_weights(spec_.n());
    if (residuals) {
        if (residuals->cols() != spec_.n()) throw DimensionError("residuals have the wrong number of series");
        wls_ = weight_matrix(WeightKind::WLS, *residuals);
        full_ = weight_matrix(WeightKind::FULL, *residuals);
        const Eigen::MatrixXd& cov = full_->W();
        sigma_u_ = cov.topLeftCorner(spec_.n_u(), spec_.n_u());
        sigma_b_ = cov.bottomRightCorner(spec_.n_b(), spec_.n_b());
    }
}

const WeightSpec& Reconciler::weights_for(Method method) const {
    const std::optional<WeightSpec>* w = &ols_;
    if (method == Method::ProjWls) w = &wls_;
    if (method == Method::ProjFull) w = &full_;
    if (!*w) throw ConfigError(std::string(to_string(method)) + " needs residuals");
    return **w;
}

Reconciler::Output Reconciler::run(Method method, const SampleCloud& base, std::uint64_t seed) const {
    if (base.n() != spec_.n()) throw DimensionError("base cloud has the wrong number of series");
    switch (method) {
        case Method::Base:
            return {base, 0.0, 0, false};
        case Method::Pbu: {
            Stopwatch sw;
            SampleCloud cloud = pbu_reconcile(spec_, base, options_.threads);
            return {std::move(cloud), sw.seconds(), 0, false};
        }
        case Method::ProjOls:
        case Method::ProjWls:
        case Method::ProjFull: {
            const WeightSpec& W = weights_for(method);
            Stopwatch sw;
            auto projected = project_cloud(spec_, W, base, options_.projection, options_.threads);
            const double secs = sw.seconds();
            return {std::move(projected.cloud), secs, projected.diagnostics.fallback_count, false};
        }
        case Method::Ukf: {
            if (!sigma_b_) throw ConfigError("ukf needs residuals");
            const int M = options_.samples.value_or(base.size());
            Stopwatch sw;
            const Eigen::VectorXd means = base.column_means();
            const GaussianDist prior(means.tail(spec_.n_b()), *sigma_b_);
            const UKFResult result = ukf_reconcile(spec_, prior, means.head(spec_.n_u()), *sigma_u_, options_.ut);
            SampleCloud cloud = sample_posterior(result, spec_, M, seed, options_.threads);
            const double secs = sw.seconds();
            return {std::move(cloud), secs, 0, result.psd_repaired};
        }
    }
    throw ConfigError("unknown method");
}

std::uint64_t window_method_seed(std::uint64_t dataset_seed, int window, Method method) {
    return rng::derive(rng::derive(rng::derive(dataset_seed, "window"), static_cast<std::uint64_t>(window)),
                       to_string(method));
}

std::uint64_t dataset_seed(std::uint64_t master_seed, int replication, const std::string& surface_label) {
    return rng::derive(rng::derive(master_seed, "replication/" + std::to_string(replication)),
                       "surface/" + surface_label);
}

void ExperimentConfig::validate() const {
    if (surfaces.empty()) throw ConfigError("no surfaces configured");
    if (methods.empty()) throw ConfigError("no methods configured");
    if (samples < 2) throw ConfigError("samples must be at least 2");
    if (replications < 1) throw ConfigError("replications must be at least 1");
    if (threads < 1) throw ConfigError("threads must be at least 1");
    if (dump_clouds && !out_dir) throw ConfigError("dump_clouds requires an output directory");
    recon.projection.validate();
    if (recon.samples && *recon.samples < 2) throw ConfigError("ukf_samples must be at least 2");
    for (const auto& s : surfaces) recon.ut.validate(HierarchySpec(s.build()).n_b());
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    const json j = parse_json(json_text);
    ExperimentConfig cfg;
    try {
        if (j.contains("surfaces")) {
            cfg.surfaces.clear();
            for (const auto& s : j.at("surfaces")) cfg.surfaces.push_back(parse_constraint(s));
        }
        if (j.contains("methods")) cfg.methods = parse_methods(j.at("methods"));
        cfg.samples = get_or(j, "samples", cfg.samples);
        cfg.seed = get_or(j, "seed", cfg.seed);
        cfg.replications = get_or(j, "replications", cfg.replications);
        if (j.contains("ar1")) {
            const auto& a = j.at("ar1");
            cfg.ar1.phi = get_or(a, "phi", cfg.ar1.phi);
            cfg.ar1.noise_sd = get_or(a, "noise_sd", cfg.ar1.noise_sd);
            cfg.ar1.T = get_or(a, "T", cfg.ar1.T);
            cfg.ar1.burn_in = get_or(a, "burn_in", cfg.ar1.burn_in);
        }
        cfg.split = get_or(j, "split", cfg.split);
        if (j.contains("n_test_steps") && !j.at("n_test_steps").is_null()) {
            cfg.n_test_steps = j.at("n_test_steps").get<int>();
        }
        parse_recon_options(j, cfg.recon);
        cfg.threads = get_or(j, "threads", cfg.threads);
        cfg.verify = get_or(j, "verify", cfg.verify);
        if (j.contains("out_dir") && !j.at("out_dir").is_null()) cfg.out_dir = j.at("out_dir").get<std::string>();
        cfg.dump_clouds = get_or(j, "dump_clouds", cfg.dump_clouds);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid experiment config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path) { return parse_experiment_config(read_text(path)); }

const MethodSummary& SimulationResult::at(Method method, const std::string& surface) const {
    for (const auto& r : rows) {
        if (r.method == method && r.surface == surface) return r;
    }
    throw ConfigError("no result for " + std::string(to_string(method)) + " on " + surface);
}

int SimulationResult::total_violations() const {
    int total = 0;
    for (const auto& r : rows) total += r.coherence_violations;
    return total;
}

SimulationResult run_simulation(const ExperimentConfig& config) {
    config.validate();
    const std::vector<Method> methods = with_base_first(config.methods);

    SimulationResult result;
    result.methods = config.methods;
    result.samples = config.samples;
    for (const auto& s : config.surfaces) result.surfaces.push_back(s.label());

    // summaries[surface][method index in `methods`]
    std::vector<std::vector<MethodSummary>> summaries(config.surfaces.size());
    std::vector<std::vector<std::vector<double>>> step_seconds(config.surfaces.size());

    ReconcileOptions recon = config.recon;
    recon.threads = 1;

    for (std::size_t s = 0; s < config.surfaces.size(); ++s) {
        summaries[s].resize(methods.size());
        step_seconds[s].resize(methods.size());
        for (std::size_t m = 0; m < methods.size(); ++m) {
            summaries[s][m].method = methods[m];
            summaries[s][m].surface = result.surfaces[s];
        }
    }

    for (int r = 0; r < config.replications; ++r) {
        for (std::size_t s = 0; s < config.surfaces.size(); ++s) {
            const auto& surface = config.surfaces[s];
            const std::string& label = result.surfaces[s];
            const std::string context = "surface " + label + ", replication " + std::to_string(r);
            HierarchySpec spec(surface.build());
            const std::uint64_t seed = dataset_seed(config.seed, r, label);

            ForecastSet forecasts = [&] {
                try {
                    const RowMatrix data = generate(ar1_for(config.ar1, spec.n_b(), seed), spec);
                    return fit_and_forecast(data, spec.n_u(), config.split, config.samples, seed, config.n_test_steps);
                } catch (const std::exception& e) {
                    throw Error(context + ": " + e.what());
                }
            }();
            if (config.dump_clouds) {
                dump_dataset(*config.out_dir / "clouds" / (label + "_rep" + std::to_string(r)), surface, forecasts,
                             config, seed);
            }

            std::vector<const SampleCloud*> clouds;
            std::vector<Eigen::VectorXd> truths;
            for (const auto& w : forecasts.windows) {
                clouds.push_back(&w.cloud);
                truths.push_back(w.truth);
            }
            const Reconciler reconciler(spec, forecasts.fit.residuals, recon);
            const WindowScores scores =
                score_windows(reconciler, methods, clouds, truths, seed, config.verify, config.threads, context);

            for (std::size_t m = 0; m < methods.size(); ++m) {
                const RelativeScores rel = aggregate(scores.reports[m], scores.reports[0]);
                auto& summary = summaries[s][m];
                summary.rel_es_per_replication.push_back(rel.rel_es);
                summary.rel_crps_per_replication.push_back(rel.rel_crps_gm);
                summary.windows += static_cast<int>(clouds.size());
                summary.coherence_violations += sum_of(scores.violations[m]);
                summary.fallbacks += sum_of(scores.fallbacks[m]);
                step_seconds[s][m].insert(step_seconds[s][m].end(), scores.seconds[m].begin(), scores.seconds[m].end());
            }
        }
    }

    for (std::size_t s = 0; s < config.surfaces.size(); ++s) {
        for (Method method : config.methods) {
            const auto m = static_cast<std::size_t>(
                std::find(methods.begin(), methods.end(), method) - methods.begin());
            MethodSummary summary = summaries[s][m];
            summary.rel_es = mean_of(summary.rel_es_per_replication);
            summary.rel_crps_gm = mean_of(summary.rel_crps_per_replication);
            summary.mean_step_seconds = mean_of(step_seconds[s][m]);
            result.rows.push_back(std::move(summary));
        }
    }
    return result;
}

std::string format_score_table(const SimulationResult& result) {
    std::ostringstream os;
    const std::size_t cw = std::max<std::size_t>(11, [&] {
        std::size_t w = 0;
        for (const auto& s : result.surfaces) w = std::max(w, s.size() + 1);
        return w;
    }());
    os << pad("", 10);
    os << "| " << pad("CRPS (relative, geometric mean)", cw * result.surfaces.size()) << "| "
       << "Energy Score (relative)\n";
    os << pad("method", 10) << "| ";
    for (const auto& s : result.surfaces) os << lpad(s, cw - 1) << ' ';
    os << "| ";
    for (const auto& s : result.surfaces) os << lpad(s, cw - 1) << ' ';
    os << '\n';
    for (Method m : result.methods) {
        os << pad(std::string(to_string(m)), 10) << "| ";
        for (const auto& s : result.surfaces) os << lpad(fixed(result.at(m, s).rel_crps_gm), cw - 1) << ' ';
        os << "| ";
        for (const auto& s : result.surfaces) os << lpad(fixed(result.at(m, s).rel_es), cw - 1) << ' ';
        os << '\n';
    }
    return os.str();
}

std::string score_csv(const SimulationResult& result) {
    std::ostringstream os;
    os << "method,surface,rel_crps_gm,rel_es,windows,coherence_violations,fallbacks\n";
    for (Method m : result.methods) {
        for (const auto& s : result.surfaces) {
            const auto& r = result.at(m, s);
            os << to_string(m) << ',' << s << ',' << csv::format_double(r.rel_crps_gm) << ','
               << csv::format_double(r.rel_es) << ',' << r.windows << ',' << r.coherence_violations << ','
               << r.fallbacks << '\n';
        }
    }
    return os.str();
}

std::string format_runtime_table(const SimulationResult& result) {
    std::ostringstream os;
    os << "Mean reconciliation time per step in seconds (M = " << result.samples << ")\n";
    os << pad("method", 10) << "| ";
    for (const auto& s : result.surfaces) os << lpad(s, 12) << ' ';
    os << '\n';
    for (Method m : result.methods) {
        if (m == Method::Base) continue;
        os << pad(std::string(to_string(m)), 10) << "| ";
        for (const auto& s : result.surfaces) os << lpad(scientific(result.at(m, s).mean_step_seconds), 12) << ' ';
        os << '\n';
    }
    return os.str();
}

std::string runtime_csv(const SimulationResult& result) {
    std::ostringstream os;
    os << "method,surface,samples,mean_step_seconds\n";
    for (Method m : result.methods) {
        for (const auto& s : result.surfaces) {
            os << to_string(m) << ',' << s << ',' << result.samples << ','
               << csv::format_double(result.at(m, s).mean_step_seconds) << '\n';
        }
    }
    return os.str();
}

void write_simulation_outputs(const SimulationResult& result, const fs::path& out_dir) {
    write_text(out_dir / "scores.txt", format_score_table(result));
    write_text(out_dir / "scores.csv", score_csv(result));
    write_text(out_dir / "runtime.txt", format_runtime_table(result));
    write_text(out_dir / "runtime.csv", runtime_csv(result));
    std::ostringstream reps;
    reps << "method,surface,replication,rel_crps_gm,rel_es\n";
    for (const auto& r : result.rows) {
        for (std::size_t k = 0; k < r.rel_es_per_replication.size(); ++k) {
            reps << to_string(r.method) << ',' << r.surface << ',' << k << ','
                 << csv::format_double(r.rel_crps_per_replication[k]) << ','
                 << csv::format_double(r.rel_es_per_replication[k]) << '\n';
        }
    }
    write_text(out_dir / "replications.csv", reps.str());
}

void ExternalConfig::validate() const {
    if (methods.empty()) throw ConfigError("no methods configured");
    if (clouds.empty()) throw ConfigError("no base-forecast clouds configured");
    for (const auto& c : clouds) {
        if (!fs::exists(c)) throw ConfigError("cloud file not found: " + c.string());
    }
    if (!fs::exists(truth)) throw ConfigError("truth file not found: " + truth.string());
    const bool need = std::any_of(methods.begin(), methods.end(), needs_residuals);
    if (need && !residuals) {
        throw ConfigError("methods proj-wls, proj-full and ukf need a residual file");
    }
    if (residuals && !fs::exists(*residuals)) throw ConfigError("residual file not found: " + residuals->string());
    if (threads < 1) throw ConfigError("threads must be at least 1");
    recon.projection.validate();
}

ExternalConfig load_external_config(const fs::path& path) {
    const json j = parse_json(read_text(path));
    const fs::path base = path.parent_path();
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
    ExternalConfig cfg;
    try {
        if (!j.contains("constraint")) throw ConfigError("external config needs a constraint");
        cfg.constraint = parse_constraint(j.at("constraint"));
        for (const auto& c : j.at("clouds")) cfg.clouds.push_back(resolve(c.get<std::string>()));
        cfg.truth = resolve(j.at("truth").get<std::string>());
        if (j.contains("residuals") && !j.at("residuals").is_null()) {
            cfg.residuals = resolve(j.at("residuals").get<std::string>());
        }
        if (j.contains("methods")) cfg.methods = parse_methods(j.at("methods"));
        cfg.seed = get_or(j, "seed", cfg.seed);
        parse_recon_options(j, cfg.recon);
        cfg.threads = get_or(j, "threads", cfg.threads);
        cfg.verify = get_or(j, "verify", cfg.verify);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid external config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

const ExternalRow& ExternalResult::at(Method method) const {
    for (const auto& r : rows) {
        if (r.method == method) return r;
    }
    throw ConfigError("no result for " + std::string(to_string(method)));
}

ExternalResult run_external(const ExternalConfig& config) {
    config.validate();
    HierarchySpec spec(config.constraint.build());

    std::vector<SampleCloud> clouds;
    for (const auto& path : config.clouds) clouds.push_back(csv::read_cloud(path));
    for (std::size_t w = 0; w < clouds.size(); ++w) {
        if (clouds[w].n() != spec.n() || clouds[w].n_u() != spec.n_u()) {
            throw ConfigError(config.clouds[w].string() + ": series layout does not match the constraint");
        }
        if (clouds[w].size() != clouds.front().size()) {
            throw ConfigError(config.clouds[w].string() + ": sample count differs from the first window");
        }
    }
    const auto truth = csv::read_series(config.truth);
    if (truth.n_u != spec.n_u() || truth.values.cols() != spec.n()) {
        throw ConfigError(config.truth.string() + ": series layout does not match the constraint");
    }
    if (truth.values.rows() != static_cast<Eigen::Index>(clouds.size())) {
        throw ConfigError(config.truth.string() + ": expected one row per window");
    }
    std::optional<ResidualMatrix> residuals;
    if (config.residuals) {
        auto table = csv::read_series(*config.residuals);
        if (table.n_u != spec.n_u() || table.values.cols() != spec.n()) {
            throw ConfigError(config.residuals->string() + ": series layout does not match the constraint");
        }
        residuals.emplace(Eigen::MatrixXd(table.values));
    }

    ReconcileOptions recon = config.recon;
    recon.threads = 1;
    const Reconciler reconciler(spec, std::move(residuals), recon);
    const std::vector<Method> methods = with_base_first(config.methods);

    std::vector<const SampleCloud*> cloud_ptrs;
    std::vector<Eigen::VectorXd> truths;
    for (std::size_t w = 0; w < clouds.size(); ++w) {
        cloud_ptrs.push_back(&clouds[w]);
        truths.push_back(truth.values.row(static_cast<Eigen::Index>(w)).transpose());
    }
    const WindowScores scores = score_windows(reconciler, methods, cloud_ptrs, truths, config.seed, config.verify,
                                              config.threads, "external " + config.constraint.label());

    ExternalResult result;
    result.windows = static_cast<int>(clouds.size());
    for (Method method : config.methods) {
        const auto m =
            static_cast<std::size_t>(std::find(methods.begin(), methods.end(), method) - methods.begin());
        const RelativeScores rel = aggregate(scores.reports[m], scores.reports[0]);
        result.rows.push_back(ExternalRow{method, rel.rel_es, rel.rel_crps_gm, mean_of(scores.seconds[m]),
                                          sum_of(scores.violations[m]), sum_of(scores.fallbacks[m])});
    }
    return result;
}

std::string format_external_table(const ExternalResult& result) {
    std::ostringstream os;
    os << "Relative scores vs base over " << result.windows << " windows\n";
    os << pad("method", 10) << "| " << lpad("RelCRPS", 9) << ' ' << lpad("RelES", 9) << ' '
       << lpad("sec/step", 11) << '\n';
    for (const auto& r : result.rows) {
        os << pad(std::string(to_string(r.method)), 10) << "| " << lpad(fixed(r.rel_crps_gm), 9) << ' '
           << lpad(fixed(r.rel_es), 9) << ' ' << lpad(scientific(r.mean_step_seconds), 11) << '\n';
    }
    return os.str();
}

std::string external_csv(const ExternalResult& result) {
    std::ostringstream os;
    os << "method,rel_crps_gm,rel_es,windows,coherence_violations,fallbacks\n";
    for (const auto& r : result.rows) {
        os << to_string(r.method) << ',' << csv::format_double(r.rel_crps_gm) << ','
           << csv::format_double(r.rel_es) << ',' << result.windows << ',' << r.coherence_violations << ','
           << r.fallbacks << '\n';
    }
    return os.str();
}

}  // namespace nlrecon
