#include "kode/cli.hpp"

#include "kode/benchmark.hpp"
#include "kode/errors.hpp"
#include "kode/inference.hpp"
#include "kode/io.hpp"
#include "kode/model.hpp"
#include "kode/network.hpp"
#include "kode/sim.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <ostream>
#include <sstream>

namespace kode::cli {

namespace {

struct SimulateArgs {
    std::string system;
    int n = 0;
    double sigma = 0.1;
    std::uint64_t seed = 0;
    int replicates = 1;
    std::string out;
};

struct FitArgs {
    std::string data;
    std::string out;
    std::string kernel = "matern1";
    double kernel_bandwidth = 1.0;
    std::string trajectory_kernel = "matern1";
    std::string rescale = "auto";
    std::string quadrature = "trapezoid";
    int nodes = 0;
    int max_iterations = 10;
    int cv_folds = 10;
    int bandwidth_folds = 10;
    std::uint64_t seed = 0;
    bool nonneg_f = false;
    int freeze_tuning_after = 0;
    std::string eta_grid;
    std::string kappa_grid;
};

struct InferArgs {
    std::string model;
    std::string out_prefix;
    double alpha = 0.05;
    int draws = 10000;
    std::uint64_t seed = 0;
    bool global_cutoff = false;
    std::string family = "auto";
};

struct BenchmarkArgs {
    std::string name;
    std::string sigmas;
    int reps = 100;
    std::uint64_t seed = 1;
    std::string out;
    std::string summary;
    int jobs = 1;
};

/// "lo:hi:count" as a log-spaced grid.
std::vector<double> parse_log_grid(const std::string& text, const char* what) {
    const auto grid = benchmark::parse_sigma_grid(text);
    if (grid.size() == 1) return grid;
    std::vector<double> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(io::parse_double(item, what));
    return trajectory::log_grid(parts[0], parts[1], static_cast<int>(parts[2]));
}

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
    sim::Scenario scenario;
    if (a.system == "nfblb") {
        scenario = sim::nfblb_scenario(a.n > 0 ? a.n : 40, a.sigma, a.seed);
    } else if (a.system == "lotka-volterra" || a.system == "lotka_volterra") {
        scenario = sim::lotka_volterra_scenario(a.n > 0 ? a.n : 200, a.sigma, a.seed);
    } else {
        throw ConfigError("unknown system '" + a.system + "' (expected nfblb or lotka-volterra)");
    }
    sim::Dataset data = scenario.data;
    if (a.replicates != 1) {
        const Eigen::VectorXd sd = Eigen::VectorXd::Constant(scenario.system.dimension, a.sigma);
        data = sim::sample_observations(scenario.truth, scenario.data.times, sd, a.seed, a.replicates);
    }
    io::write_dataset_csv(a.out, data);
    out << "wrote " << a.out << ": n=" << data.n() << " p=" << data.p() << " R=" << data.replicate_count()
        << " sigma=" << io::format_double(a.sigma) << " seed=" << a.seed << '\n';
    return exit_ok;
}

int cmd_fit(const FitArgs& a, std::ostream& out) {
    const sim::Dataset data = io::read_dataset_csv(a.data);
    model::PipelineConfig config;
    config.kernel_family = kernels::family_from_string(a.kernel);
    config.kernel_bandwidth = a.kernel_bandwidth;
    config.trajectory_family = kernels::family_from_string(a.trajectory_kernel);
    if (a.rescale == "on") config.rescale_inputs = true;
    else if (a.rescale == "off") config.rescale_inputs = false;
    config.quadrature.scheme =
        a.quadrature == "monte-carlo" ? gram::QuadratureScheme::monte_carlo : gram::QuadratureScheme::trapezoid_grid;
    config.quadrature.nodes = a.nodes > 0 ? a.nodes : (a.quadrature == "monte-carlo" ? 1000 : 200);
    config.quadrature.seed = a.seed;
    config.solver.max_iterations = a.max_iterations;
    config.solver.cv_folds = a.cv_folds;
    config.solver.seed = a.seed;
    config.solver.freeze_tuning_after = a.freeze_tuning_after;
    if (!a.eta_grid.empty()) config.solver.eta_grid = parse_log_grid(a.eta_grid, "eta grid");
    if (!a.kappa_grid.empty()) config.solver.kappa_grid = parse_log_grid(a.kappa_grid, "kappa grid");
    config.bandwidth_folds = a.bandwidth_folds;
    config.nonneg_f = a.nonneg_f;

    const model::KodeModel fitted = model::fit_model(data, config);
    io::save_model(a.out, fitted);
    const auto layout = kernels::component_layout(fitted.p);
    out << "wrote " << a.out << ": p=" << fitted.p << " R=" << fitted.replicate_count() << '\n';
    for (const auto& eq : fitted.equations) {
        out << "  x" << eq.equation + 1 << ": support {";
        for (std::size_t i = 0; i < eq.support.size(); ++i) {
            out << (i ? ", " : "") << kernels::component_label(layout[eq.support[i]]);
        }
        out << "} size=" << eq.support.size() << " eta=" << io::format_double(eq.eta)
            << " kappa=" << io::format_double(eq.kappa) << " iterations=" << eq.iterations
            << (eq.converged ? "" : " (not converged)") << (eq.identifiability_warning ? " [collinear components]" : "")
            << '\n';
    }
    return exit_ok;
}

int cmd_infer(const InferArgs& a, std::ostream& out, std::ostream& err) {
    const model::KodeModel fitted = io::load_model(a.model);
    inference::BandOptions options;
    options.alpha = a.alpha;
    options.draws = a.draws;
    options.seed = a.seed;
    options.global_cutoff = a.global_cutoff;

    std::string summary = "variable,c0_min,c0_max,global_c0,sigma_hat,family_size,support_size\n";
    for (int j = 0; j < fitted.p; ++j) {
        const auto& eq = fitted.equations[j];
        inference::ModelFamily family;
        if (a.family == "all-subsets") family = inference::all_subsets(static_cast<int>(eq.theta.size()));
        else if (a.family == "lasso-path") family = inference::lasso_path_family(eq.z, eq.G, eq.support);
        else family = inference::default_family(eq, static_cast<int>(eq.theta.size()));
        if (eq.support.empty()) {
            err << "warning: x" << j + 1 << " has an empty support; emitting the intercept-only band\n";
        }
        options.seed = a.seed + static_cast<std::uint64_t>(j);
        const auto band = inference::confidence_band(fitted, j, family, options);
        for (int r = 0; r < fitted.replicate_count(); ++r) {
            std::string path = a.out_prefix + "_x" + std::to_string(j + 1);
            if (fitted.replicate_count() > 1) path += "_r" + std::to_string(r + 1);
            path += ".csv";
            io::write_text_file(path, io::format_band_csv(band, r));
        }
        summary += "x" + std::to_string(j + 1) + ',' + io::format_double(band.c0.minCoeff()) + ',' +
                   io::format_double(band.c0.maxCoeff()) + ',' + io::format_double(band.global_c0) + ',' +
                   io::format_double(band.sigma_hat) + ',' + std::to_string(band.family_size) + ',' +
                   std::to_string(band.support.size()) + '\n';
        out << "x" << j + 1 << ": c0 in [" << io::format_double(band.c0.minCoeff()) << ", "
            << io::format_double(band.c0.maxCoeff()) << "] sigma_hat=" << io::format_double(band.sigma_hat)
            << " family=" << band.family_size << '\n';
    }
    io::write_text_file(a.out_prefix + "_summary.csv", summary);
    return exit_ok;
}

std::string results_csv(const std::vector<benchmark::ReplicationResult>& results, const std::vector<bool>& done) {
    std::string text = "sigma,seed,prediction_error,fdp,power\n";
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (!done[i]) continue;
        const auto& r = results[i];
        text += io::format_double(r.sigma) + ',' + std::to_string(r.seed) + ',' + io::format_double(r.prediction_error) +
                ',' + io::format_double(r.fdp) + ',' + io::format_double(r.power) + '\n';
    }
    return text;
}

std::string summary_csv(const std::vector<benchmark::SweepSummary>& rows) {
    std::string text = "sigma,reps,prediction_error,fdp,power\n";
    for (const auto& s : rows) {
        text += io::format_double(s.sigma) + ',' + std::to_string(s.reps) + ',' + io::format_double(s.prediction_error) +
                ',' + io::format_double(s.fdp) + ',' + io::format_double(s.power) + '\n';
    }
    return text;
}

int cmd_benchmark(const BenchmarkArgs& a, std::ostream& out) {
    const auto spec = benchmark::find_benchmark(a.name);
    const std::string grid = !a.sigmas.empty() ? a.sigmas : (spec.name == "nfblb" ? "0.01:0.1:10" : "1:10:10");
    const auto sigmas = benchmark::parse_sigma_grid(grid);
    std::string summary_path = a.summary;
    if (summary_path.empty()) {
        std::filesystem::path p(a.out);
        summary_path = (p.parent_path() / (p.stem().string() + "_summary.csv")).string();
    }
    const auto results = benchmark::run_sweep(
        spec, sigmas, a.reps, a.seed, a.jobs,
        [&](const std::vector<benchmark::ReplicationResult>& partial, const std::vector<bool>& done) {
            io::write_text_file(a.out, results_csv(partial, done));
            io::write_text_file(summary_path, summary_csv(benchmark::summarize(partial, done)));
        });
    const std::vector<bool> all(results.size(), true);
    out << "wrote " << a.out << " (" << results.size() << " rows) and " << summary_path << '\n';
    for (const auto& s : benchmark::summarize(results, all)) {
        out << "  sigma=" << io::format_double(s.sigma) << " prediction_error=" << io::format_double(s.prediction_error)
            << " fdp=" << io::format_double(s.fdp) << " power=" << io::format_double(s.power) << '\n';
    }
    return exit_ok;
}

int exit_code_for(const Error& e) {
    switch (e.kind()) {
        case ErrorKind::config:
        case ErrorKind::domain: return exit_usage;
        case ErrorKind::data:
        case ErrorKind::dimension:
        case ErrorKind::range: return exit_data;
        case ErrorKind::numerical: return exit_numerical;
    }
    return exit_numerical;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Sparse kernel ODE estimation, network recovery and post-selection confidence bands", "kode"};
    app.set_config("--config", "", "Read options from a TOML/INI configuration file");
    app.allow_config_extras(false);
    app.require_subcommand(1);

    SimulateArgs sim_args;
    auto* simulate = app.add_subcommand("simulate", "Simulate a benchmark data set");
    simulate->add_option("--system", sim_args.system, "nfblb or lotka-volterra")->required();
    simulate->add_option("--n", sim_args.n, "Number of time points (default 40 / 200)")->check(CLI::NonNegativeNumber);
    simulate->add_option("--sigma", sim_args.sigma, "Noise standard deviation")->check(CLI::NonNegativeNumber);
    simulate->add_option("--seed", sim_args.seed, "Random seed");
    simulate->add_option("--replicates", sim_args.replicates, "Replicates from the same trajectory")
        ->check(CLI::PositiveNumber);
    simulate->add_option("--out", sim_args.out, "Output CSV")->required();

    FitArgs fit_args;
    auto* fit = app.add_subcommand("fit", "Fit a kernel ODE model to a data set");
    fit->add_option("--data", fit_args.data, "Dataset CSV")->required();
    fit->add_option("--out", fit_args.out, "Model file (JSON)")->required();
    fit->add_option("--kernel", fit_args.kernel, "Component kernel")
        ->check(CLI::IsMember({"matern1", "matern2", "gaussian", "linear"}));
    fit->add_option("--kernel-bandwidth", fit_args.kernel_bandwidth, "Component kernel bandwidth")
        ->check(CLI::PositiveNumber);
    fit->add_option("--trajectory-kernel", fit_args.trajectory_kernel, "Smoothing kernel over time")
        ->check(CLI::IsMember({"matern1", "matern2", "gaussian"}));
    fit->add_option("--rescale", fit_args.rescale, "Map states to [0,1] before the component kernels")
        ->check(CLI::IsMember({"auto", "on", "off"}));
    fit->add_option("--quadrature", fit_args.quadrature, "Integration scheme")
        ->check(CLI::IsMember({"trapezoid", "monte-carlo"}));
    fit->add_option("--nodes", fit_args.nodes, "Quadrature nodes (default 200 / 1000 draws)")
        ->check(CLI::NonNegativeNumber);
    fit->add_option("--max-iterations", fit_args.max_iterations, "Outer iterations")->check(CLI::PositiveNumber);
    fit->add_option("--cv-folds", fit_args.cv_folds, "Folds for kappa")->check(CLI::Range(2, 1000));
    fit->add_option("--bandwidth-folds", fit_args.bandwidth_folds, "Folds for the smoothing bandwidth")
        ->check(CLI::Range(2, 1000));
    fit->add_option("--seed", fit_args.seed, "Seed for CV folds and Monte Carlo quadrature");
    fit->add_flag("--nonneg-f", fit_args.nonneg_f, "Clamp F at zero when extrapolating");
    fit->add_option("--freeze-tuning-after", fit_args.freeze_tuning_after,
                    "Keep eta and kappa fixed after this many iterations (0: never)")
        ->check(CLI::NonNegativeNumber);
    fit->add_option("--eta-grid", fit_args.eta_grid, "lo:hi:count log-spaced eta candidates");
    fit->add_option("--kappa-grid", fit_args.kappa_grid, "lo:hi:count log-spaced kappa candidates");

    InferArgs infer_args;
    auto* infer = app.add_subcommand("infer", "Post-selection confidence bands for a fitted model");
    infer->add_option("--model", infer_args.model, "Model file")->required();
    infer->add_option("--out-prefix", infer_args.out_prefix, "Prefix for band CSV files")->required();
    infer->add_option("--alpha", infer_args.alpha, "Miscoverage level in (0,1)")
        ->check(CLI::Validator(
            [](std::string& s) -> std::string {
                double v = 0.0;
                try {
                    v = std::stod(s);
                } catch (...) {
                    return "alpha must be a number";
                }
                return v > 0.0 && v < 1.0 ? std::string() : std::string("alpha must lie strictly between 0 and 1");
            },
            "(0,1)"));
    infer->add_option("--draws", infer_args.draws, "Monte Carlo sphere draws")->check(CLI::Range(1000, 100000000));
    infer->add_option("--seed", infer_args.seed, "Seed for the sphere draws");
    infer->add_flag("--global-cutoff", infer_args.global_cutoff, "Use one cutoff for all time points");
    infer->add_option("--family", infer_args.family, "Candidate model family")
        ->check(CLI::IsMember({"auto", "all-subsets", "lasso-path"}));

    BenchmarkArgs bench_args;
    auto* bench = app.add_subcommand("benchmark", "Replicated noise sweep on a benchmark system");
    bench->add_option("--name", bench_args.name, "nfblb or lotka-volterra")->required();
    bench->add_option("--sigmas", bench_args.sigmas, "start:stop:count noise grid");
    bench->add_option("--reps", bench_args.reps, "Replications per noise level")->check(CLI::PositiveNumber);
    bench->add_option("--seed", bench_args.seed, "Seed of the first replication");
    bench->add_option("--out", bench_args.out, "Per-replication CSV")->required();
    bench->add_option("--summary", bench_args.summary, "Summary CSV (default <out>_summary.csv)");
    bench->add_option("--jobs", bench_args.jobs, "Concurrent replications")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_usage;
    }

    try {
        if (*simulate) return cmd_simulate(sim_args, out);
        if (*fit) return cmd_fit(fit_args, out);
        if (*infer) return cmd_infer(infer_args, out, err);
        if (*bench) return cmd_benchmark(bench_args, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_numerical;
    }
    return exit_usage;
}

}  // namespace kode::cli
