#include "kode/benchmark.hpp"

#include "kode/errors.hpp"
#include "kode/io.hpp"
#include "kode/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

namespace kode::benchmark {

BenchmarkSpec nfblb_benchmark() {
    BenchmarkSpec spec;
    spec.name = "nfblb";
    spec.n = 40;
    spec.t_future = 2.0;
    spec.config.kernel_family = kernels::KernelFamily::matern1;
    spec.truth = network::nfblb_truth();
    return spec;
}

BenchmarkSpec lotka_volterra_benchmark() {
    BenchmarkSpec spec;
    spec.name = "lotka-volterra";
    spec.n = 200;
    spec.t_future = 105.0;
    spec.config.kernel_family = kernels::KernelFamily::linear;
    spec.truth = network::lotka_volterra_truth(5);
    return spec;
}

BenchmarkSpec find_benchmark(std::string_view name) {
    if (name == "nfblb") return nfblb_benchmark();
    if (name == "lotka-volterra" || name == "lotka_volterra") return lotka_volterra_benchmark();
    throw ConfigError("unknown benchmark '" + std::string(name) + "' (expected nfblb or lotka-volterra)");
}

ReplicationResult run_replication(const BenchmarkSpec& spec, double sigma, std::uint64_t seed) {
    if (!(sigma >= 0.0)) throw RangeError("benchmark: sigma must be nonnegative");
    const sim::Scenario scenario = spec.name == "nfblb"
                                       ? sim::nfblb_scenario(spec.n, sigma, seed, spec.t_future)
                                       : sim::lotka_volterra_scenario(spec.n, sigma, seed, 5, 100.0, spec.t_future);
    model::PipelineConfig config = spec.config;
    config.solver.seed = seed;
    const model::KodeModel fitted = model::fit_model(scenario.data, config);

    ReplicationResult result;
    result.sigma = sigma;
    result.seed = seed;
    result.selected = network::extract_regulators(fitted).adjacency;
    const auto recovery = network::fdp_power(result.selected, spec.truth);
    result.fdp = recovery.fdp;
    result.power = recovery.power;
    result.prediction_error = network::prediction_error(fitted, scenario.truth, spec.t_future);
    return result;
}

std::vector<double> parse_sigma_grid(std::string_view text) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = text.find(':', start);
        parts.push_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    try {
        if (parts.size() == 1) {
            const double v = io::parse_double(parts[0], "sigma grid");
            if (!(v >= 0.0)) throw ConfigError("sigma grid values must be nonnegative");
            return {v};
        }
        if (parts.size() != 3) throw ConfigError("sigma grid must be 'start:stop:count' or a single value");
        const double lo = io::parse_double(parts[0], "sigma grid start");
        const double hi = io::parse_double(parts[1], "sigma grid stop");
        const double count = io::parse_double(parts[2], "sigma grid count");
        if (!(count >= 1.0) || count != std::floor(count)) throw ConfigError("sigma grid count must be a positive integer");
        if (!(lo >= 0.0) || !(hi >= lo)) throw ConfigError("sigma grid needs 0 <= start <= stop");
        const int c = static_cast<int>(count);
        std::vector<double> grid(c);
        for (int i = 0; i < c; ++i) grid[i] = c == 1 ? lo : lo + (hi - lo) * i / (c - 1);
        return grid;
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
}

std::vector<ReplicationResult> run_sweep(const BenchmarkSpec& spec, const std::vector<double>& sigmas, int reps,
                                         std::uint64_t base_seed, int jobs,
                                         const std::function<void(const std::vector<ReplicationResult>&,
                                                                  const std::vector<bool>&)>& on_result) {
    if (sigmas.empty()) throw ConfigError("benchmark: empty sigma grid");
    if (reps < 1) throw ConfigError("benchmark: reps must be positive");
    if (jobs < 1) throw ConfigError("benchmark: jobs must be positive");
    const std::size_t total = sigmas.size() * static_cast<std::size_t>(reps);
    std::vector<ReplicationResult> results(total);
    std::vector<bool> done(total, false);
    std::atomic<std::size_t> next{0};
    std::mutex lock;
    std::exception_ptr failure;

    auto worker = [&] {
        while (true) {
            const std::size_t task = next.fetch_add(1);
            if (task >= total) return;
            {
                std::lock_guard<std::mutex> guard(lock);
                if (failure) return;
            }
            const double sigma = sigmas[task / reps];
            const std::uint64_t seed = base_seed + task % reps;
            try {
                ReplicationResult r = run_replication(spec, sigma, seed);
                std::lock_guard<std::mutex> guard(lock);
                results[task] = std::move(r);
                done[task] = true;
                if (on_result) on_result(results, done);
            } catch (...) {
                std::lock_guard<std::mutex> guard(lock);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };
    const int threads = std::min<int>(jobs, static_cast<int>(total));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    return results;
}

std::vector<SweepSummary> summarize(const std::vector<ReplicationResult>& results, const std::vector<bool>& done) {
    std::vector<SweepSummary> out;
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (!done[i]) continue;
        const auto& r = results[i];
        auto it = std::find_if(out.begin(), out.end(), [&](const SweepSummary& s) { return s.sigma == r.sigma; });
        if (it == out.end()) {
            out.push_back({r.sigma, 0, 0.0, 0.0, 0.0});
            it = std::prev(out.end());
        }
        it->reps += 1;
        it->prediction_error += r.prediction_error;
        it->fdp += r.fdp;
        it->power += r.power;
    }
    for (auto& s : out) {
        s.prediction_error /= s.reps;
        s.fdp /= s.reps;
        s.power /= s.reps;
    }
    return out;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) throw DimensionError("spearman: need two equal-length samples");
    const auto ra = average_ranks(a), rb = average_ranks(b);
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / ra.size();
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / rb.size();
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

}  // namespace kode::benchmark
