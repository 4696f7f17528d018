#pragma once

#include "kode/model.hpp"
#include "kode/network.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace kode::benchmark {

/// A simulated study: scenario generator, fitting settings and scoring rules.
struct BenchmarkSpec {
    std::string name;
    int n = 40;
    double t_future = 2.0;
    model::PipelineConfig config;
    network::Adjacency truth;
};

/// Enzyme circuit: n = 40, matern1 components, prediction at t = 2.
BenchmarkSpec nfblb_benchmark();
/// Five predator-prey pairs: n = 200 on [0, 100], linear components,
/// prediction at t = 105.
BenchmarkSpec lotka_volterra_benchmark();
/// Looks a benchmark up by name ("nfblb", "lotka-volterra" / "lotka_volterra").
BenchmarkSpec find_benchmark(std::string_view name);

struct ReplicationResult {
    double sigma = 0.0;
    std::uint64_t seed = 0;
    double prediction_error = 0.0;
    double fdp = 0.0;
    double power = 0.0;
    network::Adjacency selected;
};

/// Simulates one data set with the given noise level and seed, fits it and
/// scores prediction and recovery.
ReplicationResult run_replication(const BenchmarkSpec& spec, double sigma, std::uint64_t seed);

/// "start:stop:count" (count evenly spaced values, ends included) or a single value.
std::vector<double> parse_sigma_grid(std::string_view text);

/// Every (sigma, replication) pair; replication r uses seed base_seed + r for
/// every sigma so that noise levels share their random inputs. Results come
/// back in (sigma, replication) order; `on_result` runs after each completed
/// replication under an internal lock.
std::vector<ReplicationResult> run_sweep(const BenchmarkSpec& spec, const std::vector<double>& sigmas, int reps,
                                         std::uint64_t base_seed, int jobs,
                                         const std::function<void(const std::vector<ReplicationResult>&,
                                                                  const std::vector<bool>&)>& on_result = {});

struct SweepSummary {
    double sigma = 0.0;
    int reps = 0;
    double prediction_error = 0.0;
    double fdp = 0.0;
    double power = 0.0;
};

/// Means per noise level, in grid order; incomplete entries are skipped.
std::vector<SweepSummary> summarize(const std::vector<ReplicationResult>& results, const std::vector<bool>& done);

/// Spearman rank correlation (average ranks for ties).
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace kode::benchmark
