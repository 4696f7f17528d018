#pragma once

// Hand-rolled generators and small oracles shared by the unit tests.

#include "kode/gram.hpp"
#include "kode/kernels.hpp"
#include "kode/model.hpp"
#include "kode/sim.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

namespace kode::testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline Eigen::VectorXd normal_vector(Rng& rng, Eigen::Index n, double sd = 1.0) {
    std::normal_distribution<double> normal(0.0, sd);
    Eigen::VectorXd v(n);
    for (auto& x : v) x = normal(rng);
    return v;
}

inline Eigen::MatrixXd normal_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
    return m;
}

/// Random symmetric positive semidefinite matrix of the given rank.
inline Eigen::MatrixXd random_psd(Rng& rng, Eigen::Index n, Eigen::Index rank) {
    const Eigen::MatrixXd F = normal_matrix(rng, n, rank);
    return F * F.transpose() / static_cast<double>(rank);
}

/// Sorted distinct times in (0, 1].
inline Eigen::VectorXd random_times(Rng& rng, Eigen::Index n) {
    Eigen::VectorXd t(n);
    double acc = 0.0;
    for (auto& x : t) {
        acc += uniform(rng, 0.2, 1.0);
        x = acc;
    }
    return t / acc;
}

inline Eigen::VectorXd centered(const Eigen::VectorXd& y) {
    return (y.array() - y.mean()).matrix();
}

inline double min_eigenvalue(const Eigen::MatrixXd& m) {
    const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

/// Pipeline configuration used by tests that need a real enzyme-circuit fit.
inline model::PipelineConfig nfblb_config(std::uint64_t seed = 0) {
    model::PipelineConfig config;
    config.kernel_family = kernels::KernelFamily::matern1;
    config.solver.seed = seed;
    return config;
}

inline model::KodeModel fit_nfblb(std::uint64_t seed, double sigma = 0.1, int n = 40) {
    const auto scenario = sim::nfblb_scenario(n, sigma, seed);
    return model::fit_model(scenario.data, nfblb_config(seed));
}

/// Fresh scratch directory under the system temporary directory.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("kode_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace kode::testing
