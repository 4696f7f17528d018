#include "kode/trajectory.hpp"

#include "kode/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace kode::trajectory {

double TrajectoryFit::operator()(double t, bool* extrapolated) const {
    if (extrapolated) {
        const double hi = train_times.size() ? train_times.maxCoeff() : 0.0;
        *extrapolated = t < 0.0 || t > hi;
    }
    double value = 0.0;
    for (Eigen::Index i = 0; i < coefficients.size(); ++i) {
        value += coefficients(i) * kernel(t, train_times(i));
    }
    return value;
}

std::vector<double> log_grid(double lo, double hi, int count) {
    if (count < 1 || !(lo > 0.0) || !(hi >= lo)) throw ConfigError("log_grid: need 0 < lo <= hi and count >= 1");
    std::vector<double> grid(count);
    if (count == 1) {
        grid[0] = lo;
        return grid;
    }
    const double a = std::log(lo), b = std::log(hi);
    for (int i = 0; i < count; ++i) grid[i] = std::exp(a + (b - a) * i / (count - 1));
    return grid;
}

std::vector<double> default_lambda_grid() { return log_grid(1e-8, 1e1, 30); }

std::vector<double> default_nu_grid(double span) {
    return log_grid(0.02 * span, 2.0 * span, 10);
}

Eigen::MatrixXd time_gram(const kernels::KernelSpec& kernel, const Eigen::VectorXd& times) {
    const Eigen::Index n = times.size();
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) K(i, j) = K(j, i) = kernel(times(i), times(j));
    }
    return K;
}

namespace {

void check_grid(const std::vector<double>& grid, const char* what) {
    if (grid.empty()) throw ConfigError(std::string(what) + " grid is empty");
    for (double g : grid) {
        if (!(g > 0.0) || !std::isfinite(g)) throw ConfigError(std::string(what) + " grid must be positive");
    }
}

}  // namespace

TrajectoryFit fit_trajectory(const Eigen::VectorXd& times, const Eigen::VectorXd& y,
                             const kernels::KernelSpec& kernel, const std::vector<double>& lambda_grid) {
    const Eigen::Index n = times.size();
    if (n < 2) throw DataError("fit_trajectory: need at least two observations");
    if (y.size() != n) throw DimensionError("fit_trajectory: times and values differ in length");
    check_grid(lambda_grid, "lambda");
    kernel.validate();

    const Eigen::MatrixXd K = time_gram(kernel, times);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(K);
    if (eig.info() != Eigen::Success) throw NumericalError("fit_trajectory: eigen decomposition failed");
    const Eigen::VectorXd ev = eig.eigenvalues().cwiseMax(0.0);
    const Eigen::MatrixXd& U = eig.eigenvectors();
    const Eigen::VectorXd proj = U.transpose() * y;

    std::vector<double> descending(lambda_grid);
    std::sort(descending.begin(), descending.end(), std::greater<>());

    double best_score = std::numeric_limits<double>::infinity();
    double best_lambda = 0.0;
    // Walk from the largest lambda so that a tie keeps the larger one.
    for (double candidate : descending) {
        const double shift = static_cast<double>(n) * candidate;
        double rss = 0.0, trace = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double resid_weight = shift / (ev(i) + shift);
            rss += std::pow(resid_weight * proj(i), 2);
            trace += resid_weight;
        }
        const double score = static_cast<double>(n) * rss / (trace * trace);
        if (score < best_score) {
            best_score = score;
            best_lambda = candidate;
        }
    }
    if (!std::isfinite(best_score)) {
        throw NumericalError("fit_trajectory: no finite GCV score on the lambda grid");
    }

    const double shift = static_cast<double>(n) * best_lambda;
    TrajectoryFit fit;
    fit.kernel = kernel;
    fit.train_times = times;
    fit.lambda = best_lambda;
    fit.gcv_score = best_score;
    fit.coefficients = U * (proj.array() / (eig.eigenvalues().array() + shift)).matrix();
    fit.fitted_values = K * fit.coefficients;
    return fit;
}

double evaluate_trajectory(const TrajectoryFit& fit, double t, bool* extrapolated) {
    return fit(t, extrapolated);
}

double bandwidth_cv_error(const Eigen::VectorXd& times, const Eigen::VectorXd& y,
                          const kernels::KernelSpec& kernel, int folds,
                          const std::vector<double>& lambda_grid) {
    const Eigen::Index n = times.size();
    if (folds < 2) throw ConfigError("bandwidth CV needs at least two folds");
    if (folds > n) throw ConfigError("bandwidth CV: more folds (" + std::to_string(folds) +
                                     ") than observations (" + std::to_string(n) + ")");
    const double lambda = fit_trajectory(times, y, kernel, lambda_grid).lambda;
    const Eigen::MatrixXd K = time_gram(kernel, times);

    double sse = 0.0;
    for (int f = 0; f < folds; ++f) {
        const Eigen::Index lo = f * n / folds, hi = (f + 1) * n / folds;
        std::vector<Eigen::Index> train;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (i < lo || i >= hi) train.push_back(i);
        }
        const auto m = static_cast<Eigen::Index>(train.size());
        Eigen::MatrixXd Ktr(m, m);
        Eigen::VectorXd ytr(m);
        for (Eigen::Index a = 0; a < m; ++a) {
            ytr(a) = y(train[a]);
            for (Eigen::Index b = 0; b < m; ++b) Ktr(a, b) = K(train[a], train[b]);
        }
        Ktr.diagonal().array() += static_cast<double>(m) * lambda;
        Eigen::LLT<Eigen::MatrixXd> llt(Ktr);
        if (llt.info() != Eigen::Success) throw NumericalError("bandwidth CV: ridge system not positive definite");
        const Eigen::VectorXd a = llt.solve(ytr);
        for (Eigen::Index i = lo; i < hi; ++i) {
            double pred = 0.0;
            for (Eigen::Index b = 0; b < m; ++b) pred += a(b) * K(i, train[b]);
            sse += (y(i) - pred) * (y(i) - pred);
        }
    }
    return sse / static_cast<double>(n);
}

kernels::KernelSpec select_bandwidth(const Eigen::VectorXd& times, const Eigen::VectorXd& y,
                                     kernels::KernelFamily family, const std::vector<double>& nu_grid,
                                     int folds, const std::vector<double>& lambda_grid) {
    check_grid(nu_grid, "bandwidth");
    if (folds < 2) throw ConfigError("bandwidth CV needs at least two folds");
    if (folds > times.size()) {
        throw ConfigError("bandwidth CV: more folds (" + std::to_string(folds) + ") than observations (" +
                          std::to_string(times.size()) + ")");
    }
    std::vector<double> descending(nu_grid);
    std::sort(descending.begin(), descending.end(), std::greater<>());
    kernels::KernelSpec best{family, descending.front(), std::nullopt};
    if (descending.size() == 1) return best;

    double best_error = std::numeric_limits<double>::infinity();
    for (double nu : descending) {
        const kernels::KernelSpec candidate{family, nu, std::nullopt};
        const double err = bandwidth_cv_error(times, y, candidate, folds, lambda_grid);
        if (err < best_error) {
            best_error = err;
            best = candidate;
        }
    }
    return best;
}

}  // namespace kode::trajectory
