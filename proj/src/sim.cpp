#include "kode/sim.hpp"

#include "kode/errors.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

namespace kode::sim {

namespace {

void require_exact_parameters(const ParameterMap& given, const std::vector<std::string>& names,
                              std::string_view system) {
    for (const auto& name : names) {
        if (!given.count(name)) {
            throw ConfigError(std::string(system) + ": missing parameter '" + name + "'");
        }
    }
    const std::set<std::string> allowed(names.begin(), names.end());
    for (const auto& [name, value] : given) {
        if (!allowed.count(name)) {
            throw ConfigError(std::string(system) + ": unknown parameter '" + name + "'");
        }
        if (!std::isfinite(value)) {
            throw ConfigError(std::string(system) + ": parameter '" + name + "' is not finite");
        }
    }
}

std::string lv_name(int which, int pair) {
    return "alpha" + std::to_string(which) + "_" + std::to_string(pair);
}

OdeSystem build_nfblb(const ParameterMap& prm) {
    require_exact_parameters(prm, nfblb_parameter_names(), "nfblb");
    const double c1 = prm.at("c1"), c2 = prm.at("c2"), c3 = prm.at("c3");
    const double c4 = prm.at("c4"), c5 = prm.at("c5"), c6 = prm.at("c6");
    const double K1 = prm.at("C1"), K2 = prm.at("C2"), K3 = prm.at("C3");
    const double K4 = prm.at("C4"), K5 = prm.at("C5"), K6 = prm.at("C6");
    const double e1 = prm.at("ct1"), e2 = prm.at("ct2"), x0 = prm.at("x0");

    OdeSystem system;
    system.kind = SystemKind::nfblb;
    system.name = "nfblb";
    system.dimension = 3;
    system.parameters = prm;
    system.rhs = [=](const Eigen::VectorXd& x) {
        Eigen::VectorXd dx(3);
        const double u1 = 1.0 - x(0), u2 = 1.0 - x(1), u3 = 1.0 - x(2);
        dx(0) = c1 * x0 * u1 / (u1 + K1) - e1 * c2 * x(0) / (x(0) + K2);
        dx(1) = c3 * u2 * x(2) / (u2 + K3) - e2 * c4 * x(1) / (x(1) + K4);
        dx(2) = c5 * x(0) * u3 / (u3 + K5) - c6 * x(1) * x(2) / (x(2) + K6);
        return dx;
    };
    return system;
}

OdeSystem build_lotka_volterra(const ParameterMap& prm, int dimension) {
    int pairs = 0;
    if (dimension >= 0) {
        if (dimension == 0 || dimension % 2 != 0) {
            throw DimensionError("lotka_volterra requires an even, positive dimension (got " +
                                 std::to_string(dimension) + ")");
        }
        pairs = dimension / 2;
    } else {
        while (prm.count(lv_name(1, pairs + 1))) ++pairs;
        if (pairs == 0) throw ConfigError("lotka_volterra: missing parameter 'alpha1_1'");
    }
    std::vector<std::string> names;
    for (int j = 1; j <= pairs; ++j) {
        for (int which = 1; which <= 4; ++which) names.push_back(lv_name(which, j));
    }
    require_exact_parameters(prm, names, "lotka_volterra");

    Eigen::MatrixXd alpha(4, pairs);
    for (int j = 0; j < pairs; ++j) {
        for (int which = 0; which < 4; ++which) alpha(which, j) = prm.at(lv_name(which + 1, j + 1));
    }

    OdeSystem system;
    system.kind = SystemKind::lotka_volterra;
    system.name = "lotka_volterra";
    system.dimension = 2 * pairs;
    system.parameters = prm;
    system.rhs = [alpha, pairs](const Eigen::VectorXd& x) {
        Eigen::VectorXd dx(2 * pairs);
        for (int j = 0; j < pairs; ++j) {
            const double prey = x(2 * j), predator = x(2 * j + 1);
            dx(2 * j) = alpha(0, j) * prey - alpha(1, j) * prey * predator;
            dx(2 * j + 1) = alpha(2, j) * prey * predator - alpha(3, j) * predator;
        }
        return dx;
    };
    return system;
}

}  // namespace

std::vector<std::string> nfblb_parameter_names() {
    return {"c1", "c2", "c3", "c4", "c5", "c6", "C1", "C2", "C3",
            "C4", "C5", "C6", "ct1", "ct2", "x0"};
}

ParameterMap nfblb_default_parameters(double stimulus) {
    ParameterMap prm{{"c1", 10}, {"c2", 10}, {"c3", 10}, {"c4", 1},   {"c5", 10},
                     {"c6", 10}, {"ct1", 1}, {"ct2", 0.2}, {"x0", stimulus}};
    for (int i = 1; i <= 6; ++i) prm["C" + std::to_string(i)] = 0.1;
    return prm;
}

ParameterMap lotka_volterra_default_parameters(int pairs) {
    if (pairs < 1) throw ConfigError("lotka_volterra: pairs must be positive");
    ParameterMap prm;
    const double base[4] = {1.1, 0.4, 0.1, 0.4};
    for (int j = 1; j <= pairs; ++j) {
        for (int which = 1; which <= 4; ++which) {
            prm[lv_name(which, j)] = base[which - 1] + 0.2 * (j - 1);
        }
    }
    return prm;
}

OdeSystem build_system(std::string_view name, const ParameterMap& parameters, int dimension) {
    if (name == "nfblb") {
        if (dimension >= 0 && dimension != 3) {
            throw DimensionError("nfblb is a three-node system (requested dimension " +
                                 std::to_string(dimension) + ")");
        }
        return build_nfblb(parameters);
    }
    if (name == "lotka_volterra" || name == "lotka-volterra") {
        return build_lotka_volterra(parameters, dimension);
    }
    throw ConfigError("unknown system '" + std::string(name) + "'");
}

OdeSystem make_custom_system(std::string name, int dimension, RightHandSide rhs) {
    if (dimension < 1) throw DimensionError("custom system needs a positive dimension");
    if (!rhs) throw ConfigError("custom system needs a right-hand side");
    OdeSystem system;
    system.kind = SystemKind::custom;
    system.name = std::move(name);
    system.dimension = dimension;
    system.rhs = std::move(rhs);
    return system;
}

Eigen::VectorXd Trajectory::at(double t) const {
    const double slack = 1e-9 * std::max(1.0, std::abs(t_end));
    if (t < t_start - slack || t > t_end + slack) {
        std::ostringstream msg;
        msg << "time " << t << " outside trajectory span [" << t_start << ", " << t_end << "]";
        throw RangeError(msg.str());
    }
    auto row = static_cast<Eigen::Index>(std::llround((t - t_start) / step));
    row = std::clamp<Eigen::Index>(row, 0, values.rows() - 1);
    return values.row(row).transpose();
}

Trajectory euler_solve(const OdeSystem& system, const Eigen::VectorXd& x0, double step,
                       double horizon, double t_start) {
    if (!(step > 0.0)) throw RangeError("euler_solve: step must be positive");
    if (!(horizon > 0.0)) throw RangeError("euler_solve: horizon must be positive");
    if (x0.size() != system.dimension) {
        throw DimensionError("euler_solve: initial state has length " + std::to_string(x0.size()) +
                             ", system dimension is " + std::to_string(system.dimension));
    }
    if (!x0.allFinite()) throw RangeError("euler_solve: initial state is not finite");

    // The small slack keeps e.g. 1.0 / 0.01 from truncating to 99.
    const auto steps = static_cast<Eigen::Index>(std::floor(horizon / step + 1e-9));
    Trajectory out;
    out.step = step;
    out.t_start = t_start;
    out.t_end = t_start + step * static_cast<double>(steps);
    out.values.resize(steps + 1, system.dimension);
    out.values.row(0) = x0.transpose();

    Eigen::VectorXd x = x0;
    for (Eigen::Index m = 0; m < steps; ++m) {
        x += step * system.rhs(x);
        if (!x.allFinite()) {
            std::ostringstream msg;
            msg << "euler_solve: state diverged at t = " << out.time(m + 1);
            throw NumericalError(msg.str());
        }
        out.values.row(m + 1) = x.transpose();
    }
    return out;
}

void Dataset::validate() const {
    if (times.size() < 2) throw DataError("dataset needs at least two time points");
    for (Eigen::Index i = 1; i < times.size(); ++i) {
        if (!(times(i) > times(i - 1))) {
            throw DataError("dataset times must be strictly increasing (row " + std::to_string(i) + ")");
        }
    }
    if (!times.allFinite()) throw DataError("dataset times must be finite");
    if (replicates.empty()) throw DataError("dataset has no replicates");
    for (std::size_t r = 0; r < replicates.size(); ++r) {
        const auto& y = replicates[r];
        if (y.rows() != times.size() || y.cols() != replicates.front().cols() || y.cols() < 1) {
            throw DataError("replicate " + std::to_string(r + 1) + " has inconsistent shape");
        }
        if (!y.allFinite()) throw DataError("replicate " + std::to_string(r + 1) + " has non-finite values");
    }
}

Dataset sample_observations(const Trajectory& trajectory, const Eigen::VectorXd& times,
                            const Eigen::VectorXd& noise_sd, std::uint64_t seed, int replicates) {
    const Eigen::Index p = trajectory.values.cols();
    if (noise_sd.size() != p) {
        throw DimensionError("sample_observations: noise_sd has length " + std::to_string(noise_sd.size()) +
                             ", trajectory has " + std::to_string(p) + " coordinates");
    }
    if ((noise_sd.array() < 0.0).any()) throw DomainError("sample_observations: negative noise sd");
    if (replicates < 1) throw ConfigError("sample_observations: replicates must be positive");

    Eigen::MatrixXd truth(times.size(), p);
    for (Eigen::Index i = 0; i < times.size(); ++i) truth.row(i) = trajectory.at(times(i)).transpose();

    Dataset data;
    data.times = times;
    data.noise_sd = noise_sd;
    data.initial_state = trajectory.values.row(0).transpose();
    for (int r = 0; r < replicates; ++r) {
        std::seed_seq sequence{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                               static_cast<std::uint32_t>(r)};
        std::mt19937_64 rng(sequence);
        std::normal_distribution<double> normal(0.0, 1.0);
        Eigen::MatrixXd y = truth;
        for (Eigen::Index i = 0; i < y.rows(); ++i) {
            for (Eigen::Index j = 0; j < p; ++j) y(i, j) += noise_sd(j) * normal(rng);
        }
        data.replicates.push_back(std::move(y));
    }
    return data;
}

Eigen::VectorXd arithmetic_grid(double first, double step, int count) {
    Eigen::VectorXd grid(count);
    for (int i = 0; i < count; ++i) grid(i) = first + step * i;
    return grid;
}

Scenario nfblb_scenario(int n, double sigma, std::uint64_t seed, double horizon) {
    std::seed_seq sequence{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x5eedu};
    std::mt19937_64 rng(sequence);
    std::uniform_real_distribution<double> stimulus(0.5, 1.5);

    Scenario s;
    s.system = build_system("nfblb", nfblb_default_parameters(stimulus(rng)));
    s.initial_state = Eigen::VectorXd::Zero(3);
    const Eigen::VectorXd times = arithmetic_grid(0.0, 1.0 / 20.0, n);
    s.truth = euler_solve(s.system, s.initial_state, 0.01, std::max(horizon, times(n - 1)));
    s.data = sample_observations(s.truth, times, Eigen::VectorXd::Constant(3, sigma), seed);
    return s;
}

Scenario lotka_volterra_scenario(int n, double sigma, std::uint64_t seed, int pairs, double span,
                                 double horizon) {
    std::seed_seq sequence{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x1f1fu};
    std::mt19937_64 rng(sequence);
    std::uniform_real_distribution<double> start(5.0, 15.0);

    Scenario s;
    s.system = build_system("lotka_volterra", lotka_volterra_default_parameters(pairs));
    s.initial_state.resize(2 * pairs);
    for (int j = 0; j < pairs; ++j) {
        const double x = start(rng);
        s.initial_state(2 * j) = x;
        s.initial_state(2 * j + 1) = x;
    }
    const Eigen::VectorXd times = Eigen::VectorXd::LinSpaced(n, 0.0, span);
    s.truth = euler_solve(s.system, s.initial_state, 0.01, std::max(horizon, span));
    s.data = sample_observations(s.truth, times, Eigen::VectorXd::Constant(2 * pairs, sigma), seed);
    return s;
}

}  // namespace kode::sim
