#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kode/errors.hpp"
#include "kode/sim.hpp"
#include "test_support.hpp"

#include <cmath>

using namespace kode;
using kode::testing::Rng;

namespace {

double terminal_error(const sim::OdeSystem& system, const Eigen::VectorXd& x0, double step, double horizon,
                      const Eigen::VectorXd& reference) {
    const auto traj = sim::euler_solve(system, x0, step, horizon);
    return (traj.values.bottomRows(1).transpose() - reference).norm();
}

/// Least-squares slope of log(error) against log(step).
double loglog_slope(const std::vector<double>& steps, const std::vector<double>& errors) {
    const auto m = static_cast<double>(steps.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const double x = std::log(steps[i]), y = std::log(errors[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

}  // namespace

TEST_CASE("build_system accepts the published enzyme parameters") {
    const auto prm = sim::nfblb_default_parameters(1.0);
    CHECK(prm.at("c1") == 10.0);
    CHECK(prm.at("c4") == 1.0);
    CHECK(prm.at("C3") == 0.1);
    CHECK(prm.at("ct1") == 1.0);
    CHECK(prm.at("ct2") == 0.2);
    const auto system = sim::build_system("nfblb", prm);
    CHECK(system.dimension == 3);
    CHECK(system.kind == sim::SystemKind::nfblb);
    CHECK(system(Eigen::VectorXd::Zero(3)).size() == 3);
}

TEST_CASE("build_system accepts the first predator-prey pair") {
    const auto prm = sim::lotka_volterra_default_parameters(5);
    CHECK(prm.at("alpha1_1") == doctest::Approx(1.1));
    CHECK(prm.at("alpha2_1") == doctest::Approx(0.4));
    CHECK(prm.at("alpha3_1") == doctest::Approx(0.1));
    CHECK(prm.at("alpha4_1") == doctest::Approx(0.4));
    CHECK(prm.at("alpha1_3") == doctest::Approx(1.5));
    const auto system = sim::build_system("lotka-volterra", prm);
    CHECK(system.dimension == 10);
}

TEST_CASE("build_system rejects bad dimensions and parameter sets") {
    CHECK_THROWS_AS(sim::build_system("nfblb", sim::nfblb_default_parameters(), 4), DimensionError);
    CHECK_THROWS_AS(sim::build_system("lotka_volterra", sim::lotka_volterra_default_parameters(1), 3),
                    DimensionError);

    auto missing = sim::nfblb_default_parameters();
    missing.erase("C5");
    try {
        sim::build_system("nfblb", missing);
        FAIL("expected a configuration error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("C5") != std::string::npos);
    }
    auto extra = sim::nfblb_default_parameters();
    extra["c7"] = 1.0;
    try {
        sim::build_system("nfblb", extra);
        FAIL("expected a configuration error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("c7") != std::string::npos);
    }
    CHECK_THROWS_AS(sim::build_system("repressilator", {}), ConfigError);
}

TEST_CASE("predator-prey fixed point gives a constant trajectory") {
    const auto system = sim::build_system("lotka_volterra", sim::lotka_volterra_default_parameters(1));
    Eigen::VectorXd x0(2);
    x0 << 4.0, 2.75;
    const auto traj = sim::euler_solve(system, x0, 0.01, 10.0);
    for (Eigen::Index r = 0; r < traj.size(); ++r) {
        CHECK(traj.values(r, 0) == doctest::Approx(4.0).epsilon(1e-12));
        CHECK(traj.values(r, 1) == doctest::Approx(2.75).epsilon(1e-12));
    }
}

TEST_CASE("enzyme circuit settles at the fixed point of its kinetics") {
    // Independent oracle: Newton iteration on the hand-written Michaelis-Menten
    // right-hand side with unit stimulus (finite-difference Jacobian).
    const auto rhs = [](const Eigen::Vector3d& x) {
        const double K = 0.1;
        const Eigen::Vector3d u = Eigen::Vector3d::Ones() - x;
        return Eigen::Vector3d(10 * u(0) / (u(0) + K) - 10 * x(0) / (x(0) + K),
                               10 * u(1) * x(2) / (u(1) + K) - 0.2 * x(1) / (x(1) + K),
                               10 * x(0) * u(2) / (u(2) + K) - 10 * x(1) * x(2) / (x(2) + K));
    };
    Eigen::Vector3d fixed(0.5, 0.9, 0.1);
    for (int it = 0; it < 50; ++it) {
        Eigen::Matrix3d J;
        for (int k = 0; k < 3; ++k) {
            const Eigen::Vector3d e = Eigen::Vector3d::Unit(k) * 1e-7;
            J.col(k) = (rhs(fixed + e) - rhs(fixed - e)) / 2e-7;
        }
        fixed -= J.fullPivLu().solve(rhs(fixed));
    }
    REQUIRE(rhs(fixed).norm() < 1e-10);

    const auto system = sim::build_system("nfblb", sim::nfblb_default_parameters(1.0));
    const auto traj = sim::euler_solve(system, Eigen::VectorXd::Zero(3), 0.01, 20.0);
    const Eigen::VectorXd last = traj.values.bottomRows(1).transpose();
    CHECK((last - Eigen::VectorXd(fixed)).norm() < 1e-6);
    // Equilibrium: the last two time units no longer move.
    CHECK((last - traj.at(18.0)).norm() < 1e-6);
}

TEST_CASE("Euler row count and grid") {
    const auto system = sim::make_custom_system("decay", 1, [](const Eigen::VectorXd& x) { return Eigen::VectorXd(-x); });
    const auto traj = sim::euler_solve(system, Eigen::VectorXd::Ones(1), 0.01, 1.0);
    CHECK(traj.size() == 101);
    CHECK(traj.time(100) == doctest::Approx(1.0));
    const auto odd = sim::euler_solve(system, Eigen::VectorXd::Ones(1), 0.3, 1.0);
    CHECK(odd.size() == 4);
    // x_{m+1} = x_m (1 - h)
    CHECK(traj.values(100, 0) == doctest::Approx(std::pow(0.99, 100)).epsilon(1e-12));
    CHECK_THROWS(sim::euler_solve(system, Eigen::VectorXd::Ones(1), 0.0, 1.0));
    CHECK_THROWS(sim::euler_solve(system, Eigen::VectorXd::Ones(1), 0.01, -1.0));
}

TEST_CASE("Euler divergence is reported as a numerical error") {
    const auto blowup = sim::make_custom_system("blowup", 1, [](const Eigen::VectorXd& x) {
        return Eigen::VectorXd(x.array().square() * 10.0);
    });
    CHECK_THROWS_AS(sim::euler_solve(blowup, Eigen::VectorXd::Constant(1, 10.0), 0.01, 100.0), NumericalError);
}

TEST_CASE("halving the Euler step halves the terminal error") {
    const auto system = sim::build_system("nfblb", sim::nfblb_default_parameters(1.0));
    const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(3);
    const Eigen::VectorXd reference = sim::euler_solve(system, x0, 1e-4, 1.0).values.bottomRows(1).transpose();
    const double coarse = terminal_error(system, x0, 0.01, 1.0, reference);
    const double fine = terminal_error(system, x0, 0.005, 1.0, reference);
    const double ratio = fine / coarse;
    CHECK(ratio >= 0.4);
    CHECK(ratio <= 0.6);
}

TEST_CASE("property: Euler global error is first order for both benchmarks") {
    const std::vector<double> steps{0.04, 0.02, 0.01};
    {
        // The enzyme kinetics have rates near 100, so the asymptotic regime starts below h = 0.01.
        const std::vector<double> fine_steps{0.004, 0.002, 0.001};
        const auto system = sim::build_system("nfblb", sim::nfblb_default_parameters(1.2));
        const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(3, 0.2);
        const Eigen::VectorXd ref = sim::euler_solve(system, x0, 1e-6, 1.0).values.bottomRows(1).transpose();
        std::vector<double> err;
        for (double h : fine_steps) err.push_back(terminal_error(system, x0, h, 1.0, ref));
        const double slope = loglog_slope(fine_steps, err);
        CHECK(slope >= 0.8);
        CHECK(slope <= 1.2);
    }
    {
        const auto system = sim::build_system("lotka_volterra", sim::lotka_volterra_default_parameters(2));
        const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(4, 8.0);
        const Eigen::VectorXd ref = sim::euler_solve(system, x0, 1e-4, 2.0).values.bottomRows(1).transpose();
        std::vector<double> err;
        for (double h : steps) err.push_back(terminal_error(system, x0, h, 2.0, ref));
        const double slope = loglog_slope(steps, err);
        CHECK(slope >= 0.8);
        CHECK(slope <= 1.2);
    }
}

TEST_CASE("property: enzyme states stay in [0, 1.5] on the unit interval") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const double stimulus = testing::uniform(rng, 0.5, 1.5);
        const auto system = sim::build_system("nfblb", sim::nfblb_default_parameters(stimulus));
        const auto traj = sim::euler_solve(system, Eigen::VectorXd::Zero(3), 0.01, 1.0);
        CHECK(traj.values.allFinite());
        CHECK(traj.values.minCoeff() >= 0.0);
        CHECK(traj.values.maxCoeff() <= 1.5);
    }
}

TEST_CASE("noise-free sampling reproduces the trajectory") {
    const auto system = sim::build_system("nfblb", sim::nfblb_default_parameters(1.0));
    const auto traj = sim::euler_solve(system, Eigen::VectorXd::Zero(3), 0.01, 2.0);
    const Eigen::VectorXd times = sim::arithmetic_grid(0.0, 0.05, 40);
    const auto data = sim::sample_observations(traj, times, Eigen::VectorXd::Zero(3), 3);
    REQUIRE(data.replicate_count() == 1);
    CHECK(data.replicates[0].rows() == 40);
    CHECK(data.replicates[0].cols() == 3);
    for (Eigen::Index i = 0; i < 40; ++i) {
        CHECK((data.replicates[0].row(i).transpose() - traj.at(times(i))).norm() == 0.0);
    }
}

TEST_CASE("enzyme protocol yields a 40 x 3 data set on t_i = (i - 1) / 20") {
    const auto scenario = sim::nfblb_scenario(40, 0.1, 7);
    CHECK(scenario.data.n() == 40);
    CHECK(scenario.data.p() == 3);
    CHECK(scenario.data.times(0) == 0.0);
    CHECK(scenario.data.times(39) == doctest::Approx(39.0 / 20.0));
    const double stimulus = scenario.system.parameters.at("x0");
    CHECK(stimulus >= 0.5);
    CHECK(stimulus <= 1.5);
    CHECK(scenario.initial_state.isZero(0.0));
    CHECK(scenario.truth.t_end >= 2.0);
}

TEST_CASE("predator-prey protocol yields a 200 x 10 data set with paired initial states") {
    const auto scenario = sim::lotka_volterra_scenario(200, 1.0, 5);
    CHECK(scenario.data.n() == 200);
    CHECK(scenario.data.p() == 10);
    CHECK(scenario.data.times(199) == doctest::Approx(100.0));
    for (int j = 0; j < 5; ++j) {
        CHECK(scenario.initial_state(2 * j) == scenario.initial_state(2 * j + 1));
        CHECK(scenario.initial_state(2 * j) >= 5.0);
        CHECK(scenario.initial_state(2 * j) <= 15.0);
    }
}

TEST_CASE("noise generator has mean zero") {
    const auto system = sim::build_system("nfblb", sim::nfblb_default_parameters(1.0));
    const auto traj = sim::euler_solve(system, Eigen::VectorXd::Zero(3), 0.01, 2.0);
    const Eigen::VectorXd times = sim::arithmetic_grid(0.0, 0.05, 40);
    const double sd = 0.1;
    const int reps = 834;  // 834 * 40 * 3 >= 1e5 draws
    const auto data = sim::sample_observations(traj, times, Eigen::VectorXd::Constant(3, sd), 99, reps);
    double sum = 0.0, sq = 0.0;
    long count = 0;
    for (const auto& y : data.replicates) {
        for (Eigen::Index i = 0; i < y.rows(); ++i) {
            const Eigen::VectorXd e = y.row(i).transpose() - traj.at(times(i));
            sum += e.sum();
            sq += e.squaredNorm();
            count += e.size();
        }
    }
    CHECK(count >= 100000);
    CHECK(std::abs(sum / count) <= 3.0 * sd / std::sqrt(static_cast<double>(count)));
    CHECK(std::sqrt(sq / count) == doctest::Approx(sd).epsilon(0.02));
}

TEST_CASE("sampling outside the trajectory span is a range error") {
    const auto system = sim::build_system("nfblb", sim::nfblb_default_parameters(1.0));
    const auto traj = sim::euler_solve(system, Eigen::VectorXd::Zero(3), 0.01, 1.0);
    Eigen::VectorXd times(2);
    times << 0.5, 1.5;
    CHECK_THROWS_AS(sim::sample_observations(traj, times, Eigen::VectorXd::Zero(3), 0), RangeError);
}

TEST_CASE("property: sampling is deterministic and replicates use separate streams") {
    const auto a = sim::nfblb_scenario(40, 0.1, 21);
    const auto b = sim::nfblb_scenario(40, 0.1, 21);
    CHECK(a.data.replicates[0] == b.data.replicates[0]);
    CHECK(a.truth.values == b.truth.values);
    const auto c = sim::nfblb_scenario(40, 0.1, 22);
    CHECK(a.data.replicates[0] != c.data.replicates[0]);

    const auto multi = sim::sample_observations(a.truth, a.data.times, Eigen::VectorXd::Constant(3, 0.1), 4, 3);
    REQUIRE(multi.replicate_count() == 3);
    CHECK(multi.replicates[0] != multi.replicates[1]);
    CHECK(multi.replicates[1] != multi.replicates[2]);
    const auto again = sim::sample_observations(a.truth, a.data.times, Eigen::VectorXd::Constant(3, 0.1), 4, 3);
    for (int r = 0; r < 3; ++r) CHECK(multi.replicates[r] == again.replicates[r]);
}

TEST_CASE("dataset validation") {
    sim::Dataset data;
    data.times = Eigen::VectorXd::LinSpaced(3, 0.0, 1.0);
    data.replicates = {Eigen::MatrixXd::Zero(3, 2)};
    CHECK_NOTHROW(data.validate());
    auto unsorted = data;
    unsorted.times(1) = 2.0;
    CHECK_THROWS_AS(unsorted.validate(), DataError);
    auto ragged = data;
    ragged.replicates.push_back(Eigen::MatrixXd::Zero(3, 3));
    CHECK_THROWS_AS(ragged.validate(), DataError);
    auto tiny = data;
    tiny.times = Eigen::VectorXd::Zero(1);
    tiny.replicates = {Eigen::MatrixXd::Zero(1, 2)};
    CHECK_THROWS_AS(tiny.validate(), DataError);
    auto nan = data;
    nan.replicates[0](0, 0) = std::nan("");
    CHECK_THROWS_AS(nan.validate(), DataError);
}
