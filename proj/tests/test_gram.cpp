#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kode/errors.hpp"
#include "kode/gram.hpp"
#include "kode/model.hpp"
#include "kode/sim.hpp"
#include "test_support.hpp"

#include <cmath>

using namespace kode;
using kernels::KernelFamily;
using kernels::KernelSpec;
using kode::testing::Rng;

namespace {

/// Smoothed enzyme trajectories for one replicate.
struct Smoothed {
    Eigen::VectorXd times;
    double span = 0.0;
    std::vector<trajectory::TrajectoryFit> fits;
};

Smoothed smoothed_nfblb(int n, std::uint64_t seed) {
    const auto scenario = sim::nfblb_scenario(n, 0.05, seed);
    Smoothed s;
    s.times = scenario.data.times;
    s.span = s.times.maxCoeff();
    s.fits = model::fit_trajectories(s.times, scenario.data.replicates[0], model::PipelineConfig{});
    return s;
}

std::vector<KernelSpec> matern_kernels(int p, double nu = 1.0) {
    return std::vector<KernelSpec>(p, KernelSpec{KernelFamily::matern1, nu, std::nullopt});
}

gram::GramTensors small_grams(int nodes, int n = 12, std::uint64_t seed = 3) {
    const auto s = smoothed_nfblb(n, seed);
    gram::QuadratureSpec q;
    q.nodes = nodes;
    return gram::build_gram_tensors({s.fits}, s.times, s.span, matern_kernels(3, 0.5), q);
}

/// Linear trajectory x(t) = alpha (t - 1/2) realized as a linear-kernel smoother.
trajectory::TrajectoryFit linear_fit(const Eigen::VectorXd& times, const Eigen::VectorXd& a) {
    trajectory::TrajectoryFit fit;
    fit.kernel = KernelSpec{KernelFamily::linear, 1.0, std::nullopt};
    fit.train_times = times;
    fit.coefficients = a;
    fit.lambda = 1.0;
    return fit;
}

}  // namespace

TEST_CASE("B vector closed forms") {
    Eigen::VectorXd t(2);
    t << 0.4, 0.6;
    const Eigen::VectorXd B = gram::build_B(t, 1.0);
    CHECK(B(0) == doctest::Approx(-0.1));
    CHECK(B(1) == doctest::Approx(0.1));

    const Eigen::VectorXd grid = sim::arithmetic_grid(0.0, 0.05, 40);

    const Eigen::VectorXd B40 = gram::build_B(grid, 1.95);
    for (int i = 0; i < 40; ++i) CHECK(B40(i) == doctest::Approx((i / 20.0 - 0.975) / 1.95).epsilon(1e-12));

    CHECK(gram::build_B(Eigen::VectorXd::Constant(1, 0.3), 1.0)(0) == 0.0);
    // Standardization by the span.
    CHECK(gram::build_B(t * 50.0, 100.0)(1) == doctest::Approx(0.05));
}

TEST_CASE("trapezoid weights integrate indicator-weighted linear functions exactly") {
    Rng rng(1);
    const Eigen::VectorXd t = testing::random_times(rng, 7);
    const gram::QuadratureRule rule(t, gram::QuadratureSpec{});
    const Eigen::VectorXd g = (0.3 - 1.2 * rule.nodes().array()).matrix();  // g(s) = 0.3 - 1.2 s
    const auto G = [](double a) { return 0.3 * a - 0.6 * a * a; };
    double mean = 0.0;
    for (Eigen::Index i = 0; i < 7; ++i) mean += G(t(i)) / 7.0;
    for (Eigen::Index i = 0; i < 7; ++i) {
        CHECK(std::abs(rule.centered_weights().col(i).dot(g) - (G(t(i)) - mean)) <= 1e-13);
        CHECK(rule.partial_weights(t(i)).sum() == doctest::Approx(t(i)).epsilon(1e-13));
    }
    CHECK(rule.mean_weights().dot(g) == doctest::Approx(mean).epsilon(1e-12));
    gram::QuadratureSpec few;
    few.nodes = 15;
    CHECK_THROWS_AS(few.validate(), ConfigError);
}

TEST_CASE("constant kernel gives the outer product of B") {
    Rng rng(2);
    const Eigen::VectorXd t = testing::random_times(rng, 9);
    const Eigen::MatrixXd states = Eigen::MatrixXd::Constant(200, 2, 0.7);  // K(x, x) = 1 on every node pair
    const auto g = gram::build_gram_tensors_from_states(t, 1.0, states, 1, matern_kernels(2), gram::QuadratureSpec{});
    const Eigen::VectorXd B = gram::build_B(t, 1.0);
    CHECK((g.sigma_main[0] - B * B.transpose()).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK((g.sigma_inter[0] - B * B.transpose()).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("linear kernel on linear trajectories matches exact polynomial integrals") {
    Eigen::VectorXd t(3);
    t << 0.2, 0.55, 0.9;
    Eigen::VectorXd a(3);
    a << 0.4, -1.1, 2.3;
    const double alpha = a.dot((t.array() - 0.5).matrix());
    std::vector<trajectory::TrajectoryFit> fits{linear_fit(t, a), linear_fit(t, -2.0 * a)};
    const KernelSpec lin{KernelFamily::linear, 1.0, std::nullopt};

    for (int k = 0; k < 2; ++k) {
        const double slope = k == 0 ? alpha : -2.0 * alpha;
        // v_i = integral of (T_i - Tbar)(s) (x(s) - 1/2) ds with x(s) = slope (s - 1/2).
        const auto antiderivative = [slope](double u) { return slope * (u * u / 2 - u / 2) - u / 2; };
        Eigen::VectorXd v(3);
        for (int i = 0; i < 3; ++i) v(i) = antiderivative(t(i));
        v.array() -= v.mean();
        const Eigen::MatrixXd exact = v * v.transpose();
        for (int nodes : {16, 200}) {
            gram::QuadratureSpec q;
            q.nodes = nodes;
            const Eigen::MatrixXd sigma = gram::build_sigma_main(fits, t, 1.0, lin, k, q);
            CHECK((sigma - exact).cwiseAbs().maxCoeff() <= 1e-8);
        }
    }
}

TEST_CASE("quadrature refinement from 200 to 400 nodes on an enzyme fit") {
    const auto s = smoothed_nfblb(40, 5);
    gram::QuadratureSpec q200, q400;
    q200.nodes = 200;
    q400.nodes = 400;
    const auto kernels = matern_kernels(3);
    const auto g200 = gram::build_gram_tensors({s.fits}, s.times, s.span, kernels, q200);
    const auto g400 = gram::build_gram_tensors({s.fits}, s.times, s.span, kernels, q400);
    double worst = 0.0;
    for (int m = 0; m < 9; ++m) worst = std::max(worst, (g200.sigma(m) - g400.sigma(m)).cwiseAbs().maxCoeff());
    INFO("largest entry change: " << worst);
    CHECK(worst < 1e-6);
}

TEST_CASE("interaction Gram: identity factor, commutativity and index checks") {
    const auto s = smoothed_nfblb(12, 7);
    const gram::QuadratureSpec q;
    const KernelSpec m1{KernelFamily::matern1, 0.5, std::nullopt};
    const KernelSpec flat{KernelFamily::matern1, 1e300, std::nullopt};  // K == 1 to rounding
    const Eigen::MatrixXd s01 = gram::build_sigma_inter(s.fits, s.times, s.span, m1, m1, 0, 1, q);
    const Eigen::MatrixXd s10 = gram::build_sigma_inter(s.fits, s.times, s.span, m1, m1, 1, 0, q);
    CHECK((s01 - s10).cwiseAbs().maxCoeff() <= 1e-12);
    const Eigen::MatrixXd reduced = gram::build_sigma_inter(s.fits, s.times, s.span, flat, m1, 0, 1, q);
    const Eigen::MatrixXd main1 = gram::build_sigma_main(s.fits, s.times, s.span, m1, 1, q);
    CHECK((reduced - main1).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK_THROWS_AS(gram::build_sigma_inter(s.fits, s.times, s.span, m1, m1, 2, 2, q), RangeError);
}

TEST_CASE("assembled Sigma: zero, unit and weighted-kernel quadrature oracle") {
    const auto g = small_grams(200);
    CHECK(gram::assemble_sigma(kernels::ThetaVector(3), g).isZero(0.0));
    for (int m = 0; m < 9; ++m) {
        kernels::ThetaVector e(3);
        e[m] = 1.0;
        CHECK(gram::assemble_sigma(e, g) == g.sigma(m));
    }
    Rng rng(3);
    kernels::ThetaVector theta(3);
    for (Eigen::Index m = 0; m < 9; ++m) theta[m] = testing::uniform(rng, 0, 1);
    const Eigen::Index q = g.node_states.rows();
    Eigen::MatrixXd K(q, q);
    for (Eigen::Index a = 0; a < q; ++a) {
        for (Eigen::Index b = 0; b < q; ++b) {
            const Eigen::VectorXd u = g.node_states.row(a).transpose(), v = g.node_states.row(b).transpose();
            K(a, b) = kernels::weighted_eval(theta, g.kernels, std::span<const double>(u.data(), 3),
                                             std::span<const double>(v.data(), 3));
        }
    }
    const Eigen::MatrixXd direct = g.weights.transpose() * K * g.weights;
    CHECK((gram::assemble_sigma(theta, g) - direct).cwiseAbs().maxCoeff() <= 1e-8);

    theta[4] = -0.1;
    CHECK_THROWS_AS(gram::assemble_sigma(theta, g), DomainError);
    CHECK_NOTHROW(gram::combine_sigma(theta.values(), g));
}

TEST_CASE("property: Gram tensors are symmetric, PSD and centered") {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        const auto g = small_grams(200, 15, seed);
        CHECK(std::abs(g.B.sum()) <= 1e-12);
        for (int m = 0; m < g.component_count(); ++m) {
            const Eigen::MatrixXd& S = g.sigma(m);
            CHECK(S.allFinite());
            CHECK((S - S.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
            CHECK(testing::min_eigenvalue(S) >= -1e-8);
            // Columns of Sigma are integrals against T_i - Tbar, which sum to zero.
            CHECK(S.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-10);
        }
    }
}

TEST_CASE("property: assembly is linear and preserves PSD") {
    const auto g = small_grams(200);
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        kernels::ThetaVector t1(3), t2(3);
        for (Eigen::Index m = 0; m < 9; ++m) {
            t1[m] = testing::uniform(rng, 0, 1) < 0.5 ? 0.0 : testing::uniform(rng, 0, 2);
            t2[m] = testing::uniform(rng, 0, 2);
        }
        const double a = testing::uniform(rng, 0, 3), b = testing::uniform(rng, 0, 3);
        const kernels::ThetaVector combo(3, Eigen::VectorXd(a * t1.values() + b * t2.values()));
        const Eigen::MatrixXd lhs = gram::assemble_sigma(combo, g);
        const Eigen::MatrixXd rhs = a * gram::assemble_sigma(t1, g) + b * gram::assemble_sigma(t2, g);
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, rhs.cwiseAbs().maxCoeff()));
        CHECK(testing::min_eigenvalue(lhs) >= -1e-8);
    }
}

TEST_CASE("Monte Carlo quadrature agrees with the trapezoid rule") {
    const auto s = smoothed_nfblb(10, 9);
    const auto kernels = matern_kernels(3, 0.5);
    const auto trap = gram::build_gram_tensors({s.fits}, s.times, s.span, kernels, gram::QuadratureSpec{});
    const int reps = 20;
    std::vector<Eigen::MatrixXd> sum(9, Eigen::MatrixXd::Zero(10, 10)), sq(9, Eigen::MatrixXd::Zero(10, 10));
    for (int r = 0; r < reps; ++r) {
        gram::QuadratureSpec mc{gram::QuadratureScheme::monte_carlo, 1000, static_cast<std::uint64_t>(100 + r)};
        const auto g = gram::build_gram_tensors({s.fits}, s.times, s.span, kernels, mc);
        for (int m = 0; m < 9; ++m) {
            sum[m] += g.sigma(m);
            sq[m] += g.sigma(m).cwiseAbs2();
        }
    }
    long inside = 0, total = 0;
    for (int m = 0; m < 9; ++m) {
        const Eigen::MatrixXd mean = sum[m] / reps;
        const Eigen::MatrixXd var = (sq[m] / reps - mean.cwiseAbs2()) * (reps / (reps - 1.0));
        for (Eigen::Index a = 0; a < 10; ++a) {
            for (Eigen::Index b = 0; b < 10; ++b) {
                const double se = std::sqrt(std::max(var(a, b), 0.0) / reps);
                inside += std::abs(mean(a, b) - trap.sigma(m)(a, b)) <= 3.0 * se + 1e-12;
                ++total;
            }
        }
    }
    INFO("entries within 3 standard errors: " << inside << " of " << total);
    // Entries are strongly correlated, so require the nominal rate up to slack.
    CHECK(static_cast<double>(inside) / static_cast<double>(total) >= 0.95);
}

TEST_CASE("replicates stack into block-diagonal weights") {
    const auto s1 = smoothed_nfblb(10, 21), s2 = smoothed_nfblb(10, 22);
    const auto g = gram::build_gram_tensors({s1.fits, s2.fits}, s1.times, s1.span, matern_kernels(3),
                                            gram::QuadratureSpec{});
    CHECK(g.replicates == 2);
    CHECK(g.rows() == 20);
    CHECK(g.node_states.rows() == 400);
    CHECK(g.weights.block(0, 10, 200, 10).isZero(0.0));
    CHECK(g.weights.block(200, 0, 200, 10).isZero(0.0));
    CHECK(g.sigma(0).rows() == 20);
}
