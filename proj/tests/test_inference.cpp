#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kode/errors.hpp"
#include "kode/inference.hpp"
#include "kode/sim.hpp"
#include "test_support.hpp"

#include <cmath>

using namespace kode;
using kode::testing::Rng;

namespace {

Eigen::MatrixXd random_smoother(Rng& rng, Eigen::Index n) {
    return testing::random_psd(rng, n, n / 2) / static_cast<double>(n);
}

}  // namespace

TEST_CASE("least-squares refit") {
    Rng rng(1);
    const Eigen::MatrixXd G = testing::normal_matrix(rng, 30, 6);
    const Eigen::VectorXd z = testing::normal_vector(rng, 30);
    CHECK(inference::ls_refit({}, z, G).isZero(0.0));

    const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(G).householderQ() * Eigen::MatrixXd::Identity(30, 6);
    const Eigen::VectorXd ortho = inference::ls_refit({0, 1, 2, 3, 4, 5}, z, Q);
    CHECK((ortho - Q.transpose() * z).norm() <= 1e-12);

    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::MatrixXd Gt = testing::normal_matrix(rng, 25, 8);
        const Eigen::VectorXd zt = testing::normal_vector(rng, 25);
        const std::vector<int> support{1, 4, 6};
        Eigen::MatrixXd GM(25, 3);
        for (int a = 0; a < 3; ++a) GM.col(a) = Gt.col(support[a]);
        const Eigen::VectorXd oracle = (GM.transpose() * GM).ldlt().solve(GM.transpose() * zt);
        const Eigen::VectorXd theta = inference::ls_refit(support, zt, Gt);
        for (int a = 0; a < 3; ++a) CHECK(std::abs(theta(support[a]) - oracle(a)) <= 1e-10);
        CHECK(theta(0) == 0.0);
        CHECK(theta(7) == 0.0);
    }
    CHECK_THROWS_AS(inference::ls_refit({9}, z, G), RangeError);
    CHECK_THROWS_AS(inference::ls_refit({0}, Eigen::VectorXd::Zero(3), G), DimensionError);
}

TEST_CASE("distribution helpers match reference quantiles") {
    CHECK(inference::chi2_cdf(3.841459, 1.0) == doctest::Approx(0.95).epsilon(1e-6));
    CHECK(inference::chi2_cdf(18.307038, 10.0) == doctest::Approx(0.95).epsilon(1e-6));
    CHECK(inference::chi2_cdf(-1.0, 3.0) == 0.0);
    CHECK(inference::normal_quantile(0.05) == doctest::Approx(1.959964).epsilon(1e-6));
    CHECK_THROWS_AS(inference::normal_quantile(0.0), RangeError);
    CHECK_THROWS_AS(inference::chi2_cdf(1.0, 0.0), RangeError);
}

TEST_CASE("sphere draws are unit vectors and reproducible") {
    const Eigen::MatrixXd V = inference::sphere_draws(7, 50, 3);
    for (Eigen::Index d = 0; d < 50; ++d) CHECK(V.col(d).norm() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(V == inference::sphere_draws(7, 50, 3));
    CHECK(V != inference::sphere_draws(7, 50, 4));
}

TEST_CASE("cutoff solver matches bisection on the exact chi-square CDF") {
    Rng rng(12);
    for (Eigen::Index n : {5, 19, 20, 40, 200}) {
        Eigen::VectorXd maxima(300);
        for (auto& m : maxima) m = testing::uniform(rng, 0.0, 1.0) / std::sqrt(static_cast<double>(n)) * 3.0;
        maxima(0) = 0.0;
        const double alpha = 0.05;
        auto level = [&](double c) {
            double acc = 0.0;
            for (double m : maxima) acc += m > 0.0 ? inference::chi2_cdf((c / m) * (c / m), static_cast<double>(n)) : 1.0;
            return acc / static_cast<double>(maxima.size());
        };
        double lo = 0.0, hi = 10.0 * std::sqrt(static_cast<double>(n));
        while (hi - lo > 1e-10) {
            const double mid = 0.5 * (lo + hi);
            (level(mid) < 1.0 - alpha ? lo : hi) = mid;
        }
        CHECK(inference::cutoff_from_maxima(maxima, alpha, n) == doctest::Approx(lo).epsilon(1e-6));
    }
}

TEST_CASE("single-model cutoff approaches the normal quantile") {
    Rng rng(2);
    const Eigen::MatrixXd A = random_smoother(rng, 30);
    const auto cut = inference::c0_compute({A}, 0.05, 20000, 11);
    for (Eigen::Index i = 0; i < cut.per_row.size(); ++i) CHECK(std::abs(cut.per_row(i) - 1.959964) <= 0.06);
    CHECK(cut.global >= cut.per_row.maxCoeff() - 1e-6);
}

TEST_CASE("property: cutoffs are nonnegative, monotone and deterministic") {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::Index n = testing::uniform_int(rng, 6, 15);
        std::vector<Eigen::MatrixXd> family{random_smoother(rng, n)};
        const auto base = inference::c0_compute(family, 0.1, 2000, 5);
        for (int extra = 0; extra < 3; ++extra) family.push_back(random_smoother(rng, n));
        const auto bigger = inference::c0_compute(family, 0.1, 2000, 5);
        CHECK((bigger.per_row.array() >= base.per_row.array() - 1e-6).all());
        CHECK((base.per_row.array() >= 0.0).all());

        const auto loose = inference::c0_compute(family, 0.3, 2000, 5);
        CHECK((loose.per_row.array() <= bigger.per_row.array() + 1e-6).all());
        // Cutoffs shrink as alpha -> 1. Every normalized maximum is at most 1, so the
        // level equation forces chi2_cdf(c0^2, n) <= 1 - alpha.
        double previous = loose.per_row.maxCoeff();
        for (double alpha : {0.9, 0.99, 0.999, 0.99999}) {
            const double c = inference::c0_compute(family, alpha, 2000, 5).per_row.maxCoeff();
            CHECK(c <= previous + 1e-6);
            CHECK(inference::chi2_cdf(c * c, static_cast<double>(n)) <= (1.0 - alpha) * (1.0 + 1e-6));
            previous = c;
        }

        const auto again = inference::c0_compute(family, 0.1, 2000, 5);
        CHECK(again.per_row == bigger.per_row);
        CHECK(again.global == bigger.global);
    }
    CHECK_THROWS_AS(inference::c0_compute({}, 0.05, 100, 0), ConfigError);
    CHECK_THROWS_AS(inference::c0_compute({Eigen::MatrixXd::Identity(3, 3)}, 1.0, 100, 0), RangeError);
}

TEST_CASE("residual scale estimate") {
    Rng rng(4);
    const Eigen::VectorXd y = testing::centered(testing::normal_vector(rng, 20));
    CHECK(inference::sigma_hat(Eigen::MatrixXd::Zero(20, 20), y) == doctest::Approx(std::sqrt(y.squaredNorm() / 20)));
    CHECK(inference::sigma_hat(random_smoother(rng, 20), Eigen::VectorXd::Zero(20)) == 0.0);
    CHECK_THROWS_AS(inference::sigma_hat(Eigen::MatrixXd::Identity(20, 20), y), NumericalError);
}

TEST_CASE("model families") {
    CHECK(inference::all_subsets(0).size() == 1);
    CHECK(inference::all_subsets(9).size() == 512);
    CHECK(inference::all_subsets(9).contains({8, 0}));
    CHECK_THROWS_AS(inference::all_subsets(13), ConfigError);

    Rng rng(5);
    const Eigen::MatrixXd G = testing::normal_matrix(rng, 40, 16).cwiseAbs();
    const Eigen::VectorXd z = G.col(2) + 0.5 * G.col(9) + 0.1 * testing::normal_vector(rng, 40);
    const auto path = inference::lasso_path_family(z, G, {9, 2});
    CHECK(path.contains({2, 9}));
    CHECK(path.contains({}));
    CHECK(path.provenance == inference::FamilyProvenance::lasso_path);
}

TEST_CASE("band invariants on an enzyme-circuit fit") {
    const auto m = testing::fit_nfblb(21);
    const auto family = inference::all_subsets(9);
    inference::BandOptions opts;
    opts.draws = 2000;
    opts.seed = 9;
    for (int j = 0; j < 3; ++j) {
        const auto band = inference::confidence_band(m, j, family, opts);
        CHECK(band.family_size == 512);
        CHECK((band.lower.array() <= band.center.array()).all());
        CHECK((band.center.array() <= band.upper.array()).all());
        const Eigen::VectorXd expected = band.c0.cwiseProduct(band.row_norms) * band.sigma_hat;
        CHECK((band.half_width - expected).norm() <= 1e-12);
        CHECK((band.center - band.smoother * m.equations[j].y_centered).norm() <= 1e-12);
        CHECK((band.c0.array() >= inference::normal_quantile(0.05) - 0.1).all());

        const auto naive = inference::naive_band(band);
        CHECK((naive.half_width.array() <= band.half_width.array() + 1e-12).all());
        CHECK(naive.center == band.center);

        opts.global_cutoff = true;
        const auto global = inference::confidence_band(m, j, family, opts);
        CHECK((global.c0.array() == band.global_c0).all());
        opts.global_cutoff = false;
    }
    CHECK_THROWS_AS(inference::confidence_band(m, 3, family, opts), RangeError);
    CHECK_THROWS_AS(inference::confidence_band(m, 0, inference::ModelFamily{}, opts), ConfigError);
}

TEST_CASE("residual scale is calibrated on the enzyme circuit") {
    // Noise sd is 0.1; the mean estimate over independent data sets should sit near it.
    double total = 0.0;
    const int reps = 200;
    for (int seed = 0; seed < reps; ++seed) {
        const auto m = testing::fit_nfblb(static_cast<std::uint64_t>(1000 + seed));
        double per_fit = 0.0;
        for (const auto& eq : m.equations) {
            const Eigen::VectorXd theta = inference::ls_refit(eq.support, eq.z, eq.G);
            const Eigen::MatrixXd A = inference::model_smoother(theta, m.grams, eq.eta);
            per_fit += inference::sigma_hat(A, eq.y_centered);
        }
        total += per_fit / 3.0;
    }
    const double mean = total / reps;
    MESSAGE("mean residual scale " << mean);
    CHECK(mean >= 0.07);
    CHECK(mean <= 0.13);
}
