#include "kode/inference.hpp"

#include "kode/errors.hpp"
#include "kode/trajectory.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <sstream>

namespace kode::inference {

bool ModelFamily::contains(const std::vector<int>& support) const {
    std::vector<int> sorted(support);
    std::sort(sorted.begin(), sorted.end());
    return std::find(models.begin(), models.end(), sorted) != models.end();
}

ModelFamily all_subsets(int component_count) {
    if (component_count < 0) throw RangeError("all_subsets: negative component count");
    if (component_count > 12) {
        throw ConfigError("all_subsets: " + std::to_string(component_count) +
                          " components exceed the enumeration limit of 12");
    }
    ModelFamily family;
    family.provenance = FamilyProvenance::all_subsets;
    const unsigned total = 1u << component_count;
    family.models.reserve(total);
    for (unsigned mask = 0; mask < total; ++mask) {
        std::vector<int> support;
        for (int m = 0; m < component_count; ++m) {
            if (mask & (1u << m)) support.push_back(m);
        }
        family.models.push_back(std::move(support));
    }
    return family;
}

ModelFamily lasso_path_family(const Eigen::VectorXd& z, const Eigen::MatrixXd& G, const std::vector<int>& selected,
                              int points) {
    if (points < 1) throw ConfigError("lasso path needs at least one point");
    if (z.size() != G.rows()) throw DimensionError("lasso path: z and G disagree in rows");
    const auto n = static_cast<double>(G.rows());
    const Eigen::MatrixXd H = G.transpose() * G;
    const Eigen::VectorXd g = G.transpose() * z;
    // Coordinate m stays at zero from theta = 0 while n kappa >= 2 g_m.
    const double kappa_max = std::max(2.0 * g.maxCoeff() / n, 1e-300);
    auto grid = trajectory::log_grid(kappa_max * 1e-4, kappa_max, points);
    std::sort(grid.begin(), grid.end(), std::greater<>());

    std::set<std::vector<int>> seen;
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(G.cols());
    for (double kappa : grid) {
        solver::lasso_gram(H, g, n * kappa, theta);
        std::vector<int> support;
        for (Eigen::Index m = 0; m < theta.size(); ++m) {
            if (theta(m) > 0.0) support.push_back(static_cast<int>(m));
        }
        seen.insert(std::move(support));
    }
    std::vector<int> sel(selected);
    std::sort(sel.begin(), sel.end());
    seen.insert(sel);
    ModelFamily family;
    family.provenance = FamilyProvenance::lasso_path;
    family.models.assign(seen.begin(), seen.end());
    return family;
}

ModelFamily default_family(const solver::EquationFit& fit, int component_count) {
    if (component_count <= 12) return all_subsets(component_count);
    return lasso_path_family(fit.z, fit.G, fit.support);
}

Eigen::VectorXd ls_refit(const std::vector<int>& support, const Eigen::VectorXd& z, const Eigen::MatrixXd& G) {
    if (z.size() != G.rows()) throw DimensionError("ls_refit: z and G disagree in rows");
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(G.cols());
    if (support.empty()) return theta;
    Eigen::MatrixXd GM(G.rows(), static_cast<Eigen::Index>(support.size()));
    for (std::size_t a = 0; a < support.size(); ++a) {
        if (support[a] < 0 || support[a] >= G.cols()) throw RangeError("ls_refit: support index out of range");
        GM.col(static_cast<Eigen::Index>(a)) = G.col(support[a]);
    }
    const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(GM);
    const Eigen::VectorXd coef = cod.solve(z);
    for (std::size_t a = 0; a < support.size(); ++a) theta(support[a]) = coef(static_cast<Eigen::Index>(a));
    return theta;
}

Eigen::MatrixXd model_smoother(const Eigen::VectorXd& theta, const gram::GramTensors& grams, double eta) {
    const Eigen::MatrixXd sigma = gram::combine_sigma(theta, grams);
    return solver::smoothing_matrix(eta, sigma, solver::split_basis(grams.B).Q2);
}

double chi2_cdf(double x, double dof) {
    if (!(dof > 0.0)) throw RangeError("chi2_cdf: degrees of freedom must be positive");
    if (x <= 0.0) return 0.0;
    if (std::isinf(x)) return 1.0;
    return boost::math::gamma_p(0.5 * dof, 0.5 * x);
}

namespace {

/// Chi-square CDF for a fixed number of degrees of freedom. For larger dof it
/// is tabulated once on [0, x_max] (CDF and density) and evaluated by cubic
/// Hermite interpolation, accurate to ~1e-12; beyond x_max the CDF is 1 to
/// within 1e-17.
class Chi2Table {
public:
    explicit Chi2Table(double dof) : dof_(dof) {
        if (dof < kMinTabulatedDof) return;
        const double a = 0.5 * dof;
        x_max_ = 2.0 * boost::math::gamma_q_inv(a, 1e-17);
        step_ = x_max_ / kIntervals;
        cdf_.resize(kIntervals + 1);
        pdf_.resize(kIntervals + 1);
        for (int k = 0; k <= kIntervals; ++k) {
            const double x = step_ * k;
            cdf_[k] = boost::math::gamma_p(a, 0.5 * x);
            pdf_[k] = k == 0 ? 0.0 : 0.5 * boost::math::gamma_p_derivative(a, 0.5 * x);
        }
    }

    double operator()(double x) const {
        if (!(x > 0.0)) return 0.0;
        if (cdf_.empty()) return chi2_cdf(x, dof_);
        if (x >= x_max_) return 1.0;
        const double u = x / step_;
        const auto k = std::min(static_cast<int>(u), kIntervals - 1);
        const double t = u - k, t2 = t * t, t3 = t2 * t;
        return (2 * t3 - 3 * t2 + 1) * cdf_[k] + (t3 - 2 * t2 + t) * step_ * pdf_[k] + (-2 * t3 + 3 * t2) * cdf_[k + 1] +
               (t3 - t2) * step_ * pdf_[k + 1];
    }

    double x_max() const { return cdf_.empty() ? std::numeric_limits<double>::infinity() : x_max_; }

private:
    static constexpr double kMinTabulatedDof = 20.0;
    static constexpr int kIntervals = 4096;
    double dof_ = 1.0;
    double x_max_ = 0.0;
    double step_ = 0.0;
    std::vector<double> cdf_, pdf_;
};

double solve_cutoff(const Eigen::VectorXd& maxima, double alpha, Eigen::Index n, const Chi2Table& cdf) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw RangeError("cutoff: alpha must lie in (0, 1)");
    if (maxima.size() < 1) throw ConfigError("cutoff: no Monte Carlo draws");
    const double target = 1.0 - alpha;
    // D(c / c_v) = F_chi2((c / c_v)^2): precompute 1 / c_v^2 (infinite for c_v = 0).
    Eigen::ArrayXd inv_sq(maxima.size());
    for (Eigen::Index v = 0; v < maxima.size(); ++v) {
        inv_sq(v) = maxima(v) > 0.0 ? 1.0 / (maxima(v) * maxima(v)) : std::numeric_limits<double>::infinity();
    }
    const double x_max = cdf.x_max();
    auto gap = [&](double c) {
        const double c2 = c * c;
        double acc = 0.0;
        for (Eigen::Index v = 0; v < inv_sq.size(); ++v) {
            const double x = c2 * inv_sq(v);
            acc += x >= x_max ? 1.0 : cdf(x);
        }
        return acc / static_cast<double>(inv_sq.size()) - target;
    };
    const double dof = static_cast<double>(n);
    double lo = 0.0, hi = 10.0 * std::sqrt(dof);
    if (gap(lo) >= 0.0) return 0.0;
    if (gap(hi) < 0.0) {
        std::ostringstream msg;
        msg << "cutoff: bracket [" << lo << ", " << hi << "] does not contain the " << target << " level";
        throw NumericalError(msg.str());
    }
    std::uintmax_t iterations = 200;
    const auto bracket = boost::math::tools::toms748_solve(
        gap, lo, hi, [](double a, double b) { return b - a <= 1e-7; }, iterations);
    return 0.5 * (bracket.first + bracket.second);
}

}  // namespace

double cutoff_from_maxima(const Eigen::VectorXd& maxima, double alpha, Eigen::Index n) {
    if (n < 1) throw ConfigError("cutoff: dimension must be positive");
    return solve_cutoff(maxima, alpha, n, Chi2Table(static_cast<double>(n)));
}

Eigen::MatrixXd sphere_draws(Eigen::Index n, int draws, std::uint64_t seed) {
    if (n < 1 || draws < 1) throw ConfigError("sphere draws need positive dimension and count");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd V(n, draws);
    for (int d = 0; d < draws; ++d) {
        double norm = 0.0;
        do {
            for (Eigen::Index i = 0; i < n; ++i) V(i, d) = normal(rng);
            norm = V.col(d).norm();
        } while (!(norm > 0.0));
        V.col(d) /= norm;
    }
    return V;
}

Cutoffs c0_compute(const std::vector<Eigen::MatrixXd>& smoothers, double alpha, int draws, std::uint64_t seed) {
    if (smoothers.empty()) throw ConfigError("c0: empty model family");
    if (!(alpha > 0.0 && alpha < 1.0)) throw RangeError("c0: alpha must lie in (0, 1)");
    if (draws < 1) throw ConfigError("c0: need at least one draw");
    const Eigen::Index n = smoothers.front().cols();
    const Eigen::Index rows = smoothers.front().rows();
    const Eigen::MatrixXd V = sphere_draws(n, draws, seed);
    Eigen::MatrixXd maxima = Eigen::MatrixXd::Zero(rows, draws);
    for (const auto& A : smoothers) {
        if (A.cols() != n || A.rows() != rows) throw DimensionError("c0: smoothers differ in shape");
        Eigen::MatrixXd normalized = A;
        for (Eigen::Index i = 0; i < rows; ++i) {
            const double norm = normalized.row(i).norm();
            if (norm > 0.0) normalized.row(i) /= norm;
            else normalized.row(i).setZero();
        }
        maxima = maxima.cwiseMax((normalized * V).cwiseAbs());
    }
    const Chi2Table cdf(static_cast<double>(n));
    Cutoffs out;
    out.per_row.resize(rows);
    for (Eigen::Index i = 0; i < rows; ++i) out.per_row(i) = solve_cutoff(maxima.row(i).transpose(), alpha, n, cdf);
    out.global = solve_cutoff(maxima.colwise().maxCoeff().transpose(), alpha, n, cdf);
    return out;
}

double sigma_hat(const Eigen::MatrixXd& A, const Eigen::VectorXd& y_centered) {
    if (A.rows() != A.cols() || A.rows() != y_centered.size()) throw DimensionError("sigma_hat: shapes disagree");
    const double trace = static_cast<double>(A.rows()) - A.trace();
    if (trace <= 1e-8) throw NumericalError("sigma_hat: degenerate smoother, tr(I - A) is not positive");
    return std::sqrt((A * y_centered - y_centered).squaredNorm() / trace);
}

double normal_quantile(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw RangeError("normal_quantile: alpha must lie in (0, 1)");
    return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), 1.0 - 0.5 * alpha);
}

ConfidenceBand confidence_band(const model::KodeModel& model, int equation, const ModelFamily& family,
                               const BandOptions& options) {
    if (equation < 0 || equation >= model.p) throw RangeError("band: equation index out of range");
    if (!(options.alpha > 0.0 && options.alpha < 1.0)) throw RangeError("band: alpha must lie in (0, 1)");
    if (family.models.empty()) throw ConfigError("band: empty model family");
    const auto& fit = model.equations[equation];
    const auto& grams = model.grams;
    const Eigen::VectorXd& u = fit.y_centered;

    ConfidenceBand band;
    band.equation = equation;
    band.alpha = options.alpha;
    band.support = fit.support;
    band.family_size = family.size();
    band.refit_theta = ls_refit(fit.support, fit.z, fit.G);
    band.smoother = model_smoother(band.refit_theta, grams, fit.eta);

    std::vector<Eigen::MatrixXd> smoothers;
    smoothers.reserve(family.size() + 1);
    smoothers.push_back(band.smoother);
    std::vector<int> selected(fit.support);
    std::sort(selected.begin(), selected.end());
    for (const auto& M : family.models) {
        if (M == selected) continue;
        smoothers.push_back(model_smoother(ls_refit(M, fit.z, fit.G), grams, fit.eta));
    }

    const Eigen::Index N = u.size();
    band.center = band.smoother * u;
    band.sigma_hat = sigma_hat(band.smoother, u);
    band.row_norms = band.smoother.rowwise().norm();
    const Cutoffs cut = c0_compute(smoothers, options.alpha, options.draws, options.seed);
    band.global_c0 = cut.global;
    band.c0 = options.global_cutoff ? Eigen::VectorXd::Constant(N, cut.global) : cut.per_row;
    band.half_width = band.c0.cwiseProduct(band.row_norms) * band.sigma_hat;
    band.lower = band.center - band.half_width;
    band.upper = band.center + band.half_width;

    const Eigen::Index n = grams.n();
    band.times.resize(N);
    band.replicate.resize(N);
    for (Eigen::Index row = 0; row < N; ++row) {
        band.times(row) = model.times(row % n);
        band.replicate(row) = static_cast<int>(row / n);
    }
    return band;
}

ConfidenceBand naive_band(const ConfidenceBand& band) {
    ConfidenceBand out = band;
    const double z = normal_quantile(band.alpha);
    out.c0.setConstant(z);
    out.global_c0 = z;
    out.half_width = band.row_norms * (z * band.sigma_hat);
    out.lower = out.center - out.half_width;
    out.upper = out.center + out.half_width;
    return out;
}

}  // namespace kode::inference
