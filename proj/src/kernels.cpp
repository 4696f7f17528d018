#include "kode/kernels.hpp"

#include "kode/errors.hpp"

#include <cmath>

namespace kode::kernels {

std::string to_string(KernelFamily family) {
    switch (family) {
        case KernelFamily::matern1: return "matern1";
        case KernelFamily::matern2: return "matern2";
        case KernelFamily::gaussian: return "gaussian";
        case KernelFamily::linear: return "linear";
    }
    return "unknown";
}

KernelFamily family_from_string(std::string_view name) {
    if (name == "matern1") return KernelFamily::matern1;
    if (name == "matern2") return KernelFamily::matern2;
    if (name == "gaussian") return KernelFamily::gaussian;
    if (name == "linear") return KernelFamily::linear;
    throw ConfigError("unknown kernel family '" + std::string(name) + "'");
}

void KernelSpec::validate() const {
    if (family != KernelFamily::linear && !(bandwidth > 0.0 && std::isfinite(bandwidth))) {
        throw ConfigError("kernel bandwidth must be positive for " + to_string(family));
    }
    if (rescale && !(rescale->second > rescale->first)) {
        throw ConfigError("kernel rescale range must satisfy min < max");
    }
}

double KernelSpec::transform(double x) const {
    if (!rescale) return x;
    return (x - rescale->first) / (rescale->second - rescale->first);
}

double KernelSpec::raw(double u, double v) const {
    const double d = std::abs(u - v);
    switch (family) {
        case KernelFamily::matern1: {
            const double r = std::sqrt(3.0) * d / bandwidth;
            return (1.0 + r) * std::exp(-r);
        }
        case KernelFamily::matern2: {
            const double r = std::sqrt(5.0) * d / bandwidth;
            return (1.0 + r + 5.0 * d * d / (3.0 * bandwidth * bandwidth)) * std::exp(-r);
        }
        case KernelFamily::gaussian:
            return std::exp(-d * d / (2.0 * bandwidth * bandwidth));
        case KernelFamily::linear:
            return (u - 0.5) * (v - 0.5);
    }
    return 0.0;
}

double eval(const KernelSpec& spec, double u, double v) { return spec(u, v); }

double interaction_eval(const KernelSpec& spec_k, const KernelSpec& spec_l, double u_k, double u_l,
                        double v_k, double v_l) {
    return spec_k(u_k, v_k) * spec_l(u_l, v_l);
}

std::vector<Component> component_layout(int p) {
    std::vector<Component> layout;
    layout.reserve(static_cast<std::size_t>(p) * p);
    for (int k = 0; k < p; ++k) layout.push_back({k, -1});
    for (int k = 0; k < p; ++k) {
        for (int l = 0; l < p; ++l) {
            if (k != l) layout.push_back({k, l});
        }
    }
    return layout;
}

int interaction_index(int p, int k, int l) {
    if (k == l || k < 0 || l < 0 || k >= p || l >= p) {
        throw RangeError("interaction index requires distinct coordinates in [0, p)");
    }
    return p + k * (p - 1) + (l < k ? l : l - 1);
}

std::string component_label(const Component& c) {
    if (c.is_main()) return "x" + std::to_string(c.k + 1);
    return "x" + std::to_string(c.k + 1) + ":x" + std::to_string(c.l + 1);
}

ThetaVector::ThetaVector(int p, double fill)
    : p_(p), values_(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(p) * p, fill)) {
    if (fill < 0.0) throw DomainError("theta entries must be nonnegative");
}

ThetaVector::ThetaVector(int p, Eigen::VectorXd values) : p_(p), values_(std::move(values)) {
    if (values_.size() != static_cast<Eigen::Index>(p) * p) {
        throw DimensionError("theta vector must have p^2 = " + std::to_string(p * p) + " entries");
    }
}

std::vector<int> ThetaVector::support(double threshold) const {
    std::vector<int> out;
    for (Eigen::Index m = 0; m < values_.size(); ++m) {
        if (values_(m) > threshold) out.push_back(static_cast<int>(m));
    }
    return out;
}

double weighted_eval(const ThetaVector& theta, std::span<const KernelSpec> specs,
                     std::span<const double> u, std::span<const double> v) {
    const int p = theta.p();
    if (static_cast<int>(specs.size()) != p || static_cast<int>(u.size()) != p ||
        static_cast<int>(v.size()) != p) {
        throw DimensionError("weighted_eval: theta, specs and inputs disagree on p");
    }
    std::vector<double> single(p);
    for (int k = 0; k < p; ++k) single[k] = specs[k](u[k], v[k]);

    double total = 0.0;
    for (int k = 0; k < p; ++k) total += theta.main(k) * single[k];
    for (int k = 0; k < p; ++k) {
        for (int l = 0; l < p; ++l) {
            if (k != l) total += theta.interaction(k, l) * single[k] * single[l];
        }
    }
    return total;
}

}  // namespace kode::kernels
