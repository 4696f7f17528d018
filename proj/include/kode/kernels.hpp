#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace kode::kernels {

enum class KernelFamily { matern1, matern2, gaussian, linear };

std::string to_string(KernelFamily family);
KernelFamily family_from_string(std::string_view name);

/// Univariate Mercer kernel.
///
/// matern1:  (1 + sqrt(3) d / nu) exp(-sqrt(3) d / nu)
/// matern2:  (1 + sqrt(5) d / nu + 5 d^2 / (3 nu^2)) exp(-sqrt(5) d / nu)
/// gaussian: exp(-d^2 / (2 nu^2))
/// linear:   (u - 1/2)(v - 1/2)
///
/// When `rescale` holds (lo, hi), inputs are first mapped by (x - lo) / (hi - lo).
struct KernelSpec {
    KernelFamily family = KernelFamily::matern1;
    double bandwidth = 1.0;
    std::optional<std::pair<double, double>> rescale;

    void validate() const;
    double transform(double x) const;
    /// Kernel value on already-transformed inputs.
    double raw(double u, double v) const;
    double operator()(double u, double v) const { return raw(transform(u), transform(v)); }
};

double eval(const KernelSpec& spec, double u, double v);

/// K_k(u_k, v_k) * K_l(u_l, v_l).
double interaction_eval(const KernelSpec& spec_k, const KernelSpec& spec_l,
                        double u_k, double u_l, double v_k, double v_l);

/// One additive component of the ANOVA decomposition: a main effect (l < 0)
/// or an ordered interaction pair (k, l), k != l.
struct Component {
    int k = 0;
    int l = -1;
    bool is_main() const { return l < 0; }
};

/// Canonical layout: main effects 0..p-1, then ordered pairs
/// (0,1),...,(0,p-1),(1,0),(1,2),...,(p-1,p-2).
std::vector<Component> component_layout(int p);
int interaction_index(int p, int k, int l);
std::string component_label(const Component& c);  ///< 1-based, e.g. "x2" or "x1:x3"

/// Nonnegative component weights in the canonical layout (length p^2).
class ThetaVector {
public:
    ThetaVector() = default;
    explicit ThetaVector(int p, double fill = 0.0);
    ThetaVector(int p, Eigen::VectorXd values);

    int p() const { return p_; }
    Eigen::Index size() const { return values_.size(); }

    double& main(int k) { return values_(k); }
    double main(int k) const { return values_(k); }
    double& interaction(int k, int l) { return values_(interaction_index(p_, k, l)); }
    double interaction(int k, int l) const { return values_(interaction_index(p_, k, l)); }

    double& operator[](Eigen::Index m) { return values_(m); }
    double operator[](Eigen::Index m) const { return values_(m); }

    const Eigen::VectorXd& values() const { return values_; }
    Eigen::VectorXd& values() { return values_; }

    /// Indices with entry > threshold.
    std::vector<int> support(double threshold = 0.0) const;

private:
    int p_ = 0;
    Eigen::VectorXd values_;
};

/// sum_k theta_k K_k(u_k, v_k) + sum_{k != l} theta_kl K_k(u_k, v_k) K_l(u_l, v_l).
double weighted_eval(const ThetaVector& theta, std::span<const KernelSpec> specs,
                     std::span<const double> u, std::span<const double> v);

}  // namespace kode::kernels
