#include "kode/model.hpp"

#include "kode/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace kode::model {

void PipelineConfig::validate() const {
    if (!lambda_grid.empty()) {
        for (double l : lambda_grid) {
            if (!(l > 0.0)) throw ConfigError("lambda grid must be positive");
        }
    } else {
        throw ConfigError("lambda grid is empty");
    }
    for (double nu : nu_grid) {
        if (!(nu > 0.0)) throw ConfigError("bandwidth grid must be positive");
    }
    if (bandwidth_folds < 2) throw ConfigError("bandwidth_folds must be at least 2");
    if (kernel_family != kernels::KernelFamily::linear && !(kernel_bandwidth > 0.0)) {
        throw ConfigError("component kernel bandwidth must be positive");
    }
    quadrature.validate();
    solver.validate();
}

std::vector<trajectory::TrajectoryFit> fit_trajectories(const Eigen::VectorXd& times, const Eigen::MatrixXd& y,
                                                        const PipelineConfig& config) {
    if (y.rows() != times.size()) throw DimensionError("fit_trajectories: times and observations disagree");
    const double span = times.maxCoeff() - times.minCoeff();
    const auto nu_grid = config.nu_grid.empty() ? trajectory::default_nu_grid(span) : config.nu_grid;
    std::vector<trajectory::TrajectoryFit> fits;
    fits.reserve(static_cast<std::size_t>(y.cols()));
    for (Eigen::Index k = 0; k < y.cols(); ++k) {
        const Eigen::VectorXd col = y.col(k);
        const auto kernel = trajectory::select_bandwidth(times, col, config.trajectory_family, nu_grid,
                                                         config.bandwidth_folds, config.lambda_grid);
        fits.push_back(trajectory::fit_trajectory(times, col, kernel, config.lambda_grid));
    }
    return fits;
}

std::vector<kernels::KernelSpec> component_kernels(const Eigen::MatrixXd& node_states, const PipelineConfig& config) {
    const bool rescale = config.rescale_inputs.value_or(config.kernel_family == kernels::KernelFamily::linear);
    std::vector<kernels::KernelSpec> specs;
    for (Eigen::Index k = 0; k < node_states.cols(); ++k) {
        kernels::KernelSpec spec{config.kernel_family, config.kernel_bandwidth, std::nullopt};
        if (rescale) {
            double lo = node_states.col(k).minCoeff(), hi = node_states.col(k).maxCoeff();
            if (!(hi > lo)) {
                lo -= 0.5;
                hi += 0.5;
            }
            spec.rescale = std::make_pair(lo, hi);
        }
        spec.validate();
        specs.push_back(spec);
    }
    return specs;
}

namespace {

Eigen::MatrixXd stacked_node_states(const KodeModel& model, const gram::QuadratureRule& rule) {
    const Eigen::Index m = rule.node_count();
    Eigen::MatrixXd states(m * model.replicate_count(), model.p);
    for (int r = 0; r < model.replicate_count(); ++r) {
        states.block(r * m, 0, m, model.p) = gram::trajectory_node_states(model.trajectories[r], rule, model.time_span);
    }
    return states;
}

}  // namespace

gram::GramTensors rebuild_grams(const KodeModel& model) {
    const Eigen::VectorXd times01 = model.times / model.time_span;
    const gram::QuadratureRule rule(times01, model.quadrature);
    return gram::build_gram_tensors_from_states(times01, model.time_span, stacked_node_states(model, rule),
                                                model.replicate_count(), model.kernels, model.quadrature);
}

void KodeModel::prepare() {
    node_coefficients.clear();
    for (const auto& eq : equations) {
        if (eq.c.size() != grams.rows()) throw DimensionError("model: representer coefficients have the wrong length");
        node_coefficients.push_back(grams.weights * eq.c);
    }
}

namespace {

/// Kernel sections K_k(x_k, X_qk) over all nodes, one column per coordinate.
Eigen::MatrixXd kernel_sections(const KodeModel& model, const Eigen::VectorXd& state) {
    if (state.size() != model.p) throw DimensionError("model: state has the wrong dimension");
    const Eigen::Index nodes = model.grams.node_states.rows();
    Eigen::MatrixXd sections(nodes, model.p);
    for (int k = 0; k < model.p; ++k) {
        const auto& spec = model.kernels[k];
        const double u = spec.transform(state(k));
        for (Eigen::Index q = 0; q < nodes; ++q) {
            sections(q, k) = spec.raw(u, spec.transform(model.grams.node_states(q, k)));
        }
    }
    return sections;
}

double combine(const KodeModel& model, int j, const Eigen::MatrixXd& sections,
               const std::vector<kernels::Component>& layout) {
    const auto& eq = model.equations[j];
    const Eigen::VectorXd& wc = model.node_coefficients[j];
    double f = eq.b;
    for (int m = 0; m < static_cast<int>(layout.size()); ++m) {
        const double w = eq.theta[m];
        if (w == 0.0) continue;
        const auto& comp = layout[m];
        if (comp.is_main()) f += w * sections.col(comp.k).dot(wc);
        else f += w * sections.col(comp.k).cwiseProduct(sections.col(comp.l)).dot(wc);
    }
    return f;
}

}  // namespace

double KodeModel::evaluate_f(int equation, const Eigen::VectorXd& state) const {
    if (equation < 0 || equation >= p) throw RangeError("model: equation index out of range");
    if (node_coefficients.size() != equations.size()) throw ConfigError("model: prepare() has not been called");
    const double f = combine(*this, equation, kernel_sections(*this, state), kernels::component_layout(p));
    return nonneg_f ? std::max(f, 0.0) : f;
}

Eigen::VectorXd KodeModel::evaluate_f(const Eigen::VectorXd& state) const {
    if (node_coefficients.size() != equations.size()) throw ConfigError("model: prepare() has not been called");
    const Eigen::MatrixXd sections = kernel_sections(*this, state);
    const auto layout = kernels::component_layout(p);
    Eigen::VectorXd out(p);
    for (int j = 0; j < p; ++j) {
        const double f = combine(*this, j, sections, layout);
        out(j) = nonneg_f ? std::max(f, 0.0) : f;
    }
    return out;
}

Eigen::VectorXd KodeModel::integrated_state(double t, int replicate) const {
    if (replicate < 0 || replicate >= replicate_count()) throw RangeError("model: replicate index out of range");
    const double s = t / time_span;
    if (s < 0.0 || s > 1.0 + 1e-12) throw RangeError("model: time outside the observed span");
    const Eigen::VectorXd weights = grams.rule.partial_weights(std::min(s, 1.0));
    const Eigen::Index m = grams.rule.node_count();
    Eigen::VectorXd out(p);
    for (int j = 0; j < p; ++j) {
        const auto& eq = equations[j];
        Eigen::VectorXd f = solver::functional_on_nodes(grams, eq.theta, eq.b, eq.c).segment(replicate * m, m);
        if (nonneg_f) f = f.cwiseMax(0.0);
        out(j) = eq.theta0(replicate) + weights.dot(f);
    }
    return out;
}

Eigen::VectorXd KodeModel::predict(double t, int replicate, double step) const {
    if (!(step > 0.0)) throw ConfigError("model: prediction step must be positive");
    if (t <= time_span) return integrated_state(std::max(t, 0.0), replicate);
    const auto smoothed = [&](double u) {
        Eigen::VectorXd x(p);
        for (int k = 0; k < p; ++k) x(k) = trajectories[replicate][k](u);
        return x;
    };
    const auto steps = static_cast<long>(std::ceil((t - time_span) / step - 1e-9));
    const double h = (t - time_span) / static_cast<double>(steps);
    Eigen::VectorXd x = integrated_state(time_span, replicate);
    Eigen::VectorXd previous = evaluate_f(smoothed(time_span));
    for (long i = 1; i <= steps; ++i) {
        const Eigen::VectorXd current = evaluate_f(smoothed(time_span + h * static_cast<double>(i)));
        // F-hat is a derivative in standardized time s = t / span.
        x += 0.5 * (h / time_span) * (previous + current);
        previous = current;
    }
    if (!x.allFinite()) throw NumericalError("model: prediction is not finite at t = " + std::to_string(t));
    return x;
}

KodeModel fit_model(const sim::Dataset& data, const PipelineConfig& config) {
    data.validate();
    config.validate();
    if (data.times.minCoeff() < 0.0) throw RangeError("fit: observation times must be nonnegative");
    KodeModel model;
    model.p = static_cast<int>(data.p());
    model.times = data.times;
    model.time_span = data.times.maxCoeff();
    if (!(model.time_span > 0.0)) throw DataError("fit: time span must be positive");
    model.observations = data.replicates;
    model.quadrature = config.quadrature;
    model.solver = config.solver;
    model.nonneg_f = config.nonneg_f;

    for (const auto& y : data.replicates) model.trajectories.push_back(fit_trajectories(data.times, y, config));

    const Eigen::VectorXd times01 = model.times / model.time_span;
    const gram::QuadratureRule rule(times01, model.quadrature);
    const Eigen::MatrixXd states = stacked_node_states(model, rule);
    model.kernels = component_kernels(states, config);
    model.grams = gram::build_gram_tensors_from_states(times01, model.time_span, states, model.replicate_count(),
                                                       model.kernels, model.quadrature);

    for (int j = 0; j < model.p; ++j) {
        std::vector<Eigen::VectorXd> y;
        for (const auto& rep : data.replicates) y.emplace_back(rep.col(j));
        model.equations.push_back(solver::fit_kode_multi(y, model.grams, config.solver, j));
    }
    model.prepare();
    return model;
}

KodeModel fit_model_multi(const std::vector<sim::Dataset>& experiments, const PipelineConfig& config) {
    if (experiments.empty()) throw DataError("fit: no experiments supplied");
    sim::Dataset pooled;
    pooled.times = experiments.front().times;
    for (std::size_t e = 0; e < experiments.size(); ++e) {
        const auto& ex = experiments[e];
        if (ex.times.size() != pooled.times.size() || ex.times != pooled.times) {
            throw DimensionError("fit: experiment " + std::to_string(e + 1) + " uses a different time grid");
        }
        if (ex.p() != experiments.front().p()) {
            throw DimensionError("fit: experiment " + std::to_string(e + 1) + " has a different number of variables");
        }
        for (const auto& rep : ex.replicates) pooled.replicates.push_back(rep);
    }
    return fit_model(pooled, config);
}

}  // namespace kode::model
