#include "kode/io.hpp"

#include "kode/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <system_error>

namespace kode::io {

using nlohmann::json;

std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buffer[64];
    const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
    if (result.ec != std::errc()) throw NumericalError("cannot format a floating-point value");
    return std::string(buffer, result.ptr);
}

double parse_double(std::string_view text, const std::string& where) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    double value = 0.0;
    const auto result = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || result.ec != std::errc() || result.ptr != text.data() + text.size()) {
        throw DataError(where + ": '" + std::string(text) + "' is not a number");
    }
    return value;
}

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

json vector_to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        // JSON has no infinities; the collinearity index may legitimately be one.
        if (std::isfinite(v(i))) out.push_back(v(i));
        else out.push_back(format_double(v(i)));
    }
    return out;
}

Eigen::VectorXd vector_from_json(const json& j, const char* what) {
    if (!j.is_array()) throw DataError(std::string("model file: '") + what + "' must be an array");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (j[i].is_number()) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
        else if (j[i].is_string()) v(static_cast<Eigen::Index>(i)) = parse_double(j[i].get<std::string>(), what);
        else throw DataError(std::string("model file: '") + what + "' holds a non-numeric entry");
    }
    return v;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
    json out = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(vector_to_json(m.row(r).transpose()));
    return out;
}

Eigen::MatrixXd matrix_from_json(const json& j, const char* what) {
    if (!j.is_array()) throw DataError(std::string("model file: '") + what + "' must be an array of rows");
    if (j.empty()) return {};
    const Eigen::Index cols = static_cast<Eigen::Index>(j.front().size());
    Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
    for (std::size_t r = 0; r < j.size(); ++r) {
        const Eigen::VectorXd row = vector_from_json(j[r], what);
        if (row.size() != cols) throw DataError(std::string("model file: ragged matrix '") + what + "'");
        m.row(static_cast<Eigen::Index>(r)) = row.transpose();
    }
    return m;
}

json kernel_to_json(const kernels::KernelSpec& k) {
    json out{{"family", kernels::to_string(k.family)}, {"bandwidth", k.bandwidth}};
    if (k.rescale) out["rescale"] = {k.rescale->first, k.rescale->second};
    return out;
}

kernels::KernelSpec kernel_from_json(const json& j) {
    kernels::KernelSpec k;
    k.family = kernels::family_from_string(j.at("family").get<std::string>());
    k.bandwidth = j.at("bandwidth").get<double>();
    if (j.contains("rescale")) k.rescale = std::make_pair(j["rescale"].at(0).get<double>(), j["rescale"].at(1).get<double>());
    k.validate();
    return k;
}

json grid_to_json(const std::vector<double>& g) { return json(g); }

std::string scheme_name(gram::QuadratureScheme s) {
    return s == gram::QuadratureScheme::trapezoid_grid ? "trapezoid" : "monte-carlo";
}

gram::QuadratureScheme scheme_from_name(const std::string& s) {
    if (s == "trapezoid") return gram::QuadratureScheme::trapezoid_grid;
    if (s == "monte-carlo") return gram::QuadratureScheme::monte_carlo;
    throw DataError("model file: unknown quadrature scheme '" + s + "'");
}

constexpr const char* kFormat = "kode-model";
constexpr int kVersion = 1;

}  // namespace

std::string format_dataset_csv(const sim::Dataset& data) {
    data.validate();
    std::string out = "t,replicate";
    for (Eigen::Index k = 0; k < data.p(); ++k) out += ",x" + std::to_string(k + 1);
    out += '\n';
    for (int r = 0; r < data.replicate_count(); ++r) {
        for (Eigen::Index i = 0; i < data.n(); ++i) {
            out += format_double(data.times(i));
            out += ',';
            out += std::to_string(r + 1);
            for (Eigen::Index k = 0; k < data.p(); ++k) {
                out += ',';
                out += format_double(data.replicates[r](i, k));
            }
            out += '\n';
        }
    }
    return out;
}

sim::Dataset parse_dataset_csv(std::string_view text) {
    std::vector<std::string_view> lines;
    for (auto line : split(text, '\n')) {
        if (!trim(line).empty()) lines.push_back(line);
    }
    if (lines.empty()) throw DataError("dataset: empty file");
    const auto header = split(lines.front(), ',');
    if (header.size() < 3 || trim(header[0]) != "t" || trim(header[1]) != "replicate") {
        throw DataError("dataset: header must start with 't,replicate' followed by at least one variable");
    }
    const std::size_t p = header.size() - 2;

    std::map<long, std::vector<std::pair<double, Eigen::VectorXd>>> blocks;
    for (std::size_t row = 1; row < lines.size(); ++row) {
        const auto fields = split(lines[row], ',');
        const std::string where_row = "dataset row " + std::to_string(row + 1);
        if (fields.size() != header.size()) {
            throw DataError(where_row + ": expected " + std::to_string(header.size()) + " columns, found " +
                            std::to_string(fields.size()));
        }
        const double t = parse_double(fields[0], where_row + ", column t");
        const double rep = parse_double(fields[1], where_row + ", column replicate");
        if (!(rep >= 1.0) || rep != std::floor(rep)) throw DataError(where_row + ": replicate must be a positive integer");
        Eigen::VectorXd values(static_cast<Eigen::Index>(p));
        for (std::size_t k = 0; k < p; ++k) {
            values(static_cast<Eigen::Index>(k)) =
                parse_double(fields[k + 2], where_row + ", column " + std::string(trim(header[k + 2])));
        }
        blocks[static_cast<long>(rep)].emplace_back(t, values);
    }
    if (blocks.empty()) throw DataError("dataset: no data rows");

    sim::Dataset data;
    long expected = 1;
    for (const auto& [rep, rows] : blocks) {
        if (rep != expected++) throw DataError("dataset: replicate numbers must run 1..R without gaps");
        Eigen::VectorXd times(static_cast<Eigen::Index>(rows.size()));
        Eigen::MatrixXd y(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(p));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            times(static_cast<Eigen::Index>(i)) = rows[i].first;
            y.row(static_cast<Eigen::Index>(i)) = rows[i].second.transpose();
        }
        if (rep == 1) {
            data.times = times;
        } else if (times.size() != data.times.size() || times != data.times) {
            throw DataError("dataset: replicate " + std::to_string(rep) + " does not share the time grid of replicate 1");
        }
        data.replicates.push_back(std::move(y));
    }
    data.validate();
    return data;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open '" + tmp.string() + "' for writing");
        out << text;
        if (!out) throw DataError("failed writing '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw DataError("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_dataset_csv(const std::filesystem::path& path, const sim::Dataset& data) {
    write_text_file(path, format_dataset_csv(data));
}

sim::Dataset read_dataset_csv(const std::filesystem::path& path) { return parse_dataset_csv(read_text_file(path)); }

json model_to_json(const model::KodeModel& m) {
    json doc;
    doc["format"] = kFormat;
    doc["version"] = kVersion;
    doc["p"] = m.p;
    doc["time_span"] = m.time_span;
    doc["times"] = vector_to_json(m.times);
    json obs = json::array();
    for (const auto& y : m.observations) obs.push_back(matrix_to_json(y));
    doc["observations"] = obs;

    json traj = json::array();
    for (const auto& rep : m.trajectories) {
        json r = json::array();
        for (const auto& f : rep) {
            r.push_back({{"kernel", kernel_to_json(f.kernel)},
                         {"coefficients", vector_to_json(f.coefficients)},
                         {"lambda", f.lambda},
                         {"gcv_score", f.gcv_score}});
        }
        traj.push_back(r);
    }
    doc["trajectories"] = traj;

    json ks = json::array();
    for (const auto& k : m.kernels) ks.push_back(kernel_to_json(k));
    doc["kernels"] = ks;
    doc["quadrature"] = {{"scheme", scheme_name(m.quadrature.scheme)},
                         {"nodes", m.quadrature.nodes},
                         {"seed", m.quadrature.seed}};
    doc["solver"] = {{"max_iterations", m.solver.max_iterations},
                     {"block_tolerance", m.solver.block_tolerance},
                     {"eta_grid", grid_to_json(m.solver.eta_grid)},
                     {"kappa_grid", grid_to_json(m.solver.kappa_grid)},
                     {"cv_folds", m.solver.cv_folds},
                     {"theta_init", m.solver.theta_init},
                     {"seed", m.solver.seed},
                     {"collinearity_threshold", m.solver.collinearity_threshold},
                     {"freeze_tuning_after", m.solver.freeze_tuning_after}};
    doc["nonneg_f"] = m.nonneg_f;

    json eqs = json::array();
    const auto layout = kernels::component_layout(m.p);
    for (const auto& eq : m.equations) {
        json labels = json::array();
        for (int idx : eq.support) labels.push_back(kernels::component_label(layout[idx]));
        eqs.push_back({{"equation", eq.equation + 1},
                       {"theta0", vector_to_json(eq.theta0)},
                       {"b", eq.b},
                       {"c", vector_to_json(eq.c)},
                       {"theta", vector_to_json(eq.theta.values())},
                       {"eta", eq.eta},
                       {"kappa", eq.kappa},
                       {"support", eq.support},
                       {"support_labels", labels},
                       {"iterations", eq.iterations},
                       {"converged", eq.converged},
                       {"objective_trace", eq.objective_trace},
                       {"collinearity_main", vector_to_json(eq.collinearity_main)},
                       {"collinearity_inter", vector_to_json(eq.collinearity_inter)},
                       {"identifiability_warning", eq.identifiability_warning}});
    }
    doc["equations"] = eqs;
    return doc;
}

model::KodeModel model_from_json(const json& doc) {
    try {
        if (doc.at("format").get<std::string>() != kFormat) throw DataError("model file: unexpected format tag");
        if (doc.at("version").get<int>() != kVersion) throw DataError("model file: unsupported version");
        model::KodeModel m;
        m.p = doc.at("p").get<int>();
        m.time_span = doc.at("time_span").get<double>();
        m.times = vector_from_json(doc.at("times"), "times");
        for (const auto& y : doc.at("observations")) m.observations.push_back(matrix_from_json(y, "observations"));
        for (const auto& rep : doc.at("trajectories")) {
            std::vector<trajectory::TrajectoryFit> fits;
            for (const auto& f : rep) {
                trajectory::TrajectoryFit fit;
                fit.kernel = kernel_from_json(f.at("kernel"));
                fit.coefficients = vector_from_json(f.at("coefficients"), "coefficients");
                fit.lambda = f.at("lambda").get<double>();
                fit.gcv_score = f.at("gcv_score").get<double>();
                fit.train_times = m.times;
                if (fit.coefficients.size() != m.times.size()) throw DataError("model file: trajectory coefficient length");
                fit.fitted_values = trajectory::time_gram(fit.kernel, m.times) * fit.coefficients;
                fits.push_back(std::move(fit));
            }
            if (static_cast<int>(fits.size()) != m.p) throw DataError("model file: trajectory count differs from p");
            m.trajectories.push_back(std::move(fits));
        }
        if (m.trajectories.size() != m.observations.size()) throw DataError("model file: replicate counts disagree");
        for (const auto& k : doc.at("kernels")) m.kernels.push_back(kernel_from_json(k));
        const auto& q = doc.at("quadrature");
        m.quadrature.scheme = scheme_from_name(q.at("scheme").get<std::string>());
        m.quadrature.nodes = q.at("nodes").get<int>();
        m.quadrature.seed = q.at("seed").get<std::uint64_t>();
        const auto& s = doc.at("solver");
        m.solver.max_iterations = s.at("max_iterations").get<int>();
        m.solver.block_tolerance = s.at("block_tolerance").get<double>();
        m.solver.eta_grid = s.at("eta_grid").get<std::vector<double>>();
        m.solver.kappa_grid = s.at("kappa_grid").get<std::vector<double>>();
        m.solver.cv_folds = s.at("cv_folds").get<int>();
        m.solver.theta_init = s.at("theta_init").get<double>();
        m.solver.seed = s.at("seed").get<std::uint64_t>();
        m.solver.collinearity_threshold = s.at("collinearity_threshold").get<double>();
        m.solver.freeze_tuning_after = s.at("freeze_tuning_after").get<int>();
        m.nonneg_f = doc.at("nonneg_f").get<bool>();

        m.grams = model::rebuild_grams(m);
        const Eigen::Index n = m.times.size();
        for (const auto& e : doc.at("equations")) {
            solver::EquationFit eq;
            eq.equation = e.at("equation").get<int>() - 1;
            eq.theta0 = vector_from_json(e.at("theta0"), "theta0");
            eq.b = e.at("b").get<double>();
            eq.c = vector_from_json(e.at("c"), "c");
            eq.theta = kernels::ThetaVector(m.p, vector_from_json(e.at("theta"), "theta"));
            eq.eta = e.at("eta").get<double>();
            eq.kappa = e.at("kappa").get<double>();
            eq.support = e.at("support").get<std::vector<int>>();
            eq.iterations = e.at("iterations").get<int>();
            eq.converged = e.at("converged").get<bool>();
            eq.objective_trace = e.at("objective_trace").get<std::vector<double>>();
            eq.collinearity_main = vector_from_json(e.at("collinearity_main"), "collinearity_main");
            eq.collinearity_inter = vector_from_json(e.at("collinearity_inter"), "collinearity_inter");
            eq.identifiability_warning = e.at("identifiability_warning").get<bool>();
            if (eq.equation < 0 || eq.equation >= m.p) throw DataError("model file: equation index out of range");
            if (eq.c.size() != m.grams.rows()) throw DataError("model file: representer coefficients have the wrong length");

            // Quantities derived from the data are recomputed rather than stored.
            eq.y_mean.resize(m.replicate_count());
            eq.y_centered.resize(m.grams.rows());
            for (int r = 0; r < m.replicate_count(); ++r) {
                const Eigen::VectorXd y = m.observations[r].col(eq.equation);
                eq.y_mean(r) = y.mean();
                eq.y_centered.segment(r * n, n) = y.array() - eq.y_mean(r);
            }
            eq.G = solver::theta_design(m.grams, eq.c);
            eq.z = solver::theta_response(eq.y_centered, m.grams.B, solver::FStep{eq.b, eq.c}, eq.eta);
            m.equations.push_back(std::move(eq));
        }
        if (static_cast<int>(m.equations.size()) != m.p) throw DataError("model file: equation count differs from p");
        m.prepare();
        return m;
    } catch (const json::exception& e) {
        throw DataError(std::string("model file: ") + e.what());
    }
}

void save_model(const std::filesystem::path& path, const model::KodeModel& model) {
    write_text_file(path, model_to_json(model).dump(1) + "\n");
}

model::KodeModel load_model(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw DataError("model file '" + path.string() + "': " + e.what());
    }
    return model_from_json(doc);
}

std::string format_band_csv(const inference::ConfidenceBand& band, int replicate) {
    std::string out = "t,center,lower,upper,c0,sigma_hat\n";
    for (Eigen::Index i = 0; i < band.center.size(); ++i) {
        if (band.replicate(i) != replicate) continue;
        out += format_double(band.times(i)) + ',' + format_double(band.center(i)) + ',' + format_double(band.lower(i)) +
               ',' + format_double(band.upper(i)) + ',' + format_double(band.c0(i)) + ',' +
               format_double(band.sigma_hat) + '\n';
    }
    return out;
}

}  // namespace kode::io
