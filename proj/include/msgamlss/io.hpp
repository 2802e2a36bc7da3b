#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "inference.hpp"
#include "model.hpp"
#include "smoothing.hpp"

namespace msgamlss {

using nlohmann::json;

// ---------------------------------------------------------------------------
// CSV

struct LagDirective {
    std::string column;
    std::size_t lag = 0;
    bool operator==(const LagDirective&) const = default;
};

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t a = 0;
    std::size_t b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cell += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cell += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(trim(cell));
            cell.clear();
        } else if (c != '\r') {
            cell += c;
        }
    }
    out.push_back(trim(cell));
    return out;
}

inline std::optional<double> parse_double(const std::string& s) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto res = std::from_chars(s.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end) return std::nullopt;
    return v;
}

}  // namespace detail

/// Reads a headed CSV. `label_column`, if non-empty, is carried through as
/// opaque text; every other column must be numeric and finite.
inline TimeSeriesFrame read_csv(const std::string& path, const std::string& response,
                                const std::string& label_column = "") {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open data file '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("data file '" + path + "' is empty");
    const auto header = detail::split_csv_line(line);
    std::vector<std::vector<double>> cols(header.size());
    std::vector<std::string> labels;
    int label_index = -1;
    for (std::size_t c = 0; c < header.size(); ++c)
        if (!label_column.empty() && header[c] == label_column) label_index = static_cast<int>(c);
    if (!label_column.empty() && label_index < 0)
        throw ConfigError("label column '" + label_column + "' not found in '" + path + "'");
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw ConfigError(path + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                              " cells, header has " + std::to_string(header.size()));
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (static_cast<int>(c) == label_index) {
                labels.push_back(cells[c]);
                continue;
            }
            const auto v = detail::parse_double(cells[c]);
            if (!v || !std::isfinite(*v))
                throw ConfigError(path + ": cannot parse '" + cells[c] + "' at row " + std::to_string(row) +
                                  ", column '" + header[c] + "'");
            cols[c].push_back(*v);
        }
    }
    TimeSeriesFrame frame;
    frame.response_name = response;
    frame.label_name = label_column;
    frame.labels = std::move(labels);
    bool found = false;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (static_cast<int>(c) == label_index) continue;
        if (header[c] == response) {
            frame.response = cols[c];
            found = true;
        }
    }
    if (!found) throw ConfigError("response column '" + response + "' not found in '" + path + "'");
    for (std::size_t c = 0; c < header.size(); ++c)
        if (static_cast<int>(c) != label_index && header[c] != response) frame.add_column(header[c], std::move(cols[c]));
    return frame;
}

/// Row t of a lagged column takes the value from row t - L; the first
/// max(L) rows are then dropped from every column.
inline TimeSeriesFrame apply_lags(TimeSeriesFrame frame, const std::vector<LagDirective>& lags) {
    if (lags.empty()) return frame;
    const std::size_t t_len = frame.size();
    std::size_t max_lag = 0;
    for (const auto& l : lags) {
        if (l.lag >= t_len)
            throw ConfigError("lag(" + l.column + ", " + std::to_string(l.lag) + ") is not shorter than the series (" +
                              std::to_string(t_len) + " rows)");
        if (std::count_if(lags.begin(), lags.end(), [&](const LagDirective& o) { return o.column == l.column; }) > 1)
            throw ConfigError("column '" + l.column + "' is lagged more than once");
        max_lag = std::max(max_lag, l.lag);
    }
    for (const auto& l : lags) {
        if (l.column == frame.response_name) throw ConfigError("the response cannot be lagged");
        const auto it = std::find(frame.names.begin(), frame.names.end(), l.column);
        if (it == frame.names.end()) throw ConfigError("lagged column '" + l.column + "' not found in data");
        auto& col = frame.columns[static_cast<std::size_t>(it - frame.names.begin())];
        std::vector<double> shifted(t_len, 0.0);
        for (std::size_t t = l.lag; t < t_len; ++t) shifted[t] = col[t - l.lag];
        col = std::move(shifted);
    }
    auto trim_front = [max_lag](auto& v) {
        if (!v.empty()) v.erase(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(max_lag));
    };
    trim_front(frame.response);
    trim_front(frame.labels);
    for (auto& c : frame.columns) trim_front(c);
    return frame;
}

inline TimeSeriesFrame load_frame(const std::string& path, const std::string& response,
                                  const std::vector<LagDirective>& lags = {}, const std::string& label_column = "") {
    return apply_lags(read_csv(path, response, label_column), lags);
}

inline void write_frame_csv(const TimeSeriesFrame& frame, const std::string& path,
                            const std::vector<int>* states = nullptr) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out.precision(17);
    out << "t";
    if (!frame.labels.empty()) out << "," << frame.label_name;
    out << "," << frame.response_name;
    for (const auto& n : frame.names) out << "," << n;
    if (states) out << ",true_state";
    out << "\n";
    for (std::size_t t = 0; t < frame.size(); ++t) {
        out << t + 1;
        if (!frame.labels.empty()) out << "," << frame.labels[t];
        out << "," << frame.response[t];
        for (const auto& c : frame.columns) out << "," << c[t];
        if (states) out << "," << (*states)[t] + 1;
        out << "\n";
    }
}

// ---------------------------------------------------------------------------
// Term strings: linear(name), smooth(name[, k=M][, degree=D][, order=Q]), lag(name, L)

namespace detail {

struct Call {
    std::string fn;
    std::vector<std::string> positional;
    std::map<std::string, std::string> named;
};

inline Call parse_call(const std::string& text) {
    static const std::regex re(R"(^\s*([A-Za-z_]+)\s*\((.*)\)\s*$)");
    std::smatch m;
    if (!std::regex_match(text, m, re)) throw ConfigError("cannot parse term '" + text + "'");
    Call call;
    call.fn = m[1];
    std::stringstream args(m[2]);
    std::string arg;
    while (std::getline(args, arg, ',')) {
        arg = trim(arg);
        if (arg.empty()) continue;
        const auto eq = arg.find('=');
        if (eq == std::string::npos)
            call.positional.push_back(arg);
        else
            call.named[trim(arg.substr(0, eq))] = trim(arg.substr(eq + 1));
    }
    return call;
}

inline int parse_int_arg(const std::string& s, const std::string& term) {
    int v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ConfigError("expected an integer in '" + term + "', got '" + s + "'");
    return v;
}

}  // namespace detail

inline void add_term(Formula& f, const std::string& term) {
    const auto call = detail::parse_call(term);
    if (call.positional.size() != 1) throw ConfigError("term '" + term + "' needs exactly one covariate name");
    if (call.fn == "linear") {
        if (!call.named.empty()) throw ConfigError("linear() takes no options: '" + term + "'");
        f.linear.push_back(call.positional[0]);
    } else if (call.fn == "smooth" || call.fn == "s") {
        SmoothSpec s;
        s.covariate = call.positional[0];
        for (const auto& [key, value] : call.named) {
            if (key == "k")
                s.num_basis = detail::parse_int_arg(value, term);
            else if (key == "degree")
                s.degree = detail::parse_int_arg(value, term);
            else if (key == "order" || key == "m")
                s.penalty_order = detail::parse_int_arg(value, term);
            else
                throw ConfigError("unknown smooth option '" + key + "' in '" + term + "'");
        }
        if (s.num_basis < 4) throw ConfigError("smooth(" + s.covariate + "): k must be >= 4");
        s.validate();
        f.smooths.push_back(s);
    } else {
        throw ConfigError("unknown term function '" + call.fn + "' in '" + term + "'");
    }
}

inline Formula parse_formula(const std::vector<std::string>& terms) {
    Formula f;
    for (const auto& t : terms) add_term(f, t);
    return f;
}

inline std::vector<std::string> formula_terms(const Formula& f) {
    std::vector<std::string> out;
    for (const auto& l : f.linear) out.push_back("linear(" + l + ")");
    for (const auto& s : f.smooths)
        out.push_back("smooth(" + s.covariate + ", k=" + std::to_string(s.num_basis) + ", degree=" +
                      std::to_string(s.degree) + ", order=" + std::to_string(s.penalty_order) + ")");
    return out;
}

inline LagDirective parse_lag(const std::string& text) {
    const auto call = detail::parse_call(text);
    if (call.fn != "lag" || call.positional.size() != 2 || !call.named.empty())
        throw ConfigError("expected lag(name, L), got '" + text + "'");
    const int l = detail::parse_int_arg(call.positional[1], text);
    if (l < 0) throw ConfigError("lag must be non-negative in '" + text + "'");
    return {call.positional[0], static_cast<std::size_t>(l)};
}

// ---------------------------------------------------------------------------
// Model spec <-> JSON (the same schema as the run configuration)

namespace detail {

inline std::vector<std::string> as_terms(const json& j, const std::string& where) {
    if (!j.is_array()) throw ConfigError(where + ": expected a list of terms");
    std::vector<std::string> out;
    for (const auto& t : j) {
        if (!t.is_string()) throw ConfigError(where + ": terms must be strings");
        out.push_back(t.get<std::string>());
    }
    return out;
}

// A parameter entry is either a list of terms (shared by all states) or a
// list of per-state term lists.
inline std::vector<Formula> per_state_formulas(const json& j, int n_states, const std::string& where) {
    if (!j.is_array()) throw ConfigError(where + ": expected a list");
    if (!j.empty() && j.front().is_array()) {
        if (static_cast<int>(j.size()) != n_states)
            throw ConfigError(where + ": expected one term list per state");
        std::vector<Formula> out;
        for (std::size_t i = 0; i < j.size(); ++i) out.push_back(parse_formula(as_terms(j[i], where)));
        return out;
    }
    return std::vector<Formula>(static_cast<std::size_t>(n_states), parse_formula(as_terms(j, where)));
}

}  // namespace detail

inline ModelSpec spec_from_json(const json& j) {
    ModelSpec spec;
    spec.family = Family::from_name(j.value("family", std::string("normal")));
    spec.n_states = j.value("states", 2);
    if (spec.n_states < 1) throw ConfigError("states must be >= 1");
    const auto names = spec.family.parameter_names();
    spec.state_formulas.assign(names.size(), std::vector<Formula>(static_cast<std::size_t>(spec.n_states)));
    if (j.contains("parameters")) {
        const auto& params = j.at("parameters");
        if (!params.is_object()) throw ConfigError("'parameters' must be an object keyed by parameter name");
        for (const auto& [key, value] : params.items()) {
            const int k = spec.family.parameter_index(key);
            spec.state_formulas[static_cast<std::size_t>(k)] =
                detail::per_state_formulas(value, spec.n_states, "parameters." + key);
        }
    }
    spec.transition_formulas.assign(static_cast<std::size_t>(spec.num_pairs()), Formula{});
    if (j.contains("transitions")) {
        const auto& tr = j.at("transitions");
        if (tr.is_array()) {
            spec.transition_formulas.assign(static_cast<std::size_t>(spec.num_pairs()),
                                            parse_formula(detail::as_terms(tr, "transitions")));
        } else if (tr.is_object()) {
            static const std::regex pair_re(R"(^\s*(\d+)\s*->\s*(\d+)\s*$)");
            for (const auto& [key, value] : tr.items()) {
                std::smatch m;
                if (!std::regex_match(key, m, pair_re)) throw ConfigError("transition key must look like '1->2', got '" + key + "'");
                const int from = std::stoi(m[1]) - 1;
                const int to = std::stoi(m[2]) - 1;
                if (from == to || from < 0 || to < 0 || from >= spec.n_states || to >= spec.n_states)
                    throw ConfigError("invalid transition pair '" + key + "'");
                spec.transition_formulas[static_cast<std::size_t>(pair_index(spec.n_states, from, to))] =
                    parse_formula(detail::as_terms(value, "transitions." + key));
            }
        } else {
            throw ConfigError("'transitions' must be a term list or an object keyed by 'i->j'");
        }
    }
    if (j.contains("initial")) {
        const auto& init = j.at("initial");
        if (init.is_string()) {
            const auto s = init.get<std::string>();
            if (s == "uniform")
                spec.initial = {InitialKind::Uniform, {}};
            else if (s == "stationary")
                spec.initial = {InitialKind::Stationary, {}};
            else
                throw ConfigError("initial must be 'uniform', 'stationary' or a probability vector");
        } else if (init.is_array()) {
            spec.initial = {InitialKind::Fixed, init.get<std::vector<double>>()};
        } else {
            throw ConfigError("initial must be 'uniform', 'stationary' or a probability vector");
        }
    }
    spec.validate();
    return spec;
}

inline json spec_to_json(const ModelSpec& spec) {
    json j;
    j["family"] = std::string(spec.family.name());
    j["states"] = spec.n_states;
    const auto names = spec.family.parameter_names();
    json params = json::object();
    for (std::size_t k = 0; k < names.size(); ++k) {
        json per_state = json::array();
        for (const auto& f : spec.state_formulas[k]) per_state.push_back(formula_terms(f));
        params[names[k]] = per_state;
    }
    j["parameters"] = params;
    json tr = json::object();
    for (int p = 0; p < spec.num_pairs(); ++p) {
        const auto [i, jj] = pair_states(spec.n_states, p);
        tr[std::to_string(i + 1) + "->" + std::to_string(jj + 1)] = formula_terms(spec.transition_formulas[static_cast<std::size_t>(p)]);
    }
    j["transitions"] = tr;
    switch (spec.initial.kind) {
        case InitialKind::Uniform: j["initial"] = "uniform"; break;
        case InitialKind::Stationary: j["initial"] = "stationary"; break;
        case InitialKind::Fixed: j["initial"] = spec.initial.probs; break;
    }
    return j;
}

// ---------------------------------------------------------------------------
// Run configuration

struct RunConfig {
    std::string data;
    std::string response = "y";
    std::string label;
    ModelSpec spec;
    std::vector<LagDirective> lags;
    OptimizerConfig optimizer;
    std::uint64_t seed = 1;
    std::string output = ".";
};

inline OptimizerConfig optimizer_from_json(const json& j, OptimizerConfig cfg = {}) {
    static const std::vector<std::string> known = {"gradient_tolerance", "max_inner_iterations", "lambda_tolerance",
                                                   "max_outer_iterations", "initial_lambda", "lambda_min",
                                                   "lambda_max", "multistart"};
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError("unknown optimizer option '" + key + "'");
    cfg.gradient_tolerance = j.value("gradient_tolerance", cfg.gradient_tolerance);
    cfg.max_inner_iterations = j.value("max_inner_iterations", cfg.max_inner_iterations);
    cfg.lambda_tolerance = j.value("lambda_tolerance", cfg.lambda_tolerance);
    cfg.max_outer_iterations = j.value("max_outer_iterations", cfg.max_outer_iterations);
    cfg.initial_lambda = j.value("initial_lambda", cfg.initial_lambda);
    cfg.lambda_min = j.value("lambda_min", cfg.lambda_min);
    cfg.lambda_max = j.value("lambda_max", cfg.lambda_max);
    cfg.multistart = j.value("multistart", cfg.multistart);
    cfg.validate();
    return cfg;
}

inline json optimizer_to_json(const OptimizerConfig& cfg) {
    return {{"gradient_tolerance", cfg.gradient_tolerance}, {"max_inner_iterations", cfg.max_inner_iterations},
            {"lambda_tolerance", cfg.lambda_tolerance},     {"max_outer_iterations", cfg.max_outer_iterations},
            {"initial_lambda", cfg.initial_lambda},         {"lambda_min", cfg.lambda_min},
            {"lambda_max", cfg.lambda_max},                 {"multistart", cfg.multistart}};
}

inline RunConfig run_config_from_json(const json& j) {
    try {
        RunConfig rc;
        rc.data = j.value("data", std::string());
        rc.response = j.value("response", std::string("y"));
        rc.label = j.value("label", std::string());
        rc.spec = spec_from_json(j);
        if (j.contains("lags"))
            for (const auto& l : detail::as_terms(j.at("lags"), "lags")) rc.lags.push_back(parse_lag(l));
        if (j.contains("optimizer")) rc.optimizer = optimizer_from_json(j.at("optimizer"));
        rc.seed = j.value("seed", std::uint64_t{1});
        rc.optimizer.seed = rc.seed;
        rc.output = j.value("output", std::string("."));
        return rc;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid configuration: ") + e.what());
    }
}

inline RunConfig read_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open configuration '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("configuration '" + path + "' is not valid JSON: " + e.what());
    }
    return run_config_from_json(j);
}

// ---------------------------------------------------------------------------
// Model file and fit report

inline constexpr const char* kModelFormat = "msgamlss-model";
inline constexpr int kModelVersion = 1;

namespace detail {

inline json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
        rows.push_back(row);
    }
    return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j) {
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows ? static_cast<Eigen::Index>(j.front().size()) : 0;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (static_cast<Eigen::Index>(j[static_cast<std::size_t>(r)].size()) != cols) throw ConfigError("ragged matrix in model file");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

inline json diagnostics_to_json(const FitDiagnostics& d) {
    return {{"outer_iterations", d.outer_iterations},
            {"inner_iterations", d.inner_iterations},
            {"inner_fits", d.inner_fits},
            {"inner_fits_converged", d.inner_fits_converged},
            {"gradient_norm", d.gradient_norm},
            {"converged", d.converged},
            {"lambda_converged", d.lambda_converged},
            {"lambda_trace", d.lambda_trace},
            {"warnings", d.warnings}};
}

inline FitDiagnostics diagnostics_from_json(const json& j) {
    FitDiagnostics d;
    d.outer_iterations = j.value("outer_iterations", 0);
    d.inner_iterations = j.value("inner_iterations", 0);
    d.inner_fits = j.value("inner_fits", 0);
    d.inner_fits_converged = j.value("inner_fits_converged", 0);
    d.gradient_norm = j.value("gradient_norm", 0.0);
    d.converged = j.value("converged", false);
    d.lambda_converged = j.value("lambda_converged", false);
    d.lambda_trace = j.value("lambda_trace", std::vector<std::vector<double>>{});
    d.warnings = j.value("warnings", std::vector<std::string>{});
    return d;
}

}  // namespace detail

/// Data-handling settings stored alongside a model so that later commands
/// prepare new data exactly as the fitting data was prepared.
struct DataSettings {
    std::string response = "y";
    std::string label;
    std::vector<LagDirective> lags;
};

inline json model_to_json(const FittedModel& fit, const DataSettings& data = {}) {
    json j;
    j["format"] = kModelFormat;
    j["version"] = kModelVersion;
    j["spec"] = spec_to_json(fit.spec);
    json lags = json::array();
    for (const auto& l : data.lags) lags.push_back("lag(" + l.column + ", " + std::to_string(l.lag) + ")");
    j["data"] = {{"response", data.response}, {"label", data.label}, {"lags", lags}};
    json bases = json::array();
    for (const auto& b : fit.bases.bundles) {
        bases.push_back({{"covariate", b->spec.covariate},
                         {"k", b->spec.num_basis},
                         {"degree", b->spec.degree},
                         {"order", b->spec.penalty_order},
                         {"lower", b->lower},
                         {"upper", b->upper},
                         {"centering", detail::matrix_to_json(*b->centering)}});
    }
    j["bases"] = bases;
    j["theta"] = std::vector<double>(fit.theta.data(), fit.theta.data() + fit.theta.size());
    j["parameter_names"] = fit.layout().names(fit.bases);
    j["lambda"] = fit.lambda;
    json lambda_names = json::array();
    for (const auto& p : fit.layout().penalties) lambda_names.push_back(p.label);
    j["lambda_names"] = lambda_names;
    j["hessian"] = detail::matrix_to_json(fit.hessian);
    j["log_likelihood"] = fit.log_likelihood;
    j["penalized_objective"] = fit.penalized_objective;
    j["reference"] = fit.reference;
    j["n_obs"] = fit.n_obs;
    j["diagnostics"] = detail::diagnostics_to_json(fit.diagnostics);
    return j;
}

inline FittedModel model_from_json(const json& j, DataSettings* data = nullptr) {
    try {
        if (j.value("format", std::string()) != kModelFormat) throw ConfigError("not a model file");
        if (j.value("version", 0) != kModelVersion) throw ConfigError("unsupported model file version");
        FittedModel fit;
        fit.spec = spec_from_json(j.at("spec"));
        for (const auto& b : j.at("bases")) {
            BasisBundle bundle;
            bundle.spec = {b.at("covariate").get<std::string>(), b.at("k").get<int>(), b.at("degree").get<int>(),
                           b.at("order").get<int>()};
            bundle.spec.validate();
            bundle.lower = b.at("lower").get<double>();
            bundle.upper = b.at("upper").get<double>();
            const Eigen::MatrixXd z = detail::matrix_from_json(b.at("centering"));
            if (z.rows() != bundle.spec.num_basis || z.cols() != bundle.spec.num_basis - 1)
                throw ConfigError("centering matrix has the wrong shape in model file");
            const Eigen::MatrixXd d = difference_matrix(bundle.spec.num_basis, bundle.spec.penalty_order);
            const Eigen::MatrixXd s = z.transpose() * (d.transpose() * d) * z;
            bundle.penalty = 0.5 * (s + s.transpose());
            bundle.centering = z;
            fit.bases.bundles.push_back(std::make_shared<const BasisBundle>(std::move(bundle)));
        }
        const auto theta = j.at("theta").get<std::vector<double>>();
        fit.theta = Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size()));
        if (fit.theta.size() != fit.layout().size) throw ConfigError("parameter vector does not match the model spec");
        fit.lambda = j.at("lambda").get<std::vector<double>>();
        fit.hessian = detail::matrix_from_json(j.at("hessian"));
        fit.log_likelihood = j.at("log_likelihood").get<double>();
        fit.penalized_objective = j.value("penalized_objective", 0.0);
        for (const auto& [k, v] : j.at("reference").items()) fit.reference[k] = v.get<double>();
        fit.n_obs = j.value("n_obs", std::size_t{0});
        if (j.contains("diagnostics")) fit.diagnostics = detail::diagnostics_from_json(j.at("diagnostics"));
        if (data) {
            const auto& dj = j.at("data");
            data->response = dj.value("response", std::string("y"));
            data->label = dj.value("label", std::string());
            data->lags.clear();
            for (const auto& l : dj.value("lags", std::vector<std::string>{})) data->lags.push_back(parse_lag(l));
        }
        return fit;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid model file: ") + e.what());
    }
}

inline void write_json(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << j.dump(2) << "\n";
}

inline json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
    }
}

inline FittedModel read_model(const std::string& path, DataSettings* data = nullptr) {
    return model_from_json(read_json(path), data);
}

/// Human-oriented fit summary: named coefficients and smoothing parameters,
/// log-likelihood and convergence diagnostics.
inline json fit_report(const FittedModel& fit) {
    const auto layout = fit.layout();
    const auto names = layout.names(fit.bases);
    json coef = json::object();
    for (std::size_t i = 0; i < names.size(); ++i) coef[names[i]] = fit.theta(static_cast<Eigen::Index>(i));
    json lambda = json::object();
    for (std::size_t p = 0; p < layout.penalties.size(); ++p) lambda[layout.penalties[p].label] = fit.lambda[p];
    return {{"family", std::string(fit.spec.family.name())},
            {"states", fit.spec.n_states},
            {"n_obs", fit.n_obs},
            {"n_parameters", layout.size},
            {"log_likelihood", fit.log_likelihood},
            {"penalized_objective", fit.penalized_objective},
            {"coefficients", coef},
            {"lambda", lambda},
            {"diagnostics", detail::diagnostics_to_json(fit.diagnostics)}};
}

/// Checks that `frame` holds every covariate the model uses.
inline void check_schema(const FittedModel& fit, const TimeSeriesFrame& frame) {
    std::vector<std::string> missing;
    for (const auto& c : fit.spec.covariates())
        if (!frame.has(c)) missing.push_back(c);
    if (!missing.empty()) {
        std::string msg = "data does not match the model; missing column(s):";
        for (const auto& m : missing) msg += " " + m;
        throw ConfigError(msg);
    }
}

}  // namespace msgamlss
