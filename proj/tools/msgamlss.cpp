// Command-line front end: simulate, fit, decode, residuals, effects,
// transitions, stationary.

#include <CLI11.hpp>

#include <msgamlss/io.hpp>
#include <msgamlss/sim.hpp>
#include <msgamlss/smoothing.hpp>
#include <msgamlss/stats.hpp>
#include <msgamlss/uncertainty.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace msgamlss;

namespace {

std::ofstream open_out(const std::string& path) {
    if (const auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out.precision(17);
    return out;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
    bool paper_dgp = false;
    std::size_t length = 4000;
    std::uint64_t seed = 1;
    double mean_offset = 0.0;
    std::optional<double> skew_shape;
    int replications = 1;
    std::string out = "simulated.csv";
};

std::string replication_path(const std::string& out, int r) {
    const fs::path p(out);
    char suffix[16];
    std::snprintf(suffix, sizeof suffix, "_%03d", r + 1);
    return (p.parent_path() / (p.stem().string() + suffix + p.extension().string())).string();
}

void run_simulate(const SimulateArgs& a) {
    if (!a.paper_dgp) throw ConfigError("only the built-in design is available from the command line; pass --paper-dgp");
    if (a.replications < 1) throw ConfigError("--replications must be >= 1");
    for (int r = 0; r < a.replications; ++r) {
        PaperDgpOptions opt;
        opt.length = a.length;
        opt.seed = a.replications == 1 ? a.seed : Rng(a.seed).split(static_cast<std::uint64_t>(r)).seed();
        opt.mean_offset = a.mean_offset;
        opt.skew_shape = a.skew_shape;
        const auto sim = simulate(builtin_paper_dgp(opt));
        const std::string path = a.replications == 1 ? a.out : replication_path(a.out, r);
        if (const auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
        write_frame_csv(sim.frame, path, &sim.states);
        std::cout << "wrote " << path << " (" << sim.frame.size() << " rows, seed " << opt.seed << ")\n";
    }
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
    std::string config;
    std::string data;
    std::string response;
    std::string label;
    std::string family;
    int states = 0;
    std::vector<std::string> mu, sigma, nu, transition, lags;
    std::string initial;
    std::optional<std::uint64_t> seed;
    std::optional<int> multistart;
    std::string out;
};

RunConfig config_from_args(const FitArgs& a) {
    RunConfig rc;
    if (!a.config.empty()) {
        rc = read_run_config(a.config);
        // relative data paths in a config file are relative to the file
        if (!rc.data.empty() && fs::path(rc.data).is_relative())
            rc.data = (fs::path(a.config).parent_path() / rc.data).string();
    } else {
        json j;
        j["response"] = a.response.empty() ? "y" : a.response;
        j["family"] = a.family.empty() ? "normal" : a.family;
        j["states"] = a.states > 0 ? a.states : 2;
        json params = json::object();
        if (!a.mu.empty()) params["mu"] = a.mu;
        if (!a.sigma.empty()) params["sigma"] = a.sigma;
        if (!a.nu.empty()) params["nu"] = a.nu;
        j["parameters"] = params;
        j["transitions"] = a.transition;
        j["lags"] = a.lags;
        if (!a.label.empty()) j["label"] = a.label;
        if (!a.initial.empty()) {
            if (a.initial == "uniform" || a.initial == "stationary") {
                j["initial"] = a.initial;
            } else {
                std::vector<double> probs;
                std::stringstream ss(a.initial);
                std::string cell;
                while (std::getline(ss, cell, ',')) {
                    const auto v = detail::parse_double(detail::trim(cell));
                    if (!v) throw ConfigError("--initial must be uniform, stationary or comma-separated probabilities");
                    probs.push_back(*v);
                }
                j["initial"] = probs;
            }
        }
        rc = run_config_from_json(j);
    }
    if (!a.data.empty()) rc.data = a.data;
    if (!a.out.empty()) rc.output = a.out;
    if (a.seed) rc.seed = rc.optimizer.seed = *a.seed;
    if (a.multistart) rc.optimizer.multistart = *a.multistart;
    if (rc.data.empty()) throw ConfigError("no data file given (config key 'data' or --data)");
    return rc;
}

void run_fit(const FitArgs& a) {
    const RunConfig rc = config_from_args(a);
    const auto frame = load_frame(rc.data, rc.response, rc.lags, rc.label);
    std::vector<std::string> missing;
    for (const auto& c : rc.spec.covariates())
        if (!frame.has(c)) missing.push_back(c);
    if (!missing.empty()) {
        std::string msg = "covariate column(s) not found after lags:";
        for (const auto& m : missing) msg += " " + m;
        throw ConfigError(msg);
    }
    const FittedModel fit = select_smoothness(rc.spec, frame, rc.optimizer);
    fs::create_directories(rc.output);
    json report = fit_report(fit);
    report["data"] = rc.data;
    report["optimizer"] = optimizer_to_json(rc.optimizer);
    report["seed"] = rc.seed;
    write_json(report, (fs::path(rc.output) / "fit_report.json").string());
    write_json(model_to_json(fit, {rc.response, rc.label, rc.lags}), (fs::path(rc.output) / "model.json").string());
    std::cout << "log-likelihood " << fit.log_likelihood << ", " << fit.diagnostics.outer_iterations
              << " smoothing iterations, gradient norm " << fit.diagnostics.gradient_norm << "\n";
    for (const auto& w : fit.diagnostics.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "wrote " << (fs::path(rc.output) / "fit_report.json").string() << " and "
              << (fs::path(rc.output) / "model.json").string() << "\n";
}

// ---------------------------------------------------------------------------
// commands that read a model

struct ModelArgs {
    std::string model;
    std::string data;
    std::string out;
};

struct LoadedModel {
    FittedModel fit;
    DataSettings settings;
};

LoadedModel load_model(const std::string& path) {
    LoadedModel m;
    m.fit = read_model(path, &m.settings);
    return m;
}

TimeSeriesFrame load_data_for(const LoadedModel& m, const std::string& path) {
    auto frame = load_frame(path, m.settings.response, m.settings.lags, m.settings.label);
    check_schema(m.fit, frame);
    return frame;
}

void run_decode(const ModelArgs& a) {
    const auto m = load_model(a.model);
    const auto frame = load_data_for(m, a.data);
    const auto states = viterbi(m.fit, frame);
    auto out = open_out(a.out);
    out << "time";
    if (!frame.labels.empty()) out << "," << frame.label_name;
    out << "," << frame.response_name << ",state\n";
    for (std::size_t t = 0; t < frame.size(); ++t) {
        out << t + 1;
        if (!frame.labels.empty()) out << "," << frame.labels[t];
        out << "," << frame.response[t] << "," << states[t] + 1 << "\n";
    }
    std::cout << "wrote " << a.out << " (" << frame.size() << " rows)\n";
}

std::vector<double> autocorrelation(const std::vector<double>& x, int max_lag) {
    const double n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double c0 = 0.0;
    for (double v : x) c0 += (v - mean) * (v - mean);
    std::vector<double> acf;
    for (int l = 1; l <= max_lag && static_cast<std::size_t>(l) < x.size(); ++l) {
        double c = 0.0;
        for (std::size_t t = static_cast<std::size_t>(l); t < x.size(); ++t) c += (x[t] - mean) * (x[t - static_cast<std::size_t>(l)] - mean);
        acf.push_back(c0 > 0.0 ? c / c0 : 0.0);
    }
    return acf;
}

void run_residuals(const ModelArgs& a, std::string summary_path) {
    const auto m = load_model(a.model);
    const auto frame = load_data_for(m, a.data);
    const auto res = pseudo_residuals(m.fit, frame);
    auto out = open_out(a.out);
    out << "time";
    if (!frame.labels.empty()) out << "," << frame.label_name;
    out << "," << frame.response_name << ",pit,residual\n";
    for (std::size_t t = 0; t < frame.size(); ++t) {
        out << t + 1;
        if (!frame.labels.empty()) out << "," << frame.labels[t];
        out << "," << frame.response[t] << "," << res.pit[t] << "," << res.residuals[t] << "\n";
    }
    const double ks = ks_statistic(res.residuals);
    const double p = ks_pvalue(ks, res.residuals.size());
    if (summary_path.empty()) {
        const fs::path o(a.out);
        summary_path = (o.parent_path() / (o.stem().string() + "_summary.json")).string();
    }
    write_json({{"n", res.residuals.size()},
                {"ks_statistic", ks},
                {"ks_p_value", p},
                {"clamped", res.clamped},
                {"acf", autocorrelation(res.residuals, 30)}},
               summary_path);
    std::cout << "KS statistic " << ks << ", p-value " << p << ", clamped PIT values " << res.clamped << "\n";
    std::cout << "wrote " << a.out << " and " << summary_path << "\n";
}

// ---------------------------------------------------------------------------
// grid curves

struct CurveArgs {
    std::string model;
    std::string covariate;
    int grid_size = 100;
    std::optional<double> grid_min, grid_max;
    bool bands = false;
    int draws = 1000;
    double level = 0.95;
    std::uint64_t seed = 1;
    std::string scale = "response";
    std::vector<double> quantiles;
    std::string out;
};

std::string pick_covariate(const CurveArgs& a, const std::set<std::string>& candidates, const char* what) {
    if (!a.covariate.empty()) return a.covariate;
    if (candidates.size() == 1) return *candidates.begin();
    throw ConfigError(std::string("the model has ") + std::to_string(candidates.size()) + " " + what +
                      " covariates; choose one with --covariate");
}

std::vector<double> make_grid(const FittedModel& fit, const std::string& covariate, const CurveArgs& a) {
    if (a.grid_size < 2) throw ConfigError("--grid-size must be >= 2");
    double lo = 0.0, hi = 0.0;
    bool found = false;
    for (const auto& b : fit.bases.bundles)
        if (b->spec.covariate == covariate) {
            lo = found ? std::min(lo, b->lower) : b->lower;
            hi = found ? std::max(hi, b->upper) : b->upper;
            found = true;
        }
    if (a.grid_min) lo = *a.grid_min;
    if (a.grid_max) hi = *a.grid_max;
    if (!found && !(a.grid_min && a.grid_max))
        throw ConfigError("covariate '" + covariate + "' has no smooth term; give --grid-min and --grid-max");
    if (!(hi > lo)) throw ConfigError("grid range must satisfy min < max");
    std::vector<double> grid;
    for (int g = 0; g < a.grid_size; ++g) grid.push_back(lo + (hi - lo) * g / (a.grid_size - 1));
    return grid;
}

std::set<std::string> state_covariates(const ModelSpec& spec) {
    std::set<std::string> out;
    for (const auto& per_state : spec.state_formulas)
        for (const auto& f : per_state) {
            out.insert(f.linear.begin(), f.linear.end());
            for (const auto& s : f.smooths) out.insert(s.covariate);
        }
    return out;
}

std::set<std::string> transition_covariates(const ModelSpec& spec) {
    std::set<std::string> out;
    for (const auto& f : spec.transition_formulas) {
        out.insert(f.linear.begin(), f.linear.end());
        for (const auto& s : f.smooths) out.insert(s.covariate);
    }
    return out;
}

void run_effects(const CurveArgs& a) {
    const auto m = load_model(a.model);
    const auto& fit = m.fit;
    const std::string cov = pick_covariate(a, state_covariates(fit.spec), "state-dependent");
    const auto grid = make_grid(fit, cov, a);
    CurveScale scale = CurveScale::Response;
    if (a.scale == "predictor" || a.scale == "link")
        scale = CurveScale::Predictor;
    else if (a.scale != "response")
        throw ConfigError("--scale must be 'response' or 'predictor'");
    const auto curves = predict_parameters(fit, cov, grid, a.quantiles, scale);
    std::optional<PosteriorSampleSet> samples;
    if (a.bands) samples = sample_posterior(fit, a.draws, a.seed);
    const auto names = fit.spec.family.parameter_names();

    auto out = open_out(a.out);
    out << "grid,state,parameter,estimate";
    if (a.bands) out << ",lower,upper";
    out << "\n";
    for (int i = 0; i < fit.spec.n_states; ++i) {
        for (int k = 0; k < fit.spec.num_params(); ++k) {
            std::optional<Band> band;
            if (samples) band = effect_band(fit, *samples, k, i, cov, grid, a.level, scale);
            for (std::size_t g = 0; g < grid.size(); ++g) {
                out << grid[g] << "," << i + 1 << "," << names[static_cast<std::size_t>(k)] << ","
                    << curves.values[static_cast<std::size_t>(i)](static_cast<Eigen::Index>(g), k);
                if (band) out << "," << band->lower[g] << "," << band->upper[g];
                out << "\n";
            }
        }
        for (std::size_t p = 0; p < a.quantiles.size(); ++p) {
            std::ostringstream label;
            label << "q" << a.quantiles[p];
            for (std::size_t g = 0; g < grid.size(); ++g) {
                out << grid[g] << "," << i + 1 << "," << label.str() << ","
                    << curves.quantiles[static_cast<std::size_t>(i)](static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(p));
                if (a.bands) out << ",,";
                out << "\n";
            }
        }
    }
    std::cout << "wrote " << a.out << "\n";
}

void run_transitions(const CurveArgs& a, bool stationary_only) {
    const auto m = load_model(a.model);
    const auto& fit = m.fit;
    const int n = fit.spec.n_states;
    const std::string cov = pick_covariate(a, transition_covariates(fit.spec), "transition");
    const auto grid = make_grid(fit, cov, a);
    std::optional<PosteriorSampleSet> samples;
    if (a.bands) samples = sample_posterior(fit, a.draws, a.seed);

    std::vector<std::pair<std::string, TransitionTarget>> targets;
    if (stationary_only) {
        for (int i = 0; i < n; ++i) targets.emplace_back(std::to_string(i + 1), StationaryEntry{i});
    } else {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) targets.emplace_back(std::to_string(i + 1) + "," + std::to_string(j + 1), TransitionEntry{i, j});
    }
    auto out = open_out(a.out);
    out << (stationary_only ? "grid,state,estimate" : "grid,from,to,estimate");
    if (a.bands) out << ",lower,upper,dropped";
    out << "\n";
    const auto tm = fit.transition_model();
    for (const auto& [label, target] : targets) {
        Band band;
        if (samples) {
            band = transition_band(fit, *samples, target, cov, grid, a.level);
        } else if (stationary_only) {
            const Eigen::MatrixXd curve = stationary_curve(tm, cov, grid);
            for (std::size_t g = 0; g < grid.size(); ++g)
                band.estimate.push_back(curve(static_cast<Eigen::Index>(g), std::get<StationaryEntry>(target).state));
        } else {
            CovariateRow row = tm.reference;
            const auto e = std::get<TransitionEntry>(target);
            for (double g : grid) {
                row[cov] = g;
                band.estimate.push_back(tpm_from_eta(eta_matrix(tm, row))(e.from, e.to));
            }
        }
        for (std::size_t g = 0; g < grid.size(); ++g) {
            out << grid[g] << "," << label << "," << band.estimate[g];
            if (samples) out << "," << band.lower[g] << "," << band.upper[g] << "," << band.dropped[g];
            out << "\n";
        }
    }
    std::cout << "wrote " << a.out << "\n";
}

void add_curve_options(CLI::App* cmd, CurveArgs& a, const std::string& default_out) {
    a.out = default_out;
    cmd->add_option("--model", a.model, "Model file written by fit")->required();
    cmd->add_option("--covariate", a.covariate, "Covariate on the grid (default: the only one)");
    cmd->add_option("--grid-size", a.grid_size, "Number of grid points")->capture_default_str();
    cmd->add_option("--grid-min", a.grid_min, "Grid lower end (default: knot range)");
    cmd->add_option("--grid-max", a.grid_max, "Grid upper end (default: knot range)");
    cmd->add_flag("--bands", a.bands, "Add pointwise confidence bands from posterior draws");
    cmd->add_option("--draws", a.draws, "Posterior draws for bands")->capture_default_str();
    cmd->add_option("--level", a.level, "Band coverage level")->capture_default_str();
    cmd->add_option("--seed", a.seed, "Seed for posterior draws")->capture_default_str();
    cmd->add_option("--out", a.out, "Output CSV")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Markov-switching GAMLSS: simulate, fit, decode and summarize"};
    app.require_subcommand(1);

    SimulateArgs sim_args;
    auto* sim = app.add_subcommand("simulate", "Simulate data from the built-in two-state design");
    sim->add_flag("--paper-dgp", sim_args.paper_dgp, "Use the built-in two-state design");
    sim->add_option("--T", sim_args.length, "Series length")->capture_default_str();
    sim->add_option("--seed", sim_args.seed, "Random seed")->capture_default_str();
    sim->add_option("--mean-offset", sim_args.mean_offset, "Added to the mean of state 1")->capture_default_str();
    sim->add_option("--skew-shape", sim_args.skew_shape, "Skew-normal responses with this shape");
    sim->add_option("--replications", sim_args.replications, "Number of datasets (files get a _NNN suffix)")
        ->capture_default_str();
    sim->add_option("--out", sim_args.out, "Output CSV")->capture_default_str();

    FitArgs fit_args;
    auto* fit = app.add_subcommand("fit", "Fit a model with automatic smoothness selection");
    fit->add_option("--config", fit_args.config, "JSON run configuration");
    fit->add_option("--data", fit_args.data, "CSV data file (overrides the config)");
    fit->add_option("--response", fit_args.response, "Response column");
    fit->add_option("--label", fit_args.label, "Opaque label column carried to outputs (e.g. dates)");
    fit->add_option("--family", fit_args.family, "normal or skew_normal");
    fit->add_option("--states", fit_args.states, "Number of states");
    fit->add_option("--mu", fit_args.mu, "Term for mu, e.g. smooth(x, k=10); repeatable");
    fit->add_option("--sigma", fit_args.sigma, "Term for sigma; repeatable");
    fit->add_option("--nu", fit_args.nu, "Term for nu (skew-normal); repeatable");
    fit->add_option("--transition", fit_args.transition, "Term shared by all transitions; repeatable");
    fit->add_option("--lag", fit_args.lags, "Lag directive, e.g. lag(spread, 360); repeatable");
    fit->add_option("--initial", fit_args.initial, "uniform, stationary, or comma-separated probabilities");
    fit->add_option("--seed", fit_args.seed, "Seed for multistart perturbations");
    fit->add_option("--multistart", fit_args.multistart, "Extra perturbed starting points");
    fit->add_option("--out", fit_args.out, "Output directory (overrides the config)");
    for (auto* opt : {"--response", "--label", "--family", "--states", "--mu", "--sigma", "--nu",
                      "--transition", "--lag", "--initial"})
        fit->get_option(opt)->excludes("--config");

    ModelArgs decode_args{.model = "", .data = "", .out = "decoded.csv"};
    auto* decode = app.add_subcommand("decode", "Most probable state sequence (Viterbi)");
    decode->add_option("--model", decode_args.model, "Model file written by fit")->required();
    decode->add_option("--data", decode_args.data, "CSV data file")->required();
    decode->add_option("--out", decode_args.out, "Output CSV")->capture_default_str();

    ModelArgs res_args{.model = "", .data = "", .out = "residuals.csv"};
    std::string summary_path;
    auto* res = app.add_subcommand("residuals", "One-step-ahead pseudo-residuals and KS test");
    res->add_option("--model", res_args.model, "Model file written by fit")->required();
    res->add_option("--data", res_args.data, "CSV data file")->required();
    res->add_option("--out", res_args.out, "Output CSV")->capture_default_str();
    res->add_option("--summary", summary_path, "Summary JSON (default: <out>_summary.json)");

    CurveArgs eff_args;
    auto* eff = app.add_subcommand("effects", "State-dependent parameter curves and conditional quantiles");
    add_curve_options(eff, eff_args, "effects.csv");
    eff->add_option("--scale", eff_args.scale, "response or predictor")->capture_default_str();
    eff->add_option("--quantiles", eff_args.quantiles, "Conditional quantile levels, e.g. 0.05 0.5 0.95");

    CurveArgs tr_args;
    auto* tr = app.add_subcommand("transitions", "Transition probabilities along a covariate grid");
    add_curve_options(tr, tr_args, "transitions.csv");

    CurveArgs st_args;
    auto* st = app.add_subcommand("stationary", "Stationary state probabilities along a covariate grid");
    add_curve_options(st, st_args, "stationary.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*sim) run_simulate(sim_args);
        if (*fit) run_fit(fit_args);
        if (*decode) run_decode(decode_args);
        if (*res) run_residuals(res_args, summary_path);
        if (*eff) run_effects(eff_args);
        if (*tr) run_transitions(tr_args, false);
        if (*st) run_transitions(st_args, true);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
