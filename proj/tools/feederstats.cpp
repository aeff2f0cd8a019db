// feederstats command-line driver. Every subcommand is a pure function of its
// input files, flags and seed; outputs are written atomically into the output
// directory (--out-dir, else $FEEDERSTATS_OUTPUT_DIR, else the working directory).

#include "feederstats/aggregate.hpp"
#include "feederstats/feeder.hpp"
#include "feederstats/forecaster.hpp"
#include "feederstats/io.hpp"
#include "feederstats/residuals.hpp"
#include "feederstats/scaling.hpp"
#include "feederstats/synth.hpp"
#include "feederstats/tailmodel.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace feederstats;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Common {
    std::string out_dir;
    std::string format = "json";
};

fs::path output_dir(const Common& c) {
    if (!c.out_dir.empty()) return c.out_dir;
    if (const char* env = std::getenv("FEEDERSTATS_OUTPUT_DIR"); env && *env) return env;
    return fs::current_path();
}

void emit(const Common& c, const std::string& name, const std::string& content) {
    const auto path = output_dir(c) / name;
    io::write_file_atomic(path, content);
    std::cout << path.string() << "\n";
}

// A flat JSON object as a two-row CSV (header, values); arrays are split into
// name_0, name_1, ... columns.
std::string flat_csv(const json& j) {
    std::string head, row;
    bool first = true;
    auto add = [&](const std::string& k, const json& v) {
        if (!first) head += ",", row += ",";
        first = false;
        head += k;
        if (v.is_null()) return;
        if (v.is_number_float()) row += io::format_number(v.get<double>());
        else if (v.is_string()) row += v.get<std::string>();
        else row += v.dump();
    };
    for (const auto& [k, v] : j.items()) {
        if (v.is_array())
            for (std::size_t i = 0; i < v.size(); ++i) add(k + "_" + std::to_string(i), v[i]);
        else
            add(k, v);
    }
    return head + "\n" + row + "\n";
}

void emit_summary(const Common& c, const std::string& stem, const json& j) {
    if (c.format == "csv") emit(c, stem + ".csv", flat_csv(j));
    else emit(c, stem + ".json", j.dump(2) + "\n");
}

json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw Error("cannot open " + p.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw SchemaError(p.string() + ": " + e.what());
    }
}

// Customers come either from a directory of history CSVs or from a
// synthetic-population config.
struct PopulationSource {
    std::string dir;
    std::string synth_config;

    template <class F>
    auto with(F&& f) const {
        if (!synth_config.empty()) {
            const synth::SyntheticPopulation pop(io::synth_config_from_json(read_json(synth_config)));
            return f(pop);
        }
        if (dir.empty()) throw CLI::ValidationError("population", "give a population directory or --synth");
        const auto customers = io::read_population_dir(dir);
        const aggregate::VectorPopulation pop(customers);
        return f(pop);
    }
};

void add_population_options(CLI::App* cmd, PopulationSource& src) {
    auto* dir = cmd->add_option("population", src.dir, "Directory of per-customer history CSVs");
    auto* syn = cmd->add_option("--synth", src.synth_config, "Synthetic population config (JSON)");
    dir->excludes(syn);
    syn->excludes(dir);
}

forecast::ForecasterConfig forecaster_config(const std::string& k, std::vector<std::size_t> candidates,
                                             std::size_t shape_k, std::size_t train_days, bool intercept) {
    forecast::ForecasterConfig cfg;
    if (k == "cv") {
        cfg.order_candidates = candidates.empty() ? std::vector<std::size_t>{1, 2, 3, 7} : std::move(candidates);
    } else {
        try {
            cfg.total_order = std::stoul(k);
        } catch (const std::exception&) {
            throw CLI::ValidationError("--k", "expected a positive integer or 'cv', got '" + k + "'");
        }
        if (cfg.total_order == 0) throw CLI::ValidationError("--k", "order must be >= 1");
    }
    cfg.shape_order = shape_k;
    cfg.train_days = train_days;
    cfg.fit.intercept = intercept;
    return cfg;
}

void warn(const std::vector<aggregate::Warning>& ws) {
    for (const auto& w : ws) std::cerr << "warning: " << w.message << "\n";
}

const char* error_kind(const std::exception& e) {
    if (dynamic_cast<const ParseError*>(&e)) return "parse_error";
    if (dynamic_cast<const SchemaError*>(&e)) return "schema_error";
    if (dynamic_cast<const InvalidParameter*>(&e)) return "invalid_parameter";
    if (dynamic_cast<const DomainError*>(&e)) return "domain_error";
    if (dynamic_cast<const DegenerateData*>(&e)) return "degenerate_data";
    if (dynamic_cast<const SingularFit*>(&e)) return "singular_fit";
    if (dynamic_cast<const ConvergenceError*>(&e)) return "convergence_error";
    if (dynamic_cast<const ContractError*>(&e)) return "contract_error";
    if (dynamic_cast<const NotFound*>(&e)) return "not_found";
    if (dynamic_cast<const fs::filesystem_error*>(&e)) return "io_error";
    return "error";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Statistical toolkit for distribution-feeder loads", "feederstats"};
    app.require_subcommand(1);
    Common common;
    app.add_option("--out-dir", common.out_dir, "Output directory (default: $FEEDERSTATS_OUTPUT_DIR or .)");

    auto add_format = [&](CLI::App* cmd) {
        cmd->add_option("--format", common.format, "Summary format")->check(CLI::IsMember({"json", "csv"}));
    };

    // fit-gpd
    std::string loads_path;
    std::optional<double> theta;
    std::size_t n_thresholds = 50;
    std::size_t min_exceedances = 10;
    auto* fit_gpd = app.add_subcommand("fit-gpd", "Fit a generalized Pareto law and emit tail diagnostics");
    fit_gpd->add_option("loads", loads_path, "CSV with one load_kwh column")->required()->check(CLI::ExistingFile);
    fit_gpd->add_option("--theta", theta, "Fixed location (default: just below the sample minimum)");
    fit_gpd->add_option("--thresholds", n_thresholds, "Mean-excess thresholds (quantiles 0..0.99)")
        ->check(CLI::Range(std::size_t{2}, std::size_t{100000}));
    fit_gpd->add_option("--min-exceedances", min_exceedances, "Smallest exceedance count per threshold")
        ->check(CLI::PositiveNumber);
    add_format(fit_gpd);

    // group-feeder
    std::string tree_path;
    auto* group = app.add_subcommand("group-feeder", "Aggregate vertex loads by nearest upstream protective device");
    group->add_option("tree", tree_path, "CSV parent,child,device,child_load_kwh")->required()->check(CLI::ExistingFile);

    // forecast
    std::string history_path, k_arg = "1";
    std::vector<std::size_t> candidates;
    std::size_t shape_k = 1, cv_folds = 5;
    bool no_intercept = false;
    auto* fc = app.add_subcommand("forecast", "Fit the day-ahead models and forecast the day after the history");
    fc->add_option("history", history_path, "Long-format CSV date,hour,load_kwh,temp_c")
        ->required()
        ->check(CLI::ExistingFile);
    fc->add_option("--k", k_arg, "Total-model order, or 'cv' for cross-validated selection")->required();
    fc->add_option("--candidates", candidates, "Orders tried by --k cv")->delimiter(',');
    fc->add_option("--folds", cv_folds, "Cross-validation folds")->check(CLI::PositiveNumber);
    fc->add_option("--shape-k", shape_k, "Shape-model order")->check(CLI::PositiveNumber);
    fc->add_flag("--no-intercept", no_intercept, "Fit without intercept terms");

    // agg-curve
    PopulationSource agg_src;
    std::vector<std::size_t> levels{1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000};
    std::size_t replicates = 20, train_days = 365;
    std::optional<std::uint64_t> seed;
    double p_exp = 1.0;
    auto* agg = app.add_subcommand("agg-curve", "Forecast error versus aggregate size, with the fitted scaling law");
    add_population_options(agg, agg_src);
    agg->add_option("--levels", levels, "Customers per aggregate")->delimiter(',');
    agg->add_option("--replicates", replicates, "Random aggregates per level")->check(CLI::PositiveNumber);
    agg->add_option("--train-days", train_days, "Days used for fitting; the rest are forecast")
        ->check(CLI::PositiveNumber);
    agg->add_option("--k", k_arg, "Total-model order, or 'cv'");
    agg->add_option("--shape-k", shape_k, "Shape-model order")->check(CLI::PositiveNumber);
    agg->add_option("--p", p_exp, "Scaling-law exponent")->check(CLI::PositiveNumber);
    agg->add_option("--seed", seed, "Seed for aggregate sampling")->required();
    add_format(agg);

    // fit-scaling
    std::string curve_path, method = "auto";
    auto* fit_scaling = app.add_subcommand("fit-scaling", "Fit the scaling law to an aggregation-curve CSV");
    fit_scaling->add_option("curve", curve_path, "CSV level,replicate,W_kwh,cv_pct")
        ->required()
        ->check(CLI::ExistingFile);
    fit_scaling->add_option("--p", p_exp, "Exponent on W")->check(CLI::PositiveNumber);
    fit_scaling->add_option("--method", method, "Estimator")
        ->check(CLI::IsMember({"auto", "linearized", "nonlinear"}));
    add_format(fit_scaling);

    // residual-sweep
    PopulationSource sweep_src;
    double alpha = 0.05;
    std::size_t max_lag = 24;
    std::string gamma_mode = "literal";
    auto* sweep = app.add_subcommand("residual-sweep", "Normality pass rate and correlation energy per aggregate size");
    add_population_options(sweep, sweep_src);
    sweep->add_option("--levels", levels, "Customers per aggregate")->delimiter(',');
    sweep->add_option("--replicates", replicates, "Random aggregates per level")->check(CLI::PositiveNumber);
    sweep->add_option("--train-days", train_days, "Days used for fitting")->check(CLI::PositiveNumber);
    sweep->add_option("--k", k_arg, "Total-model order, or 'cv'");
    sweep->add_option("--alpha", alpha, "Shapiro-Wilk significance level")->check(CLI::Range(1e-6, 0.5));
    sweep->add_option("--max-lag", max_lag, "Largest autocorrelation lag")->check(CLI::PositiveNumber);
    sweep->add_option("--gamma", gamma_mode, "Correlation energy numerator")
        ->check(CLI::IsMember({"literal", "significant"}));
    sweep->add_option("--seed", seed, "Seed for aggregate sampling")->required();

    // synth
    std::string config_path, out_dir;
    std::optional<std::size_t> n_customers, n_days;
    auto* syn = app.add_subcommand("synth", "Write a synthetic customer population");
    syn->add_option("--config", config_path, "Population config (JSON)")->check(CLI::ExistingFile);
    syn->add_option("--out", out_dir, "Directory for customer CSVs")->required();
    syn->add_option("--customers", n_customers, "Override n_customers")->check(CLI::PositiveNumber);
    syn->add_option("--days", n_days, "Override n_days")->check(CLI::PositiveNumber);
    syn->add_option("--seed", seed, "Population seed (overrides the config)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        if (*fit_gpd) {
            const auto x = io::read_loads_csv(loads_path);
            const auto policy = theta ? tail::ThetaPolicy::fixed_value(*theta) : tail::ThetaPolicy::sample_minimum();
            const auto fit = tail::fit_gpd_mle(x, policy);
            const auto thresholds = tail::quantile_thresholds(x, 0.0, 0.99, n_thresholds);
            const auto diag = tail::tail_diagnostics(x, thresholds, min_exceedances);
            emit_summary(common, "gpd_fit", io::to_json(fit));
            emit(common, "mean_excess.csv", io::mean_excess_csv(diag.mean_excess));
            emit(common, "log_survival.csv", io::curve_csv(diag.log_survival, "log_x", "log_survival"));
            emit(common, "zipf.csv", io::curve_csv(diag.zipf, "log_rank", "log_x"));
        } else if (*group) {
            const auto tree = io::read_tree_csv(tree_path);
            emit(common, "groups.csv", io::groups_csv(feeder::group_by_device(tree)));
        } else if (*fc) {
            auto cfg = forecaster_config(k_arg, candidates, shape_k, 0, !no_intercept);
            std::vector<std::string> dates;
            const auto h = io::read_history_csv(history_path, &dates);
            json selection = nullptr;
            if (!cfg.order_candidates.empty()) {
                const auto sel = forecast::cross_validate_order(h, cfg.order_candidates, cv_folds, cfg.fit);
                cfg.total_order = sel.order;
                selection = json::array();
                for (const auto& s : sel.scores)
                    selection.push_back({{"order", s.order},
                                         {"mse", s.skipped ? json(nullptr) : json(s.mse)},
                                         {"skipped", s.skipped},
                                         {"reason", s.reason}});
            }
            const auto total = forecast::fit_total_arx(h, cfg.total_order, cfg.fit);
            const auto shape = forecast::fit_shape_varx(h, cfg.shape_order, cfg.fit);

            // In-sample one-step residuals for every day with a full window.
            std::string res = "date,hour,actual_kwh,predicted_kwh,residual_kwh\n";
            const std::size_t first = std::max(cfg.total_order, cfg.shape_order);
            for (std::size_t d = first; d < h.n_days(); ++d) {
                const auto f = forecast::forecast_day_at(total, shape, h, d);
                for (std::size_t hr = 0; hr < forecast::kHours; ++hr) {
                    const double a = h.days[d].hours[hr], p = f.profile.hours[hr];
                    res += dates[d] + "," + std::to_string(hr) + "," + io::format_number(a) + "," +
                           io::format_number(p) + "," + io::format_number(a - p) + "\n";
                }
            }
            emit(common, "residuals.csv", res);
            json models{{"total", io::to_json(total)}, {"shape", io::to_json(shape)}};
            if (!selection.is_null()) models["order_selection"] = selection;
            emit(common, "models.json", models.dump(2) + "\n");
            if (h.has_next_day_temperature())
                emit(common, "profile.csv", io::profile_csv(forecast::forecast_day(total, shape, h)));
            else
                std::cerr << "warning: history has no temperature-only final date; no next-day profile written\n";
        } else if (*agg) {
            const auto cfg = forecaster_config(k_arg, {}, shape_k, train_days, true);
            const auto curve = agg_src.with([&](const auto& pop) {
                return scaling::build_agg_curve(pop, levels, replicates, cfg, *seed);
            });
            warn(curve.warnings);
            emit(common, "agg_curve.csv", io::agg_curve_csv(curve.points));
            emit_summary(common, "scaling_law", io::to_json(scaling::fit_scaling_law(curve.points, p_exp)));
        } else if (*fit_scaling) {
            std::ifstream in(curve_path);
            const auto pts = io::parse_agg_curve_csv(in, curve_path);
            const auto m = method == "linearized"  ? scaling::FitMethod::Linearized
                           : method == "nonlinear" ? scaling::FitMethod::Nonlinear
                                                   : scaling::FitMethod::Auto;
            emit_summary(common, "scaling_law", io::to_json(scaling::fit_scaling_law(pts, p_exp, m)));
        } else if (*sweep) {
            const auto cfg = forecaster_config(k_arg, {}, 1, train_days, true);
            residuals::SweepOptions opts;
            opts.replicates = replicates;
            opts.alpha = alpha;
            opts.max_lag = max_lag;
            opts.gamma_mode = gamma_mode == "significant" ? residuals::GammaMode::Significant
                                                          : residuals::GammaMode::Literal;
            const auto result = sweep_src.with([&](const auto& pop) {
                return residuals::sweep_normality(pop, levels, cfg, *seed, opts);
            });
            warn(result.warnings);
            emit(common, "residual_sweep.csv", io::sweep_csv(result));
        } else if (*syn) {
            auto cfg = config_path.empty() ? synth::SynthConfig{} : io::synth_config_from_json(read_json(config_path));
            if (n_customers) cfg.n_customers = *n_customers;
            if (n_days) cfg.n_days = *n_days;
            cfg.seed = *seed;
            const synth::SyntheticPopulation pop(cfg);
            Common target = common;
            target.out_dir = out_dir;
            const int width = static_cast<int>(std::to_string(cfg.n_customers - 1).size());
            for (std::size_t i = 0; i < pop.size(); ++i) {
                char name[64];
                std::snprintf(name, sizeof name, "customer_%0*zu.csv", width, i);
                io::write_file_atomic(fs::path(out_dir) / name, io::history_csv(pop.customer(i)));
            }
            emit(target, "population.json", io::to_json(cfg).dump(2) + "\n");
        }
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", error_kind(e)}, {"message", e.what()}}.dump() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}
