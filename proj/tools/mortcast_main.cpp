// Command-line front end: synthetic data generation, rate surfaces,
// rolling-origin cross-validation, recursive forecasting, and actuarial
// outputs. Every run writes a manifest that reproduces it byte for byte.

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mortcast/crossval.hpp"
#include "mortcast/dataset.hpp"
#include "mortcast/io.hpp"
#include "mortcast/lifetable.hpp"
#include "mortcast/registry.hpp"
#include "mortcast/serialize.hpp"
#include "mortcast/types.hpp"

namespace fs = std::filesystem;
using namespace mortcast;

namespace {

using KvMap = std::map<std::string, std::string>;

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// key=value lines; blank lines and '#' comments ignored.
KvMap load_kv_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file: " + path.string());
    KvMap kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw DataError("config line " + std::to_string(lineno) +
                            " is not key=value: " + t);
        kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    return kv;
}

// Resolved settings for one run. Insertion into the map is the single source
// of truth for the manifest, so every knob that affects output goes in here.
struct RunSettings {
    std::string command;
    KvMap values;

    void set(const std::string& key, const std::string& v) { values[key] = v; }
    void set_int(const std::string& key, long long v) { values[key] = std::to_string(v); }
    void set_double(const std::string& key, double v) { values[key] = format_double(v); }

    const std::string& get(const std::string& key) const {
        const auto it = values.find(key);
        if (it == values.end()) throw DataError("missing setting: " + key);
        return it->second;
    }
    long long get_int(const std::string& key) const {
        return parse_integer(get(key), 0, key);
    }
    double get_double(const std::string& key) const {
        return parse_double(get(key), 0, key);
    }

    // Plain key=value lines; loadable back through --config. Values may
    // themselves contain '=' (model specs), so this does not go through the
    // delimited writer.
    void write_manifest(const fs::path& out_dir) const {
        std::ofstream f(out_dir / "manifest.txt", std::ios::binary);
        if (!f) throw DataError("cannot write manifest in " + out_dir.string());
        f << "command=" << command << "\n";
        for (const auto& [k, v] : values) f << k << "=" << v << "\n";
    }
};

// An option is filled from, in increasing precedence: built-in default,
// config file, command-line flag.
class OptionSet {
public:
    OptionSet(CLI::App* cmd, const KvMap& config, RunSettings* out)
        : cmd_(cmd), config_(config), out_(out) {}

    void add(const std::string& key, const std::string& fallback,
             const std::string& help, bool required = false) {
        Entry e;
        e.key = key;
        const auto it = config_.find(key);
        e.value = it != config_.end() ? it->second : fallback;
        e.from_config = it != config_.end();
        e.required = required;
        entries_.push_back(std::move(e));
        Entry* slot = &entries_.back();
        cmd_->add_option_function<std::string>(
                "--" + key,
                [slot](const std::string& v) {
                    slot->value = v;
                    slot->from_flag = true;
                },
                help);
    }

    // Call after parsing: enforces required options and fills the manifest.
    void resolve() {
        for (const auto& e : entries_) {
            if (e.required && !e.from_config && !e.from_flag)
                throw DataError("required option missing: --" + e.key);
            out_->set(e.key, e.value);
        }
    }

private:
    struct Entry {
        std::string key;
        std::string value;
        bool from_config = false;
        bool from_flag = false;
        bool required = false;
    };

    CLI::App* cmd_;
    const KvMap& config_;
    RunSettings* out_;
    // Deque-like stability: entries are appended before parse and never
    // reordered, so the lambdas' pointers stay valid.
    std::deque<Entry> entries_;
};

std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> parts;
    std::string p;
    while (in >> p) parts.push_back(p);
    return parts;
}

std::string sanitize_for_filename(const std::string& spec_text) {
    std::string s = spec_text;
    for (char& c : s)
        if (c == ':' || c == ',' || c == '=' || c == '.') c = '_';
    return s;
}

void print_warnings(const Warnings& w) {
    for (const auto& msg : w) std::cerr << "warning: " << msg << "\n";
}

fs::path prepare_out_dir(const RunSettings& s) {
    const fs::path dir(s.get("out-dir"));
    fs::create_directories(dir);
    return dir;
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_synth(RunSettings& s) {
    SynthConfig cfg;
    cfg.age_min = static_cast<int>(s.get_int("age-min"));
    cfg.age_max = static_cast<int>(s.get_int("age-max"));
    cfg.year_min = static_cast<int>(s.get_int("year-min"));
    cfg.year_max = static_cast<int>(s.get_int("year-max"));
    cfg.exposure_level = s.get_double("exposure");
    cfg.seed = static_cast<std::uint64_t>(s.get_int("seed"));
    const MortalityDataset ds = generate_synthetic(cfg);
    const fs::path out = prepare_out_dir(s);
    save_dataset(ds, out / "dataset.csv");
    s.write_manifest(out);
    std::cout << "wrote " << (out / "dataset.csv").string() << "\n";
    return 0;
}

int cmd_rates(RunSettings& s) {
    const MortalityDataset ds = load_dataset(s.get("data"));
    const RateSurface rs = compute_rates(ds);
    const fs::path out = prepare_out_dir(s);
    save_surface(rs, out / "rates.csv");
    s.write_manifest(out);
    std::cout << "wrote " << (out / "rates.csv").string() << "\n";
    return 0;
}

int cmd_cv(RunSettings& s) {
    const MortalityDataset ds = load_dataset(s.get("data"));
    const std::vector<std::string> spec_texts = split_ws(s.get("models"));
    if (spec_texts.empty()) throw DataError("no model specs given (--models)");
    std::vector<ModelSpec> specs;
    for (const auto& t : spec_texts) specs.push_back(parse_model_spec(t));
    // Canonicalize the manifest so a rerun parses the identical spec list.
    std::string canon;
    for (const auto& sp : specs) {
        if (!canon.empty()) canon += ' ';
        canon += sp.text();
    }
    s.set("models", canon);

    const int first_train_end = static_cast<int>(s.get_int("first-train-end"));
    const int last_test = s.values.count("last-test") && !s.get("last-test").empty()
                              ? static_cast<int>(s.get_int("last-test"))
                              : ds.year_max();
    s.set_int("last-test", last_test);

    const CVReport report =
        ts_cross_validate(ds, specs, first_train_end, last_test,
                          static_cast<std::uint64_t>(s.get_int("seed")),
                          static_cast<int>(s.get_int("jobs")));
    print_warnings(report.warnings);

    const fs::path out = prepare_out_dir(s);
    save_cv_means(report, out / "cv_means.csv");
    save_cv_summary(report, out / "cv_summary.csv");
    for (const auto& m : report.models) {
        if (m.folds.empty()) continue;
        residual_grid_export(report, m.spec_text,
                             out / ("residuals_" + sanitize_for_filename(m.spec_text) + ".csv"));
    }
    std::ofstream json(out / "cv_report.json", std::ios::binary);
    json << cv_report_json(report);
    json.close();
    s.write_manifest(out);
    std::cout << "wrote " << (out / "cv_means.csv").string() << "\n";
    return 0;
}

int cmd_forecast(RunSettings& s) {
    const MortalityDataset ds = load_dataset(s.get("data"));
    const ModelSpec spec = parse_model_spec(s.get("model"));
    s.set("model", spec.text());
    const int train_end = s.values.count("train-end") && !s.get("train-end").empty()
                              ? static_cast<int>(s.get_int("train-end"))
                              : ds.year_max();
    s.set_int("train-end", train_end);
    const int horizon = static_cast<int>(s.get_int("horizon"));
    if (horizon < 1) throw DataError("forecast horizon must be at least 1");

    const MortalityDataset train = ds.restrict_years(ds.year_min(), train_end);
    Warnings warnings;
    const FittedModel model =
        fit_model(spec, train, static_cast<std::uint64_t>(s.get_int("seed")), &warnings);
    print_warnings(warnings);
    const RateSurface history = compute_rates(train);
    const RateSurface forecast = predict_recursive(model, history, horizon);

    const fs::path out = prepare_out_dir(s);
    save_surface(forecast, out / "forecast_rates.csv");
    save_model(model, out / "model.json");
    if (const auto* fp = std::get_if<FnnPayload>(&model.payload)) {
        save_history(fp->history, out / "history.csv");
    } else if (const auto* hp = std::get_if<HybridPayload>(&model.payload)) {
        save_history(hp->history, out / "history.csv");
    } else if (const auto* lp = std::get_if<LcPayload>(&model.payload)) {
        save_leecarter_params(lp->female, out, "lc_f");
        save_leecarter_params(lp->male, out, "lc_m");
    }

    // Curve export: predicted curve per forecast year with observed points
    // where the input data has them.
    const RateSurface observed = compute_rates(ds);
    std::vector<std::vector<std::string>> rows;
    for (int year = train_end + 1; year <= train_end + horizon; ++year) {
        for (Gender g : kGenders) {
            for (int age = forecast.age_min(); age <= forecast.age_max(); ++age) {
                const double pred = forecast.missing(g, age, year)
                                        ? std::nan("")
                                        : forecast.rate(g, age, year);
                double obs = std::nan("");
                if (observed.in_range(age, year) && !observed.missing(g, age, year))
                    obs = observed.rate(g, age, year);
                rows.push_back({std::to_string(year), std::string(1, gender_code(g)),
                                std::to_string(age), format_double(obs),
                                format_double(pred)});
            }
        }
    }
    write_delimited(out / "curves.csv", {"year", "gender", "age", "observed", "predicted"},
                    rows);
    s.write_manifest(out);
    std::cout << "wrote " << (out / "forecast_rates.csv").string() << "\n";
    return 0;
}

MortalityDataset restrict_ages(const MortalityDataset& ds, int age_lo) {
    if (age_lo <= ds.age_min()) return ds;
    if (age_lo > ds.age_max()) throw DataError("age floor above data range");
    MortalityDataset out(age_lo, ds.age_max(), ds.year_min(), ds.year_max());
    for (Gender g : kGenders)
        for (int age = age_lo; age <= ds.age_max(); ++age)
            for (int year = ds.year_min(); year <= ds.year_max(); ++year)
                out.set_cell(g, age, year, ds.deaths(g, age, year), ds.exposure(g, age, year));
    return out;
}

int cmd_apps(RunSettings& s) {
    const RateSurface rs = load_surface(s.get("rates"));
    const fs::path out = prepare_out_dir(s);
    const int omega = static_cast<int>(s.get_int("omega"));
    const int ex_age = static_cast<int>(s.get_int("ex-age"));
    AnnuityConfig acfg;
    acfg.interest_rate = s.get_double("interest");

    // Life expectancy at --ex-age from each year's period table.
    {
        std::vector<std::vector<std::string>> rows;
        for (int year = rs.year_min(); year <= rs.year_max(); ++year) {
            for (Gender g : kGenders) {
                const LifeTableSlice t = period_slice(rs, g, ex_age, year, omega);
                rows.push_back({std::to_string(year), std::string(1, gender_code(g)),
                                format_double(life_expectancy(t, ex_age)),
                                format_double(annuity_value(t, ex_age, acfg))});
            }
        }
        write_delimited(out / "ex_table.csv", {"year", "gender", "ex", "annuity"}, rows);
    }

    const bool has_data = s.values.count("data") && !s.get("data").empty();
    if (has_data) {
        const MortalityDataset full = load_dataset(s.get("data"));
        const int app_age_min = static_cast<int>(s.get_int("app-age-min"));
        const MortalityDataset ds = restrict_ages(full, app_age_min);

        const int valuation_year = s.values.count("valuation-year") &&
                                           !s.get("valuation-year").empty()
                                       ? static_cast<int>(s.get_int("valuation-year"))
                                       : ds.year_max();
        s.set_int("valuation-year", valuation_year);
        const ProvisionResult prov = aggregate_provision(ds, rs, valuation_year, acfg, omega);
        write_delimited(out / "provision.csv",
                        {"basis", "valuation_year", "interest", "female", "male", "total"},
                        {{"cohort-dynamic", std::to_string(valuation_year),
                          format_double(acfg.interest_rate),
                          format_double(prov.by_gender[gender_index(Gender::Female)]),
                          format_double(prov.by_gender[gender_index(Gender::Male)]),
                          format_double(prov.total)}});

        const int base_year = s.values.count("base-year") && !s.get("base-year").empty()
                                  ? static_cast<int>(s.get_int("base-year"))
                                  : ds.year_max();
        s.set_int("base-year", base_year);
        const int horizon = static_cast<int>(s.get_int("horizon"));
        const CashFlowProjection proj = project_exposure(ds, rs, base_year, horizon);
        {
            std::vector<std::vector<std::string>> rows;
            for (int k = 0; k <= proj.horizon; ++k) {
                const double female = proj.exposure[gender_index(Gender::Female)].col(k).sum();
                const double male = proj.exposure[gender_index(Gender::Male)].col(k).sum();
                rows.push_back({std::to_string(proj.base_year + k), format_double(female),
                                format_double(male), format_double(proj.annual_total(k))});
            }
            write_delimited(out / "cashflow.csv", {"year", "female", "male", "total"}, rows);
        }

        const int compare_year = static_cast<int>(s.get_int("compare-year"));
        if (compare_year >= 0) {
            const ProjectionComparison cmp = compare_projection(
                proj, ds, compare_year, static_cast<int>(s.get_int("band-width")));
            std::vector<std::vector<std::string>> rows;
            for (const auto& b : cmp.bands) {
                rows.push_back({std::to_string(b.age_lo) + "-" + std::to_string(b.age_hi),
                                format_double(b.predicted), format_double(b.observed),
                                b.rel_diff ? format_double(*b.rel_diff) : "undefined"});
            }
            rows.push_back({"total", format_double(cmp.predicted_total),
                            format_double(cmp.observed_total),
                            format_double(cmp.total_rel_diff)});
            write_delimited(out / "comparison.csv",
                            {"band", "predicted", "observed", "rel_diff"}, rows);
        }
    }
    s.write_manifest(out);
    std::cout << "wrote " << (out / "ex_table.csv").string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

int run(int argc, char** argv) {
    // The config file participates in defaults, so find it before building
    // the option tree.
    fs::path config_path;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--config" && i + 1 < argc) config_path = argv[i + 1];
        else if (a.rfind("--config=", 0) == 0) config_path = a.substr(9);
    }
    KvMap config;
    if (!config_path.empty()) {
        config = load_kv_file(config_path);
        if (auto it = config.find("command"); it != config.end()) {
            // A manifest names its command; it must match the one invoked.
            bool matches = false;
            for (int i = 1; i < argc; ++i)
                if (it->second == argv[i]) matches = true;
            if (!matches)
                throw DataError("config was written for command '" + it->second + "'");
            config.erase(it);
        }
    }

    CLI::App app{"mortality forecasting toolkit"};
    app.require_subcommand(1);

    RunSettings settings;
    std::string config_flag;

    auto add_globals = [&](CLI::App* sub, OptionSet& opts) {
        sub->add_option("--config", config_flag, "key=value config file; flags override");
        opts.add("seed", "1", "master RNG seed");
        opts.add("out-dir", "out", "output directory");
        opts.add("jobs", "1", "worker threads for (model, fold) jobs");
    };

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    OptionSet synth_opts(synth, config, &settings);
    add_globals(synth, synth_opts);
    synth_opts.add("age-min", "30", "youngest age");
    synth_opts.add("age-max", "95", "oldest age");
    synth_opts.add("year-min", "2012", "first calendar year");
    synth_opts.add("year-max", "2021", "last calendar year");
    synth_opts.add("exposure", "50000", "exposure level at the youngest age");

    CLI::App* rates = app.add_subcommand("rates", "compute a rate surface from a dataset");
    OptionSet rates_opts(rates, config, &settings);
    add_globals(rates, rates_opts);
    rates_opts.add("data", "", "input dataset csv", /*required=*/true);

    CLI::App* cv = app.add_subcommand("cv", "rolling-origin cross-validation");
    OptionSet cv_opts(cv, config, &settings);
    add_globals(cv, cv_opts);
    cv_opts.add("data", "", "input dataset csv", true);
    cv_opts.add("models", "", "whitespace-separated model specs", true);
    cv_opts.add("first-train-end", "", "last training year of the first fold", true);
    cv_opts.add("last-test", "", "last test year (default: last data year)");

    CLI::App* forecast = app.add_subcommand("forecast", "fit one model and forecast rates");
    OptionSet forecast_opts(forecast, config, &settings);
    add_globals(forecast, forecast_opts);
    forecast_opts.add("data", "", "input dataset csv", true);
    forecast_opts.add("model", "", "model spec", true);
    forecast_opts.add("train-end", "", "last training year (default: last data year)");
    forecast_opts.add("horizon", "1", "years to forecast");

    CLI::App* apps = app.add_subcommand("apps", "life tables, provision, cash flows");
    OptionSet apps_opts(apps, config, &settings);
    add_globals(apps, apps_opts);
    apps_opts.add("rates", "", "rate surface csv (observed or forecast)", true);
    apps_opts.add("data", "", "dataset csv supplying exposures (optional)");
    apps_opts.add("ex-age", "60", "age for the life-expectancy table");
    apps_opts.add("interest", "0.05", "annual real interest rate");
    apps_opts.add("omega", "100", "terminal life-table age");
    apps_opts.add("app-age-min", "60", "age floor for provision and projection");
    apps_opts.add("valuation-year", "", "provision valuation year (default: last data year)");
    apps_opts.add("base-year", "", "projection base year (default: last data year)");
    apps_opts.add("horizon", "10", "projection horizon in years");
    apps_opts.add("compare-year", "-1", "observed year to compare the projection against");
    apps_opts.add("band-width", "5", "age-band width for the comparison");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (synth->parsed()) {
        settings.command = "synth";
        synth_opts.resolve();
        return cmd_synth(settings);
    }
    if (rates->parsed()) {
        settings.command = "rates";
        rates_opts.resolve();
        return cmd_rates(settings);
    }
    if (cv->parsed()) {
        settings.command = "cv";
        cv_opts.resolve();
        return cmd_cv(settings);
    }
    if (forecast->parsed()) {
        settings.command = "forecast";
        forecast_opts.resolve();
        return cmd_forecast(settings);
    }
    if (apps->parsed()) {
        settings.command = "apps";
        apps_opts.resolve();
        return cmd_apps(settings);
    }
    std::cerr << "no command given\n";
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const ModelError& e) {
        std::cerr << "model error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
