#include <doctest.h>

#include <json.hpp>

#include <fstream>
#include <string>

#include "cli_harness.hpp"
#include "mortcast/crossval.hpp"
#include "mortcast/dataset.hpp"
#include "mortcast/io.hpp"
#include "mortcast/registry.hpp"
#include "mortcast/serialize.hpp"

using namespace mortcast;
using testsupport::CliResult;
using testsupport::read_file;
using testsupport::run_cli;
using testsupport::TempDir;

namespace {

const std::string kExe = MORTCAST_CLI_PATH;

// Shared small-grid flags: 2 x 11 ages x 6 years keeps every subcommand fast.
const std::string kSynthGrid =
    "--age-min 40 --age-max 50 --year-min 2012 --year-max 2017 --exposure 20000";
const std::string kSynthArgs = kSynthGrid + " --seed 5";

CliResult cli(const TempDir& tmp, const std::string& args, const std::string& log) {
    return run_cli(kExe, args, tmp.path() / log);
}

std::map<std::string, std::string> parse_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

}  // namespace

TEST_CASE("synth writes a loadable, seed-deterministic dataset") {
    TempDir tmp("synth");
    const auto out1 = tmp.path() / "a";
    const auto out2 = tmp.path() / "b";
    const auto out3 = tmp.path() / "c";

    CHECK(cli(tmp, "synth " + kSynthArgs + " --out-dir " + out1.string(), "s1.log").exit_code == 0);
    CHECK(cli(tmp, "synth " + kSynthArgs + " --out-dir " + out2.string(), "s2.log").exit_code == 0);
    CHECK(cli(tmp, "synth " + kSynthGrid + " --seed 6 --out-dir " + out3.string(), "s3.log")
              .exit_code == 0);

    const std::string a = read_file(out1 / "dataset.csv");
    CHECK(!a.empty());
    CHECK(a == read_file(out2 / "dataset.csv"));
    CHECK(a != read_file(out3 / "dataset.csv"));

    const MortalityDataset ds = load_dataset(out1 / "dataset.csv");
    CHECK(ds.age_min() == 40);
    CHECK(ds.age_max() == 50);
    CHECK(ds.year_min() == 2012);
    CHECK(ds.year_max() == 2017);

    const auto manifest = parse_manifest(out1 / "manifest.txt");
    CHECK(manifest.at("command") == "synth");
    CHECK(manifest.at("seed") == "5");
    CHECK(manifest.at("exposure") == "20000");
}

TEST_CASE("rates reproduces the in-process surface") {
    TempDir tmp("rates");
    const auto data_dir = tmp.path() / "data";
    const auto out = tmp.path() / "rates";
    REQUIRE(cli(tmp, "synth " + kSynthArgs + " --out-dir " + data_dir.string(), "s.log")
                .exit_code == 0);
    REQUIRE(cli(tmp,
                "rates --data " + (data_dir / "dataset.csv").string() + " --out-dir " +
                    out.string(),
                "r.log")
                .exit_code == 0);

    const RateSurface from_cli = load_surface(out / "rates.csv");
    const RateSurface direct = compute_rates(load_dataset(data_dir / "dataset.csv"));
    CHECK(from_cli.missing_count() == direct.missing_count());
    for (Gender g : {Gender::Female, Gender::Male})
        for (int age = 40; age <= 50; ++age)
            for (int year = 2012; year <= 2017; ++year)
                CHECK(from_cli.rate(g, age, year) == direct.rate(g, age, year));
}

TEST_CASE("cv scores the oracle at zero and canonicalizes the spec list") {
    TempDir tmp("cv");
    const auto data_dir = tmp.path() / "data";
    const auto out = tmp.path() / "cv";
    REQUIRE(cli(tmp, "synth " + kSynthArgs + " --out-dir " + data_dir.string(), "s.log")
                .exit_code == 0);
    const CliResult r = cli(tmp,
                            "cv --data " + (data_dir / "dataset.csv").string() +
                                " --models \"oracle const:value=0.01 rt:depth=3\""
                                " --first-train-end 2014 --out-dir " +
                                out.string(),
                            "cv.log");
    REQUIRE(r.exit_code == 0);

    const TextTable means = read_delimited(out / "cv_means.csv");
    REQUIRE(means.rows.size() == 3);
    CHECK(means.rows[0].fields[0] == "oracle");
    CHECK(std::stod(means.rows[0].fields[3]) == 0.0);
    CHECK(std::stod(means.rows[0].fields[4]) == 0.0);
    CHECK(means.rows[0].fields[1] == "3");  // folds 2015..2017

    const TextTable summary = read_delimited(out / "cv_summary.csv");
    CHECK(summary.rows.size() == 9);

    const nlohmann::json j = nlohmann::json::parse(read_file(out / "cv_report.json"));
    CHECK(j["models"].size() == 3);
    CHECK(j["folds"].size() == 3);

    CHECK(std::filesystem::exists(out / "residuals_oracle.csv"));
    CHECK(std::filesystem::exists(out / "residuals_rt_depth_3.csv"));

    const auto manifest = parse_manifest(out / "manifest.txt");
    CHECK(manifest.at("last-test") == "2017");  // filled from the data
    CHECK(manifest.at("models") == "oracle const:value=0.01 rt:depth=3");
}

TEST_CASE("forecast equals an in-process fit on the same seed") {
    TempDir tmp("fc");
    const auto data_dir = tmp.path() / "data";
    const auto out = tmp.path() / "fc";
    REQUIRE(cli(tmp, "synth " + kSynthArgs + " --out-dir " + data_dir.string(), "s.log")
                .exit_code == 0);
    REQUIRE(cli(tmp,
                "forecast --data " + (data_dir / "dataset.csv").string() +
                    " --model rt:depth=4 --train-end 2015 --horizon 2 --seed 9 --out-dir " +
                    out.string(),
                "f.log")
                .exit_code == 0);

    const MortalityDataset ds = load_dataset(data_dir / "dataset.csv");
    const MortalityDataset train = ds.restrict_years(2012, 2015);
    const FittedModel model = fit_model(parse_model_spec("rt:depth=4"), train, 9);
    const RateSurface expected = predict_recursive(model, compute_rates(train), 2);

    const RateSurface from_cli = load_surface(out / "forecast_rates.csv");
    CHECK(from_cli.year_max() == 2017);
    for (Gender g : {Gender::Female, Gender::Male})
        for (int age = 40; age <= 50; ++age)
            for (int year = 2016; year <= 2017; ++year)
                CHECK(from_cli.rate(g, age, year) == expected.rate(g, age, year));

    // The saved model reloads into the same predictor.
    const FittedModel reloaded = load_model(out / "model.json");
    CHECK(reloaded.spec.text() == "rt:depth=4");
    CHECK(reloaded.train_year_max == 2015);

    const TextTable curves = read_delimited(out / "curves.csv");
    CHECK(curves.rows.size() == 2 * 2 * 11);  // horizon x genders x ages
}

TEST_CASE("apps produces expectancy, provision, cash-flow and comparison tables") {
    TempDir tmp("apps");
    const auto data_dir = tmp.path() / "data";
    const auto fc_dir = tmp.path() / "fc";
    const auto out = tmp.path() / "apps";
    REQUIRE(cli(tmp, "synth " + kSynthArgs + " --out-dir " + data_dir.string(), "s.log")
                .exit_code == 0);
    // Long-horizon forecast so cohort diagonals stay inside the surface.
    REQUIRE(cli(tmp,
                "forecast --data " + (data_dir / "dataset.csv").string() +
                    " --model rt:depth=4 --train-end 2015 --horizon 12 --out-dir " +
                    fc_dir.string(),
                "f.log")
                .exit_code == 0);

    const CliResult r = cli(
        tmp,
        "apps --rates " + (fc_dir / "forecast_rates.csv").string() + " --data " +
            (data_dir / "dataset.csv").string() +
            " --ex-age 45 --omega 55 --app-age-min 45 --interest 0.03"
            " --valuation-year 2016 --base-year 2012 --horizon 4 --compare-year 2016"
            " --out-dir " +
            out.string(),
        "a.log");
    REQUIRE(r.exit_code == 0);

    const TextTable ex = read_delimited(out / "ex_table.csv");
    CHECK(ex.rows.size() == 2 * 16);  // both genders, 2012..2027
    const double e0 = std::stod(ex.rows[0].fields[2]);
    const double a0 = std::stod(ex.rows[0].fields[3]);
    CHECK(e0 > 0.5);
    CHECK(a0 < e0 - 0.5);  // positive interest discounts

    const TextTable prov = read_delimited(out / "provision.csv");
    REQUIRE(prov.rows.size() == 1);
    const double female = std::stod(prov.rows[0].fields[3]);
    const double male = std::stod(prov.rows[0].fields[4]);
    const double total = std::stod(prov.rows[0].fields[5]);
    CHECK(total == female + male);
    CHECK(total > 0.0);

    const TextTable cash = read_delimited(out / "cashflow.csv");
    REQUIRE(cash.rows.size() == 5);  // base year + horizon 4
    for (const auto& row : cash.rows)
        CHECK(std::stod(row.fields[3]) ==
              doctest::Approx(std::stod(row.fields[1]) + std::stod(row.fields[2]))
                  .epsilon(1e-12));

    const TextTable cmp = read_delimited(out / "comparison.csv");
    REQUIRE(cmp.rows.size() >= 2);
    CHECK(cmp.rows.back().fields[0] == "total");
}

TEST_CASE("a manifest reruns to byte-identical outputs") {
    TempDir tmp("rerun");
    const auto data_dir = tmp.path() / "data";
    REQUIRE(cli(tmp, "synth " + kSynthArgs + " --out-dir " + data_dir.string(), "s.log")
                .exit_code == 0);

    // synth rerun from its own manifest.
    const auto s2 = tmp.path() / "s2";
    REQUIRE(cli(tmp,
                "synth --config " + (data_dir / "manifest.txt").string() + " --out-dir " +
                    s2.string(),
                "rs.log")
                .exit_code == 0);
    CHECK(read_file(data_dir / "dataset.csv") == read_file(s2 / "dataset.csv"));

    // cv rerun, including a parallel-jobs run.
    const auto cv1 = tmp.path() / "cv1";
    REQUIRE(cli(tmp,
                "cv --data " + (data_dir / "dataset.csv").string() +
                    " --models \"rt:depth=3 const:value=0.01\" --first-train-end 2015"
                    " --seed 4 --out-dir " +
                    cv1.string(),
                "cv1.log")
                .exit_code == 0);
    const auto cv2 = tmp.path() / "cv2";
    REQUIRE(cli(tmp,
                "cv --config " + (cv1 / "manifest.txt").string() + " --jobs 3 --out-dir " +
                    cv2.string(),
                "cv2.log")
                .exit_code == 0);
    for (const std::string name :
         {"cv_means.csv", "cv_summary.csv", "cv_report.json", "residuals_rt_depth_3.csv",
          "residuals_const_value_0_01.csv"}) {
        CAPTURE(name);
        const std::string original = read_file(cv1 / name);
        CHECK(!original.empty());
        CHECK(original == read_file(cv2 / name));
    }

    // forecast rerun.
    const auto f1 = tmp.path() / "f1";
    REQUIRE(cli(tmp,
                "forecast --data " + (data_dir / "dataset.csv").string() +
                    " --model bst:rounds=10 --horizon 2 --out-dir " + f1.string(),
                "f1.log")
                .exit_code == 0);
    const auto f2 = tmp.path() / "f2";
    REQUIRE(cli(tmp,
                "forecast --config " + (f1 / "manifest.txt").string() + " --out-dir " +
                    f2.string(),
                "f2.log")
                .exit_code == 0);
    for (const std::string name : {"forecast_rates.csv", "model.json", "curves.csv"}) {
        CAPTURE(name);
        CHECK(read_file(f1 / name) == read_file(f2 / name));
    }

    // A manifest only reruns its own command.
    const CliResult wrong =
        cli(tmp, "rates --config " + (data_dir / "manifest.txt").string(), "w.log");
    CHECK(wrong.exit_code == 2);
    CHECK(wrong.output.find("written for command") != std::string::npos);
}

TEST_CASE("flags override config values") {
    TempDir tmp("prec");
    const auto cfg_path = tmp.path() / "base.cfg";
    {
        std::ofstream cfg(cfg_path);
        cfg << "# defaults for the small grid\n"
            << "age-min=40\n"
            << "age-max=46\n"
            << "year-min=2012\n"
            << "year-max=2015\n"
            << "exposure=30000\n"
            << "seed=2\n";
    }
    const auto out = tmp.path() / "out";
    REQUIRE(cli(tmp,
                "synth --config " + cfg_path.string() + " --exposure 40000 --out-dir " +
                    out.string(),
                "p.log")
                .exit_code == 0);
    const auto manifest = parse_manifest(out / "manifest.txt");
    CHECK(manifest.at("exposure") == "40000");  // flag wins
    CHECK(manifest.at("age-max") == "46");      // config fills the rest
    CHECK(manifest.at("seed") == "2");
    const MortalityDataset ds = load_dataset(out / "dataset.csv");
    CHECK(ds.age_max() == 46);
    CHECK(ds.year_max() == 2015);
}

TEST_CASE("exit codes separate usage, data and model failures") {
    TempDir tmp("exit");
    const auto data_dir = tmp.path() / "data";
    REQUIRE(cli(tmp, "synth " + kSynthArgs + " --out-dir " + data_dir.string(), "s.log")
                .exit_code == 0);
    const std::string data = (data_dir / "dataset.csv").string();

    CHECK(cli(tmp, "", "e0.log").exit_code == 1);                      // no subcommand
    CHECK(cli(tmp, "synth --no-such-flag", "e1.log").exit_code == 1);  // unknown flag

    const CliResult missing = cli(tmp, "rates", "e2.log");
    CHECK(missing.exit_code == 2);  // required option absent
    CHECK(missing.output.find("required option missing") != std::string::npos);

    CHECK(cli(tmp, "rates --data /nonexistent.csv", "e3.log").exit_code == 2);

    const CliResult badspec =
        cli(tmp, "forecast --data " + data + " --model zzz --out-dir " +
                     (tmp.path() / "x1").string(),
            "e4.log");
    CHECK(badspec.exit_code == 3);  // unknown family is a model error

    // Two training years cannot produce lagged sequences: the fit rejects the data.
    const CliResult unfit =
        cli(tmp, "forecast --data " + data +
                     " --model lstm1:epochs=2 --train-end 2013 --out-dir " +
                     (tmp.path() / "x2").string(),
            "e5.log");
    CHECK(unfit.exit_code == 2);
    CHECK(unfit.output.find("data error") != std::string::npos);

    // The oracle cannot predict beyond the observed surface: a model error.
    const CliResult beyond =
        cli(tmp, "forecast --data " + data + " --model oracle --horizon 1 --out-dir " +
                     (tmp.path() / "x3").string(),
            "e6.log");
    CHECK(beyond.exit_code == 3);
    CHECK(beyond.output.find("model error") != std::string::npos);
}
