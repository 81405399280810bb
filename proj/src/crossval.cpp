#include "mortcast/crossval.hpp"

#include "mortcast/io.hpp"

#include <json.hpp>

#include <atomic>
#include <thread>

namespace mortcast {

std::vector<CVFold> make_folds(int year_min, int year_max, int first_train_end, int last_test) {
    if (first_train_end < year_min)
        throw DataError("first train end " + std::to_string(first_train_end) +
                        " precedes the data start " + std::to_string(year_min));
    if (last_test > year_max)
        throw DataError("last test year " + std::to_string(last_test) +
                        " is beyond the data end " + std::to_string(year_max));
    if (first_train_end >= last_test)
        throw DataError("first train end must precede the last test year");
    std::vector<CVFold> folds;
    for (int t = first_train_end + 1; t <= last_test; ++t)
        folds.push_back({year_min, t - 1, t});
    return folds;
}

namespace {

FoldResult run_fold(const MortalityDataset& ds, const ModelSpec& spec, const CVFold& fold,
                    int fold_index, std::uint64_t seed) {
    const MortalityDataset train = ds.restrict_years(fold.train_year_min, fold.train_year_max);
    const FittedModel model = fit_model(spec, train, seed);

    // Prediction may read anything up to and including the test year; later
    // years are physically absent from the surface.
    const RateSurface surface =
        compute_rates(ds.restrict_years(ds.year_min(), fold.test_year));
    const std::map<CellKey, double> preds = model.predict_year(surface, fold.test_year);

    FoldResult r;
    r.fold_index = fold_index;
    r.test_year = fold.test_year;
    r.max_train_feature_year = model.max_train_feature_year;

    std::vector<double> pred, obs;
    for (const auto& [key, value] : preds) {
        if (surface.missing(key.gender, key.age, key.year)) {
            ++r.unobserved_cells;
            continue;
        }
        const double observed = surface.rate(key.gender, key.age, key.year);
        pred.push_back(value);
        obs.push_back(observed);
        r.predictions[key] = value;
        r.residuals[key] = value - observed;
    }
    for (Gender g : kGenders)
        for (int age = surface.age_min(); age <= surface.age_max(); ++age)
            if (!surface.missing(g, age, fold.test_year) &&
                !preds.count({g, age, fold.test_year}))
                ++r.unpredicted_cells;

    if (pred.empty()) throw ModelError("no evaluable cells in test year " +
                                       std::to_string(fold.test_year));
    const VectorXd pv = Eigen::Map<const VectorXd>(pred.data(), static_cast<Eigen::Index>(pred.size()));
    const VectorXd ov = Eigen::Map<const VectorXd>(obs.data(), static_cast<Eigen::Index>(obs.size()));
    r.mae = mae(pv, ov);
    r.rmse = rmse(pv, ov);
    return r;
}

}  // namespace

CVReport ts_cross_validate(const MortalityDataset& ds, const std::vector<ModelSpec>& specs,
                           int first_train_end, int last_test, std::uint64_t seed, int jobs) {
    if (specs.empty()) throw DataError("no model specs given");
    CVReport report;
    report.seed = seed;
    report.folds = make_folds(ds.year_min(), ds.year_max(), first_train_end, last_test);

    struct Slot {
        bool ok = false;
        FoldResult result;
        std::string error;
    };
    const std::size_t n_folds = report.folds.size();
    std::vector<Slot> slots(specs.size() * n_folds);

    auto run_job = [&](std::size_t jix) {
        const std::size_t si = jix / n_folds;
        const std::size_t fi = jix % n_folds;
        Slot& slot = slots[jix];
        try {
            slot.result = run_fold(ds, specs[si], report.folds[fi], static_cast<int>(fi), seed);
            slot.ok = true;
        } catch (const std::exception& e) {
            slot.error = e.what();
        }
    };

    const std::size_t n_jobs = slots.size();
    const int workers = std::max(1, jobs);
    if (workers == 1) {
        for (std::size_t j = 0; j < n_jobs; ++j) run_job(j);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        const std::size_t n_workers = std::min<std::size_t>(workers, n_jobs);
        pool.reserve(n_workers);
        for (std::size_t w = 0; w < n_workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t j = next.fetch_add(1); j < n_jobs; j = next.fetch_add(1))
                    run_job(j);
            });
        for (auto& th : pool) th.join();
    }

    for (std::size_t si = 0; si < specs.size(); ++si) {
        ModelReport mr;
        mr.spec_text = specs[si].text();
        double sum_mae = 0.0, sum_rmse = 0.0;
        for (std::size_t fi = 0; fi < n_folds; ++fi) {
            Slot& slot = slots[si * n_folds + fi];
            if (slot.ok) {
                sum_mae += slot.result.mae;
                sum_rmse += slot.result.rmse;
                mr.folds.push_back(std::move(slot.result));
            } else {
                mr.failures.emplace_back(static_cast<int>(fi), slot.error);
                report.warnings.push_back("model " + mr.spec_text + " failed on fold " +
                                          std::to_string(fi) + ": " + slot.error);
            }
        }
        if (!mr.folds.empty()) {
            mr.mean_mae = sum_mae / static_cast<double>(mr.folds.size());
            mr.mean_rmse = sum_rmse / static_cast<double>(mr.folds.size());
        }
        report.models.push_back(std::move(mr));
    }
    return report;
}

const ModelReport& report_for(const CVReport& report, const std::string& spec_text) {
    for (const auto& m : report.models)
        if (m.spec_text == spec_text) return m;
    throw DataError("model '" + spec_text + "' not present in the report");
}

void residual_grid_export(const CVReport& report, const std::string& spec_text,
                          const std::filesystem::path& path, char delimiter) {
    const ModelReport& mr = report_for(report, spec_text);
    std::vector<std::vector<std::string>> rows;
    for (const auto& fold : mr.folds)
        for (const auto& [key, res] : fold.residuals)
            rows.push_back({std::string(1, gender_code(key.gender)), std::to_string(key.age),
                            std::to_string(key.year), format_double(std::abs(res))});
    write_delimited(path, {"gender", "age", "year", "abs_residual"}, rows, delimiter);
}

void save_cv_summary(const CVReport& report, const std::filesystem::path& path, char delimiter) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& m : report.models)
        for (const auto& fold : m.folds)
            rows.push_back({m.spec_text, std::to_string(fold.fold_index),
                            std::to_string(fold.test_year), format_double(fold.mae),
                            format_double(fold.rmse)});
    write_delimited(path, {"model", "fold", "test_year", "mae", "rmse"}, rows, delimiter);
}

void save_cv_means(const CVReport& report, const std::filesystem::path& path, char delimiter) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& m : report.models)
        rows.push_back({m.spec_text, std::to_string(m.folds.size()),
                        std::to_string(m.failures.size()), format_double(m.mean_mae),
                        format_double(m.mean_rmse)});
    write_delimited(path, {"model", "folds", "failures", "mean_mae", "mean_rmse"}, rows,
                    delimiter);
}

std::string cv_report_json(const CVReport& report) {
    nlohmann::json j;
    j["seed"] = report.seed;
    j["folds"] = nlohmann::json::array();
    for (const auto& f : report.folds)
        j["folds"].push_back({{"train_year_min", f.train_year_min},
                              {"train_year_max", f.train_year_max},
                              {"test_year", f.test_year}});
    j["models"] = nlohmann::json::array();
    for (const auto& m : report.models) {
        nlohmann::json mj;
        mj["spec"] = m.spec_text;
        mj["mean_mae"] = m.mean_mae;
        mj["mean_rmse"] = m.mean_rmse;
        mj["folds"] = nlohmann::json::array();
        for (const auto& f : m.folds)
            mj["folds"].push_back({{"fold", f.fold_index},
                                   {"test_year", f.test_year},
                                   {"mae", f.mae},
                                   {"rmse", f.rmse},
                                   {"cells", f.residuals.size()},
                                   {"max_train_feature_year", f.max_train_feature_year},
                                   {"unpredicted_cells", f.unpredicted_cells},
                                   {"unobserved_cells", f.unobserved_cells}});
        mj["failures"] = nlohmann::json::array();
        for (const auto& [fold, what] : m.failures)
            mj["failures"].push_back({{"fold", fold}, {"error", what}});
        j["models"].push_back(std::move(mj));
    }
    j["warnings"] = report.warnings;
    return j.dump(2) + "\n";
}

}  // namespace mortcast
