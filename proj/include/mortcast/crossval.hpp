#pragma once

#include "mortcast/metrics.hpp"
#include "mortcast/registry.hpp"

#include <filesystem>

namespace mortcast {

// One rolling-origin fold: train on [train_year_min, train_year_max], test
// on the single next year.
struct CVFold {
    int train_year_min = 0;
    int train_year_max = 0;
    int test_year = 0;
};

// Expanding folds (<= first_train_end -> first_train_end+1), ...,
// (<= last_test-1 -> last_test).
std::vector<CVFold> make_folds(int year_min, int year_max, int first_train_end, int last_test);

struct FoldResult {
    int fold_index = 0;
    int test_year = 0;
    double mae = 0.0;
    double rmse = 0.0;
    std::map<CellKey, double> residuals;    // prediction - observation
    std::map<CellKey, double> predictions;  // evaluated cells only
    int max_train_feature_year = 0;         // leakage audit record
    std::size_t unpredicted_cells = 0;      // observed but not predictable
    std::size_t unobserved_cells = 0;       // predicted but observation missing
};

struct ModelReport {
    std::string spec_text;
    std::vector<FoldResult> folds;                       // successful folds, fold order
    std::vector<std::pair<int, std::string>> failures;   // (fold index, diagnostic)
    double mean_mae = std::numeric_limits<double>::quiet_NaN();
    double mean_rmse = std::numeric_limits<double>::quiet_NaN();
};

struct CVReport {
    std::vector<CVFold> folds;
    std::vector<ModelReport> models;  // same order as the input specs
    std::uint64_t seed = 0;
    Warnings warnings;
};

// Per (model, fold): refit from scratch on the physically truncated training
// years, predict the test year from the surface truncated at that year, and
// score all cells that are both predictable and observed. Jobs parallelize
// (model, fold) pairs without changing any result.
CVReport ts_cross_validate(const MortalityDataset& ds, const std::vector<ModelSpec>& specs,
                           int first_train_end, int last_test, std::uint64_t seed, int jobs = 1);

const ModelReport& report_for(const CVReport& report, const std::string& spec_text);

// Plot-ready table (gender, age, year, abs_residual), fold order then cell
// order. Errors on a spec absent from the report.
void residual_grid_export(const CVReport& report, const std::string& spec_text,
                          const std::filesystem::path& path, char delimiter = ',');

// (model, fold, test_year, mae, rmse) rows.
void save_cv_summary(const CVReport& report, const std::filesystem::path& path,
                     char delimiter = ',');

// (model, folds, failures, mean_mae, mean_rmse) rows.
void save_cv_means(const CVReport& report, const std::filesystem::path& path,
                   char delimiter = ',');

// Machine-readable structured summary (metrics, failures, audit years).
std::string cv_report_json(const CVReport& report);

}  // namespace mortcast
