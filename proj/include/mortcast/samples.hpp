#pragma once

#include "mortcast/dataset.hpp"
#include "mortcast/types.hpp"

#include <filesystem>
#include <limits>
#include <optional>

namespace mortcast {

// Feature columns shared by the static-covariate models: age, male indicator,
// calendar year, previous-year rate.
enum StaticFeature : int { kFeatAge = 0, kFeatGender = 1, kFeatYear = 2, kFeatPrevRate = 3 };
constexpr int kNumStaticFeatures = 4;

// Supervised rows for tree, boosting and FNN models. `max_feature_year` is
// the newest calendar year any feature value was read from; the CV harness
// audits it against the test year.
struct SampleSet {
    MatrixXd X;               // n x 4
    VectorXd y;               // target rate; NaN for prediction-only rows
    std::vector<CellKey> keys;
    int max_feature_year = std::numeric_limits<int>::min();

    Eigen::Index size() const { return X.rows(); }
};

enum class SeqVariant { Lagged, Stacked, Cohort };

std::string seq_variant_name(SeqVariant v);

// Supervised rows with a chronological rate sequence plus static covariates
// [age, male indicator, year]. All rows of one set share the variant and the
// sequence length.
struct SequenceSampleSet {
    SeqVariant variant = SeqVariant::Lagged;
    MatrixXd statics;         // n x 3
    MatrixXd seq;             // n x L, chronological / stacking order
    VectorXd y;
    std::vector<CellKey> keys;
    int max_feature_year = std::numeric_limits<int>::min();
    std::size_t dropped_rows = 0;  // valid target but a lag cell was missing
    int window = 0;                // stacked variant lookback length

    Eigen::Index size() const { return statics.rows(); }
    Eigen::Index seq_len() const { return seq.cols(); }
};

// One row per cell with year > first year and both m(x,t) and m(x,t-1)
// observed; features [x, i, t, m(x,t-1)].
SampleSet build_static_samples(const RateSurface& rs);

// Sequence <m(x,t-lags), ..., m(x,t-1)>, earliest first.
SequenceSampleSet build_lagged_sequences(const RateSurface& rs, int lags = 2);

// Per gender the surface is flattened into one series ordered by year then
// age; each row's sequence is the `window` most recent entries strictly
// before the target's position, left-padded with the series' first value.
SequenceSampleSet build_stacked_sequences(const RateSurface& rs, int window);

// Diagonal generational lags <m(x-2,t-2), m(x-1,t-1)>.
SequenceSampleSet build_cohort_sequences(const RateSurface& rs);

// Prediction-row builders: same feature layout, rows for every cell of
// `year` whose features are available, target left as NaN. The observed
// target, when present, is not read.
SampleSet build_static_features_for_year(const RateSurface& rs, int year);
SequenceSampleSet build_sequence_features_for_year(const RateSurface& rs, int year,
                                                   SeqVariant variant, int lags_or_window);

void save_samples(const SampleSet& s, const std::filesystem::path& path, char delimiter = ',');

}  // namespace mortcast
