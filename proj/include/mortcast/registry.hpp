#pragma once

#include "mortcast/boosting.hpp"
#include "mortcast/forest.hpp"
#include "mortcast/leecarter.hpp"
#include "mortcast/neural.hpp"
#include "mortcast/samples.hpp"
#include "mortcast/scaler.hpp"
#include "mortcast/tree.hpp"

#include <limits>
#include <map>
#include <optional>
#include <variant>

namespace mortcast {

enum class ModelFamily {
    Tree,          // rt
    Forest,        // rf
    Gbm,           // bst
    RegBoost,      // rbst
    OrderedBoost,  // obst
    Fnn,           // fnn
    LstmHybrid,    // lstm1 / lstm2 / lstm3 (lagged / stacked / cohort)
    MhaHybrid,     // mha1 / mha2 / mha3
    LeeCarter,     // lc
    Oracle,        // oracle: echoes observed rates (harness verification)
    Constant,      // const: fixed value (plumbing tests)
};

// Parsed "family:key=value,..." model specification. Numeric hyperparameters
// live in `params`; `seed` composes with the run seed at fit time.
struct ModelSpec {
    ModelFamily family = ModelFamily::Tree;
    SeqVariant variant = SeqVariant::Lagged;  // hybrids only
    std::map<std::string, double> params;
    std::uint64_t seed = 1;

    double param(const std::string& key, double fallback) const;
    int iparam(const std::string& key, int fallback) const;
    std::string text() const;  // canonical spec string; parses back to *this
};

// Grammar: family[:k=v[,k=v]...]; families rt, rf, bst, rbst, obst, fnn,
// lstm1-3, mha1-3, lc, oracle, const. Unknown family or key -> ModelError.
ModelSpec parse_model_spec(const std::string& text);

std::string family_code(ModelFamily family, SeqVariant variant);

// Fitted payloads ------------------------------------------------------------

struct FnnPayload {
    DenseStack net;
    MinMaxScaler scaler;
    TrainResult history;
};

struct HybridPayload {
    HybridModel model;
    SequenceScaler scaler;
    TrainResult history;
    int lags_or_window = 2;
};

struct LcPayload {
    LeeCarterParams female;
    LeeCarterParams male;

    const LeeCarterParams& of(Gender g) const { return g == Gender::Male ? male : female; }
};

struct OraclePayload {};

struct ConstantPayload {
    double value = 0.0;
};

struct FittedModel {
    ModelSpec spec;
    int train_year_min = 0;
    int train_year_max = 0;
    int age_min = 0;
    int age_max = 0;
    // Newest calendar year any training feature or likelihood term read;
    // audited against fold test years by the CV harness.
    int max_train_feature_year = std::numeric_limits<int>::min();

    std::variant<RegressionTree, ForestModel, BoostModel, RegBoostModel, OrderedBoostModel,
                 FnnPayload, HybridPayload, LcPayload, OraclePayload, ConstantPayload>
        payload;

    // Rate prediction for one cell, drawing history from `rs`; nullopt when
    // the cell's features cannot be built from the surface.
    std::optional<double> predict_cell(const RateSurface& rs, Gender g, int age, int year) const;

    // All predictable cells of one year.
    std::map<CellKey, double> predict_year(const RateSurface& rs, int year) const;
};

// Fits `spec` on the dataset (all of it; callers restrict years first). The
// model's private stream is mix_seed(run_seed, spec.seed, train year end) so
// a CV fold and a forecast fitted on the same years coincide.
FittedModel fit_model(const ModelSpec& spec, const MortalityDataset& train,
                      std::uint64_t run_seed, Warnings* warnings = nullptr);

// Extends the surface year by year; each new year's cells are predicted in
// ascending age order and written back immediately, so stacked sequences can
// consume same-year predictions. Values are clamped at 0 (RateSurface holds
// nonnegative rates). Errors if an entire new year is unpredictable.
RateSurface predict_recursive(const FittedModel& model, const RateSurface& history, int horizon);

}  // namespace mortcast
