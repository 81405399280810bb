#include "mortcast/registry.hpp"

#include "mortcast/io.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace mortcast {

namespace {

struct FamilyInfo {
    ModelFamily family;
    SeqVariant variant;
    std::set<std::string> keys;
};

const std::map<std::string, FamilyInfo>& family_table() {
    static const std::set<std::string> tree_keys{"depth", "minleaf", "seed"};
    static const std::set<std::string> forest_keys{"trees", "depth", "minleaf", "mtry", "seed",
                                                   "jobs"};
    static const std::set<std::string> boost_keys{"rounds", "depth", "minleaf", "shrinkage",
                                                  "seed"};
    static const std::set<std::string> rboost_keys{"rounds", "depth",  "minleaf", "shrinkage",
                                                   "lambda", "gamma", "seed"};
    static const std::set<std::string> oboost_keys{"rounds", "depth", "minleaf", "shrinkage",
                                                   "prior",  "seed"};
    static const std::set<std::string> fnn_keys{"width", "layers",   "epochs",  "batch",
                                                "step",  "patience", "valfrac", "seed"};
    static const std::set<std::string> hybrid_keys{"hidden", "d",        "heads",   "window",
                                                   "lags",   "epochs",   "batch",   "step",
                                                   "patience", "valfrac", "seed"};
    static const std::map<std::string, FamilyInfo> table{
        {"rt", {ModelFamily::Tree, SeqVariant::Lagged, tree_keys}},
        {"rf", {ModelFamily::Forest, SeqVariant::Lagged, forest_keys}},
        {"bst", {ModelFamily::Gbm, SeqVariant::Lagged, boost_keys}},
        {"rbst", {ModelFamily::RegBoost, SeqVariant::Lagged, rboost_keys}},
        {"obst", {ModelFamily::OrderedBoost, SeqVariant::Lagged, oboost_keys}},
        {"fnn", {ModelFamily::Fnn, SeqVariant::Lagged, fnn_keys}},
        {"lstm1", {ModelFamily::LstmHybrid, SeqVariant::Lagged, hybrid_keys}},
        {"lstm2", {ModelFamily::LstmHybrid, SeqVariant::Stacked, hybrid_keys}},
        {"lstm3", {ModelFamily::LstmHybrid, SeqVariant::Cohort, hybrid_keys}},
        {"mha1", {ModelFamily::MhaHybrid, SeqVariant::Lagged, hybrid_keys}},
        {"mha2", {ModelFamily::MhaHybrid, SeqVariant::Stacked, hybrid_keys}},
        {"mha3", {ModelFamily::MhaHybrid, SeqVariant::Cohort, hybrid_keys}},
        {"lc", {ModelFamily::LeeCarter, SeqVariant::Lagged, {"seed"}}},
        {"oracle", {ModelFamily::Oracle, SeqVariant::Lagged, {"seed"}}},
        {"const", {ModelFamily::Constant, SeqVariant::Lagged, {"value", "seed"}}},
    };
    return table;
}

}  // namespace

double ModelSpec::param(const std::string& key, double fallback) const {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
}

int ModelSpec::iparam(const std::string& key, int fallback) const {
    auto it = params.find(key);
    if (it == params.end()) return fallback;
    const double v = it->second;
    const int i = static_cast<int>(std::llround(v));
    if (std::abs(v - i) > 1e-9)
        throw ModelError("hyperparameter '" + key + "' must be an integer, got " +
                         format_double(v));
    return i;
}

std::string family_code(ModelFamily family, SeqVariant variant) {
    switch (family) {
        case ModelFamily::Tree: return "rt";
        case ModelFamily::Forest: return "rf";
        case ModelFamily::Gbm: return "bst";
        case ModelFamily::RegBoost: return "rbst";
        case ModelFamily::OrderedBoost: return "obst";
        case ModelFamily::Fnn: return "fnn";
        case ModelFamily::LstmHybrid:
            return variant == SeqVariant::Lagged ? "lstm1"
                   : variant == SeqVariant::Stacked ? "lstm2" : "lstm3";
        case ModelFamily::MhaHybrid:
            return variant == SeqVariant::Lagged ? "mha1"
                   : variant == SeqVariant::Stacked ? "mha2" : "mha3";
        case ModelFamily::LeeCarter: return "lc";
        case ModelFamily::Oracle: return "oracle";
        case ModelFamily::Constant: return "const";
    }
    throw ModelError("unknown model family");
}

std::string ModelSpec::text() const {
    std::string out = family_code(family, variant);
    char sep = ':';
    for (const auto& [k, v] : params) {
        out += sep;
        out += k + "=" + format_double(v);
        sep = ',';
    }
    if (seed != 1) {
        out += sep;
        out += "seed=" + std::to_string(seed);
    }
    return out;
}

ModelSpec parse_model_spec(const std::string& text) {
    const auto colon = text.find(':');
    const std::string code = text.substr(0, colon);
    auto it = family_table().find(code);
    if (it == family_table().end())
        throw ModelError("unknown model family '" + code + "' in spec '" + text + "'");
    ModelSpec spec;
    spec.family = it->second.family;
    spec.variant = it->second.variant;
    if (colon == std::string::npos) return spec;

    std::string rest = text.substr(colon + 1);
    std::size_t start = 0;
    while (start <= rest.size()) {
        const auto comma = rest.find(',', start);
        const std::string item =
            rest.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        start = comma == std::string::npos ? rest.size() + 1 : comma + 1;
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string::npos)
            throw ModelError("expected key=value in model spec item '" + item + "'");
        const std::string key = item.substr(0, eq);
        const std::string value = item.substr(eq + 1);
        if (!it->second.keys.count(key))
            throw ModelError("model family '" + code + "' does not accept key '" + key + "'");
        if (key == "seed") {
            spec.seed = static_cast<std::uint64_t>(parse_integer(value, 0, "seed"));
        } else {
            spec.params[key] = parse_double(value, 0, "hyperparameter '" + key + "'");
        }
    }
    return spec;
}

// ---------------------------------------------------------------------------
// Fitting

namespace {

TreeOptions tree_options(const ModelSpec& spec, int default_depth) {
    return TreeOptions{.max_depth = spec.iparam("depth", default_depth),
                       .min_leaf = spec.iparam("minleaf", 1)};
}

TrainConfig train_config(const ModelSpec& spec, std::uint64_t eff_seed, int default_epochs) {
    TrainConfig cfg;
    cfg.epochs = spec.iparam("epochs", default_epochs);
    cfg.batch_size = spec.iparam("batch", 32);
    cfg.step = spec.param("step", 1e-3);
    cfg.seed = eff_seed;
    cfg.patience = spec.iparam("patience", 0);
    cfg.val_fraction = spec.param("valfrac", cfg.patience > 0 ? 0.2 : 0.0);
    return cfg;
}

int hybrid_lags_or_window(const ModelSpec& spec) {
    switch (spec.variant) {
        case SeqVariant::Lagged: return spec.iparam("lags", 2);
        case SeqVariant::Stacked: return spec.iparam("window", 8);
        case SeqVariant::Cohort: return 2;
    }
    return 2;
}

SequenceSampleSet build_train_sequences(const RateSurface& rates, SeqVariant variant,
                                        int lags_or_window) {
    switch (variant) {
        case SeqVariant::Lagged: return build_lagged_sequences(rates, lags_or_window);
        case SeqVariant::Stacked: return build_stacked_sequences(rates, lags_or_window);
        case SeqVariant::Cohort: return build_cohort_sequences(rates);
    }
    throw ModelError("unknown sequence variant");
}

}  // namespace


namespace {

// Newest year the fit read, over feature lags and training targets.
int newest_access_year(const std::vector<CellKey>& keys, int feature_year_max) {
    int y = feature_year_max;
    for (const auto& k : keys) y = std::max(y, k.year);
    return y;
}

}  // namespace

FittedModel fit_model(const ModelSpec& spec, const MortalityDataset& train,
                      std::uint64_t run_seed, Warnings* warnings) {
    FittedModel fm;
    fm.spec = spec;
    fm.train_year_min = train.year_min();
    fm.train_year_max = train.year_max();
    fm.age_min = train.age_min();
    fm.age_max = train.age_max();
    const std::uint64_t eff_seed =
        mix_seed(run_seed, spec.seed, static_cast<std::uint64_t>(train.year_max()));

    const RateSurface rates = compute_rates(train);
    switch (spec.family) {
        case ModelFamily::Tree: {
            const SampleSet s = build_static_samples(rates);
            fm.max_train_feature_year = newest_access_year(s.keys, s.max_feature_year);
            fm.payload = fit_tree(s.X, s.y, tree_options(spec, 6));
            break;
        }
        case ModelFamily::Forest: {
            const SampleSet s = build_static_samples(rates);
            fm.max_train_feature_year = newest_access_year(s.keys, s.max_feature_year);
            ForestOptions opts;
            opts.n_trees = spec.iparam("trees", 100);
            opts.tree = tree_options(spec, 6);
            opts.mtry = spec.iparam("mtry", 2);
            opts.seed = eff_seed;
            opts.jobs = spec.iparam("jobs", 1);
            fm.payload = fit_forest(s.X, s.y, opts);
            break;
        }
        case ModelFamily::Gbm: {
            const SampleSet s = build_static_samples(rates);
            fm.max_train_feature_year = newest_access_year(s.keys, s.max_feature_year);
            BoostOptions opts;
            opts.n_rounds = spec.iparam("rounds", 100);
            opts.shrinkage = spec.param("shrinkage", 0.1);
            opts.tree = tree_options(spec, 3);
            fm.payload = fit_gbm(s.X, s.y, opts);
            break;
        }
        case ModelFamily::RegBoost: {
            const SampleSet s = build_static_samples(rates);
            fm.max_train_feature_year = newest_access_year(s.keys, s.max_feature_year);
            RegBoostOptions opts;
            opts.n_rounds = spec.iparam("rounds", 100);
            opts.shrinkage = spec.param("shrinkage", 0.1);
            opts.max_depth = spec.iparam("depth", 3);
            opts.min_leaf = spec.iparam("minleaf", 1);
            opts.lambda = spec.param("lambda", 1.0);
            opts.gamma = spec.param("gamma", 0.0);
            fm.payload = fit_regboost(s.X, s.y, opts);
            break;
        }
        case ModelFamily::OrderedBoost: {
            const SampleSet s = build_static_samples(rates);
            fm.max_train_feature_year = newest_access_year(s.keys, s.max_feature_year);
            OrderedBoostOptions opts;
            opts.boost.n_rounds = spec.iparam("rounds", 100);
            opts.boost.shrinkage = spec.param("shrinkage", 0.1);
            opts.boost.tree = tree_options(spec, 3);
            opts.cat_feature = kFeatGender;
            opts.prior_weight = spec.param("prior", 1.0);
            opts.seed = eff_seed;
            fm.payload = fit_ordered_boost(s.X, s.y, opts);
            break;
        }
        case ModelFamily::Fnn: {
            const SampleSet s = build_static_samples(rates);
            fm.max_train_feature_year = newest_access_year(s.keys, s.max_feature_year);
            FnnPayload p;
            p.scaler = MinMaxScaler::fit(s, warnings);
            const SampleSet scaled = p.scaler.transform(s);
            FnnOptions opts;
            opts.widths.assign(static_cast<std::size_t>(spec.iparam("layers", 4)),
                               spec.iparam("width", 32));
            FnnFit fit = fit_fnn(scaled.X, scaled.y, opts, train_config(spec, eff_seed, 200));
            p.net = std::move(fit.model);
            p.history = std::move(fit.history);
            fm.payload = std::move(p);
            break;
        }
        case ModelFamily::LstmHybrid:
        case ModelFamily::MhaHybrid: {
            HybridPayload p;
            p.lags_or_window = hybrid_lags_or_window(spec);
            const SequenceSampleSet s = build_train_sequences(rates, spec.variant,
                                                              p.lags_or_window);
            if (s.size() == 0) throw ModelError("no trainable sequence rows");
            fm.max_train_feature_year = newest_access_year(s.keys, s.max_feature_year);
            p.scaler = SequenceScaler::fit(s, warnings);
            const SequenceSampleSet scaled = p.scaler.transform(s);
            HybridOptions opts;
            opts.branch = spec.family == ModelFamily::LstmHybrid ? SeqBranch::Lstm
                                                                 : SeqBranch::Attention;
            opts.lstm_hidden = spec.iparam("hidden", 16);
            opts.attn_d = spec.iparam("d", 16);
            opts.attn_heads = spec.iparam("heads", 2);
            HybridFit fit = fit_hybrid(scaled.statics, scaled.seq, scaled.y, opts,
                                       train_config(spec, eff_seed, 120));
            p.model = std::move(fit.model);
            p.history = std::move(fit.history);
            fm.payload = std::move(p);
            break;
        }
        case ModelFamily::LeeCarter: {
            fm.max_train_feature_year = train.year_max();
            LcPayload p;
            p.female = fit_leecarter(train, Gender::Female, {}, warnings);
            p.male = fit_leecarter(train, Gender::Male, {}, warnings);
            if (train.n_years() >= 2) {
                estimate_drift(p.female);
                estimate_drift(p.male);
            }
            fm.payload = std::move(p);
            break;
        }
        case ModelFamily::Oracle:
            fm.payload = OraclePayload{};
            break;
        case ModelFamily::Constant:
            fm.payload = ConstantPayload{spec.param("value", 0.01)};
            break;
    }
    return fm;
}

// ---------------------------------------------------------------------------
// Prediction

namespace {

std::optional<RowVectorXd> static_features(const RateSurface& rs, Gender g, int age, int year) {
    if (!rs.in_range(age, year - 1)) return std::nullopt;
    if (rs.missing(g, age, year - 1)) return std::nullopt;
    RowVectorXd x(kNumStaticFeatures);
    x(kFeatAge) = age;
    x(kFeatGender) = gender_indicator(g);
    x(kFeatYear) = year;
    x(kFeatPrevRate) = rs.rate(g, age, year - 1);
    return x;
}

RowVectorXd scale_static_row(const MinMaxScaler& sc, const RowVectorXd& x) {
    RowVectorXd z(x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j)
        z(j) = detail::minmax_scale(x(j), sc.feat_min(j), sc.feat_max(j));
    return z;
}

}  // namespace

std::optional<double> FittedModel::predict_cell(const RateSurface& rs, Gender g, int age,
                                                int year) const {
    if (age < rs.age_min() || age > rs.age_max()) return std::nullopt;

    switch (spec.family) {
        case ModelFamily::Oracle:
            if (!rs.in_range(age, year) || rs.missing(g, age, year)) return std::nullopt;
            return rs.rate(g, age, year);
        case ModelFamily::Constant:
            return std::get<ConstantPayload>(payload).value;
        case ModelFamily::LeeCarter: {
            const LeeCarterParams& p = std::get<LcPayload>(payload).of(g);
            if (age < p.age_min || age > p.age_max()) return std::nullopt;
            if (year < p.year_min) return std::nullopt;
            if (year > p.year_max() && !p.drift_estimated) return std::nullopt;
            return lc_rate(p, age, year);
        }
        case ModelFamily::Tree:
        case ModelFamily::Forest:
        case ModelFamily::Gbm:
        case ModelFamily::RegBoost:
        case ModelFamily::OrderedBoost: {
            const auto x = static_features(rs, g, age, year);
            if (!x) return std::nullopt;
            if (const auto* t = std::get_if<RegressionTree>(&payload)) return t->predict(*x);
            if (const auto* f = std::get_if<ForestModel>(&payload)) return f->predict(*x);
            if (const auto* b = std::get_if<BoostModel>(&payload)) return b->predict(*x);
            if (const auto* r = std::get_if<RegBoostModel>(&payload)) return r->predict(*x);
            return std::get<OrderedBoostModel>(payload).predict(*x);
        }
        case ModelFamily::Fnn: {
            const auto x = static_features(rs, g, age, year);
            if (!x) return std::nullopt;
            const FnnPayload& p = std::get<FnnPayload>(payload);
            const double scaled = p.net.forward(scale_static_row(p.scaler, *x).transpose())(0);
            return p.scaler.unscale_target(scaled);
        }
        case ModelFamily::LstmHybrid:
        case ModelFamily::MhaHybrid: {
            const HybridPayload& p = std::get<HybridPayload>(payload);
            const SequenceSampleSet set =
                build_sequence_features_for_year(rs, year, spec.variant, p.lags_or_window);
            const CellKey key{g, age, year};
            for (Eigen::Index r = 0; r < set.size(); ++r) {
                if (!(set.keys[r] == key)) continue;
                const SequenceSampleSet scaled = p.scaler.transform(set);
                const double pred = p.model.predict_one(scaled.statics.row(r), scaled.seq.row(r));
                return p.scaler.unscale_target(pred);
            }
            return std::nullopt;
        }
    }
    return std::nullopt;
}

std::map<CellKey, double> FittedModel::predict_year(const RateSurface& rs, int year) const {
    std::map<CellKey, double> out;

    // Hybrids batch the whole year through one feature build and scaling.
    if (spec.family == ModelFamily::LstmHybrid || spec.family == ModelFamily::MhaHybrid) {
        const HybridPayload& p = std::get<HybridPayload>(payload);
        const SequenceSampleSet set =
            build_sequence_features_for_year(rs, year, spec.variant, p.lags_or_window);
        if (set.size() == 0) return out;
        const SequenceSampleSet scaled = p.scaler.transform(set);
        const VectorXd pred = p.model.predict(scaled.statics, scaled.seq);
        for (Eigen::Index r = 0; r < set.size(); ++r)
            out[set.keys[r]] = p.scaler.unscale_target(pred(r));
        return out;
    }

    for (Gender g : kGenders)
        for (int age = rs.age_min(); age <= rs.age_max(); ++age)
            if (const auto v = predict_cell(rs, g, age, year)) out[{g, age, year}] = *v;
    return out;
}

RateSurface predict_recursive(const FittedModel& model, const RateSurface& history, int horizon) {
    if (horizon < 1) throw ModelError("forecast horizon must be positive");
    RateSurface rs = history;
    for (int h = 0; h < horizon; ++h) {
        rs.append_year();
        const int year = rs.year_max();
        bool any = false;
        for (Gender g : kGenders) {
            for (int age = rs.age_min(); age <= rs.age_max(); ++age) {
                const auto v = model.predict_cell(rs, g, age, year);
                if (!v) continue;
                rs.set_rate(g, age, year, std::max(*v, 0.0));
                any = true;
            }
        }
        if (!any)
            throw ModelError("model '" + model.spec.text() + "' cannot predict year " +
                             std::to_string(year) + " (insufficient history)");
    }
    return rs;
}

}  // namespace mortcast
