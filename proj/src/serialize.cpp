#include "mortcast/serialize.hpp"

#include "mortcast/io.hpp"

#include <fstream>

namespace mortcast {

using nlohmann::json;

namespace {

json vec_to_json(const VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

VectorXd vec_from_json(const json& j) {
    VectorXd v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    return v;
}

json mat_to_json(const MatrixXd& m) {
    json a = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        a.push_back(std::move(row));
    }
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(a)}};
}

MatrixXd mat_from_json(const json& j) {
    MatrixXd m(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
    const json& a = j.at("data");
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            m(r, c) = a[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
    return m;
}

json tree_to_json(const RegressionTree& t) {
    json nodes = json::array();
    for (const auto& n : t.nodes)
        nodes.push_back(json{{"feature", n.feature},
                             {"threshold", n.threshold},
                             {"left", n.left},
                             {"right", n.right},
                             {"value", n.value},
                             {"n_rows", n.n_rows}});
    return json{{"n_features", t.n_features},
                {"max_depth", t.options.max_depth},
                {"min_leaf", t.options.min_leaf},
                {"nodes", std::move(nodes)}};
}

RegressionTree tree_from_json(const json& j) {
    RegressionTree t;
    t.n_features = j.at("n_features").get<int>();
    t.options.max_depth = j.at("max_depth").get<int>();
    t.options.min_leaf = j.at("min_leaf").get<int>();
    for (const auto& n : j.at("nodes"))
        t.nodes.push_back({n.at("feature").get<int>(), n.at("threshold").get<double>(),
                           n.at("left").get<int>(), n.at("right").get<int>(),
                           n.at("value").get<double>(), n.at("n_rows").get<int>()});
    return t;
}

json trees_to_json(const std::vector<RegressionTree>& trees) {
    json a = json::array();
    for (const auto& t : trees) a.push_back(tree_to_json(t));
    return a;
}

std::vector<RegressionTree> trees_from_json(const json& j) {
    std::vector<RegressionTree> trees;
    for (const auto& t : j) trees.push_back(tree_from_json(t));
    return trees;
}

json stack_to_json(const DenseStack& s) {
    json layers = json::array();
    for (const auto& l : s.layers)
        layers.push_back(json{{"W", mat_to_json(l.W)},
                              {"b", vec_to_json(l.b)},
                              {"act", activation_name(l.act)}});
    return json{{"layers", std::move(layers)}};
}

DenseStack stack_from_json(const json& j) {
    DenseStack s;
    for (const auto& l : j.at("layers"))
        s.layers.push_back({mat_from_json(l.at("W")), vec_from_json(l.at("b")),
                            activation_from_name(l.at("act").get<std::string>())});
    return s;
}

json lstm_to_json(const LSTMParams& p) {
    return json{{"input_size", p.input_size}, {"hidden_size", p.hidden_size},
                {"Wi", mat_to_json(p.Wi)},    {"bi", vec_to_json(p.bi)},
                {"Wf", mat_to_json(p.Wf)},    {"bf", vec_to_json(p.bf)},
                {"Wo", mat_to_json(p.Wo)},    {"bo", vec_to_json(p.bo)},
                {"Wg", mat_to_json(p.Wg)},    {"bg", vec_to_json(p.bg)}};
}

LSTMParams lstm_from_json(const json& j) {
    LSTMParams p;
    p.input_size = j.at("input_size").get<int>();
    p.hidden_size = j.at("hidden_size").get<int>();
    p.Wi = mat_from_json(j.at("Wi"));
    p.bi = vec_from_json(j.at("bi"));
    p.Wf = mat_from_json(j.at("Wf"));
    p.bf = vec_from_json(j.at("bf"));
    p.Wo = mat_from_json(j.at("Wo"));
    p.bo = vec_from_json(j.at("bo"));
    p.Wg = mat_from_json(j.at("Wg"));
    p.bg = vec_from_json(j.at("bg"));
    return p;
}

json attn_to_json(const AttentionParams& p) {
    json heads = json::array();
    for (int h = 0; h < p.heads; ++h)
        heads.push_back(json{{"Wq", mat_to_json(p.Wq[h])},
                             {"Wk", mat_to_json(p.Wk[h])},
                             {"Wv", mat_to_json(p.Wv[h])}});
    return json{{"d", p.d},
                {"heads", p.heads},
                {"input_size", p.input_size},
                {"embed_W", mat_to_json(p.embed_W)},
                {"embed_b", vec_to_json(p.embed_b)},
                {"head_params", std::move(heads)},
                {"Wo", mat_to_json(p.Wo)}};
}

AttentionParams attn_from_json(const json& j) {
    AttentionParams p;
    p.d = j.at("d").get<int>();
    p.heads = j.at("heads").get<int>();
    p.input_size = j.at("input_size").get<int>();
    p.embed_W = mat_from_json(j.at("embed_W"));
    p.embed_b = vec_from_json(j.at("embed_b"));
    for (const auto& h : j.at("head_params")) {
        p.Wq.push_back(mat_from_json(h.at("Wq")));
        p.Wk.push_back(mat_from_json(h.at("Wk")));
        p.Wv.push_back(mat_from_json(h.at("Wv")));
    }
    p.Wo = mat_from_json(j.at("Wo"));
    return p;
}

json history_to_json(const TrainResult& h) {
    return json{{"train_loss", h.train_loss}, {"val_loss", h.val_loss},
                {"best_epoch", h.best_epoch}};
}

TrainResult history_from_json(const json& j) {
    TrainResult h;
    h.train_loss = j.at("train_loss").get<std::vector<double>>();
    h.val_loss = j.at("val_loss").get<std::vector<double>>();
    h.best_epoch = j.at("best_epoch").get<int>();
    return h;
}

json minmax_to_json(const MinMaxScaler& s) {
    return json{{"feat_min", vec_to_json(s.feat_min)},
                {"feat_max", vec_to_json(s.feat_max)},
                {"target_min", s.target_min},
                {"target_max", s.target_max}};
}

MinMaxScaler minmax_from_json(const json& j) {
    MinMaxScaler s;
    s.feat_min = vec_from_json(j.at("feat_min"));
    s.feat_max = vec_from_json(j.at("feat_max"));
    s.target_min = j.at("target_min").get<double>();
    s.target_max = j.at("target_max").get<double>();
    return s;
}

json seqscaler_to_json(const SequenceScaler& s) {
    return json{{"static_min", vec_to_json(s.static_min)},
                {"static_max", vec_to_json(s.static_max)},
                {"seq_min", s.seq_min},
                {"seq_max", s.seq_max},
                {"target_min", s.target_min},
                {"target_max", s.target_max}};
}

SequenceScaler seqscaler_from_json(const json& j) {
    SequenceScaler s;
    s.static_min = vec_from_json(j.at("static_min"));
    s.static_max = vec_from_json(j.at("static_max"));
    s.seq_min = j.at("seq_min").get<double>();
    s.seq_max = j.at("seq_max").get<double>();
    s.target_min = j.at("target_min").get<double>();
    s.target_max = j.at("target_max").get<double>();
    return s;
}

json lcparams_to_json(const LeeCarterParams& p) {
    return json{{"gender", std::string(1, gender_code(p.gender))},
                {"age_min", p.age_min},
                {"year_min", p.year_min},
                {"a", vec_to_json(p.a)},
                {"b", vec_to_json(p.b)},
                {"kappa", vec_to_json(p.kappa)},
                {"drift", p.drift},
                {"sigma_kappa", p.sigma_kappa},
                {"drift_estimated", p.drift_estimated},
                {"loglik_trace", p.loglik_trace}};
}

LeeCarterParams lcparams_from_json(const json& j) {
    LeeCarterParams p;
    p.gender = gender_from_code(j.at("gender").get<std::string>());
    p.age_min = j.at("age_min").get<int>();
    p.year_min = j.at("year_min").get<int>();
    p.a = vec_from_json(j.at("a"));
    p.b = vec_from_json(j.at("b"));
    p.kappa = vec_from_json(j.at("kappa"));
    p.drift = j.at("drift").get<double>();
    p.sigma_kappa = j.at("sigma_kappa").get<double>();
    p.drift_estimated = j.at("drift_estimated").get<bool>();
    p.loglik_trace = j.at("loglik_trace").get<std::vector<double>>();
    return p;
}

json hybrid_to_json(const HybridPayload& p) {
    json j{{"branch", p.model.branch == SeqBranch::Lstm ? "lstm" : "attention"},
           {"loss", p.model.loss == Loss::MeanSquared ? "mse" : "mae"},
           {"static_stack", stack_to_json(p.model.static_stack)},
           {"head", stack_to_json(p.model.head)},
           {"scaler", seqscaler_to_json(p.scaler)},
           {"history", history_to_json(p.history)},
           {"lags_or_window", p.lags_or_window}};
    if (p.model.branch == SeqBranch::Lstm)
        j["lstm"] = lstm_to_json(p.model.lstm);
    else
        j["attn"] = attn_to_json(p.model.attn);
    return j;
}

HybridPayload hybrid_from_json(const json& j) {
    HybridPayload p;
    p.model.branch = j.at("branch").get<std::string>() == "lstm" ? SeqBranch::Lstm
                                                                 : SeqBranch::Attention;
    p.model.loss = j.at("loss").get<std::string>() == "mse" ? Loss::MeanSquared
                                                            : Loss::MeanAbsolute;
    p.model.static_stack = stack_from_json(j.at("static_stack"));
    p.model.head = stack_from_json(j.at("head"));
    if (p.model.branch == SeqBranch::Lstm)
        p.model.lstm = lstm_from_json(j.at("lstm"));
    else
        p.model.attn = attn_from_json(j.at("attn"));
    p.scaler = seqscaler_from_json(j.at("scaler"));
    p.history = history_from_json(j.at("history"));
    p.lags_or_window = j.at("lags_or_window").get<int>();
    return p;
}

}  // namespace

json model_to_json(const FittedModel& m) {
    json j{{"spec", m.spec.text()},
           {"train_year_min", m.train_year_min},
           {"train_year_max", m.train_year_max},
           {"age_min", m.age_min},
           {"age_max", m.age_max},
           {"max_train_feature_year", m.max_train_feature_year}};

    switch (m.spec.family) {
        case ModelFamily::Tree:
            j["model"] = tree_to_json(std::get<RegressionTree>(m.payload));
            break;
        case ModelFamily::Forest: {
            const auto& f = std::get<ForestModel>(m.payload);
            j["model"] = json{{"n_trees", f.options.n_trees},
                              {"max_depth", f.options.tree.max_depth},
                              {"min_leaf", f.options.tree.min_leaf},
                              {"mtry", f.options.mtry},
                              {"seed", f.options.seed},
                              {"n_features", f.n_features},
                              {"trees", trees_to_json(f.trees)}};
            break;
        }
        case ModelFamily::Gbm: {
            const auto& b = std::get<BoostModel>(m.payload);
            j["model"] = json{{"n_rounds", b.options.n_rounds},
                              {"shrinkage", b.options.shrinkage},
                              {"max_depth", b.options.tree.max_depth},
                              {"min_leaf", b.options.tree.min_leaf},
                              {"n_features", b.n_features},
                              {"train_sse", b.train_sse},
                              {"trees", trees_to_json(b.trees)}};
            break;
        }
        case ModelFamily::RegBoost: {
            const auto& b = std::get<RegBoostModel>(m.payload);
            j["model"] = json{{"n_rounds", b.options.n_rounds},
                              {"shrinkage", b.options.shrinkage},
                              {"max_depth", b.options.max_depth},
                              {"min_leaf", b.options.min_leaf},
                              {"lambda", b.options.lambda},
                              {"gamma", b.options.gamma},
                              {"n_features", b.n_features},
                              {"train_sse", b.train_sse},
                              {"trees", trees_to_json(b.trees)}};
            break;
        }
        case ModelFamily::OrderedBoost: {
            const auto& b = std::get<OrderedBoostModel>(m.payload);
            json stats = json::array();
            for (const auto& [cat, sc] : b.cat_stats)
                stats.push_back(json{{"cat", cat}, {"sum", sc.first}, {"count", sc.second}});
            j["model"] = json{{"cat_feature", b.cat_feature},
                              {"prior", b.prior},
                              {"prior_weight", b.prior_weight},
                              {"cat_stats", std::move(stats)},
                              {"boost",
                               json{{"n_rounds", b.boost.options.n_rounds},
                                    {"shrinkage", b.boost.options.shrinkage},
                                    {"max_depth", b.boost.options.tree.max_depth},
                                    {"min_leaf", b.boost.options.tree.min_leaf},
                                    {"n_features", b.boost.n_features},
                                    {"train_sse", b.boost.train_sse},
                                    {"trees", trees_to_json(b.boost.trees)}}}};
            break;
        }
        case ModelFamily::Fnn: {
            const auto& p = std::get<FnnPayload>(m.payload);
            j["model"] = json{{"net", stack_to_json(p.net)},
                              {"scaler", minmax_to_json(p.scaler)},
                              {"history", history_to_json(p.history)}};
            break;
        }
        case ModelFamily::LstmHybrid:
        case ModelFamily::MhaHybrid:
            j["model"] = hybrid_to_json(std::get<HybridPayload>(m.payload));
            break;
        case ModelFamily::LeeCarter: {
            const auto& p = std::get<LcPayload>(m.payload);
            j["model"] = json{{"female", lcparams_to_json(p.female)},
                              {"male", lcparams_to_json(p.male)}};
            break;
        }
        case ModelFamily::Oracle:
            j["model"] = json::object();
            break;
        case ModelFamily::Constant:
            j["model"] = json{{"value", std::get<ConstantPayload>(m.payload).value}};
            break;
    }
    return j;
}

FittedModel model_from_json(const json& j) {
    FittedModel m;
    m.spec = parse_model_spec(j.at("spec").get<std::string>());
    m.train_year_min = j.at("train_year_min").get<int>();
    m.train_year_max = j.at("train_year_max").get<int>();
    m.age_min = j.at("age_min").get<int>();
    m.age_max = j.at("age_max").get<int>();
    m.max_train_feature_year = j.at("max_train_feature_year").get<int>();
    const json& mj = j.at("model");

    switch (m.spec.family) {
        case ModelFamily::Tree:
            m.payload = tree_from_json(mj);
            break;
        case ModelFamily::Forest: {
            ForestModel f;
            f.options.n_trees = mj.at("n_trees").get<int>();
            f.options.tree.max_depth = mj.at("max_depth").get<int>();
            f.options.tree.min_leaf = mj.at("min_leaf").get<int>();
            f.options.mtry = mj.at("mtry").get<int>();
            f.options.seed = mj.at("seed").get<std::uint64_t>();
            f.n_features = mj.at("n_features").get<int>();
            f.trees = trees_from_json(mj.at("trees"));
            m.payload = std::move(f);
            break;
        }
        case ModelFamily::Gbm: {
            BoostModel b;
            b.options.n_rounds = mj.at("n_rounds").get<int>();
            b.options.shrinkage = mj.at("shrinkage").get<double>();
            b.options.tree.max_depth = mj.at("max_depth").get<int>();
            b.options.tree.min_leaf = mj.at("min_leaf").get<int>();
            b.n_features = mj.at("n_features").get<int>();
            b.train_sse = mj.at("train_sse").get<std::vector<double>>();
            b.trees = trees_from_json(mj.at("trees"));
            m.payload = std::move(b);
            break;
        }
        case ModelFamily::RegBoost: {
            RegBoostModel b;
            b.options.n_rounds = mj.at("n_rounds").get<int>();
            b.options.shrinkage = mj.at("shrinkage").get<double>();
            b.options.max_depth = mj.at("max_depth").get<int>();
            b.options.min_leaf = mj.at("min_leaf").get<int>();
            b.options.lambda = mj.at("lambda").get<double>();
            b.options.gamma = mj.at("gamma").get<double>();
            b.n_features = mj.at("n_features").get<int>();
            b.train_sse = mj.at("train_sse").get<std::vector<double>>();
            b.trees = trees_from_json(mj.at("trees"));
            m.payload = std::move(b);
            break;
        }
        case ModelFamily::OrderedBoost: {
            OrderedBoostModel b;
            b.cat_feature = mj.at("cat_feature").get<int>();
            b.prior = mj.at("prior").get<double>();
            b.prior_weight = mj.at("prior_weight").get<double>();
            for (const auto& s : mj.at("cat_stats"))
                b.cat_stats[s.at("cat").get<double>()] = {s.at("sum").get<double>(),
                                                          s.at("count").get<long>()};
            const json& bj = mj.at("boost");
            b.boost.options.n_rounds = bj.at("n_rounds").get<int>();
            b.boost.options.shrinkage = bj.at("shrinkage").get<double>();
            b.boost.options.tree.max_depth = bj.at("max_depth").get<int>();
            b.boost.options.tree.min_leaf = bj.at("min_leaf").get<int>();
            b.boost.n_features = bj.at("n_features").get<int>();
            b.boost.train_sse = bj.at("train_sse").get<std::vector<double>>();
            b.boost.trees = trees_from_json(bj.at("trees"));
            m.payload = std::move(b);
            break;
        }
        case ModelFamily::Fnn: {
            FnnPayload p;
            p.net = stack_from_json(mj.at("net"));
            p.scaler = minmax_from_json(mj.at("scaler"));
            p.history = history_from_json(mj.at("history"));
            m.payload = std::move(p);
            break;
        }
        case ModelFamily::LstmHybrid:
        case ModelFamily::MhaHybrid:
            m.payload = hybrid_from_json(mj);
            break;
        case ModelFamily::LeeCarter: {
            LcPayload p;
            p.female = lcparams_from_json(mj.at("female"));
            p.male = lcparams_from_json(mj.at("male"));
            m.payload = std::move(p);
            break;
        }
        case ModelFamily::Oracle:
            m.payload = OraclePayload{};
            break;
        case ModelFamily::Constant:
            m.payload = ConstantPayload{mj.at("value").get<double>()};
            break;
    }
    return m;
}

std::string model_to_string(const FittedModel& model) {
    return model_to_json(model).dump(2) + "\n";
}

void save_model(const FittedModel& model, const std::filesystem::path& path) {
    ensure_parent_dir(path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    out << model_to_string(model);
    if (!out) throw DataError("failed writing '" + path.string() + "'");
}

FittedModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open model file '" + path.string() + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("malformed model file '" + path.string() + "': " + e.what());
    }
    try {
        return model_from_json(j);
    } catch (const json::exception& e) {
        throw DataError("model file '" + path.string() + "' is missing fields: " + e.what());
    }
}

}  // namespace mortcast
