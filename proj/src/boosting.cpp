#include "mortcast/boosting.hpp"

#include <algorithm>
#include <numeric>

namespace mortcast {

namespace {

double ensemble_predict(const std::vector<RegressionTree>& trees, double shrinkage,
                        const RowVectorXd& x) {
    double f = 0.0;
    for (const auto& t : trees) f += shrinkage * t.predict(x);
    return f;
}

}  // namespace

double BoostModel::predict(const RowVectorXd& x) const {
    return ensemble_predict(trees, options.shrinkage, x);
}

VectorXd BoostModel::predict(const MatrixXd& X) const {
    VectorXd out = VectorXd::Zero(X.rows());
    for (Eigen::Index r = 0; r < X.rows(); ++r) out(r) = predict(RowVectorXd(X.row(r)));
    return out;
}

BoostModel fit_gbm(const MatrixXd& X, const VectorXd& y, const BoostOptions& opts) {
    if (X.rows() == 0) throw ModelError("cannot fit boosting model on empty sample set");
    if (X.rows() != y.size()) throw ModelError("feature/target row count mismatch");
    if (opts.shrinkage <= 0.0 || opts.shrinkage > 1.0)
        throw ModelError("shrinkage must lie in (0, 1]");
    if (opts.n_rounds < 1) throw ModelError("boosting needs at least one round");

    BoostModel model;
    model.options = opts;
    model.n_features = static_cast<int>(X.cols());
    model.trees.reserve(opts.n_rounds);
    model.train_sse.reserve(opts.n_rounds + 1);

    VectorXd f = VectorXd::Zero(y.size());
    model.train_sse.push_back((y - f).squaredNorm());
    for (int k = 0; k < opts.n_rounds; ++k) {
        const VectorXd residual = y - f;
        RegressionTree tree = fit_tree(X, residual, opts.tree);
        f += opts.shrinkage * tree.predict(X);
        model.trees.push_back(std::move(tree));
        model.train_sse.push_back((y - f).squaredNorm());
    }
    return model;
}

double RegBoostModel::predict(const RowVectorXd& x) const {
    return ensemble_predict(trees, options.shrinkage, x);
}

VectorXd RegBoostModel::predict(const MatrixXd& X) const {
    VectorXd out = VectorXd::Zero(X.rows());
    for (Eigen::Index r = 0; r < X.rows(); ++r) out(r) = predict(RowVectorXd(X.row(r)));
    return out;
}

namespace {

// One second-order tree. With h = 1 per row, H terms are row counts. The
// score of a node holding gradient sum G over n rows is -0.5*G^2/(n+lambda);
// gain of a split is parent score minus child scores minus gamma.
class RegTreeBuilder {
public:
    RegTreeBuilder(const MatrixXd& X, const VectorXd& g, const RegBoostOptions& opts)
        : X_(X), g_(g), opts_(opts) {}

    RegressionTree build() {
        RegressionTree tree;
        tree.n_features = static_cast<int>(X_.cols());
        tree.options = TreeOptions{.max_depth = opts_.max_depth, .min_leaf = opts_.min_leaf};
        std::vector<int> rows(X_.rows());
        std::iota(rows.begin(), rows.end(), 0);
        grow(tree, rows, 0);
        return tree;
    }

private:
    struct Candidate {
        bool found = false;
        int feature = -1;
        double threshold = 0.0;
        long double gain = 0.0;
    };

    void scan_feature(std::span<const int> rows, int feature, Candidate& best) const {
        const std::size_t n = rows.size();
        std::vector<std::pair<double, double>> vals;  // (feature value, gradient)
        vals.reserve(n);
        for (int r : rows) vals.emplace_back(X_(r, feature), g_(r));
        std::sort(vals.begin(), vals.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        long double total_g = 0.0;
        for (const auto& [v, g] : vals) total_g += g;

        long double left_g = 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            left_g += vals[i].second;
            if (vals[i].first == vals[i + 1].first) continue;
            const std::size_t n_left = i + 1;
            const std::size_t n_right = n - n_left;
            if (n_left < static_cast<std::size_t>(opts_.min_leaf) ||
                n_right < static_cast<std::size_t>(opts_.min_leaf))
                continue;
            const long double right_g = total_g - left_g;
            const long double gain = 0.5L * (left_g * left_g / (n_left + opts_.lambda) +
                                             right_g * right_g / (n_right + opts_.lambda) -
                                             total_g * total_g / (n + opts_.lambda)) -
                                     opts_.gamma;
            if (gain > 0.0 && (!best.found || gain > best.gain)) {
                best.found = true;
                best.feature = feature;
                best.threshold = 0.5 * (vals[i].first + vals[i + 1].first);
                best.gain = gain;
            }
        }
    }

    int grow(RegressionTree& tree, std::vector<int>& rows, int depth) {
        const int node_id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        long double grad_sum = 0.0;
        for (int r : rows) grad_sum += g_(r);
        tree.nodes[node_id].value =
            static_cast<double>(-grad_sum / (static_cast<long double>(rows.size()) + opts_.lambda));
        tree.nodes[node_id].n_rows = static_cast<int>(rows.size());

        if (depth >= opts_.max_depth ||
            rows.size() < 2 * static_cast<std::size_t>(opts_.min_leaf) || rows.size() < 2)
            return node_id;

        Candidate best;
        for (int f = 0; f < static_cast<int>(X_.cols()); ++f) scan_feature(rows, f, best);
        if (!best.found) return node_id;

        std::vector<int> left, right;
        left.reserve(rows.size());
        right.reserve(rows.size());
        for (int r : rows)
            (X_(r, best.feature) < best.threshold ? left : right).push_back(r);
        tree.nodes[node_id].feature = best.feature;
        tree.nodes[node_id].threshold = best.threshold;
        rows.clear();
        rows.shrink_to_fit();
        const int l = grow(tree, left, depth + 1);
        tree.nodes[node_id].left = l;
        const int r = grow(tree, right, depth + 1);
        tree.nodes[node_id].right = r;
        return node_id;
    }

    const MatrixXd& X_;
    const VectorXd& g_;
    const RegBoostOptions& opts_;
};

}  // namespace

RegBoostModel fit_regboost(const MatrixXd& X, const VectorXd& y, const RegBoostOptions& opts) {
    if (X.rows() == 0) throw ModelError("cannot fit boosting model on empty sample set");
    if (X.rows() != y.size()) throw ModelError("feature/target row count mismatch");
    if (opts.shrinkage <= 0.0 || opts.shrinkage > 1.0)
        throw ModelError("shrinkage must lie in (0, 1]");
    if (opts.n_rounds < 1) throw ModelError("boosting needs at least one round");
    if (opts.lambda < 0.0 || opts.gamma < 0.0)
        throw ModelError("regularization parameters must be nonnegative");

    RegBoostModel model;
    model.options = opts;
    model.n_features = static_cast<int>(X.cols());
    model.trees.reserve(opts.n_rounds);

    VectorXd f = VectorXd::Zero(y.size());
    model.train_sse.push_back((y - f).squaredNorm());
    for (int k = 0; k < opts.n_rounds; ++k) {
        const VectorXd g = f - y;  // d/dF of 0.5*(F-y)^2
        RegressionTree tree = RegTreeBuilder(X, g, opts).build();
        f += opts.shrinkage * tree.predict(X);
        model.trees.push_back(std::move(tree));
        model.train_sse.push_back((y - f).squaredNorm());
    }
    return model;
}

namespace detail {

VectorXd ordered_target_encoding(const VectorXd& cats, const VectorXd& y, double prior_weight,
                                 double prior_value, std::uint64_t seed,
                                 std::vector<int>* perm_out) {
    const Eigen::Index n = cats.size();
    if (n == 0) throw ModelError("cannot encode an empty category column");
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    if (perm_out) *perm_out = perm;

    const double prior = prior_value;
    VectorXd enc(n);
    std::map<double, std::pair<double, long>> running;
    for (int pos = 0; pos < n; ++pos) {
        const int r = perm[pos];
        auto& [sum, count] = running[cats(r)];
        enc(r) = (sum + prior_weight * prior) / (static_cast<double>(count) + prior_weight);
        sum += y(r);
        ++count;
    }
    return enc;
}

}  // namespace detail

double OrderedBoostModel::encode(double category) const {
    auto it = cat_stats.find(category);
    const double sum = it == cat_stats.end() ? 0.0 : it->second.first;
    const double count = it == cat_stats.end() ? 0.0 : static_cast<double>(it->second.second);
    return (sum + prior_weight * prior) / (count + prior_weight);
}

double OrderedBoostModel::predict(const RowVectorXd& x) const {
    RowVectorXd z = x;
    z(cat_feature) = encode(x(cat_feature));
    return boost.predict(z);
}

VectorXd OrderedBoostModel::predict(const MatrixXd& X) const {
    VectorXd out = VectorXd::Zero(X.rows());
    for (Eigen::Index r = 0; r < X.rows(); ++r) out(r) = predict(RowVectorXd(X.row(r)));
    return out;
}

OrderedBoostModel fit_ordered_boost(const MatrixXd& X, const VectorXd& y,
                                    const OrderedBoostOptions& opts) {
    if (X.rows() == 0) throw ModelError("cannot fit boosting model on empty sample set");
    if (opts.cat_feature < 0 || opts.cat_feature >= X.cols())
        throw ModelError("categorical feature index out of range");
    if (opts.prior_weight <= 0.0) throw ModelError("prior weight must be positive");

    OrderedBoostModel model;
    model.cat_feature = opts.cat_feature;
    model.prior = opts.prior_value.value_or(y.mean());
    model.prior_weight = opts.prior_weight;
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        auto& [sum, count] = model.cat_stats[X(r, opts.cat_feature)];
        sum += y(r);
        ++count;
    }

    MatrixXd Z = X;
    Z.col(opts.cat_feature) = detail::ordered_target_encoding(
        X.col(opts.cat_feature), y, opts.prior_weight, model.prior, opts.seed);
    model.boost = fit_gbm(Z, y, opts.boost);
    return model;
}

}  // namespace mortcast
