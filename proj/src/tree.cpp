#include "mortcast/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mortcast {

double RegressionTree::predict(const RowVectorXd& x) const {
    if (x.size() != n_features)
        throw ModelError("feature vector length " + std::to_string(x.size()) +
                         " does not match tree arity " + std::to_string(n_features));
    int i = 0;
    while (nodes[i].feature >= 0)
        i = x(nodes[i].feature) < nodes[i].threshold ? nodes[i].left : nodes[i].right;
    return nodes[i].value;
}

VectorXd RegressionTree::predict(const MatrixXd& X) const {
    VectorXd out(X.rows());
    for (Eigen::Index r = 0; r < X.rows(); ++r) out(r) = predict(RowVectorXd(X.row(r)));
    return out;
}

int RegressionTree::depth() const {
    // Preorder layout: recompute depth by walking children.
    std::vector<int> depth_of(nodes.size(), 0);
    int max_d = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i].feature >= 0) {
            depth_of[nodes[i].left] = depth_of[i] + 1;
            depth_of[nodes[i].right] = depth_of[i] + 1;
        } else {
            max_d = std::max(max_d, depth_of[i]);
        }
    }
    return max_d;
}

int RegressionTree::leaf_count() const {
    int n = 0;
    for (const auto& node : nodes)
        if (node.feature < 0) ++n;
    return n;
}

namespace {

struct SplitResult {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    long double child_sse = 0.0;
};

long double subset_sse(const VectorXd& y, std::span<const int> rows) {
    long double sum = 0.0, sum2 = 0.0;
    for (int r : rows) {
        sum += y(r);
        sum2 += static_cast<long double>(y(r)) * y(r);
    }
    long double sse = sum2 - sum * sum / static_cast<long double>(rows.size());
    return sse > 0.0 ? sse : 0.0;
}

// Exhaustive scan over one feature's candidate thresholds; candidates sit at
// midpoints between adjacent distinct sorted values.
void scan_feature(const MatrixXd& X, const VectorXd& y, std::span<const int> rows, int feature,
                  int min_leaf, SplitResult& best) {
    const std::size_t n = rows.size();
    thread_local std::vector<std::pair<double, double>> vals;  // (feature value, target)
    vals.clear();
    vals.reserve(n);
    for (int r : rows) vals.emplace_back(X(r, feature), y(r));
    std::sort(vals.begin(), vals.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    long double total_sum = 0.0, total_sum2 = 0.0;
    for (const auto& [v, t] : vals) {
        total_sum += t;
        total_sum2 += static_cast<long double>(t) * t;
    }

    long double left_sum = 0.0, left_sum2 = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        left_sum += vals[i].second;
        left_sum2 += static_cast<long double>(vals[i].second) * vals[i].second;
        if (vals[i].first == vals[i + 1].first) continue;  // identical values cannot separate
        const std::size_t n_left = i + 1;
        const std::size_t n_right = n - n_left;
        if (n_left < static_cast<std::size_t>(min_leaf) ||
            n_right < static_cast<std::size_t>(min_leaf))
            continue;
        const long double sse_left =
            std::max<long double>(0.0, left_sum2 - left_sum * left_sum / n_left);
        const long double right_sum = total_sum - left_sum;
        const long double right_sum2 = total_sum2 - left_sum2;
        const long double sse_right =
            std::max<long double>(0.0, right_sum2 - right_sum * right_sum / n_right);
        const long double child = sse_left + sse_right;
        if (!best.found || child < best.child_sse) {
            best.found = true;
            best.feature = feature;
            best.threshold = 0.5 * (vals[i].first + vals[i + 1].first);
            best.child_sse = child;
        }
    }
}

class TreeBuilder {
public:
    TreeBuilder(const MatrixXd& X, const VectorXd& y, const TreeOptions& opts, int mtry, Rng* rng)
        : X_(X), y_(y), opts_(opts), mtry_(mtry), rng_(rng) {}

    RegressionTree build(std::span<const int> rows) {
        RegressionTree tree;
        tree.n_features = static_cast<int>(X_.cols());
        tree.options = opts_;
        std::vector<int> work(rows.begin(), rows.end());
        grow(tree, work, 0);
        return tree;
    }

private:
    int grow(RegressionTree& tree, std::vector<int>& rows, int depth) {
        const int node_id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        double mean = 0.0;
        for (int r : rows) mean += y_(r);
        mean /= static_cast<double>(rows.size());
        tree.nodes[node_id].value = mean;
        tree.nodes[node_id].n_rows = static_cast<int>(rows.size());

        if (depth >= opts_.max_depth || rows.size() < 2 * static_cast<std::size_t>(opts_.min_leaf) ||
            rows.size() < 2)
            return node_id;

        const long double parent_sse = subset_sse(y_, rows);
        if (parent_sse <= 0.0) return node_id;

        SplitResult best;
        for (int f : candidate_features())
            scan_feature(X_, y_, rows, f, opts_.min_leaf, best);
        if (!best.found || best.child_sse >= parent_sse) return node_id;

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

    std::vector<int> candidate_features() const {
        const int d = static_cast<int>(X_.cols());
        std::vector<int> feats(d);
        std::iota(feats.begin(), feats.end(), 0);
        if (rng_ && mtry_ < d) {
            // Partial Fisher-Yates: first mtry entries are the sample.
            for (int i = 0; i < mtry_; ++i) {
                std::uniform_int_distribution<int> pick(i, d - 1);
                std::swap(feats[i], feats[pick(*rng_)]);
            }
            feats.resize(mtry_);
            std::sort(feats.begin(), feats.end());
        }
        return feats;
    }

    const MatrixXd& X_;
    const VectorXd& y_;
    TreeOptions opts_;
    int mtry_;
    Rng* rng_;
};

}  // namespace

RegressionTree fit_tree(const MatrixXd& X, const VectorXd& y, const TreeOptions& opts) {
    if (X.rows() == 0) throw ModelError("cannot fit tree on empty sample set");
    if (X.rows() != y.size()) throw ModelError("feature/target row count mismatch");
    if (!X.allFinite() || !y.allFinite())
        throw ModelError("non-finite features or targets in tree fit");
    std::vector<int> rows(X.rows());
    std::iota(rows.begin(), rows.end(), 0);
    return TreeBuilder(X, y, opts, static_cast<int>(X.cols()), nullptr).build(rows);
}

namespace detail {

RegressionTree fit_tree_rows(const MatrixXd& X, const VectorXd& y, std::span<const int> rows,
                             const TreeOptions& opts, int mtry, Rng* rng) {
    if (rows.empty()) throw ModelError("cannot fit tree on empty row set");
    return TreeBuilder(X, y, opts, mtry, rng).build(rows);
}

}  // namespace detail

}  // namespace mortcast
