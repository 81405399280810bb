#pragma once

#include "mortcast/types.hpp"

#include <span>

namespace mortcast {

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;  // leaf prediction (mean target of its rows)
    int n_rows = 0;
};

struct TreeOptions {
    int max_depth = 6;
    int min_leaf = 1;
};

// CART regression tree. Splits minimize total child SSE over all (feature,
// midpoint-between-adjacent-sorted-values) candidates; ties go to the lowest
// feature index, then the lowest threshold. Rule: go left iff x[f] < thr.
struct RegressionTree {
    std::vector<TreeNode> nodes;  // preorder, nodes[0] is the root
    int n_features = 0;
    TreeOptions options;

    double predict(const RowVectorXd& x) const;
    VectorXd predict(const MatrixXd& X) const;
    int depth() const;
    int leaf_count() const;
};

RegressionTree fit_tree(const MatrixXd& X, const VectorXd& y, const TreeOptions& opts = {});

namespace detail {

// Forest hook: when `rng` is non-null, each node's candidate features are an
// mtry-subset drawn without replacement (then scanned in ascending order so
// tie-breaking stays canonical).
RegressionTree fit_tree_rows(const MatrixXd& X, const VectorXd& y,
                             std::span<const int> rows, const TreeOptions& opts,
                             int mtry, Rng* rng);

}  // namespace detail

}  // namespace mortcast
