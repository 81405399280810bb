#pragma once

#include "mortcast/tree.hpp"

namespace mortcast {

struct ForestOptions {
    int n_trees = 100;
    TreeOptions tree;
    int mtry = 0;  // features considered per split; 0 means all
    bool bootstrap = true;
    std::uint64_t seed = 1;
    int jobs = 1;
};

// Bagged ensemble of CART trees: each tree sees a same-size bootstrap sample
// (with replacement) and an mtry feature subset per split. Tree t derives its
// private stream from mix_seed(seed, t), so fits are identical at any job
// count.
struct ForestModel {
    std::vector<RegressionTree> trees;
    ForestOptions options;
    int n_features = 0;

    double predict(const RowVectorXd& x) const;
    VectorXd predict(const MatrixXd& X) const;
};

ForestModel fit_forest(const MatrixXd& X, const VectorXd& y, const ForestOptions& opts = {});

}  // namespace mortcast
