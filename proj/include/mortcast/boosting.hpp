#pragma once

#include "mortcast/tree.hpp"

#include <map>
#include <optional>

namespace mortcast {

struct BoostOptions {
    int n_rounds = 100;
    double shrinkage = 0.1;
    TreeOptions tree{.max_depth = 3, .min_leaf = 1};
};

// Gradient boosting with squared loss: F0 = 0, then F_k = F_{k-1} + shrinkage
// * T_k where T_k is a CART fit to the residuals y - F_{k-1}. With 0 <
// shrinkage <= 1 every round moves each leaf's rows toward their residual
// mean, so train SSE never increases; train_sse records the trace (entry 0 is
// the SSE of F0).
struct BoostModel {
    std::vector<RegressionTree> trees;
    BoostOptions options;
    int n_features = 0;
    std::vector<double> train_sse;

    double predict(const RowVectorXd& x) const;
    VectorXd predict(const MatrixXd& X) const;
};

BoostModel fit_gbm(const MatrixXd& X, const VectorXd& y, const BoostOptions& opts = {});

struct RegBoostOptions {
    int n_rounds = 100;
    double shrinkage = 0.1;
    int max_depth = 3;
    int min_leaf = 1;
    double lambda = 1.0;  // L2 penalty on leaf weights
    double gamma = 0.0;   // per-leaf split penalty
};

// Second-order boosting for squared loss: per row g = F(x) - y, h = 1. Leaf
// weight w* = -G/(H+lambda); split gain = 0.5*(GL^2/(HL+l) + GR^2/(HR+l) -
// G^2/(H+l)) - gamma, and splits with gain <= 0 are rejected. At lambda=0,
// gamma=0 the fitted trees match fit_gbm exactly.
struct RegBoostModel {
    std::vector<RegressionTree> trees;  // leaf value holds the weight w*
    RegBoostOptions options;
    int n_features = 0;
    std::vector<double> train_sse;

    double predict(const RowVectorXd& x) const;
    VectorXd predict(const MatrixXd& X) const;
};

RegBoostModel fit_regboost(const MatrixXd& X, const VectorXd& y, const RegBoostOptions& opts = {});

struct OrderedBoostOptions {
    BoostOptions boost;
    int cat_feature = 1;        // column treated as categorical
    double prior_weight = 1.0;  // a in (sum + a*P)/(count + a)
    std::optional<double> prior_value;  // P; empty = training target mean
    std::uint64_t seed = 7;
};

// Boosting over features where one column is categorical and replaced by an
// ordered target statistic: rows are ranked by one random permutation sigma,
// and row i's encoding uses only rows of the same category that precede it,
//   enc(i) = (prefix_sum + a*P) / (prefix_count + a),  P = global target mean.
// A category's first occurrence therefore encodes to P. Prediction-time
// encoding uses the statistic over the full training set.
struct OrderedBoostModel {
    BoostModel boost;
    int cat_feature = 1;
    double prior = 0.0;
    double prior_weight = 1.0;
    std::map<double, std::pair<double, long>> cat_stats;  // category -> (target sum, count)

    double encode(double category) const;
    double predict(const RowVectorXd& x) const;
    VectorXd predict(const MatrixXd& X) const;
};

OrderedBoostModel fit_ordered_boost(const MatrixXd& X, const VectorXd& y,
                                    const OrderedBoostOptions& opts = {});

namespace detail {

// Encodings for the training pass itself (exposed for tests): entry i is the
// ordered statistic for row i under the permutation drawn from `seed`. The
// prior P enters only as the given constant, so an encoding depends on
// nothing later in the permutation.
VectorXd ordered_target_encoding(const VectorXd& cats, const VectorXd& y, double prior_weight,
                                 double prior_value, std::uint64_t seed,
                                 std::vector<int>* perm_out = nullptr);

}  // namespace detail

}  // namespace mortcast
