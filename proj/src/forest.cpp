#include "mortcast/forest.hpp"

#include <atomic>
#include <numeric>
#include <thread>

namespace mortcast {

double ForestModel::predict(const RowVectorXd& x) const {
    if (trees.empty()) throw ModelError("forest has no trees");
    double sum = 0.0;
    for (const auto& t : trees) sum += t.predict(x);
    return sum / static_cast<double>(trees.size());
}

VectorXd ForestModel::predict(const MatrixXd& X) const {
    VectorXd out = VectorXd::Zero(X.rows());
    for (Eigen::Index r = 0; r < X.rows(); ++r) out(r) = predict(RowVectorXd(X.row(r)));
    return out;
}

ForestModel fit_forest(const MatrixXd& X, const VectorXd& y, const ForestOptions& opts) {
    if (X.rows() == 0) throw ModelError("cannot fit forest on empty sample set");
    if (X.rows() != y.size()) throw ModelError("feature/target row count mismatch");
    if (opts.n_trees < 1) throw ModelError("forest needs at least one tree");
    const int n = static_cast<int>(X.rows());
    const int d = static_cast<int>(X.cols());
    const int mtry = (opts.mtry <= 0 || opts.mtry > d) ? d : opts.mtry;

    ForestModel model;
    model.options = opts;
    model.options.mtry = mtry;
    model.n_features = d;
    model.trees.resize(opts.n_trees);

    auto fit_one = [&](int t) {
        Rng rng(mix_seed(opts.seed, static_cast<std::uint64_t>(t)));
        std::vector<int> rows(n);
        if (opts.bootstrap) {
            std::uniform_int_distribution<int> pick(0, n - 1);
            for (int i = 0; i < n; ++i) rows[i] = pick(rng);
        } else {
            std::iota(rows.begin(), rows.end(), 0);
        }
        const bool subsample = mtry < d;
        model.trees[t] = detail::fit_tree_rows(X, y, rows, opts.tree, mtry,
                                               subsample ? &rng : nullptr);
    };

    const int jobs = std::max(1, opts.jobs);
    if (jobs == 1 || opts.n_trees == 1) {
        for (int t = 0; t < opts.n_trees; ++t) fit_one(t);
    } else {
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        const int workers = std::min(jobs, opts.n_trees);
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (int t = next.fetch_add(1); t < opts.n_trees; t = next.fetch_add(1)) fit_one(t);
            });
        for (auto& th : pool) th.join();
    }
    return model;
}

}  // namespace mortcast
