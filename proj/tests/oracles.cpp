#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace testsupport {

using namespace mortcast;

namespace {

double subset_mean(const VectorXd& y, const std::vector<int>& rows) {
    double sum = 0.0;
    for (int r : rows) sum += y(r);
    return sum / static_cast<double>(rows.size());
}

// Two-pass SSE: mean first, then squared deviations.
long double naive_sse(const VectorXd& y, const std::vector<int>& rows) {
    const double mean = subset_mean(y, rows);
    long double sse = 0.0;
    for (int r : rows) {
        const long double d = y(r) - mean;
        sse += d * d;
    }
    return sse;
}

struct OracleSplit {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    long double child_sse = 0.0;
};

void oracle_grow(const MatrixXd& X, const VectorXd& y, const TreeOptions& opts,
                 const std::vector<int>& rows, int depth, std::vector<double>& pred) {
    const double mean = subset_mean(y, rows);
    const bool can_split = depth < opts.max_depth &&
                           rows.size() >= 2 * static_cast<std::size_t>(opts.min_leaf) &&
                           rows.size() >= 2;
    OracleSplit best;
    if (can_split && naive_sse(y, rows) > 0.0) {
        for (int f = 0; f < X.cols(); ++f) {
            std::set<double> distinct;
            for (int r : rows) distinct.insert(X(r, f));
            std::vector<double> vals(distinct.begin(), distinct.end());
            for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
                const double threshold = 0.5 * (vals[i] + vals[i + 1]);
                std::vector<int> left, right;
                for (int r : rows) (X(r, f) < threshold ? left : right).push_back(r);
                if (left.size() < static_cast<std::size_t>(opts.min_leaf) ||
                    right.size() < static_cast<std::size_t>(opts.min_leaf))
                    continue;
                const long double child = naive_sse(y, left) + naive_sse(y, right);
                if (!best.found || child < best.child_sse) {
                    best.found = true;
                    best.feature = f;
                    best.threshold = threshold;
                    best.child_sse = child;
                }
            }
        }
        if (best.found && best.child_sse >= naive_sse(y, rows)) best.found = false;
    }
    if (!best.found) {
        for (int r : rows) pred[static_cast<std::size_t>(r)] = mean;
        return;
    }
    std::vector<int> left, right;
    for (int r : rows) (X(r, best.feature) < best.threshold ? left : right).push_back(r);
    oracle_grow(X, y, opts, left, depth + 1, pred);
    oracle_grow(X, y, opts, right, depth + 1, pred);
}

}  // namespace

OracleTree oracle_cart(const MatrixXd& X, const VectorXd& y, const TreeOptions& opts) {
    OracleTree out;
    out.predictions.assign(static_cast<std::size_t>(X.rows()), 0.0);
    std::vector<int> rows(static_cast<std::size_t>(X.rows()));
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int>(i);
    oracle_grow(X, y, opts, rows, 0, out.predictions);
    long double sse = 0.0;
    for (Eigen::Index r = 0; r < y.size(); ++r) {
        const long double d = y(r) - out.predictions[static_cast<std::size_t>(r)];
        sse += d * d;
    }
    out.train_sse = static_cast<double>(sse);
    return out;
}

VectorXd finite_diff_gradient(const std::function<double(const VectorXd&)>& f,
                              const VectorXd& theta, double step) {
    VectorXd grad(theta.size());
    VectorXd probe = theta;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        probe(i) = theta(i) + step;
        const double up = f(probe);
        probe(i) = theta(i) - step;
        const double down = f(probe);
        probe(i) = theta(i);
        grad(i) = (up - down) / (2.0 * step);
    }
    return grad;
}

double max_rel_error(const VectorXd& analytic, const VectorXd& numeric, double floor_) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < analytic.size(); ++i) {
        const double denom =
            std::max({floor_, std::abs(analytic(i)), std::abs(numeric(i))});
        worst = std::max(worst, std::abs(analytic(i) - numeric(i)) / denom);
    }
    return worst;
}

LcTruth make_lc_truth(int n_ages, int n_years) {
    LcTruth t;
    t.a = VectorXd(n_ages);
    t.b = VectorXd(n_ages);
    t.kappa = VectorXd(n_years);
    for (int x = 0; x < n_ages; ++x) {
        t.a(x) = -5.5 + 0.05 * x;
        t.b(x) = 1.0 + 0.4 * std::sin(0.35 * x);
    }
    t.b /= t.b.sum();
    for (int y = 0; y < n_years; ++y)
        t.kappa(y) = -2.0 * (y - 0.5 * (n_years - 1)) + 0.3 * std::sin(1.1 * y);
    t.kappa.array() -= t.kappa.mean();
    return t;
}

MortalityDataset lc_synthetic_dataset(const LcTruth& truth, int age_min, int year_min,
                                      double exposure, std::uint64_t seed) {
    const int n_ages = static_cast<int>(truth.a.size());
    const int n_years = static_cast<int>(truth.kappa.size());
    MortalityDataset ds(age_min, age_min + n_ages - 1, year_min, year_min + n_years - 1);
    Rng rng(seed);
    for (Gender g : kGenders) {
        for (int x = 0; x < n_ages; ++x) {
            for (int t = 0; t < n_years; ++t) {
                const double m = std::exp(truth.a(x) + truth.b(x) * truth.kappa(t));
                std::poisson_distribution<long long> deaths(exposure * m);
                ds.set_cell(g, age_min + x, year_min + t,
                            static_cast<double>(deaths(rng)), exposure);
            }
        }
    }
    return ds;
}

double poisson_noise_floor(const SynthConfig& cfg, const MortalityDataset& ds) {
    long double total = 0.0;
    long long count = 0;
    for (Gender g : kGenders) {
        for (int age = ds.age_min(); age <= ds.age_max(); ++age) {
            for (int year = ds.year_min(); year <= ds.year_max(); ++year) {
                const double e = ds.exposure(g, age, year);
                if (e <= 0.0) continue;
                const double observed = ds.deaths(g, age, year) / e;
                total += std::abs(observed - synthetic_true_rate(cfg, g, age, year));
                ++count;
            }
        }
    }
    return count == 0 ? 0.0 : static_cast<double>(total / count);
}

double pearson_correlation(const VectorXd& u, const VectorXd& v) {
    const VectorXd du = u.array() - u.mean();
    const VectorXd dv = v.array() - v.mean();
    return du.dot(dv) / std::sqrt(du.squaredNorm() * dv.squaredNorm());
}

}  // namespace testsupport
