// Independent reference implementations used to check the library. These are
// deliberately naive (two-pass statistics, direct perturbation, closed forms)
// so they share no code path with the implementations under test.
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "mortcast/dataset.hpp"
#include "mortcast/tree.hpp"
#include "mortcast/types.hpp"

namespace testsupport {

// CART reference: at each node, enumerate every (feature, midpoint) candidate
// and score it with a naive two-pass SSE; same tie-breaking contract as the
// library (lowest feature, then lowest threshold, first strict improvement).
struct OracleTree {
    std::vector<double> predictions;  // per training row
    double train_sse = 0.0;
};

OracleTree oracle_cart(const mortcast::MatrixXd& X, const mortcast::VectorXd& y,
                       const mortcast::TreeOptions& opts);

// Central finite differences of a scalar function of the parameter vector.
mortcast::VectorXd finite_diff_gradient(const std::function<double(const mortcast::VectorXd&)>& f,
                                        const mortcast::VectorXd& theta, double step = 1e-5);

// max_i |a_i - n_i| / max(floor, |a_i|, |n_i|)
double max_rel_error(const mortcast::VectorXd& analytic, const mortcast::VectorXd& numeric,
                     double floor_ = 1e-4);

// Known constrained Lee-Carter truth (sum b = 1, sum kappa = 0) with a smooth
// age profile and a trending period index.
struct LcTruth {
    mortcast::VectorXd a;
    mortcast::VectorXd b;
    mortcast::VectorXd kappa;
};

LcTruth make_lc_truth(int n_ages, int n_years);

// Dataset with Poisson deaths around E * exp(a + b*kappa); both genders use
// the same truth with independent draws.
mortcast::MortalityDataset lc_synthetic_dataset(const LcTruth& truth, int age_min, int year_min,
                                                double exposure, std::uint64_t seed);

// Mean |m_true - D/E| over positive-exposure cells: the irreducible noise of
// the synthetic generator, used as an error floor.
double poisson_noise_floor(const mortcast::SynthConfig& cfg, const mortcast::MortalityDataset& ds);

double pearson_correlation(const mortcast::VectorXd& u, const mortcast::VectorXd& v);

}  // namespace testsupport
