#pragma once

#include "mortcast/dataset.hpp"

namespace mortcast {

// Poisson Lee-Carter: D_{x,t} ~ Poi(E_{x,t} * exp(a_x + b_x * k_t)) per
// gender, with identifiability constraints sum(b) = 1 and sum(k) = 0; kappa
// extrapolates as a random walk with drift d.
struct LeeCarterParams {
    Gender gender = Gender::Female;
    int age_min = 0;
    int year_min = 0;
    VectorXd a;      // log-rate level per age
    VectorXd b;      // age sensitivity per age
    VectorXd kappa;  // period index per fitted year
    double drift = 0.0;
    double sigma_kappa = 0.0;
    bool drift_estimated = false;
    std::vector<double> loglik_trace;  // log-likelihood after each sweep

    int age_max() const { return age_min + static_cast<int>(a.size()) - 1; }
    int year_max() const { return year_min + static_cast<int>(kappa.size()) - 1; }
};

struct LeeCarterOptions {
    double tol = 1e-10;
    int max_sweeps = 500;
};

// Maximizes the Poisson log-likelihood sum(D*mu - E*exp(mu)) by alternating
// damped block Newton updates of a, b, kappa (steps halved until the
// likelihood does not decrease), then normalizes so the constraints hold
// without changing any mu. Zero-exposure cells are excluded with a warning.
LeeCarterParams fit_leecarter(const MortalityDataset& ds, Gender gender,
                              const LeeCarterOptions& opts = {}, Warnings* warnings = nullptr);

// Poisson log-likelihood (dropping the log D! constant) of params against the
// dataset, over positive-exposure cells.
double lc_loglik(const LeeCarterParams& p, const MortalityDataset& ds);

// d = (k_T - k_1)/(T - 1); sigma_kappa = sd of first differences around d
// (zero when fewer than 3 years). Errors on a single fitted year.
void estimate_drift(LeeCarterParams& p);

// Central path k_{T+h} = k_T + h*d for h = 1..horizon.
VectorXd forecast_kappa(const LeeCarterParams& p, int horizon);

// Random-walk simulations around the central path; one row per path.
MatrixXd simulate_kappa_paths(const LeeCarterParams& p, int horizon, int n_paths,
                              std::uint64_t seed);

// kappa for a fitted year, or the drift extrapolation for later years.
double lc_kappa_at(const LeeCarterParams& p, int year);

double lc_rate(const LeeCarterParams& p, int age, int year);

// Rates for the requested years at every fitted age (ages x years).
MatrixXd lc_predict_matrix(const LeeCarterParams& p, const std::vector<int>& years);

// Writes <prefix>_ab.csv (age, a, b), <prefix>_kappa.csv (year, kappa) and
// <prefix>_drift.csv (drift, sigma_kappa) under dir.
void save_leecarter_params(const LeeCarterParams& p, const std::filesystem::path& dir,
                           const std::string& prefix);

}  // namespace mortcast
