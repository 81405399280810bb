#include "mortcast/leecarter.hpp"

#include "mortcast/io.hpp"

#include <algorithm>
#include <cmath>

namespace mortcast {

namespace {

// Fit state on the (age, year) grid restricted to positive-exposure cells.
struct FitGrid {
    ArrayXXd D;
    ArrayXXd E;
    ArrayXXb use;  // E > 0
};

double grid_loglik(const FitGrid& g, const VectorXd& a, const VectorXd& b, const VectorXd& k) {
    double ll = 0.0;
    for (Eigen::Index x = 0; x < g.D.rows(); ++x)
        for (Eigen::Index t = 0; t < g.D.cols(); ++t) {
            if (!g.use(x, t)) continue;
            const double mu = a(x) + b(x) * k(t);
            ll += g.D(x, t) * mu - g.E(x, t) * std::exp(mu);
        }
    return ll;
}

// Applies `delta` scaled by progressively halved factors until the
// log-likelihood does not decrease; returns the accepted (possibly zero)
// step's likelihood. The three blocks are coordinate-separable, so a shared
// halving factor keeps each block's update monotone.
template <class Apply>
double damped_step(const FitGrid& g, VectorXd& a, VectorXd& b, VectorXd& k, const VectorXd& delta,
                   double ll_current, Apply apply) {
    double factor = 1.0;
    for (int half = 0; half < 60; ++half) {
        VectorXd a2 = a, b2 = b, k2 = k;
        apply(a2, b2, k2, (factor * delta).eval());
        const double ll2 = grid_loglik(g, a2, b2, k2);
        if (std::isfinite(ll2) && ll2 >= ll_current) {
            a = std::move(a2);
            b = std::move(b2);
            k = std::move(k2);
            return ll2;
        }
        factor *= 0.5;
    }
    return ll_current;  // no acceptable step; leave parameters unchanged
}

}  // namespace

double lc_loglik(const LeeCarterParams& p, const MortalityDataset& ds) {
    double ll = 0.0;
    for (int age = p.age_min; age <= p.age_max(); ++age)
        for (int year = p.year_min; year <= p.year_max(); ++year) {
            const double E = ds.exposure(p.gender, age, year);
            if (E <= 0.0) continue;
            const double mu = p.a(age - p.age_min) + p.b(age - p.age_min) * p.kappa(year - p.year_min);
            ll += ds.deaths(p.gender, age, year) * mu - E * std::exp(mu);
        }
    return ll;
}

LeeCarterParams fit_leecarter(const MortalityDataset& ds, Gender gender,
                              const LeeCarterOptions& opts, Warnings* warnings) {
    const Eigen::Index nx = ds.n_ages();
    const Eigen::Index nt = ds.n_years();

    FitGrid g;
    g.D = ds.deaths_grid(gender);
    g.E = ds.exposure_grid(gender);
    g.use = g.E > 0.0;
    const Eigen::Index excluded = (!g.use).count();
    if (excluded > 0)
        warn(warnings, "lee-carter (" + std::string(1, gender_code(gender)) + "): excluded " +
                           std::to_string(excluded) + " zero-exposure cells");
    if (g.use.count() == 0) throw ModelError("no positive-exposure cells to fit");
    for (Eigen::Index x = 0; x < nx; ++x)
        if (!g.use.row(x).any())
            throw ModelError("age " + std::to_string(ds.age_min() + x) +
                             " has no positive-exposure cells");
    for (Eigen::Index t = 0; t < nt; ++t)
        if (!g.use.col(t).any())
            throw ModelError("year " + std::to_string(ds.year_min() + t) +
                             " has no positive-exposure cells");

    // Start at the age-level solution: a = log of the pooled rate per age.
    VectorXd a(nx), b = VectorXd::Constant(nx, 1.0 / static_cast<double>(nx));
    VectorXd k = VectorXd::Zero(nt);
    for (Eigen::Index x = 0; x < nx; ++x) {
        const double D = (g.use.row(x)).select(g.D.row(x), 0.0).sum();
        const double E = (g.use.row(x)).select(g.E.row(x), 0.0).sum();
        a(x) = std::log(std::max(D, 0.5) / E);
    }

    LeeCarterParams p;
    p.gender = gender;
    p.age_min = ds.age_min();
    p.year_min = ds.year_min();

    double ll = grid_loglik(g, a, b, k);
    p.loglik_trace.push_back(ll);
    bool converged = false;
    for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
        // a block: per-age Newton, grad = sum_t (D - E e^mu), hess = -sum_t E e^mu.
        {
            VectorXd delta = VectorXd::Zero(nx);
            for (Eigen::Index x = 0; x < nx; ++x) {
                double grad = 0.0, curv = 0.0;
                for (Eigen::Index t = 0; t < nt; ++t) {
                    if (!g.use(x, t)) continue;
                    const double fitted = g.E(x, t) * std::exp(a(x) + b(x) * k(t));
                    grad += g.D(x, t) - fitted;
                    curv += fitted;
                }
                if (curv > 0.0) delta(x) = std::clamp(grad / curv, -5.0, 5.0);
            }
            ll = damped_step(g, a, b, k, delta, ll,
                             [](VectorXd& a2, VectorXd&, VectorXd&, const VectorXd& d) { a2 += d; });
        }
        // b block: grad = sum_t k (D - E e^mu), hess = -sum_t k^2 E e^mu.
        {
            VectorXd delta = VectorXd::Zero(nx);
            for (Eigen::Index x = 0; x < nx; ++x) {
                double grad = 0.0, curv = 0.0;
                for (Eigen::Index t = 0; t < nt; ++t) {
                    if (!g.use(x, t)) continue;
                    const double fitted = g.E(x, t) * std::exp(a(x) + b(x) * k(t));
                    grad += k(t) * (g.D(x, t) - fitted);
                    curv += k(t) * k(t) * fitted;
                }
                if (curv > 0.0) delta(x) = std::clamp(grad / curv, -5.0, 5.0);
            }
            ll = damped_step(g, a, b, k, delta, ll,
                             [](VectorXd&, VectorXd& b2, VectorXd&, const VectorXd& d) { b2 += d; });
        }
        // kappa block: grad = sum_x b (D - E e^mu), hess = -sum_x b^2 E e^mu.
        {
            VectorXd delta = VectorXd::Zero(nt);
            for (Eigen::Index t = 0; t < nt; ++t) {
                double grad = 0.0, curv = 0.0;
                for (Eigen::Index x = 0; x < nx; ++x) {
                    if (!g.use(x, t)) continue;
                    const double fitted = g.E(x, t) * std::exp(a(x) + b(x) * k(t));
                    grad += b(x) * (g.D(x, t) - fitted);
                    curv += b(x) * b(x) * fitted;
                }
                if (curv > 0.0) delta(t) = std::clamp(grad / curv, -5.0, 5.0);
            }
            ll = damped_step(g, a, b, k, delta, ll,
                             [](VectorXd&, VectorXd&, VectorXd& k2, const VectorXd& d) { k2 += d; });
        }

        const double prev = p.loglik_trace.back();
        p.loglik_trace.push_back(ll);
        if (ll - prev < opts.tol) {
            converged = true;
            break;
        }
    }
    if (!converged)
        throw ModelError("lee-carter fit did not converge within " +
                         std::to_string(opts.max_sweeps) + " sweeps (last improvement " +
                         format_double(p.loglik_trace.back() -
                                       p.loglik_trace[p.loglik_trace.size() - 2]) +
                         ")");

    // Normalize to sum(b) = 1, sum(kappa) = 0; mu is unchanged.
    const double sum_b = b.sum();
    if (sum_b == 0.0) throw ModelError("degenerate fit: sum of b is zero");
    const double k_bar = k.mean();
    a += b * k_bar;
    k = (k.array() - k_bar).matrix() * sum_b;
    b /= sum_b;

    p.a = std::move(a);
    p.b = std::move(b);
    p.kappa = std::move(k);
    return p;
}

void estimate_drift(LeeCarterParams& p) {
    const Eigen::Index T = p.kappa.size();
    if (T < 2) throw ModelError("drift needs at least two fitted years");
    p.drift = (p.kappa(T - 1) - p.kappa(0)) / static_cast<double>(T - 1);
    if (T > 2) {
        double ss = 0.0;
        for (Eigen::Index t = 1; t < T; ++t) {
            const double resid = (p.kappa(t) - p.kappa(t - 1)) - p.drift;
            ss += resid * resid;
        }
        p.sigma_kappa = std::sqrt(ss / static_cast<double>(T - 2));
    } else {
        p.sigma_kappa = 0.0;
    }
    p.drift_estimated = true;
}

VectorXd forecast_kappa(const LeeCarterParams& p, int horizon) {
    if (horizon < 1) throw ModelError("forecast horizon must be positive");
    if (!p.drift_estimated) throw ModelError("drift has not been estimated");
    VectorXd out(horizon);
    const double kT = p.kappa(p.kappa.size() - 1);
    for (int h = 1; h <= horizon; ++h) out(h - 1) = kT + h * p.drift;
    return out;
}

MatrixXd simulate_kappa_paths(const LeeCarterParams& p, int horizon, int n_paths,
                              std::uint64_t seed) {
    if (horizon < 1) throw ModelError("forecast horizon must be positive");
    if (n_paths < 1) throw ModelError("need at least one path");
    if (!p.drift_estimated) throw ModelError("drift has not been estimated");
    MatrixXd paths(n_paths, horizon);
    Rng rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    const double kT = p.kappa(p.kappa.size() - 1);
    for (int i = 0; i < n_paths; ++i) {
        double k = kT;
        for (int h = 0; h < horizon; ++h) {
            k += p.drift + p.sigma_kappa * noise(rng);
            paths(i, h) = k;
        }
    }
    return paths;
}

double lc_kappa_at(const LeeCarterParams& p, int year) {
    if (year < p.year_min)
        throw ModelError("year " + std::to_string(year) + " precedes the fitted range");
    if (year <= p.year_max()) return p.kappa(year - p.year_min);
    if (!p.drift_estimated)
        throw ModelError("year " + std::to_string(year) +
                         " is beyond the fitted range and drift is not estimated");
    const int h = year - p.year_max();
    return p.kappa(p.kappa.size() - 1) + h * p.drift;
}

double lc_rate(const LeeCarterParams& p, int age, int year) {
    if (age < p.age_min || age > p.age_max())
        throw ModelError("age " + std::to_string(age) + " outside the fitted range");
    const Eigen::Index x = age - p.age_min;
    return std::exp(p.a(x) + p.b(x) * lc_kappa_at(p, year));
}

MatrixXd lc_predict_matrix(const LeeCarterParams& p, const std::vector<int>& years) {
    MatrixXd out(p.a.size(), static_cast<Eigen::Index>(years.size()));
    for (std::size_t j = 0; j < years.size(); ++j) {
        const double k = lc_kappa_at(p, years[j]);
        out.col(static_cast<Eigen::Index>(j)) = (p.a.array() + p.b.array() * k).exp().matrix();
    }
    return out;
}

void save_leecarter_params(const LeeCarterParams& p, const std::filesystem::path& dir,
                           const std::string& prefix) {
    std::vector<std::vector<std::string>> ab;
    for (Eigen::Index x = 0; x < p.a.size(); ++x)
        ab.push_back({std::to_string(p.age_min + static_cast<int>(x)), format_double(p.a(x)),
                      format_double(p.b(x))});
    write_delimited(dir / (prefix + "_ab.csv"), {"age", "a", "b"}, ab);

    std::vector<std::vector<std::string>> kap;
    for (Eigen::Index t = 0; t < p.kappa.size(); ++t)
        kap.push_back(
            {std::to_string(p.year_min + static_cast<int>(t)), format_double(p.kappa(t))});
    write_delimited(dir / (prefix + "_kappa.csv"), {"year", "kappa"}, kap);

    write_delimited(dir / (prefix + "_drift.csv"), {"drift", "sigma_kappa"},
                    {{format_double(p.drift), format_double(p.sigma_kappa)}});
}

}  // namespace mortcast
