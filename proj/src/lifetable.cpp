#include "mortcast/lifetable.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

#include "mortcast/io.hpp"

namespace mortcast {

double rate_to_q(double m) {
    if (!std::isfinite(m) || m < 0.0)
        throw DataError("central rate must be finite and nonnegative, got " + format_double(m));
    return 1.0 - std::exp(-m);
}

VectorXd rates_to_q(const VectorXd& m) {
    VectorXd q(m.size());
    for (Eigen::Index i = 0; i < m.size(); ++i) q(i) = rate_to_q(m(i));
    return q;
}

void LifeTableSlice::validate() const {
    if (q.size() == 0) throw DataError("life table slice is empty");
    for (Eigen::Index i = 0; i < q.size(); ++i) {
        if (!std::isfinite(q(i)) || q(i) < 0.0 || q(i) > 1.0)
            throw DataError("q outside [0,1] at age " + std::to_string(age_min + static_cast<int>(i)));
    }
    if (q(q.size() - 1) != 1.0)
        throw DataError("life table does not close: q at terminal age " +
                        std::to_string(omega()) + " is " + format_double(q(q.size() - 1)));
}

namespace {

Eigen::Index slice_offset(const LifeTableSlice& t, int x) {
    if (x < t.age_min || x > t.omega())
        throw DataError("age " + std::to_string(x) + " outside life table [" +
                        std::to_string(t.age_min) + ", " + std::to_string(t.omega()) + "]");
    return x - t.age_min;
}

// Sum over k >= 1 of v^k * kp_x: the annuity in arrears, and at v = 1 the
// curtate expectation. Shared so the r = 0 identity a = e - 1/2 is exact.
double survival_sum(const LifeTableSlice& table, Eigen::Index j0, double v) {
    double sum = 0.0;
    double surv = 1.0;
    double disc = 1.0;
    for (Eigen::Index j = j0; j < table.q.size(); ++j) {
        surv *= 1.0 - table.q(j);
        disc *= v;
        sum += disc * surv;
    }
    return sum;
}

}  // namespace

double life_expectancy(const LifeTableSlice& table, int x) {
    table.validate();
    return 0.5 + survival_sum(table, slice_offset(table, x), 1.0);
}

double annuity_value(const LifeTableSlice& table, int x, const AnnuityConfig& cfg) {
    table.validate();
    if (!std::isfinite(cfg.interest_rate) || cfg.interest_rate <= -1.0)
        throw DataError("interest rate must exceed -1, got " + format_double(cfg.interest_rate));
    const double v = 1.0 / (1.0 + cfg.interest_rate);
    return survival_sum(table, slice_offset(table, x), v);
}

namespace {

constexpr double kLogFloor = 1e-15;

std::string cell_name(int age, int year) {
    return "(age " + std::to_string(age) + ", year " + std::to_string(year) + ")";
}

// Log-linear continuation of ln m over the surface's last (up to) five
// observed ages in one calendar year.
struct ExtrapLine {
    double intercept = 0.0;
    double slope = 0.0;
};

ExtrapLine fit_extrap_line(const RateSurface& rs, Gender g, int year) {
    const int lo = std::max(rs.age_min(), rs.age_max() - 4);
    std::vector<double> xs, ys;
    for (int age = lo; age <= rs.age_max(); ++age) {
        if (rs.missing(g, age, year)) continue;
        xs.push_back(static_cast<double>(age));
        ys.push_back(std::log(std::max(rs.rate(g, age, year), kLogFloor)));
    }
    if (xs.empty())
        throw DataError("cannot extrapolate rates: no observed top ages in year " +
                        std::to_string(year));
    ExtrapLine line;
    if (xs.size() == 1) {
        line.intercept = ys[0];
        return line;
    }
    double xbar = 0.0, ybar = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        xbar += xs[i];
        ybar += ys[i];
    }
    xbar /= static_cast<double>(xs.size());
    ybar /= static_cast<double>(xs.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - xbar) * (ys[i] - ybar);
        sxx += (xs[i] - xbar) * (xs[i] - xbar);
    }
    line.slope = sxy / sxx;
    line.intercept = ybar - line.slope * xbar;
    return line;
}

// Central rate at (age, year), extrapolating past the surface's top age.
double cell_rate(const RateSurface& rs, Gender g, int age, int year) {
    if (year < rs.year_min() || year > rs.year_max())
        throw DataError("rate surface does not cover " + cell_name(age, year));
    if (age <= rs.age_max()) {
        if (age < rs.age_min() || rs.missing(g, age, year))
            throw DataError("missing rate at " + cell_name(age, year));
        return rs.rate(g, age, year);
    }
    const ExtrapLine line = fit_extrap_line(rs, g, year);
    return std::exp(line.intercept + line.slope * static_cast<double>(age));
}

LifeTableSlice build_slice(const RateSurface& rs, Gender g, int age0, int year0,
                           int omega, bool cohort) {
    if (omega < age0)
        throw DataError("terminal age " + std::to_string(omega) +
                        " precedes starting age " + std::to_string(age0));
    LifeTableSlice t;
    t.age_min = age0;
    t.q = VectorXd::Zero(omega - age0 + 1);
    for (int age = age0; age < omega; ++age) {
        const int year = cohort ? year0 + (age - age0) : year0;
        t.q(age - age0) = rate_to_q(cell_rate(rs, g, age, year));
    }
    t.q(t.q.size() - 1) = 1.0;
    return t;
}

}  // namespace

LifeTableSlice period_slice(const RateSurface& rs, Gender g, int age0, int year,
                            int omega) {
    return build_slice(rs, g, age0, year, omega, false);
}

LifeTableSlice cohort_slice(const RateSurface& rs, Gender g, int age0, int year,
                            int omega) {
    return build_slice(rs, g, age0, year, omega, true);
}

ProvisionResult aggregate_provision(const MortalityDataset& exposures,
                                    const RateSurface& rs, int year,
                                    const AnnuityConfig& cfg, int omega) {
    if (year < exposures.year_min() || year > exposures.year_max())
        throw DataError("valuation year " + std::to_string(year) +
                        " outside exposure data");
    ProvisionResult out;
    for (Gender g : kGenders) {
        double sum = 0.0;
        for (int age = exposures.age_min(); age <= exposures.age_max(); ++age) {
            const double e = exposures.exposure(g, age, year);
            if (e <= 0.0) continue;
            const LifeTableSlice t = cohort_slice(rs, g, age, year, omega);
            sum += e * annuity_value(t, age, cfg);
        }
        out.by_gender[gender_index(g)] = sum;
        out.total += sum;
    }
    return out;
}

CashFlowProjection project_exposure(const MortalityDataset& base,
                                    const RateSurface& rs, int base_year,
                                    int horizon) {
    if (horizon < 0) throw DataError("projection horizon must be nonnegative");
    if (base_year < base.year_min() || base_year > base.year_max())
        throw DataError("base year " + std::to_string(base_year) +
                        " outside exposure data");
    CashFlowProjection proj;
    proj.base_year = base_year;
    proj.horizon = horizon;
    proj.age_min = base.age_min();
    const int n_ages = base.age_max() - base.age_min() + 1;
    for (Gender g : kGenders) {
        MatrixXd& grid = proj.exposure[gender_index(g)];
        grid = MatrixXd::Zero(n_ages, horizon + 1);
        for (int age = base.age_min(); age <= base.age_max(); ++age) {
            const double e = base.exposure(g, age, base_year);
            if (e < 0.0)
                throw DataError("negative base exposure at " + cell_name(age, base_year));
            grid(age - base.age_min(), 0) = e;
        }
        for (int k = 0; k < horizon; ++k) {
            for (int row = 0; row + 1 < n_ages; ++row) {
                const double e = grid(row, k);
                if (e == 0.0) continue;
                const int age = base.age_min() + row;
                const double q = rate_to_q(cell_rate(rs, g, age, base_year + k));
                grid(row + 1, k + 1) = e * (1.0 - q);
            }
        }
    }
    proj.annual_total = VectorXd::Zero(horizon + 1);
    for (int k = 0; k <= horizon; ++k)
        for (Gender g : kGenders)
            proj.annual_total(k) += proj.exposure[gender_index(g)].col(k).sum();
    return proj;
}

ProjectionComparison compare_projection(const CashFlowProjection& proj,
                                        const MortalityDataset& observed,
                                        int year, int band_width) {
    if (band_width < 1) throw DataError("band width must be positive");
    const int col = year - proj.base_year;
    if (col < 0 || col > proj.horizon)
        throw DataError("year " + std::to_string(year) + " outside projection");
    if (year < observed.year_min() || year > observed.year_max())
        throw DataError("year " + std::to_string(year) + " outside observed data");
    const int proj_age_max = proj.age_min +
                             static_cast<int>(proj.exposure[0].rows()) - 1;
    const int lo = std::max(proj.age_min, observed.age_min());
    const int hi = std::min(proj_age_max, observed.age_max());
    if (lo > hi) throw DataError("projection and observed data share no ages");

    ProjectionComparison cmp;
    cmp.year = year;
    for (int band_lo = lo; band_lo <= hi; band_lo += band_width) {
        BandComparison band;
        band.age_lo = band_lo;
        band.age_hi = std::min(band_lo + band_width - 1, hi);
        for (int age = band.age_lo; age <= band.age_hi; ++age) {
            for (Gender g : kGenders) {
                band.predicted += proj.exposure[gender_index(g)](age - proj.age_min, col);
                band.observed += observed.exposure(g, age, year);
            }
        }
        if (band.observed > 0.0)
            band.rel_diff = (band.predicted - band.observed) / band.observed;
        cmp.predicted_total += band.predicted;
        cmp.observed_total += band.observed;
        cmp.bands.push_back(band);
    }
    if (cmp.observed_total <= 0.0)
        throw DataError("observed exposure total is zero in year " + std::to_string(year));
    cmp.total_rel_diff = (cmp.predicted_total - cmp.observed_total) / cmp.observed_total;
    return cmp;
}

void save_life_table(const LifeTableSlice& table, const std::string& path, char sep) {
    table.validate();
    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index i = 0; i < table.q.size(); ++i)
        rows.push_back({std::to_string(table.age_min + static_cast<int>(i)),
                        format_double(table.q(i))});
    write_delimited(path, {"age", "q"}, rows, sep);
}

LifeTableSlice load_life_table(const std::string& path, char sep) {
    const TextTable tt = read_delimited(path, sep);
    const std::size_t age_col = tt.column("age");
    const std::size_t q_col = tt.column("q");
    if (tt.rows.empty()) throw DataError("life table file has no rows: " + path);
    LifeTableSlice t;
    t.q = VectorXd::Zero(static_cast<Eigen::Index>(tt.rows.size()));
    for (std::size_t i = 0; i < tt.rows.size(); ++i) {
        const TextRow& row = tt.rows[i];
        const long long age = parse_integer(row.fields[age_col], row.line, "age");
        if (i == 0) {
            t.age_min = static_cast<int>(age);
        } else if (age != t.age_min + static_cast<long long>(i)) {
            throw DataError("life table ages must be consecutive, got " +
                            std::to_string(age) + " at line " + std::to_string(row.line));
        }
        t.q(static_cast<Eigen::Index>(i)) = parse_double(row.fields[q_col], row.line, "q");
    }
    t.validate();
    return t;
}

}  // namespace mortcast
