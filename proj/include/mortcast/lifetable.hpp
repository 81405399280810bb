#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mortcast/dataset.hpp"
#include "mortcast/types.hpp"

namespace mortcast {

// Converts a central death rate into a one-year death probability under
// a constant force of mortality within the year: q = 1 - exp(-m).
double rate_to_q(double m);

// Element-wise rate_to_q over a vector of central rates. Throws DataError
// on negative or non-finite input.
VectorXd rates_to_q(const VectorXd& m);

// Death probabilities q_x for consecutive integer ages starting at age_min.
// The final entry closes the table: q at the last age is forced to 1.
struct LifeTableSlice {
    int age_min = 0;
    VectorXd q;

    int omega() const { return age_min + static_cast<int>(q.size()) - 1; }
    // Throws DataError unless all q are in [0,1] and the last equals 1.
    void validate() const;
};

// Curtate life expectancy plus the half-year convention:
// e_x = 1/2 + sum_{k>=1} kp_x. Throws DataError when x is outside the slice.
double life_expectancy(const LifeTableSlice& table, int x);

struct AnnuityConfig {
    double interest_rate = 0.05;
};

// Expected present value of a whole-life annuity paying 1 at each year-end
// survived: a_x = sum_{k>=1} v^k * kp_x with v = 1/(1+r). At r = 0 this
// equals e_x - 1/2.
double annuity_value(const LifeTableSlice& table, int x,
                     const AnnuityConfig& cfg);

// Builds a life table for one gender from the rates observed in a single
// calendar year (a period table). Rates above the surface's top age are
// extrapolated log-linearly from the last five observed ages up to omega.
// Throws DataError when a required cell is missing or omega < top age + 1.
LifeTableSlice period_slice(const RateSurface& rs, Gender g, int age0,
                            int year, int omega = 100);

// Builds a cohort life table following the diagonal (age0, year),
// (age0+1, year+1), ... Ages beyond the surface's top age use the same
// per-year extrapolation as period_slice; a diagonal year beyond the
// surface is an error naming the missing (age, year) cell.
LifeTableSlice cohort_slice(const RateSurface& rs, Gender g, int age0,
                            int year, int omega = 100);

struct ProvisionResult {
    double total = 0.0;
    // Indexed by gender_index.
    std::array<double, kNumGenders> by_gender{{0.0, 0.0}};
};

// Aggregate annuity provision for everyone alive in `year`:
// sum over genders and ages of E_{x,year} * a_x, where a_x is valued on the
// cohort table starting at (x, year). Exposures come from `exposures`
// restricted to `year`; rates (and hence q) come from `rs`.
ProvisionResult aggregate_provision(const MortalityDataset& exposures,
                                    const RateSurface& rs, int year,
                                    const AnnuityConfig& cfg, int omega = 100);

// Closed-group population projection: starting from observed exposures in
// base_year, E_{x+1,t+1} = E_{x,t} * (1 - q_{x,t}) with q from `rs`.
// Nobody enters; the top age simply exits the tracked range.
struct CashFlowProjection {
    int base_year = 0;
    int horizon = 0;
    int age_min = 0;
    // One matrix per gender, (n_ages) x (horizon + 1); column 0 holds the
    // observed base-year exposures.
    std::array<MatrixXd, kNumGenders> exposure;
    // Total projected exposure per column, summed over genders and ages.
    VectorXd annual_total;
};

CashFlowProjection project_exposure(const MortalityDataset& base,
                                    const RateSurface& rs, int base_year,
                                    int horizon);

// Comparison of a projected year against observed exposures, aggregated
// into fixed-width age bands. A band with zero observed exposure has no
// defined relative difference.
struct BandComparison {
    int age_lo = 0;
    int age_hi = 0;
    double predicted = 0.0;
    double observed = 0.0;
    std::optional<double> rel_diff;  // (predicted - observed) / observed
};

struct ProjectionComparison {
    int year = 0;
    std::vector<BandComparison> bands;
    double predicted_total = 0.0;
    double observed_total = 0.0;
    double total_rel_diff = 0.0;
};

ProjectionComparison compare_projection(const CashFlowProjection& proj,
                                        const MortalityDataset& observed,
                                        int year, int band_width = 5);

// Plain-text persistence for a life table slice: header "age<sep>q",
// one row per age.
void save_life_table(const LifeTableSlice& table, const std::string& path,
                     char sep = ',');
LifeTableSlice load_life_table(const std::string& path, char sep = ',');

}  // namespace mortcast
