#pragma once

#include "mortcast/types.hpp"

#include <array>
#include <filesystem>
#include <optional>

namespace mortcast {

// Death counts and person-year exposures on a complete (gender, age, year)
// grid. Cells absent from the input are carried with D = 0, E = 0; a cell
// with zero exposure has no defined rate and is flagged missing downstream.
class MortalityDataset {
public:
    MortalityDataset(int age_min, int age_max, int year_min, int year_max);

    int age_min() const { return age_min_; }
    int age_max() const { return age_min_ + static_cast<int>(deaths_[0].rows()) - 1; }
    int year_min() const { return year_min_; }
    int year_max() const { return year_min_ + static_cast<int>(deaths_[0].cols()) - 1; }
    Eigen::Index n_ages() const { return deaths_[0].rows(); }
    Eigen::Index n_years() const { return deaths_[0].cols(); }

    double deaths(Gender g, int age, int year) const {
        return deaths_[gender_index(g)](age - age_min_, year - year_min_);
    }
    double exposure(Gender g, int age, int year) const {
        return exposure_[gender_index(g)](age - age_min_, year - year_min_);
    }
    void set_cell(Gender g, int age, int year, double deaths, double exposure);

    bool in_range(int age, int year) const {
        return age >= age_min() && age <= age_max() && year >= year_min() && year <= year_max();
    }

    const ArrayXXd& deaths_grid(Gender g) const { return deaths_[gender_index(g)]; }
    const ArrayXXd& exposure_grid(Gender g) const { return exposure_[gender_index(g)]; }

    MortalityDataset restrict_years(int year_lo, int year_hi) const;

private:
    int age_min_;
    int year_min_;
    std::array<ArrayXXd, kNumGenders> deaths_;    // (age, year)
    std::array<ArrayXXd, kNumGenders> exposure_;  // (age, year)
};

// Central mortality rates m = D/E on the dataset grid. Cells with zero
// exposure are flagged missing and hold no rate.
class RateSurface {
public:
    RateSurface(int age_min, int age_max, int year_min, int year_max);

    int age_min() const { return age_min_; }
    int age_max() const { return age_min_ + static_cast<int>(m_[0].rows()) - 1; }
    int year_min() const { return year_min_; }
    int year_max() const { return year_min_ + static_cast<int>(m_[0].cols()) - 1; }
    Eigen::Index n_ages() const { return m_[0].rows(); }
    Eigen::Index n_years() const { return m_[0].cols(); }

    bool in_range(int age, int year) const {
        return age >= age_min() && age <= age_max() && year >= year_min() && year <= year_max();
    }
    bool missing(Gender g, int age, int year) const {
        return missing_[gender_index(g)](age - age_min_, year - year_min_);
    }
    double rate(Gender g, int age, int year) const;
    void set_rate(Gender g, int age, int year, double m);

    const ArrayXXd& rate_grid(Gender g) const { return m_[gender_index(g)]; }
    const ArrayXXb& missing_grid(Gender g) const { return missing_[gender_index(g)]; }

    RateSurface restrict_years(int year_lo, int year_hi) const;

    // Appends one all-missing year column per gender (recursive forecasting).
    void append_year();

    Eigen::Index missing_count() const;

private:
    int age_min_;
    int year_min_;
    std::array<ArrayXXd, kNumGenders> m_;
    std::array<ArrayXXb, kNumGenders> missing_;
};

RateSurface compute_rates(const MortalityDataset& ds);

// Column-name mapping for delimited dataset files.
struct ColumnSchema {
    char delimiter = ',';
    std::string gender = "gender";
    std::string age = "age";
    std::string year = "year";
    std::string deaths = "deaths";
    std::string exposure = "exposure";
};

MortalityDataset load_dataset(const std::filesystem::path& path,
                              const ColumnSchema& schema = {},
                              Warnings* warnings = nullptr);

void save_dataset(const MortalityDataset& ds, const std::filesystem::path& path,
                  char delimiter = ',');

void save_surface(const RateSurface& rs, const std::filesystem::path& path,
                  char delimiter = ',');

RateSurface load_surface(const std::filesystem::path& path, char delimiter = ',');

// Gompertz log-linear truth with calendar improvement; stands in for fund
// data. True log-rate: alpha + beta*age - drift*(year - year_min), plus
// female_offset for women. Deaths are Poisson draws with mean E*m.
struct SynthConfig {
    int age_min = 30;
    int age_max = 95;
    int year_min = 2012;
    int year_max = 2021;
    double alpha = -9.8;
    double beta = 0.085;
    double drift = 0.012;
    double female_offset = -0.35;
    double exposure_level = 50000.0;
    // Optional per-age exposure multipliers (size n_ages); flat when empty.
    VectorXd exposure_profile_female;
    VectorXd exposure_profile_male;
    std::uint64_t seed = 12345;

    void validate() const;
};

double synthetic_true_rate(const SynthConfig& cfg, Gender g, int age, int year);

double synthetic_exposure(const SynthConfig& cfg, Gender g, int age);

MortalityDataset generate_synthetic(const SynthConfig& cfg);

}  // namespace mortcast
