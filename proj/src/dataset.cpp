#include "mortcast/dataset.hpp"

#include "mortcast/io.hpp"

#include <cmath>
#include <limits>
#include <set>

namespace mortcast {

MortalityDataset::MortalityDataset(int age_min, int age_max, int year_min, int year_max)
    : age_min_(age_min), year_min_(year_min) {
    if (age_max < age_min || year_max < year_min)
        throw DataError("empty age or year range");
    const Eigen::Index rows = age_max - age_min + 1;
    const Eigen::Index cols = year_max - year_min + 1;
    for (int g = 0; g < kNumGenders; ++g) {
        deaths_[g] = ArrayXXd::Zero(rows, cols);
        exposure_[g] = ArrayXXd::Zero(rows, cols);
    }
}

void MortalityDataset::set_cell(Gender g, int age, int year, double deaths, double exposure) {
    if (!in_range(age, year)) throw DataError("cell outside declared ranges");
    if (deaths < 0.0 || exposure < 0.0) throw DataError("negative deaths or exposure");
    deaths_[gender_index(g)](age - age_min_, year - year_min_) = deaths;
    exposure_[gender_index(g)](age - age_min_, year - year_min_) = exposure;
}

MortalityDataset MortalityDataset::restrict_years(int year_lo, int year_hi) const {
    if (year_lo < year_min() || year_hi > year_max() || year_lo > year_hi)
        throw DataError("restrict_years outside dataset years");
    MortalityDataset out(age_min(), age_max(), year_lo, year_hi);
    const Eigen::Index c0 = year_lo - year_min_;
    const Eigen::Index nc = year_hi - year_lo + 1;
    for (int g = 0; g < kNumGenders; ++g) {
        out.deaths_[g] = deaths_[g].middleCols(c0, nc);
        out.exposure_[g] = exposure_[g].middleCols(c0, nc);
    }
    return out;
}

RateSurface::RateSurface(int age_min, int age_max, int year_min, int year_max)
    : age_min_(age_min), year_min_(year_min) {
    if (age_max < age_min || year_max < year_min)
        throw DataError("empty age or year range");
    const Eigen::Index rows = age_max - age_min + 1;
    const Eigen::Index cols = year_max - year_min + 1;
    for (int g = 0; g < kNumGenders; ++g) {
        m_[g] = ArrayXXd::Zero(rows, cols);
        missing_[g] = ArrayXXb::Constant(rows, cols, true);
    }
}

double RateSurface::rate(Gender g, int age, int year) const {
    if (missing(g, age, year))
        throw DataError("rate requested for missing cell (" + std::string(1, gender_code(g)) +
                        ", " + std::to_string(age) + ", " + std::to_string(year) + ")");
    return m_[gender_index(g)](age - age_min_, year - year_min_);
}

void RateSurface::set_rate(Gender g, int age, int year, double m) {
    if (!in_range(age, year)) throw DataError("set_rate outside surface");
    if (!(m >= 0.0)) throw DataError("negative or non-finite rate");
    m_[gender_index(g)](age - age_min_, year - year_min_) = m;
    missing_[gender_index(g)](age - age_min_, year - year_min_) = false;
}

RateSurface RateSurface::restrict_years(int year_lo, int year_hi) const {
    if (year_lo < year_min() || year_hi > year_max() || year_lo > year_hi)
        throw DataError("restrict_years outside surface years");
    RateSurface out(age_min(), age_max(), year_lo, year_hi);
    const Eigen::Index c0 = year_lo - year_min_;
    const Eigen::Index nc = year_hi - year_lo + 1;
    for (int g = 0; g < kNumGenders; ++g) {
        out.m_[g] = m_[g].middleCols(c0, nc);
        out.missing_[g] = missing_[g].middleCols(c0, nc);
    }
    return out;
}

void RateSurface::append_year() {
    for (int g = 0; g < kNumGenders; ++g) {
        const Eigen::Index rows = m_[g].rows();
        const Eigen::Index cols = m_[g].cols();
        m_[g].conservativeResize(rows, cols + 1);
        m_[g].col(cols).setZero();
        missing_[g].conservativeResize(rows, cols + 1);
        missing_[g].col(cols).setConstant(true);
    }
}

Eigen::Index RateSurface::missing_count() const {
    Eigen::Index n = 0;
    for (int g = 0; g < kNumGenders; ++g) n += missing_[g].count();
    return n;
}

RateSurface compute_rates(const MortalityDataset& ds) {
    RateSurface rs(ds.age_min(), ds.age_max(), ds.year_min(), ds.year_max());
    for (Gender g : kGenders) {
        for (int age = ds.age_min(); age <= ds.age_max(); ++age) {
            for (int year = ds.year_min(); year <= ds.year_max(); ++year) {
                const double e = ds.exposure(g, age, year);
                if (e > 0.0) rs.set_rate(g, age, year, ds.deaths(g, age, year) / e);
            }
        }
    }
    return rs;
}

MortalityDataset load_dataset(const std::filesystem::path& path, const ColumnSchema& schema,
                              Warnings* warnings) {
    TextTable table = read_delimited(path, schema.delimiter);
    const std::size_t c_gender = table.column(schema.gender);
    const std::size_t c_age = table.column(schema.age);
    const std::size_t c_year = table.column(schema.year);
    const std::size_t c_deaths = table.column(schema.deaths);
    const std::size_t c_exposure = table.column(schema.exposure);
    const std::size_t width = table.header.size();

    struct Parsed {
        std::size_t line;
        CellKey key;
        double deaths;
        double exposure;
    };
    std::vector<Parsed> parsed;
    parsed.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        if (row.fields.size() != width)
            throw DataError("line " + std::to_string(row.line) + ": expected " +
                            std::to_string(width) + " fields, got " +
                            std::to_string(row.fields.size()));
        Parsed p;
        p.line = row.line;
        p.key.gender = gender_from_code(row.fields[c_gender]);
        p.key.age = static_cast<int>(parse_integer(row.fields[c_age], row.line, "age"));
        p.key.year = static_cast<int>(parse_integer(row.fields[c_year], row.line, "year"));
        p.deaths = parse_double(row.fields[c_deaths], row.line, "deaths");
        p.exposure = parse_double(row.fields[c_exposure], row.line, "exposure");
        if (p.deaths < 0.0)
            throw DataError("line " + std::to_string(p.line) + ": negative deaths");
        if (p.exposure < 0.0)
            throw DataError("line " + std::to_string(p.line) + ": negative exposure");
        parsed.push_back(p);
    }
    if (parsed.empty()) throw DataError("no data rows in " + path.string());

    int age_lo = std::numeric_limits<int>::max(), age_hi = std::numeric_limits<int>::min();
    int year_lo = age_lo, year_hi = age_hi;
    for (const auto& p : parsed) {
        age_lo = std::min(age_lo, p.key.age);
        age_hi = std::max(age_hi, p.key.age);
        year_lo = std::min(year_lo, p.key.year);
        year_hi = std::max(year_hi, p.key.year);
    }

    MortalityDataset ds(age_lo, age_hi, year_lo, year_hi);
    std::set<CellKey> seen;
    for (const auto& p : parsed) {
        if (!seen.insert(p.key).second)
            throw DataError("line " + std::to_string(p.line) + ": duplicate cell (" +
                            std::string(1, gender_code(p.key.gender)) + ", " +
                            std::to_string(p.key.age) + ", " + std::to_string(p.key.year) + ")");
        if (p.exposure == 0.0 && p.deaths > 0.0)
            warn(warnings, "line " + std::to_string(p.line) +
                               ": deaths recorded with zero exposure; cell flagged missing");
        ds.set_cell(p.key.gender, p.key.age, p.key.year, p.deaths, p.exposure);
    }
    return ds;
}

void save_dataset(const MortalityDataset& ds, const std::filesystem::path& path, char delimiter) {
    std::vector<std::vector<std::string>> rows;
    for (Gender g : kGenders) {
        for (int age = ds.age_min(); age <= ds.age_max(); ++age) {
            for (int year = ds.year_min(); year <= ds.year_max(); ++year) {
                rows.push_back({std::string(1, gender_code(g)), std::to_string(age),
                                std::to_string(year), format_double(ds.deaths(g, age, year)),
                                format_double(ds.exposure(g, age, year))});
            }
        }
    }
    write_delimited(path, {"gender", "age", "year", "deaths", "exposure"}, rows, delimiter);
}

void save_surface(const RateSurface& rs, const std::filesystem::path& path, char delimiter) {
    std::vector<std::vector<std::string>> rows;
    for (Gender g : kGenders) {
        for (int age = rs.age_min(); age <= rs.age_max(); ++age) {
            for (int year = rs.year_min(); year <= rs.year_max(); ++year) {
                const bool miss = rs.missing(g, age, year);
                rows.push_back({std::string(1, gender_code(g)), std::to_string(age),
                                std::to_string(year),
                                miss ? "" : format_double(rs.rate(g, age, year)),
                                miss ? "1" : "0"});
            }
        }
    }
    write_delimited(path, {"gender", "age", "year", "m", "missing"}, rows, delimiter);
}

RateSurface load_surface(const std::filesystem::path& path, char delimiter) {
    TextTable table = read_delimited(path, delimiter);
    const std::size_t c_gender = table.column("gender");
    const std::size_t c_age = table.column("age");
    const std::size_t c_year = table.column("year");
    const std::size_t c_m = table.column("m");
    const std::size_t c_missing = table.column("missing");

    int age_lo = std::numeric_limits<int>::max(), age_hi = std::numeric_limits<int>::min();
    int year_lo = age_lo, year_hi = age_hi;
    for (const auto& row : table.rows) {
        const int age = static_cast<int>(parse_integer(row.fields[c_age], row.line, "age"));
        const int year = static_cast<int>(parse_integer(row.fields[c_year], row.line, "year"));
        age_lo = std::min(age_lo, age);
        age_hi = std::max(age_hi, age);
        year_lo = std::min(year_lo, year);
        year_hi = std::max(year_hi, year);
    }
    if (table.rows.empty()) throw DataError("no data rows in " + path.string());

    RateSurface rs(age_lo, age_hi, year_lo, year_hi);
    for (const auto& row : table.rows) {
        const Gender g = gender_from_code(row.fields[c_gender]);
        const int age = static_cast<int>(parse_integer(row.fields[c_age], row.line, "age"));
        const int year = static_cast<int>(parse_integer(row.fields[c_year], row.line, "year"));
        const bool miss = parse_integer(row.fields[c_missing], row.line, "missing") != 0;
        if (!miss)
            rs.set_rate(g, age, year, parse_double(row.fields[c_m], row.line, "m"));
    }
    return rs;
}

void SynthConfig::validate() const {
    if (age_max < age_min || year_max < year_min) throw DataError("empty synthetic range");
    if (beta <= 0.0) throw DataError("synthetic beta must be positive");
    if (exposure_level <= 0.0) throw DataError("synthetic exposure level must be positive");
    const Eigen::Index n = age_max - age_min + 1;
    for (const VectorXd* prof : {&exposure_profile_female, &exposure_profile_male}) {
        if (prof->size() != 0) {
            if (prof->size() != n) throw DataError("exposure profile size mismatch");
            if ((prof->array() <= 0.0).any())
                throw DataError("exposure profile must be strictly positive");
        }
    }
}

double synthetic_true_rate(const SynthConfig& cfg, Gender g, int age, int year) {
    const double log_m = cfg.alpha + cfg.beta * age - cfg.drift * (year - cfg.year_min) +
                         (g == Gender::Female ? cfg.female_offset : 0.0);
    return std::exp(log_m);
}

double synthetic_exposure(const SynthConfig& cfg, Gender g, int age) {
    const VectorXd& prof =
        g == Gender::Female ? cfg.exposure_profile_female : cfg.exposure_profile_male;
    const double mult = prof.size() ? prof(age - cfg.age_min) : 1.0;
    return cfg.exposure_level * mult;
}

MortalityDataset generate_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    MortalityDataset ds(cfg.age_min, cfg.age_max, cfg.year_min, cfg.year_max);
    Rng rng(splitmix64(cfg.seed));
    for (Gender g : kGenders) {
        for (int age = cfg.age_min; age <= cfg.age_max; ++age) {
            for (int year = cfg.year_min; year <= cfg.year_max; ++year) {
                const double e = synthetic_exposure(cfg, g, age);
                const double mean = e * synthetic_true_rate(cfg, g, age, year);
                std::poisson_distribution<long long> pois(mean);
                ds.set_cell(g, age, year, static_cast<double>(pois(rng)), e);
            }
        }
    }
    return ds;
}

}  // namespace mortcast
