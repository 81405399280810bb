#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mortcast {

using Eigen::ArrayXXd;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;
using ArrayXXb = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Raised for malformed or inconsistent input data (CLI exit code 2).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised when a model cannot be fitted or applied (CLI exit code 3).
struct ModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Gender : int { Female = 0, Male = 1 };

constexpr int kNumGenders = 2;

inline int gender_index(Gender g) { return static_cast<int>(g); }

// Indicator used as a model feature: 1 = male.
inline double gender_indicator(Gender g) { return g == Gender::Male ? 1.0 : 0.0; }

inline char gender_code(Gender g) { return g == Gender::Male ? 'M' : 'F'; }

inline Gender gender_from_code(const std::string& s) {
    if (s == "M" || s == "m") return Gender::Male;
    if (s == "F" || s == "f") return Gender::Female;
    throw DataError("unknown gender code '" + s + "' (expected M or F)");
}

inline constexpr std::array<Gender, 2> kGenders{Gender::Female, Gender::Male};

// Identifies one cell of the (gender, age, year) grid.
struct CellKey {
    Gender gender;
    int age;
    int year;

    bool operator==(const CellKey&) const = default;
    bool operator<(const CellKey& o) const {
        if (gender != o.gender) return gender_index(gender) < gender_index(o.gender);
        if (age != o.age) return age < o.age;
        return year < o.year;
    }
};

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Derives an independent substream seed; used so parallel and serial runs of
// seeded work (forest trees, CV jobs) produce identical results.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
    return splitmix64(splitmix64(a) ^ splitmix64(b ^ 0x632be59bd9b4e019ull) ^ (c * 0x9e3779b97f4a7c15ull));
}

using Warnings = std::vector<std::string>;

inline void warn(Warnings* sink, std::string msg) {
    if (sink) sink->push_back(std::move(msg));
}

}  // namespace mortcast
