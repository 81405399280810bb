#include "mortcast/samples.hpp"

#include "mortcast/io.hpp"

#include <algorithm>
#include <cmath>

namespace mortcast {

namespace {

constexpr double kNoTarget = std::numeric_limits<double>::quiet_NaN();

struct StaticRow {
    CellKey key;
    double prev;
    double target;
};

// Shared by training and prediction builders; `target_year` < 0 means all
// years with a lag available, and requires the target to be observed.
std::vector<StaticRow> collect_static_rows(const RateSurface& rs, int target_year) {
    std::vector<StaticRow> rows;
    const int t_lo = target_year >= 0 ? target_year : rs.year_min() + 1;
    const int t_hi = target_year >= 0 ? target_year : rs.year_max();
    for (Gender g : kGenders) {
        for (int age = rs.age_min(); age <= rs.age_max(); ++age) {
            for (int t = t_lo; t <= t_hi; ++t) {
                if (t - 1 < rs.year_min() || rs.missing(g, age, t - 1)) continue;
                const bool want_target = target_year < 0;
                if (want_target && rs.missing(g, age, t)) continue;
                rows.push_back({{g, age, t}, rs.rate(g, age, t - 1),
                                want_target ? rs.rate(g, age, t) : kNoTarget});
            }
        }
    }
    return rows;
}

SampleSet pack_static(const std::vector<StaticRow>& rows) {
    SampleSet s;
    s.X.resize(static_cast<Eigen::Index>(rows.size()), kNumStaticFeatures);
    s.y.resize(static_cast<Eigen::Index>(rows.size()));
    s.keys.reserve(rows.size());
    Eigen::Index r = 0;
    for (const auto& row : rows) {
        s.X(r, kFeatAge) = row.key.age;
        s.X(r, kFeatGender) = gender_indicator(row.key.gender);
        s.X(r, kFeatYear) = row.key.year;
        s.X(r, kFeatPrevRate) = row.prev;
        s.y(r) = row.target;
        s.keys.push_back(row.key);
        s.max_feature_year = std::max(s.max_feature_year, row.key.year - 1);
        ++r;
    }
    return s;
}

struct SeqRow {
    CellKey key;
    std::vector<double> seq;
    double target;
    int max_entry_year;
};

SequenceSampleSet pack_sequences(std::vector<SeqRow> rows, SeqVariant variant, int window,
                                 std::size_t dropped) {
    SequenceSampleSet s;
    s.variant = variant;
    s.window = window;
    s.dropped_rows = dropped;
    const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index len = n ? static_cast<Eigen::Index>(rows.front().seq.size()) : 0;
    s.statics.resize(n, 3);
    s.seq.resize(n, len);
    s.y.resize(n);
    s.keys.reserve(rows.size());
    Eigen::Index r = 0;
    for (auto& row : rows) {
        s.statics(r, 0) = row.key.age;
        s.statics(r, 1) = gender_indicator(row.key.gender);
        s.statics(r, 2) = row.key.year;
        for (Eigen::Index j = 0; j < len; ++j) s.seq(r, j) = row.seq[j];
        s.y(r) = row.target;
        s.keys.push_back(row.key);
        if (row.max_entry_year > s.max_feature_year) s.max_feature_year = row.max_entry_year;
        ++r;
    }
    return s;
}

std::vector<SeqRow> collect_lagged(const RateSurface& rs, int lags, int target_year,
                                   std::size_t& dropped) {
    std::vector<SeqRow> rows;
    const int t_lo = target_year >= 0 ? target_year : rs.year_min() + lags;
    const int t_hi = target_year >= 0 ? target_year : rs.year_max();
    for (Gender g : kGenders) {
        for (int age = rs.age_min(); age <= rs.age_max(); ++age) {
            for (int t = t_lo; t <= t_hi; ++t) {
                const bool want_target = target_year < 0;
                if (want_target && rs.missing(g, age, t)) continue;
                if (t - lags < rs.year_min()) continue;
                bool lag_missing = false;
                std::vector<double> seq(lags);
                for (int k = 0; k < lags; ++k) {
                    const int ty = t - lags + k;
                    if (rs.missing(g, age, ty)) {
                        lag_missing = true;
                        break;
                    }
                    seq[k] = rs.rate(g, age, ty);
                }
                if (lag_missing) {
                    if (want_target) ++dropped;
                    continue;
                }
                rows.push_back({{g, age, t}, std::move(seq),
                                want_target ? rs.rate(g, age, t) : kNoTarget, t - 1});
            }
        }
    }
    return rows;
}

std::vector<SeqRow> collect_cohort(const RateSurface& rs, int target_year, std::size_t& dropped) {
    std::vector<SeqRow> rows;
    const int t_lo = target_year >= 0 ? target_year : rs.year_min() + 2;
    const int t_hi = target_year >= 0 ? target_year : rs.year_max();
    for (Gender g : kGenders) {
        for (int age = rs.age_min() + 2; age <= rs.age_max(); ++age) {
            for (int t = t_lo; t <= t_hi; ++t) {
                const bool want_target = target_year < 0;
                if (want_target && rs.missing(g, age, t)) continue;
                if (t - 2 < rs.year_min()) continue;
                if (rs.missing(g, age - 2, t - 2) || rs.missing(g, age - 1, t - 1)) {
                    if (want_target) ++dropped;
                    continue;
                }
                rows.push_back({{g, age, t},
                                {rs.rate(g, age - 2, t - 2), rs.rate(g, age - 1, t - 1)},
                                want_target ? rs.rate(g, age, t) : kNoTarget,
                                t - 1});
            }
        }
    }
    return rows;
}

struct StackedSeries {
    std::vector<double> values;
    std::vector<CellKey> keys;  // parallel to values
};

// Non-missing cells of one gender flattened in (year, then age) order.
StackedSeries stacked_series(const RateSurface& rs, Gender g) {
    StackedSeries s;
    for (int t = rs.year_min(); t <= rs.year_max(); ++t) {
        for (int age = rs.age_min(); age <= rs.age_max(); ++age) {
            if (rs.missing(g, age, t)) continue;
            s.values.push_back(rs.rate(g, age, t));
            s.keys.push_back({g, age, t});
        }
    }
    return s;
}

// Count of series entries strictly before cell (age, year) in stacking order.
std::size_t stacked_position(const StackedSeries& s, int age, int year) {
    std::size_t pos = 0;
    for (; pos < s.keys.size(); ++pos) {
        const CellKey& k = s.keys[pos];
        if (k.year > year || (k.year == year && k.age >= age)) break;
    }
    return pos;
}

std::vector<SeqRow> collect_stacked(const RateSurface& rs, int window, int target_year,
                                    std::vector<int>* target_pos, std::vector<int>* max_entry_pos) {
    std::vector<SeqRow> rows;
    for (Gender g : kGenders) {
        const StackedSeries series = stacked_series(rs, g);
        if (series.values.empty()) continue;
        const int t_lo = target_year >= 0 ? target_year : rs.year_min();
        const int t_hi = target_year >= 0 ? target_year : rs.year_max();
        for (int t = t_lo; t <= t_hi; ++t) {
            for (int age = rs.age_min(); age <= rs.age_max(); ++age) {
                const bool want_target = target_year < 0;
                if (want_target && rs.missing(g, age, t)) continue;
                const std::size_t pos = stacked_position(series, age, t);
                SeqRow row;
                row.key = {g, age, t};
                row.target = want_target ? rs.rate(g, age, t) : kNoTarget;
                row.seq.resize(window);
                row.max_entry_year = std::numeric_limits<int>::min();
                int max_pos = -1;
                for (int j = 0; j < window; ++j) {
                    const long long idx = static_cast<long long>(pos) - window + j;
                    const std::size_t src = idx < 0 ? 0 : static_cast<std::size_t>(idx);
                    row.seq[j] = series.values[src];
                    // Left-padding repeats the series' first value; pads are
                    // constants, not lag references, for audit purposes.
                    if (idx >= 0) {
                        row.max_entry_year =
                            std::max(row.max_entry_year, series.keys[src].year);
                        max_pos = std::max(max_pos, static_cast<int>(src));
                    }
                }
                rows.push_back(std::move(row));
                if (target_pos) target_pos->push_back(static_cast<int>(pos));
                if (max_entry_pos) max_entry_pos->push_back(max_pos);
            }
        }
    }
    return rows;
}

}  // namespace

std::string seq_variant_name(SeqVariant v) {
    switch (v) {
        case SeqVariant::Lagged: return "lagged";
        case SeqVariant::Stacked: return "stacked";
        case SeqVariant::Cohort: return "cohort";
    }
    return "?";
}

SampleSet build_static_samples(const RateSurface& rs) {
    if (rs.n_years() < 2)
        throw DataError("static samples need at least two years of rates");
    return pack_static(collect_static_rows(rs, -1));
}

SequenceSampleSet build_lagged_sequences(const RateSurface& rs, int lags) {
    if (lags < 1) throw DataError("lags must be >= 1");
    if (rs.n_years() < lags + 1)
        throw DataError("lagged sequences need at least lags+1 years of rates");
    std::size_t dropped = 0;
    auto rows = collect_lagged(rs, lags, -1, dropped);
    return pack_sequences(std::move(rows), SeqVariant::Lagged, lags, dropped);
}

SequenceSampleSet build_stacked_sequences(const RateSurface& rs, int window) {
    if (window < 1) throw DataError("stacked window must be >= 1");
    auto rows = collect_stacked(rs, window, -1, nullptr, nullptr);
    return pack_sequences(std::move(rows), SeqVariant::Stacked, window, 0);
}

SequenceSampleSet build_cohort_sequences(const RateSurface& rs) {
    if (rs.n_years() < 3 || rs.n_ages() < 3)
        throw DataError("cohort sequences need at least three years and three ages");
    std::size_t dropped = 0;
    auto rows = collect_cohort(rs, -1, dropped);
    return pack_sequences(std::move(rows), SeqVariant::Cohort, 2, dropped);
}

SampleSet build_static_features_for_year(const RateSurface& rs, int year) {
    return pack_static(collect_static_rows(rs, year));
}

SequenceSampleSet build_sequence_features_for_year(const RateSurface& rs, int year,
                                                   SeqVariant variant, int lags_or_window) {
    std::size_t dropped = 0;
    std::vector<SeqRow> rows;
    switch (variant) {
        case SeqVariant::Lagged:
            rows = collect_lagged(rs, lags_or_window, year, dropped);
            break;
        case SeqVariant::Stacked:
            rows = collect_stacked(rs, lags_or_window, year, nullptr, nullptr);
            break;
        case SeqVariant::Cohort:
            rows = collect_cohort(rs, year, dropped);
            break;
    }
    return pack_sequences(std::move(rows), variant, lags_or_window, dropped);
}

void save_samples(const SampleSet& s, const std::filesystem::path& path, char delimiter) {
    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index r = 0; r < s.size(); ++r) {
        rows.push_back({std::string(1, gender_code(s.keys[r].gender)),
                        std::to_string(s.keys[r].age), std::to_string(s.keys[r].year),
                        format_double(s.X(r, kFeatPrevRate)), format_double(s.y(r))});
    }
    write_delimited(path, {"gender", "age", "year", "prev_rate", "target"}, rows, delimiter);
}

}  // namespace mortcast
