#pragma once

#include "mortcast/samples.hpp"
#include "mortcast/types.hpp"

namespace mortcast {

// Min-max normalization fitted on training rows only. A constant column maps
// to 0.5 everywhere (with a warning); its inverse is the constant itself.
struct MinMaxScaler {
    VectorXd feat_min, feat_max;
    double target_min = 0.0, target_max = 0.0;

    static MinMaxScaler fit(const SampleSet& train, Warnings* warnings = nullptr);

    SampleSet transform(const SampleSet& s) const;
    double scale_target(double v) const;
    double unscale_target(double v) const;
};

// Scaler for sequence sample sets: per-column static scaling plus one shared
// min-max for all sequence entries (they are all rates, and recursive
// forecasting re-enters predictions into the sequence channel).
struct SequenceScaler {
    VectorXd static_min, static_max;
    double seq_min = 0.0, seq_max = 0.0;
    double target_min = 0.0, target_max = 0.0;

    static SequenceScaler fit(const SequenceSampleSet& train, Warnings* warnings = nullptr);

    SequenceSampleSet transform(const SequenceSampleSet& s) const;
    double unscale_target(double v) const;
};

namespace detail {
inline double minmax_scale(double v, double lo, double hi) {
    return hi > lo ? (v - lo) / (hi - lo) : 0.5;
}
inline double minmax_unscale(double v, double lo, double hi) {
    return hi > lo ? lo + v * (hi - lo) : lo;
}
}  // namespace detail

}  // namespace mortcast
