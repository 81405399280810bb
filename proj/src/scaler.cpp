#include "mortcast/scaler.hpp"

#include <cmath>

namespace mortcast {

using detail::minmax_scale;
using detail::minmax_unscale;

namespace {

void column_range(const MatrixXd& m, Eigen::Index j, double& lo, double& hi) {
    lo = m.col(j).minCoeff();
    hi = m.col(j).maxCoeff();
}

void warn_constant(Warnings* w, const std::string& what) {
    warn(w, "constant " + what + " mapped to 0.5 under min-max scaling");
}

}  // namespace

MinMaxScaler MinMaxScaler::fit(const SampleSet& train, Warnings* warnings) {
    if (train.size() == 0) throw DataError("cannot fit scaler on empty sample set");
    MinMaxScaler s;
    const Eigen::Index d = train.X.cols();
    s.feat_min.resize(d);
    s.feat_max.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        column_range(train.X, j, s.feat_min(j), s.feat_max(j));
        if (s.feat_min(j) == s.feat_max(j)) warn_constant(warnings, "feature " + std::to_string(j));
    }
    s.target_min = train.y.minCoeff();
    s.target_max = train.y.maxCoeff();
    if (s.target_min == s.target_max) warn_constant(warnings, "target");
    return s;
}

SampleSet MinMaxScaler::transform(const SampleSet& s) const {
    SampleSet out = s;
    for (Eigen::Index j = 0; j < out.X.cols(); ++j)
        for (Eigen::Index r = 0; r < out.X.rows(); ++r)
            out.X(r, j) = minmax_scale(s.X(r, j), feat_min(j), feat_max(j));
    for (Eigen::Index r = 0; r < out.y.size(); ++r)
        if (!std::isnan(s.y(r))) out.y(r) = scale_target(s.y(r));
    return out;
}

double MinMaxScaler::scale_target(double v) const {
    return minmax_scale(v, target_min, target_max);
}

double MinMaxScaler::unscale_target(double v) const {
    return minmax_unscale(v, target_min, target_max);
}

SequenceScaler SequenceScaler::fit(const SequenceSampleSet& train, Warnings* warnings) {
    if (train.size() == 0) throw DataError("cannot fit scaler on empty sequence set");
    SequenceScaler s;
    const Eigen::Index d = train.statics.cols();
    s.static_min.resize(d);
    s.static_max.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        column_range(train.statics, j, s.static_min(j), s.static_max(j));
        if (s.static_min(j) == s.static_max(j))
            warn_constant(warnings, "static feature " + std::to_string(j));
    }
    s.seq_min = train.seq.minCoeff();
    s.seq_max = train.seq.maxCoeff();
    if (s.seq_min == s.seq_max) warn_constant(warnings, "sequence channel");
    s.target_min = train.y.minCoeff();
    s.target_max = train.y.maxCoeff();
    if (s.target_min == s.target_max) warn_constant(warnings, "target");
    return s;
}

SequenceSampleSet SequenceScaler::transform(const SequenceSampleSet& s) const {
    SequenceSampleSet out = s;
    for (Eigen::Index j = 0; j < out.statics.cols(); ++j)
        for (Eigen::Index r = 0; r < out.statics.rows(); ++r)
            out.statics(r, j) = minmax_scale(s.statics(r, j), static_min(j), static_max(j));
    for (Eigen::Index r = 0; r < out.seq.rows(); ++r)
        for (Eigen::Index j = 0; j < out.seq.cols(); ++j)
            out.seq(r, j) = minmax_scale(s.seq(r, j), seq_min, seq_max);
    for (Eigen::Index r = 0; r < out.y.size(); ++r)
        if (!std::isnan(s.y(r))) out.y(r) = minmax_scale(s.y(r), target_min, target_max);
    return out;
}

double SequenceScaler::unscale_target(double v) const {
    return minmax_unscale(v, target_min, target_max);
}

}  // namespace mortcast
