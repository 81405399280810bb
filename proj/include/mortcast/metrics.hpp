#pragma once

#include "mortcast/types.hpp"

#include <cmath>

namespace mortcast {

inline double mae(const VectorXd& pred, const VectorXd& obs) {
    if (pred.size() != obs.size()) throw ModelError("mae: length mismatch");
    if (pred.size() == 0) throw ModelError("mae: empty inputs");
    return (pred - obs).cwiseAbs().mean();
}

inline double rmse(const VectorXd& pred, const VectorXd& obs) {
    if (pred.size() != obs.size()) throw ModelError("rmse: length mismatch");
    if (pred.size() == 0) throw ModelError("rmse: empty inputs");
    return std::sqrt((pred - obs).squaredNorm() / static_cast<double>(pred.size()));
}

}  // namespace mortcast
