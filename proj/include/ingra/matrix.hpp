#pragma once

#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "ingra/error.hpp"

namespace ingra {

// Row-major to match the on-disk layout of checkpoints and CSVs.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

template <class Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
    return m.derived().array().isFinite().all();
}

template <class Derived>
void ensure_finite(const Eigen::DenseBase<Derived>& m, std::string_view what) {
    if (!all_finite(m))
        throw NumericError(std::string(what) + " contains a non-finite value");
}

inline void ensure_finite(double x, std::string_view what) {
    if (!std::isfinite(x))
        throw NumericError(std::string(what) + " is non-finite");
}

} // namespace ingra
