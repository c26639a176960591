#pragma once

#include <Eigen/Dense>

#include <string_view>

namespace strac::nn {

// Column-major 64-bit dense matrix. Vectors are n x 1; batched node states
// keep one node per column.
using Tensor = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Throws NumericError naming `what` when any entry is NaN or infinite.
void check_finite(const Tensor& t, std::string_view what);

// Throws DimensionError unless t is rows x cols.
void check_shape(const Tensor& t, Eigen::Index rows, Eigen::Index cols,
                 std::string_view what);

}  // namespace strac::nn
