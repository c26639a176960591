#include "strac/nn/tensor.hpp"

#include <string>

#include "strac/errors.hpp"

namespace strac::nn {

void check_finite(const Tensor& t, std::string_view what) {
  if (!t.allFinite()) {
    throw NumericError("non-finite value in " + std::string(what));
  }
}

void check_shape(const Tensor& t, Eigen::Index rows, Eigen::Index cols,
                 std::string_view what) {
  if (t.rows() != rows || t.cols() != cols) {
    throw DimensionError(std::string(what) + ": expected " +
                         std::to_string(rows) + "x" + std::to_string(cols) +
                         ", got " + std::to_string(t.rows()) + "x" +
                         std::to_string(t.cols()));
  }
}

}  // namespace strac::nn
