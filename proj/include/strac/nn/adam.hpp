#pragma once

#include <cstdint>
#include <vector>

#include "strac/nn/parameters.hpp"

namespace strac::nn {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam. Moments mirror the parameter shapes.
class AdamState {
 public:
  AdamState(const ParameterSet& params, AdamConfig config);

  // Descends along `grads`. Throws NumericError naming the first offending
  // tensor, before touching anything, if a gradient is not finite.
  void step(ParameterSet& params, const Gradients& grads);

  std::uint64_t step_count() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

 private:
  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t steps_ = 0;
};

}  // namespace strac::nn
