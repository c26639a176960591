#include "strac/nn/adam.hpp"

#include <cmath>

#include "strac/errors.hpp"

namespace strac::nn {

AdamState::AdamState(const ParameterSet& params, AdamConfig config)
    : config_(config) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (ParamId i = 0; i < params.size(); ++i) {
    m_.push_back(Tensor::Zero(params[i].rows(), params[i].cols()));
    v_.push_back(Tensor::Zero(params[i].rows(), params[i].cols()));
  }
}

void AdamState::step(ParameterSet& params, const Gradients& grads) {
  if (grads.tensors.size() != params.size() || m_.size() != params.size()) {
    throw DimensionError("adam step: gradient count does not match parameters");
  }
  for (ParamId i = 0; i < params.size(); ++i) {
    check_shape(grads.tensors[i], params[i].rows(), params[i].cols(),
                "adam gradient for " + params.name(i));
    if (!grads.tensors[i].allFinite()) {
      throw NumericError("adam step aborted: non-finite gradient for " +
                         params.name(i) + " (max |g| = " +
                         std::to_string(grads.tensors[i].cwiseAbs().maxCoeff()) +
                         ")");
    }
  }
  ++steps_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (ParamId i = 0; i < params.size(); ++i) {
    const Tensor& g = grads.tensors[i];
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g.cwiseProduct(g);
    const auto m_hat = m_[i].array() / corr1;
    const auto v_hat = v_[i].array() / corr2;
    params[i].array() -= config_.learning_rate * m_hat / (v_hat.sqrt() + config_.epsilon);
  }
}

}  // namespace strac::nn
