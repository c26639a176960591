#pragma once

#include <random>
#include <string>

#include "strac/nn/autodiff.hpp"
#include "strac/nn/parameters.hpp"
#include "strac/nn/tensor.hpp"

namespace strac::nn {

// Factorised Gaussian noise for one layer: eps_w = f(eps_out) f(eps_in)^T,
// eps_b = f(eps_out), with f(x) = sign(x) sqrt(|x|).
struct NoiseSample {
  Vector eps_in;
  Vector eps_out;

  Tensor weight_noise() const { return eps_out * eps_in.transpose(); }
};

// Dense layer y = W x (+ b). When `noisy`, W = Wmu + Wsigma .* eps_w and
// b = bmu + bsigma .* eps_b for the supplied noise sample. The tensors live
// in a ParameterSet; this struct only records where.
struct NoisyDenseLayer {
  std::string name;
  int in = 0;
  int out = 0;
  bool bias = true;
  bool noisy = false;
  ParamId w_mu = 0;
  ParamId b_mu = 0;
  ParamId w_sigma = 0;
  ParamId b_sigma = 0;

  // Registers "<name>.w_mu" (and b_mu / w_sigma / b_sigma as applicable).
  // Mean weights ~ U(-1/sqrt(in), 1/sqrt(in)); sigma = 0.4/sqrt(in).
  static NoisyDenseLayer create(ParameterSet& params, std::string name, int in,
                                int out, bool bias, bool noisy,
                                std::mt19937_64& rng);
  // Resolves the ids of an existing layout (e.g. a loaded checkpoint).
  static NoisyDenseLayer bind(const ParameterSet& params, std::string name,
                              int in, int out, bool bias, bool noisy);

  NoiseSample sample_noise(std::mt19937_64& rng) const;
};

// Records the layer on the tape. noise == nullptr (or a noise-free layer)
// gives exactly Wmu x + bmu.
Var noisy_forward(ParamBinder& bind, const NoisyDenseLayer& layer, Var x,
                  const NoiseSample* noise);

// Tape-free evaluation of the same function.
Tensor noisy_forward(const ParameterSet& params, const NoisyDenseLayer& layer,
                     const Tensor& x, const NoiseSample* noise);

}  // namespace strac::nn
