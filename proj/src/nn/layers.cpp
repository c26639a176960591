#include "strac/nn/layers.hpp"

#include <cmath>

#include "strac/errors.hpp"

namespace strac::nn {

namespace {

constexpr double kSigmaInit = 0.4;

Vector factorised(Vector v) {
  return v.unaryExpr([](double x) {
    return std::copysign(std::sqrt(std::abs(x)), x);
  });
}

void check_input(const NoisyDenseLayer& layer, Eigen::Index rows) {
  if (rows != layer.in) {
    throw DimensionError(layer.name + ": input has " + std::to_string(rows) +
                         " rows, layer expects " + std::to_string(layer.in));
  }
}

void check_noise(const NoisyDenseLayer& layer, const NoiseSample& noise) {
  if (noise.eps_in.size() != layer.in || noise.eps_out.size() != layer.out) {
    throw DimensionError(layer.name + ": noise sample has wrong dimensions");
  }
}

ParamId lookup(const ParameterSet& params, const std::string& name, int rows,
               int cols) {
  auto id = params.find(name);
  if (!id) throw ConfigError("missing parameter " + name);
  check_shape(params[*id], rows, cols, name);
  return *id;
}

}  // namespace

NoisyDenseLayer NoisyDenseLayer::create(ParameterSet& params, std::string name,
                                        int in, int out, bool bias, bool noisy,
                                        std::mt19937_64& rng) {
  if (in < 1 || out < 1) throw DimensionError(name + ": empty layer");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> uni(-bound, bound);
  auto draw = [&](int r, int c) {
    Tensor t(r, c);
    for (Eigen::Index j = 0; j < t.cols(); ++j) {
      for (Eigen::Index i = 0; i < t.rows(); ++i) t(i, j) = uni(rng);
    }
    return t;
  };
  const double sigma = kSigmaInit * bound;

  NoisyDenseLayer layer{name, in, out, bias, noisy};
  layer.w_mu = params.add(name + ".w_mu", draw(out, in));
  if (bias) layer.b_mu = params.add(name + ".b_mu", draw(out, 1));
  if (noisy) {
    layer.w_sigma = params.add(name + ".w_sigma", Tensor::Constant(out, in, sigma));
    if (bias) layer.b_sigma = params.add(name + ".b_sigma", Tensor::Constant(out, 1, sigma));
  }
  return layer;
}

NoisyDenseLayer NoisyDenseLayer::bind(const ParameterSet& params,
                                      std::string name, int in, int out,
                                      bool bias, bool noisy) {
  NoisyDenseLayer layer{name, in, out, bias, noisy};
  layer.w_mu = lookup(params, name + ".w_mu", out, in);
  if (bias) layer.b_mu = lookup(params, name + ".b_mu", out, 1);
  if (noisy) {
    layer.w_sigma = lookup(params, name + ".w_sigma", out, in);
    if (bias) layer.b_sigma = lookup(params, name + ".b_sigma", out, 1);
  }
  return layer;
}

NoiseSample NoisyDenseLayer::sample_noise(std::mt19937_64& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector eps_in(in);
  Vector eps_out(out);
  for (Eigen::Index i = 0; i < eps_in.size(); ++i) eps_in(i) = normal(rng);
  for (Eigen::Index i = 0; i < eps_out.size(); ++i) eps_out(i) = normal(rng);
  return NoiseSample{factorised(std::move(eps_in)), factorised(std::move(eps_out))};
}

Var noisy_forward(ParamBinder& bind, const NoisyDenseLayer& layer, Var x,
                  const NoiseSample* noise) {
  Tape& t = bind.tape();
  check_input(layer, t.value(x).rows());
  const bool use_noise = layer.noisy && noise != nullptr;
  Var w = bind(layer.w_mu);
  if (use_noise) {
    check_noise(layer, *noise);
    Var eps_w = t.constant(noise->weight_noise());
    w = add(t, w, hadamard(t, bind(layer.w_sigma), eps_w));
  }
  Var y = matmul(t, w, x);
  if (layer.bias) {
    Var b = bind(layer.b_mu);
    if (use_noise) {
      Var eps_b = t.constant(noise->eps_out);
      b = add(t, b, hadamard(t, bind(layer.b_sigma), eps_b));
    }
    y = add_colwise(t, y, b);
  }
  return y;
}

Tensor noisy_forward(const ParameterSet& params, const NoisyDenseLayer& layer,
                     const Tensor& x, const NoiseSample* noise) {
  check_input(layer, x.rows());
  const bool use_noise = layer.noisy && noise != nullptr;
  Tensor y;
  if (use_noise) {
    check_noise(layer, *noise);
    const Tensor w = params[layer.w_mu] +
                     params[layer.w_sigma].cwiseProduct(noise->weight_noise());
    y = w * x;
  } else {
    y = params[layer.w_mu] * x;
  }
  if (layer.bias) {
    if (use_noise) {
      const Vector b = params[layer.b_mu].col(0) +
                       params[layer.b_sigma].col(0).cwiseProduct(noise->eps_out);
      y.colwise() += b;
    } else {
      y.colwise() += params[layer.b_mu].col(0);
    }
  }
  return y;
}

}  // namespace strac::nn
