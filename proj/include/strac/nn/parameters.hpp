#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "strac/nn/autodiff.hpp"
#include "strac/nn/tensor.hpp"

namespace strac::nn {

using ParamId = std::size_t;

// Ordered collection of named weight tensors. Copies are deep, so a copy is
// an immutable snapshot once published behind a shared_ptr<const>.
class ParameterSet {
 public:
  ParamId add(std::string name, Tensor value);

  std::size_t size() const { return tensors_.size(); }
  const Tensor& operator[](ParamId id) const { return tensors_[id]; }
  Tensor& operator[](ParamId id) { return tensors_[id]; }
  const std::string& name(ParamId id) const { return names_[id]; }
  std::optional<ParamId> find(const std::string& name) const;

  // Total number of scalar weights.
  std::size_t scalar_count() const;

  // Checkpoint container (little-endian):
  //   "STRACPS\0" magic, u32 format version (=1), u64 tensor count, then per
  //   tensor: u32 name length, name bytes, u32 rows, u32 cols, rows*cols f64
  //   in column-major order.
  void save(std::ostream& out) const;
  static ParameterSet load(std::istream& in);
  std::size_t serialized_size() const;

  // Same names and shapes, in the same order.
  bool same_layout(const ParameterSet& other) const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::unordered_map<std::string, ParamId> index_;
};

// One gradient tensor per parameter, same shapes.
struct Gradients {
  std::vector<Tensor> tensors;

  static Gradients zeros_like(const ParameterSet& params);
  void set_zero();
  Gradients& operator+=(const Gradients& other);
  Gradients& operator*=(double s);
  double global_norm() const;
};

// Binds ParameterSet entries to tape leaves on first use so that one
// forward pass creates one leaf per parameter.
class ParamBinder {
 public:
  ParamBinder(Tape& tape, const ParameterSet& params, bool requires_grad);

  Var operator()(ParamId id);
  Tape& tape() { return tape_; }
  const ParameterSet& params() const { return params_; }

  // Adds d(loss)/d(param) for every bound parameter. Call after backward().
  void accumulate_grads(Gradients& into) const;

 private:
  Tape& tape_;
  const ParameterSet& params_;
  bool requires_grad_;
  std::vector<std::optional<Var>> bound_;
};

}  // namespace strac::nn
