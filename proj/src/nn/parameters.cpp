#include "strac/nn/parameters.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "strac/errors.hpp"

namespace strac::nn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 8> kMagic = {'S', 'T', 'R', 'A', 'C', 'P', 'S', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("checkpoint truncated");
  return v;
}

}  // namespace

ParamId ParameterSet::add(std::string name, Tensor value) {
  if (index_.count(name) != 0) {
    throw ConfigError("duplicate parameter name: " + name);
  }
  check_finite(value, name);
  const ParamId id = tensors_.size();
  index_.emplace(name, id);
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(value));
  return id;
}

std::optional<ParamId> ParameterSet::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += static_cast<std::size_t>(t.size());
  return n;
}

void ParameterSet::save(std::ostream& out) const {
  out.write(kMagic.data(), kMagic.size());
  write_pod<std::uint32_t>(out, kFormatVersion);
  write_pod<std::uint64_t>(out, tensors_.size());
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(names_[i].size()));
    out.write(names_[i].data(), static_cast<std::streamsize>(names_[i].size()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(tensors_[i].rows()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(tensors_[i].cols()));
    out.write(reinterpret_cast<const char*>(tensors_[i].data()),
              static_cast<std::streamsize>(tensors_[i].size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint write failed");
}

ParameterSet ParameterSet::load(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw DataError("not a parameter checkpoint");
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kFormatVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = read_pod<std::uint64_t>(in);
  ParameterSet out;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = read_pod<std::uint32_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto rows = read_pod<std::uint32_t>(in);
    const auto cols = read_pod<std::uint32_t>(in);
    Tensor t(rows, cols);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw DataError("checkpoint truncated in tensor " + name);
    out.add(std::move(name), std::move(t));
  }
  return out;
}

std::size_t ParameterSet::serialized_size() const {
  std::size_t bytes = kMagic.size() + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    bytes += 3 * sizeof(std::uint32_t) + names_[i].size() +
             static_cast<std::size_t>(tensors_[i].size()) * sizeof(double);
  }
  return bytes;
}

bool ParameterSet::same_layout(const ParameterSet& other) const {
  if (size() != other.size()) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    if (names_[i] != other.names_[i] ||
        tensors_[i].rows() != other.tensors_[i].rows() ||
        tensors_[i].cols() != other.tensors_[i].cols()) {
      return false;
    }
  }
  return true;
}

Gradients Gradients::zeros_like(const ParameterSet& params) {
  Gradients g;
  g.tensors.reserve(params.size());
  for (ParamId i = 0; i < params.size(); ++i) {
    g.tensors.push_back(Tensor::Zero(params[i].rows(), params[i].cols()));
  }
  return g;
}

void Gradients::set_zero() {
  for (auto& t : tensors) t.setZero();
}

Gradients& Gradients::operator+=(const Gradients& other) {
  if (other.tensors.size() != tensors.size()) {
    throw DimensionError("Gradients::operator+=: tensor count mismatch");
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) tensors[i] += other.tensors[i];
  return *this;
}

Gradients& Gradients::operator*=(double s) {
  for (auto& t : tensors) t *= s;
  return *this;
}

double Gradients::global_norm() const {
  double sq = 0.0;
  for (const auto& t : tensors) sq += t.squaredNorm();
  return std::sqrt(sq);
}

ParamBinder::ParamBinder(Tape& tape, const ParameterSet& params,
                         bool requires_grad)
    : tape_(tape),
      params_(params),
      requires_grad_(requires_grad),
      bound_(params.size()) {}

Var ParamBinder::operator()(ParamId id) {
  auto& slot = bound_.at(id);
  if (!slot) slot = tape_.leaf(params_[id], requires_grad_);
  return *slot;
}

void ParamBinder::accumulate_grads(Gradients& into) const {
  if (into.tensors.size() != bound_.size()) {
    throw DimensionError("accumulate_grads: gradient set does not match parameters");
  }
  for (std::size_t i = 0; i < bound_.size(); ++i) {
    if (!bound_[i]) continue;
    const Tensor& g = tape_.grad(*bound_[i]);
    if (g.size() != 0) into.tensors[i] += g;
  }
}

}  // namespace strac::nn
