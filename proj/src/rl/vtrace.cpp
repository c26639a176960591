#include "strac/rl/vtrace.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "strac/errors.hpp"
#include "strac/log.hpp"

namespace strac::rl {

void VTraceConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0,1]");
  if (n < 1) throw ConfigError("V-trace horizon n must be >= 1");
  if (!(rho_bar >= 0.0) || !(c_bar >= 0.0)) {
    throw ConfigError("truncation levels must be non-negative");
  }
  if (rho_bar > c_bar) {
    log::warn("V-trace rho_bar (" + std::to_string(rho_bar) + ") exceeds c_bar (" +
              std::to_string(c_bar) + ")");
  }
}

TruncatedWeights truncated_weights(std::span<const double> pi,
                                   std::span<const double> mu,
                                   const VTraceConfig& cfg) {
  if (pi.size() != mu.size()) throw UsageError("pi and mu lengths differ");
  TruncatedWeights w;
  w.rho.resize(pi.size());
  w.c.resize(pi.size());
  for (std::size_t k = 0; k < pi.size(); ++k) {
    if (!(mu[k] > 0.0)) {
      throw DataError("behaviour probability " + std::to_string(mu[k]) +
                      " at step " + std::to_string(k));
    }
    if (!(pi[k] >= 0.0)) throw DataError("negative target probability");
    const double ratio = pi[k] / mu[k];
    w.rho[k] = std::min(cfg.rho_bar, ratio);
    w.c[k] = std::min(cfg.c_bar, ratio);
  }
  return w;
}

VTraceResult vtrace_targets(std::span<const double> rewards,
                            std::span<const double> values,
                            std::span<const double> rho,
                            std::span<const double> c, bool ends_episode,
                            const VTraceConfig& cfg) {
  const std::size_t len = rewards.size();
  if (len == 0) throw UsageError("V-trace on an empty segment");
  if (values.size() != len + 1 || rho.size() != len || c.size() != len) {
    throw UsageError("V-trace inputs need L rewards/rho/c and L+1 values");
  }
  const auto horizon = static_cast<std::size_t>(cfg.n);
  auto value_at = [&](std::size_t k) {
    return (k == len && ends_episode) ? 0.0 : values[k];
  };

  std::vector<double> delta(len);
  for (std::size_t t = 0; t < len; ++t) {
    delta[t] = rho[t] * (rewards[t] + cfg.gamma * value_at(t + 1) - value_at(t));
  }

  VTraceResult out;
  out.rho.assign(rho.begin(), rho.end());
  out.c.assign(c.begin(), c.end());
  out.targets.resize(len);
  for (std::size_t k = 0; k < len; ++k) {
    const std::size_t stop = std::min(len, k + horizon);
    double acc = 0.0;
    double discount = 1.0;
    double trace = 1.0;
    for (std::size_t t = k; t < stop; ++t) {
      acc += discount * trace * delta[t];
      discount *= cfg.gamma;
      trace *= c[t];
    }
    out.targets[k] = value_at(k) + acc;
  }

  out.advantages.resize(len);
  for (std::size_t k = 0; k < len; ++k) {
    const double next = (k + 1 < len) ? out.targets[k + 1] : value_at(len);
    out.advantages[k] = rewards[k] + cfg.gamma * next - value_at(k);
  }
  return out;
}

}  // namespace strac::rl
