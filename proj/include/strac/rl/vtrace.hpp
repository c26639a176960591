#pragma once

#include <limits>
#include <span>
#include <vector>

namespace strac::rl {

struct VTraceConfig {
  double rho_bar = 1.0;  // truncation of the TD weights rho
  double c_bar = 5.0;    // truncation of the trace weights c
  double gamma = 0.99;
  int n = 5;             // bootstrap horizon in steps

  // Throws ConfigError for gamma outside [0,1], n < 1 or negative truncation.
  void validate() const;

  static constexpr double kUntruncated = std::numeric_limits<double>::infinity();
};

struct TruncatedWeights {
  std::vector<double> rho;
  std::vector<double> c;
};

// rho_k = min(rho_bar, pi_k / mu_k), c_k = min(c_bar, pi_k / mu_k).
// Throws DataError if any mu_k <= 0 and UsageError on length mismatch.
TruncatedWeights truncated_weights(std::span<const double> pi,
                                   std::span<const double> mu,
                                   const VTraceConfig& cfg);

struct VTraceResult {
  std::vector<double> targets;     // v_k
  std::vector<double> advantages;  // r_k + gamma v_{k+1} - V(b_k)
  std::vector<double> rho;
  std::vector<double> c;
};

// V-trace targets for one segment of L steps that stays inside an episode.
//
//   values:   V(b_k) for the L states of the segment plus the state after
//             it (length L + 1). When `ends_episode`, the last entry is
//             ignored and treated as 0.
//   v_k = V(b_k) + sum_{t=k}^{L-1} gamma^{t-k} (prod_{d=k}^{t-1} c_d) rho_t
//                  (r_t + gamma V(b_{t+1}) - V(b_t))
//   A_k = r_k + gamma v_{k+1} - V(b_k), with v_L = V(b_L) (0 at episode end).
//
// Throws UsageError for an empty segment or mismatched lengths.
VTraceResult vtrace_targets(std::span<const double> rewards,
                            std::span<const double> values,
                            std::span<const double> rho,
                            std::span<const double> c, bool ends_episode,
                            const VTraceConfig& cfg);

}  // namespace strac::rl
