#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "strac/types.hpp"

namespace strac::rl {

struct TrajectoryStep {
  BeliefFeatures features;  // state the action was taken in
  ActionId action;
  int flat = 0;
  double reward = 0.0;
  double mu = 1.0;  // behaviour probability of `action`
  bool terminal = false;
  ActionMask mask;
};

struct Episode {
  std::vector<TrajectoryStep> steps;
  std::uint64_t policy_version = 0;
  bool success = false;

  int slots() const { return steps.empty() ? 0 : steps.front().features.slot_count(); }
  double episode_return() const;
};

using EpisodePtr = std::shared_ptr<const Episode>;

// Throws DataError: no steps, last step not terminal, terminal before the
// end, mu outside (0, 1], or a mask that forbids the recorded action.
void validate_episode(const Episode& episode);

// Steps [start, start + length) of one episode. When the segment does not
// reach the end of the episode, steps[start + length] supplies the
// bootstrap state.
struct Segment {
  EpisodePtr episode;
  int start = 0;
  int length = 0;

  bool ends_episode() const {
    return start + length == static_cast<int>(episode->steps.size());
  }
  const TrajectoryStep& step(int k) const {
    return episode->steps[static_cast<std::size_t>(start + k)];
  }
  const BeliefFeatures& bootstrap_state() const {
    return episode->steps[static_cast<std::size_t>(start + length)].features;
  }
};

// Non-overlapping n-step segments aligned at the episode start; the final
// segment may be shorter.
int segment_count(const Episode& episode, int n);
Segment segment_at(const EpisodePtr& episode, int index, int n);

// Per-domain FIFO of immutable episodes. append() and sample_segments() are
// safe to call concurrently.
class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity = 1000);

  std::size_t capacity() const { return capacity_; }

  // Validates, then publishes the episode; evicts the oldest at capacity.
  void append(int domain, Episode episode);
  void append(int domain, EpisodePtr episode);

  // `batch` segments drawn uniformly (with replacement) from all stored
  // n-step segments of `domain`. Empty when the domain holds no episodes.
  std::vector<Segment> sample_segments(int domain, int batch, int n,
                                       std::mt19937_64& rng) const;

  std::size_t episode_count(int domain) const;
  std::size_t total_segments(int domain, int n) const;
  std::vector<EpisodePtr> episodes(int domain) const;
  std::uint64_t appended(int domain) const;

 private:
  struct Store {
    std::deque<EpisodePtr> episodes;
    std::uint64_t appended = 0;
  };
  const Store* find(int domain) const;

  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::vector<std::pair<int, Store>> stores_;
};

// Episode log, one comma-separated record per step:
//   domain,episode,turn,action,reward,mu
// `action` is the flat action index. write_episode_log_header() emits the
// column names.
void write_episode_log_header(std::ostream& out);
void write_episode_log(std::ostream& out, const std::string& domain,
                       std::uint64_t episode_index, const Episode& episode);

}  // namespace strac::rl
