#include "strac/rl/replay.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>
#include <ostream>

#include "strac/errors.hpp"

namespace strac::rl {

double Episode::episode_return() const {
  double total = 0.0;
  for (const auto& s : steps) total += s.reward;
  return total;
}

void validate_episode(const Episode& episode) {
  if (episode.steps.empty()) throw DataError("empty episode");
  const int slots = episode.slots();
  for (std::size_t k = 0; k < episode.steps.size(); ++k) {
    const TrajectoryStep& s = episode.steps[k];
    const bool last = k + 1 == episode.steps.size();
    if (s.terminal != last) {
      throw DataError(last ? "episode does not end with a terminal step"
                           : "terminal step before the end of the episode");
    }
    if (!(s.mu > 0.0 && s.mu <= 1.0)) {
      throw DataError("behaviour probability outside (0,1] at step " + std::to_string(k));
    }
    if (s.features.slot_count() != slots) throw DataError("slot count changes within an episode");
    if (s.mask.size() != static_cast<std::size_t>(flat_action_count(slots))) {
      throw DataError("mask size does not match the action set");
    }
    if (s.flat != to_flat(s.action, slots)) throw DataError("flat index disagrees with action");
    if (s.mask[static_cast<std::size_t>(s.flat)] == 0) {
      throw DataError("recorded action is masked at step " + std::to_string(k));
    }
  }
}

int segment_count(const Episode& episode, int n) {
  if (n < 1) throw UsageError("segment horizon must be >= 1");
  const int len = static_cast<int>(episode.steps.size());
  return (len + n - 1) / n;
}

Segment segment_at(const EpisodePtr& episode, int index, int n) {
  const int count = segment_count(*episode, n);
  if (index < 0 || index >= count) throw UsageError("segment index out of range");
  const int len = static_cast<int>(episode->steps.size());
  Segment s;
  s.episode = episode;
  s.start = index * n;
  s.length = std::min(n, len - s.start);
  return s;
}

ReplayMemory::ReplayMemory(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw ConfigError("replay capacity must be >= 1");
}

void ReplayMemory::append(int domain, Episode episode) {
  append(domain, std::make_shared<const Episode>(std::move(episode)));
}

void ReplayMemory::append(int domain, EpisodePtr episode) {
  if (!episode) throw UsageError("null episode");
  validate_episode(*episode);
  std::lock_guard lock(mutex_);
  auto it = std::find_if(stores_.begin(), stores_.end(),
                         [&](const auto& s) { return s.first == domain; });
  if (it == stores_.end()) {
    stores_.emplace_back(domain, Store{});
    it = std::prev(stores_.end());
  }
  Store& store = it->second;
  store.episodes.push_back(std::move(episode));
  ++store.appended;
  while (store.episodes.size() > capacity_) store.episodes.pop_front();
}

const ReplayMemory::Store* ReplayMemory::find(int domain) const {
  for (const auto& [id, store] : stores_) {
    if (id == domain) return &store;
  }
  return nullptr;
}

std::vector<Segment> ReplayMemory::sample_segments(int domain, int batch, int n,
                                                   std::mt19937_64& rng) const {
  if (batch < 0) throw UsageError("negative batch size");
  if (n < 1) throw UsageError("segment horizon must be >= 1");
  std::lock_guard lock(mutex_);
  const Store* store = find(domain);
  if (store == nullptr || store->episodes.empty()) return {};

  // cumulative[e] = segments in episodes [0, e]
  std::vector<std::size_t> cumulative;
  cumulative.reserve(store->episodes.size());
  std::size_t total = 0;
  for (const auto& ep : store->episodes) {
    total += static_cast<std::size_t>(segment_count(*ep, n));
    cumulative.push_back(total);
  }
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  std::vector<Segment> out;
  out.reserve(static_cast<std::size_t>(batch));
  for (int b = 0; b < batch; ++b) {
    const std::size_t u = pick(rng);
    const auto e = static_cast<std::size_t>(
        std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
    const std::size_t before = e == 0 ? 0 : cumulative[e - 1];
    out.push_back(segment_at(store->episodes[e], static_cast<int>(u - before), n));
  }
  return out;
}

std::size_t ReplayMemory::episode_count(int domain) const {
  std::lock_guard lock(mutex_);
  const Store* store = find(domain);
  return store == nullptr ? 0 : store->episodes.size();
}

std::size_t ReplayMemory::total_segments(int domain, int n) const {
  std::lock_guard lock(mutex_);
  const Store* store = find(domain);
  if (store == nullptr) return 0;
  std::size_t total = 0;
  for (const auto& ep : store->episodes) total += static_cast<std::size_t>(segment_count(*ep, n));
  return total;
}

std::vector<EpisodePtr> ReplayMemory::episodes(int domain) const {
  std::lock_guard lock(mutex_);
  const Store* store = find(domain);
  if (store == nullptr) return {};
  return {store->episodes.begin(), store->episodes.end()};
}

std::uint64_t ReplayMemory::appended(int domain) const {
  std::lock_guard lock(mutex_);
  const Store* store = find(domain);
  return store == nullptr ? 0 : store->appended;
}

namespace {

std::string shortest(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

}  // namespace

void write_episode_log_header(std::ostream& out) {
  out << "domain,episode,turn,action,reward,mu\n";
}

void write_episode_log(std::ostream& out, const std::string& domain,
                       std::uint64_t episode_index, const Episode& episode) {
  for (std::size_t k = 0; k < episode.steps.size(); ++k) {
    const TrajectoryStep& s = episode.steps[k];
    out << domain << ',' << episode_index << ',' << k << ',' << s.flat << ','
        << shortest(s.reward) << ',' << shortest(s.mu) << '\n';
  }
}

}  // namespace strac::rl
