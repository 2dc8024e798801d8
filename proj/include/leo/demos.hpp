#pragma once

#include <mutex>

#include "leo/abstractor.hpp"
#include "leo/sim.hpp"

namespace leo {

/// Expert construction episode from the deconstruction planner:
/// 2N-1 observations, 2N-2 actions, abstract labels counting 2N-2 down to 0.
struct DemoEpisode {
  std::vector<Observation> states;
  std::vector<Action> actions;
  std::vector<int> abstract_labels;
  uint64_t seed = 0;
};

DemoEpisode generate_demo(const std::shared_ptr<const TaskSpec>& task, uint64_t seed);

/// Variant exposing the scattered scene the episode starts from, for
/// independent replay verification.
DemoEpisode generate_demo(const std::shared_ptr<const TaskSpec>& task, uint64_t seed,
                          SceneState* start_scene);

std::vector<std::pair<const Observation*, int>> label_abstract_states(const DemoEpisode& ep);

AbstractorDataset build_abstractor_dataset(const std::shared_ptr<const TaskSpec>& task,
                                           int n_per_class, uint64_t seed);

/// Compact observation storage for the replay buffer: heights quantized to
/// integer layers, the in-hand image reduced to the held kind index.
struct ObsCompact {
  std::vector<uint8_t> layers;  // w*w
  int8_t held_kind = -1;        // index into task kinds, -1 when empty

  bool holding() const { return held_kind >= 0; }
};

ObsCompact compress_obs(const TaskSpec& task, const Observation& obs);
Observation expand_obs(const TaskSpec& task, const ObsCompact& c);

struct Transition {
  ObsCompact s;
  Action a;
  ObsCompact s_next;
  float reward = 0.0f;
  int goal = -1;       // abstract goal, -1 when not goal-conditioned
  int goal_next = -1;  // goal stored for the successor step
  bool done = false;
  bool is_expert = false;
};

/// Replay store with a permanent expert region and a FIFO agent region.
/// One writer and one sampling reader may run concurrently.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(size_t capacity = 100000, double expert_fraction = 1.0 / 8.0)
      : capacity_(capacity), expert_fraction_(expert_fraction) {}

  /// Clears all regions and resets the configuration.
  void configure(size_t capacity, double expert_fraction) {
    std::lock_guard<std::mutex> lock(mu_);
    capacity_ = capacity;
    expert_fraction_ = expert_fraction;
    expert_.clear();
    agent_.clear();
    agent_next_ = 0;
    agent_full_ = false;
  }

  void push(const Transition& t);
  std::vector<Transition> sample(int batch, Rng& rng) const;

  size_t size() const;
  size_t expert_size() const;
  size_t agent_size() const;
  double expert_fraction() const { return expert_fraction_; }

  std::vector<Transition> snapshot_agent() const;
  void restore_agent(const std::vector<Transition>& ts);

 private:
  size_t capacity_;
  double expert_fraction_;
  std::vector<Transition> expert_;
  std::vector<Transition> agent_;
  size_t agent_next_ = 0;
  bool agent_full_ = false;
  mutable std::mutex mu_;
};

/// Converts episodes to transitions. Goal-conditioned loading relabels each
/// transition with the successor's abstract label, recomputes rewards under
/// the goal reward, and keeps the chain bootstrappable (done only at the
/// final construction step).
void load_expert_into_buffer(ReplayBuffer& buf, const TaskSpec& task,
                             const std::vector<DemoEpisode>& episodes, bool goal_conditioned,
                             bool done_on_subgoal = false);

/// Versioned on-disk demo storage: a text index plus a binary record file.
void save_demos(const std::string& path_prefix, const TaskSpec& task,
                const std::vector<DemoEpisode>& episodes);
std::vector<DemoEpisode> load_demos(const std::string& path_prefix,
                                    const std::shared_ptr<const TaskSpec>& task);

void save_dataset(const std::string& path, const TaskSpec& task, const AbstractorDataset& ds);
AbstractorDataset load_dataset(const std::string& path, const TaskSpec& task);

}  // namespace leo
