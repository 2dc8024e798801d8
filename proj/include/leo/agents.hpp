#pragma once

#include "leo/demos.hpp"
#include "leo/qfunc.hpp"

namespace leo {

enum class Algo { dqn, sdqfd, leo_dqn, leo_sdqfd, hdqn_orig, hdqn_mod };

Algo algo_from_name(const std::string& name);
std::string algo_name(Algo a);
inline bool algo_goal_conditioned(Algo a) { return a != Algo::dqn && a != Algo::sdqfd; }
inline bool algo_margin(Algo a) { return a == Algo::sdqfd || a == Algo::leo_sdqfd; }
inline bool algo_hierarchical(Algo a) { return a == Algo::hdqn_orig || a == Algo::hdqn_mod; }

struct AgentConfig {
  Algo algo = Algo::leo_dqn;
  int n_demos = 5;
  double margin = 0.1;
  double margin_weight = 0.1;
  double gamma = 0.95;
  double lr = 1e-4;
  int batch = 32;
  int target_update_period = 500;
  bool invariant_abstractor = true;
  double eps_start = 1.0;
  double eps_floor = 0.1;
  double eps_decay_frac = 0.2;  // fraction of the step budget spent decaying
  bool done_on_subgoal = false;
  int t_low = 2;
  int hdqn_warmup = 1000;
  double expert_fraction = 1.0 / 8.0;
  size_t replay_capacity = 100000;
  bool train_augment = true;  // random dihedral transform per training sample
  QFuncConfig qfunc;
};

/// Goal-conditioned reward: r when the abstract goal is reached, r - 1
/// otherwise.
float goal_reward(float r, int abstract_next, int goal);

double epsilon_at(const AgentConfig& cfg, int env_step, int total_steps);

/// Abstract-state source for the goal loop; implementations may look at the
/// observation only (learned classifier) or at the scene (oracle).
class GoalChecker {
 public:
  virtual ~GoalChecker() = default;
  virtual int classify(const Observation& obs, const SceneState& scene) = 0;
};

class LearnedChecker : public GoalChecker {
 public:
  explicit LearnedChecker(AbstractorModel* model) : model_(model) {}
  int classify(const Observation& obs, const SceneState&) override {
    return model_->classify(obs).first;
  }

 private:
  AbstractorModel* model_;
};

class OracleChecker : public GoalChecker {
 public:
  explicit OracleChecker(std::shared_ptr<const TaskSpec> task) : oracle_(std::move(task)) {}
  int classify(const Observation&, const SceneState& scene) override {
    return oracle_.classify_scene(scene);
  }

 private:
  OracleAbstractor oracle_;
};

enum class LeoStatus { next_goal, reset, success };

struct LeoStepOutcome {
  Transition t;
  LeoStatus status = LeoStatus::reset;
  float env_reward = 0.0f;
  bool env_done = false;
};

/// One environment episode under the goal-progression protocol: the goal is
/// always the next abstract state; a missed goal ends the episode.
class LeoEpisode {
 public:
  LeoEpisode(std::shared_ptr<const TaskSpec> task, GoalChecker* checker, bool done_on_subgoal);

  void begin(uint64_t seed);
  LeoStepOutcome step_action(const Action& a);

  bool active() const { return active_; }
  int goal() const { return goal_; }
  const Observation& obs() const { return obs_; }
  const SceneState& scene() const { return scene_; }
  SceneState& scene_mutable() { return scene_; }
  int initial_abstract() const { return initial_abstract_; }
  void adopt(SceneState scene, int goal);

 private:
  std::shared_ptr<const TaskSpec> task_;
  GoalChecker* checker_;
  bool done_on_subgoal_;
  SceneState scene_;
  Observation obs_;
  int goal_ = -1;
  int initial_abstract_ = -1;
  bool active_ = false;
};

// --- factored margin losses -------------------------------------------------

/// Strict margin over the position head: every non-expert entry of the two
/// maps whose value plus the margin strictly exceeds the expert entry
/// contributes; the loss is the mean violation. grad (optional, same layout
/// as maps) receives d(loss)/d(entry).
double strict_margin_position(const std::vector<float>& maps, int w, int expert_map, int ex,
                              int ey, double margin, std::vector<float>* grad);
double strict_margin_rotation(const std::vector<float>& vals, int expert_theta, double margin,
                              std::vector<float>* grad);

/// Classic large-margin loss: single largest violation.
double dqfd_margin_position(const std::vector<float>& maps, int w, int expert_map, int ex, int ey,
                            double margin);
double dqfd_margin_rotation(const std::vector<float>& vals, int expert_theta, double margin);

// --- learner ----------------------------------------------------------------

struct LossReport {
  float loss_xy = 0.0f;
  float loss_theta = 0.0f;
  float loss_margin = 0.0f;
};

std::vector<float> td_target(const TaskSpec& task, const AgentConfig& cfg,
                             const std::vector<Transition>& batch, QHeads<float>& target,
                             int group_override = 0);

/// One gradient step on both heads; margin terms only on expert samples and
/// only for the margin-based algorithms. Training uses a random dihedral
/// transform per sample (the maps are symmetrized at selection time), so the
/// rng drives the augmentation draws. Target sync is the caller's job.
LossReport agent_update(const TaskSpec& task, const AgentConfig& cfg,
                        const std::vector<Transition>& batch, QHeads<float>& online,
                        QHeads<float>& target, nn::Adam<float>& opt, Rng& rng);

/// Top-level goal proposer for the hierarchical baseline: a small conv
/// encoder with a Q-value per abstract goal.
class HdqnTop {
 public:
  HdqnTop() = default;
  HdqnTop(const GridSpec& grid, int n_goals, uint64_t seed);

  nn::Tensor<float> forward(const nn::Tensor<float>& img);
  void backward(const nn::Tensor<float>& dq);
  std::vector<nn::ParamRef<float>> params();
  void copy_from(HdqnTop& other);
  int n_goals() const { return n_goals_; }

 private:
  GridSpec grid_;
  int n_goals_ = 0;
  nn::Conv2d<float> c1_, c2_, c3_;
  nn::MaxPool2<float> p1_, p2_, p3_;
  nn::LeakyReLU<float> a1_, a2_, a3_, a4_;
  nn::Dense<float> fc1_, fc2_;
  int pooled_side_ = 0;
};

struct HdqnTopTransition {
  ObsCompact s;
  int goal = 0;
  ObsCompact s_next;
  float reward = 0.0f;
  bool done = false;
};

float hdqn_top_reward(Algo mode, float env_reward_sum, bool bottom_achieved);

float hdqn_top_update(const TaskSpec& task, const AgentConfig& cfg,
                      const std::vector<HdqnTopTransition>& batch, HdqnTop& online,
                      HdqnTop& target, nn::Adam<float>& opt);

/// Greedy evaluation episodes; success means the environment reward 1.0 was
/// collected before the step limit.
double evaluate(const std::shared_ptr<const TaskSpec>& task, const AgentConfig& cfg,
                QHeads<float>& heads, GoalChecker* checker, HdqnTop* top, int n_eval,
                uint64_t seed);

}  // namespace leo
