#include "leo/agents.hpp"

#include <cstring>

namespace leo {

Algo algo_from_name(const std::string& name) {
  if (name == "dqn") return Algo::dqn;
  if (name == "sdqfd") return Algo::sdqfd;
  if (name == "leo-dqn") return Algo::leo_dqn;
  if (name == "leo-sdqfd") return Algo::leo_sdqfd;
  if (name == "hdqn-orig") return Algo::hdqn_orig;
  if (name == "hdqn-mod") return Algo::hdqn_mod;
  throw std::runtime_error("agents: unknown algorithm '" + name + "'");
}

std::string algo_name(Algo a) {
  switch (a) {
    case Algo::dqn: return "dqn";
    case Algo::sdqfd: return "sdqfd";
    case Algo::leo_dqn: return "leo-dqn";
    case Algo::leo_sdqfd: return "leo-sdqfd";
    case Algo::hdqn_orig: return "hdqn-orig";
    case Algo::hdqn_mod: return "hdqn-mod";
  }
  return "?";
}

float goal_reward(float r, int abstract_next, int goal) {
  return abstract_next == goal ? r : r - 1.0f;
}

double epsilon_at(const AgentConfig& cfg, int env_step, int total_steps) {
  double horizon = std::max(1.0, cfg.eps_decay_frac * total_steps);
  double eps = cfg.eps_start - (cfg.eps_start - cfg.eps_floor) * (env_step / horizon);
  return std::max(eps, cfg.eps_floor);
}

// --- LEO episode wrapper -----------------------------------------------------

LeoEpisode::LeoEpisode(std::shared_ptr<const TaskSpec> task, GoalChecker* checker,
                       bool done_on_subgoal)
    : task_(std::move(task)), checker_(checker), done_on_subgoal_(done_on_subgoal) {}

void LeoEpisode::begin(uint64_t seed) {
  // reset immediately when the classifier reports the structure complete;
  // past the retry budget assume the scatter stage (a degenerate classifier
  // must not wedge the collector)
  const int max_attempts = 20;
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    scene_ = reset_scene(task_, derive_seed(seed, 0x1e0, attempt));
    obs_ = observe(scene_);
    initial_abstract_ = checker_->classify(obs_, scene_);
    if (initial_abstract_ > 0) break;
    if (attempt == max_attempts - 1) initial_abstract_ = 2 * task_->n_blocks() - 2;
  }
  goal_ = initial_abstract_ - 1;
  active_ = true;
}

void LeoEpisode::adopt(SceneState scene, int goal) {
  scene_ = std::move(scene);
  obs_ = observe(scene_);
  goal_ = goal;
  initial_abstract_ = goal + 1;
  active_ = true;
}

LeoStepOutcome LeoEpisode::step_action(const Action& a) {
  if (!active_) throw std::runtime_error("agents: step on an inactive goal episode");
  LeoStepOutcome out;
  Observation before = obs_;
  auto res = step(scene_, a);
  int abstract_next = checker_->classify(res.obs, scene_);

  out.env_reward = res.reward;
  out.env_done = res.done;

  Transition& t = out.t;
  t.s = compress_obs(*task_, before);
  t.a = a;
  t.s_next = compress_obs(*task_, res.obs);
  t.goal = goal_;
  t.reward = goal_reward(res.reward, abstract_next, goal_);
  t.is_expert = false;

  const bool achieved = abstract_next == goal_;
  if (achieved && goal_ == 0) {
    out.status = LeoStatus::success;
    t.done = true;
    t.goal_next = 0;
    active_ = false;
  } else if (achieved) {
    out.status = LeoStatus::next_goal;
    t.done = done_on_subgoal_;
    t.goal_next = goal_ - 1;
    goal_ -= 1;
    obs_ = res.obs;
    if (res.done) {  // environment ended the episode on its own
      t.done = true;
      active_ = false;
    }
  } else {
    out.status = LeoStatus::reset;
    t.done = true;
    t.goal_next = goal_;
    active_ = false;
  }
  return out;
}

// --- factored margin losses --------------------------------------------------

double strict_margin_position(const std::vector<float>& maps, int w, int expert_map, int ex,
                              int ey, double margin, std::vector<float>* grad) {
  const size_t n = (size_t)2 * w * w;
  const size_t eidx = (size_t)expert_map * w * w + (size_t)ey * w + ex;
  const double qe = maps[eidx];
  size_t count = 0;
  double sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (i == eidx) continue;
    double v = maps[i] + margin;
    if (v > qe) {
      ++count;
      sum += v - qe;
    }
  }
  if (count == 0) return 0.0;
  if (grad) {
    grad->assign(n, 0.0f);
    const float unit = (float)(1.0 / (double)count);
    for (size_t i = 0; i < n; ++i) {
      if (i == eidx) continue;
      if (maps[i] + margin > qe) (*grad)[i] += unit;
    }
    (*grad)[eidx] -= 1.0f;
  }
  return sum / (double)count;
}

double strict_margin_rotation(const std::vector<float>& vals, int expert_theta, double margin,
                              std::vector<float>* grad) {
  const double qe = vals[expert_theta];
  size_t count = 0;
  double sum = 0.0;
  for (size_t i = 0; i < vals.size(); ++i) {
    if ((int)i == expert_theta) continue;
    double v = vals[i] + margin;
    if (v > qe) {
      ++count;
      sum += v - qe;
    }
  }
  if (count == 0) return 0.0;
  if (grad) {
    grad->assign(vals.size(), 0.0f);
    const float unit = (float)(1.0 / (double)count);
    for (size_t i = 0; i < vals.size(); ++i) {
      if ((int)i == expert_theta) continue;
      if (vals[i] + margin > qe) (*grad)[i] += unit;
    }
    (*grad)[expert_theta] -= 1.0f;
  }
  return sum / (double)count;
}

double dqfd_margin_position(const std::vector<float>& maps, int w, int expert_map, int ex, int ey,
                            double margin) {
  const size_t eidx = (size_t)expert_map * w * w + (size_t)ey * w + ex;
  const double qe = maps[eidx];
  double best = qe;  // the expert action itself carries zero penalty
  for (size_t i = 0; i < maps.size(); ++i) {
    if (i == eidx) continue;
    best = std::max(best, (double)maps[i] + margin);
  }
  return best - qe;
}

double dqfd_margin_rotation(const std::vector<float>& vals, int expert_theta, double margin) {
  const double qe = vals[expert_theta];
  double best = qe;
  for (size_t i = 0; i < vals.size(); ++i) {
    if ((int)i == expert_theta) continue;
    best = std::max(best, (double)vals[i] + margin);
  }
  return best - qe;
}

// --- batch assembly ----------------------------------------------------------

namespace {

struct Assembled {
  nn::Tensor<float> img, inhand, goal, patch;
  std::vector<int> holding;
};

Assembled assemble_states(const TaskSpec& task, const std::vector<Transition>& batch,
                          bool next_state, int goal_dim) {
  const GridSpec& g = task.grid;
  const int n = (int)batch.size();
  Assembled a;
  a.img.resize(n, 1, g.w, g.w);
  a.inhand.resize(n, 1, g.h_patch, g.h_patch);
  a.goal.resize(n, goal_dim, 1, 1);
  a.holding.resize(n);
  for (int i = 0; i < n; ++i) {
    const ObsCompact& c = next_state ? batch[i].s_next : batch[i].s;
    Observation o = expand_obs(task, c);
    std::memcpy(a.img.image(i), o.topdown.data(), sizeof(float) * o.topdown.size());
    std::memcpy(a.inhand.image(i), o.inhand.data(), sizeof(float) * o.inhand.size());
    a.holding[i] = o.holding ? 1 : 0;
    int goal = next_state ? batch[i].goal_next : batch[i].goal;
    if (goal_dim > 0 && goal >= 0 && goal < goal_dim) a.goal.v[(size_t)i * goal_dim + goal] = 1.0f;
  }
  if (!next_state) {
    a.patch.resize(n, 1, g.h_patch, g.h_patch);
    std::vector<float> img((size_t)g.w * g.w);
    for (int i = 0; i < n; ++i) {
      const float* src = a.img.image(i);
      std::copy(src, src + img.size(), img.begin());
      extract_patch(img.data(), g.w, batch[i].a.x, batch[i].a.y, g.h_patch, a.patch.image(i));
    }
  }
  return a;
}

}  // namespace

std::vector<float> td_target(const TaskSpec& task, const AgentConfig& cfg,
                             const std::vector<Transition>& batch, QHeads<float>& target,
                             int group_override) {
  const int n = (int)batch.size();
  const int goal_dim = target.qxy.goal_dim();
  auto next = assemble_states(task, batch, true, goal_dim);
  auto maps = target.qxy.forward(next.img, next.inhand, next.holding, next.goal, group_override);
  const int w = task.grid.w;
  std::vector<float> y(n);
  for (int i = 0; i < n; ++i) {
    if (batch[i].done) {
      y[i] = batch[i].reward;
      continue;
    }
    const int map_idx = next.holding[i] ? 1 : 0;
    const float* m = maps.image(i) + (size_t)map_idx * w * w;
    float best = m[0];
    for (int p = 1; p < w * w; ++p) best = std::max(best, m[p]);
    y[i] = batch[i].reward + (float)cfg.gamma * best;
  }
  return y;
}

namespace {

ObsCompact transform_obs_compact(const GridSpec& g, int gi, const ObsCompact& c) {
  ObsCompact out = c;
  dihedral_apply_square<uint8_t>(g.w, gi, c.layers.data(), out.layers.data());
  return out;
}

Action transform_action(const GridSpec& g, int gi, const Action& a) {
  Action out = a;
  dihedral_apply_cell(g.w, gi, a.x, a.y, out.x, out.y);
  int th = gi >= 4 ? -a.theta : a.theta;
  int m = (th + (gi % 4) * (g.r / 4)) % g.r;
  out.theta = m < 0 ? m + g.r : m;
  return out;
}

}  // namespace

LossReport agent_update(const TaskSpec& task, const AgentConfig& cfg,
                        const std::vector<Transition>& in_batch, QHeads<float>& online,
                        QHeads<float>& target, nn::Adam<float>& opt, Rng& rng) {
  const int n = (int)in_batch.size();
  const int w = task.grid.w;
  const int goal_dim = online.qxy.goal_dim();
  const bool margin_on = algo_margin(cfg.algo);

  // one random symmetry per sample; the learned map is deployed through the
  // group-averaged forward, so orientations share experience either way
  const bool augment = cfg.train_augment && cfg.qfunc.group > 1 && task.grid.r % 4 == 0;
  const int fwd_group = augment ? 1 : 0;
  std::vector<Transition> batch = in_batch;
  if (augment) {
    for (auto& t : batch) {
      int gi = rng.uniform_int(0, cfg.qfunc.group - 1);
      if (gi == 0) continue;
      t.s = transform_obs_compact(task.grid, gi, t.s);
      t.s_next = transform_obs_compact(task.grid, gi, t.s_next);
      t.a = transform_action(task.grid, gi, t.a);
    }
  }

  auto y = td_target(task, cfg, batch, target, fwd_group);
  auto cur = assemble_states(task, batch, false, goal_dim);

  int n_expert = 0;
  for (const auto& t : batch) n_expert += t.is_expert ? 1 : 0;

  LossReport rep;
  opt.zero_grad();

  // position head
  auto maps = online.qxy.forward(cur.img, cur.inhand, cur.holding, cur.goal, fwd_group);
  nn::Tensor<float> dmaps(n, 2, w, w);
  double margin_total = 0.0;
  for (int i = 0; i < n; ++i) {
    const int map_idx = batch[i].a.p == Verb::pick ? 0 : 1;
    const size_t idx = (size_t)map_idx * w * w + (size_t)batch[i].a.y * w + batch[i].a.x;
    float q = maps.image(i)[idx];
    float d;
    rep.loss_xy += nn::huber(q - y[i], &d) / n;
    dmaps.image(i)[idx] += d / n;

    if (margin_on && batch[i].is_expert && n_expert > 0) {
      std::vector<float> m(maps.image(i), maps.image(i) + (size_t)2 * w * w);
      std::vector<float> grad;
      double sm = strict_margin_position(m, w, map_idx, batch[i].a.x, batch[i].a.y, cfg.margin,
                                         &grad);
      margin_total += sm;
      if (!grad.empty()) {
        const float scale = (float)(cfg.margin_weight / n_expert);
        float* dst = dmaps.image(i);
        for (size_t k = 0; k < grad.size(); ++k) dst[k] += grad[k] * scale;
      }
    }
  }
  online.qxy.backward(dmaps);

  // rotation head
  auto vals = online.qtheta.forward(cur.inhand, cur.patch, cur.holding, cur.goal);
  nn::Tensor<float> dvals(n, task.grid.r, 1, 1);
  for (int i = 0; i < n; ++i) {
    const int th = batch[i].a.theta % task.grid.r;
    float q = vals.v[(size_t)i * task.grid.r + th];
    float d;
    rep.loss_theta += nn::huber(q - y[i], &d) / n;
    dvals.v[(size_t)i * task.grid.r + th] += d / n;

    if (margin_on && batch[i].is_expert && n_expert > 0) {
      std::vector<float> row(vals.v.begin() + (size_t)i * task.grid.r,
                             vals.v.begin() + (size_t)(i + 1) * task.grid.r);
      std::vector<float> grad;
      double sm = strict_margin_rotation(row, th, cfg.margin, &grad);
      margin_total += sm;
      if (!grad.empty()) {
        const float scale = (float)(cfg.margin_weight / n_expert);
        for (int k = 0; k < task.grid.r; ++k)
          dvals.v[(size_t)i * task.grid.r + k] += grad[k] * scale;
      }
    }
  }
  online.qtheta.backward(dvals);

  if (margin_on && n_expert > 0) rep.loss_margin = (float)(margin_total / n_expert);
  opt.step();
  return rep;
}

// --- hierarchical top level ---------------------------------------------------

HdqnTop::HdqnTop(const GridSpec& grid, int n_goals, uint64_t seed)
    : grid_(grid), n_goals_(n_goals) {
  Rng rng(derive_seed(seed, 0x70b));
  c1_ = nn::Conv2d<float>("top.c1", 1, 8, 3, rng);
  c2_ = nn::Conv2d<float>("top.c2", 8, 12, 3, rng);
  c3_ = nn::Conv2d<float>("top.c3", 12, 12, 3, rng);
  fc1_ = nn::Dense<float>("top.fc1", 12, 32, rng);
  fc2_ = nn::Dense<float>("top.fc2", 32, n_goals, rng);
}

nn::Tensor<float> HdqnTop::forward(const nn::Tensor<float>& img) {
  auto t = p1_.forward(a1_.forward(c1_.forward(img)));
  t = p2_.forward(a2_.forward(c2_.forward(t)));
  t = p3_.forward(a3_.forward(c3_.forward(t)));
  pooled_side_ = t.h;
  const int n = t.n;
  const int c = t.c;
  nn::Tensor<float> pooled(n, c, 1, 1);
  const int hw = t.h * t.w;
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      float acc = 0.0f;
      const float* plane = t.image(i) + (size_t)ch * hw;
      for (int p = 0; p < hw; ++p) acc += plane[p];
      pooled.v[(size_t)i * c + ch] = acc / hw;
    }
  return fc2_.forward(a4_.forward(fc1_.forward(pooled)));
}

void HdqnTop::backward(const nn::Tensor<float>& dq) {
  auto dpool = fc1_.backward(a4_.backward(fc2_.backward(dq)));
  const int c = dpool.c;
  const int side = pooled_side_;
  const int hw = side * side;
  nn::Tensor<float> dt(dpool.n, c, side, side);
  for (int i = 0; i < dpool.n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      float g = dpool.v[(size_t)i * c + ch] / hw;
      float* plane = dt.image(i) + (size_t)ch * hw;
      std::fill(plane, plane + hw, g);
    }
  auto d3 = c3_.backward(a3_.backward(p3_.backward(dt)));
  auto d2 = c2_.backward(a2_.backward(p2_.backward(d3)));
  c1_.backward(a1_.backward(p1_.backward(d2)));
}

std::vector<nn::ParamRef<float>> HdqnTop::params() {
  std::vector<nn::ParamRef<float>> out;
  c1_.params(out);
  c2_.params(out);
  c3_.params(out);
  fc1_.params(out);
  fc2_.params(out);
  return out;
}

void HdqnTop::copy_from(HdqnTop& other) {
  auto dst = params();
  auto src = other.params();
  for (size_t i = 0; i < dst.size(); ++i) *dst[i].value = *src[i].value;
}

float hdqn_top_reward(Algo mode, float env_reward_sum, bool bottom_achieved) {
  if (mode == Algo::hdqn_mod) return env_reward_sum + (bottom_achieved ? 0.0f : -1.0f);
  return env_reward_sum;
}

float hdqn_top_update(const TaskSpec& task, const AgentConfig& cfg,
                      const std::vector<HdqnTopTransition>& batch, HdqnTop& online,
                      HdqnTop& target, nn::Adam<float>& opt) {
  const int n = (int)batch.size();
  const GridSpec& g = task.grid;
  nn::Tensor<float> img(n, 1, g.w, g.w), img2(n, 1, g.w, g.w);
  for (int i = 0; i < n; ++i) {
    Observation s = expand_obs(task, batch[i].s);
    Observation s2 = expand_obs(task, batch[i].s_next);
    std::memcpy(img.image(i), s.topdown.data(), sizeof(float) * s.topdown.size());
    std::memcpy(img2.image(i), s2.topdown.data(), sizeof(float) * s2.topdown.size());
  }
  auto qn = target.forward(img2);
  std::vector<float> y(n);
  const int ng = online.n_goals();
  for (int i = 0; i < n; ++i) {
    float best = qn.v[(size_t)i * ng];
    for (int k = 1; k < ng; ++k) best = std::max(best, qn.v[(size_t)i * ng + k]);
    y[i] = batch[i].reward + (batch[i].done ? 0.0f : (float)cfg.gamma * best);
  }
  auto q = online.forward(img);
  nn::Tensor<float> dq(n, ng, 1, 1);
  float loss = 0.0f;
  for (int i = 0; i < n; ++i) {
    float v = q.v[(size_t)i * ng + batch[i].goal];
    float d;
    loss += nn::huber(v - y[i], &d) / n;
    dq.v[(size_t)i * ng + batch[i].goal] = d / n;
  }
  opt.zero_grad();
  online.backward(dq);
  opt.step();
  return loss;
}

// --- evaluation ----------------------------------------------------------------

double evaluate(const std::shared_ptr<const TaskSpec>& task, const AgentConfig& cfg,
                QHeads<float>& heads, GoalChecker* checker, HdqnTop* top, int n_eval,
                uint64_t seed) {
  if (n_eval <= 0) throw std::runtime_error("agents: n_eval must be positive");
  Rng rng(derive_seed(seed, 0xe7a1));
  int successes = 0;

  for (int ep = 0; ep < n_eval; ++ep) {
    uint64_t ep_seed = derive_seed(seed, 0xe7a2, ep);
    if (algo_hierarchical(cfg.algo)) {
      SceneState scene = reset_scene(task, ep_seed);
      Observation obs = observe(scene);
      bool success = false;
      while (true) {
        // top proposes a goal greedily
        nn::Tensor<float> img(1, 1, task->grid.w, task->grid.w);
        std::memcpy(img.data(), obs.topdown.data(), sizeof(float) * obs.topdown.size());
        auto q = top->forward(img);
        int goal = 0;
        for (int k = 1; k < top->n_goals(); ++k)
          if (q.v[k] > q.v[goal]) goal = k;
        bool done = false;
        for (int t = 0; t < cfg.t_low && !done; ++t) {
          Action a = select_action(heads, obs, goal, 0.0, rng);
          auto res = step(scene, a);
          obs = res.obs;
          done = res.done;
          if (res.reward >= 1.0f) success = true;
          if (checker->classify(obs, scene) == goal) break;
        }
        if (done || success) break;
      }
      successes += success ? 1 : 0;
    } else if (algo_goal_conditioned(cfg.algo)) {
      LeoEpisode episode(task, checker, cfg.done_on_subgoal);
      episode.begin(ep_seed);
      bool success = false;
      while (episode.active()) {
        Action a = select_action(heads, episode.obs(), episode.goal(), 0.0, rng);
        auto out = episode.step_action(a);
        if (out.env_reward >= 1.0f) success = true;
        if (out.status != LeoStatus::next_goal) break;
      }
      successes += success ? 1 : 0;
    } else {
      SceneState scene = reset_scene(task, ep_seed);
      Observation obs = observe(scene);
      bool success = false;
      while (true) {
        Action a = select_action(heads, obs, -1, 0.0, rng);
        auto res = step(scene, a);
        obs = res.obs;
        if (res.reward >= 1.0f) success = true;
        if (res.done) break;
      }
      successes += success ? 1 : 0;
    }
  }
  return (double)successes / n_eval;
}

}  // namespace leo
