#include "leo/harness.hpp"

#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <sstream>

#include "leo/checkpoint.hpp"

namespace leo {

namespace {

namespace fs = std::filesystem;

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(8) << v;
  return os.str();
}

// --- per-environment collection state ---------------------------------------

struct EnvSlot {
  std::unique_ptr<LeoEpisode> leo;
  SceneState scene;
  Observation obs;
  bool plain_active = false;
  int64_t episode_counter = 0;
  // hierarchical option state
  int option_goal = -1;
  int option_steps = 0;
  float option_reward_sum = 0.0f;
  bool option_achieved = false;
  ObsCompact option_start;
};

struct RunContext {
  ExperimentConfig cfg;
  uint64_t seed = 0;
  uint64_t cfg_hash = 0;
  std::shared_ptr<const TaskSpec> task;
  int goal_dim = 0;

  std::unique_ptr<AbstractorModel> abstractor;
  std::unique_ptr<GoalChecker> checker;

  QHeads<float> online, target;
  std::unique_ptr<nn::Adam<float>> opt;

  std::unique_ptr<HdqnTop> top, top_target;
  std::unique_ptr<nn::Adam<float>> top_opt;
  std::vector<HdqnTopTransition> top_buffer;
  size_t top_next = 0;
  bool top_full = false;

  ReplayBuffer buffer{100000, 1.0 / 8.0};
  std::vector<EnvSlot> envs;

  Rng collect_rng, sample_rng, top_rng, aug_rng;
  int env_step = 0;
  int64_t learner_steps = 0;
  int64_t top_learner_steps = 0;
  double acc_xy = 0, acc_th = 0, acc_margin = 0;
  int64_t acc_n = 0;
  double wall_base = 0;
  std::vector<MetricsRow> rows;
};

uint64_t episode_seed(const RunContext& rc, int slot, int64_t counter) {
  return derive_seed(rc.seed ^ 0xE915ULL, (uint64_t)slot, (uint64_t)counter);
}

void ensure_episode(RunContext& rc, int slot_idx) {
  EnvSlot& slot = rc.envs[slot_idx];
  const bool goal_cond = algo_goal_conditioned(rc.cfg.agent.algo);
  const bool hier = algo_hierarchical(rc.cfg.agent.algo);
  if (goal_cond && !hier) {
    if (!slot.leo->active()) {
      slot.episode_counter += 1;
      slot.leo->begin(episode_seed(rc, slot_idx, slot.episode_counter));
    }
  } else {
    if (!slot.plain_active) {
      slot.episode_counter += 1;
      slot.scene = reset_scene(rc.task, episode_seed(rc, slot_idx, slot.episode_counter));
      slot.obs = observe(slot.scene);
      slot.plain_active = true;
      slot.option_goal = -1;
    }
  }
}

void push_top_transition(RunContext& rc, const HdqnTopTransition& t) {
  const size_t cap = std::max<size_t>(1024, rc.cfg.agent.replay_capacity / 10);
  if (rc.top_buffer.size() < cap) {
    rc.top_buffer.push_back(t);
  } else {
    rc.top_buffer[rc.top_next] = t;
    rc.top_next = (rc.top_next + 1) % cap;
    rc.top_full = true;
  }
}

void collect_step(RunContext& rc) {
  const int slot_idx = rc.env_step % rc.cfg.n_parallel_envs;
  EnvSlot& slot = rc.envs[slot_idx];
  const int total = rc.cfg.resolved_total_steps();
  const double eps = epsilon_at(rc.cfg.agent, rc.env_step, total);
  const Algo algo = rc.cfg.agent.algo;

  ensure_episode(rc, slot_idx);

  if (algo_hierarchical(algo)) {
    if (slot.option_goal < 0) {
      const int n_goals = rc.task->goal_space_size();
      if (rc.env_step < rc.cfg.agent.hdqn_warmup) {
        slot.option_goal = rc.top_rng.uniform_int(0, n_goals - 1);
      } else if (rc.top_rng.uniform01() < eps) {
        slot.option_goal = rc.top_rng.uniform_int(0, n_goals - 1);
      } else {
        nn::Tensor<float> img(1, 1, rc.task->grid.w, rc.task->grid.w);
        std::memcpy(img.data(), slot.obs.topdown.data(), sizeof(float) * img.size());
        auto q = rc.top->forward(img);
        int best = 0;
        for (int k = 1; k < n_goals; ++k)
          if (q.v[k] > q.v[best]) best = k;
        slot.option_goal = best;
      }
      slot.option_steps = 0;
      slot.option_reward_sum = 0.0f;
      slot.option_achieved = false;
      slot.option_start = compress_obs(*rc.task, slot.obs);
    }

    Action a = select_action(rc.online, slot.obs, slot.option_goal, eps, rc.collect_rng);
    Observation before = slot.obs;
    auto res = step(slot.scene, a);
    int abstract_next = rc.checker->classify(res.obs, slot.scene);
    const bool achieved = abstract_next == slot.option_goal;

    Transition t;
    t.s = compress_obs(*rc.task, before);
    t.a = a;
    t.s_next = compress_obs(*rc.task, res.obs);
    t.goal = slot.option_goal;
    t.goal_next = slot.option_goal;
    t.reward = goal_reward(res.reward, abstract_next, slot.option_goal);
    slot.option_steps += 1;
    slot.option_reward_sum += res.reward;
    const bool option_end = achieved || slot.option_steps >= rc.cfg.agent.t_low || res.done;
    t.done = achieved || option_end;
    rc.buffer.push(t);

    slot.obs = res.obs;
    if (option_end) {
      slot.option_achieved = achieved;
      HdqnTopTransition tt;
      tt.s = slot.option_start;
      tt.goal = slot.option_goal;
      tt.s_next = compress_obs(*rc.task, res.obs);
      tt.reward = hdqn_top_reward(algo, slot.option_reward_sum, achieved);
      tt.done = res.done;
      push_top_transition(rc, tt);
      slot.option_goal = -1;
    }
    if (res.done) slot.plain_active = false;
  } else if (algo_goal_conditioned(algo)) {
    Action a = select_action(rc.online, slot.leo->obs(), slot.leo->goal(), eps, rc.collect_rng);
    auto out = slot.leo->step_action(a);
    rc.buffer.push(out.t);
  } else {
    Action a = select_action(rc.online, slot.obs, -1, eps, rc.collect_rng);
    Observation before = slot.obs;
    auto res = step(slot.scene, a);
    Transition t;
    t.s = compress_obs(*rc.task, before);
    t.a = a;
    t.s_next = compress_obs(*rc.task, res.obs);
    t.goal = -1;
    t.goal_next = -1;
    t.reward = res.reward;
    t.done = res.done;
    rc.buffer.push(t);
    slot.obs = res.obs;
    if (res.done) slot.plain_active = false;
  }
}

void learner_step(RunContext& rc) {
  if (rc.buffer.size() < (size_t)rc.cfg.agent.batch) return;
  for (int k = 0; k < rc.cfg.train_ratio; ++k) {
    auto batch = rc.buffer.sample(rc.cfg.agent.batch, rc.sample_rng);
    auto rep = agent_update(*rc.task, rc.cfg.agent, batch, rc.online, rc.target, *rc.opt,
                            rc.aug_rng);
    rc.acc_xy += rep.loss_xy;
    rc.acc_th += rep.loss_theta;
    rc.acc_margin += rep.loss_margin;
    rc.acc_n += 1;
    rc.learner_steps += 1;
    if (rc.learner_steps % rc.cfg.agent.target_update_period == 0)
      rc.target.copy_from(rc.online);

    if (algo_hierarchical(rc.cfg.agent.algo) && rc.env_step >= rc.cfg.agent.hdqn_warmup &&
        rc.top_buffer.size() >= (size_t)rc.cfg.agent.batch) {
      std::vector<HdqnTopTransition> tb;
      for (int i = 0; i < rc.cfg.agent.batch; ++i)
        tb.push_back(rc.top_buffer[rc.sample_rng.uniform_int(0, (int)rc.top_buffer.size() - 1)]);
      hdqn_top_update(*rc.task, rc.cfg.agent, tb, *rc.top, *rc.top_target, *rc.top_opt);
      rc.top_learner_steps += 1;
      if (rc.top_learner_steps % rc.cfg.agent.target_update_period == 0)
        rc.top_target->copy_from(*rc.top);
    }
  }
}

// --- run checkpointing --------------------------------------------------------

void write_obs_compact(std::ostream& os, const ObsCompact& c) {
  ckpt::write_u64(os, c.layers.size());
  os.write((const char*)c.layers.data(), (std::streamsize)c.layers.size());
  ckpt::write_i32(os, c.held_kind);
}

ObsCompact read_obs_compact(std::istream& is) {
  ObsCompact c;
  c.layers.resize(ckpt::read_u64(is));
  is.read((char*)c.layers.data(), (std::streamsize)c.layers.size());
  c.held_kind = (int8_t)ckpt::read_i32(is);
  return c;
}

void write_transition(std::ostream& os, const Transition& t) {
  write_obs_compact(os, t.s);
  write_obs_compact(os, t.s_next);
  ckpt::write_i32(os, t.a.p == Verb::pick ? 0 : 1);
  ckpt::write_i32(os, t.a.x);
  ckpt::write_i32(os, t.a.y);
  ckpt::write_i32(os, t.a.theta);
  ckpt::write_f64(os, t.reward);
  ckpt::write_i32(os, t.goal);
  ckpt::write_i32(os, t.goal_next);
  ckpt::write_i32(os, t.done ? 1 : 0);
  ckpt::write_i32(os, t.is_expert ? 1 : 0);
}

Transition read_transition(std::istream& is) {
  Transition t;
  t.s = read_obs_compact(is);
  t.s_next = read_obs_compact(is);
  t.a.p = ckpt::read_i32(is) == 0 ? Verb::pick : Verb::place;
  t.a.x = ckpt::read_i32(is);
  t.a.y = ckpt::read_i32(is);
  t.a.theta = ckpt::read_i32(is);
  t.reward = (float)ckpt::read_f64(is);
  t.goal = ckpt::read_i32(is);
  t.goal_next = ckpt::read_i32(is);
  t.done = ckpt::read_i32(is) != 0;
  t.is_expert = ckpt::read_i32(is) != 0;
  return t;
}

void write_adam(std::ostream& os, nn::Adam<float>& opt) {
  ckpt::write_u64(os, (uint64_t)opt.t());
  for (auto& m : opt.moment1()) ckpt::write_vec(os, m);
  for (auto& v : opt.moment2()) ckpt::write_vec(os, v);
}

void read_adam(std::istream& is, nn::Adam<float>& opt) {
  opt.set_t((int64_t)ckpt::read_u64(is));
  for (auto& m : opt.moment1()) ckpt::read_vec(is, m);
  for (auto& v : opt.moment2()) ckpt::read_vec(is, v);
}

void save_run_checkpoint(const std::string& path, RunContext& rc) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("harness: cannot write checkpoint '" + path + "'");
  ckpt::write_magic(os, "run");
  ckpt::write_str(os, serialize_config(rc.cfg));
  ckpt::write_u64(os, rc.cfg_hash);
  ckpt::write_u64(os, rc.seed);
  ckpt::write_i32(os, rc.env_step);
  ckpt::write_u64(os, (uint64_t)rc.learner_steps);
  ckpt::write_u64(os, (uint64_t)rc.top_learner_steps);
  ckpt::write_params(os, rc.online.params());
  ckpt::write_params(os, rc.target.params());
  write_adam(os, *rc.opt);
  ckpt::write_i32(os, rc.top ? 1 : 0);
  if (rc.top) {
    ckpt::write_params(os, rc.top->params());
    ckpt::write_params(os, rc.top_target->params());
    write_adam(os, *rc.top_opt);
    ckpt::write_u64(os, rc.top_buffer.size());
    for (auto& t : rc.top_buffer) {
      write_obs_compact(os, t.s);
      write_obs_compact(os, t.s_next);
      ckpt::write_i32(os, t.goal);
      ckpt::write_f64(os, t.reward);
      ckpt::write_i32(os, t.done ? 1 : 0);
    }
    ckpt::write_u64(os, rc.top_next);
    ckpt::write_i32(os, rc.top_full ? 1 : 0);
  }

  auto agent_region = rc.buffer.snapshot_agent();
  ckpt::write_u64(os, agent_region.size());
  for (auto& t : agent_region) write_transition(os, t);

  ckpt::write_str(os, rc.collect_rng.serialize());
  ckpt::write_str(os, rc.sample_rng.serialize());
  ckpt::write_str(os, rc.top_rng.serialize());
  ckpt::write_str(os, rc.aug_rng.serialize());

  ckpt::write_i32(os, (int)rc.envs.size());
  const bool goal_cond = algo_goal_conditioned(rc.cfg.agent.algo);
  const bool hier = algo_hierarchical(rc.cfg.agent.algo);
  for (auto& slot : rc.envs) {
    ckpt::write_u64(os, (uint64_t)slot.episode_counter);
    if (goal_cond && !hier) {
      ckpt::write_i32(os, slot.leo->active() ? 1 : 0);
      if (slot.leo->active()) {
        ckpt::write_str(os, scene_to_text(slot.leo->scene()));
        ckpt::write_i32(os, slot.leo->goal());
      }
    } else {
      ckpt::write_i32(os, slot.plain_active ? 1 : 0);
      if (slot.plain_active) {
        ckpt::write_str(os, scene_to_text(slot.scene));
        ckpt::write_i32(os, slot.option_goal);
        ckpt::write_i32(os, slot.option_steps);
        ckpt::write_f64(os, slot.option_reward_sum);
        ckpt::write_i32(os, slot.option_achieved ? 1 : 0);
        write_obs_compact(os, slot.option_start);
      }
    }
  }

  ckpt::write_f64(os, rc.acc_xy);
  ckpt::write_f64(os, rc.acc_th);
  ckpt::write_f64(os, rc.acc_margin);
  ckpt::write_u64(os, (uint64_t)rc.acc_n);
  ckpt::write_f64(os, rc.wall_base);
  ckpt::write_u64(os, rc.rows.size());
  for (auto& r : rc.rows) {
    ckpt::write_i32(os, r.env_step);
    ckpt::write_f64(os, r.success_rate);
    ckpt::write_f64(os, r.loss_xy);
    ckpt::write_f64(os, r.loss_theta);
    ckpt::write_f64(os, r.loss_margin);
    ckpt::write_f64(os, r.wall_time);
    ckpt::write_u64(os, r.seed);
  }
}

void load_run_checkpoint(const std::string& path, RunContext& rc, bool verify = true) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("harness: cannot open checkpoint '" + path + "'");
  ckpt::expect_magic(is, "run");
  ckpt::read_str(is);  // embedded config text
  uint64_t hash = ckpt::read_u64(is);
  if (verify && hash != rc.cfg_hash)
    throw std::runtime_error("harness: checkpoint config hash does not match this config");
  uint64_t seed = ckpt::read_u64(is);
  if (verify && seed != rc.seed) throw std::runtime_error("harness: checkpoint seed mismatch");
  rc.seed = seed;
  rc.env_step = ckpt::read_i32(is);
  rc.learner_steps = (int64_t)ckpt::read_u64(is);
  rc.top_learner_steps = (int64_t)ckpt::read_u64(is);
  ckpt::read_params(is, rc.online.params());
  ckpt::read_params(is, rc.target.params());
  read_adam(is, *rc.opt);
  int has_top = ckpt::read_i32(is);
  if (has_top) {
    ckpt::read_params(is, rc.top->params());
    ckpt::read_params(is, rc.top_target->params());
    read_adam(is, *rc.top_opt);
    rc.top_buffer.clear();
    uint64_t n = ckpt::read_u64(is);
    for (uint64_t i = 0; i < n; ++i) {
      HdqnTopTransition t;
      t.s = read_obs_compact(is);
      t.s_next = read_obs_compact(is);
      t.goal = ckpt::read_i32(is);
      t.reward = (float)ckpt::read_f64(is);
      t.done = ckpt::read_i32(is) != 0;
      rc.top_buffer.push_back(t);
    }
    rc.top_next = ckpt::read_u64(is);
    rc.top_full = ckpt::read_i32(is) != 0;
  }

  uint64_t n_agent = ckpt::read_u64(is);
  std::vector<Transition> agent_region;
  for (uint64_t i = 0; i < n_agent; ++i) agent_region.push_back(read_transition(is));
  rc.buffer.restore_agent(agent_region);

  rc.collect_rng.deserialize(ckpt::read_str(is));
  rc.sample_rng.deserialize(ckpt::read_str(is));
  rc.top_rng.deserialize(ckpt::read_str(is));
  rc.aug_rng.deserialize(ckpt::read_str(is));

  int n_envs = ckpt::read_i32(is);
  const bool goal_cond = algo_goal_conditioned(rc.cfg.agent.algo);
  const bool hier = algo_hierarchical(rc.cfg.agent.algo);
  for (int i = 0; i < n_envs; ++i) {
    EnvSlot& slot = rc.envs[i];
    slot.episode_counter = (int64_t)ckpt::read_u64(is);
    int active = ckpt::read_i32(is);
    if (goal_cond && !hier) {
      if (active) {
        SceneState sc = scene_from_text(ckpt::read_str(is), rc.task);
        int goal = ckpt::read_i32(is);
        slot.leo->adopt(std::move(sc), goal);
      }
    } else {
      slot.plain_active = active != 0;
      if (active) {
        slot.scene = scene_from_text(ckpt::read_str(is), rc.task);
        slot.obs = observe(slot.scene);
        slot.option_goal = ckpt::read_i32(is);
        slot.option_steps = ckpt::read_i32(is);
        slot.option_reward_sum = (float)ckpt::read_f64(is);
        slot.option_achieved = ckpt::read_i32(is) != 0;
        slot.option_start = read_obs_compact(is);
      }
    }
  }

  rc.acc_xy = ckpt::read_f64(is);
  rc.acc_th = ckpt::read_f64(is);
  rc.acc_margin = ckpt::read_f64(is);
  rc.acc_n = (int64_t)ckpt::read_u64(is);
  rc.wall_base = ckpt::read_f64(is);
  rc.rows.clear();
  uint64_t n_rows = ckpt::read_u64(is);
  for (uint64_t i = 0; i < n_rows; ++i) {
    MetricsRow r;
    r.env_step = ckpt::read_i32(is);
    r.success_rate = ckpt::read_f64(is);
    r.loss_xy = ckpt::read_f64(is);
    r.loss_theta = ckpt::read_f64(is);
    r.loss_margin = ckpt::read_f64(is);
    r.wall_time = ckpt::read_f64(is);
    r.seed = ckpt::read_u64(is);
    rc.rows.push_back(r);
  }
}

}  // namespace

// --- metrics ------------------------------------------------------------------

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows,
                       uint64_t cfg_hash) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("harness: cannot write metrics '" + path + "'");
  os << "# leo-metrics v1 config=" << std::hex << cfg_hash << std::dec << "\n";
  os << "env_step,success_rate,loss_xy,loss_theta,loss_margin,wall_time,seed\n";
  for (const auto& r : rows) {
    os << r.env_step << "," << format_double(r.success_rate) << "," << format_double(r.loss_xy)
       << "," << format_double(r.loss_theta) << "," << format_double(r.loss_margin) << ","
       << format_double(r.wall_time) << "," << r.seed << "\n";
  }
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("harness: cannot open metrics '" + path + "'");
  std::vector<MetricsRow> rows;
  std::string line;
  bool header_seen = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != "env_step,success_rate,loss_xy,loss_theta,loss_margin,wall_time,seed")
        throw std::runtime_error("harness: unexpected metrics header in " + path);
      header_seen = true;
      continue;
    }
    MetricsRow r;
    std::istringstream ls(line);
    char comma;
    ls >> r.env_step >> comma >> r.success_rate >> comma >> r.loss_xy >> comma >> r.loss_theta >>
        comma >> r.loss_margin >> comma >> r.wall_time >> comma >> r.seed;
    rows.push_back(r);
  }
  return rows;
}

std::vector<AggregateRow> aggregate_metrics(const std::vector<std::vector<MetricsRow>>& per_seed) {
  if (per_seed.empty()) throw std::runtime_error("harness: nothing to aggregate");
  const size_t n_rows = per_seed[0].size();
  for (const auto& s : per_seed) {
    if (s.size() != n_rows) throw std::runtime_error("harness: metrics step grids do not match");
    for (size_t i = 0; i < n_rows; ++i)
      if (s[i].env_step != per_seed[0][i].env_step)
        throw std::runtime_error("harness: metrics step grids do not match");
  }
  const int n = (int)per_seed.size();
  std::vector<AggregateRow> out;
  for (size_t i = 0; i < n_rows; ++i) {
    AggregateRow a;
    a.env_step = per_seed[0][i].env_step;
    a.n_seeds = n;
    double mean = 0;
    for (const auto& s : per_seed) mean += s[i].success_rate;
    mean /= n;
    double var = 0;
    for (const auto& s : per_seed) var += (s[i].success_rate - mean) * (s[i].success_rate - mean);
    a.success_mean = mean;
    a.success_stderr = n > 1 ? std::sqrt(var / (n - 1)) / std::sqrt((double)n) : 0.0;
    for (const auto& s : per_seed) {
      a.loss_xy_mean += s[i].loss_xy / n;
      a.loss_theta_mean += s[i].loss_theta / n;
      a.loss_margin_mean += s[i].loss_margin / n;
      a.wall_time_mean += s[i].wall_time / n;
    }
    out.push_back(a);
  }
  return out;
}

void write_aggregate_csv(const std::string& path, const std::vector<AggregateRow>& rows) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("harness: cannot write aggregate '" + path + "'");
  os << "# leo-aggregate v1\n";
  os << "env_step,success_mean,success_stderr,loss_xy_mean,loss_theta_mean,loss_margin_mean,"
        "wall_time_mean,n_seeds\n";
  for (const auto& r : rows) {
    os << r.env_step << "," << format_double(r.success_mean) << ","
       << format_double(r.success_stderr) << "," << format_double(r.loss_xy_mean) << ","
       << format_double(r.loss_theta_mean) << "," << format_double(r.loss_margin_mean) << ","
       << format_double(r.wall_time_mean) << "," << r.n_seeds << "\n";
  }
}

std::vector<AggregateRow> read_aggregate_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("harness: cannot open aggregate '" + path + "'");
  std::vector<AggregateRow> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#' || line[0] == 'e') continue;
    AggregateRow r;
    std::istringstream ls(line);
    char c;
    ls >> r.env_step >> c >> r.success_mean >> c >> r.success_stderr >> c >> r.loss_xy_mean >>
        c >> r.loss_theta_mean >> c >> r.loss_margin_mean >> c >> r.wall_time_mean >> c >>
        r.n_seeds;
    rows.push_back(r);
  }
  if (rows.empty()) throw std::runtime_error("harness: empty aggregate '" + path + "'");
  return rows;
}

void plot_curves(const std::string& out_svg, const std::vector<std::string>& labels,
                 const std::vector<std::vector<AggregateRow>>& curves) {
  if (curves.empty()) throw std::runtime_error("harness: nothing to plot");
  const int W = 860, H = 520, ml = 70, mr = 180, mt = 30, mb = 60;
  const double pw = W - ml - mr, ph = H - mt - mb;
  int max_step = 1;
  for (const auto& c : curves)
    for (const auto& r : c) max_step = std::max(max_step, r.env_step);

  const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                          "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  std::ostringstream os;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
  os << "<rect width='100%' height='100%' fill='white'/>\n";
  auto px = [&](double step) { return ml + pw * step / max_step; };
  auto py = [&](double rate) { return mt + ph * (1.0 - rate); };
  // axes and gridlines
  for (int i = 0; i <= 5; ++i) {
    double y = py(i / 5.0);
    os << "<line x1='" << ml << "' y1='" << y << "' x2='" << (ml + pw) << "' y2='" << y
       << "' stroke='#dddddd'/>\n";
    os << "<text x='" << (ml - 8) << "' y='" << (y + 4)
       << "' text-anchor='end' font-size='12'>" << (i * 20) << "%</text>\n";
  }
  for (int i = 0; i <= 5; ++i) {
    double x = px(max_step * i / 5.0);
    os << "<text x='" << x << "' y='" << (H - mb + 18) << "' text-anchor='middle' font-size='12'>"
       << (max_step * i / 5) << "</text>\n";
  }
  os << "<text x='" << (ml + pw / 2) << "' y='" << (H - 14)
     << "' text-anchor='middle' font-size='13'>environment steps</text>\n";
  os << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << (mt + ph)
     << "' stroke='black'/>\n";
  os << "<line x1='" << ml << "' y1='" << (mt + ph) << "' x2='" << (ml + pw) << "' y2='"
     << (mt + ph) << "' stroke='black'/>\n";

  for (size_t ci = 0; ci < curves.size(); ++ci) {
    const auto& rows = curves[ci];
    const char* color = colors[ci % 8];
    // stderr band
    std::ostringstream band;
    band << "<polygon fill='" << color << "' fill-opacity='0.15' stroke='none' points='";
    for (const auto& r : rows) band << px(r.env_step) << "," << py(r.success_mean + r.success_stderr) << " ";
    for (auto it = rows.rbegin(); it != rows.rend(); ++it)
      band << px(it->env_step) << "," << py(std::max(0.0, it->success_mean - it->success_stderr))
           << " ";
    band << "'/>\n";
    os << band.str();
    os << "<polyline fill='none' stroke='" << color << "' stroke-width='2' points='";
    for (const auto& r : rows) os << px(r.env_step) << "," << py(r.success_mean) << " ";
    os << "'/>\n";
    os << "<rect x='" << (W - mr + 10) << "' y='" << (mt + 18 * ci) << "' width='12' height='12' fill='"
       << color << "'/>\n";
    os << "<text x='" << (W - mr + 28) << "' y='" << (mt + 18 * ci + 10) << "' font-size='12'>"
       << labels[ci] << "</text>\n";
  }
  os << "</svg>\n";

  std::ofstream f(out_svg);
  if (!f) throw std::runtime_error("harness: cannot write plot '" + out_svg + "'");
  f << os.str();
}

// --- experiment runner ----------------------------------------------------------

namespace {

void init_context(RunContext& rc, const ExperimentConfig& cfg, uint64_t seed) {
  rc.cfg = cfg;
  rc.seed = seed;
  rc.cfg_hash = config_hash(cfg);
  GridSpec grid = cfg.grid();
  rc.task = std::make_shared<const TaskSpec>(resolve_task(cfg.task, grid));
  const bool goal_cond = algo_goal_conditioned(cfg.agent.algo);
  const bool hier = algo_hierarchical(cfg.agent.algo);
  rc.goal_dim = goal_cond ? rc.task->goal_space_size() : 0;

  if (goal_cond) {
    if (cfg.abstractor_path.empty() || !fs::exists(cfg.abstractor_path))
      throw std::runtime_error(
          "harness: missing abstractor checkpoint '" + cfg.abstractor_path +
          "'; produce it with: leo train-abstractor --task " + cfg.task + " --grid-preset " +
          cfg.grid_preset + " --out " + (cfg.abstractor_path.empty() ? "<path>" : cfg.abstractor_path));
    rc.abstractor = std::make_unique<AbstractorModel>(load_abstractor(cfg.abstractor_path));
    if (rc.abstractor->n_classes() != rc.task->goal_space_size())
      throw std::runtime_error("harness: abstractor class count does not match the task");
    rc.abstractor->set_invariant(cfg.agent.invariant_abstractor);
    rc.checker = std::make_unique<LearnedChecker>(rc.abstractor.get());
  }

  rc.buffer.configure(cfg.agent.replay_capacity, cfg.agent.expert_fraction);
  if (cfg.agent.n_demos > 0) {
    if (cfg.demos_path.empty() || !fs::exists(cfg.demos_path + ".leoidx"))
      throw std::runtime_error("harness: missing demos '" + cfg.demos_path +
                               ".leoidx'; produce them with: leo gen-demos --task " + cfg.task +
                               " --grid-preset " + cfg.grid_preset + " --count " +
                               std::to_string(cfg.agent.n_demos) + " --out " +
                               (cfg.demos_path.empty() ? "<prefix>" : cfg.demos_path));
    auto episodes = load_demos(cfg.demos_path, rc.task);
    if ((int)episodes.size() < cfg.agent.n_demos)
      throw std::runtime_error("harness: demo file holds fewer episodes than n_demos");
    episodes.resize(cfg.agent.n_demos);
    load_expert_into_buffer(rc.buffer, *rc.task, episodes, goal_cond, cfg.agent.done_on_subgoal);
  }

  rc.online = QHeads<float>(grid, rc.goal_dim, cfg.agent.qfunc, derive_seed(seed, 0x0911));
  rc.target = QHeads<float>(grid, rc.goal_dim, cfg.agent.qfunc, derive_seed(seed, 0x0912));
  rc.target.copy_from(rc.online);
  rc.opt = std::make_unique<nn::Adam<float>>(rc.online.params(), (float)cfg.agent.lr);

  if (hier) {
    rc.top = std::make_unique<HdqnTop>(grid, rc.task->goal_space_size(), derive_seed(seed, 0x701));
    rc.top_target =
        std::make_unique<HdqnTop>(grid, rc.task->goal_space_size(), derive_seed(seed, 0x702));
    rc.top_target->copy_from(*rc.top);
    rc.top_opt = std::make_unique<nn::Adam<float>>(rc.top->params(), (float)cfg.agent.lr);
  }

  rc.collect_rng = Rng(derive_seed(seed, 0xC0));
  rc.sample_rng = Rng(derive_seed(seed, 0x5A));
  rc.top_rng = Rng(derive_seed(seed, 0x70));
  rc.aug_rng = Rng(derive_seed(seed, 0xA6));

  rc.envs.resize(cfg.n_parallel_envs);
  for (int i = 0; i < cfg.n_parallel_envs; ++i) {
    if (goal_cond && !hier)
      rc.envs[i].leo =
          std::make_unique<LeoEpisode>(rc.task, rc.checker.get(), cfg.agent.done_on_subgoal);
  }
}

}  // namespace

RunResult run_single_seed(const ExperimentConfig& cfg, uint64_t seed) {
  cfg.validate();
  auto t_start = std::chrono::steady_clock::now();

  RunContext rc;
  init_context(rc, cfg, seed);

  if (!cfg.resume_from.empty()) load_run_checkpoint(cfg.resume_from, rc);

  fs::create_directories(cfg.out_dir);
  const std::string stem = cfg.out_dir + "/metrics_" + cfg.run_tag() + "_seed" +
                           std::to_string(seed);
  const std::string ckpt_stem = cfg.out_dir + "/checkpoint_" + cfg.run_tag() + "_seed" +
                                std::to_string(seed);

  const int total = cfg.resolved_total_steps();
  while (rc.env_step < total) {
    collect_step(rc);
    learner_step(rc);
    rc.env_step += 1;

    if (rc.env_step % cfg.eval_every == 0) {
      double success = evaluate(rc.task, cfg.agent, rc.online, rc.checker.get(), rc.top.get(),
                                cfg.n_eval_episodes, derive_seed(seed, 0xE7A1, rc.env_step));
      MetricsRow row;
      row.env_step = rc.env_step;
      row.success_rate = success;
      row.loss_xy = rc.acc_n ? rc.acc_xy / rc.acc_n : 0.0;
      row.loss_theta = rc.acc_n ? rc.acc_th / rc.acc_n : 0.0;
      row.loss_margin = rc.acc_n ? rc.acc_margin / rc.acc_n : 0.0;
      row.wall_time =
          cfg.serial ? 0.0
                     : rc.wall_base + std::chrono::duration<double>(
                                          std::chrono::steady_clock::now() - t_start)
                                          .count();
      row.seed = seed;
      rc.rows.push_back(row);
      rc.acc_xy = rc.acc_th = rc.acc_margin = 0.0;
      rc.acc_n = 0;
      write_metrics_csv(stem + ".csv", rc.rows, rc.cfg_hash);
    }
    if (cfg.checkpoint_every > 0 && rc.env_step % cfg.checkpoint_every == 0 &&
        rc.env_step < total)
      save_run_checkpoint(ckpt_stem + "_step" + std::to_string(rc.env_step) + ".leockpt", rc);
  }

  save_run_checkpoint(ckpt_stem + ".leockpt", rc);
  write_metrics_csv(stem + ".csv", rc.rows, rc.cfg_hash);

  RunResult res;
  res.rows = rc.rows;
  res.metrics_path = stem + ".csv";
  return res;
}

double evaluate_checkpoint(const std::string& ckpt_path, const std::string& abstractor_path,
                           int episodes, uint64_t seed) {
  std::string cfg_text;
  {
    std::ifstream is(ckpt_path, std::ios::binary);
    if (!is) throw std::runtime_error("harness: cannot open checkpoint '" + ckpt_path + "'");
    ckpt::expect_magic(is, "run");
    cfg_text = ckpt::read_str(is);
  }
  ExperimentConfig cfg = parse_experiment_config_text(cfg_text);
  if (!abstractor_path.empty()) cfg.abstractor_path = abstractor_path;
  cfg.agent.n_demos = 0;  // replay data is not needed to evaluate
  RunContext rc;
  init_context(rc, cfg, 0);
  load_run_checkpoint(ckpt_path, rc, /*verify=*/false);
  return evaluate(rc.task, cfg.agent, rc.online, rc.checker.get(), rc.top.get(), episodes,
                  derive_seed(seed, 0xe0a1));
}

std::vector<RunResult> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<RunResult> results(cfg.seeds.size());
  const int jobs = std::max(1, cfg.serial ? 1 : cfg.jobs);
  if (jobs <= 1) {
    for (size_t i = 0; i < cfg.seeds.size(); ++i) results[i] = run_single_seed(cfg, cfg.seeds[i]);
  } else {
    for (size_t base = 0; base < cfg.seeds.size(); base += jobs) {
      std::vector<std::future<RunResult>> futs;
      for (size_t i = base; i < std::min(base + jobs, cfg.seeds.size()); ++i) {
        uint64_t s = cfg.seeds[i];
        futs.push_back(
            std::async(std::launch::async, [&cfg, s]() { return run_single_seed(cfg, s); }));
      }
      for (size_t i = 0; i < futs.size(); ++i) results[base + i] = futs[i].get();
    }
  }

  std::vector<std::vector<MetricsRow>> per_seed;
  for (const auto& r : results) per_seed.push_back(r.rows);
  auto agg = aggregate_metrics(per_seed);
  fs::create_directories(cfg.out_dir);
  write_aggregate_csv(cfg.out_dir + "/aggregate_" + cfg.run_tag() + ".csv", agg);
  return results;
}

}  // namespace leo
