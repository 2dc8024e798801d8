#include "leo/demos.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace leo {

namespace {

// Uniformly random free ground pose with the reset margin; empty footprint.
std::optional<Action> sample_ground_pose(SceneState& scene, const BlockKind& kind, Rng& rng) {
  const GridSpec& g = scene.grid();
  const int margin = g.h_patch / 2;
  for (int tries = 0; tries < 400; ++tries) {
    Action a;
    a.p = Verb::place;
    a.x = rng.uniform_int(margin, g.w - 1 - margin);
    a.y = rng.uniform_int(margin, g.w - 1 - margin);
    a.theta = rng.uniform_int(0, g.r - 1);
    auto cells = footprint_cells(g, kind.length, kind.width, a.x, a.y, a.theta);
    if (!cells_in_bounds(g, cells)) continue;
    if (probe_support(scene, cells).height != 0) continue;
    return a;
  }
  return std::nullopt;
}

DemoEpisode try_generate(const std::shared_ptr<const TaskSpec>& task, uint64_t seed,
                         SceneState* start_scene) {
  const GridSpec& g = task->grid;
  Rng rng(derive_seed(seed, 0xde30u));
  const int n = task->n_blocks();
  const int margin = g.h_patch / 2;

  // built structure at a random grid-exact pose
  SceneState scene;
  bool ok = false;
  for (int tries = 0; tries < 200 && !ok; ++tries) {
    int rq = rng.uniform_int(0, 3);
    int x = rng.uniform_int(margin, g.w - 1 - margin);
    int y = rng.uniform_int(margin, g.w - 1 - margin);
    try {
      scene = instantiate_structure(task, x, y, rq, seed);
    } catch (const std::runtime_error&) {
      continue;
    }
    ok = true;
    for (const auto& b : scene.blocks) {
      if (b.x < margin || b.x > g.w - 1 - margin || b.y < margin || b.y > g.w - 1 - margin)
        ok = false;
    }
  }
  if (!ok) throw std::runtime_error("demos: could not pose the structure for " + task->name);

  // deconstruct: pick the highest still-assembled block, drop it on the ground
  std::vector<Action> decon;
  std::set<int> assembled;
  for (const auto& b : scene.blocks) assembled.insert(b.id);
  for (int k = 0; k < n - 1; ++k) {
    const BlockInstance* highest = nullptr;
    for (const auto& b : scene.blocks) {
      if (!assembled.count(b.id)) continue;
      if (!highest || b.top() > highest->top() ||
          (b.top() == highest->top() && b.id < highest->id))
        highest = &b;
    }
    Action pick{Verb::pick, highest->x, highest->y, highest->theta};
    int id = highest->id;
    assembled.erase(id);
    auto res = step(scene, pick);
    if (!scene.held || scene.held->id != id)
      throw std::runtime_error("demos: deconstruction pick failed");
    auto drop = sample_ground_pose(scene, scene.held->kind, rng);
    if (!drop) throw std::runtime_error("demos: no free ground pose");
    res = step(scene, *drop);
    if (scene.held) throw std::runtime_error("demos: deconstruction place failed");
    decon.push_back(pick);
    decon.push_back(*drop);
  }

  // reverse into a construction episode
  std::vector<Action> actions;
  for (int i = (int)decon.size() - 1; i >= 0; --i) {
    Action a = decon[i];
    a.p = a.p == Verb::pick ? Verb::place : Verb::pick;
    actions.push_back(a);
  }

  // replay from the scattered scene
  scene.step_count = 0;
  if (start_scene) *start_scene = scene;
  DemoEpisode ep;
  ep.seed = seed;
  ep.states.push_back(observe(scene));
  float last_r = 0.0f;
  bool last_done = false;
  for (const auto& a : actions) {
    auto res = step(scene, a);
    ep.states.push_back(res.obs);
    last_r = res.reward;
    last_done = res.done;
  }
  if (last_r != 1.0f || !last_done || (int)actions.size() != task->optimal_steps())
    throw std::runtime_error("demos: replay did not succeed");
  ep.actions = actions;
  for (int i = 0; i < (int)ep.states.size(); ++i)
    ep.abstract_labels.push_back(2 * n - 2 - i);
  return ep;
}

}  // namespace

DemoEpisode generate_demo(const std::shared_ptr<const TaskSpec>& task, uint64_t seed,
                          SceneState* start_scene) {
  std::string last_err;
  for (int attempt = 0; attempt < 20; ++attempt) {
    try {
      return try_generate(task, derive_seed(seed, 0x9e0d, attempt), start_scene);
    } catch (const std::runtime_error& e) {
      last_err = e.what();
    }
  }
  throw std::runtime_error("demos: generation failed after retries: " + last_err);
}

DemoEpisode generate_demo(const std::shared_ptr<const TaskSpec>& task, uint64_t seed) {
  return generate_demo(task, seed, nullptr);
}

std::vector<std::pair<const Observation*, int>> label_abstract_states(const DemoEpisode& ep) {
  std::vector<std::pair<const Observation*, int>> out;
  for (size_t i = 0; i < ep.states.size(); ++i)
    out.emplace_back(&ep.states[i], ep.abstract_labels[i]);
  return out;
}

AbstractorDataset build_abstractor_dataset(const std::shared_ptr<const TaskSpec>& task,
                                           int n_per_class, uint64_t seed) {
  if (n_per_class < 1) throw std::runtime_error("demos: n_per_class must be >= 1");
  AbstractorDataset ds;
  ds.grid = task->grid;
  ds.n_classes = task->goal_space_size();
  const int n_train_demos = std::max(1, (int)(n_per_class * 9 / 10));
  for (int j = 0; j < n_per_class; ++j) {
    DemoEpisode ep = generate_demo(task, derive_seed(seed, 0xda7a5e7, j));
    bool heldout = j >= n_train_demos;
    for (size_t i = 0; i < ep.states.size(); ++i) {
      if (heldout) {
        ds.heldout.push_back(std::move(ep.states[i]));
        ds.heldout_labels.push_back(ep.abstract_labels[i]);
      } else {
        ds.train.push_back(std::move(ep.states[i]));
        ds.train_labels.push_back(ep.abstract_labels[i]);
      }
    }
  }
  return ds;
}

ObsCompact compress_obs(const TaskSpec& task, const Observation& obs) {
  const GridSpec& g = task.grid;
  ObsCompact c;
  c.layers.resize(obs.topdown.size());
  for (size_t i = 0; i < obs.topdown.size(); ++i)
    c.layers[i] = (uint8_t)std::lround(obs.topdown[i] / g.cell_height_unit);
  c.held_kind = -1;
  if (obs.holding) {
    for (size_t k = 0; k < task.kinds.size(); ++k) {
      if (render_inhand(g, task.kinds[k]) == obs.inhand) {
        c.held_kind = (int8_t)k;
        break;
      }
    }
    if (c.held_kind < 0) throw std::runtime_error("demos: unrecognized in-hand image");
  }
  return c;
}

Observation expand_obs(const TaskSpec& task, const ObsCompact& c) {
  const GridSpec& g = task.grid;
  Observation o;
  o.topdown.resize(c.layers.size());
  for (size_t i = 0; i < c.layers.size(); ++i)
    o.topdown[i] = c.layers[i] * g.cell_height_unit;
  o.holding = c.holding();
  if (o.holding)
    o.inhand = render_inhand(g, task.kinds[c.held_kind]);
  else
    o.inhand.assign((size_t)g.h_patch * g.h_patch, 0.0f);
  return o;
}

void ReplayBuffer::push(const Transition& t) {
  std::lock_guard<std::mutex> lock(mu_);
  if (t.is_expert) {
    expert_.push_back(t);
    return;
  }
  if (agent_.size() < capacity_) {
    agent_.push_back(t);
  } else {
    agent_[agent_next_] = t;
    agent_next_ = (agent_next_ + 1) % capacity_;
    agent_full_ = true;
  }
}

std::vector<Transition> ReplayBuffer::sample(int batch, Rng& rng) const {
  std::lock_guard<std::mutex> lock(mu_);
  if (expert_.empty() && agent_.empty())
    throw std::runtime_error("replay: cannot sample from an empty buffer");
  int n_exp = (int)std::ceil(expert_fraction_ * batch);
  n_exp = std::min<int>(n_exp, (int)expert_.size());
  if (agent_.empty()) n_exp = batch;
  n_exp = std::min<int>(n_exp, (int)expert_.size());
  std::vector<Transition> out;
  out.reserve(batch);
  for (int i = 0; i < n_exp && !expert_.empty(); ++i)
    out.push_back(expert_[rng.uniform_int(0, (int)expert_.size() - 1)]);
  while ((int)out.size() < batch && !agent_.empty())
    out.push_back(agent_[rng.uniform_int(0, (int)agent_.size() - 1)]);
  while ((int)out.size() < batch && !expert_.empty())
    out.push_back(expert_[rng.uniform_int(0, (int)expert_.size() - 1)]);
  return out;
}

size_t ReplayBuffer::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return expert_.size() + agent_.size();
}
size_t ReplayBuffer::expert_size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return expert_.size();
}
size_t ReplayBuffer::agent_size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return agent_.size();
}

std::vector<Transition> ReplayBuffer::snapshot_agent() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<Transition> out;
  if (agent_full_) {
    out.insert(out.end(), agent_.begin() + agent_next_, agent_.end());
    out.insert(out.end(), agent_.begin(), agent_.begin() + agent_next_);
  } else {
    out = agent_;
  }
  return out;
}

void ReplayBuffer::restore_agent(const std::vector<Transition>& ts) {
  std::lock_guard<std::mutex> lock(mu_);
  agent_.clear();
  agent_next_ = 0;
  agent_full_ = false;
  for (const auto& t : ts) {
    if (agent_.size() < capacity_) {
      agent_.push_back(t);
    } else {
      agent_[agent_next_] = t;
      agent_next_ = (agent_next_ + 1) % capacity_;
      agent_full_ = true;
    }
  }
}

void load_expert_into_buffer(ReplayBuffer& buf, const TaskSpec& task,
                             const std::vector<DemoEpisode>& episodes, bool goal_conditioned,
                             bool done_on_subgoal) {
  for (const auto& ep : episodes) {
    const int steps = (int)ep.actions.size();
    for (int i = 0; i < steps; ++i) {
      Transition t;
      t.s = compress_obs(task, ep.states[i]);
      t.a = ep.actions[i];
      t.s_next = compress_obs(task, ep.states[i + 1]);
      t.is_expert = true;
      const bool last = i == steps - 1;
      const float r_env = last ? 1.0f : 0.0f;
      if (goal_conditioned) {
        t.goal = ep.abstract_labels[i + 1];
        t.goal_next = std::max(t.goal - 1, 0);
        t.reward = r_env;  // the expert always achieves its goal
        t.done = done_on_subgoal ? true : last;
      } else {
        t.goal = -1;
        t.goal_next = -1;
        t.reward = r_env;
        t.done = last;
      }
      buf.push(t);
    }
  }
}

void save_demos(const std::string& path_prefix, const TaskSpec& task,
                const std::vector<DemoEpisode>& episodes) {
  std::ofstream dat(path_prefix + ".leodat", std::ios::binary);
  if (!dat) throw std::runtime_error("demos: cannot write " + path_prefix + ".leodat");
  std::vector<uint64_t> offsets;
  const GridSpec& g = task.grid;
  for (const auto& ep : episodes) {
    offsets.push_back((uint64_t)dat.tellp());
    uint64_t seed = ep.seed;
    dat.write((const char*)&seed, sizeof(seed));
    int32_t ns = (int32_t)ep.states.size();
    dat.write((const char*)&ns, sizeof(ns));
    for (const auto& st : ep.states) {
      ObsCompact c = compress_obs(task, st);
      dat.write((const char*)c.layers.data(), (std::streamsize)c.layers.size());
      dat.write((const char*)&c.held_kind, 1);
    }
    for (const auto& a : ep.actions) {
      int8_t verb = a.p == Verb::pick ? 0 : 1;
      int32_t x = a.x, y = a.y, th = a.theta;
      dat.write((const char*)&verb, 1);
      dat.write((const char*)&x, sizeof(x));
      dat.write((const char*)&y, sizeof(y));
      dat.write((const char*)&th, sizeof(th));
    }
  }
  std::ofstream idx(path_prefix + ".leoidx");
  if (!idx) throw std::runtime_error("demos: cannot write " + path_prefix + ".leoidx");
  idx << "leo-demos v1\n";
  idx << "task " << task.name << "\n";
  idx << "grid " << g.w << " " << g.r << " " << g.h_patch << "\n";
  idx << "count " << episodes.size() << "\n";
  for (uint64_t o : offsets) idx << o << "\n";
}

std::vector<DemoEpisode> load_demos(const std::string& path_prefix,
                                    const std::shared_ptr<const TaskSpec>& task) {
  std::ifstream idx(path_prefix + ".leoidx");
  if (!idx)
    throw std::runtime_error("demos: missing index " + path_prefix +
                             ".leoidx (generate with: leo gen-demos)");
  std::string line;
  std::getline(idx, line);
  if (line != "leo-demos v1") throw std::runtime_error("demos: bad index format");
  std::string word, tname;
  int w, r, p;
  idx >> word >> tname >> word >> w >> r >> p;
  if (tname != task->name || w != task->grid.w || r != task->grid.r)
    throw std::runtime_error("demos: index does not match the requested task/grid");
  size_t count;
  idx >> word >> count;
  std::vector<uint64_t> offsets(count);
  for (auto& o : offsets) idx >> o;

  std::ifstream dat(path_prefix + ".leodat", std::ios::binary);
  if (!dat) throw std::runtime_error("demos: missing records " + path_prefix + ".leodat");
  std::vector<DemoEpisode> out;
  const GridSpec& g = task->grid;
  for (uint64_t off : offsets) {
    dat.seekg((std::streamoff)off);
    DemoEpisode ep;
    uint64_t seed;
    dat.read((char*)&seed, sizeof(seed));
    ep.seed = seed;
    int32_t ns = 0;
    dat.read((char*)&ns, sizeof(ns));
    for (int i = 0; i < ns; ++i) {
      ObsCompact c;
      c.layers.resize((size_t)g.w * g.w);
      dat.read((char*)c.layers.data(), (std::streamsize)c.layers.size());
      dat.read((char*)&c.held_kind, 1);
      ep.states.push_back(expand_obs(*task, c));
    }
    for (int i = 0; i < ns - 1; ++i) {
      int8_t verb;
      int32_t x, y, th;
      dat.read((char*)&verb, 1);
      dat.read((char*)&x, sizeof(x));
      dat.read((char*)&y, sizeof(y));
      dat.read((char*)&th, sizeof(th));
      ep.actions.push_back({verb == 0 ? Verb::pick : Verb::place, x, y, th});
    }
    const int n2 = ns;
    for (int i = 0; i < n2; ++i) ep.abstract_labels.push_back(n2 - 1 - i);
    out.push_back(std::move(ep));
  }
  return out;
}

namespace {

void write_obs_block(std::ofstream& os, const TaskSpec& task, const std::vector<Observation>& obs,
                     const std::vector<int>& labels) {
  int64_t n = (int64_t)obs.size();
  os.write((const char*)&n, sizeof(n));
  for (size_t i = 0; i < obs.size(); ++i) {
    ObsCompact c = compress_obs(task, obs[i]);
    os.write((const char*)c.layers.data(), (std::streamsize)c.layers.size());
    os.write((const char*)&c.held_kind, 1);
    int32_t lb = labels[i];
    os.write((const char*)&lb, sizeof(lb));
  }
}

void read_obs_block(std::ifstream& is, const TaskSpec& task, std::vector<Observation>& obs,
                    std::vector<int>& labels) {
  int64_t n = 0;
  is.read((char*)&n, sizeof(n));
  const GridSpec& g = task.grid;
  for (int64_t i = 0; i < n; ++i) {
    ObsCompact c;
    c.layers.resize((size_t)g.w * g.w);
    is.read((char*)c.layers.data(), (std::streamsize)c.layers.size());
    is.read((char*)&c.held_kind, 1);
    int32_t lb = 0;
    is.read((char*)&lb, sizeof(lb));
    obs.push_back(expand_obs(task, c));
    labels.push_back(lb);
  }
}

}  // namespace

void save_dataset(const std::string& path, const TaskSpec& task, const AbstractorDataset& ds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("demos: cannot write dataset '" + path + "'");
  os.write("LEODSET1", 8);
  int32_t w = task.grid.w, r = task.grid.r, hp = task.grid.h_patch, nc = ds.n_classes;
  os.write((const char*)&w, sizeof(w));
  os.write((const char*)&r, sizeof(r));
  os.write((const char*)&hp, sizeof(hp));
  os.write((const char*)&nc, sizeof(nc));
  write_obs_block(os, task, ds.train, ds.train_labels);
  write_obs_block(os, task, ds.heldout, ds.heldout_labels);
}

AbstractorDataset load_dataset(const std::string& path, const TaskSpec& task) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw std::runtime_error("demos: missing dataset '" + path +
                             "' (generate with: leo gen-dataset)");
  char magic[8];
  is.read(magic, 8);
  if (std::string(magic, 8) != "LEODSET1") throw std::runtime_error("demos: bad dataset format");
  int32_t w, r, hp, nc;
  is.read((char*)&w, sizeof(w));
  is.read((char*)&r, sizeof(r));
  is.read((char*)&hp, sizeof(hp));
  is.read((char*)&nc, sizeof(nc));
  if (w != task.grid.w || r != task.grid.r)
    throw std::runtime_error("demos: dataset grid does not match the task");
  AbstractorDataset ds;
  ds.grid = task.grid;
  ds.n_classes = nc;
  read_obs_block(is, task, ds.train, ds.train_labels);
  read_obs_block(is, task, ds.heldout, ds.heldout_labels);
  return ds;
}

}  // namespace leo
