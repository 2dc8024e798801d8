#include <fstream>
#include <sstream>

#include "leo/harness.hpp"

namespace leo {

void ExperimentConfig::validate() const {
  grid().validate();
  if (agent.n_demos == 0 && algo_margin(agent.algo))
    throw std::runtime_error("config: " + algo_name(agent.algo) +
                             " requires expert actions; n_demos must be > 0");
  if (agent.n_demos < 0) throw std::runtime_error("config: n_demos must be >= 0");
  if (agent.gamma < 0.0 || agent.gamma >= 1.0)
    throw std::runtime_error("config: gamma must be in [0, 1)");
  if (eval_every <= 0 || n_eval_episodes <= 0 || n_parallel_envs <= 0 || train_ratio <= 0)
    throw std::runtime_error("config: loop parameters must be positive");
  if (seeds.empty()) throw std::runtime_error("config: at least one seed required");
}

std::string ExperimentConfig::run_tag() const {
  return task + "_" + algo_name(agent.algo) + "-" + std::to_string(agent.n_demos);
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "version = 1\n";
  os << "[run]\n";
  os << "task = " << cfg.task << "\n";
  os << "grid_preset = " << cfg.grid_preset << "\n";
  os << "n_parallel_envs = " << cfg.n_parallel_envs << "\n";
  os << "total_env_steps = " << cfg.total_env_steps << "\n";
  os << "eval_every = " << cfg.eval_every << "\n";
  os << "n_eval_episodes = " << cfg.n_eval_episodes << "\n";
  os << "train_ratio = " << cfg.train_ratio << "\n";
  os << "serial = " << (cfg.serial ? 1 : 0) << "\n";
  os << "[agent]\n";
  os << "algo = " << algo_name(cfg.agent.algo) << "\n";
  os << "n_demos = " << cfg.agent.n_demos << "\n";
  os << "margin = " << cfg.agent.margin << "\n";
  os << "margin_weight = " << cfg.agent.margin_weight << "\n";
  os << "gamma = " << cfg.agent.gamma << "\n";
  os << "lr = " << cfg.agent.lr << "\n";
  os << "batch = " << cfg.agent.batch << "\n";
  os << "target_update_period = " << cfg.agent.target_update_period << "\n";
  os << "invariant_abstractor = " << (cfg.agent.invariant_abstractor ? 1 : 0) << "\n";
  os << "eps_start = " << cfg.agent.eps_start << "\n";
  os << "eps_floor = " << cfg.agent.eps_floor << "\n";
  os << "eps_decay_frac = " << cfg.agent.eps_decay_frac << "\n";
  os << "done_on_subgoal = " << (cfg.agent.done_on_subgoal ? 1 : 0) << "\n";
  os << "t_low = " << cfg.agent.t_low << "\n";
  os << "hdqn_warmup = " << cfg.agent.hdqn_warmup << "\n";
  os << "expert_fraction = " << cfg.agent.expert_fraction << "\n";
  os << "replay_capacity = " << cfg.agent.replay_capacity << "\n";
  os << "train_augment = " << (cfg.agent.train_augment ? 1 : 0) << "\n";
  os << "[qfunc]\n";
  os << "c1 = " << cfg.agent.qfunc.c1 << "\n";
  os << "c2 = " << cfg.agent.qfunc.c2 << "\n";
  os << "head_c = " << cfg.agent.qfunc.head_c << "\n";
  os << "henc_c = " << cfg.agent.qfunc.henc_c << "\n";
  os << "cond_hidden = " << cfg.agent.qfunc.cond_hidden << "\n";
  os << "group = " << cfg.agent.qfunc.group << "\n";
  os << "dynamic_cond = " << (cfg.agent.qfunc.dynamic_cond ? 1 : 0) << "\n";
  os << "qt_c1 = " << cfg.agent.qfunc.qt_c1 << "\n";
  os << "qt_c2 = " << cfg.agent.qfunc.qt_c2 << "\n";
  os << "qt_hidden = " << cfg.agent.qfunc.qt_hidden << "\n";
  os << "[abstractor]\n";
  os << "steps = " << cfg.abstractor.steps << "\n";
  os << "batch = " << cfg.abstractor.batch << "\n";
  os << "lr = " << cfg.abstractor.lr << "\n";
  os << "invariant = " << (cfg.abstractor.invariant ? 1 : 0) << "\n";
  return os.str();
}

uint64_t config_hash(const ExperimentConfig& cfg) {
  // FNV-1a over the canonical serialization
  uint64_t h = 1469598103934665603ULL;
  for (char c : serialize_config(cfg)) {
    h ^= (uint8_t)c;
    h *= 1099511628211ULL;
  }
  return h;
}

void apply_config_line(ExperimentConfig& cfg, const std::string& section, const std::string& key,
                       const std::string& value) {
  auto as_int = [&] { return std::stoi(value); };
  auto as_double = [&] { return std::stod(value); };
  auto as_bool = [&] { return value == "1" || value == "true" || value == "on"; };

  if (section.empty() || section == "run") {
    if (key == "task") cfg.task = value;
    else if (key == "grid_preset") cfg.grid_preset = value;
    else if (key == "n_parallel_envs") cfg.n_parallel_envs = as_int();
    else if (key == "total_env_steps") cfg.total_env_steps = as_int();
    else if (key == "eval_every") cfg.eval_every = as_int();
    else if (key == "n_eval_episodes") cfg.n_eval_episodes = as_int();
    else if (key == "train_ratio") cfg.train_ratio = as_int();
    else if (key == "serial") cfg.serial = as_bool();
    else if (key == "out_dir") cfg.out_dir = value;
    else if (key == "version") { /* format marker */ }
    else throw std::runtime_error("config: unknown key '" + key + "' in [run]");
  } else if (section == "agent") {
    if (key == "algo") cfg.agent.algo = algo_from_name(value);
    else if (key == "n_demos") cfg.agent.n_demos = as_int();
    else if (key == "margin") cfg.agent.margin = as_double();
    else if (key == "margin_weight") cfg.agent.margin_weight = as_double();
    else if (key == "gamma") cfg.agent.gamma = as_double();
    else if (key == "lr") cfg.agent.lr = as_double();
    else if (key == "batch") cfg.agent.batch = as_int();
    else if (key == "target_update_period") cfg.agent.target_update_period = as_int();
    else if (key == "invariant_abstractor") cfg.agent.invariant_abstractor = as_bool();
    else if (key == "eps_start") cfg.agent.eps_start = as_double();
    else if (key == "eps_floor") cfg.agent.eps_floor = as_double();
    else if (key == "eps_decay_frac") cfg.agent.eps_decay_frac = as_double();
    else if (key == "done_on_subgoal") cfg.agent.done_on_subgoal = as_bool();
    else if (key == "t_low") cfg.agent.t_low = as_int();
    else if (key == "hdqn_warmup") cfg.agent.hdqn_warmup = as_int();
    else if (key == "expert_fraction") cfg.agent.expert_fraction = as_double();
    else if (key == "replay_capacity") cfg.agent.replay_capacity = (size_t)std::stoll(value);
    else if (key == "train_augment") cfg.agent.train_augment = as_bool();
    else throw std::runtime_error("config: unknown key '" + key + "' in [agent]");
  } else if (section == "qfunc") {
    if (key == "c1") cfg.agent.qfunc.c1 = as_int();
    else if (key == "c2") cfg.agent.qfunc.c2 = as_int();
    else if (key == "head_c") cfg.agent.qfunc.head_c = as_int();
    else if (key == "henc_c") cfg.agent.qfunc.henc_c = as_int();
    else if (key == "cond_hidden") cfg.agent.qfunc.cond_hidden = as_int();
    else if (key == "group") cfg.agent.qfunc.group = as_int();
    else if (key == "dynamic_cond") cfg.agent.qfunc.dynamic_cond = as_bool();
    else if (key == "qt_c1") cfg.agent.qfunc.qt_c1 = as_int();
    else if (key == "qt_c2") cfg.agent.qfunc.qt_c2 = as_int();
    else if (key == "qt_hidden") cfg.agent.qfunc.qt_hidden = as_int();
    else throw std::runtime_error("config: unknown key '" + key + "' in [qfunc]");
  } else if (section == "abstractor") {
    if (key == "steps") cfg.abstractor.steps = as_int();
    else if (key == "batch") cfg.abstractor.batch = as_int();
    else if (key == "lr") cfg.abstractor.lr = as_double();
    else if (key == "invariant") cfg.abstractor.invariant = as_bool();
    else throw std::runtime_error("config: unknown key '" + key + "' in [abstractor]");
  } else {
    throw std::runtime_error("config: unknown section [" + section + "]");
  }
}

ExperimentConfig parse_experiment_config_text(const std::string& text) {
  std::istringstream in(text);
  ExperimentConfig cfg;
  std::string line, section;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream is(line);
    std::string a, eq, b;
    if (!(is >> a)) continue;
    if (a.front() == '[') {
      section = a.substr(1, a.find(']') - 1);
      continue;
    }
    if (!(is >> eq >> b) || eq != "=")
      throw std::runtime_error("config: malformed line '" + line + "'");
    apply_config_line(cfg, section, a, b);
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config_text(ss.str());
}

}  // namespace leo
