#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <iostream>

#include "leo/harness.hpp"

namespace leo {

namespace {

namespace fs = std::filesystem;

std::string resolve_out_dir(const std::string& flag_value) {
  if (const char* env = std::getenv("LEO_OUT_DIR")) return env;
  return flag_value;
}

std::vector<uint64_t> parse_seeds(const std::string& spec) {
  std::vector<uint64_t> out;
  std::string cur;
  for (char c : spec + ",") {
    if (c == ',') {
      if (!cur.empty()) out.push_back(std::stoull(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (out.empty()) throw std::runtime_error("cli: empty seed list");
  return out;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"block-construction learning stack"};
  app.require_subcommand(1);

  std::string task = "HB1", preset = "desk", out = "runs", algo = "leo-dqn";
  std::string seeds_str = "0", config_path, demos_path, abstractor_path, dataset_path;
  std::string resume_path, invariant_str = "on";
  int count = 100, per_class = 250, n_demos = 5, episodes = 20, steps = 0, ckpt_every = 0;
  uint64_t seed = 0;
  bool serial = false;
  int jobs = 1;

  auto add_grid = [&](CLI::App* cmd) {
    cmd->add_option("--grid-preset", preset, "grid preset: paper, desk, tiny")
        ->check(CLI::IsMember({"paper", "desk", "tiny"}));
  };

  auto* gen_demos = app.add_subcommand("gen-demos", "generate expert episodes");
  gen_demos->add_option("--task", task, "task name (BS, HB1..HB4)")->required();
  gen_demos->add_option("--count", count, "number of episodes");
  gen_demos->add_option("--seed", seed, "seed");
  gen_demos->add_option("--out", out, "output path prefix")->required();
  add_grid(gen_demos);

  auto* gen_dataset = app.add_subcommand("gen-dataset", "generate an abstractor dataset");
  gen_dataset->add_option("--task", task)->required();
  gen_dataset->add_option("--per-class", per_class, "samples per abstract class");
  gen_dataset->add_option("--seed", seed);
  gen_dataset->add_option("--out", dataset_path, "output dataset file")->required();
  add_grid(gen_dataset);

  auto* train_abs = app.add_subcommand("train-abstractor", "train the state abstractor");
  train_abs->add_option("--task", task)->required();
  train_abs->add_option("--per-class", per_class);
  train_abs->add_option("--dataset", dataset_path, "pre-built dataset file");
  train_abs->add_option("--invariant", invariant_str)->check(CLI::IsMember({"on", "off"}));
  train_abs->add_option("--seed", seed);
  train_abs->add_option("--steps", steps, "training steps (default 12000)");
  train_abs->add_option("--out", abstractor_path, "checkpoint output path")->required();
  add_grid(train_abs);

  auto* train = app.add_subcommand("train", "train an agent");
  train->add_option("--task", task)->required();
  train->add_option("--algo", algo,
                    "dqn, sdqfd, leo-dqn, leo-sdqfd, hdqn-orig, hdqn-mod");
  train->add_option("--n-demos", n_demos);
  train->add_option("--seed", seeds_str, "seed or comma-separated list");
  train->add_option("--seeds", seeds_str, "comma-separated seed list");
  train->add_option("--config", config_path, "experiment config file");
  train->add_option("--demos", demos_path, "demo file prefix");
  train->add_option("--abstractor", abstractor_path, "abstractor checkpoint");
  train->add_option("--total-steps", steps, "override the env step budget");
  train->add_option("--checkpoint-every", ckpt_every);
  train->add_option("--resume", resume_path, "resume from a run checkpoint");
  train->add_option("--invariant-abstractor", invariant_str)
      ->check(CLI::IsMember({"on", "off"}));
  train->add_option("--jobs", jobs, "parallel seeds");
  train->add_flag("--serial", serial, "deterministic serial mode");
  train->add_option("--out", out, "output directory");
  add_grid(train);

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a trained checkpoint");
  eval_cmd->add_option("--task", task)->required();
  eval_cmd->add_option("--algo", algo);
  eval_cmd->add_option("--ckpt", resume_path, "run checkpoint")->required();
  eval_cmd->add_option("--abstractor", abstractor_path);
  eval_cmd->add_option("--episodes", episodes);
  eval_cmd->add_option("--seed", seed);
  add_grid(eval_cmd);

  auto* agg = app.add_subcommand("aggregate", "aggregate per-seed metrics files");
  std::vector<std::string> inputs;
  agg->add_option("--out", out, "output aggregate csv")->required();
  agg->add_option("inputs", inputs, "metrics csv files")->required();

  auto* plot = app.add_subcommand("plot", "render learning curves to SVG");
  plot->add_option("--out", out, "output svg file")->required();
  plot->add_option("inputs", inputs, "aggregate csv files")->required();

  auto* task_files = app.add_subcommand("task-files", "write task config files");
  task_files->add_option("--out", out, "output directory")->required();
  add_grid(task_files);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << app.help() << std::endl;
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }

  const bool needs_task = gen_demos->parsed() || gen_dataset->parsed() || train_abs->parsed() ||
                          train->parsed() || eval_cmd->parsed();
  if (needs_task) {
    static const std::vector<std::string> known{"BS", "HB1", "HB2", "HB3", "HB4"};
    if (std::find(known.begin(), known.end(), task) == known.end()) {
      std::cerr << app.help() << std::endl;
      std::cerr << "error: unknown task '" << task << "' (expected BS, HB1..HB4)" << std::endl;
      return 2;
    }
  }

  try {
    GridSpec grid = GridSpec::preset(preset);

    if (gen_demos->parsed()) {
      auto t = std::make_shared<const TaskSpec>(resolve_task(task, grid));
      std::vector<DemoEpisode> eps;
      for (int i = 0; i < count; ++i) eps.push_back(generate_demo(t, derive_seed(seed, 0xd, i)));
      fs::create_directories(fs::path(out).parent_path().empty()
                                 ? "."
                                 : fs::path(out).parent_path().string());
      save_demos(out, *t, eps);
      std::cout << "wrote " << eps.size() << " episodes to " << out << ".leoidx/.leodat\n";
    } else if (gen_dataset->parsed()) {
      auto t = std::make_shared<const TaskSpec>(resolve_task(task, grid));
      auto ds = build_abstractor_dataset(t, per_class, seed);
      save_dataset(dataset_path, *t, ds);
      std::cout << "wrote dataset (" << ds.train.size() << " train / " << ds.heldout.size()
                << " heldout) to " << dataset_path << "\n";
    } else if (train_abs->parsed()) {
      auto t = std::make_shared<const TaskSpec>(resolve_task(task, grid));
      AbstractorDataset ds;
      if (!dataset_path.empty())
        ds = load_dataset(dataset_path, *t);
      else
        ds = build_abstractor_dataset(t, per_class, seed);
      AbstractorConfig acfg;
      acfg.invariant = invariant_str == "on";
      if (steps > 0) acfg.steps = steps;
      AbstractorModel model(grid, t->goal_space_size(), acfg, derive_seed(seed, 0xab));
      auto rep = train_abstractor(model, ds, seed);
      save_abstractor(abstractor_path, model);
      std::cout << "abstractor trained: loss " << rep.final_loss << ", train acc "
                << rep.train_accuracy << ", heldout acc " << rep.heldout_accuracy << " -> "
                << abstractor_path << "\n";
    } else if (train->parsed()) {
      ExperimentConfig cfg;
      if (!config_path.empty()) cfg = load_experiment_config(config_path);
      cfg.task = task;
      cfg.grid_preset = preset;
      cfg.agent.algo = algo_from_name(algo);
      cfg.agent.n_demos = n_demos;
      cfg.agent.invariant_abstractor = invariant_str == "on";
      cfg.seeds = parse_seeds(seeds_str);
      cfg.serial = serial;
      cfg.jobs = jobs;
      cfg.out_dir = resolve_out_dir(out);
      if (!demos_path.empty()) cfg.demos_path = demos_path;
      if (!abstractor_path.empty()) cfg.abstractor_path = abstractor_path;
      if (steps > 0) cfg.total_env_steps = steps;
      cfg.checkpoint_every = ckpt_every;
      cfg.resume_from = resume_path;
      auto results = run_experiment(cfg);
      for (const auto& r : results) std::cout << "wrote " << r.metrics_path << "\n";
      std::cout << "wrote " << cfg.out_dir << "/aggregate_" << cfg.run_tag() << ".csv\n";
    } else if (eval_cmd->parsed()) {
      double rate = evaluate_checkpoint(resume_path, abstractor_path, episodes, seed);
      std::cout << "success_rate " << rate << " over " << episodes << " episodes\n";
    } else if (agg->parsed()) {
      std::vector<std::vector<MetricsRow>> per_seed;
      for (const auto& f : inputs) per_seed.push_back(read_metrics_csv(f));
      auto rows = aggregate_metrics(per_seed);
      write_aggregate_csv(out, rows);
      std::cout << "wrote " << out << "\n";
    } else if (plot->parsed()) {
      std::vector<std::vector<AggregateRow>> curves;
      std::vector<std::string> labels;
      for (const auto& f : inputs) {
        curves.push_back(read_aggregate_csv(f));
        labels.push_back(fs::path(f).stem().string());
      }
      plot_curves(out, labels, curves);
      std::cout << "wrote " << out << "\n";
    } else if (task_files->parsed()) {
      fs::create_directories(out);
      for (const char* name : {"BS", "HB1", "HB2", "HB3", "HB4"}) {
        TaskSpec t = builtin_task(name, grid);
        std::string lower = name;
        for (auto& c : lower) c = (char)std::tolower(c);
        write_task_file(out + "/" + lower + ".task", t);
      }
      std::cout << "wrote task files to " << out << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}

}  // namespace leo
