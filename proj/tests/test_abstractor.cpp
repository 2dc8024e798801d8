#include <doctest.h>

#include <filesystem>

#include "leo/demos.hpp"

using namespace leo;

namespace {

std::shared_ptr<const TaskSpec> task_ptr(const std::string& name, const std::string& preset) {
  return std::make_shared<const TaskSpec>(builtin_task(name, GridSpec::preset(preset)));
}

}  // namespace

TEST_CASE("symmetrized logits are exactly dihedral invariant") {
  GridSpec g = GridSpec::preset("tiny");
  AbstractorConfig cfg;
  AbstractorModel model(g, 5, cfg, 3);

  Rng rng(5);
  Observation obs;
  obs.topdown.resize((size_t)g.w * g.w);
  for (auto& v : obs.topdown) v = (float)(rng.uniform_int(0, 4)) * g.cell_height_unit;
  obs.inhand.assign((size_t)g.h_patch * g.h_patch, 0.0f);
  obs.holding = false;

  auto base = model.symmetrized_logits(obs);
  for (int gi = 1; gi < 8; ++gi) {
    Observation moved = obs;
    dihedral_apply_square(g.w, gi, obs.topdown.data(), moved.topdown.data());
    auto lg = model.symmetrized_logits(moved);
    for (int c = 0; c < 5; ++c) CHECK(std::abs(lg[c] - base[c]) <= 1e-6);
    auto [cls_a, pa] = model.classify(obs);
    auto [cls_b, pb] = model.classify(moved);
    CHECK(cls_a == cls_b);
  }

  // an already-invariant input is a fixed point of the averaging
  Observation flat = obs;
  std::fill(flat.topdown.begin(), flat.topdown.end(), 0.3f);
  std::vector<const Observation*> single{&flat};
  auto raw = model.logits(single);
  auto sym = model.symmetrized_logits(flat);
  for (int c = 0; c < 5; ++c) CHECK(std::abs(sym[c] - raw.v[c]) <= 1e-5);
}

TEST_CASE("classify: probabilities sum to one, ties break toward smaller index") {
  GridSpec g = GridSpec::preset("tiny");
  AbstractorConfig cfg;
  AbstractorModel model(g, 7, cfg, 9);
  Rng rng(2);
  Observation obs;
  obs.topdown.resize((size_t)g.w * g.w);
  for (auto& v : obs.topdown) v = (float)rng.uniform01();
  obs.inhand.assign((size_t)g.h_patch * g.h_patch, 0.0f);

  auto [cls, probs] = model.classify(obs);
  double sum = 0;
  for (double p : probs) sum += p;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  for (int c = 0; c < cls; ++c) CHECK(probs[c] < probs[cls]);

  // all-zero logits tie: smallest index wins
  AbstractorModel zeroed(g, 7, cfg, 10);
  for (auto& p : zeroed.params())
    if (p.name == "abs.fc3.w" || p.name == "abs.fc3.b")
      std::fill(p.value->begin(), p.value->end(), 0.0f);
  auto [cls0, probs0] = zeroed.classify(obs);
  CHECK(cls0 == 0);
}

TEST_CASE("training overfits a 50-sample subset with decreasing epoch losses") {
  auto hb1 = task_ptr("HB1", "tiny");
  AbstractorDataset full = build_abstractor_dataset(hb1, 8, 17);  // 8 * 7 = 56 samples
  AbstractorDataset small;
  small.grid = full.grid;
  small.n_classes = full.n_classes;
  for (int i = 0; i < 50; ++i) {
    small.train.push_back(full.train[i % full.train.size()]);
    small.train_labels.push_back(full.train_labels[i % full.train_labels.size()]);
  }
  small.heldout = small.train;
  small.heldout_labels = small.train_labels;

  AbstractorConfig cfg;
  cfg.steps = 1200;
  cfg.invariant = false;
  AbstractorModel model(small.grid, small.n_classes, cfg, 4);
  auto rep = train_abstractor(model, small, 21);

  REQUIRE(rep.epoch_losses.size() > 10);
  CHECK(rep.epoch_losses.back() < 0.01);
  int violations = 0;
  for (size_t i = 1; i < rep.epoch_losses.size(); ++i)
    if (rep.epoch_losses[i] > rep.epoch_losses[i - 1] + 1e-3) ++violations;
  CHECK(violations <= (int)rep.epoch_losses.size() / 10);
  CHECK(rep.train_accuracy == doctest::Approx(1.0));
}

TEST_CASE("training is reproducible and the frozen model is stable") {
  auto hb1 = task_ptr("HB1", "tiny");
  AbstractorDataset ds = build_abstractor_dataset(hb1, 6, 13);
  AbstractorConfig cfg;
  cfg.steps = 200;
  AbstractorModel m1(ds.grid, ds.n_classes, cfg, 8);
  AbstractorModel m2(ds.grid, ds.n_classes, cfg, 8);
  train_abstractor(m1, ds, 5);
  train_abstractor(m2, ds, 5);
  auto p1 = m1.params();
  auto p2 = m2.params();
  for (size_t i = 0; i < p1.size(); ++i) CHECK(*p1[i].value == *p2[i].value);

  auto [c1, prob1] = m1.classify(ds.train[0]);
  auto [c2, prob2] = m1.classify(ds.train[0]);
  CHECK(c1 == c2);
  CHECK(prob1 == prob2);
}

TEST_CASE("dataset class count mismatch is a configuration error") {
  auto hb1 = task_ptr("HB1", "tiny");
  AbstractorDataset ds = build_abstractor_dataset(hb1, 4, 2);
  AbstractorConfig cfg;
  cfg.steps = 10;
  AbstractorModel wrong(ds.grid, ds.n_classes + 2, cfg, 1);
  CHECK_THROWS(train_abstractor(wrong, ds, 1));
}

TEST_CASE("checkpoint round trip preserves classification bitwise") {
  namespace fs = std::filesystem;
  auto hb1 = task_ptr("HB1", "tiny");
  AbstractorDataset ds = build_abstractor_dataset(hb1, 4, 6);
  AbstractorConfig cfg;
  cfg.steps = 100;
  AbstractorModel model(ds.grid, ds.n_classes, cfg, 2);
  train_abstractor(model, ds, 3);

  std::string path = (fs::temp_directory_path() / "leo_abs_rt.leockpt").string();
  save_abstractor(path, model);
  AbstractorModel back = load_abstractor(path);
  for (const auto& obs : ds.heldout) {
    auto [ca, pa] = model.classify(obs);
    auto [cb, pb] = back.classify(obs);
    CHECK(ca == cb);
    CHECK(pa == pb);
  }
  CHECK_THROWS(load_abstractor(path + ".missing"));
}

TEST_CASE("trained abstractor separates demo stages on a small task") {
  auto hb1 = task_ptr("HB1", "tiny");
  AbstractorDataset ds = build_abstractor_dataset(hb1, 25, 40);
  AbstractorConfig cfg;
  cfg.steps = 1500;
  cfg.invariant = true;
  AbstractorModel model(ds.grid, ds.n_classes, cfg, 11);
  auto rep = train_abstractor(model, ds, 12);
  CHECK(rep.heldout_accuracy >= 0.9);

  SceneState built = instantiate_structure(hb1, 16, 16, 0, 1);
  auto [cls, probs] = model.classify(observe(built));
  CHECK(cls == 0);
}

TEST_CASE("oracle abstractor labels endpoints of the construction") {
  auto hb1 = task_ptr("HB1", "desk");
  OracleAbstractor oracle(hb1);
  SceneState built = instantiate_structure(hb1, 32, 32, 0, 9);
  CHECK(oracle.classify_scene(built) == 0);
  SceneState fresh = reset_scene(hb1, 77);
  CHECK(oracle.classify_scene(fresh) == 2 * hb1->n_blocks() - 2);
}
