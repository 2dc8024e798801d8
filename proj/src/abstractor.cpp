#include "leo/abstractor.hpp"

#include <cstring>
#include <fstream>

#include "leo/checkpoint.hpp"

namespace leo {

AbstractorModel::AbstractorModel(const GridSpec& grid, int n_classes, const AbstractorConfig& cfg,
                                 uint64_t seed)
    : grid_(grid), n_classes_(n_classes), cfg_(cfg) {
  Rng rng(derive_seed(seed, 0xab5u));

  int side = grid.w;
  int in_c = 1;
  for (int s = 0; s < 5; ++s) {
    int out_c = s == 0 ? cfg.c_top / 2 : cfg.c_top;
    tconvs_.emplace_back("abs.top" + std::to_string(s), in_c, out_c, 3, rng);
    tpools_.emplace_back();
    tacts_.emplace_back();
    in_c = out_c;
    if (side >= 2) side /= 2;
  }
  top_flat_ = in_c * side * side;

  side = grid.h_patch;
  in_c = 1;
  for (int s = 0; s < 3; ++s) {
    int out_c = s == 0 ? cfg.c_hand / 2 : cfg.c_hand;
    hconvs_.emplace_back("abs.hand" + std::to_string(s), in_c, out_c, 3, rng);
    hpools_.emplace_back();
    hacts_.emplace_back();
    in_c = out_c;
    if (side >= 2) side /= 2;
  }
  hand_flat_ = in_c * side * side;

  fc1_ = nn::Dense<float>("abs.fc1", top_flat_ + hand_flat_ + 1, cfg.fc1, rng);
  fc2_ = nn::Dense<float>("abs.fc2", cfg.fc1, cfg.fc2, rng);
  fc3_ = nn::Dense<float>("abs.fc3", cfg.fc2, n_classes, rng);
}

nn::Tensor<float> AbstractorModel::forward_internal(const std::vector<const Observation*>& batch,
                                                    const std::vector<int>& transforms) {
  const int n = (int)batch.size();
  const int w = grid_.w;
  const int p = grid_.h_patch;
  batch_n_ = n;

  nn::Tensor<float> img(n, 1, w, w);
  nn::Tensor<float> hand(n, 1, p, p);
  for (int i = 0; i < n; ++i) {
    if (transforms[i] == 0)
      std::memcpy(img.image(i), batch[i]->topdown.data(), sizeof(float) * w * w);
    else
      dihedral_apply_square(w, transforms[i], batch[i]->topdown.data(), img.image(i));
    std::memcpy(hand.image(i), batch[i]->inhand.data(), sizeof(float) * p * p);
  }

  nn::Tensor<float> t = img;
  tpool_used_.assign(tconvs_.size(), false);
  for (size_t s = 0; s < tconvs_.size(); ++s) {
    t = tacts_[s].forward(tconvs_[s].forward(t));
    if (t.h >= 2) {
      t = tpools_[s].forward(t);
      tpool_used_[s] = true;
    }
  }
  nn::Tensor<float> h = hand;
  hpool_used_.assign(hconvs_.size(), false);
  for (size_t s = 0; s < hconvs_.size(); ++s) {
    h = hacts_[s].forward(hconvs_[s].forward(h));
    if (h.h >= 2) {
      h = hpools_[s].forward(h);
      hpool_used_[s] = true;
    }
  }

  nn::Tensor<float> flat(n, top_flat_ + hand_flat_ + 1, 1, 1);
  for (int i = 0; i < n; ++i) {
    float* row = flat.data() + (size_t)i * flat.c;
    std::memcpy(row, t.image(i), sizeof(float) * top_flat_);
    std::memcpy(row + top_flat_, h.image(i), sizeof(float) * hand_flat_);
    row[top_flat_ + hand_flat_] = batch[i]->holding ? 1.0f : 0.0f;
  }
  return fc3_.forward(fa2_.forward(fc2_.forward(fa1_.forward(fc1_.forward(flat)))));
}

nn::Tensor<float> AbstractorModel::logits(const std::vector<const Observation*>& batch) {
  std::vector<int> ident(batch.size(), 0);
  return forward_internal(batch, ident);
}

nn::Tensor<float> AbstractorModel::logits_transformed(const std::vector<const Observation*>& batch,
                                                      const std::vector<int>& transforms) {
  return forward_internal(batch, transforms);
}

void AbstractorModel::backward(const nn::Tensor<float>& dlogits) {
  auto dflat = fc1_.backward(fa1_.backward(fc2_.backward(fa2_.backward(fc3_.backward(dlogits)))));
  const int n = batch_n_;

  // split the concatenated features back into the two branches
  int side_t = grid_.w;
  for (int s = 0; s < 5; ++s)
    if (side_t >= 2) side_t /= 2;
  int side_h = grid_.h_patch;
  for (int s = 0; s < 3; ++s)
    if (side_h >= 2) side_h /= 2;

  nn::Tensor<float> dt(n, cfg_.c_top, side_t, side_t);
  nn::Tensor<float> dh(n, cfg_.c_hand, side_h, side_h);
  for (int i = 0; i < n; ++i) {
    const float* row = dflat.data() + (size_t)i * dflat.c;
    std::memcpy(dt.image(i), row, sizeof(float) * top_flat_);
    std::memcpy(dh.image(i), row + top_flat_, sizeof(float) * hand_flat_);
  }

  for (int s = 4; s >= 0; --s) {
    if (tpool_used_[s]) dt = tpools_[s].backward(dt);
    dt = tconvs_[s].backward(tacts_[s].backward(dt));
  }
  for (int s = 2; s >= 0; --s) {
    if (hpool_used_[s]) dh = hpools_[s].backward(dh);
    dh = hconvs_[s].backward(hacts_[s].backward(dh));
  }
}

std::vector<double> AbstractorModel::symmetrized_logits(const Observation& obs) {
  std::vector<const Observation*> batch(8, &obs);
  std::vector<int> transforms{0, 1, 2, 3, 4, 5, 6, 7};
  auto lg = forward_internal(batch, transforms);
  std::vector<double> avg(n_classes_, 0.0);
  for (int g = 0; g < 8; ++g)
    for (int c = 0; c < n_classes_; ++c) avg[c] += lg.v[(size_t)g * n_classes_ + c];
  for (auto& v : avg) v /= 8.0;
  return avg;
}

std::pair<int, std::vector<double>> AbstractorModel::classify(const Observation& obs) {
  std::vector<double> lg;
  if (cfg_.invariant) {
    lg = symmetrized_logits(obs);
  } else {
    std::vector<const Observation*> batch{&obs};
    auto t = logits(batch);
    lg.assign(t.v.begin(), t.v.end());
  }
  double mx = lg[0];
  for (double v : lg) mx = std::max(mx, v);
  double sum = 0.0;
  std::vector<double> probs(n_classes_);
  for (int c = 0; c < n_classes_; ++c) {
    probs[c] = std::exp(lg[c] - mx);
    sum += probs[c];
  }
  int best = 0;
  for (int c = 0; c < n_classes_; ++c) {
    probs[c] /= sum;
    if (probs[c] > probs[best]) best = c;
  }
  return {best, probs};
}

std::vector<nn::ParamRef<float>> AbstractorModel::params() {
  std::vector<nn::ParamRef<float>> out;
  for (auto& c : tconvs_) c.params(out);
  for (auto& c : hconvs_) c.params(out);
  fc1_.params(out);
  fc2_.params(out);
  fc3_.params(out);
  return out;
}

AbstractorReport train_abstractor(AbstractorModel& model, const AbstractorDataset& data,
                                  uint64_t seed) {
  if (data.n_classes != model.n_classes())
    throw std::runtime_error("abstractor: dataset class count does not match the model");
  if (data.train.empty()) throw std::runtime_error("abstractor: empty training set");

  const auto& cfg = model.config();
  nn::Adam<float> opt(model.params(), (float)cfg.lr);
  Rng rng(derive_seed(seed, 0x12abu));

  AbstractorReport rep;
  const int steps_per_epoch = std::max(1, (int)(data.train.size() / cfg.batch));
  double epoch_acc = 0.0;
  int epoch_n = 0;

  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<const Observation*> batch;
    std::vector<int> labels;
    std::vector<int> transforms;
    for (int b = 0; b < cfg.batch; ++b) {
      int idx = rng.uniform_int(0, (int)data.train.size() - 1);
      batch.push_back(&data.train[idx]);
      labels.push_back(data.train_labels[idx]);
      // dihedral augmentation keeps training aligned with symmetrized inference
      transforms.push_back(cfg.invariant ? rng.uniform_int(0, 7) : 0);
    }
    auto lg = model.logits_transformed(batch, transforms);
    nn::Tensor<float> dlg;
    float loss = nn::softmax_cross_entropy(lg, labels, &dlg);
    opt.zero_grad();
    model.backward(dlg);
    opt.step();
    rep.final_loss = loss;
    epoch_acc += loss;
    ++epoch_n;
    if (epoch_n == steps_per_epoch) {
      rep.epoch_losses.push_back(epoch_acc / epoch_n);
      epoch_acc = 0.0;
      epoch_n = 0;
    }
  }
  if (epoch_n > 0) rep.epoch_losses.push_back(epoch_acc / epoch_n);

  rep.train_accuracy = evaluate_accuracy(model, data.train, data.train_labels);
  rep.heldout_accuracy = evaluate_accuracy(model, data.heldout, data.heldout_labels);
  return rep;
}

double evaluate_accuracy(AbstractorModel& model, const std::vector<Observation>& obs,
                         const std::vector<int>& labels) {
  if (obs.empty()) return 0.0;
  int correct = 0;
  for (size_t i = 0; i < obs.size(); ++i) {
    auto [cls, probs] = model.classify(obs[i]);
    if (cls == labels[i]) ++correct;
  }
  return (double)correct / (double)obs.size();
}

void save_abstractor(const std::string& path, AbstractorModel& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("abstractor: cannot write '" + path + "'");
  ckpt::write_magic(os, "abstractor");
  const GridSpec& g = model.grid();
  ckpt::write_i32(os, g.w);
  ckpt::write_i32(os, g.r);
  ckpt::write_i32(os, g.h_patch);
  ckpt::write_f64(os, g.cell_height_unit);
  ckpt::write_i32(os, model.n_classes());
  const auto& cfg = model.config();
  ckpt::write_i32(os, cfg.invariant ? 1 : 0);
  ckpt::write_i32(os, cfg.c_top);
  ckpt::write_i32(os, cfg.c_hand);
  ckpt::write_i32(os, cfg.fc1);
  ckpt::write_i32(os, cfg.fc2);
  ckpt::write_params(os, model.params());
}

AbstractorModel load_abstractor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("abstractor: cannot open '" + path + "'");
  ckpt::expect_magic(is, "abstractor");
  GridSpec g;
  g.w = ckpt::read_i32(is);
  g.r = ckpt::read_i32(is);
  g.h_patch = ckpt::read_i32(is);
  g.cell_height_unit = (float)ckpt::read_f64(is);
  int n_classes = ckpt::read_i32(is);
  AbstractorConfig cfg;
  cfg.invariant = ckpt::read_i32(is) != 0;
  cfg.c_top = ckpt::read_i32(is);
  cfg.c_hand = ckpt::read_i32(is);
  cfg.fc1 = ckpt::read_i32(is);
  cfg.fc2 = ckpt::read_i32(is);
  AbstractorModel model(g, n_classes, cfg, 0);
  ckpt::read_params(is, model.params());
  return model;
}

int OracleAbstractor::classify_scene(const SceneState& scene) const {
  const int n = task_->n_blocks();
  int prefix = structure_prefix(scene, task_->structure);
  int stage = 2 * n - 2 - 2 * prefix;
  if (scene.held.has_value() && prefix < n - 1 &&
      scene.held->kind.shape == task_->structure.constraints[prefix].shape)
    stage -= 1;
  return std::max(stage, 0);
}

}  // namespace leo
