#pragma once

#include "leo/nn.hpp"
#include "leo/sim.hpp"

namespace leo {

/// Labeled observation set for abstractor training.
struct AbstractorDataset {
  GridSpec grid;
  int n_classes = 0;
  std::vector<Observation> train;
  std::vector<int> train_labels;
  std::vector<Observation> heldout;
  std::vector<int> heldout_labels;
};

struct AbstractorConfig {
  int steps = 12000;
  int batch = 32;
  double lr = 1e-3;
  bool invariant = true;  // dihedral-averaged logits at inference
  int c_top = 16;         // top-down branch width (first stage uses c_top/2)
  int c_hand = 16;
  int fc1 = 64;
  int fc2 = 32;
};

/// Observation classifier: five conv+pool stages over the heightmap, three
/// over the in-hand image, grasp flag appended before three FC stages.
class AbstractorModel {
 public:
  AbstractorModel() = default;
  AbstractorModel(const GridSpec& grid, int n_classes, const AbstractorConfig& cfg, uint64_t seed);

  /// Raw logits for a batch (no symmetrization).
  nn::Tensor<float> logits(const std::vector<const Observation*>& batch);
  /// Raw logits with a dihedral transform applied per sample (training
  /// augmentation for the invariant mode).
  nn::Tensor<float> logits_transformed(const std::vector<const Observation*>& batch,
                                       const std::vector<int>& transforms);
  void backward(const nn::Tensor<float>& dlogits);

  /// Dihedral-averaged logits; exactly invariant under the 8 grid transforms.
  std::vector<double> symmetrized_logits(const Observation& obs);

  /// Class probabilities and the argmax label (ties toward the smaller
  /// index). Uses symmetrized logits when invariant mode is on.
  std::pair<int, std::vector<double>> classify(const Observation& obs);

  std::vector<nn::ParamRef<float>> params();

  const GridSpec& grid() const { return grid_; }
  int n_classes() const { return n_classes_; }
  const AbstractorConfig& config() const { return cfg_; }
  bool invariant() const { return cfg_.invariant; }
  void set_invariant(bool on) { cfg_.invariant = on; }

 private:
  nn::Tensor<float> forward_internal(const std::vector<const Observation*>& batch,
                                     const std::vector<int>& transforms);

  GridSpec grid_;
  int n_classes_ = 0;
  AbstractorConfig cfg_;

  std::vector<nn::Conv2d<float>> tconvs_;
  std::vector<nn::MaxPool2<float>> tpools_;
  std::vector<nn::LeakyReLU<float>> tacts_;
  std::vector<nn::Conv2d<float>> hconvs_;
  std::vector<nn::MaxPool2<float>> hpools_;
  std::vector<nn::LeakyReLU<float>> hacts_;
  nn::Dense<float> fc1_, fc2_, fc3_;
  nn::LeakyReLU<float> fa1_, fa2_;

  std::vector<bool> tpool_used_, hpool_used_;
  int top_flat_ = 0, hand_flat_ = 0;
  int batch_n_ = 0;
};

struct AbstractorReport {
  double final_loss = 0.0;
  double train_accuracy = 0.0;
  double heldout_accuracy = 0.0;
  std::vector<double> epoch_losses;
};

/// Cross-entropy training for the configured number of steps; seeded and
/// reproducible in serial mode.
AbstractorReport train_abstractor(AbstractorModel& model, const AbstractorDataset& data,
                                  uint64_t seed);

double evaluate_accuracy(AbstractorModel& model, const std::vector<Observation>& obs,
                         const std::vector<int>& labels);

void save_abstractor(const std::string& path, AbstractorModel& model);
AbstractorModel load_abstractor(const std::string& path);

/// Ground-truth abstract-state labeler with privileged scene access; used
/// by protocol tests and as a reference goal checker.
class OracleAbstractor {
 public:
  explicit OracleAbstractor(std::shared_ptr<const TaskSpec> task) : task_(std::move(task)) {}
  int classify_scene(const SceneState& scene) const;

 private:
  std::shared_ptr<const TaskSpec> task_;
};

}  // namespace leo
