#pragma once

#include "leo/nn.hpp"
#include "leo/rng.hpp"
#include "leo/sim.hpp"

namespace leo {

struct QFuncConfig {
  int c1 = 8;              // full-resolution trunk width
  int c2 = 12;             // pooled trunk width
  int head_c = 6;          // pre-head width
  int henc_c = 4;          // in-hand encoder channels
  int cond_hidden = 32;    // conditioning MLP hidden width
  int group = 8;           // 8 = dihedral (rotations + flips), 4 = rotations only
  bool dynamic_cond = true;  // dynamic 1x1 filter vs broadcast planes
  int qt_c1 = 8;           // rotation head widths
  int qt_c2 = 12;
  int qt_hidden = 32;
};

/// Position Q-function: fully-convolutional trunk over the heightmap with a
/// conditioning pathway injecting (H, k, goal) through a generated 1x1
/// filter. Outputs a pick map and a place map, symmetrized over the
/// configured dihedral subgroup so the maps are exactly equivariant.
template <typename T>
class QxyModel {
 public:
  QxyModel() = default;
  QxyModel(const GridSpec& grid, int goal_dim, const QFuncConfig& cfg, uint64_t seed);

  /// I: (n,1,w,w), H: (n,1,p,p), holding: n flags, goal: (n, goal_dim) one-hot.
  /// Returns (n,2,w,w): channel 0 pick, channel 1 place. group_override
  /// selects how many dihedral elements to average over (0 = configured
  /// group; 1 = raw network, used by augmented training).
  nn::Tensor<T> forward(const nn::Tensor<T>& img, const nn::Tensor<T>& inhand,
                        const std::vector<int>& holding, const nn::Tensor<T>& goal,
                        int group_override = 0);
  void backward(const nn::Tensor<T>& dmaps);

  std::vector<nn::ParamRef<T>> params();
  void copy_from(QxyModel& other);

  const GridSpec& grid() const { return grid_; }
  int goal_dim() const { return goal_dim_; }
  const QFuncConfig& config() const { return cfg_; }

 private:
  nn::Tensor<T> trunk_forward(const nn::Tensor<T>& x, const nn::Tensor<T>& wmat);
  nn::Tensor<T> trunk_backward(const nn::Tensor<T>& dy, nn::Tensor<T>& dwmat);
  nn::Tensor<T> cond_forward(const nn::Tensor<T>& inhand, const std::vector<int>& holding,
                             const nn::Tensor<T>& goal);
  void cond_backward(const nn::Tensor<T>& dwmat);

  GridSpec grid_;
  int goal_dim_ = 0;
  QFuncConfig cfg_;

  nn::Conv2d<T> henc_conv_;
  nn::LeakyReLU<T> henc_act_;
  nn::Dense<T> cond_fc1_, cond_fc2_;
  nn::LeakyReLU<T> cond_act_;

  nn::Conv2d<T> conv1_, conv2_, conv3_, mix_, conv4_, head_;
  nn::DynamicMix<T> dyn_;
  nn::Conv2d<T> dyn_static_;  // used in broadcast-planes mode
  nn::LeakyReLU<T> a1_, a2_, a3_, a4_, a5_, a6_;
  nn::MaxPool2<T> pool_;
  nn::UpsampleNearest2<T> up_;

  // caches for backward
  nn::Tensor<T> s1_, cat_in_;
  int batch_ = 0;
  int group_used_ = 0;
  int henc_hw_ = 0;
};

/// Rotation Q-function: a scalar scorer over (H, local patch) pairs,
/// conditioned on (k, goal), evaluated on R rotated copies of the patch so
/// rotating the patch by one step cyclically shifts the output vector.
template <typename T>
class QthetaModel {
 public:
  QthetaModel() = default;
  QthetaModel(const GridSpec& grid, int goal_dim, const QFuncConfig& cfg, uint64_t seed);

  /// H, P: (n,1,p,p). Returns (n, R) Q-values.
  nn::Tensor<T> forward(const nn::Tensor<T>& inhand, const nn::Tensor<T>& patch,
                        const std::vector<int>& holding, const nn::Tensor<T>& goal);
  void backward(const nn::Tensor<T>& dvals);

  std::vector<nn::ParamRef<T>> params();
  void copy_from(QthetaModel& other);

 private:
  nn::Tensor<T> score_forward(const nn::Tensor<T>& x, const nn::Tensor<T>& wmat);
  nn::Tensor<T> score_backward(const nn::Tensor<T>& dy, nn::Tensor<T>& dwmat);

  GridSpec grid_;
  int goal_dim_ = 0;
  QFuncConfig cfg_;

  nn::Dense<T> cond_fc1_, cond_fc2_;
  nn::LeakyReLU<T> cond_act_;

  nn::Conv2d<T> conv1_, conv2_;
  nn::DynamicMix<T> dyn_;
  nn::LeakyReLU<T> a1_, a2_, a3_, a4_;
  nn::MaxPool2<T> pool1_, pool2_;
  nn::Dense<T> fc1_, fc2_;

  int batch_ = 0;
  int flat_dim_ = 0;
};

template <typename T>
struct QHeads {
  QxyModel<T> qxy;
  QthetaModel<T> qtheta;

  QHeads() = default;
  QHeads(const GridSpec& grid, int goal_dim, const QFuncConfig& cfg, uint64_t seed)
      : qxy(grid, goal_dim, cfg, seed), qtheta(grid, goal_dim, cfg, seed + 1) {}

  std::vector<nn::ParamRef<T>> params() {
    auto p = qxy.params();
    auto p2 = qtheta.params();
    p.insert(p.end(), p2.begin(), p2.end());
    return p;
  }
  void copy_from(QHeads& other) {
    qxy.copy_from(other.qxy);
    qtheta.copy_from(other.qtheta);
  }
};

/// Greedy / epsilon-greedy action selection over the factored heads.
/// Ties break to the smallest row-major position index, then smallest theta.
Action select_action(QHeads<float>& heads, const Observation& obs, int goal, double eps, Rng& rng);

/// Greedy position argmax of a (2, w, w) map pair restricted to the verb map.
std::pair<int, int> argmax_position(const nn::Tensor<float>& maps, int sample, int map_index);

}  // namespace leo
