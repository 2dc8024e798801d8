#include "leo/qfunc.hpp"

#include <cstring>

namespace leo {

namespace {

// Identity-at-start dynamic filter: small weights and an identity bias so
// every goal starts from the same well-behaved mix.
template <typename T>
void shape_filter_generator(nn::Dense<T>& fc, int channels) {
  for (auto& w : fc.weights()) w *= (T)0.1;
  auto& b = fc.bias();
  std::fill(b.begin(), b.end(), T(0));
  for (int i = 0; i < channels; ++i) b[(size_t)i * channels + i] = T(1);
}

template <typename T>
nn::Tensor<T> concat_channels(const nn::Tensor<T>& a, const nn::Tensor<T>& b) {
  nn::Tensor<T> out(a.n, a.c + b.c, a.h, a.w);
  const size_t ha = (size_t)a.c * a.h * a.w;
  const size_t hb = (size_t)b.c * b.h * b.w;
  for (int i = 0; i < a.n; ++i) {
    std::memcpy(out.image(i), a.image(i), ha * sizeof(T));
    std::memcpy(out.image(i) + ha, b.image(i), hb * sizeof(T));
  }
  return out;
}

}  // namespace

template <typename T>
QxyModel<T>::QxyModel(const GridSpec& grid, int goal_dim, const QFuncConfig& cfg, uint64_t seed)
    : grid_(grid), goal_dim_(goal_dim), cfg_(cfg) {
  Rng rng(derive_seed(seed, 0x9f1u));
  const int cd = 1 + cfg.henc_c + goal_dim;
  henc_conv_ = nn::Conv2d<T>("qxy.henc", 1, cfg.henc_c, 3, rng);
  const int in_c = cfg.dynamic_cond ? 1 : 1 + cd;
  conv1_ = nn::Conv2d<T>("qxy.conv1", in_c, cfg.c1, 3, rng);
  conv2_ = nn::Conv2d<T>("qxy.conv2", cfg.c1, cfg.c2, 3, rng);
  if (cfg.dynamic_cond) {
    dyn_ = nn::DynamicMix<T>(cfg.c2, cfg.c2);
    cond_fc1_ = nn::Dense<T>("qxy.cond1", cd, cfg.cond_hidden, rng);
    cond_fc2_ = nn::Dense<T>("qxy.cond2", cfg.cond_hidden, dyn_.filter_dim(), rng);
    shape_filter_generator(cond_fc2_, cfg.c2);
  } else {
    dyn_static_ = nn::Conv2d<T>("qxy.dynstatic", cfg.c2, cfg.c2, 1, rng);
  }
  conv3_ = nn::Conv2d<T>("qxy.conv3", cfg.c2, cfg.c2, 3, rng);
  mix_ = nn::Conv2d<T>("qxy.mix", cfg.c1 + cfg.c2, cfg.c1, 1, rng);
  conv4_ = nn::Conv2d<T>("qxy.conv4", cfg.c1, cfg.head_c, 3, rng);
  head_ = nn::Conv2d<T>("qxy.head", cfg.head_c, 2, 1, rng);
  // pick and place channels start identical: early pick competence then
  // seeds sensible place exploration through the shared trunk
  {
    auto& w = head_.weights();
    for (int i = 0; i < cfg.head_c; ++i) w[(size_t)cfg.head_c + i] = w[i];
  }
}

template <typename T>
nn::Tensor<T> QxyModel<T>::cond_forward(const nn::Tensor<T>& inhand,
                                        const std::vector<int>& holding,
                                        const nn::Tensor<T>& goal) {
  const int n = inhand.n;
  auto hfeat = henc_act_.forward(henc_conv_.forward(inhand));
  henc_hw_ = hfeat.h * hfeat.w;
  nn::Tensor<T> vec(n, 1 + cfg_.henc_c + goal_dim_, 1, 1);
  for (int i = 0; i < n; ++i) {
    T* row = vec.data() + (size_t)i * vec.c;
    row[0] = (T)holding[i];
    for (int ch = 0; ch < cfg_.henc_c; ++ch) {
      T acc = T(0);
      const T* plane = hfeat.image(i) + (size_t)ch * henc_hw_;
      for (int p = 0; p < henc_hw_; ++p) acc += plane[p];
      row[1 + ch] = acc / (T)henc_hw_;
    }
    for (int gd = 0; gd < goal_dim_; ++gd)
      row[1 + cfg_.henc_c + gd] = goal.v[(size_t)i * goal_dim_ + gd];
  }
  if (!cfg_.dynamic_cond) return vec;
  return cond_fc2_.forward(cond_act_.forward(cond_fc1_.forward(vec)));
}

template <typename T>
void QxyModel<T>::cond_backward(const nn::Tensor<T>& dvec_or_dwmat) {
  nn::Tensor<T> dvec;
  if (cfg_.dynamic_cond) {
    auto d1 = cond_fc2_.backward(dvec_or_dwmat);
    auto d2 = cond_act_.backward(d1);
    dvec = cond_fc1_.backward(d2);
  } else {
    dvec = dvec_or_dwmat;
  }
  // route the in-hand feature part back into the encoder (mean pool expand)
  const int n = dvec.n;
  const int side = (int)std::lround(std::sqrt((double)henc_hw_));
  nn::Tensor<T> dplane(n, cfg_.henc_c, side, side);
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < cfg_.henc_c; ++ch) {
      T g = dvec.v[(size_t)i * dvec.c + 1 + ch] / (T)henc_hw_;
      T* plane = dplane.image(i) + (size_t)ch * henc_hw_;
      for (int p = 0; p < henc_hw_; ++p) plane[p] = g;
    }
  henc_conv_.backward(henc_act_.backward(dplane));
}

template <typename T>
nn::Tensor<T> QxyModel<T>::trunk_forward(const nn::Tensor<T>& x, const nn::Tensor<T>& wmat) {
  s1_ = a1_.forward(conv1_.forward(x));
  auto p = pool_.forward(s1_);
  auto s2 = a2_.forward(conv2_.forward(p));
  nn::Tensor<T> s3;
  if (cfg_.dynamic_cond)
    s3 = a3_.forward(dyn_.forward(s2, wmat));
  else
    s3 = a3_.forward(dyn_static_.forward(s2));
  auto s4 = a4_.forward(conv3_.forward(s3));
  auto u = up_.forward(s4);
  cat_in_ = concat_channels(s1_, u);
  auto m = a5_.forward(mix_.forward(cat_in_));
  auto s5 = a6_.forward(conv4_.forward(m));
  return head_.forward(s5);
}

template <typename T>
nn::Tensor<T> QxyModel<T>::trunk_backward(const nn::Tensor<T>& dy, nn::Tensor<T>& dwmat) {
  auto d5 = conv4_.backward(a6_.backward(head_.backward(dy)));
  auto dcat = mix_.backward(a5_.backward(d5));
  nn::Tensor<T> ds1(dcat.n, cfg_.c1, dcat.h, dcat.w);
  nn::Tensor<T> du(dcat.n, cfg_.c2, dcat.h, dcat.w);
  const size_t h1 = (size_t)cfg_.c1 * dcat.h * dcat.w;
  const size_t h2 = (size_t)cfg_.c2 * dcat.h * dcat.w;
  for (int i = 0; i < dcat.n; ++i) {
    std::memcpy(ds1.image(i), dcat.image(i), h1 * sizeof(T));
    std::memcpy(du.image(i), dcat.image(i) + h1, h2 * sizeof(T));
  }
  auto ds4 = up_.backward(du);
  auto ds3 = conv3_.backward(a4_.backward(ds4));
  nn::Tensor<T> ds2;
  if (cfg_.dynamic_cond)
    ds2 = dyn_.backward(a3_.backward(ds3), dwmat);
  else
    ds2 = dyn_static_.backward(a3_.backward(ds3));
  auto dp = conv2_.backward(a2_.backward(ds2));
  auto dpool = pool_.backward(dp);
  for (size_t i = 0; i < dpool.v.size(); ++i) dpool.v[i] += ds1.v[i];
  return conv1_.backward(a1_.backward(dpool));
}

template <typename T>
nn::Tensor<T> QxyModel<T>::forward(const nn::Tensor<T>& img, const nn::Tensor<T>& inhand,
                                   const std::vector<int>& holding, const nn::Tensor<T>& goal,
                                   int group_override) {
  const int n = img.n;
  const int G = group_override > 0 ? group_override : cfg_.group;
  const int w = grid_.w;
  batch_ = n;
  group_used_ = G;

  auto cond = cond_forward(inhand, holding, goal);

  const int cd = cond.c;
  const int in_c = cfg_.dynamic_cond ? 1 : 1 + cd;
  nn::Tensor<T> x(n * G, in_c, w, w);
  for (int i = 0; i < n; ++i) {
    for (int g = 0; g < G; ++g) {
      T* dst = x.image(i * G + g);
      dihedral_apply_square<T>(w, g, img.image(i), dst);
      if (!cfg_.dynamic_cond) {
        for (int ch = 0; ch < cd; ++ch) {
          T v = cond.v[(size_t)i * cd + ch];
          std::fill(dst + (size_t)(1 + ch) * w * w, dst + (size_t)(2 + ch) * w * w, v);
        }
      }
    }
  }

  nn::Tensor<T> wmat;
  if (cfg_.dynamic_cond) {
    wmat.resize(n * G, cond.c, 1, 1);
    for (int i = 0; i < n; ++i)
      for (int g = 0; g < G; ++g)
        std::memcpy(wmat.image(i * G + g), cond.image(i), sizeof(T) * cond.c);
  }

  auto y = trunk_forward(x, wmat);

  nn::Tensor<T> out(n, 2, w, w);
  std::vector<double> acc((size_t)2 * w * w);
  std::vector<T> back((size_t)w * w);
  for (int i = 0; i < n; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int g = 0; g < G; ++g) {
      int invg = dihedral_inverse_index(g);
      for (int ch = 0; ch < 2; ++ch) {
        const T* src = y.image(i * G + g) + (size_t)ch * w * w;
        dihedral_apply_square<T>(w, invg, src, back.data());
        double* a = acc.data() + (size_t)ch * w * w;
        for (size_t p = 0; p < back.size(); ++p) a[p] += (double)back[p];
      }
    }
    T* dst = out.image(i);
    for (size_t p = 0; p < acc.size(); ++p) dst[p] = (T)(acc[p] / G);
  }
  return out;
}

template <typename T>
void QxyModel<T>::backward(const nn::Tensor<T>& dmaps) {
  const int n = batch_;
  const int G = group_used_;
  const int w = grid_.w;
  nn::Tensor<T> dy(n * G, 2, w, w);
  std::vector<T> fwd((size_t)w * w);
  const T scale = T(1) / (T)G;
  for (int i = 0; i < n; ++i) {
    for (int g = 0; g < G; ++g) {
      for (int ch = 0; ch < 2; ++ch) {
        const T* src = dmaps.image(i) + (size_t)ch * w * w;
        dihedral_apply_square<T>(w, g, src, fwd.data());
        T* dst = dy.image(i * G + g) + (size_t)ch * w * w;
        for (size_t p = 0; p < fwd.size(); ++p) dst[p] = fwd[p] * scale;
      }
    }
  }
  nn::Tensor<T> dwmat;
  auto dx = trunk_backward(dy, dwmat);
  if (cfg_.dynamic_cond) {
    nn::Tensor<T> dsum(n, dwmat.c, 1, 1);
    for (int i = 0; i < n; ++i)
      for (int g = 0; g < G; ++g) {
        const T* src = dwmat.image(i * G + g);
        T* dst = dsum.image(i);
        for (int k = 0; k < dwmat.c; ++k) dst[k] += src[k];
      }
    cond_backward(dsum);
  } else {
    const int cd = dx.c - 1;
    nn::Tensor<T> dvec(n, cd, 1, 1);
    for (int i = 0; i < n; ++i)
      for (int g = 0; g < G; ++g) {
        const T* im = dx.image(i * G + g);
        for (int ch = 0; ch < cd; ++ch) {
          T acc = T(0);
          const T* pl = im + (size_t)(1 + ch) * w * w;
          for (int p = 0; p < w * w; ++p) acc += pl[p];
          dvec.v[(size_t)i * cd + ch] += acc;
        }
      }
    cond_backward(dvec);
  }
}

template <typename T>
std::vector<nn::ParamRef<T>> QxyModel<T>::params() {
  std::vector<nn::ParamRef<T>> out;
  henc_conv_.params(out);
  conv1_.params(out);
  conv2_.params(out);
  if (cfg_.dynamic_cond) {
    cond_fc1_.params(out);
    cond_fc2_.params(out);
  } else {
    dyn_static_.params(out);
  }
  conv3_.params(out);
  mix_.params(out);
  conv4_.params(out);
  head_.params(out);
  return out;
}

template <typename T>
void QxyModel<T>::copy_from(QxyModel& other) {
  auto dst = params();
  auto src = other.params();
  for (size_t i = 0; i < dst.size(); ++i) *dst[i].value = *src[i].value;
}

// ---------------------------------------------------------------------------

template <typename T>
QthetaModel<T>::QthetaModel(const GridSpec& grid, int goal_dim, const QFuncConfig& cfg,
                            uint64_t seed)
    : grid_(grid), goal_dim_(goal_dim), cfg_(cfg) {
  Rng rng(derive_seed(seed, 0x7e7au));
  conv1_ = nn::Conv2d<T>("qt.conv1", 2, cfg.qt_c1, 3, rng);
  conv2_ = nn::Conv2d<T>("qt.conv2", cfg.qt_c1, cfg.qt_c2, 3, rng);
  dyn_ = nn::DynamicMix<T>(cfg.qt_c2, cfg.qt_c2);
  const int cd = 1 + goal_dim;
  cond_fc1_ = nn::Dense<T>("qt.cond1", cd, cfg.cond_hidden, rng);
  cond_fc2_ = nn::Dense<T>("qt.cond2", cfg.cond_hidden, dyn_.filter_dim(), rng);
  shape_filter_generator(cond_fc2_, cfg.qt_c2);
  const int p = grid.h_patch;
  const int side = (p / 2) / 2;
  flat_dim_ = cfg.qt_c2 * side * side;
  fc1_ = nn::Dense<T>("qt.fc1", flat_dim_, cfg.qt_hidden, rng);
  fc2_ = nn::Dense<T>("qt.fc2", cfg.qt_hidden, 1, rng);
}

template <typename T>
nn::Tensor<T> QthetaModel<T>::score_forward(const nn::Tensor<T>& x, const nn::Tensor<T>& wmat) {
  auto s1 = a1_.forward(conv1_.forward(x));
  auto p1 = pool1_.forward(s1);
  auto s2 = a2_.forward(conv2_.forward(p1));
  auto s3 = a3_.forward(dyn_.forward(s2, wmat));
  auto p2 = pool2_.forward(s3);
  nn::Tensor<T> flat(p2.n, flat_dim_, 1, 1);
  std::memcpy(flat.data(), p2.data(), sizeof(T) * flat.size());
  auto h = a4_.forward(fc1_.forward(flat));
  return fc2_.forward(h);
}

template <typename T>
nn::Tensor<T> QthetaModel<T>::score_backward(const nn::Tensor<T>& dy, nn::Tensor<T>& dwmat) {
  auto dh = fc1_.backward(a4_.backward(fc2_.backward(dy)));
  const int p = grid_.h_patch;
  const int side = (p / 2) / 2;
  nn::Tensor<T> dp2(dh.n, cfg_.qt_c2, side, side);
  std::memcpy(dp2.data(), dh.data(), sizeof(T) * dh.size());
  auto ds3 = pool2_.backward(dp2);
  auto ds2 = dyn_.backward(a3_.backward(ds3), dwmat);
  auto dp1 = conv2_.backward(a2_.backward(ds2));
  auto ds1 = pool1_.backward(dp1);
  return conv1_.backward(a1_.backward(ds1));
}

template <typename T>
nn::Tensor<T> QthetaModel<T>::forward(const nn::Tensor<T>& inhand, const nn::Tensor<T>& patch,
                                      const std::vector<int>& holding,
                                      const nn::Tensor<T>& goal) {
  const int n = inhand.n;
  const int R = grid_.r;
  const int p = grid_.h_patch;
  batch_ = n;

  nn::Tensor<T> cond(n, 1 + goal_dim_, 1, 1);
  for (int i = 0; i < n; ++i) {
    cond.v[(size_t)i * cond.c] = (T)holding[i];
    for (int gd = 0; gd < goal_dim_; ++gd)
      cond.v[(size_t)i * cond.c + 1 + gd] = goal.v[(size_t)i * goal_dim_ + gd];
  }
  auto wmat1 = cond_fc2_.forward(cond_act_.forward(cond_fc1_.forward(cond)));

  nn::Tensor<T> x(n * R, 2, p, p);
  nn::Tensor<T> wmat(n * R, wmat1.c, 1, 1);
  for (int i = 0; i < n; ++i) {
    const T* pp = patch.image(i);
    const T* hh = inhand.image(i);
    for (int th = 0; th < R; ++th) {
      T* dst = x.image(i * R + th);
      std::memcpy(dst, hh, sizeof(T) * p * p);
      rotate_patch<T>(pp, p, -th, grid_.r, dst + (size_t)p * p);
      std::memcpy(wmat.image(i * R + th), wmat1.image(i), sizeof(T) * wmat1.c);
    }
  }

  auto scores = score_forward(x, wmat);
  nn::Tensor<T> out(n, R, 1, 1);
  for (int i = 0; i < n; ++i)
    for (int th = 0; th < R; ++th) out.v[(size_t)i * R + th] = scores.v[(size_t)i * R + th];
  return out;
}

template <typename T>
void QthetaModel<T>::backward(const nn::Tensor<T>& dvals) {
  const int n = batch_;
  const int R = grid_.r;
  nn::Tensor<T> dy(n * R, 1, 1, 1);
  std::memcpy(dy.data(), dvals.data(), sizeof(T) * dy.size());
  nn::Tensor<T> dwmat;
  score_backward(dy, dwmat);
  nn::Tensor<T> dsum(n, dwmat.c, 1, 1);
  for (int i = 0; i < n; ++i)
    for (int th = 0; th < R; ++th) {
      const T* src = dwmat.image(i * R + th);
      T* dst = dsum.image(i);
      for (int k = 0; k < dwmat.c; ++k) dst[k] += src[k];
    }
  cond_fc1_.backward(cond_act_.backward(cond_fc2_.backward(dsum)));
}

template <typename T>
std::vector<nn::ParamRef<T>> QthetaModel<T>::params() {
  std::vector<nn::ParamRef<T>> out;
  conv1_.params(out);
  conv2_.params(out);
  cond_fc1_.params(out);
  cond_fc2_.params(out);
  fc1_.params(out);
  fc2_.params(out);
  return out;
}

template <typename T>
void QthetaModel<T>::copy_from(QthetaModel& other) {
  auto dst = params();
  auto src = other.params();
  for (size_t i = 0; i < dst.size(); ++i) *dst[i].value = *src[i].value;
}

template class QxyModel<float>;
template class QxyModel<double>;
template class QthetaModel<float>;
template class QthetaModel<double>;

// ---------------------------------------------------------------------------

std::pair<int, int> argmax_position(const nn::Tensor<float>& maps, int sample, int map_index) {
  const int w = maps.w;
  const float* m = maps.image(sample) + (size_t)map_index * w * w;
  int best = 0;
  for (int i = 1; i < w * w; ++i)
    if (m[i] > m[best]) best = i;
  return {best % w, best / w};
}

Action select_action(QHeads<float>& heads, const Observation& obs, int goal, double eps,
                     Rng& rng) {
  const GridSpec& g = heads.qxy.grid();
  Action a;
  a.p = obs.holding ? Verb::place : Verb::pick;

  if (rng.uniform01() < eps) {
    a.x = rng.uniform_int(0, g.w - 1);
    a.y = rng.uniform_int(0, g.w - 1);
    a.theta = rng.uniform_int(0, g.r - 1);
    return a;
  }

  const int gd = heads.qxy.goal_dim();
  nn::Tensor<float> img(1, 1, g.w, g.w);
  std::memcpy(img.data(), obs.topdown.data(), sizeof(float) * img.size());
  nn::Tensor<float> inhand(1, 1, g.h_patch, g.h_patch);
  std::memcpy(inhand.data(), obs.inhand.data(), sizeof(float) * inhand.size());
  nn::Tensor<float> goal_t(1, gd, 1, 1);
  if (gd > 0 && goal >= 0 && goal < gd) goal_t.v[goal] = 1.0f;
  std::vector<int> holding{obs.holding ? 1 : 0};

  auto maps = heads.qxy.forward(img, inhand, holding, goal_t);
  auto [x, y] = argmax_position(maps, 0, obs.holding ? 1 : 0);
  a.x = x;
  a.y = y;

  nn::Tensor<float> patch(1, 1, g.h_patch, g.h_patch);
  extract_patch(obs.topdown.data(), g.w, x, y, g.h_patch, patch.data());
  auto vals = heads.qtheta.forward(inhand, patch, holding, goal_t);
  int best = 0;
  for (int th = 1; th < g.r; ++th)
    if (vals.v[th] > vals.v[best]) best = th;
  a.theta = best;
  return a;
}

}  // namespace leo
