#pragma once

#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "leo/rng.hpp"

namespace leo::nn {

/// 64-byte aligned storage so Eigen kernels take identical code paths for
/// identically-shaped problems regardless of where the heap places them;
/// required for bit-reproducible training.
template <typename T>
struct AlignedAlloc {
  using value_type = T;
  AlignedAlloc() = default;
  template <class U>
  AlignedAlloc(const AlignedAlloc<U>&) {}
  T* allocate(size_t n) {
    size_t bytes = ((n * sizeof(T) + 63) / 64) * 64;
    void* p = std::aligned_alloc(64, bytes);
    if (!p) throw std::bad_alloc();
    return (T*)p;
  }
  void deallocate(T* p, size_t) { std::free(p); }
  template <class U>
  bool operator==(const AlignedAlloc<U>&) const {
    return true;
  }
  template <class U>
  bool operator!=(const AlignedAlloc<U>&) const {
    return false;
  }
};

template <typename T>
using avec = std::vector<T, AlignedAlloc<T>>;

template <typename T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  avec<T> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_) { resize(n_, c_, h_, w_); }

  void resize(int n_, int c_, int h_, int w_) {
    n = n_; c = c_; h = h_; w = w_;
    v.assign((size_t)n * c * h * w, T(0));
  }
  size_t size() const { return v.size(); }
  T* data() { return v.data(); }
  const T* data() const { return v.data(); }
  T* image(int i) { return v.data() + (size_t)i * c * h * w; }
  const T* image(int i) const { return v.data() + (size_t)i * c * h * w; }
  T& at(int i, int ch, int y, int x) {
    return v[((size_t)i * c + ch) * h * w + (size_t)y * w + x];
  }
  T at(int i, int ch, int y, int x) const {
    return v[((size_t)i * c + ch) * h * w + (size_t)y * w + x];
  }
  void zero() { std::fill(v.begin(), v.end(), T(0)); }
};

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename T>
struct ParamRef {
  std::string name;
  avec<T>* value;
  avec<T>* grad;
};

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, int in_c, int out_c, int k, Rng& rng)
      : name_(name), in_c_(in_c), out_c_(out_c), k_(k) {
    w_.assign((size_t)out_c * in_c * k * k, T(0));
    b_.assign(out_c, T(0));
    gw_.assign(w_.size(), T(0));
    gb_.assign(b_.size(), T(0));
    T s = (T)std::sqrt(2.0 / (in_c * k * k));
    for (auto& x : w_) x = (T)((rng.uniform01() * 2.0 - 1.0) * s);
  }

  Tensor<T> forward(const Tensor<T>& x) {
    x_ = x;
    const int hw = x.h * x.w;
    const int kk = in_c_ * k_ * k_;
    Tensor<T> y(x.n, out_c_, x.h, x.w);
    if (k_ == 1) {
      // 1x1: the input planes already are the column matrix
      ConstMatMap<T> wm(w_.data(), out_c_, in_c_);
      for (int i = 0; i < x.n; ++i) {
        ConstMatMap<T> xm(x.image(i), in_c_, hw);
        MatMap<T> ym(y.image(i), out_c_, hw);
        ym.noalias() = wm * xm;
        for (int co = 0; co < out_c_; ++co) ym.row(co).array() += b_[co];
      }
      return y;
    }
    col_.assign((size_t)kk * hw, T(0));
    for (int i = 0; i < x.n; ++i) {
      im2col(x.image(i), x.h, x.w);
      ConstMatMap<T> wm(w_.data(), out_c_, kk);
      ConstMatMap<T> cm(col_.data(), kk, hw);
      MatMap<T> ym(y.image(i), out_c_, hw);
      ym.noalias() = wm * cm;
      for (int co = 0; co < out_c_; ++co) ym.row(co).array() += b_[co];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const int hw = x_.h * x_.w;
    const int kk = in_c_ * k_ * k_;
    Tensor<T> dx(x_.n, in_c_, x_.h, x_.w);
    if (k_ == 1) {
      ConstMatMap<T> wm(w_.data(), out_c_, in_c_);
      MatMap<T> gwm(gw_.data(), out_c_, in_c_);
      for (int i = 0; i < x_.n; ++i) {
        ConstMatMap<T> dym(dy.image(i), out_c_, hw);
        ConstMatMap<T> xm(x_.image(i), in_c_, hw);
        gwm.noalias() += dym * xm.transpose();
        for (int co = 0; co < out_c_; ++co) gb_[co] += dym.row(co).sum();
        MatMap<T> dxm(dx.image(i), in_c_, hw);
        dxm.noalias() = wm.transpose() * dym;
      }
      return dx;
    }
    avec<T> dcol((size_t)kk * hw);
    for (int i = 0; i < x_.n; ++i) {
      im2col(x_.image(i), x_.h, x_.w);
      ConstMatMap<T> dym(dy.image(i), out_c_, hw);
      ConstMatMap<T> cm(col_.data(), kk, hw);
      MatMap<T> gwm(gw_.data(), out_c_, kk);
      gwm.noalias() += dym * cm.transpose();
      for (int co = 0; co < out_c_; ++co) gb_[co] += dym.row(co).sum();
      ConstMatMap<T> wm(w_.data(), out_c_, kk);
      MatMap<T> dcm(dcol.data(), kk, hw);
      dcm.noalias() = wm.transpose() * dym;
      col2im(dcol.data(), dx.image(i), x_.h, x_.w);
    }
    return dx;
  }

  void params(std::vector<ParamRef<T>>& out) {
    out.push_back({name_ + ".w", &w_, &gw_});
    out.push_back({name_ + ".b", &b_, &gb_});
  }

  avec<T>& weights() { return w_; }
  avec<T>& bias() { return b_; }

 private:
  void im2col(const T* img, int h, int w) {
    const int half = k_ / 2;
    const int hw = h * w;
    T* col = col_.data();
    for (int ci = 0; ci < in_c_; ++ci) {
      const T* plane = img + (size_t)ci * hw;
      for (int dy = -half; dy <= half; ++dy) {
        for (int dx = -half; dx <= half; ++dx) {
          T* row = col;
          col += hw;
          for (int y = 0; y < h; ++y) {
            int sy = y + dy;
            if (sy < 0 || sy >= h) {
              std::fill(row, row + w, T(0));
              row += w;
              continue;
            }
            const T* src = plane + (size_t)sy * w;
            for (int x = 0; x < w; ++x) {
              int sx = x + dx;
              row[x] = (sx >= 0 && sx < w) ? src[sx] : T(0);
            }
            row += w;
          }
        }
      }
    }
  }

  void col2im(const T* col, T* img, int h, int w) {
    const int half = k_ / 2;
    const int hw = h * w;
    for (int ci = 0; ci < in_c_; ++ci) {
      T* plane = img + (size_t)ci * hw;
      for (int dy = -half; dy <= half; ++dy) {
        for (int dx = -half; dx <= half; ++dx) {
          const T* row = col;
          col += hw;
          for (int y = 0; y < h; ++y) {
            int sy = y + dy;
            if (sy < 0 || sy >= h) {
              row += w;
              continue;
            }
            T* dst = plane + (size_t)sy * w;
            for (int x = 0; x < w; ++x) {
              int sx = x + dx;
              if (sx >= 0 && sx < w) dst[sx] += row[x];
            }
            row += w;
          }
        }
      }
    }
  }

  std::string name_;
  int in_c_ = 0, out_c_ = 0, k_ = 3;
  avec<T> w_, b_, gw_, gb_;
  avec<T> col_;
  Tensor<T> x_;
};

template <typename T>
class Dense {
 public:
  Dense() = default;
  Dense(const std::string& name, int in, int out, Rng& rng) : name_(name), in_(in), out_(out) {
    w_.assign((size_t)out * in, T(0));
    b_.assign(out, T(0));
    gw_.assign(w_.size(), T(0));
    gb_.assign(b_.size(), T(0));
    T s = (T)std::sqrt(2.0 / in);
    for (auto& x : w_) x = (T)((rng.uniform01() * 2.0 - 1.0) * s);
  }

  // x: (n, in) flattened into Tensor with c=in, h=w=1
  Tensor<T> forward(const Tensor<T>& x) {
    x_ = x;
    Tensor<T> y(x.n, out_, 1, 1);
    ConstMatMap<T> xm(x.data(), x.n, in_);
    ConstMatMap<T> wm(w_.data(), out_, in_);
    MatMap<T> ym(y.data(), x.n, out_);
    ym.noalias() = xm * wm.transpose();
    for (int o = 0; o < out_; ++o) ym.col(o).array() += b_[o];
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx(x_.n, in_, 1, 1);
    ConstMatMap<T> dym(dy.data(), x_.n, out_);
    ConstMatMap<T> xm(x_.data(), x_.n, in_);
    MatMap<T> gwm(gw_.data(), out_, in_);
    gwm.noalias() += dym.transpose() * xm;
    for (int o = 0; o < out_; ++o) gb_[o] += dym.col(o).sum();
    ConstMatMap<T> wm(w_.data(), out_, in_);
    MatMap<T> dxm(dx.data(), x_.n, in_);
    dxm.noalias() = dym * wm;
    return dx;
  }

  void params(std::vector<ParamRef<T>>& out) {
    out.push_back({name_ + ".w", &w_, &gw_});
    out.push_back({name_ + ".b", &b_, &gb_});
  }

  avec<T>& weights() { return w_; }
  avec<T>& bias() { return b_; }
  int out_dim() const { return out_; }

 private:
  std::string name_;
  int in_ = 0, out_ = 0;
  avec<T> w_, b_, gw_, gb_;
  Tensor<T> x_;
};

/// Per-sample 1x1 channel mix whose weights come from a conditioning
/// network ("dynamic filter"): y[i] = W_i x[i] + b_i with
/// W_i = wmat[i] reshaped (out_c, in_c), b_i = wmat[i] tail.
template <typename T>
class DynamicMix {
 public:
  DynamicMix() = default;
  DynamicMix(int in_c, int out_c) : in_c_(in_c), out_c_(out_c) {}

  int filter_dim() const { return out_c_ * in_c_ + out_c_; }

  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& wmat) {
    x_ = x;
    wmat_ = wmat;
    const int hw = x.h * x.w;
    Tensor<T> y(x.n, out_c_, x.h, x.w);
    for (int i = 0; i < x.n; ++i) {
      ConstMatMap<T> wm(wmat.image(i), out_c_, in_c_);
      const T* bias = wmat.image(i) + out_c_ * in_c_;
      ConstMatMap<T> xm(x.image(i), in_c_, hw);
      MatMap<T> ym(y.image(i), out_c_, hw);
      ym.noalias() = wm * xm;
      for (int co = 0; co < out_c_; ++co) ym.row(co).array() += bias[co];
    }
    return y;
  }

  // Returns dx; fills dwmat (same shape as the conditioning input).
  Tensor<T> backward(const Tensor<T>& dy, Tensor<T>& dwmat) {
    const int hw = x_.h * x_.w;
    Tensor<T> dx(x_.n, in_c_, x_.h, x_.w);
    dwmat.resize(wmat_.n, wmat_.c, 1, 1);
    for (int i = 0; i < x_.n; ++i) {
      ConstMatMap<T> dym(dy.image(i), out_c_, hw);
      ConstMatMap<T> xm(x_.image(i), in_c_, hw);
      MatMap<T> dwm(dwmat.image(i), out_c_, in_c_);
      dwm.noalias() = dym * xm.transpose();
      T* dbias = dwmat.image(i) + out_c_ * in_c_;
      for (int co = 0; co < out_c_; ++co) dbias[co] = dym.row(co).sum();
      ConstMatMap<T> wm(wmat_.image(i), out_c_, in_c_);
      MatMap<T> dxm(dx.image(i), in_c_, hw);
      dxm.noalias() = wm.transpose() * dym;
    }
    return dx;
  }

 private:
  int in_c_ = 0, out_c_ = 0;
  Tensor<T> x_, wmat_;
};

template <typename T>
class LeakyReLU {
 public:
  explicit LeakyReLU(T slope = (T)0.01) : slope_(slope) {}

  Tensor<T> forward(const Tensor<T>& x) {
    x_ = x;
    Tensor<T> y = x;
    for (auto& v : y.v)
      if (v < T(0)) v *= slope_;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx = dy;
    for (size_t i = 0; i < dx.v.size(); ++i)
      if (x_.v[i] < T(0)) dx.v[i] *= slope_;
    return dx;
  }

 private:
  T slope_;
  Tensor<T> x_;
};

template <typename T>
class MaxPool2 {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    in_h_ = x.h;
    in_w_ = x.w;
    const int oh = x.h / 2, ow = x.w / 2;
    Tensor<T> y(x.n, x.c, oh, ow);
    arg_.assign(y.size(), 0);
    size_t o = 0;
    for (int i = 0; i < x.n; ++i) {
      for (int ch = 0; ch < x.c; ++ch) {
        for (int py = 0; py < oh; ++py) {
          for (int px = 0; px < ow; ++px, ++o) {
            T best = x.at(i, ch, 2 * py, 2 * px);
            int bi = 0;
            for (int k = 1; k < 4; ++k) {
              T v = x.at(i, ch, 2 * py + (k >> 1), 2 * px + (k & 1));
              if (v > best) {
                best = v;
                bi = k;
              }
            }
            y.v[o] = best;
            arg_[o] = bi;
          }
        }
      }
    }
    n_ = x.n;
    c_ = x.c;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx(n_, c_, in_h_, in_w_);
    const int oh = in_h_ / 2, ow = in_w_ / 2;
    size_t o = 0;
    for (int i = 0; i < n_; ++i)
      for (int ch = 0; ch < c_; ++ch)
        for (int py = 0; py < oh; ++py)
          for (int px = 0; px < ow; ++px, ++o) {
            int k = arg_[o];
            dx.at(i, ch, 2 * py + (k >> 1), 2 * px + (k & 1)) += dy.v[o];
          }
    return dx;
  }

 private:
  int in_h_ = 0, in_w_ = 0, n_ = 0, c_ = 0;
  std::vector<uint8_t> arg_;
};

template <typename T>
class UpsampleNearest2 {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    n_ = x.n;
    c_ = x.c;
    in_h_ = x.h;
    in_w_ = x.w;
    Tensor<T> y(x.n, x.c, x.h * 2, x.w * 2);
    for (int i = 0; i < x.n; ++i)
      for (int ch = 0; ch < x.c; ++ch)
        for (int yy = 0; yy < y.h; ++yy)
          for (int xx = 0; xx < y.w; ++xx)
            y.at(i, ch, yy, xx) = x.at(i, ch, yy / 2, xx / 2);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx(n_, c_, in_h_, in_w_);
    for (int i = 0; i < n_; ++i)
      for (int ch = 0; ch < c_; ++ch)
        for (int yy = 0; yy < dy.h; ++yy)
          for (int xx = 0; xx < dy.w; ++xx)
            dx.at(i, ch, yy / 2, xx / 2) += dy.at(i, ch, yy, xx);
    return dx;
  }

 private:
  int n_ = 0, c_ = 0, in_h_ = 0, in_w_ = 0;
};

/// Softmax over the last meaningful axis of an (n, k) tensor.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  Tensor<T> p = logits;
  const int k = logits.c;
  for (int i = 0; i < logits.n; ++i) {
    T* row = p.data() + (size_t)i * k;
    T mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    T sum = T(0);
    for (int j = 0; j < k; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (int j = 0; j < k; ++j) row[j] /= sum;
  }
  return p;
}

/// Mean cross-entropy of softmax(logits) against integer labels;
/// dlogits = (softmax - onehot) / n.
template <typename T>
T softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels,
                        Tensor<T>* dlogits) {
  Tensor<T> p = softmax(logits);
  const int k = logits.c;
  T loss = T(0);
  for (int i = 0; i < logits.n; ++i) {
    T pi = p.v[(size_t)i * k + labels[i]];
    loss -= std::log(std::max(pi, (T)1e-12));
  }
  loss /= (T)logits.n;
  if (dlogits) {
    *dlogits = p;
    for (int i = 0; i < logits.n; ++i) dlogits->v[(size_t)i * k + labels[i]] -= T(1);
    for (auto& v : dlogits->v) v /= (T)logits.n;
  }
  return loss;
}

/// Huber (delta = 1): value and derivative with respect to the error.
template <typename T>
T huber(T err, T* deriv) {
  T a = std::abs(err);
  if (a <= T(1)) {
    if (deriv) *deriv = err;
    return (T)0.5 * err * err;
  }
  if (deriv) *deriv = err > T(0) ? T(1) : T(-1);
  return a - (T)0.5;
}

template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<ParamRef<T>> params, T lr, T b1 = (T)0.9, T b2 = (T)0.999, T eps = (T)1e-8)
      : params_(std::move(params)), lr_(lr), b1_(b1), b2_(b2), eps_(eps) {
    for (auto& p : params_) {
      m_.emplace_back(p.value->size(), T(0));
      v_.emplace_back(p.value->size(), T(0));
    }
  }

  void zero_grad() {
    for (auto& p : params_) std::fill(p.grad->begin(), p.grad->end(), T(0));
  }

  void step() {
    ++t_;
    T bc1 = T(1) - std::pow(b1_, (T)t_);
    T bc2 = T(1) - std::pow(b2_, (T)t_);
    for (size_t pi = 0; pi < params_.size(); ++pi) {
      auto& w = *params_[pi].value;
      auto& g = *params_[pi].grad;
      auto& m = m_[pi];
      auto& v = v_[pi];
      for (size_t i = 0; i < w.size(); ++i) {
        m[i] = b1_ * m[i] + (T(1) - b1_) * g[i];
        v[i] = b2_ * v[i] + (T(1) - b2_) * g[i] * g[i];
        T mh = m[i] / bc1;
        T vh = v[i] / bc2;
        w[i] -= lr_ * mh / (std::sqrt(vh) + eps_);
      }
    }
  }

  int64_t t() const { return t_; }
  void set_t(int64_t t) { t_ = t; }
  std::vector<avec<T>>& moment1() { return m_; }
  std::vector<avec<T>>& moment2() { return v_; }
  const std::vector<ParamRef<T>>& params() const { return params_; }

 private:
  std::vector<ParamRef<T>> params_;
  T lr_ = (T)1e-4, b1_ = (T)0.9, b2_ = (T)0.999, eps_ = (T)1e-8;
  int64_t t_ = 0;
  std::vector<avec<T>> m_, v_;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
};

/// Central finite differences against analytic gradients. loss() must run
/// a full forward pass and return the scalar loss; grads() must populate
/// parameter gradients for the same batch (typically forward + backward).
/// When the secant at h disagrees with the one at h/64 the step straddles an
/// activation kink; the refined estimate is used in that case.
template <typename T>
GradCheckReport gradient_check(std::vector<ParamRef<T>> params,
                               const std::function<T()>& loss,
                               const std::function<void()>& grads, T h = (T)1e-4) {
  for (auto& p : params) std::fill(p.grad->begin(), p.grad->end(), T(0));
  grads();
  GradCheckReport rep;
  for (auto& p : params) {
    for (size_t i = 0; i < p.value->size(); ++i) {
      T saved = (*p.value)[i];
      auto central = [&](T step) {
        (*p.value)[i] = saved + step;
        T lp = loss();
        (*p.value)[i] = saved - step;
        T lm = loss();
        (*p.value)[i] = saved;
        return (double)(lp - lm) / (2.0 * (double)step);
      };
      double numeric = central(h);
      double analytic = (double)(*p.grad)[i];
      double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      T step = h;
      for (int refine = 0; refine < 3 && std::abs(numeric - analytic) / denom > 1e-5; ++refine) {
        step /= (T)32;
        double refined = central(step);
        if (std::abs(refined - numeric) /
                std::max({std::abs(refined), std::abs(numeric), 1e-6}) <=
            1e-5)
          break;  // estimates agree: the disagreement with analytic is real
        numeric = refined;
        denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      }
      double rel = std::abs(numeric - analytic) / denom;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = p.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return rep;
}

}  // namespace leo::nn
