#include <doctest.h>

#include <cstring>

#include "leo/qfunc.hpp"

using namespace leo;

namespace {

GridSpec small_grid() {
  GridSpec g;
  g.w = 16;
  g.r = 4;
  g.h_patch = 6;
  g.validate();
  return g;
}

template <typename T>
nn::Tensor<T> random_tensor(int n, int c, int h, int w, Rng& rng, double scale = 1.0) {
  nn::Tensor<T> t(n, c, h, w);
  for (auto& v : t.v) v = (T)((rng.uniform01() * 2.0 - 1.0) * scale);
  return t;
}

template <typename T>
nn::Tensor<T> onehot_goal(int n, int dim, int goal) {
  nn::Tensor<T> g(n, dim, 1, 1);
  for (int i = 0; i < n; ++i)
    if (dim > 0) g.v[(size_t)i * dim + goal] = (T)1;
  return g;
}

}  // namespace

TEST_CASE("qxy: zero head weights give zero maps; batch shape") {
  GridSpec g = small_grid();
  QFuncConfig cfg;
  cfg.group = 8;
  QxyModel<float> model(g, 5, cfg, 7);
  for (auto& p : model.params())
    if (p.name == "qxy.head.w" || p.name == "qxy.head.b")
      std::fill(p.value->begin(), p.value->end(), 0.0f);

  Rng rng(1);
  auto img = random_tensor<float>(3, 1, g.w, g.w, rng);
  auto hand = random_tensor<float>(3, 1, g.h_patch, g.h_patch, rng);
  auto goal = onehot_goal<float>(3, 5, 2);
  auto maps = model.forward(img, hand, {0, 1, 0}, goal);
  CHECK(maps.n == 3);
  CHECK(maps.c == 2);
  CHECK(maps.h == g.w);
  CHECK(maps.w == g.w);
  for (float v : maps.v) CHECK(v == 0.0f);
}

TEST_CASE("qxy dihedral equivariance within 1e-4") {
  GridSpec g = small_grid();
  QFuncConfig cfg;
  cfg.group = 8;
  QxyModel<float> model(g, 3, cfg, 99);
  Rng rng(42);

  for (int trial = 0; trial < 6; ++trial) {
    auto img = random_tensor<float>(1, 1, g.w, g.w, rng);
    auto hand = random_tensor<float>(1, 1, g.h_patch, g.h_patch, rng);
    auto goal = onehot_goal<float>(1, 3, trial % 3);
    std::vector<int> holding{trial % 2};
    auto maps = model.forward(img, hand, holding, goal);

    for (int gi = 1; gi < 8; ++gi) {
      nn::Tensor<float> timg(1, 1, g.w, g.w);
      dihedral_apply_square(g.w, gi, img.data(), timg.data());
      auto tmaps = model.forward(timg, hand, holding, goal);
      float max_abs = 0.0f;
      std::vector<float> expect((size_t)g.w * g.w);
      for (int ch = 0; ch < 2; ++ch) {
        dihedral_apply_square(g.w, gi, maps.data() + (size_t)ch * g.w * g.w, expect.data());
        const float* got = tmaps.data() + (size_t)ch * g.w * g.w;
        for (size_t i = 0; i < expect.size(); ++i)
          max_abs = std::max(max_abs, std::abs(expect[i] - got[i]));
      }
      CHECK(max_abs <= 1e-4f);
    }
  }
}

TEST_CASE("qxy greedy position argmax is equivariant when unique") {
  GridSpec g = small_grid();
  QFuncConfig cfg;
  cfg.group = 8;
  QxyModel<float> model(g, 0, cfg, 5);
  Rng rng(8);
  auto img = random_tensor<float>(1, 1, g.w, g.w, rng);
  auto hand = random_tensor<float>(1, 1, g.h_patch, g.h_patch, rng);
  nn::Tensor<float> goal(1, 0, 1, 1);
  auto maps = model.forward(img, hand, {0}, goal);
  auto [x, y] = argmax_position(maps, 0, 0);

  for (int gi = 0; gi < 8; ++gi) {
    nn::Tensor<float> timg(1, 1, g.w, g.w);
    dihedral_apply_square(g.w, gi, img.data(), timg.data());
    auto tmaps = model.forward(timg, hand, {0}, goal);
    auto [tx, ty] = argmax_position(tmaps, 0, 0);
    int ex, ey;
    dihedral_apply_cell(g.w, gi, x, y, ex, ey);
    CHECK(tx == ex);
    CHECK(ty == ey);
  }
}

TEST_CASE("qtheta: zero weights give a zero vector; cyclic shift at quarter turns") {
  GridSpec g = small_grid();  // r = 4: every step is a quarter turn
  QFuncConfig cfg;
  QthetaModel<float> model(g, 3, cfg, 17);
  Rng rng(3);

  {
    QthetaModel<float> zeroed(g, 3, cfg, 18);
    for (auto& p : zeroed.params())
      if (p.name == "qt.fc2.w" || p.name == "qt.fc2.b")
        std::fill(p.value->begin(), p.value->end(), 0.0f);
    auto hand = random_tensor<float>(1, 1, g.h_patch, g.h_patch, rng);
    auto patch = random_tensor<float>(1, 1, g.h_patch, g.h_patch, rng);
    auto vals = zeroed.forward(hand, patch, {1}, onehot_goal<float>(1, 3, 1));
    CHECK(vals.n == 1);
    CHECK(vals.c == g.r);
    for (float v : vals.v) CHECK(v == 0.0f);
  }

  for (int trial = 0; trial < 5; ++trial) {
    auto hand = random_tensor<float>(1, 1, g.h_patch, g.h_patch, rng);
    auto patch = random_tensor<float>(1, 1, g.h_patch, g.h_patch, rng);
    auto goal = onehot_goal<float>(1, 3, trial % 3);
    auto vals = model.forward(hand, patch, {1}, goal);

    nn::Tensor<float> rotated(1, 1, g.h_patch, g.h_patch);
    rotate_patch(patch.data(), g.h_patch, 1, g.r, rotated.data());
    auto shifted = model.forward(hand, rotated, {1}, goal);
    float max_abs = 0.0f;
    for (int th = 0; th < g.r; ++th) {
      float want = vals.v[(th - 1 + g.r) % g.r];
      max_abs = std::max(max_abs, std::abs(shifted.v[th] - want));
    }
    CHECK(max_abs <= 1e-4f);
  }
}

TEST_CASE("select_action: verb from grasp flag, greedy argmax, tie break") {
  GridSpec g = small_grid();
  QFuncConfig cfg;
  cfg.group = 4;
  QHeads<float> heads(g, 0, cfg, 3);
  Rng rng(1);

  Observation obs;
  obs.topdown.assign((size_t)g.w * g.w, 0.0f);
  obs.topdown[(size_t)5 * g.w + 3] = 0.2f;
  obs.inhand.assign((size_t)g.h_patch * g.h_patch, 0.0f);
  obs.holding = false;

  Action a = select_action(heads, obs, -1, 0.0, rng);
  CHECK((a.p == Verb::pick));
  obs.holding = true;
  obs.inhand[0] = 0.2f;
  a = select_action(heads, obs, -1, 0.0, rng);
  CHECK((a.p == Verb::place));

  nn::Tensor<float> maps(1, 2, g.w, g.w);
  maps.v[(size_t)5 * g.w + 3] = 1.0f;
  auto [x, y] = argmax_position(maps, 0, 0);
  CHECK(x == 3);
  CHECK(y == 5);

  nn::Tensor<float> flat(1, 2, g.w, g.w);
  auto [x0, y0] = argmax_position(flat, 0, 0);
  CHECK(x0 == 0);
  CHECK(y0 == 0);
  flat.v[(size_t)2 * g.w + 7] = 0.5f;
  flat.v[(size_t)4 * g.w + 1] = 0.5f;
  auto [x1, y1] = argmax_position(flat, 0, 0);
  CHECK(x1 == 7);
  CHECK(y1 == 2);
}

TEST_CASE("select_action: epsilon=1 draws uniform components (chi-square)") {
  GridSpec g = small_grid();
  QFuncConfig cfg;
  QHeads<float> heads(g, 0, cfg, 4);
  Rng rng(123);
  Observation obs;
  obs.topdown.assign((size_t)g.w * g.w, 0.0f);
  obs.inhand.assign((size_t)g.h_patch * g.h_patch, 0.0f);
  obs.holding = false;

  const int draws = 10000;
  std::vector<int> xc(g.w, 0), yc(g.w, 0), tc(g.r, 0);
  for (int i = 0; i < draws; ++i) {
    Action a = select_action(heads, obs, -1, 1.0, rng);
    xc[a.x]++;
    yc[a.y]++;
    tc[a.theta]++;
  }
  auto chi2 = [&](const std::vector<int>& counts) {
    double expect = (double)draws / counts.size();
    double stat = 0;
    for (int c : counts) stat += (c - expect) * (c - expect) / expect;
    return stat;
  };
  // 99th percentile: chi2(15 dof) = 30.58, chi2(3 dof) = 11.34
  CHECK(chi2(xc) < 30.58);
  CHECK(chi2(yc) < 30.58);
  CHECK(chi2(tc) < 11.34);
}

TEST_CASE("forward determinism: identical weights and inputs, identical outputs") {
  GridSpec g = small_grid();
  QFuncConfig cfg;
  QxyModel<float> m1(g, 2, cfg, 11);
  QxyModel<float> m2(g, 2, cfg, 12);
  m2.copy_from(m1);
  Rng rng(2);
  auto img = random_tensor<float>(2, 1, g.w, g.w, rng);
  auto hand = random_tensor<float>(2, 1, g.h_patch, g.h_patch, rng);
  auto goal = onehot_goal<float>(2, 2, 1);
  auto a = m1.forward(img, hand, {0, 1}, goal);
  auto b = m2.forward(img, hand, {0, 1}, goal);
  CHECK(a.v == b.v);
}

TEST_CASE("gradient check: full position head on a 16x16 grid") {
  GridSpec g = small_grid();
  QFuncConfig cfg;
  cfg.group = 4;  // keeps the finite-difference loop affordable
  cfg.c1 = 4;
  cfg.c2 = 6;
  cfg.head_c = 4;
  cfg.henc_c = 2;
  cfg.cond_hidden = 8;
  QxyModel<double> model(g, 3, cfg, 21);
  Rng rng(31);
  auto img = random_tensor<double>(2, 1, g.w, g.w, rng);
  auto hand = random_tensor<double>(2, 1, g.h_patch, g.h_patch, rng);
  auto goal = onehot_goal<double>(2, 3, 1);
  std::vector<int> holding{0, 1};
  std::vector<double> proj((size_t)2 * 2 * g.w * g.w);
  for (auto& v : proj) v = rng.uniform01() * 2.0 - 1.0;

  auto loss = [&]() -> double {
    auto maps = model.forward(img, hand, holding, goal);
    double acc = 0;
    for (size_t i = 0; i < maps.v.size(); ++i) acc += maps.v[i] * proj[i];
    return acc;
  };
  auto grads = [&]() {
    auto maps = model.forward(img, hand, holding, goal);
    nn::Tensor<double> d(2, 2, g.w, g.w);
    for (size_t i = 0; i < d.v.size(); ++i) d.v[i] = proj[i];
    model.backward(d);
  };
  auto rep = nn::gradient_check<double>(model.params(), loss, grads, 1e-4);
  CHECK(rep.max_rel_err <= 1e-3);
}

TEST_CASE("gradient check: full rotation head") {
  GridSpec g = small_grid();
  QFuncConfig cfg;
  cfg.qt_c1 = 4;
  cfg.qt_c2 = 6;
  cfg.qt_hidden = 12;
  cfg.cond_hidden = 8;
  QthetaModel<double> model(g, 3, cfg, 23);
  Rng rng(37);
  auto hand = random_tensor<double>(2, 1, g.h_patch, g.h_patch, rng);
  auto patch = random_tensor<double>(2, 1, g.h_patch, g.h_patch, rng);
  auto goal = onehot_goal<double>(2, 3, 2);
  std::vector<int> holding{1, 1};
  std::vector<double> proj((size_t)2 * g.r);
  for (auto& v : proj) v = rng.uniform01() * 2.0 - 1.0;

  auto loss = [&]() -> double {
    auto vals = model.forward(hand, patch, holding, goal);
    double acc = 0;
    for (size_t i = 0; i < vals.v.size(); ++i) acc += vals.v[i] * proj[i];
    return acc;
  };
  auto grads = [&]() {
    model.forward(hand, patch, holding, goal);
    nn::Tensor<double> d(2, g.r, 1, 1);
    for (size_t i = 0; i < d.v.size(); ++i) d.v[i] = proj[i];
    model.backward(d);
  };
  auto rep = nn::gradient_check<double>(model.params(), loss, grads, 1e-4);
  CHECK(rep.max_rel_err <= 1e-3);
}

TEST_CASE("broadcast-planes conditioning mode stays equivariant") {
  GridSpec g = small_grid();
  QFuncConfig cfg;
  cfg.dynamic_cond = false;
  cfg.group = 8;
  QxyModel<float> model(g, 2, cfg, 77);
  Rng rng(4);
  auto img = random_tensor<float>(1, 1, g.w, g.w, rng);
  auto hand = random_tensor<float>(1, 1, g.h_patch, g.h_patch, rng);
  auto goal = onehot_goal<float>(1, 2, 0);
  auto maps = model.forward(img, hand, {0}, goal);
  CHECK(maps.c == 2);

  nn::Tensor<float> timg(1, 1, g.w, g.w);
  dihedral_apply_square(g.w, 3, img.data(), timg.data());
  auto tmaps = model.forward(timg, hand, {0}, goal);
  std::vector<float> expect((size_t)g.w * g.w);
  float max_abs = 0;
  for (int ch = 0; ch < 2; ++ch) {
    dihedral_apply_square(g.w, 3, maps.data() + (size_t)ch * g.w * g.w, expect.data());
    const float* got = tmaps.data() + (size_t)ch * g.w * g.w;
    for (size_t i = 0; i < expect.size(); ++i)
      max_abs = std::max(max_abs, std::abs(expect[i] - got[i]));
  }
  CHECK(max_abs <= 1e-4f);
}
