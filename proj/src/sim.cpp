#include "leo/sim.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <cstring>
#include <functional>
#include <sstream>

namespace leo {

namespace {

int mod_pos(int v, int m) {
  int r = v % m;
  return r < 0 ? r + m : r;
}

int theta_distance(int a, int b, int period) {
  int d = mod_pos(a - b, period);
  return std::min(d, period - d);
}

int canonical_theta(const GridSpec& g, const BlockKind& kind, int theta) {
  return mod_pos(theta, kind.symmetry_period(g));
}

std::vector<int> column_tops(const SceneState& scene) {
  const GridSpec& g = scene.grid();
  std::vector<int> top((size_t)g.w * g.w, 0);
  for (const auto& b : scene.blocks) {
    for (auto [cx, cy] : block_cells(g, b)) {
      if (cx < 0 || cx >= g.w || cy < 0 || cy >= g.w) continue;
      int& t = top[(size_t)cy * g.w + cx];
      t = std::max(t, b.top());
    }
  }
  return top;
}

bool has_dependents(const SceneState& scene, int id) {
  for (const auto& b : scene.blocks)
    if (b.supported_by.count(id)) return true;
  return false;
}

// Nearest free ground position for a falling block, scanned outward over
// Chebyshev rings. Ties inside a ring are broken by keys that are exact
// under grid-isometries (squared distance from the drop point, then a
// distance profile against the remaining blocks), with row-major order as
// a final fallback for pathologically symmetric scenes.
std::optional<std::pair<int, int>> fall_target(const SceneState& scene, int x, int y,
                                               const BlockKind& kind, int theta) {
  const GridSpec& g = scene.grid();
  auto offsets = footprint_cells(g, kind.length, kind.width, 0, 0, theta);
  const int h_new = kind.height;

  std::vector<int> min_z((size_t)g.w * g.w, INT_MAX);
  for (const auto& b : scene.blocks) {
    for (auto [cx, cy] : block_cells(g, b)) {
      if (cx < 0 || cx >= g.w || cy < 0 || cy >= g.w) continue;
      int& m = min_z[(size_t)cy * g.w + cx];
      m = std::min(m, b.z);
    }
  }

  auto cell_free = [&](int cx, int cy) {
    for (auto [ox, oy] : offsets) {
      int px = cx + ox, py = cy + oy;
      if (px < 0 || px >= g.w || py < 0 || py >= g.w) return false;
      if (min_z[(size_t)py * g.w + px] < h_new) return false;
    }
    return true;
  };

  auto tie_key = [&](int cx, int cy) {
    uint64_t k = 0;
    for (const auto& b : scene.blocks) {
      long long dx = cx - b.x, dy = cy - b.y;
      uint64_t d2 = (uint64_t)(dx * dx + dy * dy);
      k += mix64(d2 * 1000003ULL + (uint64_t)(b.kind.height * 8 + b.z) * 131ULL +
                 (uint64_t)b.kind.length * 31ULL);
    }
    return k;
  };

  for (int d = 0; d < g.w; ++d) {
    bool found = false;
    long long best_e = 0;
    uint64_t best_k = 0;
    long long best_rm = 0;
    std::pair<int, int> best{0, 0};
    auto consider = [&](int cx, int cy) {
      if (std::max(std::abs(cx - x), std::abs(cy - y)) != d) return;
      if (!cell_free(cx, cy)) return;
      long long e = (long long)(cx - x) * (cx - x) + (long long)(cy - y) * (cy - y);
      uint64_t k = tie_key(cx, cy);
      long long rm = (long long)cy * g.w + cx;
      if (!found || e < best_e || (e == best_e && (k < best_k || (k == best_k && rm < best_rm)))) {
        found = true;
        best_e = e;
        best_k = k;
        best_rm = rm;
        best = {cx, cy};
      }
    };
    if (d == 0) {
      consider(x, y);
    } else {
      for (int cy = y - d; cy <= y + d; ++cy)
        for (int cx = x - d; cx <= x + d; ++cx)
          if (std::abs(cx - x) == d || std::abs(cy - y) == d) consider(cx, cy);
    }
    if (found) return best;
  }
  return std::nullopt;
}

}  // namespace

std::vector<std::pair<int, int>> block_cells(const GridSpec& g, const BlockInstance& b) {
  return footprint_cells(g, b.kind.length, b.kind.width, b.x, b.y, b.theta);
}

bool cells_in_bounds(const GridSpec& g, const std::vector<std::pair<int, int>>& cells) {
  for (auto [x, y] : cells)
    if (x < 0 || x >= g.w || y < 0 || y >= g.w) return false;
  return true;
}

SupportProbe probe_support(const SceneState& scene, const std::vector<std::pair<int, int>>& cells) {
  const GridSpec& g = scene.grid();
  // per-cell top height and the block owning that top
  std::vector<int> top((size_t)g.w * g.w, 0);
  std::vector<int> owner((size_t)g.w * g.w, -1);
  for (size_t bi = 0; bi < scene.blocks.size(); ++bi) {
    const auto& b = scene.blocks[bi];
    for (auto [cx, cy] : block_cells(g, b)) {
      if (cx < 0 || cx >= g.w || cy < 0 || cy >= g.w) continue;
      size_t idx = (size_t)cy * g.w + cx;
      if (b.top() > top[idx]) {
        top[idx] = b.top();
        owner[idx] = (int)bi;
      }
    }
  }
  SupportProbe p;
  int h_star = 0;
  for (auto [x, y] : cells) {
    if (x < 0 || x >= g.w || y < 0 || y >= g.w) continue;
    h_star = std::max(h_star, top[(size_t)y * g.w + x]);
  }
  p.height = h_star;
  if (h_star == 0) {
    p.fraction = 1.0;
    p.supporters = {kGroundId};
    return p;
  }
  int supported = 0;
  std::set<int> sup;
  for (auto [x, y] : cells) {
    if (x < 0 || x >= g.w || y < 0 || y >= g.w) continue;
    size_t idx = (size_t)y * g.w + x;
    if (top[idx] != h_star) continue;
    const auto& b = scene.blocks[owner[idx]];
    ++supported;
    sup.insert(b.id);
    if (b.kind.top_only) p.stackable = false;
  }
  p.fraction = (double)supported / (double)cells.size();
  p.supporters.assign(sup.begin(), sup.end());
  return p;
}

std::vector<float> render_heightmap(const SceneState& scene) {
  const GridSpec& g = scene.grid();
  auto tops = column_tops(scene);
  std::vector<float> img((size_t)g.w * g.w);
  for (size_t i = 0; i < img.size(); ++i) img[i] = tops[i] * g.cell_height_unit;
  return img;
}

std::vector<float> render_inhand(const GridSpec& g, const BlockKind& kind) {
  const int p = g.h_patch;
  std::vector<float> img((size_t)p * p, 0.0f);
  int c = p / 2;
  for (auto [x, y] : footprint_cells(g, kind.length, kind.width, c, c, 0)) {
    if (x < 0 || x >= p || y < 0 || y >= p) continue;
    img[(size_t)y * p + x] = kind.height * g.cell_height_unit;
  }
  return img;
}

std::vector<float> extract_inhand(const GridSpec& g, const std::vector<float>& topdown_before,
                                  int x, int y, int theta, int base_layer) {
  const int p = g.h_patch;
  std::vector<float> crop((size_t)p * p);
  extract_patch(topdown_before.data(), g.w, x, y, p, crop.data());
  // canonicalize by -theta about the pick point, which sits at (p/2, p/2)
  std::vector<float> rot((size_t)p * p, 0.0f);
  const int c = p / 2;
  const int m = mod_pos(theta, g.r);
  if ((4LL * m) % g.r == 0) {
    const int q = (int)(4LL * m / g.r);  // rotate source offsets by +q quarters
    for (int ty = 0; ty < p; ++ty)
      for (int tx = 0; tx < p; ++tx) {
        int u = tx - c, v = ty - c;
        for (int i = 0; i < q; ++i) {
          int nu = -v, nv = u;
          u = nu;
          v = nv;
        }
        int sx = c + u, sy = c + v;
        rot[(size_t)ty * p + tx] =
            (sx >= 0 && sx < p && sy >= 0 && sy < p) ? crop[(size_t)sy * p + sx] : 0.0f;
      }
  } else {
    double ang = m * 2.0 * M_PI / g.r;
    double cs = std::cos(ang), sn = std::sin(ang);
    for (int ty = 0; ty < p; ++ty)
      for (int tx = 0; tx < p; ++tx) {
        double u = tx - c, v = ty - c;
        double su = cs * u - sn * v;
        double sv = sn * u + cs * v;
        int sx = c + (int)std::lround(su);
        int sy = c + (int)std::lround(sv);
        rot[(size_t)ty * p + tx] =
            (sx >= 0 && sx < p && sy >= 0 && sy < p) ? crop[(size_t)sy * p + sx] : 0.0f;
      }
  }
  const float base = base_layer * g.cell_height_unit;
  for (auto& v : rot)
    if (v < base - 1e-6f) v = 0.0f;
  return rot;
}

Observation observe(const SceneState& scene) {
  const GridSpec& g = scene.grid();
  Observation o;
  o.topdown = render_heightmap(scene);
  o.holding = scene.held.has_value();
  if (o.holding)
    o.inhand = render_inhand(g, scene.held->kind);
  else
    o.inhand.assign((size_t)g.h_patch * g.h_patch, 0.0f);
  return o;
}

SceneState reset_scene(const std::shared_ptr<const TaskSpec>& task, uint64_t seed) {
  task->validate();
  const GridSpec& g = task->grid;
  const int margin = g.h_patch / 2;

  SceneState scene;
  scene.task = task;
  scene.rng = Rng(derive_seed(seed, 0x5ce7e));

  for (int attempt = 0; attempt < 100; ++attempt) {
    scene.blocks.clear();
    bool ok = true;
    for (int i = 0; i < task->n_blocks() && ok; ++i) {
      const BlockKind& kind = task->kinds[task->blocks[i]];
      bool placed = false;
      for (int tries = 0; tries < 200; ++tries) {
        int x = scene.rng.uniform_int(margin, g.w - 1 - margin);
        int y = scene.rng.uniform_int(margin, g.w - 1 - margin);
        int theta = canonical_theta(g, kind, scene.rng.uniform_int(0, g.r - 1));
        auto cells = footprint_cells(g, kind.length, kind.width, x, y, theta);
        if (!cells_in_bounds(g, cells)) continue;
        auto probe = probe_support(scene, cells);
        if (probe.height != 0) continue;  // overlaps an existing block
        BlockInstance b;
        b.id = i;
        b.kind = kind;
        b.x = x;
        b.y = y;
        b.z = 0;
        b.theta = theta;
        b.supported_by = {kGroundId};
        scene.blocks.push_back(b);
        placed = true;
        break;
      }
      if (!placed) ok = false;
    }
    if (ok) return scene;
  }
  throw std::runtime_error("sim: could not scatter blocks; workspace too small for task " +
                           task->name);
}

std::optional<int> pick_candidate(const SceneState& scene, const Action& a) {
  const GridSpec& g = scene.grid();
  auto tops = column_tops(scene);
  if (a.x < 0 || a.x >= g.w || a.y < 0 || a.y >= g.w) return std::nullopt;
  int col_top = tops[(size_t)a.y * g.w + a.x];
  if (col_top == 0) return std::nullopt;
  const double tol = g.pick_tolerance();
  for (const auto& b : scene.blocks) {
    if (b.top() != col_top) continue;
    if (std::abs(b.x - a.x) > tol || std::abs(b.y - a.y) > tol) continue;
    bool covers = false;
    for (auto [cx, cy] : block_cells(g, b))
      if (cx == a.x && cy == a.y) { covers = true; break; }
    if (!covers) continue;
    int period = b.kind.symmetry_period(g);
    if (theta_distance(mod_pos(a.theta, period), b.theta, period) > scene.task->tol_theta)
      continue;
    if (has_dependents(scene, b.id)) continue;
    return b.id;
  }
  return std::nullopt;
}

StepResult step(SceneState& scene, const Action& a) {
  const GridSpec& g = scene.grid();

  if (a.p == Verb::pick) {
    if (!scene.held.has_value()) {
      if (auto id = pick_candidate(scene, a)) {
        auto it = std::find_if(scene.blocks.begin(), scene.blocks.end(),
                               [&](const BlockInstance& b) { return b.id == *id; });
        BlockInstance held = *it;
        scene.blocks.erase(it);
        held.x = held.y = held.z = held.theta = 0;
        held.supported_by.clear();
        scene.held = held;
      }
    }
  } else {
    if (scene.held.has_value()) {
      BlockInstance b = *scene.held;
      int theta = canonical_theta(g, b.kind, a.theta);
      auto cells = footprint_cells(g, b.kind.length, b.kind.width, a.x, a.y, theta);
      bool placed = false;
      if (cells_in_bounds(g, cells)) {
        auto probe = probe_support(scene, cells);
        if (probe.fraction >= scene.task->support_fraction && probe.stackable) {
          b.x = a.x;
          b.y = a.y;
          b.z = probe.height;
          b.theta = theta;
          b.supported_by.insert(probe.supporters.begin(), probe.supporters.end());
          scene.blocks.push_back(b);
          scene.held.reset();
          placed = true;
        }
      }
      if (!placed) {
        if (auto target = fall_target(scene, a.x, a.y, b.kind, theta)) {
          b.x = target->first;
          b.y = target->second;
          b.z = 0;
          b.theta = theta;
          b.supported_by = {kGroundId};
          scene.blocks.push_back(b);
          scene.held.reset();
        }
        // no free ground anywhere: the gripper keeps the block
      }
      std::sort(scene.blocks.begin(), scene.blocks.end(),
                [](const BlockInstance& l, const BlockInstance& r) { return l.id < r.id; });
    }
  }

  scene.step_count += 1;

  StepResult res;
  res.obs = observe(scene);
  bool success = !scene.held.has_value() && check_success(scene, scene.task->structure);
  if (success) {
    res.reward = 1.0f;
    res.done = true;
  } else if (scene.step_count >= scene.task->max_steps) {
    res.reward = 0.0f;
    res.done = true;
  }
  return res;
}

namespace {

// R(g steps) applied to a real offset, via the same canonical
// quarter + remainder decomposition used by the footprint raster.
void rotate_offset_steps(const GridSpec& g, int steps, double dx, double dy,
                         double& ox, double& oy) {
  int r = g.r;
  int m = mod_pos(steps, r);
  int q = 0, rho = m;
  if (r % 4 == 0) {
    int quarter = r / 4;
    q = (2 * m + quarter) / (2 * quarter);
    rho = m - q * quarter;
    q = mod_pos(q, 4);
  }
  double cs = 1.0, sn = 0.0;
  if (rho != 0) {
    int a = std::abs(rho);
    if (r % 4 == 0 && 2 * a == r / 4) {
      cs = std::sqrt(0.5);
      sn = std::sqrt(0.5);
    } else {
      double ang = a * 2.0 * M_PI / r;
      cs = std::cos(ang);
      sn = std::sin(ang);
    }
    if (rho < 0) sn = -sn;
  }
  double u = cs * dx - sn * dy;
  double v = sn * dx + cs * dy;
  for (int i = 0; i < q; ++i) {
    double nu = -v, nv = u;
    u = nu;
    v = nv;
  }
  ox = u;
  oy = v;
}

bool match_structure(const SceneState& scene, const StructureSpec& spec, const BlockInstance& anchor,
                     int gsteps) {
  const GridSpec& g = scene.grid();
  const auto& kinds = scene.task->kinds;
  std::vector<bool> used(scene.blocks.size(), false);
  for (size_t i = 0; i < scene.blocks.size(); ++i)
    if (scene.blocks[i].id == anchor.id) used[i] = true;

  std::vector<int> matched_ids{anchor.id};

  std::function<bool(size_t)> match_from = [&](size_t ci) -> bool {
    if (ci == spec.constraints.size()) return true;
    const auto& c = spec.constraints[ci];
    double ex, ey;
    rotate_offset_steps(g, gsteps, c.dx, c.dy, ex, ey);
    ex += anchor.x;
    ey += anchor.y;
    int ez = anchor.z + c.dz;
    for (size_t i = 0; i < scene.blocks.size(); ++i) {
      if (used[i]) continue;
      const auto& b = scene.blocks[i];
      if (b.kind.shape != c.shape) continue;
      if (b.z != ez) continue;
      if (std::max(std::fabs(b.x - ex), std::fabs(b.y - ey)) > c.tol_xy) continue;
      int period = b.kind.symmetry_period(g);
      int want = mod_pos(c.dtheta + gsteps, period);
      if (theta_distance(b.theta, want, period) > c.tol_theta) continue;
      // support must come from matched structure blocks or the ground
      bool sup_ok = true;
      for (int s : b.supported_by) {
        if (s == kGroundId) continue;
        if (std::find(matched_ids.begin(), matched_ids.end(), s) == matched_ids.end())
          sup_ok = false;
      }
      if (!sup_ok) continue;
      used[i] = true;
      matched_ids.push_back(b.id);
      if (match_from(ci + 1)) return true;
      used[i] = false;
      matched_ids.pop_back();
    }
    return false;
  };
  (void)kinds;
  return match_from(0);
}

}  // namespace

bool check_success(const SceneState& scene, const StructureSpec& spec) {
  if (scene.held.has_value()) return false;
  if (scene.blocks.size() < spec.constraints.size() + 1) return false;
  for (const auto& anchor : scene.blocks) {
    if (anchor.kind.shape != spec.anchor_shape) continue;
    if (anchor.z != 0) continue;
    for (int gsteps = 0; gsteps < scene.grid().r; ++gsteps) {
      if (match_structure(scene, spec, anchor, gsteps)) return true;
    }
  }
  return false;
}

int structure_prefix(const SceneState& scene, const StructureSpec& spec) {
  const GridSpec& g = scene.grid();
  int best = 0;
  for (const auto& anchor : scene.blocks) {
    if (anchor.kind.shape != spec.anchor_shape) continue;
    if (anchor.z != 0) continue;
    for (int gsteps = 0; gsteps < g.r; ++gsteps) {
      std::vector<bool> used(scene.blocks.size(), false);
      for (size_t i = 0; i < scene.blocks.size(); ++i)
        if (scene.blocks[i].id == anchor.id) used[i] = true;
      int k = 0;
      for (const auto& c : spec.constraints) {
        double ox, oy;
        rotate_offset_steps(g, gsteps, c.dx, c.dy, ox, oy);
        int ex = anchor.x + (int)std::lround(ox);
        int ey = anchor.y + (int)std::lround(oy);
        int ez = anchor.z + c.dz;
        bool found = false;
        for (size_t i = 0; i < scene.blocks.size(); ++i) {
          if (used[i]) continue;
          const auto& b = scene.blocks[i];
          if (b.kind.shape != c.shape || b.x != ex || b.y != ey || b.z != ez) continue;
          int period = b.kind.symmetry_period(g);
          if (theta_distance(b.theta, mod_pos(c.dtheta + gsteps, period), period) != 0) continue;
          used[i] = true;
          found = true;
          break;
        }
        if (!found) break;
        ++k;
      }
      best = std::max(best, k);
      if (best == (int)spec.constraints.size()) return best;
    }
  }
  return best;
}

SceneState apply_group_scene(const GroupElement& alpha, const SceneState& scene) {
  const GridSpec& g = scene.grid();
  SceneState out = scene;
  for (auto& b : out.blocks) {
    int nx, ny;
    group_apply_cell(g, alpha, b.x, b.y, nx, ny);
    b.x = nx;
    b.y = ny;
    b.theta = canonical_theta(g, b.kind, group_apply_theta(g, alpha, b.theta));
  }
  return out;
}

Observation apply_group_state(const GridSpec& g, const GroupElement& alpha, const Observation& s) {
  Observation out = s;
  group_apply_image(g, alpha, s.topdown.data(), out.topdown.data());
  return out;
}

std::optional<Action> apply_group_action(const GridSpec& g, const GroupElement& alpha,
                                         const Action& a) {
  int nx, ny;
  group_apply_cell(g, alpha, a.x, a.y, nx, ny);
  if (nx < 0 || nx >= g.w || ny < 0 || ny >= g.w) return std::nullopt;
  Action out;
  out.p = a.p;
  out.x = nx;
  out.y = ny;
  out.theta = group_apply_theta(g, alpha, a.theta);
  return out;
}

bool scene_content_in_bounds(const SceneState& scene) {
  const GridSpec& g = scene.grid();
  for (const auto& b : scene.blocks)
    if (!cells_in_bounds(g, block_cells(g, b))) return false;
  return true;
}

bool scenes_equal(const SceneState& a, const SceneState& b) {
  if (a.blocks.size() != b.blocks.size()) return false;
  auto sa = a.blocks, sb = b.blocks;
  auto by_id = [](const BlockInstance& l, const BlockInstance& r) { return l.id < r.id; };
  std::sort(sa.begin(), sa.end(), by_id);
  std::sort(sb.begin(), sb.end(), by_id);
  for (size_t i = 0; i < sa.size(); ++i) {
    const auto& x = sa[i];
    const auto& y = sb[i];
    if (x.id != y.id || !(x.kind == y.kind) || x.x != y.x || x.y != y.y || x.z != y.z ||
        x.theta != y.theta || x.supported_by != y.supported_by)
      return false;
  }
  if (a.held.has_value() != b.held.has_value()) return false;
  if (a.held && (a.held->id != b.held->id || !(a.held->kind == b.held->kind))) return false;
  return a.step_count == b.step_count;
}

SceneState instantiate_structure(const std::shared_ptr<const TaskSpec>& task, int x, int y,
                                 int rot_quarters, uint64_t seed) {
  const GridSpec& g = task->grid;
  const int gsteps = mod_pos(rot_quarters, 4) * (g.r / 4);

  SceneState scene;
  scene.task = task;
  scene.rng = Rng(derive_seed(seed, 0xb111d));

  const BlockKind anchor_kind = task->kinds[task->kind_index(task->structure.anchor_shape)];
  BlockInstance anchor;
  anchor.id = 0;
  anchor.kind = anchor_kind;
  anchor.x = x;
  anchor.y = y;
  anchor.z = 0;
  anchor.theta = canonical_theta(g, anchor_kind, gsteps);
  anchor.supported_by = {kGroundId};
  scene.blocks.push_back(anchor);

  int id = 1;
  for (const auto& c : task->structure.constraints) {
    const BlockKind kind = task->kinds[task->kind_index(c.shape)];
    double ox, oy;
    rotate_offset_steps(g, gsteps, c.dx, c.dy, ox, oy);
    BlockInstance b;
    b.id = id++;
    b.kind = kind;
    b.x = x + (int)std::lround(ox);
    b.y = y + (int)std::lround(oy);
    b.z = c.dz;
    b.theta = canonical_theta(g, kind, c.dtheta + gsteps);
    auto cells = block_cells(g, b);
    if (!cells_in_bounds(g, cells))
      throw std::runtime_error("sim: structure does not fit at the requested pose");
    auto probe = probe_support(scene, cells);
    if (probe.height != c.dz || probe.fraction < task->support_fraction || !probe.stackable)
      throw std::runtime_error("sim: structure spec is not physically consistent");
    b.supported_by.insert(probe.supporters.begin(), probe.supporters.end());
    scene.blocks.push_back(b);
  }
  return scene;
}

std::string scene_to_text(const SceneState& scene) {
  std::ostringstream os;
  os << "leo-scene v1\n";
  os << "task " << scene.task->name << "\n";
  os << "steps " << scene.step_count << "\n";
  os << "blocks " << scene.blocks.size() << "\n";
  for (const auto& b : scene.blocks) {
    os << b.id << " " << shape_name(b.kind.shape) << " " << b.x << " " << b.y << " " << b.z
       << " " << b.theta << " sup";
    for (int s : b.supported_by) os << " " << s;
    os << "\n";
  }
  os << "held " << (scene.held ? shape_name(scene.held->kind.shape) : "none");
  if (scene.held) os << " " << scene.held->id;
  os << "\n";
  os << "rng " << scene.rng.serialize() << "\n";
  return os.str();
}

SceneState scene_from_text(const std::string& text, const std::shared_ptr<const TaskSpec>& task) {
  std::istringstream is(text);
  std::string line;
  std::getline(is, line);
  if (line != "leo-scene v1") throw std::runtime_error("sim: bad scene format");
  SceneState scene;
  scene.task = task;
  std::string word;
  is >> word >> word;  // task <name>
  int nblocks = 0;
  is >> word >> scene.step_count;
  is >> word >> nblocks;
  for (int i = 0; i < nblocks; ++i) {
    BlockInstance b;
    std::string shape;
    is >> b.id >> shape >> b.x >> b.y >> b.z >> b.theta >> word;
    b.kind = task->kinds[task->kind_index(shape_from_name(shape))];
    std::getline(is, line);
    std::istringstream ls(line);
    int s;
    while (ls >> s) b.supported_by.insert(s);
    scene.blocks.push_back(b);
  }
  is >> word >> word;
  if (word != "none") {
    BlockInstance h;
    h.kind = task->kinds[task->kind_index(shape_from_name(word))];
    is >> h.id;
    scene.held = h;
  }
  is >> word;
  std::string rest;
  std::getline(is, rest);
  scene.rng.deserialize(rest);
  return scene;
}

}  // namespace leo
