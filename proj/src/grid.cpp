#include "leo/grid.hpp"

#include <cmath>
#include <cstring>

namespace leo {

void GridSpec::validate() const {
  if (w < 16) throw std::runtime_error("grid: W must be >= 16");
  if (r < 4 || r % 2 != 0) throw std::runtime_error("grid: R must be even and >= 4");
  if (h_patch % 2 != 0 || h_patch >= w || h_patch < 2)
    throw std::runtime_error("grid: H_patch must be even and < W");
  if (cell_height_unit <= 0.0f) throw std::runtime_error("grid: cell_height_unit must be > 0");
}

GridSpec GridSpec::preset(const std::string& name) {
  GridSpec g;
  if (name == "paper") {
    g.w = 128; g.r = 32; g.h_patch = 24;
  } else if (name == "desk") {
    g.w = 64; g.r = 8; g.h_patch = 14;
  } else if (name == "tiny") {
    g.w = 32; g.r = 4; g.h_patch = 6;
  } else {
    throw std::runtime_error("grid: unknown preset '" + name + "'");
  }
  g.validate();
  return g;
}

bool group_is_grid_exact(const GridSpec& g, const GroupElement& a) {
  return g.rot_is_grid_exact(a.rot);
}

namespace {

int mod_r(int v, int r) {
  int m = v % r;
  return m < 0 ? m + r : m;
}

// Quarter-turn count if grid-exact, else -1.
int quarter_of(const GridSpec& g, int rot) {
  if (!g.rot_is_grid_exact(rot)) return -1;
  return mod_r(4 * mod_r(rot, g.r) / g.r, 4);
}

// Exact integer map of the linear part (flip then q quarter turns) about
// the (w-1)/2 center.
void linear_cell_exact(int w, int q, bool flip, int x, int y, int& ox, int& oy) {
  int yy = flip ? (w - 1 - y) : y;
  int xx = x;
  for (int i = 0; i < q; ++i) {
    int nx = (w - 1) - yy;
    int ny = xx;
    xx = nx;
    yy = ny;
  }
  ox = xx;
  oy = yy;
}

}  // namespace

GroupElement group_compose(const GridSpec& g, const GroupElement& a, const GroupElement& b) {
  // a after b: p -> La(Lb(p - c) + tb) + c + ta = La Lb (p - c) + (La tb + ta) + c
  GroupElement out;
  out.flip = a.flip != b.flip;
  out.rot = mod_r(a.rot + (a.flip ? -b.rot : b.rot), g.r);
  // La applied to the translation vector tb (pure linear part, about origin).
  double tx, ty;
  {
    double c = g.center();
    group_apply_point(g, GroupElement{a.rot, a.flip, 0, 0}, c + b.dx, c + b.dy, tx, ty);
    tx -= c;
    ty -= c;
  }
  out.dx = (int)std::lround(tx) + a.dx;
  out.dy = (int)std::lround(ty) + a.dy;
  return out;
}

GroupElement group_inverse(const GridSpec& g, const GroupElement& a) {
  GroupElement inv;
  inv.flip = a.flip;
  inv.rot = a.flip ? mod_r(a.rot, g.r) : mod_r(-a.rot, g.r);
  // inverse translation: -L^-1 t
  double c = g.center();
  double tx, ty;
  group_apply_point(g, GroupElement{inv.rot, inv.flip, 0, 0}, c + a.dx, c + a.dy, tx, ty);
  inv.dx = -(int)std::lround(tx - c);
  inv.dy = -(int)std::lround(ty - c);
  return inv;
}

void group_apply_point(const GridSpec& g, const GroupElement& a, double x, double y,
                       double& out_x, double& out_y) {
  double c = g.center();
  double u = x - c;
  double v = y - c;
  if (a.flip) v = -v;
  int q = quarter_of(g, a.rot);
  if (q >= 0) {
    for (int i = 0; i < q; ++i) {
      double nu = -v, nv = u;
      u = nu;
      v = nv;
    }
  } else {
    double ang = a.rot * 2.0 * M_PI / g.r;
    double cs = std::cos(ang), sn = std::sin(ang);
    double nu = u * cs - v * sn;
    double nv = u * sn + v * cs;
    u = nu;
    v = nv;
  }
  out_x = c + u + a.dx;
  out_y = c + v + a.dy;
}

void group_apply_cell(const GridSpec& g, const GroupElement& a, int x, int y,
                      int& out_x, int& out_y) {
  int q = quarter_of(g, a.rot);
  if (q >= 0) {
    linear_cell_exact(g.w, q, a.flip, x, y, out_x, out_y);
    out_x += a.dx;
    out_y += a.dy;
    return;
  }
  double px, py;
  group_apply_point(g, a, x, y, px, py);
  out_x = (int)std::lround(px);
  out_y = (int)std::lround(py);
}

int group_apply_theta(const GridSpec& g, const GroupElement& a, int theta) {
  return mod_r(a.rot + (a.flip ? -theta : theta), g.r);
}

void group_apply_image(const GridSpec& g, const GroupElement& a,
                       const float* in, float* out) {
  const int w = g.w;
  GroupElement inv = group_inverse(g, a);
  int q = quarter_of(g, inv.rot);
  if (q >= 0) {
    for (int y = 0; y < w; ++y) {
      for (int x = 0; x < w; ++x) {
        // source = inv(dest); inv includes its own translation applied last,
        // but to keep translation semantics exact we map dest through inv.
        int sx, sy;
        linear_cell_exact(w, q, inv.flip, x - a.dx, y - a.dy, sx, sy);
        // careful: inv of (L, t) is (L^-1, -L^-1 t); applying translation of a
        // first (x - dx) then inverse linear is exact.
        float v = 0.0f;
        if (sx >= 0 && sx < w && sy >= 0 && sy < w) v = in[sy * w + sx];
        out[y * w + x] = v;
      }
    }
    return;
  }
  GroupElement inv_linear{inv.rot, inv.flip, 0, 0};
  for (int y = 0; y < w; ++y) {
    for (int x = 0; x < w; ++x) {
      double sx, sy;
      group_apply_point(g, inv_linear, x - a.dx, y - a.dy, sx, sy);
      int ix = (int)std::lround(sx);
      int iy = (int)std::lround(sy);
      float v = 0.0f;
      if (ix >= 0 && ix < w && iy >= 0 && iy < w) v = in[iy * w + ix];
      out[y * w + x] = v;
    }
  }
}

GroupElement dihedral_element(const GridSpec& g, int index) {
  GroupElement e;
  e.rot = (index % 4) * g.quarter_steps();
  e.flip = index >= 4;
  return e;
}

int dihedral_inverse_index(int index) {
  if (index >= 4) return index;         // reflections are involutions
  return (4 - index) % 4;
}

void dihedral_apply_cell(int side, int index, int x, int y, int& ox, int& oy) {
  linear_cell_exact(side, index % 4, index >= 4, x, y, ox, oy);
}

namespace detail {

// Rotation by `steps` is decomposed into a canonical resample by the
// remainder angle followed by an exact quarter-turn permutation, so
// rotating an input by additional quarter turns composes exactly.
void rotate_patch_cellmap(int patch, int steps, int r_total, std::vector<int>& src_index) {
  src_index.assign((size_t)patch * patch, -1);
  int s = mod_r(steps, r_total);
  int q = 0, rho = 0;
  if (r_total % 4 == 0) {
    const int quarter = r_total / 4;
    q = (2 * s + quarter) / (2 * quarter);
    rho = s - q * quarter;
    q = ((q % 4) + 4) % 4;
  } else {
    rho = s;
  }

  // exact part: source = rot_{-q*90}(dest), applied to the image first
  std::vector<int> exact_map((size_t)patch * patch);
  {
    int qi = (4 - q) % 4;
    for (int y = 0; y < patch; ++y)
      for (int x = 0; x < patch; ++x) {
        int sx, sy;
        linear_cell_exact(patch, qi, false, x, y, sx, sy);
        exact_map[(size_t)y * patch + x] = sy * patch + sx;
      }
  }
  if (rho == 0) {
    src_index = exact_map;
    return;
  }

  double c = (patch - 1) / 2.0;
  double ang = -rho * 2.0 * M_PI / r_total;
  double cs = std::cos(ang), sn = std::sin(ang);
  for (int y = 0; y < patch; ++y) {
    for (int x = 0; x < patch; ++x) {
      double u = x - c, v = y - c;
      double su = u * cs - v * sn;
      double sv = u * sn + v * cs;
      int ix = (int)std::lround(c + su);
      int iy = (int)std::lround(c + sv);
      if (ix >= 0 && ix < patch && iy >= 0 && iy < patch)
        src_index[(size_t)y * patch + x] = exact_map[(size_t)iy * patch + ix];
    }
  }
}

}  // namespace detail

}  // namespace leo
