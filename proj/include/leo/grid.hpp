#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace leo {

/// Grid resolution and discretization of the workspace.
struct GridSpec {
  int w = 128;                    // side length of the heightmap, in cells
  int r = 32;                     // number of discrete gripper rotations
  int h_patch = 24;               // side length of in-hand / local patch images
  float cell_height_unit = 0.1f;  // real height of one block layer

  void validate() const;

  static GridSpec preset(const std::string& name);

  long long action_count() const { return 2LL * w * w * r; }
  double center() const { return (w - 1) / 2.0; }

  // Pick tolerance in cells, 2 at w=128, scaled proportionally.
  double pick_tolerance() const { return 2.0 * w / 128.0; }

  // True if rotating by `rot` steps maps the cell grid onto itself exactly.
  bool rot_is_grid_exact(int rot) const { return (4LL * rot) % r == 0; }
  int quarter_steps() const { return r / 4; }

  bool operator==(const GridSpec&) const = default;
};

/// Element of the discrete approximation of the planar isometry group:
/// optional reflection, then rotation by `rot` steps about the image
/// center, then integer translation. Reflection mirrors the y axis.
struct GroupElement {
  int rot = 0;    // rotation index in [0, R)
  bool flip = false;
  int dx = 0;
  int dy = 0;

  static GroupElement identity() { return {}; }
  bool is_identity() const { return rot == 0 && !flip && dx == 0 && dy == 0; }
};

GroupElement group_compose(const GridSpec& g, const GroupElement& a, const GroupElement& b);
GroupElement group_inverse(const GridSpec& g, const GroupElement& a);

// Grid-exact iff the rotation is a quarter-turn multiple (translations and
// flips are always exact).
bool group_is_grid_exact(const GridSpec& g, const GroupElement& a);

/// Maps a real point about the image center. Exact arithmetic for
/// quarter-turn rotations.
void group_apply_point(const GridSpec& g, const GroupElement& a, double x, double y,
                       double& out_x, double& out_y);

/// Maps an integer cell; rounds for non-grid-exact rotations.
void group_apply_cell(const GridSpec& g, const GroupElement& a, int x, int y,
                      int& out_x, int& out_y);

/// Rotation-index transform: theta -> rot + (flip ? -theta : theta) (mod R).
int group_apply_theta(const GridSpec& g, const GroupElement& a, int theta);

/// Transforms a w*w image: out(q) = in(a^-1 q). Exact permutation for
/// grid-exact elements, nearest-cell resampling otherwise. Cells mapped
/// from outside the grid become zero.
void group_apply_image(const GridSpec& g, const GroupElement& a,
                       const float* in, float* out);

/// The 8 dihedral transforms about the image center (4 rotations x flip),
/// as group elements with zero translation. index in [0,8): rot = (index%4)
/// quarter turns, flip = index>=4.
GroupElement dihedral_element(const GridSpec& g, int index);

int dihedral_inverse_index(int index);
/// Cell map of dihedral transform `index` on a side*side square.
void dihedral_apply_cell(int side, int index, int x, int y, int& ox, int& oy);

/// Applies dihedral transform `index` to a square side*side image about the
/// (side-1)/2 center; an exact permutation for any parity of side.
template <typename T>
void dihedral_apply_square(int side, int index, const T* in, T* out) {
  const int inv = dihedral_inverse_index(index);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      int sx, sy;
      dihedral_apply_cell(side, inv, x, y, sx, sy);
      out[y * side + x] = in[sy * side + sx];
    }
  }
}

/// Crop of a square image centered at (x, y): patch index (p/2, p/2)
/// corresponds to (x, y); out-of-bounds cells are zero.
template <typename T>
void extract_patch(const T* img, int side, int x, int y, int patch, T* out) {
  const int half = patch / 2;
  for (int j = 0; j < patch; ++j) {
    for (int i = 0; i < patch; ++i) {
      int sx = x + i - half;
      int sy = y + j - half;
      T v = T(0);
      if (sx >= 0 && sx < side && sy >= 0 && sy < side) v = img[sy * side + sx];
      out[j * patch + i] = v;
    }
  }
}

namespace detail {
void rotate_patch_cellmap(int patch, int steps, int r_total, std::vector<int>& src_index);
}

/// Rotates a patch by `steps` rotation indices (of R total) about its
/// center; exact for quarter turns, nearest-cell otherwise. Negative source
/// indices denote cells mapped from outside the patch (zero-filled).
template <typename T>
void rotate_patch(const T* in, int patch, int steps, int r_total, T* out) {
  std::vector<int> map;
  detail::rotate_patch_cellmap(patch, steps, r_total, map);
  for (size_t i = 0; i < map.size(); ++i) out[i] = map[i] >= 0 ? in[map[i]] : T(0);
}

}  // namespace leo
