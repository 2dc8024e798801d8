#pragma once

#include <memory>
#include <set>
#include <string>
#include <vector>

#include "leo/grid.hpp"

namespace leo {

enum class BlockShape { cube, brick, roof, triangle };

std::string shape_name(BlockShape s);
BlockShape shape_from_name(const std::string& name);

/// Concrete block geometry. Footprint dims are odd so that a block centered
/// on a cell maps exactly onto cells under quarter-turn isometries.
struct BlockKind {
  BlockShape shape = BlockShape::cube;
  int length = 13;      // footprint extent along the block's own x at theta=0
  int width = 13;       // extent along y
  int height = 2;       // in layers
  bool top_only = false;  // nothing may be placed on roof/triangle kinds

  /// Order of the rotational symmetry of the rendered geometry:
  /// 4 for square footprints, 2 for rectangular ones.
  int symmetry_order() const { return length == width ? 4 : 2; }
  /// Rotation indices between equivalent orientations.
  int symmetry_period(const GridSpec& g) const { return g.r / symmetry_order(); }

  void validate() const;
  bool operator==(const BlockKind&) const = default;
};

constexpr int kGroundId = -1;

struct BlockInstance {
  int id = 0;
  BlockKind kind;
  int x = 0;
  int y = 0;
  int z = 0;        // layer index of the base
  int theta = 0;    // canonical: stored modulo the kind's symmetry period
  std::set<int> supported_by;  // block ids, or kGroundId

  int top() const { return z + kind.height; }
};

/// Cells covered by a footprint of size length x width centered at (x, y)
/// and rotated by theta rotation indices. Exact for all theta; commutes
/// with grid-exact isometries.
std::vector<std::pair<int, int>> footprint_cells(const GridSpec& g, int length, int width,
                                                 int x, int y, int theta);

/// One block of the goal structure relative to the anchor block's pose.
struct StructureConstraint {
  BlockShape shape;
  double dx = 0;
  double dy = 0;
  int dz = 0;        // layers, exact
  int dtheta = 0;    // rotation steps
  double tol_xy = 2; // cells, Chebyshev
  int tol_theta = 1; // rotation steps
};

struct StructureSpec {
  BlockShape anchor_shape = BlockShape::cube;
  // In construction order: lower blocks first.
  std::vector<StructureConstraint> constraints;
};

struct TaskSpec {
  std::string name;
  GridSpec grid;
  std::vector<BlockKind> kinds;   // kind registry for this task
  std::vector<int> blocks;        // block inventory as indices into kinds
  StructureSpec structure;
  int max_steps = 10;
  double support_fraction = 0.75; // minimum fraction of footprint on support
  int tol_theta = 1;              // pick orientation tolerance, steps

  int n_blocks() const { return (int)blocks.size(); }
  int optimal_steps() const { return 2 * (n_blocks() - 1); }
  int goal_space_size() const { return 2 * n_blocks() - 1; }

  int kind_index(BlockShape s) const;
  void validate() const;
};

/// Builds one of the five builtin tasks (BS, HB1..HB4) scaled to the grid.
TaskSpec builtin_task(const std::string& name, const GridSpec& grid);

/// Task configuration file I/O (flat key = value text with sections).
TaskSpec load_task_file(const std::string& path, const GridSpec& grid);
void write_task_file(const std::string& path, const TaskSpec& task);

/// Resolves a task by name: looks for <dir>/<name>.task in the config
/// directory (LEO_CONFIG_DIR, ./configs/tasks) and falls back to the
/// builtin definition.
TaskSpec resolve_task(const std::string& name, const GridSpec& grid,
                      const std::string& config_dir = "");

}  // namespace leo
