#pragma once

#include <memory>
#include <optional>

#include "leo/blocks.hpp"
#include "leo/grid.hpp"
#include "leo/rng.hpp"

namespace leo {

enum class Verb { pick, place };

struct Action {
  Verb p = Verb::pick;
  int x = 0;
  int y = 0;
  int theta = 0;
};

/// What the agent sees: a top-down heightmap, the in-hand image of the
/// held object (all-zero when the gripper is empty), and the grasp flag.
struct Observation {
  std::vector<float> topdown;   // w*w, row-major (y*w + x)
  std::vector<float> inhand;    // h_patch*h_patch
  bool holding = false;

  bool operator==(const Observation&) const = default;
};

struct SceneState {
  std::shared_ptr<const TaskSpec> task;
  std::vector<BlockInstance> blocks;
  std::optional<BlockInstance> held;  // pose fields unused while held
  int step_count = 0;
  Rng rng;

  const GridSpec& grid() const { return task->grid; }
};

struct StepResult {
  Observation obs;
  float reward = 0.0f;
  bool done = false;
};

/// Fresh episode: all blocks scattered on the ground at random
/// non-overlapping poses. Identical seed gives an identical scene.
SceneState reset_scene(const std::shared_ptr<const TaskSpec>& task, uint64_t seed);
Observation observe(const SceneState& scene);

/// Deterministic transition; illegal physical actions are no-ops.
StepResult step(SceneState& scene, const Action& a);

std::vector<float> render_heightmap(const SceneState& scene);

/// Canonical in-hand image: the held kind rendered alone at the patch
/// center with zero rotation, so it depends only on block geometry.
std::vector<float> render_inhand(const GridSpec& g, const BlockKind& kind);

/// Literal crop variant: h_patch crop of the pre-pick heightmap centered
/// at (x, y), rotated by -theta, heights at or below the picked base zeroed.
std::vector<float> extract_inhand(const GridSpec& g, const std::vector<float>& topdown_before,
                                  int x, int y, int theta, int base_layer);

bool check_success(const SceneState& scene, const StructureSpec& spec);

/// Longest prefix of the construction-ordered constraints assembled at
/// exactly their specified relative poses, maximized over anchor candidates
/// and global rotations. Used by the oracle abstract-state labeler.
int structure_prefix(const SceneState& scene, const StructureSpec& spec);

/// Transforms every block pose (and the held block trivially) by a group
/// element; exact for grid-exact elements.
SceneState apply_group_scene(const GroupElement& alpha, const SceneState& scene);
Observation apply_group_state(const GridSpec& g, const GroupElement& alpha, const Observation& s);
std::optional<Action> apply_group_action(const GridSpec& g, const GroupElement& alpha, const Action& a);

/// True if every block footprint (and center margin) stays in bounds after
/// applying alpha; used by invariance test harnesses.
bool scene_content_in_bounds(const SceneState& scene);

bool scenes_equal(const SceneState& a, const SceneState& b);

/// Builds the task structure with the anchor at (x, y) rotated by
/// `rot_quarters` quarter turns; block ids 0..N-1 in construction order.
SceneState instantiate_structure(const std::shared_ptr<const TaskSpec>& task, int x, int y,
                                 int rot_quarters, uint64_t seed);

/// Scene snapshot text format for test fixtures.
std::string scene_to_text(const SceneState& scene);
SceneState scene_from_text(const std::string& text, const std::shared_ptr<const TaskSpec>& task);

// --- internals shared with the demo planner ---

/// Cells covered by a block instance.
std::vector<std::pair<int, int>> block_cells(const GridSpec& g, const BlockInstance& b);

struct SupportProbe {
  int height = 0;        // layer the footprint would rest on
  double fraction = 0;   // fraction of footprint cells supported at that height
  bool stackable = true; // false if any supporting block is top-only
  std::vector<int> supporters;  // ids (or kGroundId)
};
SupportProbe probe_support(const SceneState& scene, const std::vector<std::pair<int, int>>& cells);

/// True when every covered cell is inside the grid.
bool cells_in_bounds(const GridSpec& g, const std::vector<std::pair<int, int>>& cells);

/// The block that a pick at (x, y, theta) would grasp, if any.
std::optional<int> pick_candidate(const SceneState& scene, const Action& a);

}  // namespace leo
