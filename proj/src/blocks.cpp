#include "leo/blocks.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace leo {

std::string shape_name(BlockShape s) {
  switch (s) {
    case BlockShape::cube: return "cube";
    case BlockShape::brick: return "brick";
    case BlockShape::roof: return "roof";
    case BlockShape::triangle: return "triangle";
  }
  return "?";
}

BlockShape shape_from_name(const std::string& name) {
  if (name == "cube") return BlockShape::cube;
  if (name == "brick") return BlockShape::brick;
  if (name == "roof") return BlockShape::roof;
  if (name == "triangle") return BlockShape::triangle;
  throw std::runtime_error("blocks: unknown shape '" + name + "'");
}

void BlockKind::validate() const {
  if (length < 1 || width < 1) throw std::runtime_error("blocks: footprint dims must be >= 1");
  if (length % 2 == 0 || width % 2 == 0)
    throw std::runtime_error("blocks: footprint dims must be odd");
  if (height < 1) throw std::runtime_error("blocks: height must be >= 1");
}

namespace {

int mod_pos(int v, int m) {
  int r = v % m;
  return r < 0 ? r + m : r;
}

int symmetry_period_of(const GridSpec& g, int length, int width) {
  if (length == width && g.r % 4 == 0) return g.r / 4;
  return g.r / 2;
}

}  // namespace

// Rasterizes the rotated footprint once per remainder angle and maps it by
// exact integer quarter turns. Keeping the trigonometric part canonical (a
// remainder in (-R/8, R/8]) makes the covered cell set commute bitwise with
// every grid-exact isometry.
std::vector<std::pair<int, int>> footprint_cells(const GridSpec& g, int length, int width,
                                                 int x, int y, int theta) {
  const int period = symmetry_period_of(g, length, width);
  const int quarter = g.r / 4;  // may be fractional only if r % 4 != 0; then period == r/2
  int m = mod_pos(-theta, period);

  int q = 0, rho = m;
  if (g.r % 4 == 0) {
    q = (2 * m + quarter) / (2 * quarter);
    rho = m - q * quarter;  // in [-quarter/2, quarter/2)
    q = mod_pos(q, 4);
  }

  double cs = 1.0, sn = 0.0;
  if (rho != 0) {
    int a = std::abs(rho);
    if (g.r % 4 == 0 && 2 * a == quarter) {
      cs = std::sqrt(0.5);
      sn = std::sqrt(0.5);
    } else {
      double ang = a * 2.0 * M_PI / g.r;
      cs = std::cos(ang);
      sn = std::sin(ang);
    }
    if (rho < 0) sn = -sn;
  }

  const double hl = length / 2.0;
  const double hw = width / 2.0;
  const int rad = (int)std::ceil(std::sqrt((double)length * length + (double)width * width) / 2.0);

  std::vector<std::pair<int, int>> cells;
  cells.reserve((size_t)length * width + 8);
  for (int oy = -rad; oy <= rad; ++oy) {
    for (int ox = -rad; ox <= rad; ++ox) {
      double u = cs * ox - sn * oy;
      double v = sn * ox + cs * oy;
      if (std::fabs(u) < hl && std::fabs(v) < hw) {
        // covered cell = p + R(-90 q) o, exact integer map
        int rx = ox, ry = oy;
        for (int i = 0; i < q; ++i) {
          int nx = ry, ny = -rx;
          rx = nx;
          ry = ny;
        }
        cells.emplace_back(x + rx, y + ry);
      }
    }
  }
  return cells;
}

int TaskSpec::kind_index(BlockShape s) const {
  for (size_t i = 0; i < kinds.size(); ++i)
    if (kinds[i].shape == s) return (int)i;
  throw std::runtime_error("task: shape not in kind registry");
}

void TaskSpec::validate() const {
  grid.validate();
  for (const auto& k : kinds) k.validate();
  if (blocks.empty()) throw std::runtime_error("task: empty block inventory");
  if ((int)structure.constraints.size() != n_blocks() - 1)
    throw std::runtime_error("task: structure must place all non-anchor blocks");
  for (const auto& k : kinds) {
    if (k.length >= grid.w || k.width >= grid.w)
      throw std::runtime_error("task: block footprint does not fit the grid");
  }
}

namespace {

struct Geometry {
  int cube, longer, sep, mid;
};

Geometry geometry_for(const GridSpec& g) {
  if (g.w >= 96) return {21, 41, 22, 11};
  if (g.w >= 48) return {13, 23, 14, 7};
  return {5, 9, 6, 3};
}

}  // namespace

TaskSpec builtin_task(const std::string& name, const GridSpec& grid) {
  grid.validate();
  const Geometry geo = geometry_for(grid);
  const double tol_xy = std::max(1.0, 2.0 * grid.w / 64.0);

  TaskSpec t;
  t.name = name;
  t.grid = grid;
  t.kinds = {
      {BlockShape::cube, geo.cube, geo.cube, 2, false},
      {BlockShape::brick, geo.longer, geo.cube, 2, false},
      {BlockShape::roof, geo.longer, geo.cube, 3, true},
      {BlockShape::triangle, geo.cube, geo.cube, 3, true},
  };
  t.max_steps = 10;

  auto cube = BlockShape::cube;
  auto brick = BlockShape::brick;
  auto roof = BlockShape::roof;
  auto triangle = BlockShape::triangle;
  auto c = [&](BlockShape s, double dx, int dz) {
    return StructureConstraint{s, dx, 0.0, dz, 0, tol_xy, 1};
  };

  t.structure.anchor_shape = cube;
  if (name == "BS") {
    t.blocks = {0, 0, 0, 0};
    t.structure.constraints = {c(cube, 0, 2), c(cube, 0, 4), c(cube, 0, 6)};
  } else if (name == "HB1") {
    t.blocks = {0, 0, 0, 3};
    t.structure.constraints = {c(cube, 0, 2), c(cube, 0, 4), c(triangle, 0, 6)};
  } else if (name == "HB2") {
    t.blocks = {0, 0, 2};
    t.structure.constraints = {c(cube, geo.sep, 0), c(roof, geo.mid, 2)};
  } else if (name == "HB3") {
    t.blocks = {0, 0, 1, 2};
    t.structure.constraints = {c(cube, geo.sep, 0), c(brick, geo.mid, 2), c(roof, geo.mid, 4)};
  } else if (name == "HB4") {
    t.blocks = {0, 0, 0, 0, 1, 2};
    t.max_steps = 20;
    t.structure.constraints = {c(cube, geo.sep, 0), c(brick, geo.mid, 2),
                               c(cube, 0, 4), c(cube, geo.sep, 4), c(roof, geo.mid, 6)};
  } else {
    throw std::runtime_error("task: unknown task '" + name + "' (expected BS, HB1..HB4)");
  }
  t.validate();
  return t;
}

namespace {

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

}  // namespace

TaskSpec load_task_file(const std::string& path, const GridSpec& grid) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("task: cannot open '" + path + "'");

  TaskSpec t;
  t.grid = grid;
  std::map<std::string, BlockKind> kind_map;
  std::vector<std::string> inventory;
  std::string section;
  std::string line;
  std::string cur_kind;
  int version = 0;

  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks[0].front() == '[') {
      std::string sec = line.substr(line.find('[') + 1, line.find(']') - line.find('[') - 1);
      auto st = split_ws(sec);
      section = st.empty() ? "" : st[0];
      cur_kind = st.size() > 1 ? st[1] : "";
      if (section == "kind") kind_map[cur_kind] = BlockKind{};
      continue;
    }
    if (toks.size() < 3 || toks[1] != "=") continue;
    const std::string& key = toks[0];
    if (section.empty()) {
      if (key == "version") version = std::stoi(toks[2]);
      else if (key == "name") t.name = toks[2];
      else if (key == "max_steps") t.max_steps = std::stoi(toks[2]);
      else if (key == "support_fraction") t.support_fraction = std::stod(toks[2]);
      else if (key == "tol_theta") t.tol_theta = std::stoi(toks[2]);
    } else if (section == "kind") {
      BlockKind& k = kind_map[cur_kind];
      if (key == "shape") k.shape = shape_from_name(toks[2]);
      else if (key == "length") k.length = std::stoi(toks[2]);
      else if (key == "width") k.width = std::stoi(toks[2]);
      else if (key == "height") k.height = std::stoi(toks[2]);
      else if (key == "top_only") k.top_only = std::stoi(toks[2]) != 0;
    } else if (section == "inventory") {
      if (key == "blocks") inventory.assign(toks.begin() + 2, toks.end());
    } else if (section == "structure") {
      if (key == "anchor") t.structure.anchor_shape = shape_from_name(toks[2]);
      else if (key == "constraint") {
        if (toks.size() < 9) throw std::runtime_error("task: bad constraint line in " + path);
        StructureConstraint sc;
        sc.shape = shape_from_name(toks[2]);
        sc.dx = std::stod(toks[3]);
        sc.dy = std::stod(toks[4]);
        sc.dz = std::stoi(toks[5]);
        sc.dtheta = std::stoi(toks[6]);
        sc.tol_xy = std::stod(toks[7]);
        sc.tol_theta = std::stoi(toks[8]);
        t.structure.constraints.push_back(sc);
      }
    }
  }
  if (version != 1) throw std::runtime_error("task: missing or unsupported version in " + path);

  for (auto& [name, k] : kind_map) t.kinds.push_back(k);
  for (const auto& b : inventory) {
    int idx = -1;
    for (size_t i = 0; i < t.kinds.size(); ++i) {
      // match by declared section name via shape
      if (shape_name(t.kinds[i].shape) == b) idx = (int)i;
    }
    if (idx < 0) throw std::runtime_error("task: inventory kind '" + b + "' not declared");
    t.blocks.push_back(idx);
  }
  t.validate();
  return t;
}

void write_task_file(const std::string& path, const TaskSpec& task) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("task: cannot write '" + path + "'");
  out << "version = 1\n";
  out << "name = " << task.name << "\n";
  out << "max_steps = " << task.max_steps << "\n";
  out << "support_fraction = " << task.support_fraction << "\n";
  out << "tol_theta = " << task.tol_theta << "\n";
  for (const auto& k : task.kinds) {
    out << "\n[kind " << shape_name(k.shape) << "]\n";
    out << "shape = " << shape_name(k.shape) << "\n";
    out << "length = " << k.length << "\n";
    out << "width = " << k.width << "\n";
    out << "height = " << k.height << "\n";
    out << "top_only = " << (k.top_only ? 1 : 0) << "\n";
  }
  out << "\n[inventory]\n";
  out << "blocks =";
  for (int b : task.blocks) out << " " << shape_name(task.kinds[b].shape);
  out << "\n\n[structure]\n";
  out << "anchor = " << shape_name(task.structure.anchor_shape) << "\n";
  for (const auto& c : task.structure.constraints) {
    out << "constraint = " << shape_name(c.shape) << " " << c.dx << " " << c.dy << " "
        << c.dz << " " << c.dtheta << " " << c.tol_xy << " " << c.tol_theta << "\n";
  }
}

TaskSpec resolve_task(const std::string& name, const GridSpec& grid,
                      const std::string& config_dir) {
  std::vector<std::string> dirs;
  if (!config_dir.empty()) dirs.push_back(config_dir);
  if (const char* env = std::getenv("LEO_CONFIG_DIR")) dirs.push_back(env);
  for (const auto& d : dirs) {
    std::string lower = name;
    for (auto& ch : lower) ch = (char)std::tolower(ch);
    std::string path = d + "/" + lower + ".task";
    std::ifstream probe(path);
    if (probe.good()) return load_task_file(path, grid);
  }
  return builtin_task(name, grid);
}

}  // namespace leo
