#pragma once

/*! \file
 *  \brief Deterministic procedural floor plans: binary space partition into
 *  rooms, one doorway per split, room contents drawn from the semantic-space
 *  networks.
 */

#include "semsearch/builtin_library.hpp"
#include "semsearch/semantics.hpp"
#include "semsearch/world.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace semsearch::world {

struct GeneratorOptions {
  std::uint64_t seed = 0;
  int rooms = 6;
  int objects = 40;
  /// 0 derives the size from the room count and `room_area_m2`.
  int width = 0;
  int height = 0;
  double resolution = 0.05;
  double room_area_m2 = 5.0;
  double door_width_m = 0.9;
  double min_room_side_m = 1.2;
  /// Class guaranteed at least one instance (empty = none).
  std::string ensure_class;
  /// Per room the probability that a hallway-style room gets a plant or lamp.
  double hallway_clutter = 0.3;
};

namespace detail {

struct Rect {
  int x0, y0, x1, y1;  // inclusive interior bounds
  int w() const { return x1 - x0 + 1; }
  int h() const { return y1 - y0 + 1; }
};

}  // namespace detail

inline Environment generate_environment(const GeneratorOptions& opt) {
  if (opt.rooms < 1) throw ValidationError("need at least one room");
  if (opt.objects < 0) throw ValidationError("object count must be non-negative");
  Rng rng(opt.seed);

  if (!(opt.resolution > 0.0)) throw ValidationError("resolution must be positive");
  const auto cells = [&](double meters) { return std::max(1, static_cast<int>(std::lround(meters / opt.resolution))); };
  const int door_width = cells(opt.door_width_m);
  const int min_side = cells(opt.min_room_side_m);
  int width = opt.width;
  int height = opt.height;
  if (width == 0 || height == 0) {
    const int side = cells(std::sqrt(opt.rooms * opt.room_area_m2)) + 2;
    width = width ? width : side + side / 7;
    height = height ? height : side;
  }

  Environment env;
  env.map = GridMap(width, height, opt.resolution, CellState::Occupied);
  env.rooms = RoomLabels(width, height);
  env.class_set = builtin::class_set();

  // Partition the interior; every split leaves a one-cell wall.
  std::vector<detail::Rect> leaves = {{1, 1, width - 2, height - 2}};
  struct Split {
    bool vertical;
    int wall;
    int lo, hi;  // extent along the wall
  };
  std::vector<Split> splits;
  while (static_cast<int>(leaves.size()) < opt.rooms) {
    // Split the largest leaf that can be split.
    std::vector<std::size_t> order(leaves.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return leaves[a].w() * leaves[a].h() > leaves[b].w() * leaves[b].h();
    });
    bool done = false;
    for (std::size_t li : order) {
      const auto r = leaves[li];
      const bool can_v = r.w() >= 2 * min_side + 1;
      const bool can_h = r.h() >= 2 * min_side + 1;
      if (!can_v && !can_h) continue;
      const bool vertical = can_v && (!can_h || r.w() >= r.h());
      const int extent = vertical ? r.w() : r.h();
      std::uniform_int_distribution<int> pos(min_side, extent - min_side - 1);
      const int off = pos(rng);
      if (vertical) {
        const int wall = r.x0 + off;
        leaves[li] = {r.x0, r.y0, wall - 1, r.y1};
        leaves.push_back({wall + 1, r.y0, r.x1, r.y1});
        splits.push_back({true, wall, r.y0, r.y1});
      } else {
        const int wall = r.y0 + off;
        leaves[li] = {r.x0, r.y0, r.x1, wall - 1};
        leaves.push_back({r.x0, wall + 1, r.x1, r.y1});
        splits.push_back({false, wall, r.x0, r.x1});
      }
      done = true;
      break;
    }
    if (!done) throw ValidationError("map too small for the requested room count");
  }

  for (std::size_t id = 0; id < leaves.size(); ++id) {
    const auto& r = leaves[id];
    for (int y = r.y0; y <= r.y1; ++y)
      for (int x = r.x0; x <= r.x1; ++x) {
        env.map.set({x, y}, CellState::Free);
        env.rooms.set({x, y}, static_cast<int>(id));
      }
  }

  // Doors: pick a run along each split wall whose cells have free rooms on both sides.
  for (const auto& s : splits) {
    std::vector<int> starts;
    for (int t = s.lo; t + door_width - 1 <= s.hi; ++t) {
      bool ok = true;
      for (int k = 0; k < door_width && ok; ++k) {
        const Cell a = s.vertical ? Cell{s.wall - 1, t + k} : Cell{t + k, s.wall - 1};
        const Cell b = s.vertical ? Cell{s.wall + 1, t + k} : Cell{t + k, s.wall + 1};
        ok = env.map.at(a) == CellState::Free && env.map.at(b) == CellState::Free;
      }
      if (ok) starts.push_back(t);
    }
    if (starts.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick(0, starts.size() - 1);
    const int t0 = starts[pick(rng)];
    for (int k = 0; k < door_width; ++k) {
      const Cell d = s.vertical ? Cell{s.wall, t0 + k} : Cell{t0 + k, s.wall};
      const Cell side = s.vertical ? Cell{s.wall - 1, t0 + k} : Cell{t0 + k, s.wall - 1};
      env.map.set(d, CellState::Free);
      env.rooms.set(d, env.rooms.at(side));
    }
  }

  // Room categories: first a bathroom and a kitchen, then random.
  const auto& types = builtin::room_types();
  std::discrete_distribution<std::size_t> type_dist({2.0, 1.0, 3.0, 2.0, 1.0});
  env.room_types.resize(leaves.size());
  for (std::size_t id = 0; id < leaves.size(); ++id) {
    if (id == 0) env.room_types[id] = "bathroom";
    else if (id == 1) env.room_types[id] = "kitchen";
    else env.room_types[id] = types[type_dist(rng)];
  }
  std::shuffle(env.room_types.begin(), env.room_types.end(), rng);

  const auto nets = builtin::networks();
  std::map<std::string, const semantics::BayesianNetwork*> by_label;
  for (const auto& n : nets) by_label[n.space_label()] = &n;

  std::vector<std::pair<int, int>> present;  // (room, class)
  for (std::size_t id = 0; id < leaves.size(); ++id) {
    std::set<int> classes;
    const auto it = by_label.find(env.room_types[id]);
    if (it != by_label.end()) {
      const auto& net = *it->second;
      const auto a = net.sample(rng);
      for (std::size_t k = 0; k < net.size(); ++k)
        if ((a >> k) & 1U) classes.insert(env.class_index(net.nodes()[k].name));
    } else {
      std::uniform_real_distribution<double> u01(0.0, 1.0);
      for (const char* name : {"plant", "lamp"})
        if (u01(rng) < opt.hallway_clutter) classes.insert(env.class_index(name));
    }
    for (int c : classes) present.emplace_back(static_cast<int>(id), c);
  }
  if (!opt.ensure_class.empty()) {
    const int c = env.class_index(opt.ensure_class);
    if (c < 0) throw ValidationError("unknown class to ensure: " + opt.ensure_class);
    const bool have = std::any_of(present.begin(), present.end(), [&](const auto& p) { return p.second == c; });
    if (!have) {
      int room = 0;
      for (std::size_t id = 0; id < leaves.size(); ++id)
        if (env.room_types[id] == "bathroom") { room = static_cast<int>(id); break; }
      present.emplace_back(room, c);
    }
  }
  std::shuffle(present.begin(), present.end(), rng);
  if (!opt.ensure_class.empty()) {
    // Keep the ensured class if truncation below would drop it.
    const int c = env.class_index(opt.ensure_class);
    std::stable_partition(present.begin(), present.end(), [&](const auto& p) { return p.second == c; });
  }

  std::vector<std::pair<int, int>> placements;
  const auto total = static_cast<std::size_t>(opt.objects);
  if (!present.empty()) {
    for (std::size_t i = 0; i < std::min(total, present.size()); ++i) placements.push_back(present[i]);
    std::uniform_int_distribution<std::size_t> pick(0, present.size() - 1);
    while (placements.size() < total) placements.push_back(present[pick(rng)]);
  } else {
    std::uniform_int_distribution<int> room_pick(0, static_cast<int>(leaves.size()) - 1);
    std::uniform_int_distribution<int> class_pick(0, static_cast<int>(env.class_set.size()) - 1);
    while (placements.size() < total) placements.emplace_back(room_pick(rng), class_pick(rng));
  }

  std::vector<std::set<Cell>> used(leaves.size());
  std::uniform_real_distribution<double> jitter(0.15, 0.85);
  int next_id = 0;
  for (const auto& [room, cls] : placements) {
    const auto& r = leaves[static_cast<std::size_t>(room)];
    std::uniform_int_distribution<int> px(r.x0, r.x1);
    std::uniform_int_distribution<int> py(r.y0, r.y1);
    Cell c{px(rng), py(rng)};
    const auto capacity = static_cast<std::size_t>(r.w() * r.h());
    for (int attempt = 0; attempt < 32 && used[static_cast<std::size_t>(room)].count(c) &&
                          used[static_cast<std::size_t>(room)].size() < capacity;
         ++attempt)
      c = {px(rng), py(rng)};
    used[static_cast<std::size_t>(room)].insert(c);
    GroundTruthObject o;
    o.id = next_id++;
    o.position = Vec2((c.x + jitter(rng)) * opt.resolution, (c.y + jitter(rng)) * opt.resolution);
    o.true_class = cls;
    o.room = room;
    env.objects.push_back(o);
  }
  return env;
}

/// Room-level co-occurrence counts of the ground-truth objects.
inline semantics::CooccurrenceCounts count_cooccurrence(const std::vector<Environment>& envs) {
  if (envs.empty()) return semantics::CooccurrenceCounts{};
  semantics::CooccurrenceCounts counts(envs.front().class_set);
  for (const auto& env : envs) {
    std::map<int, std::set<int>> per_room;
    for (int r = 0; r < env.room_count(); ++r) per_room[r];
    for (const auto& o : env.objects)
      if (o.room != kNoRoom) per_room[o.room].insert(o.true_class);
    for (const auto& [room, classes] : per_room) counts.add_room(classes);
  }
  return counts;
}

inline nlohmann::json to_json(const semantics::CooccurrenceCounts& counts) {
  return {{"classes", counts.classes}, {"pair", counts.pair}, {"single", counts.single}, {"rooms", counts.rooms}};
}

}  // namespace semsearch::world
