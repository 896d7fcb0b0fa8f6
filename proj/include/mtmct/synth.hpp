#pragma once

// Seeded synthetic multi-camera world: agents walk between points of interest
// on a raster floor plan, every camera that sees an agent emits a box through
// its homography, and appearance vectors are noisy copies of a per-identity
// base vector. Output is a dataset directory in the engine's own file formats.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtmct/errors.hpp"
#include "mtmct/geometry_io.hpp"
#include "mtmct/rng.hpp"
#include "mtmct/semantic_map.hpp"

namespace mtmct {

struct Rect {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

struct CameraPlacement {
  CameraId id = 0;
  Rect fov;                      // ground-plane metres
  double pixels_per_meter = 40.0;
  double perspective = 0.02;     // growth of the homogeneous scale with ground y
};

struct OcclusionWindow {
  int agent = 0;
  int start_frame = 0;
  int end_frame = 0;  // inclusive
};

struct NoiseSpec {
  double miss_rate = 0.0;
  double box_jitter_px = 0.0;
  double embedding_sigma = 0.0;
  double clutter_rate = 0.0;  // expected false boxes per camera per frame
  double conf_min = 1.0;      // confidences drawn from [conf_min, 1]
  int occlusions_per_agent = 0;
  int occlusion_min_frames = 10;
  int occlusion_max_frames = 25;
  std::vector<OcclusionWindow> occlusions;
};

struct ScenarioSpec {
  std::string name = "custom";
  int grid_width = 40;
  int grid_height = 8;
  double cell_size = 0.5;
  std::vector<Rect> walkable_rects;  // metres; their union is the floor
  std::vector<CameraPlacement> cameras;
  std::vector<AdjacencyEdge> adjacency;
  int agents = 4;
  int duration_frames = 300;
  double fps = 10.0;
  std::uint64_t seed = 1;
  double speed_mps = 1.2;
  int max_pause_frames = 20;
  double person_height_m = 1.7;
  int embedding_dim = 128;
  NoiseSpec noise;
};

inline ScenarioSpec zero_noise(ScenarioSpec spec) {
  spec.noise = NoiseSpec{};
  return spec;
}

// ---------------------------------------------------------------------------
// Named benchmarks

namespace detail {

inline NoiseSpec default_noise() {
  NoiseSpec n;
  n.miss_rate = 0.05;
  n.box_jitter_px = 1.5;
  n.embedding_sigma = 0.06;
  n.clutter_rate = 0.02;
  n.conf_min = 0.5;
  n.occlusions_per_agent = 1;
  return n;
}

}  // namespace detail

inline std::vector<ScenarioSpec> standard_benchmarks() {
  std::vector<ScenarioSpec> out;
  {
    ScenarioSpec s;
    s.name = "single-cam-occlusion";
    s.grid_width = 32;
    s.grid_height = 24;
    s.walkable_rects = {{0, 0, 16, 12}};
    s.cameras = {{1, {0, 0, 16, 12}}};
    s.adjacency = {{1, 1, 2.0, 3.0, 1.0}};
    s.agents = 6;
    s.duration_frames = 400;
    s.noise = detail::default_noise();
    s.noise.occlusions_per_agent = 2;
    out.push_back(s);
  }
  {
    // 14 m wide views overlapping by 4.2 m (30%).
    ScenarioSpec s;
    s.name = "overlap-handover";
    s.grid_width = 48;
    s.grid_height = 12;
    s.walkable_rects = {{0, 0, 24, 6}};
    s.cameras = {{1, {0, 0, 14, 6}}, {2, {9.8, 0, 23.8, 6}}};
    s.adjacency = {{1, 2, 1.0, 1.0, 1.0}, {2, 1, 1.0, 1.0, 1.0}};
    s.agents = 6;
    s.duration_frames = 400;
    s.noise = detail::default_noise();
    out.push_back(s);
  }
  {
    // Views 6 m apart along a corridor; 1.2 m/s gives a 5 s transit.
    ScenarioSpec s;
    s.name = "gap-handover";
    s.grid_width = 40;
    s.grid_height = 8;
    s.walkable_rects = {{0, 0, 20, 4}};
    s.cameras = {{1, {0, 0, 7, 4}}, {2, {13, 0, 20, 4}}};
    s.adjacency = {{1, 2, 5.0, 1.5, 1.0}, {2, 1, 5.0, 1.5, 1.0}};
    s.agents = 5;
    s.duration_frames = 500;
    s.noise = detail::default_noise();
    out.push_back(s);
  }
  {
    // Zigzag office: three horizontal corridors joined by two vertical ones.
    ScenarioSpec s;
    s.name = "zigzag-5cam";
    s.grid_width = 80;
    s.grid_height = 32;
    s.walkable_rects = {{0, 0, 16, 5}, {12, 5, 16, 15}, {12, 10, 32, 15}, {28, 0, 32, 10}, {28, 0, 40, 5}};
    s.cameras = {{1, {0, 0, 12, 5}},
                 {2, {10, 0, 16, 15}},
                 {3, {16, 10, 29, 15}},
                 {4, {28, 0, 32, 15}},
                 {5, {33, 0, 40, 5}}};
    s.adjacency = {{1, 2, 0.5, 1.0, 1.0}, {2, 1, 0.5, 1.0, 1.0}, {2, 3, 0.5, 1.0, 1.0}, {3, 2, 0.5, 1.0, 1.0},
                   {3, 4, 0.5, 1.0, 1.0}, {4, 3, 0.5, 1.0, 1.0}, {4, 5, 1.0, 1.0, 1.0}, {5, 4, 1.0, 1.0, 1.0}};
    s.agents = 12;
    s.duration_frames = 900;
    s.noise = detail::default_noise();
    out.push_back(s);
  }
  return out;
}

inline ScenarioSpec find_benchmark(const std::string& name) {
  for (auto& s : standard_benchmarks())
    if (s.name == name) return s;
  throw UsageError("unknown benchmark '" + name + "'");
}

// ---------------------------------------------------------------------------
// Spec JSON

inline nlohmann::json rect_json(const Rect& r) { return {r.x0, r.y0, r.x1, r.y1}; }
inline Rect rect_from(const nlohmann::json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(), j.at(3).get<double>()};
}

inline nlohmann::json scenario_to_json(const ScenarioSpec& s) {
  nlohmann::json j;
  j["name"] = s.name;
  j["grid"] = {s.grid_width, s.grid_height};
  j["cell_size"] = s.cell_size;
  j["walkable_rects"] = nlohmann::json::array();
  for (const auto& r : s.walkable_rects) j["walkable_rects"].push_back(rect_json(r));
  j["cameras"] = nlohmann::json::array();
  for (const auto& c : s.cameras)
    j["cameras"].push_back({{"id", c.id}, {"fov", rect_json(c.fov)}, {"pixels_per_meter", c.pixels_per_meter},
                            {"perspective", c.perspective}});
  j["adjacency"] = nlohmann::json::array();
  for (const auto& e : s.adjacency)
    j["adjacency"].push_back({{"from", e.from}, {"to", e.to}, {"mean_transit_s", e.mean_transit_s}, {"std_s", e.std_s}, {"weight", e.weight}});
  j["agents"] = s.agents;
  j["duration_frames"] = s.duration_frames;
  j["fps"] = s.fps;
  j["seed"] = s.seed;
  j["speed_mps"] = s.speed_mps;
  j["max_pause_frames"] = s.max_pause_frames;
  j["person_height_m"] = s.person_height_m;
  j["embedding_dim"] = s.embedding_dim;
  const NoiseSpec& n = s.noise;
  j["noise"] = {{"miss_rate", n.miss_rate},
                {"box_jitter_px", n.box_jitter_px},
                {"embedding_sigma", n.embedding_sigma},
                {"clutter_rate", n.clutter_rate},
                {"conf_min", n.conf_min},
                {"occlusions_per_agent", n.occlusions_per_agent},
                {"occlusion_min_frames", n.occlusion_min_frames},
                {"occlusion_max_frames", n.occlusion_max_frames},
                {"occlusions", nlohmann::json::array()}};
  for (const auto& o : n.occlusions) j["noise"]["occlusions"].push_back({o.agent, o.start_frame, o.end_frame});
  return j;
}

inline ScenarioSpec scenario_from_json(const nlohmann::json& j) {
  ScenarioSpec s;
  try {
    s.name = j.value("name", s.name);
    if (j.contains("grid")) {
      s.grid_width = j.at("grid").at(0).get<int>();
      s.grid_height = j.at("grid").at(1).get<int>();
    }
    s.cell_size = j.value("cell_size", s.cell_size);
    for (const auto& r : j.at("walkable_rects")) s.walkable_rects.push_back(rect_from(r));
    for (const auto& c : j.at("cameras"))
      s.cameras.push_back({c.at("id").get<int>(), rect_from(c.at("fov")), c.value("pixels_per_meter", 40.0),
                           c.value("perspective", 0.02)});
    if (j.contains("adjacency"))
      for (const auto& e : j.at("adjacency"))
        s.adjacency.push_back({e.at("from").get<int>(), e.at("to").get<int>(), e.value("mean_transit_s", 1.0),
                               e.value("std_s", 1.0), e.value("weight", 1.0)});
    s.agents = j.value("agents", s.agents);
    s.duration_frames = j.value("duration_frames", s.duration_frames);
    s.fps = j.value("fps", s.fps);
    s.seed = j.value("seed", s.seed);
    s.speed_mps = j.value("speed_mps", s.speed_mps);
    s.max_pause_frames = j.value("max_pause_frames", s.max_pause_frames);
    s.person_height_m = j.value("person_height_m", s.person_height_m);
    s.embedding_dim = j.value("embedding_dim", s.embedding_dim);
    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      s.noise.miss_rate = n.value("miss_rate", 0.0);
      s.noise.box_jitter_px = n.value("box_jitter_px", 0.0);
      s.noise.embedding_sigma = n.value("embedding_sigma", 0.0);
      s.noise.clutter_rate = n.value("clutter_rate", 0.0);
      s.noise.conf_min = n.value("conf_min", 1.0);
      s.noise.occlusions_per_agent = n.value("occlusions_per_agent", 0);
      s.noise.occlusion_min_frames = n.value("occlusion_min_frames", 10);
      s.noise.occlusion_max_frames = n.value("occlusion_max_frames", 25);
      if (n.contains("occlusions"))
        for (const auto& o : n.at("occlusions"))
          s.noise.occlusions.push_back({o.at(0).get<int>(), o.at(1).get<int>(), o.at(2).get<int>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("scenario spec: ") + e.what());
  }
  return s;
}

inline void validate(const ScenarioSpec& s) {
  auto in_unit = [](double v) { return v >= 0.0 && v < 1.0; };
  if (s.grid_width <= 0 || s.grid_height <= 0 || !(s.cell_size > 0.0)) throw SpecError("grid must be non-empty");
  if (s.cameras.empty()) throw SpecError("scenario needs at least one camera");
  if (!(s.fps > 0.0) || s.duration_frames <= 0 || s.agents < 0 || s.embedding_dim <= 0) throw SpecError("bad timing or sizes");
  if (!in_unit(s.noise.miss_rate) || !in_unit(s.noise.clutter_rate)) throw SpecError("miss and clutter rates must lie in [0,1)");
  if (s.noise.conf_min < 0.0 || s.noise.conf_min > 1.0) throw SpecError("conf_min outside [0,1]");
}

// ---------------------------------------------------------------------------
// Generation

struct DatasetBundle {
  ScenarioSpec spec;
  MapSpec map_spec;
  RasterMap map;
  CameraSet cameras;
  std::map<CameraId, std::vector<TrackRow>> detections;  // id = -1
  std::map<CameraId, EmbeddingTable> embeddings;        // row k <-> detection row k
  std::map<CameraId, std::vector<TrackRow>> ground_truth;
};

namespace detail {

/// Value as it reads back from a "%.6f" field, so files and memory agree.
inline double quantize6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return std::strtod(buf, nullptr);
}

inline Box quantize6(const Box& b) { return {quantize6(b.left), quantize6(b.top), quantize6(b.width), quantize6(b.height)}; }

inline Eigen::Matrix3d ground_to_image(const CameraPlacement& c) {
  const double s = c.pixels_per_meter;
  const double p = c.perspective;
  Eigen::Matrix3d g;
  g << s, 0, -s * c.fov.x0, 0, s, -s * c.fov.y0, 0, p, 1.0 - p * c.fov.y0;
  return g;
}

inline std::vector<CellIndex> bfs_path(const RasterMap& map, const CellIndex& from, const CellIndex& to) {
  std::vector<int> prev(map.cells.size(), -1);
  std::vector<char> seen(map.cells.size(), 0);
  std::deque<CellIndex> q{from};
  seen[map.flat(from)] = 1;
  while (!q.empty()) {
    const CellIndex c = q.front();
    q.pop_front();
    if (c == to) break;
    constexpr int kDi[4] = {1, -1, 0, 0};
    constexpr int kDj[4] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      const CellIndex n{c.i + kDi[k], c.j + kDj[k]};
      if (!map.walkable(n) || seen[map.flat(n)]) continue;
      seen[map.flat(n)] = 1;
      prev[map.flat(n)] = static_cast<int>(map.flat(c));
      q.push_back(n);
    }
  }
  std::vector<CellIndex> path;
  if (!seen[map.flat(to)]) return path;
  for (int at = static_cast<int>(map.flat(to)); at >= 0; at = prev[static_cast<std::size_t>(at)]) {
    path.push_back({at % map.width, at / map.width});
    if (at == static_cast<int>(map.flat(from))) break;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

struct Agent {
  Vec2 pos;
  std::vector<Vec2> route;  // remaining waypoints (cell centres)
  int pause = 0;
  int region = 0;
  std::vector<double> base;  // unit appearance vector
};

}  // namespace detail

inline DatasetBundle generate_scenario(const ScenarioSpec& spec) {
  validate(spec);
  DatasetBundle out;
  out.spec = spec;

  MapSpec& ms = out.map_spec;
  ms.origin = {0.0, 0.0};
  ms.cell_size = spec.cell_size;
  ms.width = spec.grid_width;
  ms.height = spec.grid_height;
  ms.walkable.assign(static_cast<std::size_t>(spec.grid_width) * spec.grid_height, 0);
  for (int j = 0; j < spec.grid_height; ++j)
    for (int i = 0; i < spec.grid_width; ++i) {
      const double x = (i + 0.5) * spec.cell_size, y = (j + 0.5) * spec.cell_size;
      for (const auto& r : spec.walkable_rects)
        if (x >= r.x0 && x <= r.x1 && y >= r.y0 && y <= r.y1) ms.walkable[static_cast<std::size_t>(i + j * spec.grid_width)] = 1;
    }
  if (std::none_of(ms.walkable.begin(), ms.walkable.end(), [](std::uint8_t w) { return w != 0; }))
    throw SpecError("scenario has no walkable cell");

  std::map<CameraId, Eigen::Matrix3d> to_image;
  for (const auto& c : spec.cameras) {
    const Eigen::Matrix3d g = detail::ground_to_image(c);
    to_image[c.id] = g;
    out.cameras.push_back(make_calibration(c.id, g.inverse(), {{c.fov.x0, c.fov.y0}, {c.fov.x1, c.fov.y0}, {c.fov.x1, c.fov.y1}, {c.fov.x0, c.fov.y1}}));
  }
  ms.cameras = out.cameras;
  ms.adjacency = spec.adjacency;
  out.map = build_map(ms);
  const RasterMap& map = out.map;

  // Points of interest: walkable cells some camera sees.
  std::vector<CellIndex> poi;
  for (int j = 0; j < map.height; ++j)
    for (int i = 0; i < map.width; ++i)
      if (map.walkable({i, j}) && !map.at({i, j}).covisible.empty()) poi.push_back({i, j});
  if (poi.empty()) throw SpecError("no walkable cell is seen by a camera");

  Rng motion(spec.seed * 0x9E3779B97F4A7C15ull + 1);
  Rng appearance(spec.seed * 0x9E3779B97F4A7C15ull + 2);
  Rng noise(spec.seed * 0x9E3779B97F4A7C15ull + 3);

  std::vector<detail::Agent> agents(static_cast<std::size_t>(spec.agents));
  for (auto& a : agents) {
    const CellIndex start = poi[motion.below(poi.size())];
    a.pos = map.cell_center(start);
    a.region = map.at(start).connected_region;
    a.base.resize(static_cast<std::size_t>(spec.embedding_dim));
    double n2 = 0.0;
    for (double& v : a.base) {
      v = appearance.normal();
      n2 += v * v;
    }
    for (double& v : a.base) v /= std::sqrt(n2);
  }

  std::vector<OcclusionWindow> occlusions = spec.noise.occlusions;
  for (int a = 0; a < spec.agents; ++a)
    for (int k = 0; k < spec.noise.occlusions_per_agent; ++k) {
      const int len = spec.noise.occlusion_min_frames +
                      static_cast<int>(noise.below(static_cast<std::uint64_t>(
                          std::max(1, spec.noise.occlusion_max_frames - spec.noise.occlusion_min_frames + 1))));
      const int start = static_cast<int>(noise.below(static_cast<std::uint64_t>(std::max(1, spec.duration_frames - len))));
      occlusions.push_back({a, start, start + len - 1});
    }
  auto occluded = [&](int agent, int frame) {
    return std::any_of(occlusions.begin(), occlusions.end(),
                       [&](const OcclusionWindow& o) { return o.agent == agent && frame >= o.start_frame && frame <= o.end_frame; });
  };

  const double step = spec.speed_mps / spec.fps;
  std::map<CameraId, std::vector<float>> emb_values;
  for (const auto& c : spec.cameras) {
    out.detections[c.id];
    out.ground_truth[c.id];
    emb_values[c.id];
  }

  auto make_box = [&](const CameraPlacement& cam, const Vec2& ground) {
    const Eigen::Matrix3d& g = to_image.at(cam.id);
    const Eigen::Vector3d h = g * Eigen::Vector3d(ground.x, ground.y, 1.0);
    const double u = h.x() / h.z(), v = h.y() / h.z();
    const double height = spec.person_height_m * cam.pixels_per_meter / h.z();
    const double width = 0.4 * height;
    return Box{u - width / 2.0, v - height, width, height};
  };
  auto head_of = [](const Box& b) {
    const double w = 0.4 * b.width;
    return Box{b.left + (b.width - w) / 2.0, b.top, w, b.height / 7.0};
  };
  auto push_embedding = [&](CameraId cam, const std::vector<double>& base) {
    std::vector<double> v = base;
    if (spec.noise.embedding_sigma > 0.0) {
      double n2 = 0.0;
      for (double& x : v) {
        x += spec.noise.embedding_sigma * noise.normal();
        n2 += x * x;
      }
      for (double& x : v) x /= std::sqrt(n2);
    }
    for (double x : v) emb_values[cam].push_back(static_cast<float>(x));
  };

  for (int f = 0; f < spec.duration_frames; ++f) {
    // Emit observations at the current positions, then move.
    for (const auto& cam : spec.cameras) {
      const CameraCalibration& calib = find_camera(out.cameras, cam.id);
      for (int a = 0; a < spec.agents; ++a) {
        const auto& ag = agents[static_cast<std::size_t>(a)];
        CellIndex cell;
        try {
          cell = world_to_cell(ag.pos, map);
        } catch (const OffMapError&) {
          continue;
        }
        if (!is_covisible(map, cell, cam.id)) continue;
        const Box gt_box = detail::quantize6(make_box(cam, ag.pos));
        // Keep only boxes whose foot projects back into a cell this camera covers.
        try {
          const CellIndex back = world_to_cell(project_to_ground(gt_box.foot(), calib), map);
          if (!is_covisible(map, back, cam.id)) continue;
        } catch (const Error&) {
          continue;
        }
        TrackRow gt;
        gt.frame = f;
        gt.id = a + 1;
        gt.body_box = gt_box;
        gt.head_box = detail::quantize6(head_of(gt_box));
        gt.global_id = a + 1;
        out.ground_truth[cam.id].push_back(gt);

        if (occluded(a, f)) continue;
        if (spec.noise.miss_rate > 0.0 && noise.bernoulli(spec.noise.miss_rate)) continue;
        Box b = gt_box;
        if (spec.noise.box_jitter_px > 0.0) {
          b.left += spec.noise.box_jitter_px * noise.normal();
          b.top += spec.noise.box_jitter_px * noise.normal();
          b.width = std::max(1.0, b.width + spec.noise.box_jitter_px * noise.normal());
          b.height = std::max(1.0, b.height + spec.noise.box_jitter_px * noise.normal());
          b = detail::quantize6(b);
        }
        TrackRow det;
        det.frame = f;
        det.body_box = b;
        det.head_box = detail::quantize6(head_of(b));
        det.confidence = spec.noise.conf_min >= 1.0 ? 1.0 : detail::quantize6(noise.uniform(spec.noise.conf_min, 1.0));
        out.detections[cam.id].push_back(det);
        push_embedding(cam.id, ag.base);
      }
      if (spec.noise.clutter_rate > 0.0 && noise.bernoulli(spec.noise.clutter_rate)) {
        std::vector<CellIndex> seen;
        for (const auto& c : poi)
          if (is_covisible(map, c, cam.id)) seen.push_back(c);
        if (!seen.empty()) {
          const CellIndex c = seen[noise.below(seen.size())];
          const Box b = detail::quantize6(make_box(cam, map.cell_center(c)));
          TrackRow det;
          det.frame = f;
          det.body_box = b;
          det.head_box = detail::quantize6(head_of(b));
          det.confidence = detail::quantize6(noise.uniform(0.3, 0.7));
          out.detections[cam.id].push_back(det);
          std::vector<double> rnd(static_cast<std::size_t>(spec.embedding_dim));
          double n2 = 0.0;
          for (double& x : rnd) {
            x = noise.normal();
            n2 += x * x;
          }
          for (double& x : rnd) x /= std::sqrt(n2);
          for (double x : rnd) emb_values[cam.id].push_back(static_cast<float>(x));
        }
      }
    }

    for (auto& ag : agents) {
      if (ag.pause > 0) {
        --ag.pause;
        continue;
      }
      if (ag.route.empty()) {
        const CellIndex here = world_to_cell(ag.pos, map);
        for (int tries = 0; tries < 16 && ag.route.empty(); ++tries) {
          const CellIndex goal = poi[motion.below(poi.size())];
          if (map.at(goal).connected_region != ag.region || goal == here) continue;
          for (const auto& c : detail::bfs_path(map, here, goal)) ag.route.push_back(map.cell_center(c));
        }
        if (ag.route.empty()) continue;
      }
      double budget = step;
      while (budget > 0.0 && !ag.route.empty()) {
        const Vec2 target = ag.route.front();
        const double d = distance(ag.pos, target);
        if (d <= budget) {
          ag.pos = target;
          budget -= d;
          ag.route.erase(ag.route.begin());
          if (ag.route.empty()) ag.pause = static_cast<int>(motion.below(static_cast<std::uint64_t>(spec.max_pause_frames + 1)));
        } else {
          ag.pos.x += (target.x - ag.pos.x) * budget / d;
          ag.pos.y += (target.y - ag.pos.y) * budget / d;
          budget = 0.0;
        }
      }
    }
  }

  for (auto& [cam, values] : emb_values) out.embeddings[cam] = EmbeddingTable(spec.embedding_dim, std::move(values));
  return out;
}

// ---------------------------------------------------------------------------
// Dataset files

inline std::string format_track_row(const TrackRow& r, bool with_global) {
  char buf[512];
  const Box h = r.head_box.value_or(Box{-1, -1, -1, -1});
  int n = std::snprintf(buf, sizeof buf, "%d,%d,%.6f,%.6f,%.6f,%.6f,%.6f,%d,%.6f,%.6f,%.6f,%.6f", r.frame, r.id,
                        r.body_box.left, r.body_box.top, r.body_box.width, r.body_box.height, r.confidence,
                        r.object_class, h.left, h.top, h.width, h.height);
  std::string s(buf, static_cast<std::size_t>(n));
  if (with_global) s += "," + std::to_string(r.global_id.value_or(r.id));
  return s;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
}

inline void write_track_file(const std::filesystem::path& path, const std::vector<TrackRow>& rows, bool with_global) {
  std::string text;
  for (const auto& r : rows) text += format_track_row(r, with_global) + "\n";
  write_text(path, text);
}

inline std::string camera_file(CameraId id, const std::string& ext) { return "cam_" + std::to_string(id) + ext; }

/// Layout: scenario.json, map.json, calibration.json, det/, emb/, gt/.
inline void write_dataset(const DatasetBundle& b, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_text(dir / "scenario.json", scenario_to_json(b.spec).dump(2) + "\n");
  write_text(dir / "map.json", map_to_json(b.map).dump(2) + "\n");
  write_text(dir / "calibration.json", calibration_to_json(b.cameras).dump(2) + "\n");
  for (const auto& [cam, rows] : b.detections) {
    write_track_file(dir / "det" / camera_file(cam, ".csv"), rows, false);
    write_text(dir / "emb" / camera_file(cam, ".mcfe"), serialize_embeddings_binary(b.embeddings.at(cam)));
  }
  for (const auto& [cam, rows] : b.ground_truth) write_track_file(dir / "gt" / camera_file(cam, ".csv"), rows, true);
}

}  // namespace mtmct
