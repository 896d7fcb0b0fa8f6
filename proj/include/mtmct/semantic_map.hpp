#pragma once

// Raster semantic map: per-cell co-visibility, walkability and connected
// region, and the frame encoder that turns detections into map positions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mtmct/errors.hpp"
#include "mtmct/geometry_io.hpp"

namespace mtmct {

struct CellIndex {
  int i = 0;
  int j = 0;

  friend bool operator==(const CellIndex&, const CellIndex&) = default;
  friend auto operator<=>(const CellIndex&, const CellIndex&) = default;
};

inline int chebyshev(const CellIndex& a, const CellIndex& b) { return std::max(std::abs(a.i - b.i), std::abs(a.j - b.j)); }

struct CellAttr {
  std::vector<CameraId> covisible;  // sorted, unique
  bool walkable = false;
  int connected_region = 0;  // 0 for non-walkable cells, 1.. for walkable components
};

struct AdjacencyEdge {
  CameraId from = 0;
  CameraId to = 0;
  double mean_transit_s = 0.0;
  double std_s = 1.0;
  double weight = 1.0;
};

/// Everything build_map needs. Polygons come from the calibration; an explicit
/// `fov_cells` entry overrides the polygon test for that camera.
struct MapSpec {
  Vec2 origin;
  double cell_size = 1.0;
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> walkable;  // width*height, index i + j*width
  CameraSet cameras;
  std::map<CameraId, std::vector<CellIndex>> fov_cells;
  std::vector<AdjacencyEdge> adjacency;
  double stay_prob = 0.0;
};

class RasterMap {
 public:
  Vec2 origin;
  double cell_size = 1.0;
  int width = 0;
  int height = 0;
  std::vector<CellAttr> cells;
  std::vector<CameraId> camera_ids;  // sorted
  std::vector<AdjacencyEdge> adjacency;
  double stay_prob = 0.0;
  std::vector<std::string> warnings;

  bool in_bounds(const CellIndex& c) const { return c.i >= 0 && c.j >= 0 && c.i < width && c.j < height; }
  std::size_t flat(const CellIndex& c) const {
    return static_cast<std::size_t>(c.i) + static_cast<std::size_t>(c.j) * static_cast<std::size_t>(width);
  }
  const CellAttr& at(const CellIndex& c) const {
    if (!in_bounds(c))
      throw OffMapError("cell (" + std::to_string(c.i) + "," + std::to_string(c.j) + ") outside the map");
    return cells[flat(c)];
  }
  bool walkable(const CellIndex& c) const { return in_bounds(c) && cells[flat(c)].walkable; }
  Vec2 cell_center(const CellIndex& c) const {
    return {origin.x + (c.i + 0.5) * cell_size, origin.y + (c.j + 0.5) * cell_size};
  }
  int camera_index(CameraId id) const {
    for (std::size_t k = 0; k < camera_ids.size(); ++k)
      if (camera_ids[k] == id) return static_cast<int>(k);
    throw ModelError("camera " + std::to_string(id) + " is not part of the map");
  }
};

/// Closed polygon test: points on an edge or vertex count as inside.
inline bool polygon_contains(std::span<const Vec2> poly, const Vec2& p) {
  const std::size_t n = poly.size();
  constexpr double kEdgeTol = 1e-12;
  for (std::size_t k = 0; k < n; ++k) {
    const Vec2& a = poly[k];
    const Vec2& b = poly[(k + 1) % n];
    const double cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    if (std::abs(cross) <= kEdgeTol * std::max(1.0, len) && p.x >= std::min(a.x, b.x) - kEdgeTol &&
        p.x <= std::max(a.x, b.x) + kEdgeTol && p.y >= std::min(a.y, b.y) - kEdgeTol &&
        p.y <= std::max(a.y, b.y) + kEdgeTol)
      return true;
  }
  bool inside = false;
  for (std::size_t k = 0, prev = n - 1; k < n; prev = k++) {
    const Vec2& a = poly[k];
    const Vec2& b = poly[prev];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

/// 4-connected component labels over walkable cells, numbered 1.. in scan order.
inline std::vector<int> label_regions(int width, int height, std::span<const std::uint8_t> walkable) {
  std::vector<int> label(walkable.size(), 0);
  int next = 0;
  std::deque<CellIndex> queue;
  for (int j = 0; j < height; ++j) {
    for (int i = 0; i < width; ++i) {
      const std::size_t idx = static_cast<std::size_t>(i + j * width);
      if (!walkable[idx] || label[idx] != 0) continue;
      label[idx] = ++next;
      queue.push_back({i, j});
      while (!queue.empty()) {
        const CellIndex c = queue.front();
        queue.pop_front();
        constexpr int kDi[4] = {1, -1, 0, 0};
        constexpr int kDj[4] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const int ni = c.i + kDi[k];
          const int nj = c.j + kDj[k];
          if (ni < 0 || nj < 0 || ni >= width || nj >= height) continue;
          const std::size_t nidx = static_cast<std::size_t>(ni + nj * width);
          if (walkable[nidx] && label[nidx] == 0) {
            label[nidx] = next;
            queue.push_back({ni, nj});
          }
        }
      }
    }
  }
  return label;
}

inline RasterMap build_map(const MapSpec& spec) {
  if (!(spec.cell_size > 0.0)) throw MapError("cell_size must be positive");
  if (spec.width <= 0 || spec.height <= 0) throw MapError("grid must have positive width and height");
  const std::size_t n = static_cast<std::size_t>(spec.width) * static_cast<std::size_t>(spec.height);
  if (spec.walkable.size() != n) throw MapError("walkable mask size does not match width*height");
  if (std::none_of(spec.walkable.begin(), spec.walkable.end(), [](std::uint8_t w) { return w != 0; }))
    throw MapError("walkable mask is empty");

  RasterMap map;
  map.origin = spec.origin;
  map.cell_size = spec.cell_size;
  map.width = spec.width;
  map.height = spec.height;
  map.adjacency = spec.adjacency;
  map.stay_prob = spec.stay_prob;
  map.cells.resize(n);
  for (const auto& cam : spec.cameras) map.camera_ids.push_back(cam.camera_id);
  std::sort(map.camera_ids.begin(), map.camera_ids.end());

  const auto labels = label_regions(spec.width, spec.height, spec.walkable);
  for (std::size_t k = 0; k < n; ++k) {
    map.cells[k].walkable = spec.walkable[k] != 0;
    map.cells[k].connected_region = labels[k];
  }

  for (const auto& cam : spec.cameras) {
    std::size_t covered = 0;
    if (auto it = spec.fov_cells.find(cam.camera_id); it != spec.fov_cells.end()) {
      for (const auto& c : it->second) {
        if (!map.in_bounds(c)) throw MapError("fov_cells entry outside the grid for camera " + std::to_string(cam.camera_id));
        map.cells[map.flat(c)].covisible.push_back(cam.camera_id);
        ++covered;
      }
    } else {
      for (int j = 0; j < spec.height; ++j)
        for (int i = 0; i < spec.width; ++i)
          if (polygon_contains(cam.fov_polygon, map.cell_center({i, j}))) {
            map.cells[map.flat({i, j})].covisible.push_back(cam.camera_id);
            ++covered;
          }
    }
    if (covered == 0) map.warnings.push_back("camera " + std::to_string(cam.camera_id) + " covers no grid cell");
  }
  for (auto& cell : map.cells) {
    std::sort(cell.covisible.begin(), cell.covisible.end());
    cell.covisible.erase(std::unique(cell.covisible.begin(), cell.covisible.end()), cell.covisible.end());
  }
  for (const auto& e : map.adjacency) {
    if (!std::binary_search(map.camera_ids.begin(), map.camera_ids.end(), e.from) ||
        !std::binary_search(map.camera_ids.begin(), map.camera_ids.end(), e.to))
      throw MapError("adjacency references an uncalibrated camera");
  }
  return map;
}

inline CellIndex world_to_cell(const Vec2& p, const RasterMap& map) {
  const CellIndex c{static_cast<int>(std::floor((p.x - map.origin.x) / map.cell_size)),
                    static_cast<int>(std::floor((p.y - map.origin.y) / map.cell_size))};
  if (!map.in_bounds(c)) {
    std::ostringstream os;
    os << "point (" << p.x << "," << p.y << ") is off the map";
    throw OffMapError(os.str());
  }
  return c;
}

inline const std::vector<CameraId>& covisible_cameras(const CellIndex& cell, const RasterMap& map) {
  return map.at(cell).covisible;
}

inline bool is_covisible(const RasterMap& map, const CellIndex& cell, CameraId cam) {
  const auto& cv = map.at(cell).covisible;
  return std::binary_search(cv.begin(), cv.end(), cam);
}

inline constexpr int kHeadDrivenClass = 2;

/// Ground contact in image coordinates: bottom-center of the body box, or the
/// head box extended by `body_to_head` head heights when the detector marks the
/// body box as unreliable (class 2).
inline Vec2 foot_point(const Detection& det, double body_to_head = 7.0) {
  if (det.object_class == kHeadDrivenClass && det.head_box) {
    const Box& h = *det.head_box;
    return {h.left + h.width / 2.0, h.top + body_to_head * h.height};
  }
  return det.body_box.foot();
}

struct FramePosResult {
  Detection detection;
  std::size_t source = 0;  // index into the encoded detection span
  Vec2 ground;
  CellIndex cell;
  std::vector<CameraId> covisible;
  int embedding_index = -1;
  bool outside_fov = false;  // the cell's co-visibility set lacks the observing camera
};

struct RejectedDetection {
  std::size_t source = 0;
  std::string reason;
};

struct FrameEncoding {
  std::vector<FramePosResult> results;
  std::vector<RejectedDetection> rejects;
};

inline FrameEncoding encode_frame(std::span<const Detection> detections, const RasterMap& map, const CameraSet& cams,
                                  double body_to_head = 7.0) {
  FrameEncoding out;
  for (std::size_t k = 0; k < detections.size(); ++k) {
    const Detection& d = detections[k];
    try {
      const Vec2 g = project_to_ground(foot_point(d, body_to_head), find_camera(cams, d.camera_id));
      const CellIndex c = world_to_cell(g, map);
      FramePosResult r;
      r.detection = d;
      r.source = k;
      r.ground = g;
      r.cell = c;
      r.covisible = map.at(c).covisible;
      r.embedding_index = d.embedding_index;
      r.outside_fov = !std::binary_search(r.covisible.begin(), r.covisible.end(), d.camera_id);
      out.results.push_back(std::move(r));
    } catch (const Error& e) {
      out.rejects.push_back({k, e.what()});
    }
  }
  return out;
}

// Map file I/O. The walkable mask is either a flat 0/1 array or
// {"rle": [[value, count], ...]}.

inline std::vector<std::uint8_t> parse_walkable(const nlohmann::json& j, std::size_t expected) {
  std::vector<std::uint8_t> mask;
  if (j.is_array()) {
    for (const auto& v : j) mask.push_back(v.get<int>() != 0 ? 1 : 0);
  } else if (j.is_object() && j.contains("rle")) {
    for (const auto& run : j.at("rle")) {
      const int value = run.at(0).get<int>();
      const long count = run.at(1).get<long>();
      if (count < 0) throw ParseError("negative RLE run length");
      mask.insert(mask.end(), static_cast<std::size_t>(count), value != 0 ? 1 : 0);
    }
  } else {
    throw ParseError("walkable must be a 0/1 array or an {\"rle\": ...} object");
  }
  if (mask.size() != expected) throw ParseError("walkable mask has " + std::to_string(mask.size()) + " cells, expected " + std::to_string(expected));
  return mask;
}

inline nlohmann::json walkable_rle(std::span<const std::uint8_t> mask) {
  nlohmann::json runs = nlohmann::json::array();
  std::size_t k = 0;
  while (k < mask.size()) {
    std::size_t end = k;
    while (end < mask.size() && mask[end] == mask[k]) ++end;
    runs.push_back({static_cast<int>(mask[k]), end - k});
    k = end;
  }
  return {{"rle", runs}};
}

/// Parses a map document; polygons for co-visibility come from `cameras`.
inline MapSpec parse_map_spec(const nlohmann::json& doc, CameraSet cameras, const std::string& origin = "map") {
  MapSpec spec;
  try {
    spec.origin = {doc.at("origin").at(0).get<double>(), doc.at("origin").at(1).get<double>()};
    spec.cell_size = doc.at("cell_size").get<double>();
    spec.width = doc.at("width").get<int>();
    spec.height = doc.at("height").get<int>();
    if (spec.width <= 0 || spec.height <= 0) throw ParseError(origin + ": width and height must be positive");
    spec.walkable = parse_walkable(doc.at("walkable"),
                                   static_cast<std::size_t>(spec.width) * static_cast<std::size_t>(spec.height));
    if (doc.contains("fov_cells")) {
      for (const auto& [key, cells] : doc.at("fov_cells").items()) {
        std::vector<CellIndex> list;
        for (const auto& c : cells) list.push_back({c.at(0).get<int>(), c.at(1).get<int>()});
        spec.fov_cells[std::stoi(key)] = std::move(list);
      }
    }
    if (doc.contains("adjacency")) {
      for (const auto& e : doc.at("adjacency")) {
        AdjacencyEdge edge;
        edge.from = e.at("from").get<int>();
        edge.to = e.at("to").get<int>();
        edge.mean_transit_s = e.value("mean_transit_s", 0.0);
        edge.std_s = e.value("std_s", 1.0);
        edge.weight = e.value("weight", 1.0);
        spec.adjacency.push_back(edge);
      }
    }
    spec.stay_prob = doc.value("stay_prob", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(origin + ": " + e.what());
  } catch (const ParseError& e) {
    throw ParseError(origin + ": " + e.what());
  }
  spec.cameras = std::move(cameras);
  return spec;
}

inline nlohmann::json map_to_json(const RasterMap& map) {
  nlohmann::json doc;
  doc["origin"] = {map.origin.x, map.origin.y};
  doc["cell_size"] = map.cell_size;
  doc["width"] = map.width;
  doc["height"] = map.height;
  std::vector<std::uint8_t> mask;
  mask.reserve(map.cells.size());
  for (const auto& c : map.cells) mask.push_back(c.walkable ? 1 : 0);
  doc["walkable"] = walkable_rle(mask);
  nlohmann::json fov = nlohmann::json::object();
  for (CameraId cam : map.camera_ids) {
    nlohmann::json list = nlohmann::json::array();
    for (int j = 0; j < map.height; ++j)
      for (int i = 0; i < map.width; ++i)
        if (is_covisible(map, {i, j}, cam)) list.push_back({i, j});
    fov[std::to_string(cam)] = list;
  }
  doc["fov_cells"] = fov;
  nlohmann::json adj = nlohmann::json::array();
  for (const auto& e : map.adjacency)
    adj.push_back({{"from", e.from}, {"to", e.to}, {"mean_transit_s", e.mean_transit_s}, {"std_s", e.std_s}, {"weight", e.weight}});
  doc["adjacency"] = adj;
  doc["stay_prob"] = map.stay_prob;
  return doc;
}

inline RasterMap load_map(const std::string& path, const CameraSet& cameras) {
  return build_map(parse_map_spec(detail::parse_json_text(detail::read_file(path), path), cameras, path));
}

}  // namespace mtmct
