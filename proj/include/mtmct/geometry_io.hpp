#pragma once

// Camera calibrations, detection files and embedding tables, plus the
// image -> ground-plane projection every later stage builds on.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mtmct/errors.hpp"

namespace mtmct {

using CameraId = int;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline double distance(const Vec2& a, const Vec2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// Axis-aligned pixel box, MOT convention (left, top, width, height).
struct Box {
  double left = 0.0;
  double top = 0.0;
  double width = 0.0;
  double height = 0.0;

  double right() const { return left + width; }
  double bottom() const { return top + height; }
  double area() const { return width * height; }
  Vec2 foot() const { return {left + width / 2.0, top + height}; }

  friend bool operator==(const Box&, const Box&) = default;
};

inline double iou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a.right(), b.right()) - std::max(a.left, b.left));
  const double iy = std::max(0.0, std::min(a.bottom(), b.bottom()) - std::max(a.top, b.top));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

struct CameraCalibration {
  CameraId camera_id = 0;
  Eigen::Matrix3d homography = Eigen::Matrix3d::Identity();  // image px -> ground m
  std::vector<Vec2> fov_polygon;
};

using CameraSet = std::vector<CameraCalibration>;

inline const CameraCalibration& find_camera(const CameraSet& cams, CameraId id) {
  for (const auto& c : cams)
    if (c.camera_id == id) return c;
  throw CalibrationError("unknown camera " + std::to_string(id));
}

/// Dehomogenized H * (u, v, 1).
inline Vec2 apply_homography(const Eigen::Matrix3d& h, const Vec2& p) {
  const Eigen::Vector3d r = h * Eigen::Vector3d(p.x, p.y, 1.0);
  if (std::abs(r.z()) < 1e-9) {
    std::ostringstream os;
    os << "point (" << p.x << "," << p.y << ") maps to the horizon (w=" << r.z() << ")";
    throw ProjectionError(os.str());
  }
  return {r.x() / r.z(), r.y() / r.z()};
}

inline Vec2 project_to_ground(const Vec2& image_point, const CameraCalibration& calib) {
  return apply_homography(calib.homography, image_point);
}

inline Vec2 project_to_image(const Vec2& ground_point, const CameraCalibration& calib) {
  return apply_homography(calib.homography.inverse(), ground_point);
}

/// Builds a calibration, checking the invariants the loader enforces.
inline CameraCalibration make_calibration(CameraId id, const Eigen::Matrix3d& h, std::vector<Vec2> fov) {
  if (!(std::abs(h.determinant()) > 1e-12))
    throw CalibrationError("camera " + std::to_string(id) + " has a singular homography");
  if (fov.size() < 3)
    throw CalibrationError("camera " + std::to_string(id) + " fov polygon needs >= 3 vertices");
  return CameraCalibration{id, h, std::move(fov)};
}

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline nlohmann::json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw ParseError(origin + ":" + std::to_string(line) + ": " + e.what());
  }
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double to_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    while (used < s.size() && std::isspace(static_cast<unsigned char>(s[used]))) ++used;
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(where + ": not a number: '" + s + "'");
  }
}

inline bool skip_line(const std::string& line) {
  const auto pos = line.find_first_not_of(" \t\r");
  return pos == std::string::npos || line[pos] == '#';
}

}  // namespace detail

inline CameraSet parse_calibration(const nlohmann::json& doc, const std::string& origin = "calibration") {
  CameraSet cams;
  try {
    for (const auto& jc : doc.at("cameras")) {
      const CameraId id = jc.at("id").get<int>();
      for (const auto& existing : cams)
        if (existing.camera_id == id)
          throw CalibrationError("duplicate camera_id " + std::to_string(id) + " in " + origin);
      Eigen::Matrix3d h;
      const auto& jh = jc.at("H");
      if (jh.size() != 3) throw ParseError(origin + ": H must be 3x3");
      for (int r = 0; r < 3; ++r) {
        if (jh[r].size() != 3) throw ParseError(origin + ": H must be 3x3");
        for (int c = 0; c < 3; ++c) h(r, c) = jh[r][c].get<double>();
      }
      std::vector<Vec2> fov;
      for (const auto& v : jc.at("fov")) fov.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
      cams.push_back(make_calibration(id, h, std::move(fov)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(origin + ": " + e.what());
  }
  return cams;
}

inline CameraSet load_calibration(const std::string& path) {
  return parse_calibration(detail::parse_json_text(detail::read_file(path), path), path);
}

inline nlohmann::json calibration_to_json(const CameraSet& cams) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : cams) {
    nlohmann::json h = nlohmann::json::array();
    for (int r = 0; r < 3; ++r) h.push_back({c.homography(r, 0), c.homography(r, 1), c.homography(r, 2)});
    nlohmann::json fov = nlohmann::json::array();
    for (const auto& v : c.fov_polygon) fov.push_back({v.x, v.y});
    arr.push_back({{"id", c.camera_id}, {"H", h}, {"fov", fov}});
  }
  return {{"cameras", arr}};
}

struct Detection {
  CameraId camera_id = 0;
  int frame_index = 0;
  double timestamp = 0.0;
  Box body_box;
  std::optional<Box> head_box;
  double confidence = 1.0;
  int object_class = 1;
  int embedding_index = -1;
};

/// One row of a MOT-style track file. `id` is -1 on detector input; result and
/// ground-truth files fill it and may carry a trailing `global_id` column.
struct TrackRow {
  int frame = 0;
  int id = -1;
  Box body_box;
  double confidence = 1.0;
  int object_class = 1;
  std::optional<Box> head_box;
  std::optional<int> global_id;
};

inline TrackRow parse_track_row(const std::string& line, const std::string& where) {
  const auto f = detail::split_csv(line);
  if (f.size() != 12 && f.size() != 13)
    throw ParseError(where + ": expected 12 or 13 columns, got " + std::to_string(f.size()));
  std::array<double, 13> v{};
  for (std::size_t i = 0; i < f.size(); ++i) v[i] = detail::to_double(f[i], where);
  TrackRow row;
  row.frame = static_cast<int>(v[0]);
  row.id = static_cast<int>(v[1]);
  row.body_box = {v[2], v[3], v[4], v[5]};
  row.confidence = v[6];
  row.object_class = static_cast<int>(v[7]);
  if (row.frame < 0) throw ParseError(where + ": negative frame index");
  if (!(row.body_box.width > 0.0 && row.body_box.height > 0.0))
    throw ParseError(where + ": body box width and height must be positive");
  if (!(row.confidence >= 0.0 && row.confidence <= 1.0)) throw ParseError(where + ": confidence outside [0,1]");
  const bool head_absent = v[8] == -1.0 && v[9] == -1.0 && v[10] == -1.0 && v[11] == -1.0;
  if (!head_absent) {
    row.head_box = Box{v[8], v[9], v[10], v[11]};
    if (!(row.head_box->width > 0.0 && row.head_box->height > 0.0))
      throw ParseError(where + ": head box width and height must be positive");
  }
  if (f.size() == 13) row.global_id = static_cast<int>(v[12]);
  return row;
}

inline std::vector<TrackRow> load_track_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  std::vector<TrackRow> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::skip_line(line)) continue;
    rows.push_back(parse_track_row(line, path + ":" + std::to_string(lineno)));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const TrackRow& a, const TrackRow& b) { return a.frame < b.frame; });
  return rows;
}

/// Parses detector output for one camera. Row k links to embedding row k, so
/// the embedding index is taken from file order before re-sorting by frame.
inline std::vector<Detection> parse_detections(std::istream& in, CameraId camera_id, double fps,
                                               const std::string& origin = "detections") {
  if (!(fps > 0.0)) throw UsageError("fps must be positive");
  std::vector<Detection> dets;
  std::string line;
  int lineno = 0;
  int row_index = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::skip_line(line)) continue;
    const TrackRow row = parse_track_row(line, origin + ":" + std::to_string(lineno));
    Detection d;
    d.camera_id = camera_id;
    d.frame_index = row.frame;
    d.timestamp = row.frame / fps;
    d.body_box = row.body_box;
    d.head_box = row.head_box;
    d.confidence = row.confidence;
    d.object_class = row.object_class;
    d.embedding_index = row_index++;
    dets.push_back(d);
  }
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) { return a.frame_index < b.frame_index; });
  return dets;
}

inline std::vector<Detection> load_detections(const std::string& path, CameraId camera_id, double fps) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  return parse_detections(in, camera_id, fps, path);
}

/// Row-major table of appearance vectors; rows are never zero-norm.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(int dim, std::vector<float> values) : dim_(dim), values_(std::move(values)) {
    if (dim_ <= 0) throw FormatError("embedding dim must be positive");
    if (values_.size() % static_cast<std::size_t>(dim_) != 0)
      throw FormatError("embedding payload is not a multiple of dim");
    for (std::size_t r = 0; r < size(); ++r) {
      double norm2 = 0.0;
      for (float v : row(r)) norm2 += static_cast<double>(v) * v;
      if (!(norm2 > 0.0) || !std::isfinite(norm2))
        throw FormatError("embedding row " + std::to_string(r) + " has zero or non-finite norm");
    }
  }

  int dim() const { return dim_; }
  std::size_t size() const { return dim_ > 0 ? values_.size() / static_cast<std::size_t>(dim_) : 0; }
  std::span<const float> row(std::size_t i) const {
    return {values_.data() + i * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }
  const std::vector<float>& values() const { return values_; }

 private:
  int dim_ = 0;
  std::vector<float> values_;
};

inline constexpr char kEmbeddingMagic[4] = {'M', 'C', 'F', 'E'};

inline EmbeddingTable parse_embeddings_binary(const std::string& bytes, const std::string& origin = "embeddings") {
  auto u32_at = [&](std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + i])) << (8 * i);
    return v;
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kEmbeddingMagic, 4) != 0)
    throw FormatError(origin + ": magic mismatch (expected MCFE)");
  const std::uint64_t count = u32_at(4);
  const std::uint64_t dim = u32_at(8);
  if (dim == 0) throw FormatError(origin + ": dim must be positive");
  if ((bytes.size() - 12) != count * dim * 4)
    throw FormatError(origin + ": payload holds " + std::to_string((bytes.size() - 12) / 4) + " floats, header says " +
                      std::to_string(count) + "x" + std::to_string(dim));
  std::vector<float> values(count * dim);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::uint32_t raw = u32_at(12 + 4 * i);
    std::memcpy(&values[i], &raw, 4);
  }
  try {
    return EmbeddingTable(static_cast<int>(dim), std::move(values));
  } catch (const FormatError& e) {
    throw FormatError(origin + ": " + e.what());
  }
}

inline std::string serialize_embeddings_binary(const EmbeddingTable& table) {
  std::string out(kEmbeddingMagic, 4);
  auto put_u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  };
  put_u32(static_cast<std::uint32_t>(table.size()));
  put_u32(static_cast<std::uint32_t>(table.dim()));
  for (float f : table.values()) {
    std::uint32_t raw = 0;
    std::memcpy(&raw, &f, 4);
    put_u32(raw);
  }
  return out;
}

inline EmbeddingTable parse_embeddings_csv(std::istream& in, const std::string& origin = "embeddings") {
  std::map<long, std::vector<float>> rows;
  std::string line;
  int lineno = 0;
  int dim = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::skip_line(line)) continue;
    const auto f = detail::split_csv(line);
    const std::string where = origin + ":" + std::to_string(lineno);
    if (f.size() < 2) throw FormatError(where + ": need index and at least one value");
    if (dim < 0) dim = static_cast<int>(f.size()) - 1;
    if (static_cast<int>(f.size()) - 1 != dim) throw FormatError(where + ": inconsistent vector length");
    const long idx = static_cast<long>(detail::to_double(f[0], where));
    std::vector<float> v;
    for (std::size_t i = 1; i < f.size(); ++i) v.push_back(static_cast<float>(detail::to_double(f[i], where)));
    if (!rows.emplace(idx, std::move(v)).second) throw FormatError(where + ": duplicate index");
  }
  if (dim < 0) return {};
  std::vector<float> values;
  long expect = 0;
  for (auto& [idx, v] : rows) {
    if (idx != expect++) throw FormatError(origin + ": indices must be contiguous from 0");
    values.insert(values.end(), v.begin(), v.end());
  }
  try {
    return EmbeddingTable(dim, std::move(values));
  } catch (const FormatError& e) {
    throw FormatError(origin + ": " + e.what());
  }
}

/// Binary MCFE unless the path ends in ".csv".
inline EmbeddingTable load_embeddings(const std::string& path) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv") {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path);
    return parse_embeddings_csv(in, path);
  }
  std::string bytes;
  try {
    bytes = detail::read_file(path);
  } catch (const FormatError&) {
    throw FormatError("embeddings file missing: " + path);
  }
  return parse_embeddings_binary(bytes, path);
}

}  // namespace mtmct
