#pragma once

// Small hand-built worlds shared by the unit suites.

#include <vector>

#include "mtmct/geometry_io.hpp"
#include "mtmct/semantic_map.hpp"

namespace fixture {

/// Identity homography camera with a square fov polygon in ground metres.
inline mtmct::CameraCalibration camera(mtmct::CameraId id, double x0, double y0, double x1, double y1) {
  return mtmct::make_calibration(id, Eigen::Matrix3d::Identity(), {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}});
}

/// 1 m cells, 8 x 4 grid. Column 4 is a wall except on row 0, so the floor is
/// one region. Camera 1 sees x in [0,5], camera 2 sees x in [3,8]; cells with
/// centre x 3.5 and 4.5 are co-visible.
inline mtmct::MapSpec corridor_spec() {
  mtmct::MapSpec s;
  s.cell_size = 1.0;
  s.width = 8;
  s.height = 4;
  s.walkable.assign(32, 1);
  for (int j = 1; j < 4; ++j) s.walkable[static_cast<std::size_t>(4 + j * 8)] = 0;
  s.cameras = {camera(1, 0, 0, 5, 4), camera(2, 3, 0, 8, 4)};
  s.adjacency = {{1, 2, 3.0, 1.0, 1.0}, {2, 1, 3.0, 1.0, 1.0}};
  return s;
}

inline mtmct::RasterMap corridor_map() { return mtmct::build_map(corridor_spec()); }

inline mtmct::Detection detection_at(mtmct::CameraId cam, int frame, double x, double y) {
  mtmct::Detection d;
  d.camera_id = cam;
  d.frame_index = frame;
  d.timestamp = frame / 10.0;
  // With an identity homography the foot point is the ground point.
  d.body_box = {x - 0.1, y - 0.5, 0.2, 0.5};
  return d;
}

}  // namespace fixture
