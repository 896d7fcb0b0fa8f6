#include <gtest/gtest.h>

#include "mtmct/semantic_map.hpp"
#include "support/fixtures.hpp"

using namespace mtmct;

TEST(PolygonContains, InsideOutsideAndBoundary) {
  const std::vector<Vec2> sq{{0, 0}, {2, 0}, {2, 2}, {0, 2}};
  EXPECT_TRUE(polygon_contains(sq, {1, 1}));
  EXPECT_FALSE(polygon_contains(sq, {3, 1}));
  EXPECT_TRUE(polygon_contains(sq, {2, 1}));
  EXPECT_TRUE(polygon_contains(sq, {0, 0}));
}

TEST(LabelRegions, FourConnectivity) {
  // Diagonal neighbours are separate regions; blocked cells are 0.
  const std::vector<std::uint8_t> diag{1, 0, 0, 0, 1, 0, 0, 0, 1};
  EXPECT_EQ(label_regions(3, 3, diag), (std::vector<int>{1, 0, 0, 0, 2, 0, 0, 0, 3}));
  const std::vector<std::uint8_t> hook{1, 0, 0, 1, 0, 1, 1, 1, 1};
  EXPECT_EQ(label_regions(3, 3, hook), (std::vector<int>{1, 0, 0, 1, 0, 1, 1, 1, 1}));
}

TEST(BuildMap, CovisibilityAndRegions) {
  const RasterMap m = fixture::corridor_map();
  EXPECT_EQ(m.camera_ids, (std::vector<CameraId>{1, 2}));
  EXPECT_EQ(covisible_cameras({0, 0}, m), (std::vector<CameraId>{1}));
  EXPECT_EQ(covisible_cameras({3, 2}, m), (std::vector<CameraId>{1, 2}));
  EXPECT_EQ(covisible_cameras({7, 3}, m), (std::vector<CameraId>{2}));
  EXPECT_FALSE(m.walkable({4, 2}));
  EXPECT_EQ(m.at({4, 2}).connected_region, 0);
  EXPECT_EQ(m.at({0, 3}).connected_region, m.at({7, 3}).connected_region);
  EXPECT_TRUE(m.warnings.empty());
}

TEST(BuildMap, ValidatesInputs) {
  auto s = fixture::corridor_spec();
  s.walkable.pop_back();
  EXPECT_THROW(build_map(s), MapError);
  s = fixture::corridor_spec();
  s.walkable.assign(32, 0);
  EXPECT_THROW(build_map(s), MapError);
  s = fixture::corridor_spec();
  s.adjacency.push_back({1, 9, 1.0, 1.0, 1.0});
  EXPECT_THROW(build_map(s), MapError);
}

TEST(BuildMap, FovCellsOverridePolygon) {
  auto s = fixture::corridor_spec();
  s.fov_cells[2] = {{7, 0}};
  const RasterMap m = build_map(s);
  EXPECT_EQ(covisible_cameras({3, 2}, m), (std::vector<CameraId>{1}));
  EXPECT_TRUE(is_covisible(m, {7, 0}, 2));
}

TEST(BuildMap, WarnsOnCameraWithoutCells) {
  auto s = fixture::corridor_spec();
  s.cameras.push_back(fixture::camera(3, 50, 50, 60, 60));
  EXPECT_EQ(build_map(s).warnings.size(), 1u);
}

TEST(WorldToCell, FloorsAndRejectsOffMap) {
  const RasterMap m = fixture::corridor_map();
  EXPECT_EQ(world_to_cell({3.99, 0.0}, m), (CellIndex{3, 0}));
  EXPECT_THROW(world_to_cell({-0.01, 0.0}, m), OffMapError);
  EXPECT_THROW(world_to_cell({8.0, 1.0}, m), OffMapError);
}

TEST(FootPoint, HeadDrivenClassExtendsHeadBox) {
  Detection d;
  d.body_box = {0, 0, 10, 40};
  EXPECT_EQ(foot_point(d), (Vec2{5, 40}));
  d.object_class = kHeadDrivenClass;
  d.head_box = Box{2, 4, 6, 5};
  EXPECT_EQ(foot_point(d), (Vec2{5, 4 + 7 * 5}));
}

TEST(EncodeFrame, ProjectsAndCollectsRejects) {
  const RasterMap m = fixture::corridor_map();
  const CameraSet cams = fixture::corridor_spec().cameras;
  const std::vector<Detection> dets{fixture::detection_at(1, 0, 3.5, 2.5), fixture::detection_at(2, 0, 0.5, 0.5),
                                    fixture::detection_at(1, 0, 20, 1)};
  const auto enc = encode_frame(dets, m, cams);
  ASSERT_EQ(enc.results.size(), 2u);
  EXPECT_EQ(enc.results[0].cell, (CellIndex{3, 2}));
  EXPECT_EQ(enc.results[0].covisible, (std::vector<CameraId>{1, 2}));
  EXPECT_FALSE(enc.results[0].outside_fov);
  EXPECT_TRUE(enc.results[1].outside_fov);
  ASSERT_EQ(enc.rejects.size(), 1u);
  EXPECT_EQ(enc.rejects[0].source, 2u);
}

TEST(MapJson, RoundTripPreservesCells) {
  const RasterMap m = fixture::corridor_map();
  const auto doc = map_to_json(m);
  const RasterMap back = build_map(parse_map_spec(doc, fixture::corridor_spec().cameras));
  ASSERT_EQ(back.cells.size(), m.cells.size());
  for (std::size_t k = 0; k < m.cells.size(); ++k) {
    EXPECT_EQ(back.cells[k].walkable, m.cells[k].walkable);
    EXPECT_EQ(back.cells[k].covisible, m.cells[k].covisible);
  }
  EXPECT_EQ(back.adjacency.size(), 2u);
}

TEST(MapJson, WalkableEncodings) {
  const std::vector<std::uint8_t> mask{1, 1, 0, 0, 0, 1};
  EXPECT_EQ(parse_walkable(walkable_rle(mask), 6), mask);
  EXPECT_EQ(parse_walkable(nlohmann::json::array({1, 1, 0, 0, 0, 1}), 6), mask);
  EXPECT_THROW(parse_walkable(walkable_rle(mask), 7), ParseError);
  EXPECT_THROW(parse_walkable(nlohmann::json("x"), 6), ParseError);
}
