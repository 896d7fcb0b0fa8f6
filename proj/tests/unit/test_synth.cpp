#include <filesystem>

#include <gtest/gtest.h>

#include "mtmct/pipeline.hpp"
#include "mtmct/synth.hpp"

using namespace mtmct;
namespace fs = std::filesystem;

namespace {

ScenarioSpec small(std::uint64_t seed = 3) {
  ScenarioSpec s = find_benchmark("overlap-handover");
  s.agents = 3;
  s.duration_frames = 120;
  s.seed = seed;
  return s;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mtmct_unit_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Benchmarks, NamedScenariosExistAndValidate) {
  for (const char* name : {"single-cam-occlusion", "overlap-handover", "gap-handover", "zigzag-5cam"}) {
    const ScenarioSpec s = find_benchmark(name);
    EXPECT_EQ(s.name, name);
    EXPECT_NO_THROW(validate(s));
  }
  EXPECT_THROW(find_benchmark("nope"), UsageError);
}

TEST(ScenarioJson, RoundTrip) {
  ScenarioSpec s = small();
  s.noise.occlusions.push_back({1, 5, 9});
  const ScenarioSpec back = scenario_from_json(scenario_to_json(s));
  EXPECT_EQ(scenario_to_json(back), scenario_to_json(s));
  EXPECT_THROW(scenario_from_json(nlohmann::json::object()), SpecError);
}

TEST(ScenarioJson, ValidationRejectsBadSpecs) {
  ScenarioSpec s = small();
  s.cameras.clear();
  EXPECT_THROW(validate(s), SpecError);
  s = small();
  s.noise.miss_rate = 1.0;
  EXPECT_THROW(validate(s), SpecError);
  s = small();
  s.walkable_rects = {{100, 100, 101, 101}};
  EXPECT_THROW(generate_scenario(s), SpecError);
}

TEST(Generate, SameSeedSameDataDifferentSeedDiffers) {
  const auto a = generate_scenario(small(3));
  const auto b = generate_scenario(small(3));
  const auto c = generate_scenario(small(4));
  for (const auto& [cam, rows] : a.detections) {
    ASSERT_EQ(rows.size(), b.detections.at(cam).size());
    for (std::size_t k = 0; k < rows.size(); ++k)
      EXPECT_EQ(format_track_row(rows[k], false), format_track_row(b.detections.at(cam)[k], false));
    EXPECT_EQ(a.embeddings.at(cam).values(), b.embeddings.at(cam).values());
  }
  bool differs = false;
  for (const auto& [cam, rows] : a.detections)
    differs = differs || rows.size() != c.detections.at(cam).size() ||
              (!rows.empty() && format_track_row(rows[0], false) != format_track_row(c.detections.at(cam)[0], false));
  EXPECT_TRUE(differs);
}

TEST(Generate, ZeroNoiseDetectionsMirrorGroundTruth) {
  const auto b = generate_scenario(zero_noise(small()));
  std::size_t total = 0;
  for (const auto& [cam, gt] : b.ground_truth) {
    const auto& det = b.detections.at(cam);
    ASSERT_EQ(det.size(), gt.size());
    ASSERT_EQ(b.embeddings.at(cam).size(), det.size());
    for (std::size_t k = 0; k < det.size(); ++k) {
      EXPECT_EQ(det[k].frame, gt[k].frame);
      EXPECT_EQ(det[k].body_box, gt[k].body_box);
      EXPECT_EQ(det[k].id, -1);
      EXPECT_TRUE(gt[k].global_id.has_value());
    }
    total += gt.size();
  }
  EXPECT_GT(total, 0u);
}

TEST(Generate, GroundTruthFeetProjectIntoObservingCamera) {
  const auto b = generate_scenario(zero_noise(small()));
  for (const auto& [cam, gt] : b.ground_truth)
    for (const auto& r : gt) {
      const Vec2 g = project_to_ground(r.body_box.foot(), find_camera(b.cameras, cam));
      EXPECT_TRUE(is_covisible(b.map, world_to_cell(g, b.map), cam));
    }
}

TEST(Dataset, WrittenFilesLoadBackIdentically) {
  const auto bundle = generate_scenario(small());
  const fs::path dir = scratch("dataset");
  write_dataset(bundle, dir);
  for (const char* f : {"scenario.json", "map.json", "calibration.json"}) EXPECT_TRUE(fs::exists(dir / f));
  RunConfig cfg;
  cfg.dataset = dir.string();
  const Dataset disk = load_dataset(cfg);
  const Dataset mem = dataset_from_bundle(bundle);
  EXPECT_DOUBLE_EQ(disk.fps, mem.fps);
  for (const auto& [cam, dets] : mem.detections) {
    const auto& other = disk.detections.at(cam);
    ASSERT_EQ(other.size(), dets.size());
    for (std::size_t k = 0; k < dets.size(); ++k) {
      EXPECT_EQ(other[k].body_box, dets[k].body_box);
      EXPECT_EQ(other[k].embedding_index, dets[k].embedding_index);
    }
    EXPECT_EQ(disk.embeddings.at(cam)->values(), mem.embeddings.at(cam)->values());
  }
  fs::remove_all(dir);
}
