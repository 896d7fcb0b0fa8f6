// mtmct command-line front end.
//
// Exit codes: 0 ok, 2 usage, 3 parse/format, 4 runtime.

#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mtmct/errors.hpp"
#include "mtmct/metrics.hpp"
#include "mtmct/pipeline.hpp"
#include "mtmct/semantic_map.hpp"
#include "mtmct/synth.hpp"

namespace fs = std::filesystem;
using namespace mtmct;

namespace {

void report_error(const std::string& kind, const std::string& message) {
  std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << "\n";
}

ScenarioSpec resolve_spec(const std::string& name_or_file) {
  if (fs::exists(name_or_file) && fs::is_regular_file(name_or_file))
    return scenario_from_json(detail::parse_json_text(detail::read_file(name_or_file), name_or_file));
  return find_benchmark(name_or_file);
}

/// Map fields as in map.json plus either "calibration" (path) or inline "cameras".
RasterMap build_map_from_spec(const std::string& path) {
  const auto doc = detail::parse_json_text(detail::read_file(path), path);
  CameraSet cams;
  if (doc.contains("calibration")) {
    fs::path calib = doc.at("calibration").get<std::string>();
    if (calib.is_relative()) calib = fs::path(path).parent_path() / calib;
    cams = load_calibration(calib.string());
  } else if (doc.contains("cameras")) {
    cams = parse_calibration(doc, path);
  }
  return build_map(parse_map_spec(doc, cams, path));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-target multi-camera tracking engine"};
  app.require_subcommand(1);

  std::string config, out, gt, pred, spec, bench;
  std::uint64_t seed = 1;
  bool clean = false;

  auto* track = app.add_subcommand("track", "Run the tracker on a dataset");
  track->add_option("--config", config, "Run configuration (JSON)")->required();
  track->add_option("--out", out, "Output directory")->required();

  auto* eval = app.add_subcommand("eval", "Score predictions against ground truth");
  eval->add_option("--gt", gt, "Ground-truth directory (cam_<id>.csv)")->required();
  eval->add_option("--pred", pred, "Prediction directory (cam_<id>.csv)")->required();
  eval->add_option("--out", out, "Report directory")->required();

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--spec", spec, "Benchmark name or scenario JSON file")->required();
  synth->add_option("--seed", seed, "Random seed");
  synth->add_option("--out", out, "Dataset directory")->required();
  synth->add_flag("--zero-noise", clean, "Drop every noise source");

  auto* map = app.add_subcommand("map", "Raster map tools");
  map->require_subcommand(1);
  auto* build = map->add_subcommand("build", "Build a raster semantic map");
  build->add_option("--spec", spec, "Map spec (JSON)")->required();
  build->add_option("--out", out, "Output map file")->required();

  auto* ablate = app.add_subcommand("ablate", "Run the four stage combinations on a benchmark");
  ablate->add_option("--bench", bench, "Benchmark name")->required();
  ablate->add_option("--seed", seed, "Random seed");
  ablate->add_option("--out", out, "Report directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*track) {
      const RunConfig cfg = load_config(config);
      const PipelineResult res = run_track(cfg, out);
      std::cout << "tracked " << res.identities << " identities over " << res.tracklets << " tracklets -> " << out << "\n";
    } else if (*eval) {
      const EvalReport rep = run_eval(gt, pred, out);
      std::cout << report_to_table(rep);
    } else if (*synth) {
      ScenarioSpec s = resolve_spec(spec);
      if (synth->count("--seed")) s.seed = seed;
      if (clean) s = zero_noise(s);
      write_dataset(generate_scenario(s), out);
      std::cout << "wrote " << s.name << " (seed " << s.seed << ") -> " << out << "\n";
    } else if (*build) {
      const RasterMap m = build_map_from_spec(spec);
      for (const auto& w : m.warnings) std::cerr << "warning: " << w << "\n";
      write_text(out, map_to_json(m).dump(2) + "\n");
    } else if (*ablate) {
      const auto rows = run_ablation(bench, seed);
      write_text(fs::path(out) / "ablation.json", ablation_to_json(rows).dump(2) + "\n");
      const std::string table = ablation_to_table(rows);
      write_text(fs::path(out) / "ablation.txt", table);
      std::cout << table;
    }
  } catch (const Error& e) {
    report_error(e.name(), e.what());
    return e.exit_code();
  } catch (const nlohmann::json::exception& e) {
    report_error("ParseError", e.what());
    return 3;
  } catch (const std::exception& e) {
    report_error("RuntimeError", e.what());
    return 4;
  }
  return 0;
}
