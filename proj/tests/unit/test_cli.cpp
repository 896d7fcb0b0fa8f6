// Drives the mtmct binary and checks exit codes and outputs.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

namespace fs = std::filesystem;

namespace {

const fs::path& work() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "mtmct_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(MTMCT_BIN) + " " + args + " >" + (work() / "stdout").string() + " 2>" +
                          (work() / "stderr").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void put(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("track --out x"), 2);
  EXPECT_EQ(run("synth --spec no-such-bench --out " + (work() / "x").string()), 2);
  EXPECT_NE(slurp(work() / "stderr").find("\"error\":\"UsageError\""), std::string::npos);
}

TEST(Cli, HelpExitsZero) { EXPECT_EQ(run("--help"), 0); }

TEST(Cli, MissingOrMalformedInputsExitThree) {
  EXPECT_EQ(run("track --config " + (work() / "absent.json").string() + " --out " + (work() / "o").string()), 3);
  put(work() / "broken.json", "{ not json");
  EXPECT_EQ(run("track --config " + (work() / "broken.json").string() + " --out " + (work() / "o").string()), 3);
  EXPECT_NE(slurp(work() / "stderr").find("ParseError"), std::string::npos);
  put(work() / "typo.json", R"({"datset": "x"})");
  EXPECT_EQ(run("track --config " + (work() / "typo.json").string() + " --out " + (work() / "o").string()), 2);
  put(work() / "nodata.json", R"({"dataset": "nowhere"})");
  EXPECT_EQ(run("track --config " + (work() / "nodata.json").string() + " --out " + (work() / "o").string()), 3);
  EXPECT_EQ(run("map build --spec " + (work() / "broken.json").string() + " --out " + (work() / "m.json").string()), 3);
}

TEST(Cli, SynthTrackEvalRoundTrip) {
  const fs::path data = work() / "data", out = work() / "out", rep = work() / "rep";
  ASSERT_EQ(run("synth --spec overlap-handover --seed 2 --zero-noise --out " + data.string()), 0);
  EXPECT_TRUE(fs::exists(data / "gt" / "cam_1.csv"));
  put(work() / "run.json", R"({"dataset": "data"})");
  ASSERT_EQ(run("track --config " + (work() / "run.json").string() + " --out " + out.string()), 0);
  EXPECT_TRUE(fs::exists(out / "manifest.json"));
  ASSERT_EQ(run("eval --gt " + (data / "gt").string() + " --pred " + out.string() + " --out " + rep.string()), 0);
  EXPECT_NE(slurp(work() / "stdout").find("OVERALL"), std::string::npos);
  EXPECT_TRUE(fs::exists(rep / "report.json"));
  // Camera sets that disagree are a runtime error.
  fs::remove(out / "cam_2.csv");
  EXPECT_EQ(run("eval --gt " + (data / "gt").string() + " --pred " + out.string() + " --out " + rep.string()), 4);
}

TEST(Cli, MapBuildFromSpec) {
  const fs::path data = work() / "mapdata";
  ASSERT_EQ(run("synth --spec gap-handover --out " + data.string()), 0);
  put(data / "map_spec.json",
      R"({"origin":[0,0],"cell_size":1.0,"width":4,"height":2,"walkable":[1,1,1,1,1,1,1,0],"calibration":"calibration.json"})");
  ASSERT_EQ(run("map build --spec " + (data / "map_spec.json").string() + " --out " + (work() / "map.json").string()), 0);
  EXPECT_NE(slurp(work() / "map.json").find("fov_cells"), std::string::npos);
}

TEST(Cli, AblateWritesTable) {
  const fs::path out = work() / "ablate";
  ASSERT_EQ(run("ablate --bench overlap-handover --seed 1 --out " + out.string()), 0);
  EXPECT_NE(slurp(out / "ablation.txt").find("IDF1"), std::string::npos);
  EXPECT_TRUE(fs::exists(out / "ablation.json"));
}
