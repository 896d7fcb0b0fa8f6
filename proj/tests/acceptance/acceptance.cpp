// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "mtmct/assignment.hpp"
#include "mtmct/metrics.hpp"
#include "mtmct/pipeline.hpp"
#include "mtmct/retrospective.hpp"
#include "mtmct/rng.hpp"
#include "mtmct/spacetime_logic.hpp"
#include "mtmct/spatial_semantics.hpp"
#include "mtmct/stcn.hpp"
#include "mtmct/synth.hpp"
#include "support/oracles.hpp"

using namespace mtmct;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr double kIdf1Tol = 1e-4;
constexpr double kRowSumTol = 1e-9;
constexpr double kSemigroupTol = 1e-9;
constexpr double kRasterSumTol = 1e-9;
constexpr double kKernelCenter = 0.2042;
constexpr double kKernelTol = 1e-3;
constexpr double kAttentionTol = 1e-6;
constexpr double kLnMeanTol = 1e-6;
constexpr double kLnVarTol = 1e-4;
constexpr std::uint64_t kAblationSeed = 7;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  const char* id;
  double budget_s;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double a) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// METRIC-1: ten identities whose ID counts give IDP/IDR close to the published pair.
Outcome metric1() {
  // IDTP 10000, IDFP 881, IDFN 1149.
  std::vector<Observation> gt, pred;
  for (int id = 0; id < 10; ++id) {
    const int extra_fn = id < 9 ? 115 : 114;
    const int extra_fp = id < 9 ? 88 : 89;
    const Box b{100.0 * id, 50.0, 40.0, 100.0};
    for (int f = 0; f < 1000 + extra_fn; ++f) gt.push_back({1, f, id + 1, b});
    for (int f = 0; f < 1000; ++f) pred.push_back({1, f, id + 101, b});
    for (int f = 5000; f < 5000 + extra_fp; ++f) pred.push_back({1, f, id + 101, b});
  }
  const IdMeasures m = compute_idf1(gt, pred);
  const double published = idf1_from_rates(0.919049, 0.896903);
  const bool ok = std::abs(m.idp - 0.919049) < kIdf1Tol && std::abs(m.idr - 0.896903) < kIdf1Tol &&
                  std::abs(m.idf1 - 0.907841) < kIdf1Tol && std::abs(published - 0.907841) < kIdf1Tol;
  return {ok, "IDP " + fmt("%.6f", m.idp) + " IDR " + fmt("%.6f", m.idr) + " IDF1 " + fmt("%.6f", m.idf1)};
}

// ASSIGN-1: Hungarian vs. permutation enumeration on integer costs (sums are exact).
Outcome assign1() {
  Rng rng(101);
  int checked = 0;
  for (int t = 0; t < 600; ++t) {
    const int r = 1 + static_cast<int>(rng.below(7)), c = 1 + static_cast<int>(rng.below(7));
    Eigen::MatrixXd m(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) m(i, j) = static_cast<double>(rng.below(100));
    const FrameAssignment fa = frame_assign(m);
    const auto bf = oracle::brute_force_assignment(m);
    if (fa.total_cost != bf.cost || static_cast<int>(fa.matches.size()) != bf.pairs)
      return {false, "instance " + std::to_string(t) + ": " + fmt("%.1f", fa.total_cost) + " vs " + fmt("%.1f", bf.cost)};
    ++checked;
  }
  return {true, std::to_string(checked) + " instances, exact equality"};
}

// FLOW-1: min-cost flow vs. enumeration of every chain partition.
Outcome flow1() {
  Rng rng(202);
  int checked = 0;
  for (int t = 0; t < 240; ++t) {
    const int n = 1 + static_cast<int>(rng.below(6));
    const double c = t % 2 == 0 ? 0.0 : rng.uniform(0.0, 2.0);
    const GlobalGraph g = oracle::random_graph(rng, n, c);
    const auto got = oracle::as_set(solve_global_graph(g));
    const auto want = oracle::brute_force_flow(g);
    if (got != want.trajectories) return {false, "instance " + std::to_string(t) + " differs"};
    ++checked;
  }
  return {true, std::to_string(checked) + " instances, identical trajectory sets"};
}

// MARKOV-1: row sums and P^(a+b) = P^a P^b.
Outcome markov1() {
  Rng rng(303);
  double worst_row = 0.0, worst_semi = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int n = 2 + static_cast<int>(rng.below(7));
    TransferMatrix tm;
    for (int k = 0; k < n; ++k) tm.camera_ids.push_back(k + 1);
    tm.p = Eigen::MatrixXd(n, n);
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += tm.p(i, j) = rng.bernoulli(0.3) ? 0.0 : rng.uniform();
      if (s == 0.0) s = tm.p(i, i) = 1.0;
      tm.p.row(i) /= s;
    }
    for (int a = 0; a <= 10; ++a) {
      const auto pa = n_step(tm, a);
      for (int i = 0; i < n; ++i) worst_row = std::max(worst_row, std::abs(pa.p.row(i).sum() - 1.0));
      for (int b = 0; a + b <= 10; ++b) {
        const auto lhs = n_step(tm, a + b);
        const Eigen::MatrixXd rhs = pa.p * n_step(tm, b).p;
        worst_semi = std::max(worst_semi, (lhs.p - rhs).cwiseAbs().maxCoeff());
      }
    }
  }
  return {worst_row <= kRowSumTol && worst_semi <= kSemigroupTol,
          "max row error " + fmt("%.2e", worst_row) + ", max semigroup error " + fmt("%.2e", worst_semi)};
}

// RASTER-1: normalization, zeros off the walkable mask, kernel value.
Outcome raster1() {
  Rng rng(404);
  double worst = 0.0;
  bool zeros = true;
  for (int t = 0; t < 1000; ++t) {
    MapSpec s;
    s.width = 3 + static_cast<int>(rng.below(8));
    s.height = 3 + static_cast<int>(rng.below(8));
    s.cell_size = 0.5;
    s.walkable.resize(static_cast<std::size_t>(s.width * s.height));
    for (auto& w : s.walkable) w = rng.bernoulli(0.6) ? 1 : 0;
    const CellIndex c{static_cast<int>(rng.below(static_cast<std::uint64_t>(s.width))),
                      static_cast<int>(rng.below(static_cast<std::uint64_t>(s.height)))};
    s.walkable[static_cast<std::size_t>(c.i + c.j * s.width)] = 1;
    const RasterMap map = build_map(s);
    const ProbRaster r = probability_raster(c, map, 1.0);
    double sum = 0.0;
    for (int dj = -1; dj <= 1; ++dj)
      for (int di = -1; di <= 1; ++di) {
        sum += r.at(di, dj);
        const CellIndex n{c.i + di, c.j + dj};
        if (!map.walkable(n) && r.at(di, dj) != 0.0) zeros = false;
      }
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  MapSpec open;
  open.width = open.height = 5;
  open.walkable.assign(25, 1);
  const double center = probability_raster({2, 2}, build_map(open), 1.0).at(0, 0);
  const bool ok = worst <= kRasterSumTol && zeros && std::abs(center - kKernelCenter) <= kKernelTol;
  return {ok, "max sum error " + fmt("%.2e", worst) + (zeros ? ", zeros exact" : ", NONZERO off-mask") +
                  ", center " + fmt("%.5f", center)};
}

// STCN-1: attention and layer-norm properties.
Outcome stcn1() {
  Rng rng(505);
  double worst_row = 0.0;
  for (int t = 0; t < 200; ++t) {
    std::deque<TrackQuery> bank;
    const int k = 1 + static_cast<int>(rng.below(6)), d = 2 + static_cast<int>(rng.below(30));
    for (int q = 0; q < k; ++q) {
      Eigen::VectorXd v(d);
      for (int x = 0; x < d; ++x) v(x) = rng.normal(0.0, 3.0);
      bank.push_back({1, v, q});
    }
    const Attention a = attend(bank);
    for (int r = 0; r < k; ++r) worst_row = std::max(worst_row, std::abs(a.weights.row(r).sum() - 1.0));
  }
  Eigen::VectorXd v(8);
  for (int x = 0; x < 8; ++x) v(x) = rng.normal();
  const Attention single = attend({{1, v, 0}});
  const bool singleton = (single.output - v).cwiseAbs().maxCoeff() < kAttentionTol && std::abs(single.weights(0, 0) - 1.0) < kAttentionTol;
  const Attention same = attend({{1, v, 0}, {1, v, 1}, {1, v, 2}, {1, v, 3}});
  const bool uniform = (same.weights.array() - 0.25).abs().maxCoeff() < kAttentionTol;
  double worst_mean = 0.0, worst_var = 0.0;
  for (int t = 0; t < 200; ++t) {
    Eigen::VectorXd x(2 + static_cast<int>(rng.below(60)));
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal(rng.uniform(-5, 5), rng.uniform(0.5, 10));
    const Eigen::VectorXd y = layer_norm_core(x);
    const double mean = y.mean();
    worst_mean = std::max(worst_mean, std::abs(mean));
    worst_var = std::max(worst_var, std::abs((y.array() - mean).square().mean() - 1.0));
  }
  const bool ok = worst_row <= kAttentionTol && singleton && uniform && worst_mean <= kLnMeanTol && worst_var <= kLnVarTol;
  return {ok, "row error " + fmt("%.1e", worst_row) + (singleton ? ", singleton ok" : ", singleton FAIL") +
                  (uniform ? ", uniform ok" : ", uniform FAIL") + ", LN mean " + fmt("%.1e", worst_mean) + " var " +
                  fmt("%.1e", worst_var)};
}

EvalReport run_bundle(const DatasetBundle& b, const RunConfig& cfg) {
  const PipelineResult res = run_pipeline(dataset_from_bundle(b), cfg);
  return evaluate(to_camera_tracks(b.ground_truth), to_camera_tracks(res.rows));
}

// E2E-1: zero-noise handover benchmarks reproduce the ground truth.
Outcome e2e1() {
  bool ok = true;
  std::string detail;
  for (const char* name : {"overlap-handover", "gap-handover"}) {
    const EvalReport rep = run_bundle(generate_scenario(zero_noise(find_benchmark(name))), RunConfig{});
    const bool pass = rep.overall.mota == 1.0 && rep.overall.idf1 == 1.0 && rep.mcta.mcta == 1.0;
    ok = ok && pass;
    detail += std::string(detail.empty() ? "" : "; ") + name + " MOTA " + fmt("%.6f", rep.overall.mota) + " IDF1 " +
              fmt("%.6f", rep.overall.idf1) + " MCTA " + fmt("%.6f", rep.mcta.mcta);
  }
  return {ok, detail};
}

// AB-1: stage ablation on the noisy five-camera benchmark.
Outcome ab1() {
  const auto rows = run_ablation("zigzag-5cam", kAblationSeed);
  bool ok = rows.size() == 4;
  std::string detail = "seed " + std::to_string(kAblationSeed) + " IDF1";
  for (std::size_t k = 0; k < rows.size(); ++k) {
    detail += " " + fmt("%.4f", rows[k].report.overall.idf1);
    if (k > 0 && rows[k].report.overall.idf1 < rows[k - 1].report.overall.idf1) ok = false;
  }
  if (ok) ok = rows.back().report.overall.idf1 > rows.front().report.overall.idf1;
  return {ok, detail};
}

// RETRO-1: one tracklet labeled 9 then 5; the backward pass restores 5 throughout.
Outcome retro1() {
  constexpr int kFrames = 20, kSwitch = 8;
  std::vector<float> values;
  Rng rng(606);
  std::vector<double> base(16);
  for (double& x : base) x = rng.normal();
  for (int f = 0; f < kFrames; ++f)
    for (double x : base) values.push_back(static_cast<float>(x + 0.05 * rng.normal()));
  TrackHistory h;
  h.embeddings[1] = std::make_shared<const EmbeddingTable>(16, values);
  auto bank = std::make_shared<FeatureBank>(0.1);
  std::vector<Observation> gt, before, after;
  for (int f = 0; f < kFrames; ++f) {
    HistoryRecord r;
    r.camera = 1;
    r.frame = f;
    r.box = {10.0 + f, 20.0, 30.0, 80.0};
    r.embedding_row = f;
    r.tracklet = 0;
    r.identity = f < kSwitch ? 9 : 5;
    r.confidence = 0.8;
    h.records.push_back(r);
    if (f >= kSwitch) bank->update(5, h.embedding(r), r.cell, f / 10.0, 1);
    gt.push_back({1, f, 1, r.box});
    before.push_back({1, f, *r.identity, r.box});
  }
  h.bank = bank;
  const RetrospectiveResult once = reverse_pass(h, {});
  for (const auto& r : once.history.records) after.push_back({1, r.frame, r.identity.value_or(-1), r.box});
  const RetrospectiveResult twice = reverse_pass(once.history, {});
  bool idempotent = twice.log.empty() && twice.history.records.size() == once.history.records.size();
  for (std::size_t k = 0; idempotent && k < once.history.records.size(); ++k)
    idempotent = twice.history.records[k].identity == once.history.records[k].identity;
  const ClearMot mb = compute_clear_mot(gt, before), ma = compute_clear_mot(gt, after);
  const IdMeasures ib = compute_idf1(gt, before), ia = compute_idf1(gt, after);
  const bool ok = ma.idsw < mb.idsw && ia.idf1 > ib.idf1 && idempotent;
  return {ok, "IDSW " + std::to_string(mb.idsw) + " -> " + std::to_string(ma.idsw) + ", IDF1 " + fmt("%.3f", ib.idf1) +
                  " -> " + fmt("%.3f", ia.idf1) + (idempotent ? ", idempotent" : ", NOT idempotent")};
}

// CAL-1: zero on perfect predictions, positive under each single perturbation.
Outcome cal1() {
  const Box truth{100, 50, 40, 120};
  const CalWeights w;
  auto score = [&](const CalTarget& t) {
    const std::vector<CalTarget> v{t, {{1, 1, 1}, truth, truth}};
    return cal_score(v, w, 2.0);
  };
  const double perfect = score({{1, 1, 1}, truth, truth});
  const double drop = score({{0.9, 1, 1}, truth, truth});
  const double shift = score({{1, 1, 1}, {103, 50, 40, 120}, truth});
  const double shrink = score({{1, 1, 1}, {100, 50, 36, 108}, truth});
  const bool ok = perfect == 0.0 && drop > 0.0 && shift > 0.0 && shrink > 0.0;
  return {ok, "perfect " + fmt("%.3g", perfect) + ", drop " + fmt("%.4f", drop) + ", shift " + fmt("%.4f", shift) +
                  ", shrink " + fmt("%.4f", shrink)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// DET-1: two file-based runs, byte-identical outputs (manifest excluded: wall time).
Outcome det1() {
  const fs::path root = fs::temp_directory_path() / "mtmct_det1";
  fs::remove_all(root);
  ScenarioSpec spec = find_benchmark("zigzag-5cam");
  spec.seed = kAblationSeed;
  write_dataset(generate_scenario(spec), root / "data");
  RunConfig cfg;
  cfg.dataset = (root / "data").string();
  cfg.seed = 3;
  run_track(cfg, root / "a");
  run_track(cfg, root / "b");
  int files = 0;
  for (const auto& e : fs::directory_iterator(root / "a")) {
    if (e.path().filename() == "manifest.json") continue;
    if (slurp(e.path()) != slurp(root / "b" / e.path().filename()))
      return {false, e.path().filename().string() + " differs"};
    ++files;
  }
  fs::remove_all(root);
  return {files > 0, std::to_string(files) + " files identical"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{{"METRIC-1", 1, metric1}, {"ASSIGN-1", 10, assign1}, {"FLOW-1", 30, flow1},
                                   {"MARKOV-1", 5, markov1}, {"RASTER-1", 5, raster1}, {"STCN-1", 5, stcn1},
                                   {"E2E-1", 120, e2e1},     {"AB-1", 120, ab1},       {"RETRO-1", 10, retro1},
                                   {"CAL-1", 1, cal1},       {"DET-1", 120, det1}};
  int failed = 0;
  for (const auto& c : all) {
    if (argc > 1 && std::string(argv[1]) != c.id) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = o.pass && s < c.budget_s;
    if (!pass) ++failed;
    std::printf("%-8s %s  %.2fs/%.0fs  %s\n", c.id, pass ? "PASS" : "FAIL", s, c.budget_s, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
