#include <gtest/gtest.h>

#include "mtmct/metrics.hpp"

using namespace mtmct;

namespace {

Observation ob(CameraId cam, int frame, int id, double x = 0.0) { return {cam, frame, id, Box{x, 0, 10, 20}}; }

/// One GT identity over `n` frames in camera 1.
std::vector<Observation> straight(int id, int n, CameraId cam = 1, int first = 0) {
  std::vector<Observation> v;
  for (int f = first; f < first + n; ++f) v.push_back(ob(cam, f, id));
  return v;
}

}  // namespace

TEST(ClearMot, PerfectTracking) {
  const auto gt = straight(1, 10);
  const auto r = compute_clear_mot(gt, straight(77, 10));
  EXPECT_EQ(r.tp, 10);
  EXPECT_EQ(r.fp + r.fn + r.idsw, 0);
  EXPECT_DOUBLE_EQ(r.mota, 1.0);
}

TEST(ClearMot, CountsSwitchMissAndFalsePositive) {
  const auto gt = straight(1, 4);
  std::vector<Observation> pred{ob(1, 0, 10), ob(1, 1, 10), ob(1, 2, 11), ob(1, 3, 11), ob(1, 3, 12, 500)};
  const auto r = compute_clear_mot(gt, pred);
  EXPECT_EQ(r.idsw, 1);
  EXPECT_EQ(r.fp, 1);
  EXPECT_EQ(r.fn, 0);
  EXPECT_DOUBLE_EQ(r.mota, 1.0 - 2.0 / 4.0);

  pred = {ob(1, 0, 10), ob(1, 3, 10)};
  const auto m = compute_clear_mot(gt, pred);
  EXPECT_EQ(m.fn, 2);
  EXPECT_DOUBLE_EQ(m.recall(), 0.5);
  EXPECT_DOUBLE_EQ(m.precision(), 1.0);
}

TEST(ClearMot, KeepsPreviousMatchWhileAboveThreshold) {
  // Two predictions overlap the GT; the one matched last frame wins even if the other is tighter.
  std::vector<Observation> gt{ob(1, 0, 1), ob(1, 1, 1)};
  std::vector<Observation> pred{ob(1, 0, 5), ob(1, 1, 5, 2.0), ob(1, 1, 6)};
  const auto r = compute_clear_mot(gt, pred);
  EXPECT_EQ(r.idsw, 0);
  EXPECT_EQ(r.fp, 1);
}

TEST(ClearMot, IouThresholdIsInclusive) {
  // A box covering exactly half the GT box: IoU = 100 / 200.
  const std::vector<Observation> gt{ob(1, 0, 1)};
  const std::vector<Observation> pred{{1, 0, 2, Box{0, 0, 10, 10}}};
  EXPECT_EQ(compute_clear_mot(gt, pred).tp, 1);
  EXPECT_THROW(compute_clear_mot(std::vector<Observation>{}, pred), DegenerateError);
}

TEST(Idf1, EqualSplitHalvesGiveOneHalf) {
  const auto gt = straight(1, 10);
  std::vector<Observation> pred;
  for (int f = 0; f < 10; ++f) pred.push_back(ob(1, f, f < 5 ? 100 : 200));
  const auto m = compute_idf1(gt, pred);
  EXPECT_EQ(m.idtp, 5);
  EXPECT_EQ(m.idfp, 5);
  EXPECT_EQ(m.idfn, 5);
  EXPECT_DOUBLE_EQ(m.idf1, 0.5);
  EXPECT_DOUBLE_EQ(idf1_from_rates(m.idp, m.idr), m.idf1);
}

TEST(Idf1, GlobalMatchingAcrossIdentities) {
  // GT 1 and 2 swap predicted ids after frame 5 of 8; the best map keeps 6 of 8 each.
  std::vector<Observation> gt, pred;
  for (int f = 0; f < 8; ++f) {
    gt.push_back(ob(1, f, 1, 0));
    gt.push_back(ob(1, f, 2, 100));
    pred.push_back(ob(1, f, f < 6 ? 10 : 20, 0));
    pred.push_back(ob(1, f, f < 6 ? 20 : 10, 100));
  }
  const auto m = compute_idf1(gt, pred);
  EXPECT_EQ(m.idtp, 12);
  EXPECT_DOUBLE_EQ(m.idf1, 0.75);
  EXPECT_DOUBLE_EQ(compute_idf1(gt, std::vector<Observation>{}).idf1, 0.0);
}

TEST(Idf1, RatesHarmonicMean) {
  EXPECT_DOUBLE_EQ(idf1_from_rates(1.0, 0.5), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(idf1_from_rates(0.0, 0.0), 0.0);
}

TEST(Mcta, HandoverMismatchZeroesScore) {
  auto gt = straight(1, 3, 1, 0);
  for (const auto& o : straight(1, 3, 2, 3)) gt.push_back(o);
  std::vector<Observation> split = straight(10, 3, 1, 0), same = split;
  for (const auto& o : straight(20, 3, 2, 3)) split.push_back(o);
  for (const auto& o : straight(10, 3, 2, 3)) same.push_back(o);

  const Mcta bad = compute_mcta(gt, split);
  EXPECT_EQ(bad.tp_handover, 1);
  EXPECT_EQ(bad.mme_handover, 1);
  EXPECT_EQ(bad.tp_within, 4);
  EXPECT_DOUBLE_EQ(bad.mcta, 0.0);
  EXPECT_DOUBLE_EQ(compute_mcta(gt, same).mcta, 1.0);
}

TEST(Mcta, WithinCameraSwitchesScaleScore) {
  const auto gt = straight(1, 5);
  std::vector<Observation> pred;
  for (int f = 0; f < 5; ++f) pred.push_back(ob(1, f, f < 2 ? 10 : 11));
  const Mcta m = compute_mcta(gt, pred);
  EXPECT_EQ(m.tp_within, 4);
  EXPECT_EQ(m.mme_within, 1);
  EXPECT_DOUBLE_EQ(m.f1, 1.0);
  EXPECT_DOUBLE_EQ(m.mcta, 0.75);
}

TEST(Evaluate, PerCameraAndOverall) {
  CameraTracks g1{1, {}}, g2{2, {}}, p1{1, {}}, p2{2, {}};
  for (int f = 0; f < 4; ++f) {
    TrackRow r;
    r.frame = f;
    r.id = 1;
    r.body_box = {0, 0, 10, 20};
    r.global_id = 1;
    g1.rows.push_back(r);
    r.id = 3;
    r.global_id = 9;
    p1.rows.push_back(r);
    r.frame = f + 4;
    r.id = 1;
    r.global_id = 1;
    g2.rows.push_back(r);
    r.id = 4;
    r.global_id = 9;
    p2.rows.push_back(r);
  }
  const std::vector<CameraTracks> gt{g1, g2}, pred{p1, p2};
  const EvalReport rep = evaluate(gt, pred);
  ASSERT_EQ(rep.cameras.size(), 2u);
  EXPECT_DOUBLE_EQ(rep.overall.idf1, 1.0);
  EXPECT_DOUBLE_EQ(rep.overall.mota, 1.0);
  EXPECT_DOUBLE_EQ(rep.mcta.mcta, 1.0);
  EXPECT_NE(report_to_table(rep).find("MCTA"), std::string::npos);
  EXPECT_TRUE(report_to_json(rep).contains("overall"));

  const std::vector<CameraTracks> one{p1};
  EXPECT_THROW(evaluate(gt, one), EvalError);
}

TEST(ClearMot, TwoFrameFixtureOneMissOneFalsePositive) {
  std::vector<Observation> gt, pred;
  for (int f = 0; f < 2; ++f)
    for (int id = 0; id < 5; ++id) {
      gt.push_back(ob(1, f, id, 100.0 * id));
      if (f == 0 || id < 4) pred.push_back(ob(1, f, 50 + id, 100.0 * id));
    }
  pred.push_back(ob(1, 1, 99, 5000));
  const auto r = compute_clear_mot(gt, pred);
  EXPECT_EQ(r.fn, 1);
  EXPECT_EQ(r.fp, 1);
  EXPECT_EQ(r.idsw, 0);
  EXPECT_DOUBLE_EQ(r.mota, 0.8);
}

TEST(ClearMot, SingleSwitchOverTenFrames) {
  const auto gt = straight(1, 10);
  std::vector<Observation> pred;
  for (int f = 0; f < 10; ++f) pred.push_back(ob(1, f, f < 5 ? 10 : 11));
  const auto r = compute_clear_mot(gt, pred);
  EXPECT_EQ(r.idsw, 1);
  EXPECT_DOUBLE_EQ(r.mota, 0.9);
}

TEST(Mcta, OneOfTwoHandoversMismatchedHalvesScore) {
  std::vector<Observation> gt, pred;
  const CameraId cams[3] = {1, 2, 1};
  const int ids[3] = {10, 10, 20};
  for (int seg = 0; seg < 3; ++seg)
    for (int f = 2 * seg; f < 2 * seg + 2; ++f) {
      gt.push_back(ob(cams[seg], f, 1));
      pred.push_back(ob(cams[seg], f, ids[seg]));
    }
  const Mcta m = compute_mcta(gt, pred);
  EXPECT_EQ(m.tp_handover, 2);
  EXPECT_EQ(m.mme_handover, 1);
  EXPECT_EQ(m.mme_within, 0);
  EXPECT_DOUBLE_EQ(m.mcta, 0.5);
}

TEST(Mcta, SingleCameraHasNoHandoverPenalty) {
  const Mcta m = compute_mcta(straight(1, 4), straight(3, 4));
  EXPECT_EQ(m.tp_handover, 0);
  EXPECT_DOUBLE_EQ(m.handover_factor(), 1.0);
  EXPECT_DOUBLE_EQ(m.mcta, 1.0);
}
