#pragma once

// Tracking evaluation: CLEAR-MOT (MOTA and components), ID measures
// (IDF1/IDP/IDR) and multi-camera tracking accuracy (MCTA).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mtmct/assignment.hpp"
#include "mtmct/errors.hpp"
#include "mtmct/geometry_io.hpp"

namespace mtmct {

struct Observation {
  CameraId camera = 0;
  int frame = 0;
  int id = 0;
  Box box;
};

struct MatchRecord {
  CameraId camera = 0;
  int frame = 0;
  int gt_id = 0;
  int pred_id = 0;
};

struct ClearMot {
  double mota = 0.0;
  long fp = 0;
  long fn = 0;
  long idsw = 0;
  long gt = 0;
  long tp = 0;
  std::vector<MatchRecord> matches;

  double recall() const { return gt > 0 ? static_cast<double>(tp) / gt : 0.0; }
  double precision() const { return tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0; }
};

namespace detail {

using FrameKey = std::pair<CameraId, int>;

inline std::map<FrameKey, std::vector<const Observation*>> group_by_frame(std::span<const Observation> obs) {
  std::map<FrameKey, std::vector<const Observation*>> out;
  for (const auto& o : obs) out[{o.camera, o.frame}].push_back(&o);
  return out;
}

}  // namespace detail

/// CLEAR-MOT counting. Each (camera, frame) is matched independently: pairs
/// that were matched in the previous frame of that GT identity are kept while
/// their IoU stays above the threshold, the rest go through a Hungarian
/// assignment on 1 - IoU.
inline ClearMot compute_clear_mot(std::span<const Observation> gt, std::span<const Observation> pred,
                                  double iou_threshold = 0.5) {
  ClearMot r;
  r.gt = static_cast<long>(gt.size());
  if (r.gt == 0) throw DegenerateError("ground truth is empty");
  const auto gt_frames = detail::group_by_frame(gt);
  const auto pred_frames = detail::group_by_frame(pred);
  std::set<detail::FrameKey> keys;
  for (const auto& [k, v] : gt_frames) keys.insert(k);
  for (const auto& [k, v] : pred_frames) keys.insert(k);

  std::map<std::pair<CameraId, int>, int> last_match;  // (camera, gt id) -> pred id
  static const std::vector<const Observation*> kNone;
  for (const auto& key : keys) {
    const auto git = gt_frames.find(key);
    const auto pit = pred_frames.find(key);
    const auto& g = git == gt_frames.end() ? kNone : git->second;
    const auto& p = pit == pred_frames.end() ? kNone : pit->second;
    std::vector<int> g_to_p(g.size(), -1);
    std::vector<char> p_used(p.size(), 0);

    for (std::size_t a = 0; a < g.size(); ++a) {
      auto lm = last_match.find({key.first, g[a]->id});
      if (lm == last_match.end()) continue;
      for (std::size_t b = 0; b < p.size(); ++b) {
        if (!p_used[b] && p[b]->id == lm->second && iou(g[a]->box, p[b]->box) >= iou_threshold) {
          g_to_p[a] = static_cast<int>(b);
          p_used[b] = 1;
          break;
        }
      }
    }
    std::vector<int> g_rest, p_rest;
    for (std::size_t a = 0; a < g.size(); ++a)
      if (g_to_p[a] < 0) g_rest.push_back(static_cast<int>(a));
    for (std::size_t b = 0; b < p.size(); ++b)
      if (!p_used[b]) p_rest.push_back(static_cast<int>(b));
    if (!g_rest.empty() && !p_rest.empty()) {
      Eigen::MatrixXd cost(static_cast<Eigen::Index>(g_rest.size()), static_cast<Eigen::Index>(p_rest.size()));
      for (std::size_t x = 0; x < g_rest.size(); ++x)
        for (std::size_t y = 0; y < p_rest.size(); ++y) {
          const double v = iou(g[g_rest[x]]->box, p[p_rest[y]]->box);
          cost(x, y) = v >= iou_threshold ? 1.0 - v : std::numeric_limits<double>::infinity();
        }
      const Assignment as = solve_assignment(cost);
      for (std::size_t x = 0; x < g_rest.size(); ++x) {
        if (as.row_to_col[x] < 0) continue;
        const int a = g_rest[x];
        const int b = p_rest[as.row_to_col[x]];
        g_to_p[a] = b;
        p_used[b] = 1;
        auto lm = last_match.find({key.first, g[a]->id});
        if (lm != last_match.end() && lm->second != p[b]->id) ++r.idsw;
      }
    }
    for (std::size_t a = 0; a < g.size(); ++a) {
      if (g_to_p[a] < 0) {
        ++r.fn;
        continue;
      }
      const Observation& po = *p[g_to_p[a]];
      ++r.tp;
      last_match[{key.first, g[a]->id}] = po.id;
      r.matches.push_back({key.first, key.second, g[a]->id, po.id});
    }
    for (std::size_t b = 0; b < p.size(); ++b)
      if (!p_used[b]) ++r.fp;
  }
  r.mota = 1.0 - static_cast<double>(r.fn + r.fp + r.idsw) / static_cast<double>(r.gt);
  return r;
}

inline ClearMot compute_mota(std::span<const Observation> gt, std::span<const Observation> pred,
                             double iou_threshold = 0.5) {
  return compute_clear_mot(gt, pred, iou_threshold);
}

struct IdMeasures {
  double idf1 = 0.0;
  double idp = 0.0;
  double idr = 0.0;
  long idtp = 0;
  long idfp = 0;
  long idfn = 0;
};

/// Whole-sequence bipartite matching of GT identities to predicted identities
/// maximizing the number of co-located observations (IoU >= threshold in the
/// same camera and frame).
inline IdMeasures compute_idf1(std::span<const Observation> gt, std::span<const Observation> pred,
                               double iou_threshold = 0.5) {
  if (gt.empty()) throw DegenerateError("ground truth is empty");
  std::map<int, int> gidx, pidx;
  for (const auto& o : gt) gidx.emplace(o.id, static_cast<int>(gidx.size()));
  for (const auto& o : pred) pidx.emplace(o.id, static_cast<int>(pidx.size()));
  Eigen::MatrixXd overlap = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(gidx.size()), static_cast<Eigen::Index>(pidx.size()));
  const auto gf = detail::group_by_frame(gt);
  const auto pf = detail::group_by_frame(pred);
  for (const auto& [key, gs] : gf) {
    auto it = pf.find(key);
    if (it == pf.end()) continue;
    for (const Observation* g : gs)
      for (const Observation* p : it->second)
        if (iou(g->box, p->box) >= iou_threshold) overlap(gidx.at(g->id), pidx.at(p->id)) += 1.0;
  }
  IdMeasures m;
  if (!pidx.empty()) {
    const Assignment as = solve_assignment(-overlap);
    for (std::size_t r = 0; r < as.row_to_col.size(); ++r)
      if (as.row_to_col[r] >= 0) m.idtp += static_cast<long>(overlap(static_cast<Eigen::Index>(r), as.row_to_col[r]));
  }
  m.idfn = static_cast<long>(gt.size()) - m.idtp;
  m.idfp = static_cast<long>(pred.size()) - m.idtp;
  m.idp = m.idtp + m.idfp > 0 ? static_cast<double>(m.idtp) / (m.idtp + m.idfp) : 0.0;
  m.idr = static_cast<double>(m.idtp) / (m.idtp + m.idfn);
  const double denom = 2.0 * m.idtp + m.idfp + m.idfn;
  m.idf1 = denom > 0 ? 2.0 * m.idtp / denom : 0.0;
  return m;
}

/// Harmonic mean of identification precision and recall.
inline double idf1_from_rates(double idp, double idr) { return idp + idr > 0.0 ? 2.0 * idp * idr / (idp + idr) : 0.0; }

struct Mcta {
  double mcta = 0.0;
  double f1 = 0.0;
  long tp_within = 0;
  long mme_within = 0;
  long tp_handover = 0;
  long mme_handover = 0;

  double within_factor() const { return tp_within > 0 ? 1.0 - static_cast<double>(mme_within) / tp_within : 1.0; }
  double handover_factor() const {
    return tp_handover > 0 ? 1.0 - static_cast<double>(mme_handover) / tp_handover : 1.0;
  }
};

/// MCTA = F1 * (1 - mme_w / tp_w) * (1 - mme_h / tp_h). Observations carry
/// global identities. A matched observation is a handover when its GT identity
/// was seen in another camera more recently (by frame) than in this one; it is
/// then compared with that other-camera prediction, otherwise with the previous
/// prediction in the same camera.
inline Mcta compute_mcta(std::span<const Observation> gt, std::span<const Observation> pred, double iou_threshold = 0.5) {
  const ClearMot cm = compute_clear_mot(gt, pred, iou_threshold);
  Mcta r;
  const double denom = 2.0 * cm.tp + cm.fp + cm.fn;
  r.f1 = denom > 0 ? 2.0 * cm.tp / denom : 0.0;

  std::map<int, std::vector<MatchRecord>> by_gt;
  for (const auto& m : cm.matches) by_gt[m.gt_id].push_back(m);
  for (auto& [gid, recs] : by_gt) {
    std::sort(recs.begin(), recs.end(), [](const MatchRecord& a, const MatchRecord& b) {
      return std::tie(a.frame, a.camera) < std::tie(b.frame, b.camera);
    });
    std::map<CameraId, std::pair<int, int>> last;  // camera -> (frame, pred id)
    for (const auto& m : recs) {
      const auto same = last.find(m.camera);
      std::optional<std::pair<int, int>> other;
      for (const auto& [cam, fp] : last) {
        if (cam == m.camera) continue;
        if (!other || fp.first > other->first) other = fp;
      }
      const bool entry = same == last.end() || (other && other->first > same->second.first);
      if (entry) {
        if (other) {
          ++r.tp_handover;
          if (other->second != m.pred_id) ++r.mme_handover;
        }
      } else {
        ++r.tp_within;
        if (same->second.second != m.pred_id) ++r.mme_within;
      }
      last[m.camera] = {m.frame, m.pred_id};
    }
  }
  r.mcta = r.f1 * r.within_factor() * r.handover_factor();
  return r;
}

// ---------------------------------------------------------------------------
// Report assembly over per-camera track files

struct EvalRow {
  std::string name;
  double idf1 = 0.0, idp = 0.0, idr = 0.0;
  double mota = 0.0, recall = 0.0, precision = 0.0;
  long fp = 0, fn = 0, idsw = 0, gt = 0;
};

struct EvalReport {
  std::vector<EvalRow> cameras;
  EvalRow overall;
  Mcta mcta;
};

struct CameraTracks {
  CameraId camera = 0;
  std::vector<TrackRow> rows;
};

inline std::vector<Observation> observations(const CameraTracks& t, bool use_global) {
  std::vector<Observation> out;
  for (const auto& r : t.rows) {
    const int id = use_global && r.global_id ? *r.global_id : r.id;
    out.push_back({t.camera, r.frame, id, r.body_box});
  }
  return out;
}

/// Per-camera rows use the local `id` column; the overall IDF1 and MCTA use
/// global identities across cameras, and the overall MOTA sums the per-camera
/// CLEAR-MOT counts.
inline EvalReport evaluate(std::span<const CameraTracks> gt, std::span<const CameraTracks> pred, double iou_threshold = 0.5) {
  std::set<CameraId> gs, ps;
  for (const auto& g : gt) gs.insert(g.camera);
  for (const auto& p : pred) ps.insert(p.camera);
  if (gs != ps) {
    std::ostringstream os;
    os << "camera sets differ; gt only:";
    for (CameraId c : gs)
      if (!ps.count(c)) os << " " << c;
    os << "; pred only:";
    for (CameraId c : ps)
      if (!gs.count(c)) os << " " << c;
    throw EvalError(os.str());
  }
  EvalReport rep;
  std::vector<Observation> all_gt, all_pred;
  long tp = 0;
  for (const auto& g : gt) {
    const auto& p = *std::find_if(pred.begin(), pred.end(), [&](const CameraTracks& x) { return x.camera == g.camera; });
    const auto go = observations(g, false);
    const auto po = observations(p, false);
    EvalRow row;
    row.name = "cam" + std::to_string(g.camera);
    if (!go.empty()) {
      const ClearMot cm = compute_clear_mot(go, po, iou_threshold);
      const IdMeasures id = compute_idf1(go, po, iou_threshold);
      row.idf1 = id.idf1;
      row.idp = id.idp;
      row.idr = id.idr;
      row.mota = cm.mota;
      row.recall = cm.recall();
      row.precision = cm.precision();
      row.fp = cm.fp;
      row.fn = cm.fn;
      row.idsw = cm.idsw;
      row.gt = cm.gt;
      tp += cm.tp;
    } else {
      row.fp = static_cast<long>(po.size());
    }
    rep.overall.fp += row.fp;
    rep.overall.fn += row.fn;
    rep.overall.idsw += row.idsw;
    rep.overall.gt += row.gt;
    rep.cameras.push_back(row);
    const auto gg = observations(g, true);
    const auto pg = observations(p, true);
    all_gt.insert(all_gt.end(), gg.begin(), gg.end());
    all_pred.insert(all_pred.end(), pg.begin(), pg.end());
  }
  rep.overall.name = "OVERALL";
  if (rep.overall.gt == 0) throw DegenerateError("ground truth is empty");
  rep.overall.mota =
      1.0 - static_cast<double>(rep.overall.fn + rep.overall.fp + rep.overall.idsw) / static_cast<double>(rep.overall.gt);
  rep.overall.recall = static_cast<double>(tp) / rep.overall.gt;
  rep.overall.precision = tp + rep.overall.fp > 0 ? static_cast<double>(tp) / (tp + rep.overall.fp) : 0.0;
  const IdMeasures id = compute_idf1(all_gt, all_pred, iou_threshold);
  rep.overall.idf1 = id.idf1;
  rep.overall.idp = id.idp;
  rep.overall.idr = id.idr;
  rep.mcta = compute_mcta(all_gt, all_pred, iou_threshold);
  return rep;
}

inline nlohmann::json report_to_json(const EvalReport& rep) {
  auto row_json = [](const EvalRow& r) {
    return nlohmann::json{{"name", r.name}, {"IDF1", r.idf1}, {"IDP", r.idp}, {"IDR", r.idr}, {"MOTA", r.mota},
                          {"Recall", r.recall}, {"Precision", r.precision}, {"FP", r.fp}, {"FN", r.fn},
                          {"IDSW", r.idsw}, {"GT", r.gt}};
  };
  nlohmann::json doc;
  doc["cameras"] = nlohmann::json::array();
  for (const auto& r : rep.cameras) doc["cameras"].push_back(row_json(r));
  doc["overall"] = row_json(rep.overall);
  doc["mcta"] = {{"MCTA", rep.mcta.mcta},
                 {"F1", rep.mcta.f1},
                 {"tp_within", rep.mcta.tp_within},
                 {"mme_within", rep.mcta.mme_within},
                 {"tp_handover", rep.mcta.tp_handover},
                 {"mme_handover", rep.mcta.mme_handover}};
  return doc;
}

inline std::string report_to_table(const EvalReport& rep) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-10s %9s %9s %9s %9s %9s %9s %7s %7s %6s\n", "", "IDF1", "MOTA", "IDP", "IDR",
                "Recall", "Precision", "FP", "FN", "IDSW");
  os << buf;
  auto line = [&](const EvalRow& r) {
    std::snprintf(buf, sizeof buf, "%-10s %9.6f %9.6f %9.6f %9.6f %9.6f %9.6f %7ld %7ld %6ld\n", r.name.c_str(), r.idf1,
                  r.mota, r.idp, r.idr, r.recall, r.precision, r.fp, r.fn, r.idsw);
    os << buf;
  };
  for (const auto& r : rep.cameras) line(r);
  line(rep.overall);
  std::snprintf(buf, sizeof buf, "MCTA %.6f (F1 %.6f, within %.6f, handover %.6f)\n", rep.mcta.mcta, rep.mcta.f1,
                rep.mcta.within_factor(), rep.mcta.handover_factor());
  os << buf;
  return os.str();
}

/// Reads every `cam_<id>.csv` in a directory.
inline std::vector<CameraTracks> load_track_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw FormatError("not a directory: " + dir);
  std::vector<CameraTracks> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("cam_", 0) != 0 || entry.path().extension() != ".csv") continue;
    CameraTracks t;
    try {
      t.camera = std::stoi(name.substr(4, name.size() - 8));
    } catch (const std::exception&) {
      throw FormatError("cannot parse camera id from " + name);
    }
    t.rows = load_track_rows(entry.path().string());
    out.push_back(std::move(t));
  }
  std::sort(out.begin(), out.end(), [](const CameraTracks& a, const CameraTracks& b) { return a.camera < b.camera; });
  return out;
}

}  // namespace mtmct
