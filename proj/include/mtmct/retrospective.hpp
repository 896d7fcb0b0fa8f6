#pragma once

// Backward sweep over a finished forward run: relabel detections whose
// identity was missing or later superseded, then lift confidences along each
// final trajectory.

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mtmct/feature_matching.hpp"
#include "mtmct/geometry_io.hpp"
#include "mtmct/semantic_map.hpp"
#include "mtmct/stcn.hpp"

namespace mtmct {

struct HistoryRecord {
  CameraId camera = 0;
  int frame = 0;
  double timestamp = 0.0;
  Box box;
  std::optional<Box> head_box;
  int object_class = 1;
  int embedding_row = -1;  // row in the camera's embedding table
  int tracklet = -1;       // single-camera tracklet, -1 when none
  std::optional<IdentityId> identity;
  double confidence = 0.0;
  double fused = 0.0;
  CellIndex cell;
  bool walkable = true;
};

struct TrackHistory {
  std::vector<HistoryRecord> records;                // ordered by (frame, camera)
  std::map<IdentityId, IdentityId> merges;           // identity -> identity it was merged into
  std::shared_ptr<const FeatureBank> bank;           // final bank
  std::map<CameraId, std::shared_ptr<const EmbeddingTable>> embeddings;

  /// Follows merge links to the surviving identity.
  IdentityId resolve(IdentityId id) const {
    for (int guard = 0; guard < 1 << 20; ++guard) {
      auto it = merges.find(id);
      if (it == merges.end() || it->second == id) return id;
      id = it->second;
    }
    throw InternalError("cycle in identity merges");
  }

  std::span<const float> embedding(const HistoryRecord& r) const {
    auto it = embeddings.find(r.camera);
    if (it == embeddings.end() || r.embedding_row < 0 || static_cast<std::size_t>(r.embedding_row) >= it->second->size())
      return {};
    return it->second->row(static_cast<std::size_t>(r.embedding_row));
  }
};

struct RetrospectiveConfig {
  double fuse_threshold = 0.05;
  double accept_threshold = 0.6;
  double conf_decay = 0.99;
};

struct Correction {
  std::size_t record = 0;
  std::optional<IdentityId> before;
  IdentityId after = 0;
  double fused = 0.0;
};

struct RetrospectiveResult {
  TrackHistory history;
  std::vector<Correction> log;
};

/// One newest-to-oldest sweep. Each tracklet takes the final identity of its
/// newest labeled detection (or, when it never got one, the best non-conflicting
/// match in the final bank); older detections whose label differs are relabeled
/// while the fused evidence clears the threshold, stopping at the first that
/// does not. Every label is then expressed in final (merged) identities.
inline RetrospectiveResult reverse_pass(const TrackHistory& input, const RetrospectiveConfig& cfg) {
  RetrospectiveResult out{input, {}};
  TrackHistory& h = out.history;
  for (auto& r : h.records)
    if (r.identity) r.identity = h.resolve(*r.identity);
  if (h.records.empty()) return out;

  std::map<int, std::vector<std::size_t>> by_tracklet;
  for (std::size_t k = 0; k < h.records.size(); ++k)
    if (h.records[k].tracklet >= 0) by_tracklet[h.records[k].tracklet].push_back(k);

  // (camera, frame, identity) -> owning tracklet, to keep labels unique per frame.
  std::map<std::tuple<CameraId, int, IdentityId>, int> occupancy;
  for (const auto& r : h.records)
    if (r.identity) occupancy[{r.camera, r.frame, *r.identity}] = r.tracklet;
  auto occupied_by_other = [&](const HistoryRecord& r, IdentityId id) {
    auto it = occupancy.find({r.camera, r.frame, id});
    return it != occupancy.end() && (it->second != r.tracklet || r.tracklet < 0);
  };

  auto similarity_to = [&](const HistoryRecord& r, IdentityId id) -> std::optional<double> {
    if (!h.bank || !h.bank->contains(id)) return std::nullopt;
    const auto e = h.embedding(r);
    if (e.empty()) return std::nullopt;
    return appearance_similarity(e, std::span<const double>(h.bank->at(id).centroid));
  };

  // Newest tracklets first.
  std::vector<int> order;
  for (const auto& [t, recs] : by_tracklet) order.push_back(t);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const auto& ra = h.records[by_tracklet[a].back()];
    const auto& rb = h.records[by_tracklet[b].back()];
    return std::tie(rb.frame, rb.camera, b) < std::tie(ra.frame, ra.camera, a);
  });

  for (int t : order) {
    const auto& recs = by_tracklet[t];
    std::optional<IdentityId> target;
    for (auto it = recs.rbegin(); it != recs.rend(); ++it)
      if (h.records[*it].identity) {
        target = h.records[*it].identity;
        break;
      }
    if (!target && h.bank) {
      // Never labeled forward: match the tracklet's mean appearance against the final bank.
      std::vector<double> mean;
      int n = 0;
      for (std::size_t k : recs) {
        const auto e = h.embedding(h.records[k]);
        if (e.empty()) continue;
        const auto u = normalized(e);
        if (mean.empty()) mean.assign(u.size(), 0.0);
        for (std::size_t d = 0; d < u.size(); ++d) mean[d] += u[d];
        ++n;
      }
      if (n > 0) {
        double best = -2.0;
        std::optional<IdentityId> arg;
        for (const auto& [id, entry] : h.bank->entries()) {
          if (h.resolve(id) != id) continue;
          const bool conflict = std::any_of(recs.begin(), recs.end(), [&](std::size_t k) { return occupied_by_other(h.records[k], id); });
          if (conflict) continue;
          const double s = appearance_similarity(std::span<const double>(mean), std::span<const double>(entry.centroid));
          if (s > best) {
            best = s;
            arg = id;
          }
        }
        if (arg && best >= cfg.accept_threshold && fuse_probabilities({best, 1.0, 1.0}, cfg.fuse_threshold).accept) target = arg;
      }
    }
    if (!target) continue;

    for (auto it = recs.rbegin(); it != recs.rend(); ++it) {
      HistoryRecord& r = h.records[*it];
      if (r.identity == target) continue;
      if (occupied_by_other(r, *target)) break;
      const auto s = similarity_to(r, *target);
      const FusionResult f = fuse_probabilities({s.value_or(0.0), 1.0, r.walkable ? 1.0 : 0.0}, cfg.fuse_threshold);
      if (!f.accept) break;
      out.log.push_back({*it, r.identity, *target, f.fused});
      if (r.identity) occupancy.erase({r.camera, r.frame, *r.identity});
      r.identity = target;
      r.fused = f.fused;
      occupancy[{r.camera, r.frame, *target}] = r.tracklet;
    }
  }
  return out;
}

/// Lifts each detection's confidence to at least the trajectory maximum decayed
/// by the frame distance to the detection holding that maximum.
inline TrackHistory compensate_confidence(const TrackHistory& input, double decay = 0.99) {
  TrackHistory h = input;
  std::map<IdentityId, std::vector<std::size_t>> by_identity;
  for (std::size_t k = 0; k < h.records.size(); ++k)
    if (h.records[k].identity) by_identity[h.resolve(*h.records[k].identity)].push_back(k);
  for (const auto& [id, recs] : by_identity) {
    if (recs.size() < 2) continue;
    std::size_t best = recs.front();
    for (std::size_t k : recs)
      if (h.records[k].confidence > h.records[best].confidence) best = k;
    const double peak = h.records[best].confidence;
    const int peak_frame = h.records[best].frame;
    for (std::size_t k : recs) {
      auto& r = h.records[k];
      r.confidence = std::max(r.confidence, peak * std::pow(decay, std::abs(r.frame - peak_frame)));
    }
  }
  return h;
}

}  // namespace mtmct
