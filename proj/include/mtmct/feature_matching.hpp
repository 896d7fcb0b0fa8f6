#pragma once

// Global appearance library keyed by identity, raster-local candidate
// selection and cosine matching.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "mtmct/errors.hpp"
#include "mtmct/semantic_map.hpp"
#include "mtmct/spatial_semantics.hpp"

namespace mtmct {

using IdentityId = int;

template <class T, class U>
double appearance_similarity(std::span<const T> x, std::span<const U> y) {
  if (x.size() != y.size())
    throw DimError("vector lengths differ: " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
  double dot = 0.0, nx = 0.0, ny = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double a = static_cast<double>(x[k]);
    const double b = static_cast<double>(y[k]);
    dot += a * b;
    nx += a * a;
    ny += b * b;
  }
  if (!(nx > 0.0) || !(ny > 0.0)) throw NormError("zero-norm vector in cosine similarity");
  return std::clamp(dot / (std::sqrt(nx) * std::sqrt(ny)), -1.0, 1.0);
}

inline double appearance_similarity(const std::vector<double>& x, const std::vector<double>& y) {
  return appearance_similarity(std::span<const double>(x), std::span<const double>(y));
}

template <class T>
std::vector<double> normalized(std::span<const T> v) {
  double n2 = 0.0;
  for (T x : v) n2 += static_cast<double>(x) * static_cast<double>(x);
  if (!(n2 > 0.0)) throw NormError("cannot normalize a zero vector");
  const double inv = 1.0 / std::sqrt(n2);
  std::vector<double> out(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = static_cast<double>(v[k]) * inv;
  return out;
}

struct BankEntry {
  std::vector<double> centroid;  // unit length
  int count = 0;
  CellIndex last_cell;
  double last_seen = 0.0;
  CameraId last_camera = 0;
};

class FeatureBank {
 public:
  explicit FeatureBank(double momentum = 0.1) : momentum_(momentum) {
    if (!(momentum > 0.0 && momentum <= 1.0)) throw ModelError("bank momentum must lie in (0,1]");
  }

  double momentum() const { return momentum_; }
  int dim() const { return dim_; }
  bool contains(IdentityId id) const { return entries_.count(id) != 0; }
  const BankEntry& at(IdentityId id) const { return entries_.at(id); }
  const std::map<IdentityId, BankEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  template <class T>
  void update(IdentityId id, std::span<const T> embedding, const CellIndex& cell, double t, CameraId camera) {
    if (dim_ != 0 && static_cast<int>(embedding.size()) != dim_) throw DimError("embedding length differs from bank dim");
    std::vector<double> x = normalized(embedding);
    dim_ = static_cast<int>(x.size());
    auto [it, inserted] = entries_.try_emplace(id);
    BankEntry& e = it->second;
    if (inserted) {
      e.centroid = std::move(x);
      e.count = 1;
    } else {
      for (std::size_t k = 0; k < x.size(); ++k) e.centroid[k] = (1.0 - momentum_) * e.centroid[k] + momentum_ * x[k];
      e.centroid = normalized(std::span<const double>(e.centroid));
      ++e.count;
    }
    if (inserted || t >= e.last_seen) {
      e.last_cell = cell;
      e.last_seen = t;
      e.last_camera = camera;
    }
  }

  /// Folds `from` into `into` (weighted by sample counts) and drops `from`.
  void merge(IdentityId from, IdentityId into) {
    if (from == into || !contains(from)) return;
    const BankEntry src = entries_.at(from);
    entries_.erase(from);
    auto [it, inserted] = entries_.try_emplace(into, src);
    if (inserted) return;
    BankEntry& dst = it->second;
    const double total = dst.count + src.count;
    for (std::size_t k = 0; k < dst.centroid.size(); ++k)
      dst.centroid[k] = (dst.count * dst.centroid[k] + src.count * src.centroid[k]) / total;
    dst.centroid = normalized(std::span<const double>(dst.centroid));
    dst.count += src.count;
    if (src.last_seen > dst.last_seen) {
      dst.last_seen = src.last_seen;
      dst.last_cell = src.last_cell;
      dst.last_camera = src.last_camera;
    }
  }

 private:
  double momentum_;
  int dim_ = 0;
  std::map<IdentityId, BankEntry> entries_;
};

template <class T>
FeatureBank& update_bank(FeatureBank& bank, IdentityId id, std::span<const T> embedding, const CellIndex& cell, double t,
                         CameraId camera = 0) {
  bank.update(id, embedding, cell, t, camera);
  return bank;
}

struct LocalSubsetParams {
  int radius_cells = 3;
  double max_age_s = 30.0;
  double handover_grace_s = 1.0;
  int handover_top_k = 3;
  int n_max = 5;
};

struct Candidate {
  IdentityId identity = 0;
  bool via_handover = false;
  double reappearance = 1.0;  // transfer score for handover candidates, 1 for local ones
};

/// Identities worth comparing against a detection at `cell` seen by `camera`:
/// recent neighbours in the same connected region, plus stale identities whose
/// last camera predicts reappearance at `camera`. A candidate whose last cell
/// falls inside `raster` with zero mass is dropped.
inline std::vector<Candidate> local_subset(const FeatureBank& bank, const CellIndex& cell, const RasterMap& map,
                                           const LocalSubsetParams& params, double now, CameraId camera,
                                           const TransferMatrix* transfer = nullptr,
                                           const ProbRaster* raster = nullptr) {
  std::vector<Candidate> out;
  const int region = map.at(cell).connected_region;
  std::map<CameraId, std::vector<Reappearance>> ranking_cache;
  for (const auto& [id, e] : bank.entries()) {
    const double age = now - e.last_seen;
    if (age > params.max_age_s) continue;
    if (raster && raster->covers(e.last_cell) && raster->mass(e.last_cell) <= 0.0) continue;
    const bool near = chebyshev(e.last_cell, cell) <= params.radius_cells && region != 0 &&
                      map.in_bounds(e.last_cell) && map.at(e.last_cell).connected_region == region;
    if (near) {
      out.push_back({id, false, 1.0});
      continue;
    }
    if (transfer == nullptr || age <= params.handover_grace_s) continue;
    auto it = ranking_cache.find(e.last_camera);
    if (it == ranking_cache.end())
      it = ranking_cache.emplace(e.last_camera, predict_reappearance(e.last_camera, *transfer, params.n_max)).first;
    const auto& ranking = it->second;
    const int k = std::min<int>(params.handover_top_k, static_cast<int>(ranking.size()));
    for (int r = 0; r < k; ++r) {
      if (ranking[r].camera == camera && ranking[r].score > 0.0) {
        out.push_back({id, true, ranking[r].score});
        break;
      }
    }
  }
  return out;
}

struct MatchResult {
  std::optional<IdentityId> best;
  double similarity = -1.0;  // best P_a seen, even when below threshold
  int examined = 0;
};

template <class T>
MatchResult match_features(std::span<const T> query, std::span<const IdentityId> candidates, const FeatureBank& bank,
                           double accept_threshold) {
  MatchResult r;
  std::optional<IdentityId> arg;
  double best_t = 0.0;
  for (IdentityId id : candidates) {
    const BankEntry& e = bank.at(id);
    const double s = appearance_similarity(query, std::span<const double>(e.centroid));
    ++r.examined;
    const bool better = !arg || s > r.similarity ||
                        (s == r.similarity && (e.last_seen > best_t || (e.last_seen == best_t && id < *arg)));
    if (better) {
      arg = id;
      r.similarity = s;
      best_t = e.last_seen;
    }
  }
  if (arg && r.similarity >= accept_threshold) r.best = arg;
  return r;
}

}  // namespace mtmct
