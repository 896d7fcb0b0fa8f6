#pragma once

// Co-visibility clustering, walkability-constrained probability rasters and
// the camera-level Markov transfer model.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <tuple>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mtmct/errors.hpp"
#include "mtmct/semantic_map.hpp"

namespace mtmct {

struct Cluster {
  std::vector<std::size_t> members;  // indices into the FramePosResult span, ascending
  CellIndex anchor;
};

struct ClusterSet {
  std::vector<Cluster> clusters;
};

/// Groups detections of different cameras that sit close together in a zone
/// both cameras can see. Pairs are merged nearest-first, and a merge that
/// would put two detections of one camera into a group is skipped.
inline ClusterSet cluster_covisible(std::span<const FramePosResult> fpr, const RasterMap& map, double radius_cells) {
  const std::size_t n = fpr.size();
  const double radius = radius_cells * map.cell_size;

  struct Pair {
    double dist;
    std::size_t a, b;
  };
  std::vector<Pair> pairs;
  auto sees = [](const FramePosResult& r, CameraId cam) {
    return std::binary_search(r.covisible.begin(), r.covisible.end(), cam);
  };
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const CameraId ca = fpr[a].detection.camera_id;
      const CameraId cb = fpr[b].detection.camera_id;
      if (ca == cb) continue;
      if (!(sees(fpr[a], ca) && sees(fpr[a], cb) && sees(fpr[b], ca) && sees(fpr[b], cb))) continue;
      const double d = distance(fpr[a].ground, fpr[b].ground);
      if (d <= radius) pairs.push_back({d, a, b});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
    return std::tie(x.dist, x.a, x.b) < std::tie(y.dist, y.a, y.b);
  });

  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::vector<std::vector<CameraId>> cams(n);
  for (std::size_t k = 0; k < n; ++k) cams[k] = {fpr[k].detection.camera_id};
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& p : pairs) {
    std::size_t ra = find(p.a);
    std::size_t rb = find(p.b);
    if (ra == rb) continue;
    const bool overlap = std::any_of(cams[ra].begin(), cams[ra].end(), [&](CameraId c) {
      return std::find(cams[rb].begin(), cams[rb].end(), c) != cams[rb].end();
    });
    if (overlap) continue;
    if (rb < ra) std::swap(ra, rb);
    parent[rb] = ra;
    cams[ra].insert(cams[ra].end(), cams[rb].begin(), cams[rb].end());
  }

  ClusterSet out;
  std::vector<int> slot(n, -1);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t r = find(k);
    if (slot[r] < 0) {
      slot[r] = static_cast<int>(out.clusters.size());
      out.clusters.push_back({{}, fpr[k].cell});
    }
    out.clusters[static_cast<std::size_t>(slot[r])].members.push_back(k);
  }
  return out;
}

/// 3x3 probability window around a cell; zero on blocked or off-grid cells.
struct ProbRaster {
  CellIndex center;
  std::array<double, 9> values{};

  double at(int di, int dj) const { return values[static_cast<std::size_t>((dj + 1) * 3 + (di + 1))]; }
  /// Mass assigned to an absolute cell; 0 outside the window.
  double mass(const CellIndex& c) const {
    const int di = c.i - center.i;
    const int dj = c.j - center.j;
    if (std::abs(di) > 1 || std::abs(dj) > 1) return 0.0;
    return at(di, dj);
  }
  bool covers(const CellIndex& c) const { return std::abs(c.i - center.i) <= 1 && std::abs(c.j - center.j) <= 1; }
  double max_value() const { return *std::max_element(values.begin(), values.end()); }
};

inline ProbRaster probability_raster(const CellIndex& cell, const RasterMap& map, double sigma_cells) {
  if (!map.in_bounds(cell)) throw OffMapError("probability raster centered off the map");
  ProbRaster r;
  r.center = cell;
  double total = 0.0;
  for (int dj = -1; dj <= 1; ++dj) {
    for (int di = -1; di <= 1; ++di) {
      const CellIndex c{cell.i + di, cell.j + dj};
      double w = 0.0;
      if (map.walkable(c)) w = std::exp(-static_cast<double>(di * di + dj * dj) / (2.0 * sigma_cells * sigma_cells));
      r.values[static_cast<std::size_t>((dj + 1) * 3 + (di + 1))] = w;
      total += w;
    }
  }
  if (!(total > 0.0)) throw DegenerateRasterError("no walkable cell in the 3x3 window");
  for (double& v : r.values) v /= total;
  return r;
}

struct TransferMatrix {
  std::vector<CameraId> camera_ids;  // row/column order
  Eigen::MatrixXd p;
  int steps = 1;

  int n() const { return static_cast<int>(camera_ids.size()); }
  int index_of(CameraId id) const {
    for (std::size_t k = 0; k < camera_ids.size(); ++k)
      if (camera_ids[k] == id) return static_cast<int>(k);
    throw ModelError("camera " + std::to_string(id) + " not in transfer matrix");
  }
};

/// One-step camera transfer matrix. Row i spreads (1 - stay_prob) over the
/// outgoing edges of camera i in proportion to their weights.
inline TransferMatrix build_transfer_matrix(std::span<const CameraId> camera_ids,
                                            std::span<const AdjacencyEdge> adjacency, double stay_prob = 0.0) {
  if (adjacency.empty()) throw ModelError("camera adjacency is empty");
  if (stay_prob < 0.0 || stay_prob > 1.0) throw ModelError("stay probability outside [0,1]");
  TransferMatrix t;
  t.camera_ids.assign(camera_ids.begin(), camera_ids.end());
  std::sort(t.camera_ids.begin(), t.camera_ids.end());
  const int n = t.n();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (const auto& e : adjacency) {
    if (e.weight < 0.0) throw ModelError("negative edge weight");
    w(t.index_of(e.from), t.index_of(e.to)) += e.weight;
  }
  t.p = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const double out = w.row(i).sum();
    if (out > 0.0) {
      t.p.row(i) = (1.0 - stay_prob) * w.row(i) / out;
      t.p(i, i) += stay_prob;
    } else if (stay_prob > 0.0) {
      t.p(i, i) = 1.0;
    } else {
      throw ModelError("camera " + std::to_string(t.camera_ids[static_cast<std::size_t>(i)]) +
                       " has no outgoing edge and zero stay probability");
    }
  }
  return t;
}

inline TransferMatrix build_transfer_matrix(const RasterMap& map) {
  return build_transfer_matrix(map.camera_ids, map.adjacency, map.stay_prob);
}

/// P^N by repeated squaring; N = 0 gives the identity.
inline TransferMatrix n_step(const TransferMatrix& one_step, int steps) {
  if (steps < 0) throw ModelError("negative step count");
  TransferMatrix out = one_step;
  out.steps = steps;
  Eigen::MatrixXd result = Eigen::MatrixXd::Identity(one_step.n(), one_step.n());
  Eigen::MatrixXd base = one_step.p;
  for (int e = steps; e > 0; e >>= 1) {
    if (e & 1) result = result * base;
    if (e > 1) base = base * base;
  }
  out.p = std::move(result);
  return out;
}

struct Reappearance {
  CameraId camera = 0;
  double score = 0.0;
  int best_steps = 0;  // smallest N reaching the score
};

/// Cameras ranked by max over 1 <= N <= n_max of P_ij(N). Ties go to the camera
/// reached in fewer steps, then to the lower camera id.
inline std::vector<Reappearance> predict_reappearance(CameraId from, const TransferMatrix& one_step, int n_max) {
  const int i = one_step.index_of(from);
  std::vector<Reappearance> out;
  for (CameraId c : one_step.camera_ids) out.push_back({c, 0.0, 0});
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(one_step.n(), one_step.n());
  for (int steps = 1; steps <= std::max(1, n_max); ++steps) {
    power = power * one_step.p;
    for (int j = 0; j < one_step.n(); ++j) {
      auto& r = out[static_cast<std::size_t>(j)];
      if (power(i, j) > r.score) {
        r.score = power(i, j);
        r.best_steps = steps;
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const Reappearance& a, const Reappearance& b) {
    if (a.score != b.score) return a.score > b.score;
    const int sa = a.best_steps == 0 ? std::numeric_limits<int>::max() : a.best_steps;
    const int sb = b.best_steps == 0 ? std::numeric_limits<int>::max() : b.best_steps;
    if (sa != sb) return sa < sb;
    return a.camera < b.camera;
  });
  return out;
}

}  // namespace mtmct
