#pragma once

// Space-time logic: frame-to-frame assignment inside one camera, identity
// alignment across overlapping views, and tracklet linking across views
// through a global graph solved as a min-cost flow.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <queue>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mtmct/assignment.hpp"
#include "mtmct/errors.hpp"
#include "mtmct/feature_matching.hpp"
#include "mtmct/semantic_map.hpp"
#include "mtmct/spatial_semantics.hpp"

namespace mtmct {

// ---------------------------------------------------------------------------
// Single-camera frame assignment

struct AssignParams {
  double w_dist = 0.5;
  double w_app = 0.5;
  double gate_cells = 3.0;
  /// Pairs whose appearance similarity falls below this are forbidden too.
  /// The default (-1) never triggers.
  double min_similarity = -1.0;
};

/// What the assignment sees of a track or a detection.
struct AssignEndpoint {
  Vec2 ground;
  std::vector<double> appearance;  // empty: no appearance term
};

/// w_dist * d / gate + w_app * (1 - P_a); +inf beyond the gate or below
/// the similarity floor.
inline Eigen::MatrixXd frame_cost_matrix(std::span<const AssignEndpoint> tracks, std::span<const AssignEndpoint> dets,
                                         const AssignParams& params, double cell_size) {
  const double gate = params.gate_cells * cell_size;
  Eigen::MatrixXd cost(static_cast<Eigen::Index>(tracks.size()), static_cast<Eigen::Index>(dets.size()));
  for (std::size_t r = 0; r < tracks.size(); ++r) {
    for (std::size_t c = 0; c < dets.size(); ++c) {
      const double d = distance(tracks[r].ground, dets[c].ground);
      if (d > gate) {
        cost(r, c) = std::numeric_limits<double>::infinity();
        continue;
      }
      double app = 0.0;
      if (!tracks[r].appearance.empty() && !dets[c].appearance.empty()) {
        const double s = appearance_similarity(tracks[r].appearance, dets[c].appearance);
        if (s < params.min_similarity) {
          cost(r, c) = std::numeric_limits<double>::infinity();
          continue;
        }
        app = 1.0 - s;
      }
      cost(r, c) = params.w_dist * d / gate + params.w_app * app;
    }
  }
  return cost;
}

struct FrameMatch {
  int track = 0;
  int detection = 0;
  double cost = 0.0;
};

struct FrameAssignment {
  std::vector<FrameMatch> matches;
  std::vector<int> births;            // detections left unmatched
  std::vector<int> unmatched_tracks;  // candidates for closing after the miss tolerance
  double total_cost = 0.0;
};

inline FrameAssignment frame_assign(const Eigen::MatrixXd& cost) {
  const Assignment a = solve_assignment(cost);
  FrameAssignment out;
  out.total_cost = a.total_cost;
  for (int r = 0; r < static_cast<int>(a.row_to_col.size()); ++r) {
    if (a.row_to_col[r] >= 0)
      out.matches.push_back({r, a.row_to_col[r], cost(r, a.row_to_col[r])});
    else
      out.unmatched_tracks.push_back(r);
  }
  for (int c = 0; c < static_cast<int>(a.col_to_row.size()); ++c)
    if (a.col_to_row[c] < 0) out.births.push_back(c);
  return out;
}

inline FrameAssignment frame_assign(std::span<const AssignEndpoint> tracks, std::span<const AssignEndpoint> dets,
                                    const AssignParams& params, double cell_size) {
  return frame_assign(frame_cost_matrix(tracks, dets, params, cell_size));
}

/// Largest in-gate cost, used to turn an assignment cost into a similarity.
inline double max_assign_cost(const AssignParams& params) { return params.w_dist + 2.0 * params.w_app; }

// ---------------------------------------------------------------------------
// Overlapping-view alignment

struct AlignLabel {
  std::optional<IdentityId> identity;
  double confidence = 0.0;
};

struct AlignAction {
  std::size_t member = 0;  // index into the FramePosResult span
  IdentityId identity = 0;
  double confidence = 0.0;
};

/// Detections of one cluster that pair up across cameras (nearest pairs under
/// `threshold` metres) share one identity: the one held with the highest
/// confidence, older (lower) identity on ties. Every paired detection takes
/// the pair's maximum confidence.
inline std::vector<AlignAction> align_overlapping(const ClusterSet& clusters, std::span<const FramePosResult> fpr,
                                                  std::span<const AlignLabel> labels, double threshold) {
  std::vector<AlignAction> actions;
  for (const auto& cluster : clusters.clusters) {
    const auto& m = cluster.members;
    if (m.size() < 2) continue;
    struct Pair {
      double dist;
      std::size_t a, b;
    };
    std::vector<Pair> pairs;
    for (std::size_t x = 0; x < m.size(); ++x)
      for (std::size_t y = x + 1; y < m.size(); ++y) {
        if (fpr[m[x]].detection.camera_id == fpr[m[y]].detection.camera_id) continue;
        const double d = distance(fpr[m[x]].ground, fpr[m[y]].ground);
        if (d < threshold) pairs.push_back({d, x, y});
      }
    std::sort(pairs.begin(), pairs.end(),
              [](const Pair& p, const Pair& q) { return std::tie(p.dist, p.a, p.b) < std::tie(q.dist, q.a, q.b); });
    // A camera pair contributes only its nearest detection pair.
    std::vector<std::pair<CameraId, CameraId>> used;
    std::vector<std::size_t> group(m.size());
    std::iota(group.begin(), group.end(), 0);
    auto find = [&](std::size_t x) {
      while (group[x] != x) x = group[x] = group[group[x]];
      return x;
    };
    for (const auto& p : pairs) {
      const std::pair<CameraId, CameraId> key = std::minmax(fpr[m[p.a]].detection.camera_id, fpr[m[p.b]].detection.camera_id);
      if (std::find(used.begin(), used.end(), key) != used.end()) continue;
      used.push_back(key);
      const std::size_t ra = find(p.a), rb = find(p.b);
      if (ra != rb) group[std::max(ra, rb)] = std::min(ra, rb);
    }
    std::map<std::size_t, std::vector<std::size_t>> groups;
    for (std::size_t x = 0; x < m.size(); ++x) groups[find(x)].push_back(x);
    for (const auto& [root, members] : groups) {
      if (members.size() < 2) continue;
      std::optional<IdentityId> winner;
      double winner_conf = -1.0;
      double max_conf = 0.0;
      for (std::size_t x : members) {
        const AlignLabel& l = labels[m[x]];
        max_conf = std::max(max_conf, l.confidence);
        if (!l.identity) continue;
        if (!winner || l.confidence > winner_conf || (l.confidence == winner_conf && *l.identity < *winner)) {
          winner = l.identity;
          winner_conf = l.confidence;
        }
      }
      if (!winner) continue;
      for (std::size_t x : members) {
        const AlignLabel& l = labels[m[x]];
        if (l.identity != winner || l.confidence != max_conf) actions.push_back({m[x], *winner, max_conf});
      }
    }
  }
  std::sort(actions.begin(), actions.end(), [](const AlignAction& a, const AlignAction& b) { return a.member < b.member; });
  return actions;
}

// ---------------------------------------------------------------------------
// Tracklets and the transit model

struct Tracklet {
  int tracklet_id = 0;
  CameraId camera_id = 0;      // camera at the first detection
  CameraId end_camera_id = 0;  // camera at the last detection
  IdentityId identity = 0;
  double t_start = 0.0;  // seconds
  double t_end = 0.0;
  int tick_start = 0;  // frame ticks
  int tick_end = 0;
  std::vector<std::size_t> detections;  // caller-owned record references, time order
  std::vector<double> alphas;           // one per tick
  std::vector<double> mean_embedding;
  CellIndex start_cell;
  CellIndex end_cell;
};

inline constexpr double kTransitFloor = 1e-6;

class TransitModel {
 public:
  struct PairModel {
    bool histogram = false;
    double mean = 0.0;
    double std = 1.0;
    double bin_width = 1.0;
    std::vector<double> density;  // per bin, integrates to 1 over [0, bins*bin_width)
  };

  void set_gaussian(CameraId from, CameraId to, double mean, double std) {
    PairModel m;
    m.mean = mean;
    m.std = std::max(std, 1e-3);
    pairs_[{from, to}] = m;
  }

  /// Laplace-smoothed histogram of observed transit times over [0, range_s).
  void set_histogram(CameraId from, CameraId to, std::span<const double> samples, double bin_width, double range_s) {
    if (!(bin_width > 0.0) || !(range_s > 0.0)) throw ModelError("histogram bin width and range must be positive");
    const auto bins = static_cast<std::size_t>(std::ceil(range_s / bin_width));
    std::vector<double> counts(bins, 1.0);
    double total = static_cast<double>(bins);
    for (double s : samples) {
      if (s < 0.0 || s >= bins * bin_width) continue;
      counts[static_cast<std::size_t>(s / bin_width)] += 1.0;
      total += 1.0;
    }
    PairModel m;
    m.histogram = true;
    m.bin_width = bin_width;
    m.density.resize(bins);
    for (std::size_t b = 0; b < bins; ++b) m.density[b] = counts[b] / (total * bin_width);
    pairs_[{from, to}] = m;
  }

  bool has_pair(CameraId from, CameraId to) const { return pairs_.count({from, to}) != 0; }
  const PairModel& pair(CameraId from, CameraId to) const { return pairs_.at({from, to}); }

  /// Density at `dt`, floored; 0 when dt <= 0, the floor for unknown pairs.
  double density(CameraId from, CameraId to, double dt) const {
    if (!(dt > 0.0)) return 0.0;
    auto it = pairs_.find({from, to});
    if (it == pairs_.end()) return kTransitFloor;
    const PairModel& m = it->second;
    double v = 0.0;
    if (m.histogram) {
      const auto b = static_cast<std::size_t>(dt / m.bin_width);
      v = b < m.density.size() ? m.density[b] : 0.0;
    } else {
      const double z = (dt - m.mean) / m.std;
      v = std::exp(-0.5 * z * z) / (m.std * std::sqrt(2.0 * std::acos(-1.0)));
    }
    return std::max(v, kTransitFloor);
  }

  static TransitModel from_adjacency(std::span<const AdjacencyEdge> edges) {
    TransitModel t;
    for (const auto& e : edges) t.set_gaussian(e.from, e.to, e.mean_transit_s, e.std_s);
    return t;
  }

 private:
  std::map<std::pair<CameraId, CameraId>, PairModel> pairs_;
};

inline double transit_probability(const Tracklet& from, const Tracklet& to, const TransitModel& model) {
  return model.density(from.end_camera_id, to.camera_id, to.t_start - from.t_end);
}

inline constexpr double kConfidenceEps = 1e-4;

/// Sum of per-tick similarities over the span in ticks, clamped to [eps, 1-eps].
/// A tracklet with a single tick falls back to its only alpha.
inline double tracklet_confidence(std::span<const double> alphas, int tick_start, int tick_end) {
  if (alphas.empty()) return kConfidenceEps;
  double c = 0.0;
  if (tick_end <= tick_start) {
    c = alphas.front();
  } else {
    c = std::accumulate(alphas.begin(), alphas.end(), 0.0) / static_cast<double>(tick_end - tick_start);
  }
  return std::clamp(c, kConfidenceEps, 1.0 - kConfidenceEps);
}

inline double tracklet_confidence(const Tracklet& t) { return tracklet_confidence(t.alphas, t.tick_start, t.tick_end); }

/// Negative log-odds of the tracklet being real.
inline double tracklet_weight(double c) { return -std::log(c / (1.0 - c)); }

inline constexpr double kLinkFloor = 1e-6;

inline double link_weight(double p_a, double p_t, double k_a = 1.0, double k_t = 1.0) {
  p_a = std::clamp(p_a, kLinkFloor, 1.0);
  p_t = std::clamp(p_t, kLinkFloor, 1.0);
  return -k_a * std::log(p_a) - k_t * std::log(p_t);
}

// ---------------------------------------------------------------------------
// Global graph and min-cost flow

struct GraphParams {
  double k_a = 1.0;
  double k_t = 1.0;
  double link_gate_s = 60.0;
  /// Cost on each source->start and end->sink edge. Zero reproduces plain
  /// zero-weight terminal edges, under which a link never pays off because
  /// every link weight is non-negative.
  double entry_exit_cost = 0.0;
};

struct GraphEdge {
  int from = 0;  // tracklet index (end node)
  int to = 0;    // tracklet index (start node)
  double weight = 0.0;
};

struct GlobalGraph {
  std::vector<double> tracklet_weights;  // one internal edge per tracklet
  std::vector<GraphEdge> links;          // end(from) -> start(to), to strictly later
  double entry_exit_cost = 0.0;
};

/// Link weights from cosine similarity of mean embeddings and the transit model.
inline GlobalGraph build_global_graph(std::span<const Tracklet> tracklets, const TransitModel& model,
                                      const GraphParams& params) {
  GlobalGraph g;
  g.entry_exit_cost = params.entry_exit_cost;
  for (const auto& t : tracklets) g.tracklet_weights.push_back(tracklet_weight(tracklet_confidence(t)));
  for (int i = 0; i < static_cast<int>(tracklets.size()); ++i) {
    for (int j = 0; j < static_cast<int>(tracklets.size()); ++j) {
      const double dt = tracklets[j].t_start - tracklets[i].t_end;
      if (!(dt > 0.0) || dt > params.link_gate_s) continue;
      double p_a = 1.0;
      if (!tracklets[i].mean_embedding.empty() && !tracklets[j].mean_embedding.empty())
        p_a = appearance_similarity(tracklets[i].mean_embedding, tracklets[j].mean_embedding);
      const double p_t = transit_probability(tracklets[i], tracklets[j], model);
      g.links.push_back({i, j, link_weight(p_a, p_t, params.k_a, params.k_t)});
    }
  }
  return g;
}

struct TrajectorySet {
  std::vector<std::vector<int>> trajectories;  // tracklet indices in time order
  std::vector<IdentityId> identities;          // one per trajectory, from its earliest tracklet
  std::vector<int> unassigned;                 // tracklets on no path (negative odds)
  double total_cost = 0.0;
};

namespace detail {

class MinCostFlow {
 public:
  struct Edge {
    int to;
    int cap;
    double cost;
  };

  explicit MinCostFlow(int nodes) : adj_(static_cast<std::size_t>(nodes)) {}

  int add_edge(int from, int to, double cost) {
    adj_[from].push_back(static_cast<int>(edges_.size()));
    edges_.push_back({to, 1, cost});
    adj_[to].push_back(static_cast<int>(edges_.size()));
    edges_.push_back({from, 0, -cost});
    return static_cast<int>(edges_.size()) - 2;
  }

  const Edge& edge(int e) const { return edges_[e]; }
  const std::vector<int>& out_edges(int node) const { return adj_[node]; }

  /// Bellman-Ford potentials; the construction is a DAG so this terminates in
  /// one pass of relaxations per layer. A late relaxation means a negative cycle.
  void init_potentials(int source) {
    const std::size_t n = adj_.size();
    potential_.assign(n, std::numeric_limits<double>::infinity());
    potential_[source] = 0.0;
    for (std::size_t round = 0; round < n; ++round) {
      bool changed = false;
      for (std::size_t u = 0; u < n; ++u) {
        if (!std::isfinite(potential_[u])) continue;
        for (int e : adj_[u]) {
          const Edge& ed = edges_[e];
          if (ed.cap > 0 && potential_[u] + ed.cost < potential_[ed.to] - 1e-12) {
            potential_[ed.to] = potential_[u] + ed.cost;
            changed = true;
          }
        }
      }
      if (!changed) return;
    }
    throw InternalError("negative cycle in the tracklet graph");
  }

  /// Pushes one unit along the cheapest residual path; returns its cost or
  /// nullopt when the sink is unreachable.
  std::optional<double> augment(int source, int sink) {
    const std::size_t n = adj_.size();
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(n, kInf);
    std::vector<int> via(n, -1);
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[source] = 0.0;
    pq.push({0.0, source});
    while (!pq.empty()) {
      auto [d, u] = pq.top();
      pq.pop();
      if (d > dist[u]) continue;
      for (int e : adj_[u]) {
        const Edge& ed = edges_[e];
        if (ed.cap <= 0 || !std::isfinite(potential_[ed.to])) continue;
        const double reduced = std::max(0.0, ed.cost + potential_[u] - potential_[ed.to]);
        if (d + reduced < dist[ed.to]) {
          dist[ed.to] = d + reduced;
          via[ed.to] = e;
          pq.push({dist[ed.to], ed.to});
        }
      }
    }
    if (!std::isfinite(dist[sink])) return std::nullopt;
    double cost = 0.0;
    for (int v = sink; v != source;) {
      const int e = via[v];
      edges_[e].cap -= 1;
      edges_[e ^ 1].cap += 1;
      cost += edges_[e].cost;
      v = edges_[e ^ 1].to;
    }
    for (std::size_t v = 0; v < n; ++v)
      if (std::isfinite(dist[v])) potential_[v] += dist[v];
    return cost;
  }

 private:
  std::vector<std::vector<int>> adj_;
  std::vector<Edge> edges_;
  std::vector<double> potential_;
};

}  // namespace detail

/// Solves the tracklet graph for the cheapest set of disjoint trajectories.
/// Flow amounts f = 1..n are swept with successive shortest paths and the
/// cheapest total is kept; `identities` of the input propagate from the first
/// tracklet of each path.
inline TrajectorySet solve_global_graph(const GlobalGraph& graph, std::span<const IdentityId> identities = {}) {
  const int n = static_cast<int>(graph.tracklet_weights.size());
  TrajectorySet out;
  if (n == 0) return out;

  auto build = [&](detail::MinCostFlow& flow, std::vector<int>& internal) {
    const int s = 0, t = 1;
    internal.assign(n, -1);
    for (int k = 0; k < n; ++k) {
      flow.add_edge(s, 2 + 2 * k, graph.entry_exit_cost);
      internal[k] = flow.add_edge(2 + 2 * k, 3 + 2 * k, graph.tracklet_weights[k]);
      flow.add_edge(3 + 2 * k, t, graph.entry_exit_cost);
    }
    for (const auto& l : graph.links) {
      if (!std::isfinite(l.weight)) throw InternalError("non-finite link weight");
      flow.add_edge(3 + 2 * l.from, 2 + 2 * l.to, l.weight);
    }
    flow.init_potentials(s);
  };

  // Sweep flow amounts and remember the cheapest cumulative cost.
  int best_f = 0;
  double best_cost = 0.0;
  {
    detail::MinCostFlow flow(2 + 2 * n);
    std::vector<int> internal;
    build(flow, internal);
    double cumulative = 0.0;
    for (int f = 1; f <= n; ++f) {
      const auto c = flow.augment(0, 1);
      if (!c) break;
      cumulative += *c;
      if (cumulative < best_cost - 1e-12) {
        best_cost = cumulative;
        best_f = f;
      }
    }
  }

  detail::MinCostFlow flow(2 + 2 * n);
  std::vector<int> internal;
  build(flow, internal);
  for (int f = 0; f < best_f; ++f) flow.augment(0, 1);

  std::vector<int> next(n, -1);
  std::vector<char> used(n, 0), has_pred(n, 0);
  for (int k = 0; k < n; ++k) {
    if (flow.edge(internal[k]).cap != 0) continue;
    used[k] = 1;
    for (int e : flow.out_edges(3 + 2 * k)) {
      const auto& ed = flow.edge(e);
      if ((e & 1) == 0 && ed.cap == 0 && ed.to >= 2) {
        next[k] = (ed.to - 2) / 2;
        has_pred[next[k]] = 1;
      }
    }
  }
  for (int k = 0; k < n; ++k) {
    if (!used[k]) {
      out.unassigned.push_back(k);
      continue;
    }
    if (has_pred[k]) continue;
    std::vector<int> path;
    for (int v = k; v >= 0; v = next[v]) path.push_back(v);
    out.trajectories.push_back(path);
    out.identities.push_back(identities.empty() ? path.front() : identities[path.front()]);
  }
  out.total_cost = best_cost;
  return out;
}

inline TrajectorySet solve_global_graph(std::span<const Tracklet> tracklets, const TransitModel& model,
                                        const GraphParams& params) {
  std::vector<IdentityId> ids;
  for (const auto& t : tracklets) ids.push_back(t.identity);
  return solve_global_graph(build_global_graph(tracklets, model, params), ids);
}

}  // namespace mtmct
