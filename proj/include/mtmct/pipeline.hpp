#pragma once

// End-to-end run: per-frame encoding, clustering, single-camera assignment,
// feature re-identification, overlap alignment, fusion and STCN refinement,
// then the global tracklet graph and the backward relabeling pass.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mtmct/errors.hpp"
#include "mtmct/feature_matching.hpp"
#include "mtmct/geometry_io.hpp"
#include "mtmct/metrics.hpp"
#include "mtmct/retrospective.hpp"
#include "mtmct/semantic_map.hpp"
#include "mtmct/spacetime_logic.hpp"
#include "mtmct/spatial_semantics.hpp"
#include "mtmct/stcn.hpp"
#include "mtmct/synth.hpp"

namespace mtmct {

inline constexpr const char* kVersion = "1.0.0";

struct RunConfig {
  // inputs
  std::string dataset;  // directory with calibration.json, map.json, det/, emb/
  std::string map;
  std::string calibration;
  std::string detections_dir;
  std::string embeddings_dir;
  double fps = 0.0;  // 0: take it from scenario.json, else 10
  std::uint64_t seed = 0;

  bool use_feature = true;
  bool use_logic = true;
  bool use_retrospective = true;

  // map semantics
  double sigma_cells = 1.0;
  double cluster_radius_cells = 3.0;
  int n_max = 5;
  double stay_prob = -1.0;  // negative: the map's value
  double body_to_head = 7.0;

  // feature matching
  double momentum = 0.1;
  double accept_threshold = 0.6;
  int local_radius_cells = 3;
  double max_age_s = 30.0;
  double handover_grace_s = 1.0;
  int handover_top_k = 3;

  // single-camera tracking and logic
  double w_dist = 0.5;
  double w_app = 0.5;
  double gate_cells = 3.0;
  double assign_min_similarity = 0.5;
  int miss_tolerance = 5;
  int min_hits = 3;
  double rematch_window_s = 3.0;
  double track_momentum = 0.3;
  double thresh_scale = 3.0;
  double k_a = 1.0;
  double k_t = 1.0;
  double link_gate_s = 60.0;
  double entry_exit_cost = 1.6;
  double transit_bin_s = 1.0;
  int min_transit_samples = 20;
  double same_camera_mean_s = 2.0;
  double same_camera_std_s = 3.0;

  // STCN and fusion
  int stcn_dim = 64;
  int stcn_bank_m = 4;
  int stcn_dff = 128;
  std::string stcn_weights;
  bool stcn_feedback = false;
  double fuse_threshold = 0.05;
  double lambda_cls = 1.0;
  double lambda_l1 = 1.0;
  double lambda_iou = 1.0;

  // backward pass
  double conf_decay = 0.99;
};

namespace detail {

template <class C, class F>
void visit_config(C& c, F&& f) {
  f("dataset", c.dataset);
  f("map", c.map);
  f("calibration", c.calibration);
  f("detections_dir", c.detections_dir);
  f("embeddings_dir", c.embeddings_dir);
  f("fps", c.fps);
  f("seed", c.seed);
  f("use_feature", c.use_feature);
  f("use_logic", c.use_logic);
  f("use_retrospective", c.use_retrospective);
  f("sigma_cells", c.sigma_cells);
  f("cluster_radius_cells", c.cluster_radius_cells);
  f("n_max", c.n_max);
  f("stay_prob", c.stay_prob);
  f("body_to_head", c.body_to_head);
  f("momentum", c.momentum);
  f("accept_threshold", c.accept_threshold);
  f("local_radius_cells", c.local_radius_cells);
  f("max_age_s", c.max_age_s);
  f("handover_grace_s", c.handover_grace_s);
  f("handover_top_k", c.handover_top_k);
  f("w_dist", c.w_dist);
  f("w_app", c.w_app);
  f("gate_cells", c.gate_cells);
  f("assign_min_similarity", c.assign_min_similarity);
  f("miss_tolerance", c.miss_tolerance);
  f("min_hits", c.min_hits);
  f("rematch_window_s", c.rematch_window_s);
  f("track_momentum", c.track_momentum);
  f("thresh_scale", c.thresh_scale);
  f("k_a", c.k_a);
  f("k_t", c.k_t);
  f("link_gate_s", c.link_gate_s);
  f("entry_exit_cost", c.entry_exit_cost);
  f("transit_bin_s", c.transit_bin_s);
  f("min_transit_samples", c.min_transit_samples);
  f("same_camera_mean_s", c.same_camera_mean_s);
  f("same_camera_std_s", c.same_camera_std_s);
  f("stcn_dim", c.stcn_dim);
  f("stcn_bank_m", c.stcn_bank_m);
  f("stcn_dff", c.stcn_dff);
  f("stcn_weights", c.stcn_weights);
  f("stcn_feedback", c.stcn_feedback);
  f("fuse_threshold", c.fuse_threshold);
  f("lambda_cls", c.lambda_cls);
  f("lambda_l1", c.lambda_l1);
  f("lambda_iou", c.lambda_iou);
  f("conf_decay", c.conf_decay);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace detail

inline nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json j = nlohmann::json::object();
  detail::visit_config(c, [&](const char* key, const auto& v) { j[key] = v; });
  return j;
}

/// Unknown keys are rejected so a typo cannot silently fall back to a default.
/// `retrospective` is accepted as an alias of `use_retrospective`. Relative
/// paths resolve against `base`.
inline RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {}) {
  if (!j.is_object()) throw FormatError("config must be a JSON object");
  RunConfig c;
  std::set<std::string> known;
  detail::visit_config(c, [&](const char* key, auto&) { known.insert(key); });
  for (const auto& [key, value] : j.items())
    if (!known.count(key) && key != "retrospective") throw UsageError("unknown config key '" + key + "'");
  detail::visit_config(c, [&](const char* key, auto& field) {
    const char* src = key;
    if (std::string_view(key) == "use_retrospective" && !j.contains(key) && j.contains("retrospective")) src = "retrospective";
    if (!j.contains(src)) return;
    try {
      field = j.at(src).get<std::decay_t<decltype(field)>>();
    } catch (const nlohmann::json::exception&) {
      throw FormatError(std::string("config key '") + src + "' has the wrong type");
    }
  });
  for (std::string* p : {&c.dataset, &c.map, &c.calibration, &c.detections_dir, &c.embeddings_dir, &c.stcn_weights})
    if (!p->empty() && std::filesystem::path(*p).is_relative() && !base.empty()) *p = (base / *p).lexically_normal().string();
  if (c.min_hits < 1 || c.miss_tolerance < 0 || c.stcn_dim <= 0 || c.stcn_dff <= 0 || c.stcn_bank_m < 0)
    throw UsageError("config: min_hits >= 1, miss_tolerance >= 0 and positive STCN sizes required");
  if (!(c.momentum > 0.0 && c.momentum <= 1.0)) throw UsageError("config: momentum must lie in (0,1]");
  return c;
}

inline RunConfig load_config(const std::string& path) {
  const auto j = detail::parse_json_text(detail::read_file(path), path);
  return config_from_json(j, std::filesystem::path(path).parent_path());
}

inline std::uint64_t config_hash(const RunConfig& c) { return detail::fnv1a64(config_to_json(c).dump()); }

// ---------------------------------------------------------------------------
// Dataset

struct Dataset {
  RasterMap map;
  CameraSet cameras;
  double fps = 10.0;
  std::map<CameraId, std::vector<Detection>> detections;
  std::map<CameraId, std::shared_ptr<const EmbeddingTable>> embeddings;
};

inline Dataset load_dataset(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  const fs::path root = cfg.dataset;
  auto pick = [&](const std::string& explicit_path, const fs::path& fallback) {
    return explicit_path.empty() ? fallback : fs::path(explicit_path);
  };
  Dataset ds;
  ds.cameras = load_calibration(pick(cfg.calibration, root / "calibration.json").string());
  ds.map = load_map(pick(cfg.map, root / "map.json").string(), ds.cameras);
  ds.fps = 10.0;
  if (cfg.fps > 0.0) {
    ds.fps = cfg.fps;
  } else if (fs::exists(root / "scenario.json")) {
    const auto s = detail::parse_json_text(detail::read_file((root / "scenario.json").string()), "scenario.json");
    ds.fps = s.value("fps", 10.0);
  }
  const fs::path det_dir = pick(cfg.detections_dir, root / "det");
  const fs::path emb_dir = pick(cfg.embeddings_dir, root / "emb");
  int dim = -1;
  for (const auto& cam : ds.cameras) {
    const fs::path det = det_dir / camera_file(cam.camera_id, ".csv");
    if (!fs::exists(det)) throw FormatError("detections file missing: " + det.string());
    ds.detections[cam.camera_id] = load_detections(det.string(), cam.camera_id, ds.fps);
    fs::path emb = emb_dir / camera_file(cam.camera_id, ".mcfe");
    if (!fs::exists(emb) && fs::exists(emb_dir / camera_file(cam.camera_id, ".csv"))) emb = emb_dir / camera_file(cam.camera_id, ".csv");
    auto table = std::make_shared<const EmbeddingTable>(load_embeddings(emb.string()));
    if (table->size() < ds.detections[cam.camera_id].size())
      throw FormatError(emb.string() + ": " + std::to_string(table->size()) + " embedding rows for " +
                        std::to_string(ds.detections[cam.camera_id].size()) + " detections");
    if (table->size() > 0) {
      if (dim >= 0 && table->dim() != dim) throw FormatError(emb.string() + ": embedding dim differs between cameras");
      dim = table->dim();
    }
    ds.embeddings[cam.camera_id] = std::move(table);
  }
  return ds;
}

inline Dataset dataset_from_bundle(const DatasetBundle& b) {
  Dataset ds;
  ds.map = b.map;
  ds.cameras = b.cameras;
  ds.fps = b.spec.fps;
  for (const auto& [cam, rows] : b.detections) {
    std::vector<Detection> dets;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      Detection d;
      d.camera_id = cam;
      d.frame_index = rows[k].frame;
      d.timestamp = rows[k].frame / ds.fps;
      d.body_box = rows[k].body_box;
      d.head_box = rows[k].head_box;
      d.confidence = rows[k].confidence;
      d.object_class = rows[k].object_class;
      d.embedding_index = static_cast<int>(k);
      dets.push_back(d);
    }
    std::stable_sort(dets.begin(), dets.end(), [](const Detection& x, const Detection& y) { return x.frame_index < y.frame_index; });
    ds.detections[cam] = std::move(dets);
    ds.embeddings[cam] = std::make_shared<const EmbeddingTable>(b.embeddings.at(cam));
  }
  return ds;
}

inline std::vector<CameraTracks> to_camera_tracks(const std::map<CameraId, std::vector<TrackRow>>& rows) {
  std::vector<CameraTracks> out;
  for (const auto& [cam, r] : rows) out.push_back({cam, r});
  return out;
}

// ---------------------------------------------------------------------------
// Forward pass

struct PipelineResult {
  TrackHistory forward;  // labels as produced frame by frame
  TrackHistory output;   // labels as written
  TrajectorySet trajectories;
  std::vector<Correction> corrections;
  std::map<CameraId, std::vector<TrackRow>> rows;
  std::vector<std::array<int, 3>> global_ids;  // camera, local id, global id
  std::size_t rejected = 0;
  int identities = 0;
  int tracklets = 0;
};

namespace detail {

struct LiveTrack {
  int id = 0;
  CameraId camera = 0;
  std::optional<IdentityId> identity;
  bool young = false;  // identity was minted by this track
  int created_frame = 0;
  int hits = 0;
  int misses = 0;
  int last_frame = -1;
  bool closed = false;
  Vec2 ground;
  CellIndex cell;
  std::vector<double> appearance;  // running unit direction
  std::vector<double> sum;         // sum of unit embeddings
};

struct MatchOutcome {
  IdentityId identity = 0;
  double fused = 0.0;
  bool via_handover = false;
};

class ForwardPass {
 public:
  ForwardPass(const Dataset& ds, const RunConfig& cfg)
      : ds_(ds), cfg_(cfg), bank_(cfg.momentum), queries_(cfg.stcn_dim, cfg.stcn_bank_m) {
    subset_.radius_cells = cfg.local_radius_cells;
    subset_.max_age_s = cfg.max_age_s;
    subset_.handover_grace_s = cfg.handover_grace_s;
    subset_.handover_top_k = cfg.handover_top_k;
    subset_.n_max = cfg.n_max;
    assign_.w_dist = cfg.w_dist;
    assign_.w_app = cfg.w_app;
    assign_.gate_cells = cfg.gate_cells;
    assign_.min_similarity = cfg.assign_min_similarity;
    try {
      const double stay = cfg.stay_prob >= 0.0 ? cfg.stay_prob : ds.map.stay_prob;
      transfer_ = build_transfer_matrix(ds.map.camera_ids, ds.map.adjacency, stay);
    } catch (const ModelError&) {
      transfer_.reset();  // no camera graph: only local candidates
    }
    for (const auto& [cam, table] : ds.embeddings)
      if (table->size() > 0) emb_dim_ = table->dim();
    if (emb_dim_ > 0) {
      encoder_.emplace(emb_dim_, cfg.stcn_dim, cfg.seed * 2 + 11);
      weights_ = cfg.stcn_weights.empty() ? StcnWeights::identity_equivalent(cfg.stcn_dim, cfg.stcn_dff, cfg.seed * 2 + 7)
                                          : StcnWeights::load(cfg.stcn_weights, cfg.stcn_dim, cfg.stcn_dff);
    }
  }

  void run() {
    std::map<int, std::vector<Detection>> frames;
    for (const auto& cam : ds_.cameras)
      for (const auto& d : ds_.detections.at(cam.camera_id)) frames[d.frame_index].push_back(d);
    for (const auto& [f, dets] : frames) step(f, dets);
    history.bank = std::make_shared<const FeatureBank>(bank_);
    history.embeddings = ds_.embeddings;
  }

  TrackHistory history;
  std::vector<double> alphas;  // per history record
  std::map<std::pair<CameraId, CameraId>, std::vector<double>> transit_samples;
  std::size_t rejected = 0;
  int tracklet_count() const { return static_cast<int>(tracks_.size()); }
  int identity_count() const { return next_id_ - 1; }
  FeatureBank& bank() { return bank_; }

 private:
  const Dataset& ds_;
  const RunConfig& cfg_;
  FeatureBank bank_;
  QueryBank queries_;
  std::optional<QueryEncoder> encoder_;
  StcnWeights weights_;
  std::map<IdentityId, Eigen::VectorXd> refined_;
  std::optional<TransferMatrix> transfer_;
  LocalSubsetParams subset_;
  AssignParams assign_;
  std::vector<LiveTrack> tracks_;
  IdentityId next_id_ = 1;
  int emb_dim_ = 0;
  int frame_ = 0;
  double now_ = 0.0;

  bool held_in_camera(CameraId cam, IdentityId id, std::size_t self) const {
    for (std::size_t j = 0; j < tracks_.size(); ++j) {
      const auto& t = tracks_[j];
      if (j != self && !t.closed && t.camera == cam && t.identity == id && t.last_frame == frame_) return true;
    }
    return false;
  }

  bool live_elsewhere(IdentityId id, std::size_t self) const {
    for (std::size_t j = 0; j < tracks_.size(); ++j) {
      const auto& t = tracks_[j];
      if (j != self && !t.closed && t.identity == id && t.last_frame == frame_) return true;
    }
    return false;
  }

  bool held_by_other(IdentityId id, std::size_t self) const {
    for (std::size_t j = 0; j < tracks_.size(); ++j)
      if (j != self && !tracks_[j].closed && tracks_[j].identity == id) return true;
    return false;
  }

  std::optional<MatchOutcome> try_match(std::size_t idx, std::optional<IdentityId> exclude) {
    const LiveTrack& tr = tracks_[idx];
    if (bank_.size() == 0 || tr.sum.empty()) return std::nullopt;
    std::optional<ProbRaster> raster;
    try {
      raster = probability_raster(tr.cell, ds_.map, cfg_.sigma_cells);
    } catch (const DegenerateRasterError&) {
    }
    const auto cands = local_subset(bank_, tr.cell, ds_.map, subset_, now_, tr.camera, transfer_ ? &*transfer_ : nullptr,
                                    raster ? &*raster : nullptr);
    std::vector<IdentityId> ids;
    std::map<IdentityId, Candidate> by_id;
    for (const auto& c : cands) {
      if (exclude && c.identity == *exclude) continue;
      if (held_in_camera(tr.camera, c.identity, idx)) continue;
      if (c.via_handover && live_elsewhere(c.identity, idx)) continue;
      ids.push_back(c.identity);
      by_id[c.identity] = c;
    }
    if (ids.empty()) return std::nullopt;
    const auto query = normalized(std::span<const double>(tr.sum));
    const MatchResult m = match_features(std::span<const double>(query), std::span<const IdentityId>(ids), bank_, cfg_.accept_threshold);
    if (!m.best) return std::nullopt;
    const Candidate& c = by_id.at(*m.best);
    double p_map = 1.0;
    const CellIndex& last = bank_.at(*m.best).last_cell;
    if (raster && raster->covers(last) && raster->max_value() > 0.0) p_map = raster->mass(last) / raster->max_value();
    const FusionResult fr = fuse_probabilities({m.similarity, c.reappearance, p_map}, cfg_.fuse_threshold);
    if (!fr.accept) return std::nullopt;
    return MatchOutcome{*m.best, fr.fused, c.via_handover};
  }

  void note_transit(IdentityId id, CameraId to) {
    if (!bank_.contains(id)) return;
    const BankEntry& e = bank_.at(id);
    const double dt = now_ - e.last_seen;
    if (dt > 0.0 && (e.last_camera != to || dt > cfg_.handover_grace_s)) transit_samples[{e.last_camera, to}].push_back(dt);
  }

  void adopt(std::size_t idx, IdentityId id) {
    LiveTrack& tr = tracks_[idx];
    // A stale track of the same camera holding the identity hands it over.
    for (std::size_t j = 0; j < tracks_.size(); ++j) {
      auto& o = tracks_[j];
      if (j != idx && !o.closed && o.camera == tr.camera && o.identity == id) o.closed = true;
    }
    note_transit(id, tr.camera);
    tr.identity = id;
    tr.young = false;
  }

  /// Moves a track off a young identity it alone held; the bank entry follows.
  void retire_young(std::size_t idx, IdentityId into) {
    LiveTrack& tr = tracks_[idx];
    if (!tr.identity) return;
    const IdentityId old = *tr.identity;
    if (tr.young && old != into && !held_by_other(old, idx)) {
      bank_.merge(old, into);
      queries_.erase(old);
      refined_.erase(old);
    }
  }

  void advance(std::size_t idx, const FramePosResult& r, const std::vector<double>& emb) {
    LiveTrack& tr = tracks_[idx];
    ++tr.hits;
    tr.misses = 0;
    tr.last_frame = frame_;
    tr.ground = r.ground;
    tr.cell = r.cell;
    if (!emb.empty()) {
      if (tr.appearance.empty()) {
        tr.appearance = emb;
        tr.sum.assign(emb.size(), 0.0);
      } else {
        for (std::size_t k = 0; k < emb.size(); ++k)
          tr.appearance[k] = (1.0 - cfg_.track_momentum) * tr.appearance[k] + cfg_.track_momentum * emb[k];
        tr.appearance = normalized(std::span<const double>(tr.appearance));
      }
      for (std::size_t k = 0; k < emb.size(); ++k) tr.sum[k] += emb[k];
    }
  }

  std::vector<double> track_feature(const LiveTrack& tr) const {
    if (!cfg_.stcn_feedback || !encoder_) return tr.appearance;
    if (tr.identity) {
      auto it = refined_.find(*tr.identity);
      if (it != refined_.end()) return {it->second.data(), it->second.data() + it->second.size()};
    }
    if (tr.appearance.empty()) return {};
    const Eigen::VectorXd q = encoder_->encode(std::span<const double>(tr.appearance), tr.cell, ds_.map, 1.0);
    return {q.data(), q.data() + q.size()};
  }

  std::vector<double> detection_feature(const FramePosResult& r, const std::vector<double>& emb) const {
    if (!cfg_.stcn_feedback || !encoder_ || emb.empty()) return emb;
    const Eigen::VectorXd q = encoder_->encode(std::span<const double>(emb), r.cell, ds_.map, r.detection.confidence);
    return {q.data(), q.data() + q.size()};
  }

  void step(int f, const std::vector<Detection>& dets) {
    frame_ = f;
    now_ = f / ds_.fps;
    const FrameEncoding enc = encode_frame(dets, ds_.map, ds_.cameras, cfg_.body_to_head);
    rejected += enc.rejects.size();
    const auto& fpr = enc.results;
    const std::size_t n = fpr.size();

    std::vector<std::vector<double>> emb(n);
    for (std::size_t k = 0; k < n; ++k) {
      const auto& table = ds_.embeddings.at(fpr[k].detection.camera_id);
      const int row = fpr[k].embedding_index;
      if (row < 0) continue;
      if (static_cast<std::size_t>(row) >= table->size())
        throw FormatError("detection row " + std::to_string(row) + " has no embedding");
      emb[k] = normalized(table->row(static_cast<std::size_t>(row)));
    }
    const ClusterSet clusters = cluster_covisible(fpr, ds_.map, cfg_.cluster_radius_cells);

    std::vector<int> owner(n, -1);
    std::vector<double> alpha(n, 0.0), fused(n, 1.0), conf(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) conf[k] = fpr[k].detection.confidence;

    // Single-camera association.
    const double max_cost = max_assign_cost(assign_);
    for (const auto& cam : ds_.cameras) {
      std::vector<std::size_t> di;
      for (std::size_t k = 0; k < n; ++k)
        if (fpr[k].detection.camera_id == cam.camera_id) di.push_back(k);
      std::vector<std::size_t> ti;
      for (std::size_t j = 0; j < tracks_.size(); ++j)
        if (!tracks_[j].closed && tracks_[j].camera == cam.camera_id) ti.push_back(j);

      FrameAssignment fa;
      if (ti.empty()) {
        for (std::size_t c = 0; c < di.size(); ++c) fa.births.push_back(static_cast<int>(c));
      } else if (di.empty()) {
        for (std::size_t r = 0; r < ti.size(); ++r) fa.unmatched_tracks.push_back(static_cast<int>(r));
      } else {
        std::vector<AssignEndpoint> te, de;
        for (std::size_t j : ti) te.push_back({tracks_[j].ground, track_feature(tracks_[j])});
        for (std::size_t k : di) de.push_back({fpr[k].ground, detection_feature(fpr[k], emb[k])});
        fa = frame_assign(te, de, assign_, ds_.map.cell_size);
      }
      for (const auto& m : fa.matches) {
        const std::size_t k = di[static_cast<std::size_t>(m.detection)];
        const std::size_t j = ti[static_cast<std::size_t>(m.track)];
        alpha[k] = std::clamp(conf[k] * (1.0 - m.cost / max_cost), 0.0, 1.0);
        advance(j, fpr[k], emb[k]);
        owner[k] = static_cast<int>(j);
      }
      for (int r : fa.unmatched_tracks) {
        LiveTrack& tr = tracks_[ti[static_cast<std::size_t>(r)]];
        ++tr.misses;
        if (!tr.identity || tr.misses > cfg_.miss_tolerance) tr.closed = true;
      }
      for (int c : fa.births) {
        const std::size_t k = di[static_cast<std::size_t>(c)];
        LiveTrack tr;
        tr.id = static_cast<int>(tracks_.size());
        tr.camera = cam.camera_id;
        tracks_.push_back(tr);
        alpha[k] = std::clamp(conf[k], 0.0, 1.0);
        advance(tracks_.size() - 1, fpr[k], emb[k]);
        owner[k] = static_cast<int>(tracks_.size() - 1);
      }
    }

    std::vector<std::size_t> record_of(tracks_.size(), n);
    for (std::size_t k = 0; k < n; ++k)
      if (owner[k] >= 0) record_of[static_cast<std::size_t>(owner[k])] = k;
    std::vector<char> bank_done(n, 0);

    // Identities for unlabeled tracks: feature match, else a new identity once confirmed.
    for (std::size_t j = 0; j < tracks_.size(); ++j) {
      LiveTrack& tr = tracks_[j];
      if (tr.closed || tr.last_frame != frame_ || tr.identity) continue;
      const std::size_t k = record_of[j];
      if (cfg_.use_feature) {
        if (auto m = try_match(j, std::nullopt)) {
          adopt(j, m->identity);
          fused[k] = m->fused;
          continue;
        }
      }
      if (tr.hits >= cfg_.min_hits) {
        const IdentityId id = next_id_++;
        tr.identity = id;
        tr.young = true;
        tr.created_frame = frame_;
        if (!emb[k].empty()) {
          bank_.update(id, std::span<const double>(emb[k]), fpr[k].cell, now_, tr.camera);
          bank_done[k] = 1;
        }
      }
    }

    // Overlapping views: paired detections share the higher-confidence identity.
    if (cfg_.use_logic) {
      std::vector<AlignLabel> labels(n);
      for (std::size_t k = 0; k < n; ++k) {
        labels[k].confidence = conf[k];
        if (owner[k] >= 0) labels[k].identity = tracks_[static_cast<std::size_t>(owner[k])].identity;
      }
      for (const auto& a : align_overlapping(clusters, fpr, labels, cfg_.thresh_scale * ds_.map.cell_size)) {
        if (owner[a.member] < 0) continue;
        const auto j = static_cast<std::size_t>(owner[a.member]);
        LiveTrack& tr = tracks_[j];
        if (tr.identity != a.identity) {
          if (held_in_camera(tr.camera, a.identity, j)) continue;
          retire_young(j, a.identity);
          tr.identity = a.identity;
          tr.young = false;
        }
        conf[a.member] = a.confidence;
      }
    }

    // A young identity may turn out to be a returning one.
    if (cfg_.use_feature) {
      for (std::size_t j = 0; j < tracks_.size(); ++j) {
        LiveTrack& tr = tracks_[j];
        if (tr.closed || tr.last_frame != frame_ || !tr.identity || !tr.young) continue;
        if ((frame_ - tr.created_frame) / ds_.fps > cfg_.rematch_window_s) {
          tr.young = false;
          continue;
        }
        if (held_by_other(*tr.identity, j)) continue;
        if (auto m = try_match(j, tr.identity)) {
          retire_young(j, m->identity);
          adopt(j, m->identity);
          fused[record_of[j]] = m->fused;
        }
      }
    }

    // Records, bank and STCN.
    std::set<IdentityId> queried;
    for (std::size_t k = 0; k < n; ++k) {
      const auto& r = fpr[k];
      HistoryRecord h;
      h.camera = r.detection.camera_id;
      h.frame = frame_;
      h.timestamp = now_;
      h.box = r.detection.body_box;
      h.head_box = r.detection.head_box;
      h.object_class = r.detection.object_class;
      h.embedding_row = r.embedding_index;
      h.confidence = std::clamp(conf[k], 0.0, 1.0);
      h.fused = fused[k];
      h.cell = r.cell;
      h.walkable = ds_.map.walkable(r.cell);
      if (owner[k] >= 0) {
        const LiveTrack& tr = tracks_[static_cast<std::size_t>(owner[k])];
        h.tracklet = tr.id;
        h.identity = tr.identity;
      }
      history.records.push_back(h);
      alphas.push_back(alpha[k]);
      if (!h.identity || emb[k].empty()) continue;
      if (!bank_done[k]) bank_.update(*h.identity, std::span<const double>(emb[k]), r.cell, now_, h.camera);
      if (encoder_ && queried.insert(*h.identity).second) {
        TrackQuery q{*h.identity, encoder_->encode(std::span<const double>(emb[k]), r.cell, ds_.map, h.confidence), frame_};
        push_query(queries_, q);
        const Attention a = attend(queries_.buffer(q.identity));
        refined_[q.identity] = refine(a.output, q.vector, weights_);
      }
    }
  }
};

/// One fragment per forward identity: the graph links identities, never splits them.
inline std::vector<Tracklet> identity_fragments(const TrackHistory& h, std::span<const double> alphas, double fps,
                                                std::vector<IdentityId>& ids) {
  std::map<IdentityId, std::vector<std::size_t>> by_id;
  for (std::size_t k = 0; k < h.records.size(); ++k)
    if (h.records[k].identity) by_id[*h.records[k].identity].push_back(k);
  std::vector<Tracklet> out;
  ids.clear();
  for (const auto& [id, recs] : by_id) {
    Tracklet t;
    t.tracklet_id = static_cast<int>(out.size());
    t.identity = id;
    const auto& first = h.records[recs.front()];
    const auto& last = h.records[recs.back()];
    t.camera_id = first.camera;
    t.end_camera_id = last.camera;
    t.tick_start = first.frame;
    t.tick_end = last.frame;
    t.t_start = first.frame / fps;
    t.t_end = last.frame / fps;
    t.start_cell = first.cell;
    t.end_cell = last.cell;
    t.detections = recs;
    std::map<int, double> per_tick;
    std::vector<double> sum;
    for (std::size_t k : recs) {
      auto& a = per_tick[h.records[k].frame];
      a = std::max(a, alphas[k]);
      const auto e = h.embedding(h.records[k]);
      if (e.empty()) continue;
      const auto u = normalized(e);
      if (sum.empty()) sum.assign(u.size(), 0.0);
      for (std::size_t d = 0; d < u.size(); ++d) sum[d] += u[d];
    }
    for (const auto& [tick, a] : per_tick) t.alphas.push_back(a);
    if (!sum.empty()) t.mean_embedding = normalized(std::span<const double>(sum));
    out.push_back(std::move(t));
    ids.push_back(id);
  }
  return out;
}

}  // namespace detail

inline TransitModel build_transit_model(const RasterMap& map, const RunConfig& cfg,
                                        const std::map<std::pair<CameraId, CameraId>, std::vector<double>>& samples) {
  TransitModel model = TransitModel::from_adjacency(map.adjacency);
  for (CameraId c : map.camera_ids)
    if (!model.has_pair(c, c)) model.set_gaussian(c, c, cfg.same_camera_mean_s, cfg.same_camera_std_s);
  for (const auto& [pair, s] : samples)
    if (static_cast<int>(s.size()) >= cfg.min_transit_samples)
      model.set_histogram(pair.first, pair.second, s, cfg.transit_bin_s, cfg.link_gate_s);
  return model;
}

inline PipelineResult run_pipeline(const Dataset& ds, const RunConfig& cfg) {
  detail::ForwardPass fwd(ds, cfg);
  fwd.run();
  PipelineResult res;
  res.rejected = fwd.rejected;
  res.identities = fwd.identity_count();
  res.tracklets = fwd.tracklet_count();
  res.forward = fwd.history;

  TrackHistory h = fwd.history;
  if (cfg.use_logic) {
    std::vector<IdentityId> ids;
    const auto frags = detail::identity_fragments(h, fwd.alphas, ds.fps, ids);
    const TransitModel model = build_transit_model(ds.map, cfg, fwd.transit_samples);
    GraphParams gp;
    gp.k_a = cfg.k_a;
    gp.k_t = cfg.k_t;
    gp.link_gate_s = cfg.link_gate_s;
    gp.entry_exit_cost = cfg.entry_exit_cost;
    res.trajectories = solve_global_graph(build_global_graph(frags, model, gp), ids);
    FeatureBank bank = *h.bank;
    for (std::size_t p = 0; p < res.trajectories.trajectories.size(); ++p) {
      const auto& path = res.trajectories.trajectories[p];
      const IdentityId head = res.trajectories.identities[p];
      for (std::size_t q = 1; q < path.size(); ++q) {
        const IdentityId id = ids[static_cast<std::size_t>(path[q])];
        if (id == head) continue;
        h.merges[id] = head;
        bank.merge(id, head);
      }
    }
    h.bank = std::make_shared<const FeatureBank>(std::move(bank));
  }

  if (cfg.use_retrospective) {
    RetrospectiveConfig rc;
    rc.fuse_threshold = cfg.fuse_threshold;
    rc.accept_threshold = cfg.accept_threshold;
    rc.conf_decay = cfg.conf_decay;
    RetrospectiveResult rr = reverse_pass(h, rc);
    res.corrections = std::move(rr.log);
    h = compensate_confidence(rr.history, cfg.conf_decay);
  } else {
    for (auto& r : h.records)
      if (r.identity) r.identity = h.resolve(*r.identity);
  }
  res.output = h;

  // Per-camera local ids: dense, in order of first appearance.
  std::map<CameraId, std::map<IdentityId, int>> local;
  for (const auto& cam : ds.cameras) res.rows[cam.camera_id];
  for (const auto& r : h.records) {
    if (!r.identity) continue;
    auto& ids = local[r.camera];
    auto [it, inserted] = ids.try_emplace(*r.identity, static_cast<int>(ids.size()) + 1);
    if (inserted) res.global_ids.push_back({r.camera, it->second, *r.identity});
    TrackRow row;
    row.frame = r.frame;
    row.id = it->second;
    row.body_box = r.box;
    row.confidence = r.confidence;
    row.object_class = r.object_class;
    row.head_box = r.head_box;
    row.global_id = *r.identity;
    res.rows[r.camera].push_back(row);
  }
  for (auto& [cam, rows] : res.rows)
    std::stable_sort(rows.begin(), rows.end(), [](const TrackRow& a, const TrackRow& b) { return std::tie(a.frame, a.id) < std::tie(b.frame, b.id); });
  std::sort(res.global_ids.begin(), res.global_ids.end());
  return res;
}

/// Result files: cam_<id>.csv per camera, global_ids.csv, manifest.json.
inline void write_results(const PipelineResult& res, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [cam, rows] : res.rows) write_track_file(dir / camera_file(cam, ".csv"), rows, true);
  std::string text = "camera,local_id,global_id\n";
  for (const auto& g : res.global_ids)
    text += std::to_string(g[0]) + "," + std::to_string(g[1]) + "," + std::to_string(g[2]) + "\n";
  write_text(dir / "global_ids.csv", text);
}

inline void write_manifest(const RunConfig& cfg, const PipelineResult& res, double wall_s, const std::filesystem::path& dir) {
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(cfg)));
  nlohmann::json m;
  m["version"] = kVersion;
  m["config_hash"] = hash;
  m["seed"] = cfg.seed;
  m["wall_time_s"] = wall_s;
  m["stages"] = {{"feature", cfg.use_feature}, {"logic", cfg.use_logic}, {"retrospective", cfg.use_retrospective}};
  m["identities"] = res.identities;
  m["tracklets"] = res.tracklets;
  m["rejected_detections"] = res.rejected;
  m["corrections"] = res.corrections.size();
  m["config"] = config_to_json(cfg);
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

inline PipelineResult run_track(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  const auto start = std::chrono::steady_clock::now();
  const Dataset ds = load_dataset(cfg);
  PipelineResult res = run_pipeline(ds, cfg);
  write_results(res, out_dir);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_manifest(cfg, res, wall, out_dir);
  return res;
}

inline EvalReport run_eval(const std::string& gt_dir, const std::string& pred_dir, const std::filesystem::path& out_dir) {
  const auto gt = load_track_dir(gt_dir);
  const auto pred = load_track_dir(pred_dir);
  EvalReport rep = evaluate(gt, pred);
  write_text(out_dir / "report.json", report_to_json(rep).dump(2) + "\n");
  write_text(out_dir / "report.txt", report_to_table(rep));
  return rep;
}

// ---------------------------------------------------------------------------
// Ablation

struct AblationRow {
  std::string stages;
  bool feature = false, logic = false, retrospective = false;
  EvalReport report;
};

inline std::vector<AblationRow> run_ablation_on(const DatasetBundle& bundle, RunConfig base = {}) {
  const Dataset ds = dataset_from_bundle(bundle);
  const auto gt = to_camera_tracks(bundle.ground_truth);
  const std::array<AblationRow, 4> combos{{{"base", false, false, false, {}},
                                           {"+feature", true, false, false, {}},
                                           {"+logic", true, true, false, {}},
                                           {"+retrospective", true, true, true, {}}}};
  std::vector<AblationRow> out;
  for (AblationRow row : combos) {
    base.use_feature = row.feature;
    base.use_logic = row.logic;
    base.use_retrospective = row.retrospective;
    const PipelineResult res = run_pipeline(ds, base);
    row.report = evaluate(gt, to_camera_tracks(res.rows));
    out.push_back(std::move(row));
  }
  return out;
}

inline std::vector<AblationRow> run_ablation(const std::string& benchmark, std::uint64_t seed, RunConfig base = {}) {
  ScenarioSpec spec = find_benchmark(benchmark);
  spec.seed = seed;
  base.seed = seed;
  return run_ablation_on(generate_scenario(spec), base);
}

inline std::string ablation_to_table(const std::vector<AblationRow>& rows) {
  std::string out = "Transform  Feature  Logic  Back-view     IDF1     MOTA     MCTA\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-9s  %-7s  %-5s  %-9s  %7.4f  %7.4f  %7.4f\n", "yes", r.feature ? "yes" : "-",
                  r.logic ? "yes" : "-", r.retrospective ? "yes" : "-", r.report.overall.idf1, r.report.overall.mota,
                  r.report.mcta.mcta);
    out += buf;
  }
  return out;
}

inline nlohmann::json ablation_to_json(const std::vector<AblationRow>& rows) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows)
    j.push_back({{"stages", r.stages},
                 {"feature", r.feature},
                 {"logic", r.logic},
                 {"retrospective", r.retrospective},
                 {"idf1", r.report.overall.idf1},
                 {"mota", r.report.overall.mota},
                 {"mcta", r.report.mcta.mcta}});
  return j;
}

}  // namespace mtmct
