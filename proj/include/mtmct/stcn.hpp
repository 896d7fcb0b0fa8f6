#pragma once

// Space-time convergence network: per-identity query banks, single-head
// self-attention over the bank, a residual feed-forward refinement with layer
// normalization, and the probability fusion / CAL scoring used downstream.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <deque>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mtmct/errors.hpp"
#include "mtmct/geometry_io.hpp"
#include "mtmct/rng.hpp"
#include "mtmct/semantic_map.hpp"

namespace mtmct {

using IdentityId = int;

struct TrackQuery {
  IdentityId identity = 0;
  Eigen::VectorXd vector;
  int frame = 0;
};

/// Ring buffer of the newest M+1 queries per identity, oldest first.
class QueryBank {
 public:
  QueryBank(int dim, int depth_m) : dim_(dim), depth_(depth_m) {
    if (dim <= 0 || depth_m < 0) throw ModelError("query bank needs dim > 0 and M >= 0");
  }

  int dim() const { return dim_; }
  int depth() const { return depth_; }

  void push(const TrackQuery& q) {
    if (q.vector.size() != dim_) throw DimError("query length " + std::to_string(q.vector.size()) + " != " + std::to_string(dim_));
    auto& buf = buffers_[q.identity];
    if (!buf.empty() && q.frame <= buf.back().frame)
      throw OrderError("query frame " + std::to_string(q.frame) + " not after " + std::to_string(buf.back().frame));
    buf.push_back(q);
    while (static_cast<int>(buf.size()) > depth_ + 1) buf.pop_front();
  }

  bool contains(IdentityId id) const { return buffers_.count(id) != 0; }
  const std::deque<TrackQuery>& buffer(IdentityId id) const {
    static const std::deque<TrackQuery> kEmpty;
    auto it = buffers_.find(id);
    return it == buffers_.end() ? kEmpty : it->second;
  }
  void erase(IdentityId id) { buffers_.erase(id); }

 private:
  int dim_;
  int depth_;
  std::map<IdentityId, std::deque<TrackQuery>> buffers_;
};

inline QueryBank& push_query(QueryBank& bank, const TrackQuery& q) {
  bank.push(q);
  return bank;
}

struct Attention {
  Eigen::MatrixXd weights;  // K x K, rows sum to 1
  Eigen::VectorXd output;   // newest token's attended vector
};

/// Row-softmax(tgt tgt^T / sqrt(d)) with tgt the stacked bank; values are the
/// bank rows and the newest row of the product is returned.
inline Attention attend(const std::deque<TrackQuery>& buffer) {
  if (buffer.empty()) throw EmptyBankError("cannot attend over an empty query bank");
  const auto k = static_cast<Eigen::Index>(buffer.size());
  const auto d = buffer.front().vector.size();
  Eigen::MatrixXd tgt(k, d);
  for (Eigen::Index r = 0; r < k; ++r) tgt.row(r) = buffer[static_cast<std::size_t>(r)].vector.transpose();
  Eigen::MatrixXd logits = tgt * tgt.transpose() / std::sqrt(static_cast<double>(d));
  for (Eigen::Index r = 0; r < k; ++r) {
    const double mx = logits.row(r).maxCoeff();
    logits.row(r) = (logits.row(r).array() - mx).exp().matrix();
    logits.row(r) /= logits.row(r).sum();
  }
  Attention a;
  a.output = (logits * tgt).row(k - 1).transpose();
  a.weights = std::move(logits);
  return a;
}

inline constexpr double kLayerNormEps = 1e-5;

/// (v - mean) / sqrt(var + eps), before scale and shift.
inline Eigen::VectorXd layer_norm_core(const Eigen::VectorXd& v) {
  const double mean = v.mean();
  const double var = (v.array() - mean).square().mean();
  return (v.array() - mean) / std::sqrt(var + kLayerNormEps);
}

inline Eigen::VectorXd layer_norm(const Eigen::VectorXd& v, const Eigen::VectorXd& scale, const Eigen::VectorXd& shift) {
  return (layer_norm_core(v).array() * scale.array() + shift.array()).matrix();
}

struct StcnWeights {
  Eigen::MatrixXd fc1_w;  // d_ff x d
  Eigen::VectorXd fc1_b;
  Eigen::MatrixXd fc2_w;  // d x d_ff
  Eigen::VectorXd fc2_b;
  Eigen::VectorXd ln1_scale, ln1_shift;
  Eigen::VectorXd ln2_scale, ln2_shift;

  int dim() const { return static_cast<int>(fc2_w.rows()); }
  int dim_ff() const { return static_cast<int>(fc1_w.rows()); }

  /// FC1 seeded, FC2 zero: the feed-forward branch adds nothing, so refine
  /// reduces to two layer norms around the attention residual.
  static StcnWeights identity_equivalent(int d, int d_ff, std::uint64_t seed = 7) {
    StcnWeights w;
    Rng rng(seed);
    w.fc1_w.resize(d_ff, d);
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    for (int r = 0; r < d_ff; ++r)
      for (int c = 0; c < d; ++c) w.fc1_w(r, c) = rng.normal(0.0, s);
    w.fc1_b = Eigen::VectorXd::Zero(d_ff);
    w.fc2_w = Eigen::MatrixXd::Zero(d, d_ff);
    w.fc2_b = Eigen::VectorXd::Zero(d);
    w.ln1_scale = w.ln2_scale = Eigen::VectorXd::Ones(d);
    w.ln1_shift = w.ln2_shift = Eigen::VectorXd::Zero(d);
    return w;
  }

  /// Flat little-endian f32 file, in order: fc1_w (d_ff x d, row-major), fc1_b,
  /// fc2_w (d x d_ff, row-major), fc2_b, ln1_scale, ln1_shift, ln2_scale,
  /// ln2_shift.
  static StcnWeights load(const std::string& path, int d, int d_ff) {
    const std::string bytes = detail::read_file(path);
    const std::size_t expected = static_cast<std::size_t>(2 * d * d_ff + d_ff + 5 * d) * 4;
    if (bytes.size() != expected)
      throw FormatError(path + ": STCN weights hold " + std::to_string(bytes.size()) + " bytes, expected " + std::to_string(expected));
    std::size_t off = 0;
    auto next = [&] {
      std::uint32_t raw = 0;
      for (int i = 0; i < 4; ++i) raw |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + i])) << (8 * i);
      off += 4;
      float f;
      std::memcpy(&f, &raw, 4);
      return static_cast<double>(f);
    };
    StcnWeights w;
    w.fc1_w.resize(d_ff, d);
    for (int r = 0; r < d_ff; ++r)
      for (int c = 0; c < d; ++c) w.fc1_w(r, c) = next();
    w.fc1_b.resize(d_ff);
    for (int r = 0; r < d_ff; ++r) w.fc1_b(r) = next();
    w.fc2_w.resize(d, d_ff);
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d_ff; ++c) w.fc2_w(r, c) = next();
    for (Eigen::VectorXd* v : {&w.fc2_b, &w.ln1_scale, &w.ln1_shift, &w.ln2_scale, &w.ln2_shift}) {
      v->resize(d);
      for (int r = 0; r < d; ++r) (*v)(r) = next();
    }
    return w;
  }
};

/// tgt' = LN(q_sa + q_bar); out = LN(FC2(relu(FC1(tgt'))) + tgt').
inline Eigen::VectorXd refine(const Eigen::VectorXd& q_sa, const Eigen::VectorXd& q_bar, const StcnWeights& w) {
  if (q_sa.size() != q_bar.size() || q_sa.size() != w.dim()) throw DimError("refine: dimension mismatch");
  const Eigen::VectorXd t = layer_norm(q_sa + q_bar, w.ln1_scale, w.ln1_shift);
  const Eigen::VectorXd hidden = (w.fc1_w * t + w.fc1_b).cwiseMax(0.0);
  const Eigen::VectorXd out = layer_norm(w.fc2_w * hidden + w.fc2_b + t, w.ln2_scale, w.ln2_shift);
  if (!out.allFinite()) throw NumericError("non-finite value in STCN refinement");
  return out;
}

/// Projects (embedding, coarse position one-hot, confidence) to the query
/// dimension with a fixed seeded Gaussian map.
class QueryEncoder {
 public:
  static constexpr int kPosBins = 4;

  QueryEncoder(int embedding_dim, int query_dim, std::uint64_t seed = 11)
      : embedding_dim_(embedding_dim), proj_(query_dim, embedding_dim + kPosBins * kPosBins + 1) {
    Rng rng(seed);
    const double s = 1.0 / std::sqrt(static_cast<double>(proj_.cols()));
    for (Eigen::Index r = 0; r < proj_.rows(); ++r)
      for (Eigen::Index c = 0; c < proj_.cols(); ++c) proj_(r, c) = rng.normal(0.0, s);
  }

  template <class T>
  Eigen::VectorXd encode(std::span<const T> embedding, const CellIndex& cell, const RasterMap& map, double confidence) const {
    if (static_cast<int>(embedding.size()) != embedding_dim_) throw DimError("query encoder: embedding length mismatch");
    Eigen::VectorXd x = Eigen::VectorXd::Zero(proj_.cols());
    for (int k = 0; k < embedding_dim_; ++k) x(k) = static_cast<double>(embedding[static_cast<std::size_t>(k)]);
    const int bi = std::min(kPosBins - 1, cell.i * kPosBins / std::max(1, map.width));
    const int bj = std::min(kPosBins - 1, cell.j * kPosBins / std::max(1, map.height));
    x(embedding_dim_ + bj * kPosBins + bi) = 1.0;
    x(proj_.cols() - 1) = confidence;
    return proj_ * x;
  }

 private:
  int embedding_dim_;
  Eigen::MatrixXd proj_;
};

// ---------------------------------------------------------------------------
// Probability fusion and CAL

inline constexpr double kFusionFloor = 1e-6;

struct FusionInput {
  double p_feature = 1.0;
  double p_st = 1.0;
  double p_map = 1.0;

  FusionInput floored() const {
    return {std::clamp(p_feature, kFusionFloor, 1.0), std::clamp(p_st, kFusionFloor, 1.0), std::clamp(p_map, kFusionFloor, 1.0)};
  }
};

struct FusionResult {
  double fused = 0.0;
  bool accept = false;
};

inline FusionResult fuse_probabilities(const FusionInput& in, double fuse_threshold = 0.05) {
  const FusionInput f = in.floored();
  const double fused = f.p_feature * f.p_st * f.p_map;
  return {fused, fused >= fuse_threshold};
}

struct CalWeights {
  double cls = 1.0;
  double l1 = 1.0;
  double iou = 1.0;
};

struct CalTarget {
  FusionInput probabilities;
  Box predicted;
  Box truth;
};

inline double cal_target_loss(const CalTarget& t, const CalWeights& w) {
  const FusionInput f = t.probabilities.floored();
  const double cls = -std::log(f.p_feature * f.p_st * f.p_map);
  const double l1 = std::abs(t.predicted.left - t.truth.left) + std::abs(t.predicted.top - t.truth.top) +
                    std::abs(t.predicted.width - t.truth.width) + std::abs(t.predicted.height - t.truth.height);
  return w.cls * cls + w.l1 * l1 + w.iou * (1.0 - iou(t.predicted, t.truth));
}

/// Collective average loss: summed per-target losses over the total target count.
inline double cal_score(std::span<const CalTarget> targets, const CalWeights& w, double total_targets) {
  if (!(total_targets > 0.0)) throw DegenerateError("CAL needs a positive target count");
  double sum = 0.0;
  for (const auto& t : targets) sum += cal_target_loss(t, w);
  return sum / total_targets;
}

}  // namespace mtmct
