#pragma once

#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "acort/autodiff.hpp"

namespace acort {

using Rng = std::mt19937_64;

enum class AttentionShareMode { no_share, share_qk, share_kv };

std::string_view to_string(AttentionShareMode mode);
/// Accepts no_share / share_qk / share_kv (also dashed or capitalized).
AttentionShareMode parse_share_mode(std::string_view text);

/// y = x W + b with W stored as [in x out].
struct Linear {
  ParameterPtr weight;
  ParameterPtr bias;
};

/// Uniform(-1/sqrt(in), 1/sqrt(in)) weights, zero bias.
Linear make_linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng);
Var apply(Graph& g, const Linear& layer, Var x);
/// Plain forward without a graph.
Tensor apply(const Linear& layer, const Tensor& x);

/// Projections of one attention block. Under share_qk `q` and `k` hold the
/// same Parameters; under share_kv `k` and `v` do. `o` is never shared.
struct AttentionWeights {
  AttentionShareMode mode = AttentionShareMode::no_share;
  Linear q, k, v, o;
  int heads = 1;
  int head_dim = 0;

  /// Distinct projection matrices: 4 for no_share, 3 otherwise.
  int distinct_projections() const;
  std::vector<ParameterPtr> parameters() const;
};

AttentionWeights make_attention_weights(const std::string& prefix, int hidden, int heads, AttentionShareMode mode,
                                        Rng& rng);

/// Which projections a block actually computes for a given call shape.
struct ProjectionPlan {
  bool key_from_query = false;  // self-attention under share_qk
  bool value_from_key = false;  // share_kv whenever key and value sources match
  int projections = 3;
};

ProjectionPlan plan_projections(AttentionShareMode mode, bool query_is_key_source, bool key_is_value_source,
                                bool allow_reuse);

struct AttentionOptions {
  const Mask* mask = nullptr;
  /// Non-negative gate, [n*n x heads], from geometric_gate. Self-attention only.
  std::optional<Var> gate;
  bool allow_reuse = true;
  /// When set, receives the per-head attention probabilities.
  std::vector<Var>* probabilities = nullptr;
};

/// softmax(Q K^T / sqrt(head_dim) + log gate) V per head, heads concatenated
/// and output-projected. Passing the same Var for sources enables the
/// projection reuse paths; allow_reuse = false forces full recomputation.
Var multi_head_attention(Var query_src, Var key_src, Var value_src, const AttentionWeights& w,
                         const AttentionOptions& options = {});

/// Region box in normalized image coordinates.
struct BoxGeometry {
  double cx = 0.5;
  double cy = 0.5;
  double w = 1.0;
  double h = 1.0;

  bool operator==(const BoxGeometry&) const = default;
};

inline constexpr int kGeometryEmbedDim = 64;
inline constexpr double kGateFloor = 1e-9;

/// Row m*n+j holds (dcx / w_m, dcy / h_m, log(w_j / w_m), log(h_j / h_m)),
/// with d = box_j - box_m.
Tensor relative_geometry(std::span<const BoxGeometry> boxes);
/// Sinusoidal embedding of relative_geometry, [n*n x 64].
Tensor geometry_embedding(std::span<const BoxGeometry> boxes);

/// Learned map from the geometry embedding to one gate value per head.
struct GateWeights {
  ParameterPtr weight;  // [64 x heads]
  ParameterPtr bias;    // [heads]
};

GateWeights make_gate_weights(const std::string& prefix, int heads, Rng& rng);
/// relu(embedding W + b), [n*n x heads].
Var geometric_gate(Var embedding, const GateWeights& weights);
/// Plain form, shaped [heads x n x n].
Tensor geometric_gate(std::span<const BoxGeometry> boxes, const GateWeights& weights);

}  // namespace acort
