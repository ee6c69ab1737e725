#include "acort/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace acort {

std::string_view to_string(AttentionShareMode mode) {
  switch (mode) {
    case AttentionShareMode::no_share:
      return "no_share";
    case AttentionShareMode::share_qk:
      return "share_qk";
    case AttentionShareMode::share_kv:
      return "share_kv";
  }
  return "?";
}

AttentionShareMode parse_share_mode(std::string_view text) {
  std::string norm;
  for (char c : text) {
    if (c == '-') c = '_';
    norm.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (norm == "no_share" || norm == "none") return AttentionShareMode::no_share;
  if (norm == "share_qk") return AttentionShareMode::share_qk;
  if (norm == "share_kv") return AttentionShareMode::share_kv;
  throw std::invalid_argument("unknown attention sharing mode '" + std::string(text) + "'");
}

Linear make_linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor w({in, out});
  for (auto& v : w.data()) v = dist(rng);
  return Linear{make_parameter(name + ".weight", std::move(w)), make_parameter(name + ".bias", Tensor({out}))};
}

Var apply(Graph& g, const Linear& layer, Var x) {
  return affine(x, g.param(layer.weight), g.param(layer.bias));
}

Tensor apply(const Linear& layer, const Tensor& x) {
  Tensor y = kernels::matmul(x, layer.weight->value());
  kernels::add_row_inplace(y, layer.bias->value());
  return y;
}

int AttentionWeights::distinct_projections() const {
  return mode == AttentionShareMode::no_share ? 4 : 3;
}

std::vector<ParameterPtr> AttentionWeights::parameters() const {
  std::vector<ParameterPtr> out{q.weight, q.bias};
  if (mode != AttentionShareMode::share_qk) out.insert(out.end(), {k.weight, k.bias});
  if (mode != AttentionShareMode::share_kv) out.insert(out.end(), {v.weight, v.bias});
  out.insert(out.end(), {o.weight, o.bias});
  return out;
}

AttentionWeights make_attention_weights(const std::string& prefix, int hidden, int heads, AttentionShareMode mode,
                                        Rng& rng) {
  if (heads < 1 || hidden % heads != 0) {
    throw std::invalid_argument("hidden size " + std::to_string(hidden) + " not divisible by " +
                                std::to_string(heads) + " heads");
  }
  const auto r = static_cast<std::size_t>(hidden);
  AttentionWeights w;
  w.mode = mode;
  w.heads = heads;
  w.head_dim = hidden / heads;
  switch (mode) {
    case AttentionShareMode::no_share:
      w.q = make_linear(prefix + ".w_q", r, r, rng);
      w.k = make_linear(prefix + ".w_k", r, r, rng);
      w.v = make_linear(prefix + ".w_v", r, r, rng);
      break;
    case AttentionShareMode::share_qk:
      w.q = make_linear(prefix + ".w_qk", r, r, rng);
      w.k = w.q;
      w.v = make_linear(prefix + ".w_v", r, r, rng);
      break;
    case AttentionShareMode::share_kv:
      w.q = make_linear(prefix + ".w_q", r, r, rng);
      w.k = make_linear(prefix + ".w_kv", r, r, rng);
      w.v = w.k;
      break;
  }
  w.o = make_linear(prefix + ".w_o", r, r, rng);
  return w;
}

ProjectionPlan plan_projections(AttentionShareMode mode, bool query_is_key_source, bool key_is_value_source,
                                bool allow_reuse) {
  ProjectionPlan plan;
  if (!allow_reuse) return plan;
  // Query and key only coincide in self-attention, where all three sources
  // are one tensor; cross-attention under share_qk has nothing to reuse.
  if (mode == AttentionShareMode::share_qk && query_is_key_source) plan.key_from_query = true;
  if (mode == AttentionShareMode::share_kv && key_is_value_source) plan.value_from_key = true;
  plan.projections = 3 - (plan.key_from_query ? 1 : 0) - (plan.value_from_key ? 1 : 0);
  return plan;
}

Var multi_head_attention(Var query_src, Var key_src, Var value_src, const AttentionWeights& w,
                         const AttentionOptions& options) {
  if (!query_src.valid() || query_src.graph() != key_src.graph() || key_src.graph() != value_src.graph()) {
    throw std::invalid_argument("attention sources must share one graph");
  }
  Graph& g = *query_src.graph();
  const std::size_t hidden = static_cast<std::size_t>(w.heads * w.head_dim);
  for (Var src : {query_src, key_src, value_src}) {
    if (src.value().cols() != hidden) throw std::invalid_argument("attention source width does not match hidden size");
  }
  if (key_src.value().rows() != value_src.value().rows()) {
    throw std::invalid_argument("key and value sources differ in length");
  }

  const ProjectionPlan plan = plan_projections(w.mode, query_src == key_src, key_src == value_src, options.allow_reuse);
  Var q = apply(g, w.q, query_src);
  Var k = plan.key_from_query ? q : apply(g, w.k, key_src);
  Var v = plan.value_from_key ? k : apply(g, w.v, value_src);

  const std::size_t nq = query_src.value().rows();
  const std::size_t nk = key_src.value().rows();
  if (options.gate) {
    const Tensor& gate = options.gate->value();
    if (gate.rows() != nq * nk || gate.cols() != static_cast<std::size_t>(w.heads)) {
      throw std::invalid_argument("geometric gate shape does not match attention");
    }
  }

  const auto dh = static_cast<std::size_t>(w.head_dim);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(w.heads));
  for (std::size_t h = 0; h < static_cast<std::size_t>(w.heads); ++h) {
    Var qh = slice_cols(q, h * dh, dh);
    Var kh = slice_cols(k, h * dh, dh);
    Var vh = slice_cols(v, h * dh, dh);
    Var scores = scale(matmul_nt(qh, kh), inv_sqrt);
    if (options.gate) {
      scores = add(scores, log_clamped(column_as_matrix(*options.gate, h, nq, nk), kGateFloor));
    }
    Var probs = masked_softmax(scores, options.mask);
    if (options.probabilities) options.probabilities->push_back(probs);
    heads.push_back(matmul(probs, vh));
  }
  return apply(g, w.o, concat_cols(heads));
}

Tensor relative_geometry(std::span<const BoxGeometry> boxes) {
  const std::size_t n = boxes.size();
  if (n == 0) throw std::invalid_argument("no boxes");
  for (const auto& b : boxes) {
    if (!(b.w > 0.0) || !(b.h > 0.0)) throw std::invalid_argument("box extent must be positive");
  }
  Tensor out({n * n, 4});
  for (std::size_t m = 0; m < n; ++m) {
    for (std::size_t j = 0; j < n; ++j) {
      auto row = out.row(m * n + j);
      row[0] = (boxes[j].cx - boxes[m].cx) / boxes[m].w;
      row[1] = (boxes[j].cy - boxes[m].cy) / boxes[m].h;
      row[2] = std::log(boxes[j].w / boxes[m].w);
      row[3] = std::log(boxes[j].h / boxes[m].h);
    }
  }
  return out;
}

Tensor geometry_embedding(std::span<const BoxGeometry> boxes) {
  constexpr std::size_t kFreqs = kGeometryEmbedDim / 8;  // per feature: kFreqs sines + kFreqs cosines
  const Tensor rel = relative_geometry(boxes);
  Tensor out({rel.rows(), static_cast<std::size_t>(kGeometryEmbedDim)});
  for (std::size_t r = 0; r < rel.rows(); ++r) {
    auto o = out.row(r);
    for (std::size_t f = 0; f < 4; ++f) {
      for (std::size_t k = 0; k < kFreqs; ++k) {
        const double angle =
            100.0 * rel.at(r, f) / std::pow(1000.0, static_cast<double>(k) / static_cast<double>(kFreqs));
        o[f * 2 * kFreqs + k] = std::sin(angle);
        o[f * 2 * kFreqs + kFreqs + k] = std::cos(angle);
      }
    }
  }
  return out;
}

GateWeights make_gate_weights(const std::string& prefix, int heads, Rng& rng) {
  Linear l = make_linear(prefix, static_cast<std::size_t>(kGeometryEmbedDim), static_cast<std::size_t>(heads), rng);
  return GateWeights{l.weight, l.bias};
}

Var geometric_gate(Var embedding, const GateWeights& weights) {
  Graph& g = *embedding.graph();
  return relu(affine(embedding, g.param(weights.weight), g.param(weights.bias)));
}

Tensor geometric_gate(std::span<const BoxGeometry> boxes, const GateWeights& weights) {
  const std::size_t n = boxes.size();
  Tensor flat = apply(Linear{weights.weight, weights.bias}, geometry_embedding(boxes));
  kernels::relu_inplace(flat);
  const std::size_t heads = flat.cols();
  Tensor out({heads, n, n});
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < n * n; ++i) out[h * n * n + i] = flat.at(i, h);
  }
  return out;
}

}  // namespace acort
