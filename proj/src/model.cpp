#include "acort/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace acort {

int ModelConfig::embedding_rows() const {
  return radix_base > 0 ? radix_base + 2 : vocab_size + 2;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("model config: " + msg); };
  if (hidden_size < 1 || mlp_size < 1 || feature_dim < 1) fail("sizes must be positive");
  if (heads < 1 || hidden_size % heads != 0) fail("hidden_size must be divisible by heads");
  if (radix_base == 1 || radix_base < 0) fail("radix_base must be 0 or at least 2");
  if (vocab_size < 1) fail("vocab_size must be positive");
  if (max_len < 2) fail("max_len must be at least 2");
  if (encoder_layout.num_layers() < 1 || decoder_layout.num_layers() < 1) fail("empty layer layout");
}

std::vector<ParameterPtr> EncoderBlock::parameters() const {
  std::vector<ParameterPtr> out = self_attn.parameters();
  if (gate) out.insert(out.end(), {gate->weight, gate->bias});
  out.insert(out.end(), {ff1.weight, ff1.bias, ff2.weight, ff2.bias, ln1.gain, ln1.shift, ln2.gain, ln2.shift});
  return out;
}

std::vector<ParameterPtr> DecoderBlock::parameters() const {
  std::vector<ParameterPtr> out = self_attn.parameters();
  for (const auto& p : cross_attn.parameters()) out.push_back(p);
  out.insert(out.end(), {ff1.weight, ff1.bias, ff2.weight, ff2.bias, ln1.gain, ln1.shift, ln2.gain, ln2.shift,
                         ln3.gain, ln3.shift});
  return out;
}

namespace {

LayerNormParams make_layer_norm(const std::string& name, int width) {
  Tensor gain({static_cast<std::size_t>(width)});
  gain.fill(1.0);
  return LayerNormParams{make_parameter(name + ".gain", std::move(gain)),
                         make_parameter(name + ".shift", Tensor({static_cast<std::size_t>(width)}))};
}

EncoderBlock make_encoder_block(const std::string& prefix, const ModelConfig& cfg, Rng& rng) {
  const auto r = static_cast<std::size_t>(cfg.hidden_size);
  const auto m = static_cast<std::size_t>(cfg.mlp_size);
  EncoderBlock b;
  b.self_attn = make_attention_weights(prefix + ".self_attn", cfg.hidden_size, cfg.heads, cfg.encoder_attention, rng);
  if (cfg.use_geometric) b.gate = make_gate_weights(prefix + ".geo_gate", cfg.heads, rng);
  b.ff1 = make_linear(prefix + ".ff1", r, m, rng);
  b.ff2 = make_linear(prefix + ".ff2", m, r, rng);
  b.ln1 = make_layer_norm(prefix + ".ln1", cfg.hidden_size);
  b.ln2 = make_layer_norm(prefix + ".ln2", cfg.hidden_size);
  return b;
}

DecoderBlock make_decoder_block(const std::string& prefix, const ModelConfig& cfg, Rng& rng) {
  const auto r = static_cast<std::size_t>(cfg.hidden_size);
  const auto m = static_cast<std::size_t>(cfg.mlp_size);
  DecoderBlock b;
  b.self_attn = make_attention_weights(prefix + ".self_attn", cfg.hidden_size, cfg.heads, cfg.decoder_attention, rng);
  b.cross_attn = make_attention_weights(prefix + ".cross_attn", cfg.hidden_size, cfg.heads, cfg.decoder_attention, rng);
  b.ff1 = make_linear(prefix + ".ff1", r, m, rng);
  b.ff2 = make_linear(prefix + ".ff2", m, r, rng);
  b.ln1 = make_layer_norm(prefix + ".ln1", cfg.hidden_size);
  b.ln2 = make_layer_norm(prefix + ".ln2", cfg.hidden_size);
  b.ln3 = make_layer_norm(prefix + ".ln3", cfg.hidden_size);
  return b;
}

// Deep copy of a block's parameters under a new name prefix, keeping the
// aliasing inside the block intact.
class Cloner {
 public:
  Cloner(std::string from, std::string to) : from_(std::move(from)), to_(std::move(to)) {}

  ParameterPtr operator()(const ParameterPtr& p) {
    if (!p) return p;
    auto it = copies_.find(p->id());
    if (it != copies_.end()) return it->second;
    std::string name = p->name();
    if (name.rfind(from_, 0) == 0) name = to_ + name.substr(from_.size());
    auto copy = make_parameter(name, p->value());
    copies_.emplace(p->id(), copy);
    return copy;
  }
  Linear operator()(const Linear& l) { return Linear{(*this)(l.weight), (*this)(l.bias)}; }
  LayerNormParams operator()(const LayerNormParams& l) { return LayerNormParams{(*this)(l.gain), (*this)(l.shift)}; }
  AttentionWeights operator()(const AttentionWeights& w) {
    AttentionWeights c = w;
    c.q = (*this)(w.q);
    c.k = (*this)(w.k);
    c.v = (*this)(w.v);
    c.o = (*this)(w.o);
    return c;
  }

 private:
  std::string from_, to_;
  std::unordered_map<std::uint64_t, ParameterPtr> copies_;
};

std::string group_prefix(Stack stack, int group) {
  return std::string(stack == Stack::encoder ? "enc" : "dec") + ".g" + std::to_string(group);
}

// Stack position -> group prefix, recovered from the first parameter name.
std::string prefix_of(const ParameterPtr& p) {
  const std::string& n = p->name();
  const auto dot = n.find('.', n.find('.') + 1);
  return n.substr(0, dot);
}

Var layer_norm_var(Graph& g, Var x, const LayerNormParams& ln) {
  return layer_normalize(x, g.param(ln.gain), g.param(ln.shift));
}

Var feed_forward(Graph& g, Var x, const Linear& ff1, const Linear& ff2) {
  return apply(g, ff2, relu(apply(g, ff1, x)));
}

}  // namespace

Tensor sinusoidal_positions(int length, int width) {
  Tensor table({static_cast<std::size_t>(length), static_cast<std::size_t>(width)});
  for (int pos = 0; pos < length; ++pos) {
    for (int i = 0; i < width; i += 2) {
      const double angle = pos / std::pow(10000.0, static_cast<double>(i) / width);
      table.at(static_cast<std::size_t>(pos), static_cast<std::size_t>(i)) = std::sin(angle);
      if (i + 1 < width) table.at(static_cast<std::size_t>(pos), static_cast<std::size_t>(i + 1)) = std::cos(angle);
    }
  }
  return table;
}

CaptionerModel::CaptionerModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(seed);
  const auto r = static_cast<std::size_t>(cfg_.hidden_size);
  const auto rows = static_cast<std::size_t>(cfg_.embedding_rows());

  feature_proj_ = make_linear("feature_proj", static_cast<std::size_t>(cfg_.feature_dim), r, rng);
  {
    // Embedding rows are looked up, not multiplied, so fan-in is the width.
    const double bound = 1.0 / std::sqrt(static_cast<double>(r));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor table({rows, r});
    for (auto& v : table.data()) v = dist(rng);
    input_embedding_ = make_parameter("embedding.input", std::move(table));
  }
  output_projection_ = make_linear("embedding.output", r, rows, rng);
  positional_ = sinusoidal_positions(cfg_.max_len, cfg_.hidden_size);

  std::vector<std::shared_ptr<const EncoderBlock>> enc_groups;
  for (int gi = 0; gi < cfg_.encoder_layout.num_independent(); ++gi) {
    enc_groups.push_back(std::make_shared<EncoderBlock>(make_encoder_block(group_prefix(Stack::encoder, gi), cfg_, rng)));
  }
  for (int gid : cfg_.encoder_layout.assignment()) encoder_layers_.push_back(enc_groups[static_cast<std::size_t>(gid)]);

  std::vector<std::shared_ptr<const DecoderBlock>> dec_groups;
  for (int gi = 0; gi < cfg_.decoder_layout.num_independent(); ++gi) {
    dec_groups.push_back(std::make_shared<DecoderBlock>(make_decoder_block(group_prefix(Stack::decoder, gi), cfg_, rng)));
  }
  for (int gid : cfg_.decoder_layout.assignment()) decoder_layers_.push_back(dec_groups[static_cast<std::size_t>(gid)]);

  next_group_[0] = cfg_.encoder_layout.num_independent();
  next_group_[1] = cfg_.decoder_layout.num_independent();
}

CaptionerModel build_model(const ModelConfig& cfg, std::uint64_t seed) {
  return CaptionerModel(cfg, seed);
}

int CaptionerModel::num_layers(Stack stack) const {
  return static_cast<int>(stack == Stack::encoder ? encoder_layers_.size() : decoder_layers_.size());
}

std::vector<TaggedParameter> CaptionerModel::inventory() const {
  std::vector<TaggedParameter> out;
  std::unordered_set<std::uint64_t> seen;
  auto add = [&](const ParameterPtr& p, Component c) {
    if (p && seen.insert(p->id()).second) out.push_back(TaggedParameter{p, c});
  };
  auto add_attention = [&](const AttentionWeights& w) {
    for (const auto& p : w.parameters()) add(p, Component::attention);
  };
  auto add_ln = [&](const LayerNormParams& ln) {
    add(ln.gain, Component::misc);
    add(ln.shift, Component::misc);
  };
  auto add_mlp = [&](const Linear& a, const Linear& b) {
    for (const auto& p : {a.weight, a.bias, b.weight, b.bias}) add(p, Component::mlp);
  };

  add(input_embedding_, Component::embeddings);
  add(output_projection_.weight, Component::embeddings);
  add(output_projection_.bias, Component::embeddings);
  add(feature_proj_.weight, Component::feature_proj);
  add(feature_proj_.bias, Component::feature_proj);
  for (const auto& b : encoder_layers_) {
    add_attention(b->self_attn);
    if (b->gate) {
      add(b->gate->weight, Component::misc);
      add(b->gate->bias, Component::misc);
    }
    add_mlp(b->ff1, b->ff2);
    add_ln(b->ln1);
    add_ln(b->ln2);
  }
  for (const auto& b : decoder_layers_) {
    add_attention(b->self_attn);
    add_attention(b->cross_attn);
    add_mlp(b->ff1, b->ff2);
    add_ln(b->ln1);
    add_ln(b->ln2);
    add_ln(b->ln3);
  }
  return out;
}

std::vector<ParameterPtr> CaptionerModel::parameters() const {
  std::vector<ParameterPtr> out;
  for (auto& t : inventory()) out.push_back(std::move(t.param));
  return out;
}

std::vector<ParameterPtr> CaptionerModel::layer_parameters(Stack stack, int layer) const {
  if (layer < 0 || layer >= num_layers(stack)) throw std::out_of_range("layer index out of range");
  return stack == Stack::encoder ? encoder_layer(layer).parameters() : decoder_layer(layer).parameters();
}

int CaptionerModel::distinct_groups(Stack stack) const {
  std::unordered_set<const void*> blocks;
  if (stack == Stack::encoder) {
    for (const auto& b : encoder_layers_) blocks.insert(b.get());
  } else {
    for (const auto& b : decoder_layers_) blocks.insert(b.get());
  }
  return static_cast<int>(blocks.size());
}

void CaptionerModel::untie_layer(Stack stack, int layer) {
  if (layer < 0 || layer >= num_layers(stack)) throw std::out_of_range("layer index out of range");
  const auto idx = static_cast<std::size_t>(layer);
  const int group = next_group_[stack == Stack::encoder ? 0 : 1]++;
  const std::string to = group_prefix(stack, group);
  if (stack == Stack::encoder) {
    const EncoderBlock& src = *encoder_layers_[idx];
    Cloner clone(prefix_of(src.ff1.weight), to);
    EncoderBlock b;
    b.self_attn = clone(src.self_attn);
    if (src.gate) b.gate = GateWeights{clone(src.gate->weight), clone(src.gate->bias)};
    b.ff1 = clone(src.ff1);
    b.ff2 = clone(src.ff2);
    b.ln1 = clone(src.ln1);
    b.ln2 = clone(src.ln2);
    encoder_layers_[idx] = std::make_shared<EncoderBlock>(std::move(b));
  } else {
    const DecoderBlock& src = *decoder_layers_[idx];
    Cloner clone(prefix_of(src.ff1.weight), to);
    DecoderBlock b;
    b.self_attn = clone(src.self_attn);
    b.cross_attn = clone(src.cross_attn);
    b.ff1 = clone(src.ff1);
    b.ff2 = clone(src.ff2);
    b.ln1 = clone(src.ln1);
    b.ln2 = clone(src.ln2);
    b.ln3 = clone(src.ln3);
    decoder_layers_[idx] = std::make_shared<DecoderBlock>(std::move(b));
  }
}

Var CaptionerModel::encode_regions(Graph& g, const Tensor& features, std::span<const BoxGeometry> boxes,
                                   bool allow_reuse, const Dropout& drop) const {
  const std::size_t n = features.rank() == 0 ? 0 : features.rows();
  if (n == 0) throw std::invalid_argument("no regions to encode");
  if (features.cols() != static_cast<std::size_t>(cfg_.feature_dim)) {
    throw std::invalid_argument("feature width " + std::to_string(features.cols()) + " does not match feature_dim " +
                                std::to_string(cfg_.feature_dim));
  }
  std::optional<Var> geometry;
  if (cfg_.use_geometric) {
    if (boxes.size() != n) throw std::invalid_argument("one box per region is required");
    geometry = g.constant(geometry_embedding(boxes));
  }

  Var x = drop(apply(g, feature_proj_, g.constant(features)));
  std::map<const EncoderBlock*, Var> gates;
  for (const auto& block : encoder_layers_) {
    AttentionOptions opts;
    opts.allow_reuse = allow_reuse;
    if (geometry) {
      auto it = gates.find(block.get());
      if (it == gates.end()) it = gates.emplace(block.get(), geometric_gate(*geometry, *block->gate)).first;
      opts.gate = it->second;
    }
    Var a = drop(multi_head_attention(x, x, x, block->self_attn, opts));
    x = layer_norm_var(g, add(x, a), block->ln1);
    x = layer_norm_var(g, add(x, drop(feed_forward(g, x, block->ff1, block->ff2))), block->ln2);
  }
  return x;
}

Var CaptionerModel::decode_teacher_forced(Graph& g, Var memory, std::span<const int> tokens, bool allow_reuse,
                                          const Dropout& drop) const {
  const std::size_t t = tokens.size();
  if (t == 0) throw std::invalid_argument("empty token sequence");
  if (t > static_cast<std::size_t>(cfg_.max_len)) {
    throw std::invalid_argument("token sequence longer than max_len " + std::to_string(cfg_.max_len));
  }
  const int rows = cfg_.embedding_rows();
  for (int id : tokens) {
    if (id < 0 || id >= rows) throw std::out_of_range("token id " + std::to_string(id) + " out of range");
  }

  Tensor pos({t, static_cast<std::size_t>(cfg_.hidden_size)});
  std::copy_n(positional_.data().begin(), pos.size(), pos.data().begin());
  Var x = gather_rows(g.param(input_embedding_), tokens);
  x = drop(add(scale(x, std::sqrt(static_cast<double>(cfg_.hidden_size))), g.constant(std::move(pos))));

  const Mask mask = Mask::causal(t);
  for (const auto& block : decoder_layers_) {
    AttentionOptions self_opts;
    self_opts.mask = &mask;
    self_opts.allow_reuse = allow_reuse;
    x = layer_norm_var(g, add(x, drop(multi_head_attention(x, x, x, block->self_attn, self_opts))), block->ln1);
    AttentionOptions cross_opts;
    cross_opts.allow_reuse = allow_reuse;
    x = layer_norm_var(g, add(x, drop(multi_head_attention(x, memory, memory, block->cross_attn, cross_opts))),
                       block->ln2);
    x = layer_norm_var(g, add(x, drop(feed_forward(g, x, block->ff1, block->ff2))), block->ln3);
  }
  return apply(g, output_projection_, x);
}

Var CaptionerModel::caption_loss(Graph& g, const Tensor& features, std::span<const BoxGeometry> boxes,
                                 std::span<const int> tokens, const Dropout& drop) const {
  if (tokens.size() < 2) throw std::invalid_argument("caption stream needs at least BOS and EOS");
  Var memory = encode_regions(g, features, boxes, true, drop);
  Var logits = decode_teacher_forced(g, memory, tokens.first(tokens.size() - 1), true, drop);
  return cross_entropy(logits, tokens.subspan(1));
}

Tensor CaptionerModel::encode(const Tensor& features, std::span<const BoxGeometry> boxes) const {
  Graph g;
  return encode_regions(g, features, boxes).value();
}

IncrementalDecoder::IncrementalDecoder(const CaptionerModel& model, const Tensor& memory) : model_(&model) {
  const int layers = model.num_layers(Stack::decoder);
  auto cross = std::make_shared<std::vector<CrossCache>>();
  for (int l = 0; l < layers; ++l) {
    const auto& w = model.decoder_layer(l).cross_attn;
    cross->push_back(CrossCache{apply(w.k, memory), apply(w.v, memory)});
  }
  cross_ = std::move(cross);
  self_keys_.resize(static_cast<std::size_t>(layers));
  self_values_.resize(static_cast<std::size_t>(layers));
}

namespace {

// One query row against `count` cached key/value rows of width r.
Tensor attend_row(const Tensor& q, std::span<const double> keys, std::span<const double> values, std::size_t count,
                  const AttentionWeights& w) {
  const auto dh = static_cast<std::size_t>(w.head_dim);
  const std::size_t r = dh * static_cast<std::size_t>(w.heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor out({1, r});
  std::vector<double> scores(count);
  for (std::size_t h = 0; h < static_cast<std::size_t>(w.heads); ++h) {
    const std::size_t off = h * dh;
    double max_score = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < count; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < dh; ++c) s += q[off + c] * keys[j * r + off + c];
      scores[j] = s * inv_sqrt;
      max_score = std::max(max_score, scores[j]);
    }
    double total = 0.0;
    for (auto& s : scores) {
      s = std::exp(s - max_score);
      total += s;
    }
    for (std::size_t j = 0; j < count; ++j) {
      const double p = scores[j] / total;
      for (std::size_t c = 0; c < dh; ++c) out[off + c] += p * values[j * r + off + c];
    }
  }
  return apply(w.o, out);
}

void residual_norm(Tensor& x, const Tensor& delta, const LayerNormParams& ln) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += delta[i];
  x = kernels::layer_norm(x, ln.gain->value(), ln.shift->value(), 1e-5);
}

}  // namespace

std::vector<double> IncrementalDecoder::feed(int token) {
  const ModelConfig& cfg = model_->config();
  if (length_ >= cfg.max_len) throw std::out_of_range("decoder reached max_len");
  if (token < 0 || token >= cfg.embedding_rows()) {
    throw std::out_of_range("token id " + std::to_string(token) + " out of range");
  }
  const auto r = static_cast<std::size_t>(cfg.hidden_size);
  const double emb_scale = std::sqrt(static_cast<double>(cfg.hidden_size));

  Tensor x({1, r});
  const Tensor& table = model_->input_embedding()->value();
  for (std::size_t c = 0; c < r; ++c) {
    x[c] = table.at(static_cast<std::size_t>(token), c) * emb_scale +
           model_->positional().at(static_cast<std::size_t>(length_), c);
  }
  ++length_;

  for (std::size_t l = 0; l < self_keys_.size(); ++l) {
    const DecoderBlock& block = model_->decoder_layer(static_cast<int>(l));
    const Tensor q = apply(block.self_attn.q, x);
    const Tensor k = apply(block.self_attn.k, x);
    const Tensor v = apply(block.self_attn.v, x);
    self_keys_[l].insert(self_keys_[l].end(), k.data().begin(), k.data().end());
    self_values_[l].insert(self_values_[l].end(), v.data().begin(), v.data().end());
    residual_norm(x, attend_row(q, self_keys_[l], self_values_[l], static_cast<std::size_t>(length_), block.self_attn),
                  block.ln1);

    const CrossCache& cc = (*cross_)[l];
    const Tensor cq = apply(block.cross_attn.q, x);
    residual_norm(x, attend_row(cq, cc.keys.data(), cc.values.data(), cc.keys.rows(), block.cross_attn), block.ln2);

    Tensor hidden = apply(block.ff1, x);
    kernels::relu_inplace(hidden);
    residual_norm(x, apply(block.ff2, hidden), block.ln3);
  }

  const Tensor logits = apply(model_->output_projection(), x);
  std::vector<double> out(logits.size());
  kernels::log_softmax_row(logits.data(), out);
  return out;
}

}  // namespace acort
