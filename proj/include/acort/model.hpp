#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "acort/attention.hpp"
#include "acort/autodiff.hpp"
#include "acort/share_config.hpp"

namespace acort {

/// Everything needed to build or count a captioner.
struct ModelConfig {
  int hidden_size = 64;
  int mlp_size = 256;
  int heads = 4;
  int feature_dim = 64;
  ShareLayout encoder_layout = ShareLayout::unshared(6);
  ShareLayout decoder_layout = ShareLayout::unshared(6);
  AttentionShareMode encoder_attention = AttentionShareMode::no_share;
  AttentionShareMode decoder_attention = AttentionShareMode::no_share;
  /// 0 selects word-level tokens.
  int radix_base = 0;
  /// Word vocabulary size |V_o|, `<UNK>` included.
  int vocab_size = 0;
  int max_len = 64;
  bool use_geometric = true;

  void set_attention_mode(AttentionShareMode mode) { encoder_attention = decoder_attention = mode; }
  /// v + 2 in radix mode, |V_o| + 2 otherwise.
  int embedding_rows() const;
  /// Throws std::invalid_argument on an inconsistent config.
  void validate() const;
};

struct LayerNormParams {
  ParameterPtr gain;
  ParameterPtr shift;
};

struct EncoderBlock {
  AttentionWeights self_attn;
  std::optional<GateWeights> gate;
  Linear ff1, ff2;
  LayerNormParams ln1, ln2;

  std::vector<ParameterPtr> parameters() const;
};

struct DecoderBlock {
  AttentionWeights self_attn;
  AttentionWeights cross_attn;
  Linear ff1, ff2;
  LayerNormParams ln1, ln2, ln3;

  std::vector<ParameterPtr> parameters() const;
};

enum class Component { embeddings, attention, mlp, misc, feature_proj };

struct TaggedParameter {
  ParameterPtr param;
  Component component;
};

enum class Stack { encoder, decoder };

/// Training-time dropout on the input embeddings and every sublayer output.
/// The default (rate 0) leaves the forward pass untouched.
struct Dropout {
  double rate = 0.0;
  std::mt19937_64* rng = nullptr;

  Var operator()(Var x) const { return rate > 0.0 ? dropout(x, rate, *rng) : x; }
};

class CaptionerModel {
 public:
  CaptionerModel(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  const ParameterPtr& input_embedding() const { return input_embedding_; }
  const Linear& output_projection() const { return output_projection_; }
  const Linear& feature_projection() const { return feature_proj_; }
  /// Fixed sinusoidal table, [max_len x r].
  const Tensor& positional() const { return positional_; }

  const EncoderBlock& encoder_layer(int layer) const { return *encoder_layers_.at(static_cast<std::size_t>(layer)); }
  const DecoderBlock& decoder_layer(int layer) const { return *decoder_layers_.at(static_cast<std::size_t>(layer)); }
  int num_layers(Stack stack) const;

  /// Distinct parameters in a stable order; a shared group appears once.
  std::vector<ParameterPtr> parameters() const;
  std::vector<TaggedParameter> inventory() const;
  /// Parameters of one stack position, in block order.
  std::vector<ParameterPtr> layer_parameters(Stack stack, int layer) const;
  /// Distinct block groups currently referenced by a stack.
  int distinct_groups(Stack stack) const;

  /// Gives one stack position a private copy of its block. The model then no
  /// longer matches its config; meant for analysis and tests.
  void untie_layer(Stack stack, int layer);

  /// Encoder stack output, [n x r]. `boxes` is required iff the config uses
  /// geometric attention.
  Var encode_regions(Graph& g, const Tensor& features, std::span<const BoxGeometry> boxes,
                     bool allow_reuse = true, const Dropout& drop = {}) const;
  /// Logits over the encoded vocabulary, one row per input token.
  Var decode_teacher_forced(Graph& g, Var memory, std::span<const int> tokens, bool allow_reuse = true,
                            const Dropout& drop = {}) const;
  /// Mean next-token cross-entropy of a full BOS...EOS stream.
  Var caption_loss(Graph& g, const Tensor& features, std::span<const BoxGeometry> boxes,
                   std::span<const int> tokens, const Dropout& drop = {}) const;

  /// Encoder output without recording gradients.
  Tensor encode(const Tensor& features, std::span<const BoxGeometry> boxes) const;

 private:
  ModelConfig cfg_;
  ParameterPtr input_embedding_;
  Linear output_projection_;
  Linear feature_proj_;
  Tensor positional_;
  std::vector<std::shared_ptr<const EncoderBlock>> encoder_layers_;
  std::vector<std::shared_ptr<const DecoderBlock>> decoder_layers_;
  int next_group_[2] = {0, 0};
};

CaptionerModel build_model(const ModelConfig& cfg, std::uint64_t seed);

/// Sinusoidal position table: sin at even columns, cos at odd ones.
Tensor sinusoidal_positions(int length, int width);

/// Step-by-step decoder with cached keys and values; matches
/// decode_teacher_forced row for row. Cheap to copy for beam search.
class IncrementalDecoder {
 public:
  IncrementalDecoder(const CaptionerModel& model, const Tensor& memory);

  /// Appends `token`, returns log-probabilities of the next token.
  std::vector<double> feed(int token);
  int length() const { return length_; }

 private:
  struct CrossCache {
    Tensor keys;
    Tensor values;
  };

  const CaptionerModel* model_;
  std::shared_ptr<const std::vector<CrossCache>> cross_;
  std::vector<std::vector<double>> self_keys_;
  std::vector<std::vector<double>> self_values_;
  int length_ = 0;
};

}  // namespace acort
