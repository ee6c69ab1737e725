#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "acort/model.hpp"
#include "acort/vocab_radix.hpp"

namespace acort {

/// Autoregressive state: tokens fed so far, next-token distribution.
class DecoderCursor {
 public:
  virtual ~DecoderCursor() = default;
  virtual std::unique_ptr<DecoderCursor> clone() const = 0;
  /// Appends `token`; returns log-probabilities over the next token.
  virtual std::vector<double> feed(int token) = 0;
};

/// Anything that can score token sequences left to right.
class SequenceModel {
 public:
  virtual ~SequenceModel() = default;
  virtual int bos_id() const = 0;
  virtual int eos_id() const = 0;
  virtual std::unique_ptr<DecoderCursor> start() const = 0;
};

/// A captioner conditioned on one image's encoder memory.
class CaptionerSequenceModel : public SequenceModel {
 public:
  CaptionerSequenceModel(const CaptionerModel& model, Tensor memory, int bos_id, int eos_id);

  int bos_id() const override { return bos_; }
  int eos_id() const override { return eos_; }
  std::unique_ptr<DecoderCursor> start() const override;

 private:
  const CaptionerModel* model_;
  Tensor memory_;
  int bos_;
  int eos_;
};

struct Hypothesis {
  std::vector<int> tokens;  // starts with BOS
  double score = 0.0;       // sum of token log-probabilities
  bool finished = false;    // ends with EOS
};

/// Ranks hypotheses; the default is the raw log-probability sum.
using RankFn = std::function<double(const Hypothesis&)>;

struct BeamOptions {
  int beam_size = 2;
  /// Maximum stream length, BOS and EOS included.
  int max_len = 64;
  /// Empty means no length normalization.
  RankFn rank;
};

/// Argmax at every step, lowest token id on ties.
Hypothesis greedy_decode(const SequenceModel& model, int max_len);

/// Keeps the best `beam_size` expansions per step; expansions ending in EOS
/// leave the beam as finished hypotheses. Stops once no live hypothesis can
/// beat the best finished one. Returns the best finished hypothesis, or the
/// best live one when nothing finished within max_len.
Hypothesis beam_search(const SequenceModel& model, const BeamOptions& options);

/// Log-probability of a full stream under `model`.
double sequence_score(const SequenceModel& model, const std::vector<int>& tokens);

/// Lenient decode of a generated stream to a space-joined caption.
std::string caption_from_tokens(const std::vector<int>& tokens, const TokenCodec& codec);

}  // namespace acort
