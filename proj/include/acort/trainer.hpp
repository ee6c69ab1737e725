#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "acort/metrics.hpp"
#include "acort/model.hpp"
#include "acort/toy_world.hpp"
#include "acort/vocab_radix.hpp"

namespace acort {

/// Raised when training produces a non-finite loss or activation.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// How scenes become model inputs.
struct FeatureOptions {
  double noise = 0.05;
  std::uint64_t noise_seed = 0;
};

struct EvalOptions {
  int beam_size = 1;
  int max_len = 64;
  /// Evaluate at most this many scenes; 0 means all.
  int limit = 0;
};

struct EvalResult {
  double exact_match = 0.0;
  BleuScores bleu;
  CaptionStats stats;
  std::vector<std::string> captions;
};

/// Decodes every scene and scores it against its reference caption.
/// `training_captions` feeds the uniqueness statistic.
EvalResult evaluate(const CaptionerModel& model, const TokenCodec& codec, const std::vector<Scene>& scenes,
                    const std::set<std::string>& training_captions, const FeatureOptions& features,
                    const EvalOptions& options);

struct TrainOptions {
  int epochs = 30;
  int batch_size = 25;
  /// 0 selects the transformer default hidden^-1/2 * warmup^-1/2.
  double lr_peak = 0.0;
  int warmup_steps = 200;
  /// Dropout on embeddings and sublayer outputs during training.
  double dropout = 0.0;
  std::uint64_t seed = 1;
  /// Stop once validation exact-match reaches this value.
  std::optional<double> target_exact_match;
  /// Stop after this many optimizer steps; 0 means no limit.
  int max_steps = 0;
  EvalOptions eval;
  FeatureOptions features;
  /// Draw fresh training-feature noise every epoch instead of one fixed draw.
  bool resample_noise = true;
  /// Written with the best weights whenever validation improves.
  std::string checkpoint_path;
};

struct EpochRecord {
  int epoch = 0;
  int step = 0;
  double loss = 0.0;  // token-weighted mean over the epoch
  EvalResult val;
  double seconds = 0.0;
};

struct TrainRun {
  std::vector<EpochRecord> history;
  /// Per-step training loss.
  std::vector<double> step_losses;
  int steps = 0;
  int best_epoch = 0;
  double best_exact_match = -1.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Teacher-forced training with Adam and the Noam schedule. The model ends
/// up holding the weights of the epoch with the best validation exact-match.
TrainRun train(CaptionerModel& model, const TokenCodec& codec, const std::vector<Scene>& train_set,
               const std::vector<Scene>& val_set, const TrainOptions& options, const EpochCallback& on_epoch = {});

/// Codec over the training captions: word-level when radix_base is 0.
TokenCodec make_codec(const std::vector<Scene>& train_set, int radix_base, std::int64_t min_frequency = 1);

inline constexpr const char* kMetricsHeader = "step,loss,exact_match,bleu1,bleu4,unique_frac,avg_len";
std::string metrics_row(const EpochRecord& record);

}  // namespace acort
