#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "acort/model.hpp"
#include "acort/trainer.hpp"

namespace acort {

struct TrainSection {
  int epochs = 30;
  int batch_size = 25;
  /// 0 selects the transformer default; the toy stack trains better lower.
  double lr_peak = 2e-3;
  int warmup_steps = 200;
  double dropout = 0.1;
  std::uint64_t seed = 1;
  std::int64_t min_frequency = 5;
  std::optional<double> target_exact_match;
};

/// Scenes come either from JSON-lines files or from the generator.
struct DataSection {
  std::string train_path;
  std::string val_path;
  std::string test_path;
  std::uint64_t seed = 7;
  int n_train = 2000;
  int n_val = 200;
  int n_test = 200;
  double feature_noise = 0.05;
  std::uint64_t noise_seed = 0;

  bool from_files() const { return !train_path.empty(); }
};

struct EvalSection {
  int beam_size = 1;
  int max_len = 64;
};

struct RunConfig {
  ModelConfig model;
  TrainSection train;
  DataSection data;
  EvalSection eval;
};

/// Toy-scale defaults: r = 64, 4 heads, (0x3,1x3) both stacks, Share-KV,
/// radix base 8.
RunConfig default_run_config();

/// Parses JSON text. Unknown keys and wrong types are errors; missing keys
/// keep their defaults. Relative data paths resolve against `base_dir`, and
/// every referenced file must exist.
RunConfig parse_run_config(const std::string& json_text, const std::string& base_dir = ".");
RunConfig load_run_config(const std::string& path);

std::string run_config_json(const RunConfig& cfg);

TrainOptions train_options(const RunConfig& cfg);
FeatureOptions feature_options(const RunConfig& cfg);

}  // namespace acort
