#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "acort/model.hpp"

namespace acort {

/// Parameter counts per component. Shared parameters count once.
struct ParamReport {
  std::int64_t embeddings = 0;    // input table + output projection and bias
  std::int64_t attention = 0;     // Q/K/V/O weights and biases, both stacks
  std::int64_t mlp = 0;
  std::int64_t misc = 0;          // layer norms and geometric gates
  std::int64_t feature_proj = 0;
  std::int64_t positional = 0;    // fixed table, always 0

  std::int64_t total() const { return embeddings + attention + mlp + misc + feature_proj + positional; }
  bool operator==(const ParamReport&) const = default;
};

/// Parameters of one attention block: 4 or 3 projections of r x r plus bias.
std::int64_t attention_block_params(int hidden, AttentionShareMode mode);
/// Input table plus output projection with bias: (2r + 1) * rows.
std::int64_t embedding_params(int hidden, int rows);

/// Closed-form count; needs no model.
ParamReport count_from_config(const ModelConfig& cfg);

/// Count by walking the distinct Parameters of a built model.
ParamReport enumerate_parameters(const CaptionerModel& model);

struct Reconciliation {
  bool ok = false;
  ParamReport expected;
  ParamReport enumerated;
  /// One line per mismatching component, empty when ok.
  std::string diff;

  explicit operator bool() const { return ok; }
};

/// Exact integer comparison of the enumerated model against `report`.
Reconciliation reconcile(const CaptionerModel& model, const ParamReport& report);

struct NamedConfig {
  std::string name;
  ModelConfig config;
};

/// Full-size configuration: 2048-d region features, 8 heads,
/// 10,058-word vocabulary, geometric attention on.
ModelConfig full_scale_config(int hidden, int mlp, const std::string& layout, AttentionShareMode mode,
                               int radix_base);

/// Named sweeps: "models", "radix", "attention", "layers", "reuse", or
/// "all" for the complete set. Throws on an unknown suite.
std::vector<NamedConfig> config_suite(const std::string& suite);

inline constexpr const char* kTablesHeader = "name,embeddings,attention,mlp,misc,feature_proj,total,total_millions";

std::string report_row(const std::string& name, const ParamReport& report);
/// Header line plus one row per config.
std::string emit_tables(const std::vector<NamedConfig>& configs);

}  // namespace acort
