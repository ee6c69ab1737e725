#include "acort/accountant.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace acort {

namespace {

constexpr int kFullScaleWordVocab = 10058;
constexpr int kFullScaleFeatureDim = 2048;
constexpr int kFullScaleHeads = 8;

std::int64_t mlp_params(std::int64_t r, std::int64_t m) {
  return 2 * r * m + m + r;
}

}  // namespace

std::int64_t attention_block_params(int hidden, AttentionShareMode mode) {
  const std::int64_t r = hidden;
  const std::int64_t projections = mode == AttentionShareMode::no_share ? 4 : 3;
  return projections * (r * r + r);
}

std::int64_t embedding_params(int hidden, int rows) {
  return (2 * static_cast<std::int64_t>(hidden) + 1) * rows;
}

ParamReport count_from_config(const ModelConfig& cfg) {
  cfg.validate();
  const std::int64_t r = cfg.hidden_size;
  const std::int64_t m = cfg.mlp_size;
  const std::int64_t enc = cfg.encoder_layout.num_independent();
  const std::int64_t dec = cfg.decoder_layout.num_independent();
  const std::int64_t gate = cfg.use_geometric ? static_cast<std::int64_t>(kGeometryEmbedDim) * cfg.heads + cfg.heads : 0;

  ParamReport rep;
  rep.embeddings = embedding_params(cfg.hidden_size, cfg.embedding_rows());
  rep.attention = enc * attention_block_params(cfg.hidden_size, cfg.encoder_attention) +
                  dec * 2 * attention_block_params(cfg.hidden_size, cfg.decoder_attention);
  rep.mlp = (enc + dec) * mlp_params(r, m);
  rep.misc = enc * (2 * 2 * r + gate) + dec * 3 * 2 * r;
  rep.feature_proj = static_cast<std::int64_t>(cfg.feature_dim) * r + r;
  return rep;
}

ParamReport enumerate_parameters(const CaptionerModel& model) {
  ParamReport rep;
  for (const auto& [param, component] : model.inventory()) {
    const auto n = static_cast<std::int64_t>(param->size());
    switch (component) {
      case Component::embeddings:
        rep.embeddings += n;
        break;
      case Component::attention:
        rep.attention += n;
        break;
      case Component::mlp:
        rep.mlp += n;
        break;
      case Component::misc:
        rep.misc += n;
        break;
      case Component::feature_proj:
        rep.feature_proj += n;
        break;
    }
  }
  return rep;
}

Reconciliation reconcile(const CaptionerModel& model, const ParamReport& report) {
  Reconciliation out;
  out.expected = report;
  out.enumerated = enumerate_parameters(model);
  std::ostringstream diff;
  auto check = [&](const char* name, std::int64_t expected, std::int64_t got) {
    if (expected != got) {
      diff << name << ": expected " << expected << ", enumerated " << got << " (" << (got - expected > 0 ? "+" : "")
           << got - expected << ")\n";
    }
  };
  check("embeddings", report.embeddings, out.enumerated.embeddings);
  check("attention", report.attention, out.enumerated.attention);
  check("mlp", report.mlp, out.enumerated.mlp);
  check("misc", report.misc, out.enumerated.misc);
  check("feature_proj", report.feature_proj, out.enumerated.feature_proj);
  check("positional", report.positional, out.enumerated.positional);
  check("total", report.total(), out.enumerated.total());
  out.diff = diff.str();
  out.ok = out.diff.empty();
  return out;
}

ModelConfig full_scale_config(int hidden, int mlp, const std::string& layout, AttentionShareMode mode,
                               int radix_base) {
  ModelConfig cfg;
  cfg.hidden_size = hidden;
  cfg.mlp_size = mlp;
  cfg.heads = kFullScaleHeads;
  cfg.feature_dim = kFullScaleFeatureDim;
  cfg.encoder_layout = parse_layout(layout);
  cfg.decoder_layout = cfg.encoder_layout;
  cfg.set_attention_mode(mode);
  cfg.radix_base = radix_base;
  cfg.vocab_size = kFullScaleWordVocab;
  cfg.use_geometric = true;
  return cfg;
}

std::vector<NamedConfig> config_suite(const std::string& suite) {
  using M = AttentionShareMode;
  const std::string base6 = "(0,1,2,3,4,5)";
  std::vector<NamedConfig> out;
  const bool all = suite == "all";

  if (all || suite == "models") {
    out.push_back({"ort-base", full_scale_config(512, 2048, base6, M::no_share, 0)});
    out.push_back({"ort-small", full_scale_config(256, 1024, base6, M::no_share, 0)});
    out.push_back({"ort-xsmall", full_scale_config(104, 416, base6, M::no_share, 0)});
    out.push_back({"ort-base-4", full_scale_config(512, 2048, "(0,1,2,3)", M::no_share, 0)});
    out.push_back({"ort-base-2", full_scale_config(512, 2048, "(0,1)", M::no_share, 0)});
    out.push_back({"acort-base", full_scale_config(512, 2048, "(0x3,1x3)", M::share_kv, 768)});
    out.push_back({"acort-base-al", full_scale_config(512, 2048, "(0x6)", M::share_kv, 768)});
    out.push_back({"acort-small", full_scale_config(256, 1024, "(0x3,1x3)", M::share_kv, 768)});
    out.push_back({"acort-xsmall", full_scale_config(256, 1024, "(0x2)", M::share_kv, 768)});
  }
  if (all || suite == "radix") {
    out.push_back({"radix-word", full_scale_config(512, 2048, base6, M::no_share, 0)});
    for (int v : {1024, 768, 512, 256}) {
      out.push_back({"radix-v" + std::to_string(v), full_scale_config(512, 2048, base6, M::no_share, v)});
    }
  }
  if (all || suite == "attention") {
    out.push_back({"attn-no-share", full_scale_config(512, 2048, base6, M::no_share, 0)});
    ModelConfig enc_only = full_scale_config(512, 2048, base6, M::no_share, 0);
    enc_only.encoder_attention = M::share_kv;
    out.push_back({"attn-share-kv-encoder", enc_only});
    ModelConfig dec_only = full_scale_config(512, 2048, base6, M::no_share, 0);
    dec_only.decoder_attention = M::share_kv;
    out.push_back({"attn-share-kv-decoder", dec_only});
    out.push_back({"attn-share-kv", full_scale_config(512, 2048, base6, M::share_kv, 0)});
    out.push_back({"attn-share-qk", full_scale_config(512, 2048, base6, M::share_qk, 0)});
  }
  if (all || suite == "layers") {
    out.push_back({"layers-6", full_scale_config(512, 2048, base6, M::no_share, 0)});
    out.push_back({"layers-4", full_scale_config(512, 2048, "(0,0,0,1,2,3)", M::no_share, 0)});
    out.push_back({"layers-3-successive", full_scale_config(512, 2048, "(0,0,1,1,2,2)", M::no_share, 0)});
    out.push_back({"layers-3-symmetric", full_scale_config(512, 2048, "(0,1,2,2,1,0)", M::no_share, 0)});
    out.push_back({"layers-2", full_scale_config(512, 2048, "(0x3,1x3)", M::no_share, 0)});
    out.push_back({"layers-1", full_scale_config(512, 2048, "(0x6)", M::no_share, 0)});
    ModelConfig enc_shared = full_scale_config(512, 2048, base6, M::no_share, 0);
    enc_shared.encoder_layout = parse_layout("(0x6)");
    out.push_back({"layers-share-encoder", enc_shared});
    ModelConfig dec_shared = full_scale_config(512, 2048, base6, M::no_share, 0);
    dec_shared.decoder_layout = parse_layout("(0x6)");
    out.push_back({"layers-share-decoder", dec_shared});
  }
  if (all || suite == "reuse") {
    out.push_back({"reuse-depth-2", full_scale_config(512, 2048, "(0,1)", M::no_share, 0)});
    out.push_back({"reuse-depth-6", full_scale_config(512, 2048, "(0x3,1x3)", M::no_share, 0)});
    out.push_back({"reuse-depth-12", full_scale_config(512, 2048, "(0x6,1x6)", M::no_share, 0)});
  }
  if (out.empty()) {
    throw std::invalid_argument("unknown suite '" + suite + "' (expected models, radix, attention, layers, reuse or all)");
  }
  return out;
}

std::string report_row(const std::string& name, const ParamReport& r) {
  char millions[32];
  std::snprintf(millions, sizeof(millions), "%.1f", static_cast<double>(r.total()) / 1e6);
  std::ostringstream out;
  out << name << ',' << r.embeddings << ',' << r.attention << ',' << r.mlp << ',' << r.misc << ',' << r.feature_proj
      << ',' << r.total() << ',' << millions;
  return out.str();
}

std::string emit_tables(const std::vector<NamedConfig>& configs) {
  std::string out = std::string(kTablesHeader) + "\n";
  for (const auto& c : configs) out += report_row(c.name, count_from_config(c.config)) + "\n";
  return out;
}

}  // namespace acort
