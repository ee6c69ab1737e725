#include "acort/run_config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <type_traits>

#include <json.hpp>

namespace acort {

namespace {

using nlohmann::json;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.contains(key)) throw ConfigError("config: unknown key '" + where + "." + key + "'");
  }
}

template <typename T>
void read(const json& obj, const std::string& where, const char* key, T& out) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  // get<T> converts between number kinds silently; 2.5 must not become 2.
  bool ok = true;
  if constexpr (std::is_same_v<T, bool>) {
    ok = it->is_boolean();
  } else if constexpr (std::is_unsigned_v<T>) {
    ok = it->is_number_unsigned();
  } else if constexpr (std::is_integral_v<T>) {
    ok = it->is_number_integer();
  } else if constexpr (std::is_floating_point_v<T>) {
    ok = it->is_number();
  }
  if (!ok) throw ConfigError(std::string("config: wrong type for '") + where + "." + key + "'");
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config: wrong type for '") + where + "." + key + "'");
  }
}

std::string resolve(const std::string& base_dir, const std::string& path) {
  if (path.empty()) return path;
  std::filesystem::path p(path);
  if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
  if (!std::filesystem::exists(p)) throw ConfigError("config: file '" + p.string() + "' does not exist");
  return p.string();
}

}  // namespace

RunConfig default_run_config() {
  RunConfig cfg;
  cfg.model.hidden_size = 64;
  cfg.model.mlp_size = 256;
  cfg.model.heads = 4;
  cfg.model.feature_dim = 64;
  cfg.model.encoder_layout = parse_layout("(0x3,1x3)");
  cfg.model.decoder_layout = parse_layout("(0x3,1x3)");
  cfg.model.set_attention_mode(AttentionShareMode::share_kv);
  cfg.model.radix_base = 8;
  cfg.model.vocab_size = 0;
  cfg.model.max_len = 64;
  cfg.model.use_geometric = true;
  return cfg;
}

RunConfig parse_run_config(const std::string& json_text, const std::string& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  check_keys(root, "<root>", {"model", "train", "data", "eval"});
  RunConfig cfg = default_run_config();

  if (auto it = root.find("model"); it != root.end()) {
    const json& m = *it;
    check_keys(m, "model",
               {"hidden_size", "mlp_size", "heads", "feature_dim", "encoder_layout", "decoder_layout", "attention_mode",
                "encoder_attention", "decoder_attention", "radix_base", "vocab_size", "max_len", "use_geometric"});
    ModelConfig& mc = cfg.model;
    read(m, "model", "hidden_size", mc.hidden_size);
    read(m, "model", "mlp_size", mc.mlp_size);
    read(m, "model", "heads", mc.heads);
    read(m, "model", "feature_dim", mc.feature_dim);
    read(m, "model", "radix_base", mc.radix_base);
    read(m, "model", "vocab_size", mc.vocab_size);
    read(m, "model", "max_len", mc.max_len);
    read(m, "model", "use_geometric", mc.use_geometric);
    std::string text;
    if (m.contains("encoder_layout")) {
      read(m, "model", "encoder_layout", text);
      mc.encoder_layout = parse_layout(text);
    }
    if (m.contains("decoder_layout")) {
      read(m, "model", "decoder_layout", text);
      mc.decoder_layout = parse_layout(text);
    }
    if (m.contains("attention_mode")) {
      read(m, "model", "attention_mode", text);
      mc.set_attention_mode(parse_share_mode(text));
    }
    if (m.contains("encoder_attention")) {
      read(m, "model", "encoder_attention", text);
      mc.encoder_attention = parse_share_mode(text);
    }
    if (m.contains("decoder_attention")) {
      read(m, "model", "decoder_attention", text);
      mc.decoder_attention = parse_share_mode(text);
    }
  }

  if (auto it = root.find("train"); it != root.end()) {
    const json& t = *it;
    check_keys(t, "train",
               {"epochs", "batch_size", "lr_peak", "warmup_steps", "dropout", "seed", "min_frequency",
                "target_exact_match"});
    TrainSection& tc = cfg.train;
    read(t, "train", "epochs", tc.epochs);
    read(t, "train", "batch_size", tc.batch_size);
    read(t, "train", "lr_peak", tc.lr_peak);
    read(t, "train", "warmup_steps", tc.warmup_steps);
    read(t, "train", "dropout", tc.dropout);
    read(t, "train", "seed", tc.seed);
    read(t, "train", "min_frequency", tc.min_frequency);
    if (t.contains("target_exact_match")) {
      double v = 0.0;
      read(t, "train", "target_exact_match", v);
      tc.target_exact_match = v;
    }
  }

  if (auto it = root.find("data"); it != root.end()) {
    const json& d = *it;
    check_keys(d, "data",
               {"train", "val", "test", "seed", "n_train", "n_val", "n_test", "feature_noise", "noise_seed"});
    DataSection& dc = cfg.data;
    read(d, "data", "train", dc.train_path);
    read(d, "data", "val", dc.val_path);
    read(d, "data", "test", dc.test_path);
    read(d, "data", "seed", dc.seed);
    read(d, "data", "n_train", dc.n_train);
    read(d, "data", "n_val", dc.n_val);
    read(d, "data", "n_test", dc.n_test);
    read(d, "data", "feature_noise", dc.feature_noise);
    read(d, "data", "noise_seed", dc.noise_seed);
    dc.train_path = resolve(base_dir, dc.train_path);
    dc.val_path = resolve(base_dir, dc.val_path);
    dc.test_path = resolve(base_dir, dc.test_path);
    if (!dc.train_path.empty() && dc.val_path.empty()) {
      throw ConfigError("config: 'data.train' requires 'data.val'");
    }
  }

  if (auto it = root.find("eval"); it != root.end()) {
    const json& e = *it;
    check_keys(e, "eval", {"beam_size", "max_len"});
    read(e, "eval", "beam_size", cfg.eval.beam_size);
    read(e, "eval", "max_len", cfg.eval.max_len);
  }

  if (cfg.train.epochs < 1) throw ConfigError("config: train.epochs must be at least 1");
  if (cfg.train.batch_size < 1) throw ConfigError("config: train.batch_size must be at least 1");
  if (cfg.train.warmup_steps < 1) throw ConfigError("config: train.warmup_steps must be at least 1");
  if (cfg.train.dropout < 0.0 || cfg.train.dropout >= 1.0) throw ConfigError("config: train.dropout must be in [0, 1)");
  if (cfg.train.min_frequency < 1) throw ConfigError("config: train.min_frequency must be at least 1");
  if (cfg.eval.beam_size < 1) throw ConfigError("config: eval.beam_size must be at least 1");
  if (cfg.eval.max_len < 2) throw ConfigError("config: eval.max_len must be at least 2");
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const auto dir = std::filesystem::path(path).parent_path();
  return parse_run_config(buf.str(), dir.empty() ? "." : dir.string());
}

std::string run_config_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  const ModelConfig& m = cfg.model;
  j["model"] = {{"hidden_size", m.hidden_size},
                {"mlp_size", m.mlp_size},
                {"heads", m.heads},
                {"feature_dim", m.feature_dim},
                {"encoder_layout", format_layout(m.encoder_layout)},
                {"decoder_layout", format_layout(m.decoder_layout)},
                {"encoder_attention", std::string(to_string(m.encoder_attention))},
                {"decoder_attention", std::string(to_string(m.decoder_attention))},
                {"radix_base", m.radix_base},
                {"vocab_size", m.vocab_size},
                {"max_len", m.max_len},
                {"use_geometric", m.use_geometric}};
  const TrainSection& t = cfg.train;
  j["train"] = {{"epochs", t.epochs},       {"batch_size", t.batch_size}, {"lr_peak", t.lr_peak},
                {"warmup_steps", t.warmup_steps}, {"dropout", t.dropout},    {"seed", t.seed},
                {"min_frequency", t.min_frequency}};
  if (t.target_exact_match) j["train"]["target_exact_match"] = *t.target_exact_match;
  const DataSection& d = cfg.data;
  j["data"] = nlohmann::ordered_json::object();
  if (d.from_files()) {
    j["data"]["train"] = d.train_path;
    j["data"]["val"] = d.val_path;
    if (!d.test_path.empty()) j["data"]["test"] = d.test_path;
  } else {
    j["data"]["seed"] = d.seed;
    j["data"]["n_train"] = d.n_train;
    j["data"]["n_val"] = d.n_val;
    j["data"]["n_test"] = d.n_test;
  }
  j["data"]["feature_noise"] = d.feature_noise;
  j["data"]["noise_seed"] = d.noise_seed;
  j["eval"] = {{"beam_size", cfg.eval.beam_size}, {"max_len", cfg.eval.max_len}};
  return j.dump(2) + "\n";
}

TrainOptions train_options(const RunConfig& cfg) {
  TrainOptions o;
  o.epochs = cfg.train.epochs;
  o.batch_size = cfg.train.batch_size;
  o.lr_peak = cfg.train.lr_peak;
  o.warmup_steps = cfg.train.warmup_steps;
  o.dropout = cfg.train.dropout;
  o.seed = cfg.train.seed;
  o.target_exact_match = cfg.train.target_exact_match;
  o.eval.beam_size = cfg.eval.beam_size;
  o.eval.max_len = cfg.eval.max_len;
  o.features = feature_options(cfg);
  return o;
}

FeatureOptions feature_options(const RunConfig& cfg) {
  return FeatureOptions{cfg.data.feature_noise, cfg.data.noise_seed};
}

}  // namespace acort
