#include "acort/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "acort/accountant.hpp"
#include "acort/checkpoint.hpp"
#include "acort/decoding.hpp"
#include "acort/metrics.hpp"
#include "acort/run_config.hpp"
#include "acort/toy_world.hpp"
#include "acort/trainer.hpp"
#include "acort/vocab_radix.hpp"

namespace acort {

namespace fs = std::filesystem;

namespace {

// Everything written by `train --out DIR`.
struct ModelDir {
  static constexpr const char* kConfig = "config.json";
  static constexpr const char* kVocab = "vocab.tsv";
  static constexpr const char* kCheckpoint = "model.ckpt";
  static constexpr const char* kMetrics = "metrics.csv";
};

struct LoadedModel {
  RunConfig cfg;
  TokenCodec codec;
  std::unique_ptr<CaptionerModel> model;
};

WordVocab read_vocab_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary '" + path + "'");
  return WordVocab::read(in);
}

LoadedModel load_model_dir(const std::string& dir) {
  LoadedModel lm;
  lm.cfg = load_run_config((fs::path(dir) / ModelDir::kConfig).string());
  WordVocab vocab = read_vocab_file((fs::path(dir) / ModelDir::kVocab).string());
  lm.codec = lm.cfg.model.radix_base > 0 ? TokenCodec::radix(std::move(vocab), lm.cfg.model.radix_base)
                                         : TokenCodec::word_level(std::move(vocab));
  lm.model = std::make_unique<CaptionerModel>(lm.cfg.model, 0);
  const auto params = lm.model->parameters();
  load_checkpoint_file((fs::path(dir) / ModelDir::kCheckpoint).string(), params);
  return lm;
}

Dataset load_or_generate(const RunConfig& cfg) {
  if (cfg.data.from_files()) {
    Dataset d;
    d.train = read_scenes_file(cfg.data.train_path);
    d.val = read_scenes_file(cfg.data.val_path);
    if (!cfg.data.test_path.empty()) d.test = read_scenes_file(cfg.data.test_path);
    return d;
  }
  return generate_dataset(cfg.data.seed, cfg.data.n_train, cfg.data.n_val, cfg.data.n_test);
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << text;
}

// Either the positional arguments, or stdin lines when there are none.
std::vector<std::string> inputs_or_stdin(const std::vector<std::string>& positional) {
  if (!positional.empty()) return positional;
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(std::cin, line)) lines.push_back(line);
  return lines;
}

class Commands {
 public:
  Commands(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  void setup(CLI::App& app) {
    app.require_subcommand(1);
    setup_gen_data(app);
    setup_build_vocab(app);
    setup_encode(app);
    setup_decode(app);
    setup_train(app);
    setup_caption(app);
    setup_evaluate(app);
    setup_count(app);
    setup_tables(app);
    setup_layer_dist(app);
  }

  void run(const CLI::App& app) {
    for (const auto* sub : app.get_subcommands()) handlers_.at(sub->get_name())();
  }

 private:
  std::ostream& out_;
  std::ostream& err_;
  std::map<std::string, std::function<void()>> handlers_;

  // Shared flag storage; only one subcommand runs per process.
  std::string config_path_;
  std::string out_path_;
  std::string vocab_path_;
  std::string data_path_;
  std::string model_dir_;
  std::string train_data_path_;
  std::optional<std::uint64_t> seed_;
  int radix_base_ = 0;
  bool strict_ = false;
  std::optional<int> beam_size_;
  std::optional<int> max_len_;
  std::optional<int> epochs_;
  std::optional<int> n_train_, n_val_, n_test_;
  std::int64_t min_frequency_ = 5;
  std::string suite_ = "all";
  std::string name_;
  std::string stack_ = "encoder";
  std::string metric_ = "msd";
  bool clip_ = false;
  std::vector<std::string> positional_;

  RunConfig config_or_default() const {
    return config_path_.empty() ? default_run_config() : load_run_config(config_path_);
  }

  void setup_gen_data(CLI::App& app) {
    auto* sub = app.add_subcommand("gen-data", "Generate train/val/test toy scene files");
    sub->add_option("--config", config_path_, "Run configuration (data section)")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed_, "Generator seed (overrides data.seed)");
    sub->add_option("--n-train", n_train_, "Training scenes")->check(CLI::PositiveNumber);
    sub->add_option("--n-val", n_val_, "Validation scenes")->check(CLI::PositiveNumber);
    sub->add_option("--n-test", n_test_, "Test scenes")->check(CLI::PositiveNumber);
    sub->add_option("--out", out_path_, "Output directory")->required();
    handlers_["gen-data"] = [this] {
      RunConfig cfg = config_or_default();
      const std::uint64_t seed = seed_.value_or(cfg.data.seed);
      const Dataset d = generate_dataset(seed, n_train_.value_or(cfg.data.n_train), n_val_.value_or(cfg.data.n_val),
                                         n_test_.value_or(cfg.data.n_test));
      fs::create_directories(out_path_);
      write_scenes_file((fs::path(out_path_) / "train.jsonl").string(), d.train);
      write_scenes_file((fs::path(out_path_) / "val.jsonl").string(), d.val);
      write_scenes_file((fs::path(out_path_) / "test.jsonl").string(), d.test);
      err_ << "wrote " << d.train.size() << "/" << d.val.size() << "/" << d.test.size() << " scenes to " << out_path_
           << "\n";
    };
  }

  void setup_build_vocab(CLI::App& app) {
    auto* sub = app.add_subcommand("build-vocab", "Build a frequency-ranked vocabulary from scene captions");
    sub->add_option("--data", data_path_, "Scene file (JSON lines)")->required()->check(CLI::ExistingFile);
    sub->add_option("--min-frequency", min_frequency_, "Words seen fewer times map to <UNK>")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    sub->add_option("--out", out_path_, "Vocabulary file (default: stdout)");
    handlers_["build-vocab"] = [this] {
      const WordVocab vocab = build_vocab(scene_captions(read_scenes_file(data_path_)), min_frequency_);
      if (out_path_.empty()) {
        vocab.write(out_);
      } else {
        std::ofstream f(out_path_);
        if (!f) throw std::runtime_error("cannot open '" + out_path_ + "' for writing");
        vocab.write(f);
      }
    };
  }

  TokenCodec codec_from_flags() const {
    WordVocab vocab = read_vocab_file(vocab_path_);
    return radix_base_ > 0 ? TokenCodec::radix(std::move(vocab), radix_base_) : TokenCodec::word_level(std::move(vocab));
  }

  void add_codec_flags(CLI::App* sub) {
    sub->add_option("--vocab", vocab_path_, "Vocabulary file")->required()->check(CLI::ExistingFile);
    sub->add_option("--radix-base", radix_base_, "Radix base v; 0 selects word-level tokens")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    sub->add_flag("--strict", strict_, "Fail on unknown words or undecodable tokens");
  }

  void setup_encode(CLI::App& app) {
    auto* sub = app.add_subcommand("encode", "Encode captions into token streams");
    add_codec_flags(sub);
    sub->add_option("captions", positional_, "Captions to encode (default: stdin lines)");
    handlers_["encode"] = [this] {
      const TokenCodec codec = codec_from_flags();
      for (const auto& line : inputs_or_stdin(positional_)) {
        const auto words = tokenize(line);
        if (strict_) {
          for (const auto& w : words) {
            if (!codec.word_vocab().find(w)) throw std::runtime_error("unknown word '" + w + "'");
          }
        }
        write_stream(out_, codec.encode(words));
        out_ << '\n';
      }
    };
  }

  void setup_decode(CLI::App& app) {
    auto* sub = app.add_subcommand("decode", "Decode token streams into captions");
    add_codec_flags(sub);
    sub->add_option("streams", positional_, "Token streams to decode (default: stdin lines)");
    handlers_["decode"] = [this] {
      const TokenCodec codec = codec_from_flags();
      for (const auto& line : inputs_or_stdin(positional_)) {
        out_ << join_words(codec.decode(parse_stream(line, codec.mode()), strict_)) << '\n';
      }
    };
  }

  void setup_train(CLI::App& app) {
    auto* sub = app.add_subcommand("train", "Train a captioner on toy scenes");
    sub->add_option("--config", config_path_, "Run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed_, "Training seed (overrides train.seed)");
    sub->add_option("--epochs", epochs_, "Epoch budget (overrides train.epochs)")->check(CLI::PositiveNumber);
    sub->add_option("--out", out_path_, "Output model directory")->required();
    handlers_["train"] = [this] {
      RunConfig cfg = config_or_default();
      if (seed_) cfg.train.seed = *seed_;
      if (epochs_) cfg.train.epochs = *epochs_;
      const Dataset data = load_or_generate(cfg);
      const TokenCodec codec = make_codec(data.train, cfg.model.radix_base, cfg.train.min_frequency);
      const int vocab_size = static_cast<int>(codec.word_vocab().size());
      if (cfg.model.vocab_size != 0 && cfg.model.vocab_size != vocab_size) {
        throw std::runtime_error("config vocab_size " + std::to_string(cfg.model.vocab_size) +
                                 " does not match the training vocabulary (" + std::to_string(vocab_size) + ")");
      }
      cfg.model.vocab_size = vocab_size;

      fs::create_directories(out_path_);
      write_text_file((fs::path(out_path_) / ModelDir::kConfig).string(), run_config_json(cfg));
      {
        std::ofstream f(fs::path(out_path_) / ModelDir::kVocab);
        codec.word_vocab().write(f);
      }
      CaptionerModel model(cfg.model, cfg.train.seed);
      TrainOptions opts = train_options(cfg);
      opts.checkpoint_path = (fs::path(out_path_) / ModelDir::kCheckpoint).string();

      std::ofstream metrics(fs::path(out_path_) / ModelDir::kMetrics);
      metrics << kMetricsHeader << '\n';
      const TrainRun run = train(model, codec, data.train, data.val, opts, [&](const EpochRecord& r) {
        metrics << metrics_row(r) << '\n' << std::flush;
        err_ << "epoch " << r.epoch << " step " << r.step << " loss " << r.loss << " val_exact " << r.val.exact_match
             << " (" << r.seconds << "s)\n";
      });
      err_ << "best epoch " << run.best_epoch << " val_exact " << run.best_exact_match << "\n";
      out_ << out_path_ << '\n';
    };
  }

  void add_model_flags(CLI::App* sub) {
    sub->add_option("--model", model_dir_, "Model directory written by train")->required()->check(CLI::ExistingDirectory);
    sub->add_option("--data", data_path_, "Scene file (JSON lines)")->required()->check(CLI::ExistingFile);
    sub->add_option("--beam-size", beam_size_, "Beam size; 1 is greedy (overrides eval.beam_size)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--max-len", max_len_, "Maximum stream length (overrides eval.max_len)")
        ->check(CLI::Range(2, 1 << 20));
  }

  EvalOptions eval_options(const RunConfig& cfg) const {
    EvalOptions o;
    o.beam_size = beam_size_.value_or(cfg.eval.beam_size);
    o.max_len = max_len_.value_or(cfg.eval.max_len);
    return o;
  }

  void setup_caption(CLI::App& app) {
    auto* sub = app.add_subcommand("caption", "Caption scenes with a trained model");
    add_model_flags(sub);
    handlers_["caption"] = [this] {
      const LoadedModel lm = load_model_dir(model_dir_);
      const EvalOptions opts = eval_options(lm.cfg);
      const FeatureOptions feats = feature_options(lm.cfg);
      for (const auto& scene : read_scenes_file(data_path_)) {
        const Tensor memory = lm.model->encode(
            scene_features(scene, lm.cfg.model.feature_dim, feats.noise, feats.noise_seed), scene_boxes(scene));
        CaptionerSequenceModel seq(*lm.model, memory, lm.codec.bos_id(), lm.codec.eos_id());
        const int max_len = std::min(opts.max_len, lm.cfg.model.max_len);
        const Hypothesis h = opts.beam_size == 1 ? greedy_decode(seq, max_len)
                                                 : beam_search(seq, BeamOptions{opts.beam_size, max_len, {}});
        out_ << caption_from_tokens(h.tokens, lm.codec) << '\n';
      }
    };
  }

  void setup_evaluate(CLI::App& app) {
    auto* sub = app.add_subcommand("evaluate", "Score a trained model on a scene file");
    add_model_flags(sub);
    sub->add_option("--train-data", train_data_path_, "Training scenes for the uniqueness statistic")
        ->check(CLI::ExistingFile);
    handlers_["evaluate"] = [this] {
      const LoadedModel lm = load_model_dir(model_dir_);
      const auto scenes = read_scenes_file(data_path_);
      std::set<std::string> train_captions;
      const std::string train_path = !train_data_path_.empty() ? train_data_path_ : lm.cfg.data.train_path;
      if (!train_path.empty()) {
        for (auto& c : scene_captions(read_scenes_file(train_path))) train_captions.insert(std::move(c));
      } else {
        const Dataset d = generate_dataset(lm.cfg.data.seed, lm.cfg.data.n_train, 1, 1);
        for (auto& c : scene_captions(d.train)) train_captions.insert(std::move(c));
      }
      const EvalResult r =
          evaluate(*lm.model, lm.codec, scenes, train_captions, feature_options(lm.cfg), eval_options(lm.cfg));
      nlohmann::ordered_json j;
      j["scenes"] = scenes.size();
      j["exact_match"] = r.exact_match;
      j["bleu1"] = r.bleu.bleu[0];
      j["bleu2"] = r.bleu.bleu[1];
      j["bleu3"] = r.bleu.bleu[2];
      j["bleu4"] = r.bleu.bleu[3];
      j["unique_frac"] = r.stats.unique_fraction;
      j["avg_len"] = r.stats.avg_word_count;
      out_ << j.dump(2) << '\n';
    };
  }

  void setup_count(CLI::App& app) {
    auto* sub = app.add_subcommand("count", "Count parameters of a configured model");
    sub->add_option("--config", config_path_, "Run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--name", name_, "Row name (default: config file stem)");
    sub->add_option("--radix-base", radix_base_, "Override model.radix_base (0 keeps the config value)")
        ->check(CLI::NonNegativeNumber);
    handlers_["count"] = [this] {
      RunConfig cfg = load_run_config(config_path_);
      if (radix_base_ > 0) cfg.model.radix_base = radix_base_;
      if (cfg.model.vocab_size < 1) throw std::runtime_error("count needs model.vocab_size in the config");
      const std::string name = name_.empty() ? fs::path(config_path_).stem().string() : name_;
      out_ << kTablesHeader << '\n' << report_row(name, count_from_config(cfg.model)) << '\n';
    };
  }

  void setup_tables(CLI::App& app) {
    auto* sub = app.add_subcommand("tables", "Parameter counts for the reference configurations");
    sub->add_option("--suite", suite_, "models, radix, attention, layers, reuse or all")
        ->capture_default_str()
        ->check(CLI::IsMember({"models", "radix", "attention", "layers", "reuse", "all"}));
    sub->add_option("--out", out_path_, "CSV file (default: stdout)");
    handlers_["tables"] = [this] {
      const std::string csv = emit_tables(config_suite(suite_));
      if (out_path_.empty()) {
        out_ << csv;
      } else {
        write_text_file(out_path_, csv);
      }
    };
  }

  void setup_layer_dist(CLI::App& app) {
    auto* sub = app.add_subcommand("layer-dist", "Pairwise parameter distance between stack layers");
    auto* model_opt = sub->add_option("--model", model_dir_, "Trained model directory")->check(CLI::ExistingDirectory);
    auto* config_opt = sub->add_option("--config", config_path_, "Run configuration of a freshly initialized model")
                           ->check(CLI::ExistingFile);
    model_opt->excludes(config_opt);
    sub->add_option("--seed", seed_, "Initialization seed with --config");
    sub->add_option("--stack", stack_, "encoder or decoder")
        ->capture_default_str()
        ->check(CLI::IsMember({"encoder", "decoder"}));
    sub->add_option("--metric", metric_, "msd (mean squared) or rms (root mean squared)")
        ->capture_default_str()
        ->check(CLI::IsMember({"msd", "rms"}));
    sub->add_flag("--clip", clip_, "Raise the minimum to the second-lowest value, as for plotting");
    sub->add_option("--out", out_path_, "CSV file (default: stdout)");
    handlers_["layer-dist"] = [this] {
      std::unique_ptr<CaptionerModel> model;
      if (!model_dir_.empty()) {
        model = std::move(load_model_dir(model_dir_).model);
      } else {
        RunConfig cfg = config_or_default();
        if (cfg.model.vocab_size < 1) cfg.model.vocab_size = static_cast<int>(toy_words().size()) + 1;
        model = std::make_unique<CaptionerModel>(cfg.model, seed_.value_or(cfg.train.seed));
      }
      const LayerDistances d =
          layer_distance_matrix(*model, stack_ == "encoder" ? Stack::encoder : Stack::decoder);
      Tensor m = metric_ == "msd" ? d.msd : d.rms;
      if (clip_) m = clip_minimum(m);
      if (out_path_.empty()) {
        out_ << matrix_csv(m);
      } else {
        write_text_file(out_path_, matrix_csv(m));
      }
    };
  }
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Compact transformer captioner: radix vocabularies, layer and attention sharing", "acort"};
  app.set_version_flag("--version", "acort 0.1.0");
  Commands commands(out, err);
  commands.setup(app);
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }
  try {
    commands.run(app);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace acort
