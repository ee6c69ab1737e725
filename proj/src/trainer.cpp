#include "acort/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "acort/checkpoint.hpp"
#include "acort/decoding.hpp"
#include "acort/optimizer.hpp"

namespace acort {

namespace {

struct Example {
  Tensor features;
  std::vector<BoxGeometry> boxes;
  std::vector<int> tokens;
};

Example make_example(const Scene& scene, const TokenCodec& codec, const ModelConfig& cfg,
                     const FeatureOptions& features) {
  Example ex;
  ex.features = scene_features(scene, cfg.feature_dim, features.noise, features.noise_seed);
  ex.boxes = scene_boxes(scene);
  ex.tokens = codec.encode(scene.caption).ids;
  if (static_cast<int>(ex.tokens.size()) > cfg.max_len) {
    throw std::invalid_argument("scene " + std::to_string(scene.id) + " needs " + std::to_string(ex.tokens.size()) +
                                " tokens, above max_len " + std::to_string(cfg.max_len));
  }
  return ex;
}

std::vector<Tensor> snapshot(const std::vector<ParameterPtr>& params) {
  std::vector<Tensor> out;
  for (const auto& p : params) out.push_back(p->value());
  return out;
}

void restore(const std::vector<ParameterPtr>& params, const std::vector<Tensor>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value() = values[i];
}

}  // namespace

EvalResult evaluate(const CaptionerModel& model, const TokenCodec& codec, const std::vector<Scene>& scenes,
                    const std::set<std::string>& training_captions, const FeatureOptions& features,
                    const EvalOptions& options) {
  if (scenes.empty()) throw std::invalid_argument("no scenes to evaluate");
  const std::size_t count =
      options.limit > 0 ? std::min(scenes.size(), static_cast<std::size_t>(options.limit)) : scenes.size();
  const int max_len = std::min(options.max_len, model.config().max_len);

  EvalResult result;
  std::vector<Words> hyps;
  std::vector<Words> refs;
  std::size_t exact = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const Scene& scene = scenes[i];
    const Tensor memory = model.encode(scene_features(scene, model.config().feature_dim, features.noise,
                                                      features.noise_seed),
                                       scene_boxes(scene));
    CaptionerSequenceModel seq(model, memory, codec.bos_id(), codec.eos_id());
    const Hypothesis h = options.beam_size == 1 ? greedy_decode(seq, max_len)
                                                : beam_search(seq, BeamOptions{options.beam_size, max_len, {}});
    Words words = codec.decode(TokenStream{h.tokens, codec.mode()}, false);
    if (words == scene.caption) ++exact;
    result.captions.push_back(join_words(words));
    hyps.push_back(std::move(words));
    refs.push_back(scene.caption);
  }
  result.exact_match = static_cast<double>(exact) / static_cast<double>(count);
  result.bleu = corpus_bleu(hyps, refs);
  result.stats = caption_stats(result.captions, training_captions);
  return result;
}

TokenCodec make_codec(const std::vector<Scene>& train_set, int radix_base, std::int64_t min_frequency) {
  const auto corpus = scene_captions(train_set);
  WordVocab vocab = build_vocab(corpus, min_frequency);
  return radix_base > 0 ? TokenCodec::radix(std::move(vocab), radix_base) : TokenCodec::word_level(std::move(vocab));
}

TrainRun train(CaptionerModel& model, const TokenCodec& codec, const std::vector<Scene>& train_set,
               const std::vector<Scene>& val_set, const TrainOptions& options, const EpochCallback& on_epoch) {
  const ModelConfig& cfg = model.config();
  if (train_set.empty()) throw std::invalid_argument("empty training set");
  if (val_set.empty()) throw std::invalid_argument("empty validation set");
  if (options.batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
  if (options.epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (options.dropout < 0.0 || options.dropout >= 1.0) throw std::invalid_argument("dropout must be in [0, 1)");
  if (codec.encoded_size() != cfg.embedding_rows()) {
    throw std::invalid_argument("codec has " + std::to_string(codec.encoded_size()) + " tokens, model expects " +
                                std::to_string(cfg.embedding_rows()));
  }

  std::vector<Example> examples;
  examples.reserve(train_set.size());
  for (const auto& s : train_set) examples.push_back(make_example(s, codec, cfg, options.features));
  const auto train_captions_list = scene_captions(train_set);
  const std::set<std::string> train_captions(train_captions_list.begin(), train_captions_list.end());

  const std::vector<ParameterPtr> params = model.parameters();
  Adam adam(params);
  const double peak =
      options.lr_peak > 0.0 ? options.lr_peak : NoamSchedule::default_peak(cfg.hidden_size, options.warmup_steps);
  const NoamSchedule schedule(peak, options.warmup_steps);

  std::mt19937_64 rng(options.seed);
  std::mt19937_64 dropout_rng(options.seed ^ 0x64726f70u);
  const Dropout drop{options.dropout, &dropout_rng};
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainRun run;
  std::vector<Tensor> best;
  bool stop = false;
  for (int epoch = 1; epoch <= options.epochs && !stop; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    if (options.resample_noise && options.features.noise > 0.0) {
      const std::uint64_t epoch_seed = options.features.noise_seed + static_cast<std::uint64_t>(epoch);
      for (std::size_t i = 0; i < examples.size(); ++i) {
        examples[i].features = scene_features(train_set[i], cfg.feature_dim, options.features.noise, epoch_seed);
      }
    }
    double epoch_loss = 0.0;
    double epoch_tokens = 0.0;

    for (std::size_t begin = 0; begin < order.size() && !stop; begin += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(options.batch_size));
      double batch_tokens = 0.0;
      for (std::size_t i = begin; i < end; ++i) batch_tokens += static_cast<double>(examples[order[i]].tokens.size() - 1);

      Graph g;
      Var loss;
      try {
        for (std::size_t i = begin; i < end; ++i) {
          const Example& ex = examples[order[i]];
          const double weight = static_cast<double>(ex.tokens.size() - 1) / batch_tokens;
          Var term = scale(model.caption_loss(g, ex.features, ex.boxes, ex.tokens, drop), weight);
          loss = loss.valid() ? add(loss, term) : term;
        }
      } catch (const NonFiniteError& e) {
        throw TrainingDiverged("training diverged at step " + std::to_string(run.steps + 1) + ", epoch " +
                               std::to_string(epoch) + ": " + e.what());
      }
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw TrainingDiverged("training diverged at step " + std::to_string(run.steps + 1) + ": loss is " +
                               std::to_string(value));
      }
      g.backward(loss);
      ++run.steps;
      adam.step(schedule.rate(run.steps));
      run.step_losses.push_back(value);
      epoch_loss += value * batch_tokens;
      epoch_tokens += batch_tokens;
      if (options.max_steps > 0 && run.steps >= options.max_steps) stop = true;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.step = run.steps;
    rec.loss = epoch_loss / epoch_tokens;
    rec.val = evaluate(model, codec, val_set, train_captions, options.features, options.eval);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (rec.val.exact_match > run.best_exact_match) {
      run.best_exact_match = rec.val.exact_match;
      run.best_epoch = epoch;
      best = snapshot(params);
      if (!options.checkpoint_path.empty()) save_checkpoint_file(options.checkpoint_path, params);
    }
    run.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (options.target_exact_match && rec.val.exact_match >= *options.target_exact_match) stop = true;
  }
  if (!best.empty()) restore(params, best);
  return run;
}

std::string metrics_row(const EpochRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%.6f,%.4f,%.4f,%.4f,%.4f,%.3f", r.step, r.loss, r.val.exact_match,
                r.val.bleu.bleu[0], r.val.bleu.bleu[3], r.val.stats.unique_fraction, r.val.stats.avg_word_count);
  return buf;
}

}  // namespace acort
