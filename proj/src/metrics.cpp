#include "acort/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "acort/vocab_radix.hpp"

namespace acort {

namespace {

std::map<std::vector<std::string>, int> ngram_counts(const Words& words, std::size_t n) {
  std::map<std::vector<std::string>, int> counts;
  if (words.size() < n) return counts;
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    ++counts[std::vector<std::string>(words.begin() + static_cast<std::ptrdiff_t>(i),
                                      words.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

}  // namespace

BleuScores corpus_bleu(std::span<const Words> hypotheses, std::span<const Words> references) {
  if (hypotheses.size() != references.size()) throw std::invalid_argument("hypothesis and reference counts differ");
  if (hypotheses.empty()) throw std::invalid_argument("empty corpus");

  std::array<double, 4> matched{};
  std::array<double, 4> total{};
  double hyp_len = 0.0;
  double ref_len = 0.0;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    hyp_len += static_cast<double>(hypotheses[s].size());
    ref_len += static_cast<double>(references[s].size());
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto hyp = ngram_counts(hypotheses[s], n);
      const auto ref = ngram_counts(references[s], n);
      for (const auto& [gram, count] : hyp) {
        auto it = ref.find(gram);
        matched[n - 1] += it == ref.end() ? 0 : std::min(count, it->second);
        total[n - 1] += count;
      }
    }
  }

  BleuScores out;
  if (hyp_len == 0.0) return out;
  const double bp = hyp_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / hyp_len);
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    if (matched[n - 1] == 0.0) {
      for (std::size_t k = n; k <= 4; ++k) out.bleu[k - 1] = 0.0;
      break;
    }
    log_sum += std::log(matched[n - 1] / total[n - 1]);
    out.bleu[n - 1] = bp * std::exp(log_sum / static_cast<double>(n));
  }
  return out;
}

CaptionStats caption_stats(std::span<const std::string> generated, const std::set<std::string>& training_captions) {
  if (generated.empty()) throw std::invalid_argument("no generated captions");
  CaptionStats stats;
  std::size_t novel = 0;
  std::size_t words = 0;
  for (const auto& c : generated) {
    if (!training_captions.contains(c)) ++novel;
    words += tokenize(c).size();
  }
  stats.unique_fraction = static_cast<double>(novel) / static_cast<double>(generated.size());
  stats.avg_word_count = static_cast<double>(words) / static_cast<double>(generated.size());
  return stats;
}

std::vector<double> normalized_layer_vector(std::span<const ParameterPtr> params) {
  std::vector<double> out;
  for (const auto& p : params) {
    const Tensor& t = p->value();
    for (std::size_t r = 0; r < t.rows(); ++r) {
      auto row = t.row(r);
      double norm = 0.0;
      for (double v : row) norm += v * v;
      norm = std::sqrt(norm);
      for (double v : row) out.push_back(norm > 0.0 ? v / norm : 0.0);
    }
  }
  return out;
}

LayerDistances layer_distance_matrix(const std::vector<std::vector<ParameterPtr>>& layers) {
  if (layers.size() < 2) throw std::invalid_argument("layer distance needs at least two layers");
  for (const auto& layer : layers) {
    if (layer.size() != layers.front().size()) throw std::invalid_argument("layers differ in parameter count");
    for (std::size_t i = 0; i < layer.size(); ++i) {
      if (!layer[i]->value().same_shape(layers.front()[i]->value())) {
        throw std::invalid_argument("layers differ in parameter shapes");
      }
    }
  }
  std::vector<std::vector<double>> vectors;
  for (const auto& layer : layers) vectors.push_back(normalized_layer_vector(layer));

  const std::size_t n = layers.size();
  LayerDistances d{Tensor({n, n}), Tensor({n, n})};
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      double acc = 0.0;
      for (std::size_t k = 0; k < vectors[a].size(); ++k) {
        const double diff = vectors[a][k] - vectors[b][k];
        acc += diff * diff;
      }
      const double msd = vectors[a].empty() ? 0.0 : acc / static_cast<double>(vectors[a].size());
      d.msd.at(a, b) = d.msd.at(b, a) = msd;
      d.rms.at(a, b) = d.rms.at(b, a) = std::sqrt(msd);
    }
  }
  return d;
}

LayerDistances layer_distance_matrix(const CaptionerModel& model, Stack stack) {
  std::vector<std::vector<ParameterPtr>> layers;
  for (int l = 0; l < model.num_layers(stack); ++l) layers.push_back(model.layer_parameters(stack, l));
  return layer_distance_matrix(layers);
}

Tensor clip_minimum(const Tensor& matrix) {
  std::vector<double> values(matrix.data().begin(), matrix.data().end());
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  Tensor out = matrix;
  if (values.size() < 2) return out;
  for (auto& v : out.data()) {
    if (v == values[0]) v = values[1];
  }
  return out;
}

std::string matrix_csv(const Tensor& matrix) {
  std::string out;
  char buf[40];
  for (std::size_t r = 0; r < matrix.rows(); ++r) {
    for (std::size_t c = 0; c < matrix.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", matrix.at(r, c));
      if (c > 0) out += ',';
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace acort
