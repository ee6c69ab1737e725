#pragma once

#include <array>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "acort/model.hpp"

namespace acort {

using Words = std::vector<std::string>;

/// bleu[n - 1] is corpus BLEU-n: clipped n-gram precisions pooled over the
/// corpus, geometric mean up to n, brevity penalty. No smoothing, so a zero
/// precision at any order up to n gives 0.
struct BleuScores {
  std::array<double, 4> bleu{};
};

BleuScores corpus_bleu(std::span<const Words> hypotheses, std::span<const Words> references);

struct CaptionStats {
  /// Fraction of generated captions not found verbatim in the training set.
  double unique_fraction = 0.0;
  /// Mean length in words.
  double avg_word_count = 0.0;
};

CaptionStats caption_stats(std::span<const std::string> generated, const std::set<std::string>& training_captions);

/// Concatenation of a layer's parameters, each L2-normalized along its
/// last axis and flattened.
std::vector<double> normalized_layer_vector(std::span<const ParameterPtr> params);

struct LayerDistances {
  Tensor msd;  // mean squared distance, [L x L]
  Tensor rms;  // its square root
};

/// Pairwise distances between stack positions. Throws if layers differ in
/// parameter shapes or the stack has fewer than two positions.
LayerDistances layer_distance_matrix(const CaptionerModel& model, Stack stack);
LayerDistances layer_distance_matrix(const std::vector<std::vector<ParameterPtr>>& layers);

/// Raises every entry equal to the minimum up to the second-lowest distinct
/// value, for plotting.
Tensor clip_minimum(const Tensor& matrix);

/// Square matrix as CSV rows, full double precision.
std::string matrix_csv(const Tensor& matrix);

}  // namespace acort
