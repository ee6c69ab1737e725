#include "acort/decoding.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace acort {

namespace {

class CaptionerCursor : public DecoderCursor {
 public:
  CaptionerCursor(const CaptionerModel& model, const Tensor& memory) : decoder_(model, memory) {}

  std::unique_ptr<DecoderCursor> clone() const override { return std::make_unique<CaptionerCursor>(*this); }
  std::vector<double> feed(int token) override { return decoder_.feed(token); }

 private:
  IncrementalDecoder decoder_;
};

struct Live {
  Hypothesis hyp;
  std::unique_ptr<DecoderCursor> cursor;
  std::vector<double> next;  // log-probs of the following token
};

struct Candidate {
  double score;
  std::size_t parent;
  int token;
};

// Higher score first, then lower token id, then earlier parent.
bool candidate_before(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.token != b.token) return a.token < b.token;
  return a.parent < b.parent;
}

double rank_of(const Hypothesis& h, const RankFn& rank) {
  return rank ? rank(h) : h.score;
}

// Higher rank first, then shorter prefix.
bool hypothesis_before(const Hypothesis& a, const Hypothesis& b, const RankFn& rank) {
  const double ra = rank_of(a, rank);
  const double rb = rank_of(b, rank);
  if (ra != rb) return ra > rb;
  if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
  return a.tokens < b.tokens;
}

}  // namespace

CaptionerSequenceModel::CaptionerSequenceModel(const CaptionerModel& model, Tensor memory, int bos_id, int eos_id)
    : model_(&model), memory_(std::move(memory)), bos_(bos_id), eos_(eos_id) {}

std::unique_ptr<DecoderCursor> CaptionerSequenceModel::start() const {
  return std::make_unique<CaptionerCursor>(*model_, memory_);
}

Hypothesis greedy_decode(const SequenceModel& model, int max_len) {
  if (max_len < 2) throw std::invalid_argument("max_len must be at least 2");
  Hypothesis h;
  h.tokens.push_back(model.bos_id());
  auto cursor = model.start();
  std::vector<double> next = cursor->feed(model.bos_id());
  while (static_cast<int>(h.tokens.size()) < max_len) {
    // max_element returns the first maximum, i.e. the lowest token id.
    const auto best = std::max_element(next.begin(), next.end());
    const int token = static_cast<int>(best - next.begin());
    h.tokens.push_back(token);
    h.score += *best;
    if (token == model.eos_id()) {
      h.finished = true;
      break;
    }
    if (static_cast<int>(h.tokens.size()) < max_len) next = cursor->feed(token);
  }
  return h;
}

Hypothesis beam_search(const SequenceModel& model, const BeamOptions& options) {
  if (options.beam_size < 1) throw std::invalid_argument("beam size must be at least 1");
  if (options.max_len < 2) throw std::invalid_argument("max_len must be at least 2");
  const auto beam = static_cast<std::size_t>(options.beam_size);

  std::vector<Live> alive;
  {
    Live root;
    root.hyp.tokens.push_back(model.bos_id());
    root.cursor = model.start();
    root.next = root.cursor->feed(model.bos_id());
    alive.push_back(std::move(root));
  }
  std::vector<Hypothesis> finished;

  auto best_finished_rank = [&]() {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& f : finished) best = std::max(best, rank_of(f, options.rank));
    return best;
  };

  while (!alive.empty() && static_cast<int>(alive.front().hyp.tokens.size()) < options.max_len) {
    std::vector<Candidate> candidates;
    for (std::size_t p = 0; p < alive.size(); ++p) {
      const auto& next = alive[p].next;
      for (std::size_t t = 0; t < next.size(); ++t) {
        candidates.push_back(Candidate{alive[p].hyp.score + next[t], p, static_cast<int>(t)});
      }
    }
    const std::size_t keep = std::min(beam, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      candidate_before);
    candidates.resize(keep);

    std::vector<Live> next_alive;
    for (const auto& c : candidates) {
      Hypothesis h = alive[c.parent].hyp;
      h.tokens.push_back(c.token);
      h.score = c.score;
      if (c.token == model.eos_id()) {
        h.finished = true;
        finished.push_back(std::move(h));
        continue;
      }
      Live child;
      child.hyp = std::move(h);
      child.cursor = alive[c.parent].cursor->clone();
      if (static_cast<int>(child.hyp.tokens.size()) < options.max_len) child.next = child.cursor->feed(c.token);
      next_alive.push_back(std::move(child));
    }
    alive = std::move(next_alive);

    // Raw scores only fall as tokens are added, so once the best finished
    // hypothesis ranks at least as high as every live one, nothing live can
    // overtake it. Custom rankers get no early stop.
    if (!finished.empty() && !options.rank) {
      double best_alive = -std::numeric_limits<double>::infinity();
      for (const auto& a : alive) best_alive = std::max(best_alive, a.hyp.score);
      if (best_finished_rank() >= best_alive) break;
    }
  }

  const RankFn& rank = options.rank;
  auto pick = [&](std::vector<Hypothesis>& pool) {
    return *std::min_element(pool.begin(), pool.end(),
                             [&](const Hypothesis& a, const Hypothesis& b) { return hypothesis_before(a, b, rank); });
  };
  if (!finished.empty()) return pick(finished);
  std::vector<Hypothesis> unfinished;
  for (auto& a : alive) unfinished.push_back(std::move(a.hyp));
  if (unfinished.empty()) throw std::logic_error("beam search ended with no hypotheses");
  return pick(unfinished);
}

double sequence_score(const SequenceModel& model, const std::vector<int>& tokens) {
  if (tokens.empty() || tokens.front() != model.bos_id()) throw std::invalid_argument("sequence must start with BOS");
  auto cursor = model.start();
  double score = 0.0;
  std::vector<double> next = cursor->feed(tokens.front());
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    const int t = tokens[i];
    if (t < 0 || static_cast<std::size_t>(t) >= next.size()) throw std::out_of_range("token outside vocabulary");
    score += next[static_cast<std::size_t>(t)];
    if (i + 1 < tokens.size()) next = cursor->feed(t);
  }
  return score;
}

std::string caption_from_tokens(const std::vector<int>& tokens, const TokenCodec& codec) {
  return join_words(codec.decode(TokenStream{tokens, codec.mode()}, false));
}

}  // namespace acort
