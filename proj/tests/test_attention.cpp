#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "acort/attention.hpp"
#include "grad_check.hpp"

using namespace acort;
using acort::testing::check_gradients;
using acort::testing::random_tensor;
using acort::testing::scalarize;

namespace {

constexpr AttentionShareMode kModes[] = {AttentionShareMode::no_share, AttentionShareMode::share_qk,
                                         AttentionShareMode::share_kv};

std::vector<BoxGeometry> random_boxes(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(0.0, 1.0), ext(0.05, 0.6);
  std::vector<BoxGeometry> out(n);
  for (auto& b : out) b = BoxGeometry{pos(rng), pos(rng), ext(rng), ext(rng)};
  return out;
}

}  // namespace

TEST(ShareMode, ParseAndPrint) {
  for (AttentionShareMode m : kModes) EXPECT_EQ(parse_share_mode(to_string(m)), m);
  EXPECT_EQ(parse_share_mode("Share-KV"), AttentionShareMode::share_kv);
  EXPECT_EQ(parse_share_mode("SHARE_QK"), AttentionShareMode::share_qk);
  EXPECT_EQ(parse_share_mode("no-share"), AttentionShareMode::no_share);
  EXPECT_THROW(parse_share_mode("share_qv"), std::invalid_argument);
}

TEST(AttentionWeights, DistinctProjectionIdentities) {
  Rng rng(1);
  for (AttentionShareMode m : kModes) {
    const AttentionWeights w = make_attention_weights("a", 16, 4, m, rng);
    std::set<const Parameter*> matrices = {w.q.weight.get(), w.k.weight.get(), w.v.weight.get(), w.o.weight.get()};
    const std::size_t expected = m == AttentionShareMode::no_share ? 4u : 3u;
    EXPECT_EQ(matrices.size(), expected);
    EXPECT_EQ(w.distinct_projections(), static_cast<int>(expected));
    std::size_t total = 0;
    for (const auto& p : w.parameters()) total += p->size();
    EXPECT_EQ(total, expected * (16 * 16 + 16));
    EXPECT_NE(w.o.weight, w.q.weight);
  }
  EXPECT_THROW(make_attention_weights("a", 10, 4, AttentionShareMode::no_share, rng), std::invalid_argument);
}

TEST(ProjectionPlan, ReuseOnlyWhereSourcesCoincide) {
  using M = AttentionShareMode;
  EXPECT_EQ(plan_projections(M::share_qk, true, true, true).projections, 2);
  EXPECT_TRUE(plan_projections(M::share_qk, true, true, true).key_from_query);
  EXPECT_EQ(plan_projections(M::share_qk, false, true, true).projections, 3);
  EXPECT_TRUE(plan_projections(M::share_kv, true, true, true).value_from_key);
  EXPECT_TRUE(plan_projections(M::share_kv, false, true, true).value_from_key);
  EXPECT_EQ(plan_projections(M::share_kv, false, false, true).projections, 3);
  EXPECT_EQ(plan_projections(M::no_share, true, true, true).projections, 3);
  EXPECT_EQ(plan_projections(M::share_kv, true, true, false).projections, 3);
}

TEST(Attention, ReusePathsMatchNaiveRecomputation) {
  std::mt19937_64 data(2);
  for (AttentionShareMode m : {AttentionShareMode::share_qk, AttentionShareMode::share_kv}) {
    Rng rng(3);
    const AttentionWeights w = make_attention_weights("a", 16, 4, m, rng);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t n = 1 + trial % 7;
      Graph g;
      const Var x = g.constant(random_tensor({n, 16}, data, -2, 2));
      const Mask causal = Mask::causal(n);
      AttentionOptions fast{trial % 2 ? &causal : nullptr, std::nullopt, true, nullptr};
      AttentionOptions naive = fast;
      naive.allow_reuse = false;
      const Tensor a = multi_head_attention(x, x, x, w, fast).value();
      const Tensor b = multi_head_attention(x, x, x, w, naive).value();
      EXPECT_LE(max_abs_diff(a, b), 1e-12);
    }
  }
}

TEST(Attention, CrossAttentionKeyValueReuse) {
  std::mt19937_64 data(4);
  Rng rng(5);
  const AttentionWeights w = make_attention_weights("c", 16, 2, AttentionShareMode::share_kv, rng);
  for (int trial = 0; trial < 100; ++trial) {
    Graph g;
    const Var q = g.constant(random_tensor({3 + trial % 4, 16}, data));
    const Var mem = g.constant(random_tensor({1 + trial % 5, 16}, data));
    const Tensor fast = multi_head_attention(q, mem, mem, w).value();
    AttentionOptions naive;
    naive.allow_reuse = false;
    const Tensor slow = multi_head_attention(q, mem, mem, w, naive).value();
    EXPECT_LE(max_abs_diff(fast, slow), 1e-12);
  }
}

TEST(Attention, FastPathComputesFewerNodes) {
  Rng rng(6);
  const AttentionWeights w = make_attention_weights("a", 8, 2, AttentionShareMode::share_kv, rng);
  Graph g1, g2;
  std::mt19937_64 data(7);
  const Tensor x = random_tensor({4, 8}, data);
  const Var a = g1.constant(x);
  multi_head_attention(a, a, a, w);
  const Var b = g2.constant(x);
  AttentionOptions naive;
  naive.allow_reuse = false;
  multi_head_attention(b, b, b, w, naive);
  EXPECT_LT(g1.size(), g2.size());
}

TEST(Attention, SingleRegionReducesToValueThenOutput) {
  std::mt19937_64 data(8);
  for (AttentionShareMode m : kModes) {
    Rng rng(9);
    const AttentionWeights w = make_attention_weights("a", 12, 3, m, rng);
    const Tensor x = random_tensor({1, 12}, data);
    Graph g;
    const Var xv = g.constant(x);
    const Tensor got = multi_head_attention(xv, xv, xv, w).value();
    const Tensor want = apply(w.o, apply(w.v, x));
    EXPECT_LE(max_abs_diff(got, want), 1e-12);
  }
}

TEST(Attention, ProbabilitiesRespectMask) {
  Rng rng(10);
  const AttentionWeights w = make_attention_weights("a", 8, 2, AttentionShareMode::no_share, rng);
  std::mt19937_64 data(11);
  Graph g;
  const Var x = g.constant(random_tensor({5, 8}, data));
  const Mask causal = Mask::causal(5);
  std::vector<Var> probs;
  AttentionOptions opts;
  opts.mask = &causal;
  opts.probabilities = &probs;
  multi_head_attention(x, x, x, w, opts);
  ASSERT_EQ(probs.size(), 2u);
  for (const Var& p : probs) {
    for (std::size_t r = 0; r < 5; ++r) {
      for (std::size_t c = r + 1; c < 5; ++c) EXPECT_EQ(p.value().at(r, c), 0.0);
    }
  }
}

TEST(Attention, KeyBiasGetsNoGradient) {
  // Adding the same vector to every key shifts each score row by a constant.
  std::mt19937_64 data(15);
  Rng rng(16);
  const AttentionWeights w = make_attention_weights("a", 8, 2, AttentionShareMode::no_share, rng);
  auto x = make_parameter("x", random_tensor({4, 8}, data));
  for (const auto& p : w.parameters()) p->zero_grad();
  Graph g;
  const Var xv = g.param(x);
  g.backward(scalarize(multi_head_attention(xv, xv, xv, w, {})));
  bool found = false;
  for (const auto& p : w.parameters()) {
    if (p->name() != "a.w_k.bias") continue;
    found = true;
    for (double v : p->grad().data()) EXPECT_LE(std::abs(v), 1e-14);
  }
  EXPECT_TRUE(found);
}

TEST(Attention, GradientsMatchFiniteDifferences) {
  std::mt19937_64 data(12);
  for (AttentionShareMode m : kModes) {
    Rng rng(13);
    const AttentionWeights w = make_attention_weights("a", 8, 2, m, rng);
    const GateWeights gw = make_gate_weights("gate", 2, rng);
    // Positive gate bias keeps the relu away from its kink.
    for (auto& b : gw.bias->value().data()) b = 0.5;
    auto x = make_parameter("x", random_tensor({3, 8}, data));
    std::mt19937_64 box_rng(14);
    const auto boxes = random_boxes(3, box_rng);
    const Tensor emb = geometry_embedding(boxes);
    std::vector<ParameterPtr> params = w.parameters();
    params.push_back(gw.weight);
    params.push_back(gw.bias);
    params.push_back(x);
    const auto r = check_gradients(params, [&](Graph& g) {
      AttentionOptions opts;
      opts.gate = geometric_gate(g.constant(emb), gw);
      const Var xv = g.param(x);
      return scalarize(multi_head_attention(xv, xv, xv, w, opts));
    });
    EXPECT_LT(r.max_rel_error, 1e-6) << to_string(m);
  }
}

TEST(Attention, RejectsMismatchedShapes) {
  Rng rng(15);
  const AttentionWeights w = make_attention_weights("a", 8, 2, AttentionShareMode::no_share, rng);
  Graph g;
  const Var x = g.constant(Tensor({2, 8}));
  const Var narrow = g.constant(Tensor({2, 6}));
  const Var y = g.constant(Tensor({3, 8}));
  EXPECT_THROW(multi_head_attention(narrow, x, x, w), std::invalid_argument);
  EXPECT_THROW(multi_head_attention(x, x, y, w), std::invalid_argument);
  AttentionOptions opts;
  opts.gate = g.constant(Tensor({3, 2}));
  EXPECT_THROW(multi_head_attention(x, x, x, w, opts), std::invalid_argument);
}

TEST(Geometry, IdenticalBoxesGiveZeroRelation) {
  const std::vector<BoxGeometry> boxes(3, BoxGeometry{0.3, 0.6, 0.2, 0.4});
  const Tensor rel = relative_geometry(boxes);
  for (double v : rel.data()) EXPECT_EQ(v, 0.0);
  const Tensor emb = geometry_embedding(boxes);
  // sin(0) = 0 and cos(0) = 1 in every block.
  for (std::size_t r = 0; r < emb.rows(); ++r) {
    for (std::size_t f = 0; f < 4; ++f) {
      for (std::size_t k = 0; k < 8; ++k) {
        EXPECT_EQ(emb.at(r, f * 16 + k), 0.0);
        EXPECT_EQ(emb.at(r, f * 16 + 8 + k), 1.0);
      }
    }
  }
  // The gate then depends on the learned bias alone.
  Rng rng(16);
  const GateWeights gw = make_gate_weights("g", 2, rng);
  const Tensor gate = geometric_gate(boxes, gw);
  const Tensor gate_other = geometric_gate(std::vector<BoxGeometry>(3, BoxGeometry{0.9, 0.1, 0.5, 0.05}), gw);
  EXPECT_EQ(gate, gate_other);
}

TEST(Geometry, RelativeFeaturesByHand) {
  const std::vector<BoxGeometry> boxes = {{0.2, 0.3, 0.1, 0.2}, {0.5, 0.1, 0.4, 0.1}};
  const Tensor rel = relative_geometry(boxes);
  ASSERT_EQ(rel.rows(), 4u);
  // Row m*n + j with m = 0, j = 1.
  EXPECT_NEAR(rel.at(1, 0), 0.3 / 0.1, 1e-12);
  EXPECT_NEAR(rel.at(1, 1), -0.2 / 0.2, 1e-12);
  EXPECT_NEAR(rel.at(1, 2), std::log(4.0), 1e-12);
  EXPECT_NEAR(rel.at(1, 3), std::log(0.5), 1e-12);
  // m = 1, j = 0.
  EXPECT_NEAR(rel.at(2, 0), -0.3 / 0.4, 1e-12);
  EXPECT_NEAR(rel.at(2, 2), std::log(0.25), 1e-12);
  EXPECT_THROW(relative_geometry(std::vector<BoxGeometry>{{0.5, 0.5, 0.0, 0.1}}), std::invalid_argument);
}

TEST(Geometry, GateTranslationAndScaleInvariant) {
  std::mt19937_64 rng(17);
  Rng wrng(18);
  const GateWeights gw = make_gate_weights("g", 4, wrng);
  for (auto& b : gw.bias->value().data()) b = 0.3;
  std::uniform_real_distribution<double> shift(-5.0, 5.0), factor(0.1, 10.0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto boxes = random_boxes(2 + trial % 5, rng);
    const Tensor base = geometric_gate(boxes, gw);
    auto moved = boxes;
    const double dx = shift(rng), dy = shift(rng);
    for (auto& b : moved) {
      b.cx += dx;
      b.cy += dy;
    }
    EXPECT_LE(max_abs_diff(geometric_gate(moved, gw), base), 1e-12);
    auto scaled = boxes;
    const double s = factor(rng);
    for (auto& b : scaled) b = BoxGeometry{b.cx * s, b.cy * s, b.w * s, b.h * s};
    EXPECT_LE(max_abs_diff(geometric_gate(scaled, gw), base), 1e-12);
  }
}

TEST(Geometry, GateMatchesGraphForm) {
  std::mt19937_64 rng(19);
  Rng wrng(20);
  const GateWeights gw = make_gate_weights("g", 3, wrng);
  const auto boxes = random_boxes(4, rng);
  const Tensor plain = geometric_gate(boxes, gw);
  Graph g;
  const Tensor flat = geometric_gate(g.constant(geometry_embedding(boxes)), gw).value();
  ASSERT_EQ(flat.rows(), 16u);
  for (std::size_t h = 0; h < 3; ++h) {
    for (std::size_t i = 0; i < 16; ++i) {
      EXPECT_EQ(plain[h * 16 + i], flat.at(i, h));
      EXPECT_GE(flat.at(i, h), 0.0);
    }
  }
}
