#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "support.hpp"
#include "vigtext/error.hpp"
#include "vigtext/rng.hpp"

using namespace vigtext;
using nlohmann::json;
using vigtext::testing::dense_gat;
using vigtext::testing::fixture;
using vigtext::testing::gradient_check;
using vigtext::testing::mixed_dual_graph;
using vigtext::testing::TempDir;

namespace {

Eigen::MatrixXd matrix(const json& rows) {
  Eigen::MatrixXd m(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c].get<double>();
  }
  return m;
}

Eigen::VectorXd vector(const json& v) {
  Eigen::VectorXd out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out(i) = v[i].get<double>();
  return out;
}

GatLayerParams random_layer(int in, int hidden, int heads, std::uint64_t seed) {
  Rng rng(seed);
  GatLayerParams p;
  for (int h = 0; h < heads; ++h) {
    Eigen::MatrixXd w(hidden, in);
    for (auto& v : w.reshaped()) v = rng.uniform(-1, 1);
    Eigen::VectorXd a(2 * hidden);
    for (auto& v : a) v = rng.uniform(-1, 1);
    p.weight.push_back(w);
    p.attention.push_back(a);
  }
  return p;
}

Eigen::MatrixXd random_features(int n, int d, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd x(n, d);
  for (auto& v : x.reshaped()) v = rng.uniform(-1, 1);
  return x;
}

GnnConfig small_config(int in_dim) {
  GnnConfig c;
  c.in_dim = in_dim;
  c.hidden = 3;
  c.heads = 2;
  c.layers = 3;
  c.dropout = 0.0;
  return c;
}

}  // namespace

TEST(GatLayer, SingleNodeIsProjection) {
  const auto p = random_layer(4, 3, 2, 1);
  const Eigen::MatrixXd x = random_features(1, 4, 2);
  const auto out = gat_layer(x, {}, p);
  Eigen::RowVectorXd expect(6);
  expect << (p.weight[0] * x.row(0).transpose()).transpose(), (p.weight[1] * x.row(0).transpose()).transpose();
  EXPECT_LT((out.row(0) - expect).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(GatLayer, IdenticalNodesGiveIdenticalRows) {
  const auto p = random_layer(4, 3, 2, 3);
  Eigen::MatrixXd x(2, 4);
  x.row(0) = random_features(1, 4, 4).row(0);
  x.row(1) = x.row(0);
  const auto out = gat_layer(x, {{0, 1}}, p);
  EXPECT_LT((out.row(0) - out.row(1)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(GatLayer, MatchesDenseOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto p = random_layer(6, 4, 3, seed);
    const auto x = random_features(5, 6, seed + 100);
    const std::vector<std::pair<int, int>> edges = {{0, 1}, {1, 2}, {2, 3}, {0, 4}, {1, 4}};
    EXPECT_LT((gat_layer(x, edges, p, 0.2) - dense_gat(x, edges, p, 0.2)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(GatLayer, AttentionRowsSumToOne) {
  const auto g = mixed_dual_graph(1, 8, 5);
  const auto model = init_model(small_config(8), 2);
  const auto r = forward(model, make_batch(g, 8), false);
  for (const auto& layer : r.cache.layers) {
    for (const auto& head : layer.heads) {
      for (std::size_t i = 0; i + 1 < r.cache.nbr_offsets.size(); ++i) {
        double s = 0.0;
        for (int k = r.cache.nbr_offsets[i]; k < r.cache.nbr_offsets[i + 1]; ++k) s += head.alpha[k];
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
    }
  }
}

// Logits of a 4->4->4->4 model on a 3-node path, computed once by a dense
// numpy implementation (fixtures/tiny_forward.py).
TEST(Forward, TinyModelMatchesFrozenFixture) {
  std::ifstream in(fixture("tiny_forward.json"));
  const json j = json::parse(in);
  GnnConfig c;
  c.in_dim = 4;
  c.hidden = 2;
  c.heads = 2;
  c.layers = 3;
  c.dropout = 0.0;
  ModelParams m = init_model(c, 0);
  for (int l = 0; l < 3; ++l) {
    const auto& L = j["layers"][l];
    for (int h = 0; h < 2; ++h) {
      m.gat[l].weight[h] = matrix(L["weight"][h]);
      m.gat[l].attention[h] = vector(L["attention"][h]);
    }
    m.bn[l].gamma = vector(L["gamma"]);
    m.bn[l].beta = vector(L["beta"]);
    m.bn[l].running_mean = vector(L["running_mean"]);
    m.bn[l].running_var = vector(L["running_var"]);
  }
  m.fc_weight = matrix(j["fc_weight"]);
  m.fc_bias = vector(j["fc_bias"]);
  std::vector<std::pair<int, int>> edges;
  for (const auto& e : j["edges"]) edges.emplace_back(e[0].get<int>(), e[1].get<int>());
  const auto batch = make_batch(matrix(j["features"]), edges);
  const Eigen::VectorXd inference = forward(m, batch, false).logits.row(0).transpose();
  const Eigen::VectorXd training = forward(m, batch, true, 5).logits.row(0).transpose();
  EXPECT_LT((inference - vector(j["logits_inference"])).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((training - vector(j["logits_training"])).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Forward, DeterministicWithoutDropout) {
  const auto g = mixed_dual_graph(2, 8, 5);
  const auto model = init_model(small_config(8), 3);
  EXPECT_EQ(forward_logits(model, g), forward_logits(model, g));
}

TEST(Forward, ZeroFeaturesGiveBias) {
  const auto model = init_model(small_config(4), 4);
  const auto batch = make_batch(Eigen::MatrixXd::Zero(5, 4), {{0, 1}, {1, 2}, {3, 4}});
  const auto logits = forward(model, batch, false).logits;
  EXPECT_LT(logits.cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Forward, NodePermutationInvariant) {
  const auto model = init_model(small_config(4), 5);
  const auto x = random_features(5, 4, 6);
  const std::vector<std::pair<int, int>> edges = {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}};
  const std::vector<int> perm = {3, 0, 4, 1, 2};  // new index of old node i
  Eigen::MatrixXd px(5, 4);
  for (int i = 0; i < 5; ++i) px.row(perm[i]) = x.row(i);
  std::vector<std::pair<int, int>> pe;
  for (auto [u, v] : edges) pe.emplace_back(perm[u], perm[v]);
  const auto a = forward(model, make_batch(x, edges), false).logits;
  const auto b = forward(model, make_batch(px, pe), false).logits;
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Forward, StackedBatchEqualsSeparateInInference) {
  const auto model = init_model(small_config(8), 6);
  const auto g1 = mixed_dual_graph(7, 8, 5);
  const auto g2 = mixed_dual_graph(8, 8, 5);
  const std::vector<const DualGraph*> both = {&g1, &g2};
  const auto logits = forward(model, make_batch(both, 8), false).logits;
  EXPECT_LT((logits.row(0).transpose() - forward_logits(model, g1)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((logits.row(1).transpose() - forward_logits(model, g2)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Forward, DropoutFollowsSeed) {
  auto cfg = small_config(8);
  cfg.dropout = 0.5;
  const auto model = init_model(cfg, 9);
  const auto batch = make_batch(mixed_dual_graph(9, 8, 5), 8);
  EXPECT_EQ(forward(model, batch, true, 1).logits, forward(model, batch, true, 1).logits);
  EXPECT_NE(forward(model, batch, true, 1).logits, forward(model, batch, true, 2).logits);
  EXPECT_EQ(forward(model, batch, false, 1).logits, forward(model, batch, false, 2).logits);
}

TEST(Loss, CrossEntropyValues) {
  EXPECT_NEAR(loss_ce(Eigen::Vector2d(0, 0), 0), std::log(2.0), 1e-15);
  EXPECT_NEAR(loss_ce(Eigen::Vector2d(0, 0), 1), 0.693147, 1e-6);
  EXPECT_LT(loss_ce(Eigen::Vector2d(30, -30), 0), 1e-12);
  EXPECT_NEAR(loss_ce(Eigen::Vector2d(1, 2), 1), std::log(std::exp(1.0) + std::exp(2.0)) - 2.0, 1e-15);
  EXPECT_NEAR(loss_ce(Eigen::Vector2d(1, 2), 1), 0.313262, 1e-6);
  EXPECT_TRUE(std::isfinite(loss_ce(Eigen::Vector2d(1000, -1000), 1)));
  EXPECT_NEAR(softmax(Eigen::Vector2d(800, 0)).sum(), 1.0, 1e-15);
}

TEST(Backward, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto cfg = small_config(8);
    cfg.dropout = 0.2;
    const auto model = init_model(cfg, seed);
    const auto g = mixed_dual_graph(seed + 20, 8, 5);
    const auto check = gradient_check(model, make_batch(g, 8), {1}, seed);
    EXPECT_LT(check.max_rel_error, 1e-4) << check.worst;
    EXPECT_EQ(check.checked, trainable_count(model) + 6u * 8u);
  }
}

TEST(Backward, MatchesFiniteDifferencesOnABatch) {
  const auto model = init_model(small_config(8), 31);
  const auto g1 = mixed_dual_graph(32, 8, 5);
  const auto g2 = mixed_dual_graph(33, 8, 5);
  const std::vector<const DualGraph*> both = {&g1, &g2};
  const auto check = gradient_check(model, make_batch(both, 8), {0, 1}, 0);
  EXPECT_LT(check.max_rel_error, 1e-4) << check.worst;
}

TEST(Backward, DoubledUpstreamDoublesGradients) {
  const auto model = init_model(small_config(8), 10);
  const auto r = forward(model, make_batch(mixed_dual_graph(11, 8, 5), 8), true, 0);
  const Eigen::MatrixXd d = Eigen::RowVector2d(0.3, -0.7);
  const auto g1 = backward_from_logits(model, r.cache, d);
  const auto g2 = backward_from_logits(model, r.cache, 2 * d);
  const auto a = trainable_views(g1.params);
  const auto b = trainable_views(g2.params);
  for (std::size_t t = 0; t < a.size(); ++t) {
    for (std::size_t i = 0; i < a[t].size(); ++i) EXPECT_NEAR(b[t][i], 2 * a[t][i], 1e-14 + 1e-12 * std::abs(a[t][i]));
  }
}

// A head with zeroed W and a outputs zeros; its attention vector then gets no gradient.
TEST(Backward, ZeroedHeadAttentionHasNoGradient) {
  auto model = init_model(small_config(8), 12);
  model.gat[1].weight[0].setZero();
  model.gat[1].attention[0].setZero();
  const auto r = forward(model, make_batch(mixed_dual_graph(13, 8, 5), 8), true, 0);
  const auto g = backward(model, r.cache, r.logits, std::vector<int>{1});
  EXPECT_EQ(g.params.gat[1].attention[0], Eigen::VectorXd::Zero(6));
  EXPECT_GT(g.params.gat[1].attention[1].cwiseAbs().maxCoeff(), 0.0);
}

TEST(Backward, StaleCacheRejected) {
  auto model = init_model(small_config(8), 14);
  const auto r = forward(model, make_batch(mixed_dual_graph(15, 8, 5), 8), true, 0);
  const auto g = backward(model, r.cache, r.logits, std::vector<int>{0});
  AdamState adam = AdamState::for_model(model);
  adam_step(model, g.params, adam, 1e-3);
  try {
    backward(model, r.cache, r.logits, std::vector<int>{0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kStaleCache);
  }
}

TEST(Adam, ZeroGradientsLeaveParameters) {
  auto model = init_model(small_config(4), 16);
  const auto before = model;
  AdamState adam = AdamState::for_model(model);
  adam_step(model, zeros_like(model), adam, 0.1);
  EXPECT_TRUE(same_weights(model, before));
  EXPECT_EQ(adam.step, 1u);
}

TEST(Adam, FirstStepIsSignStep) {
  auto model = init_model(small_config(4), 17);
  const auto before = model;
  auto grads = zeros_like(model);
  Rng rng(18);
  for (auto v : trainable_views(grads)) {
    for (auto& x : v) x = rng.bernoulli(0.5) ? rng.uniform(0.1, 5) : -rng.uniform(0.1, 5);
  }
  AdamState adam = AdamState::for_model(model);
  adam_step(model, grads, adam, 0.01);
  const auto now = trainable_views(std::as_const(model));
  const auto was = trainable_views(before);
  const auto g = trainable_views(std::as_const(grads));
  for (std::size_t t = 0; t < now.size(); ++t) {
    for (std::size_t i = 0; i < now[t].size(); ++i) {
      EXPECT_NEAR(now[t][i] - was[t][i], -0.01 * (g[t][i] > 0 ? 1 : -1), 1e-9);
    }
  }
}

// Hand-stepped recurrences for g = 1, lr = 0.1, beta1 0.9, beta2 0.999, eps 1e-8:
//   t=1: m=0.1     v=0.001     m^=1 v^=1 -> step 0.1/(1+1e-8)
//   t=2: m=0.19    v=0.001999  m^=1 v^=1 -> same step
//   t=3: m=0.271   v=0.002997  m^=1 v^=1 -> same step
TEST(Adam, ConstantGradientTrajectory) {
  const double table[3] = {-0.0999999990000000, -0.1999999980000000, -0.2999999970000000};
  auto model = init_model(small_config(4), 19);
  for (auto v : trainable_views(model)) std::fill(v.begin(), v.end(), 0.0);
  auto grads = zeros_like(model);
  for (auto v : trainable_views(grads)) std::fill(v.begin(), v.end(), 1.0);
  AdamState adam = AdamState::for_model(model);
  for (int t = 0; t < 3; ++t) {
    adam_step(model, grads, adam, 0.1);
    for (auto v : trainable_views(std::as_const(model))) {
      for (double x : v) ASSERT_NEAR(x, table[t], 1e-12);
    }
  }
  EXPECT_NEAR(adam.m.fc_bias(0), 0.271, 1e-15);
  EXPECT_NEAR(adam.v.fc_bias(0), 0.002997001, 1e-15);
}

TEST(Schedule, StepDecay) {
  const LrSchedule s;
  EXPECT_EQ(s.at(0), 1e-3);
  EXPECT_EQ(s.at(9), 1e-3);
  EXPECT_DOUBLE_EQ(s.at(10), 5e-4);
  EXPECT_DOUBLE_EQ(s.at(39), 1.25e-4);
}

TEST(BatchNorm, RunningStatsMoveTowardBatch) {
  auto model = init_model(small_config(8), 20);
  const auto r = forward(model, make_batch(mixed_dual_graph(21, 8, 5), 8), true, 0);
  update_running_stats(model, r.cache);
  const auto& lc = r.cache.layers[0];
  const double n = static_cast<double>(lc.input.rows());
  EXPECT_NEAR(model.bn[0].running_mean(0), 0.1 * lc.batch_mean(0), 1e-15);
  EXPECT_NEAR(model.bn[0].running_var(0), 0.9 + 0.1 * lc.batch_var(0) * n / (n - 1), 1e-15);
}

TEST(Checkpoint, RoundTrip) {
  auto model = init_model(small_config(8), 22);
  model.bn[1].running_mean.setConstant(0.25);
  const auto bytes = encode_checkpoint(model);
  const auto back = decode_checkpoint(bytes);
  EXPECT_TRUE(same_weights(back, model));
  EXPECT_EQ(back.config, model.config);
  EXPECT_EQ(encode_checkpoint(back), bytes);
  TempDir dir;
  save_checkpoint(model, dir / "m.vgmd");
  EXPECT_TRUE(same_weights(load_checkpoint(dir / "m.vgmd"), model));
}

TEST(Checkpoint, Corruption) {
  const auto bytes = encode_checkpoint(init_model(small_config(4), 23));
  auto code = [](const std::string& b) {
    try {
      decode_checkpoint(b);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::kInvalidArgument;
  };
  EXPECT_EQ(code(bytes.substr(0, bytes.size() - 3)), Errc::kTruncated);
  EXPECT_EQ(code("nope!" + bytes.substr(5)), Errc::kMalformed);
  auto nan = bytes;
  const double bad = std::nan("");
  std::memcpy(nan.data() + nan.size() - 8, &bad, 8);
  EXPECT_EQ(code(nan), Errc::kNumeric);
}
