#include <gtest/gtest.h>

#include <random>

#include "ismallnet/errors.hpp"
#include "ismallnet/mnim.hpp"
#include "oracles.hpp"

namespace ismallnet {
namespace {

using Op = NodeTerm::Op;

StreamFeatures random_seeds(int levels, int width, int input, torch::Dtype dtype = torch::kFloat32) {
  StreamFeatures s;
  for (int i = 0; i < levels; ++i) {
    const int side = input >> (i + 1);
    s.levels.push_back(torch::randn({2, width, side, side}, torch::TensorOptions().dtype(dtype)));
  }
  return s;
}

TEST(Pool, ConstantMap) {
  const auto y = downsample_pool(torch::full({1, 3, 4, 4}, 2.5));
  EXPECT_EQ(y.sizes(), (std::vector<int64_t>{1, 3, 2, 2}));
  EXPECT_TRUE(torch::all(y == 2.5).item<bool>());
}

TEST(Pool, TwoByTwoTakesTheMaximum) {
  const auto y = downsample_pool(torch::tensor({1.f, 2.f, 3.f, 4.f}).view({1, 1, 2, 2}));
  EXPECT_EQ(y.numel(), 1);
  EXPECT_EQ(y.item<float>(), 4.f);
}

TEST(Pool, MatchesWindowScan) {
  torch::manual_seed(0);
  const auto x = torch::randn({1, 1, 8, 8});
  const auto y = downsample_pool(x);
  auto a = x.accessor<float, 4>();
  auto b = y.accessor<float, 4>();
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      const float m = std::max({a[0][0][2 * r][2 * c], a[0][0][2 * r][2 * c + 1], a[0][0][2 * r + 1][2 * c],
                                a[0][0][2 * r + 1][2 * c + 1]});
      EXPECT_EQ(b[0][0][r][c], m);
    }
  }
}

TEST(Pool, OddDimsAreShapeError) {
  EXPECT_THROW(downsample_pool(torch::zeros({1, 1, 5, 4})), ShapeError);
  EXPECT_THROW(downsample_pool(torch::zeros({1, 1, 4, 3})), ShapeError);
}

TEST(Upsample, ConstantAndSinglePixel) {
  const auto y = upsample_bilinear(torch::full({1, 2, 3, 5}, -1.5));
  EXPECT_EQ(y.sizes(), (std::vector<int64_t>{1, 2, 6, 10}));
  EXPECT_TRUE(torch::allclose(y, torch::full_like(y, -1.5)));
  const auto z = upsample_bilinear(torch::full({1, 1, 1, 1}, 7.0));
  EXPECT_EQ(z.sizes(), (std::vector<int64_t>{1, 1, 2, 2}));
  EXPECT_TRUE(torch::all(z == 7.0).item<bool>());
}

TEST(Upsample, RampMatchesHalfPixelWeights) {
  // Source [[0, 1], [2, 3]] = 2 * row + col; half-pixel centres place output k at
  // source coordinate clamp((k + 0.5) / 2 - 0.5, 0, 1).
  const auto x = torch::tensor({0.0, 1.0, 2.0, 3.0}, torch::kFloat64).view({1, 1, 2, 2});
  const auto y = upsample_bilinear(x);
  auto src = [](int k) { return std::clamp((k + 0.5) / 2.0 - 0.5, 0.0, 1.0); };
  auto acc = y.accessor<double, 4>();
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) EXPECT_NEAR(acc[0][0][r][c], 2.0 * src(r) + src(c), 1e-12);
  }
}

TEST(ConvBlock, PreservesSpatialDimsAndIsDeterministic) {
  torch::manual_seed(1);
  ConvBlock block(6, 4, 2);
  torch::NoGradGuard guard;
  for (auto [h, w] : {std::pair{4, 4}, std::pair{7, 3}, std::pair{16, 32}}) {
    EXPECT_EQ(block->forward(torch::randn({1, 6, h, w})).sizes(), (std::vector<int64_t>{1, 4, h, w}));
  }
  const auto zero = torch::zeros({1, 6, 8, 8});
  EXPECT_TRUE(torch::equal(block->forward(zero), block->forward(zero)));
}

TEST(ConvBlock, InputGradientMatchesFiniteDifferences) {
  torch::manual_seed(2);
  ConvBlock block(3, 4, 2);
  block->to(torch::kFloat64);
  auto x = torch::randn({1, 3, 6, 6}, torch::kFloat64).requires_grad_(true);
  block->forward(x).mean().backward();
  const auto grad = x.grad().clone();
  auto data = x.detach();
  std::mt19937 rng(3);
  std::uniform_int_distribution<int64_t> pick(0, data.numel() - 1);
  for (int t = 0; t < 20; ++t) {
    const auto idx = pick(rng);
    const double numeric = oracle::central_difference(
        [&] { return block->forward(data).mean().item<double>(); }, data, idx);
    EXPECT_LE(oracle::relative_error(grad.view({-1})[idx].item<double>(), numeric), 1e-3) << idx;
  }
}

TEST(NodeTerms, PaperExampleRowTwoColumnOne) {
  const auto t = node_terms(2, 1, 5);
  const std::vector<NodeTerm> expected = {{Op::pool, 1, 0}, {Op::pool, 1, 1}, {Op::up, 3, 0}, {Op::same, 2, 0}};
  EXPECT_EQ(t, expected);
}

TEST(NodeTerms, TopRowHasNoPoolTerms) {
  const auto t = node_terms(0, 4, 5);
  const std::vector<NodeTerm> expected = {
      {Op::up, 1, 3}, {Op::same, 0, 0}, {Op::same, 0, 1}, {Op::same, 0, 2}, {Op::same, 0, 3}};
  EXPECT_EQ(t, expected);
}

TEST(NodeTerms, OutsideTheTriangleIsIndexError) {
  EXPECT_THROW(node_terms(4, 1, 5), IndexError);
  EXPECT_THROW(node_terms(0, 0, 5), IndexError);
  EXPECT_THROW(node_terms(-1, 2, 5), IndexError);
  EXPECT_THROW(node_terms(0, 5, 5), IndexError);
}

TEST(NodeTerms, LastNodeOfARowHasNoUpTerm) {
  const auto t = node_terms(3, 1, 5);
  const std::vector<NodeTerm> expected = {{Op::pool, 2, 0}, {Op::pool, 2, 1}, {Op::up, 4, 0}, {Op::same, 3, 0}};
  EXPECT_EQ(t, expected);
  // (1, 3) is terminal at L=5; U(X^{2,2}) exists since 2 + 2 <= 4.
  EXPECT_EQ(node_terms(1, 3, 5).size(), 3u + 2u + 1u);
  // At L=4, (1, 2) is terminal and (2, 1) exists.
  EXPECT_EQ(node_terms(1, 2, 4).size(), 2u + 2u + 1u);
}

TEST(NodeTerms, CardinalityFormulaForAllNodes) {
  for (int L = 1; L <= 5; ++L) {
    for (int i = 0; i < L; ++i) {
      for (int j = 1; i + j <= L - 1; ++j) {
        const int expected = j + (i > 0 ? 2 : 0) + ((i + 1) + (j - 1) <= L - 1 ? 1 : 0);
        EXPECT_EQ(static_cast<int>(node_terms(i, j, L).size()), expected) << L << " " << i << "," << j;
      }
    }
  }
}

TEST(NodeTerms, DenseSkipAblationStrictlyReducesCardinality) {
  for (int i = 0; i < 5; ++i) {
    for (int j = 2; i + j <= 4; ++j) {
      EXPECT_LT(node_terms(i, j, 5, DecoderTopology::dnanet).size(), node_terms(i, j, 5).size());
      if (i > 0) EXPECT_LT(node_terms(i, j, 5, DecoderTopology::unetpp).size(), node_terms(i, j, 5).size());
    }
  }
}

TEST(ActiveNodes, FullTriangleForNestedTopologies) {
  for (auto topo : {DecoderTopology::nested, DecoderTopology::unetpp, DecoderTopology::dnanet}) {
    const auto active = active_nodes(5, topo);
    int n = 0;
    for (const auto& row : active) {
      for (bool a : row) n += a;
    }
    EXPECT_EQ(n, 15);
  }
}

TEST(Mnim, NodeCountAndSingleEvaluation) {
  torch::manual_seed(4);
  for (int L = 1; L <= 5; ++L) {
    MnimConfig cfg;
    cfg.levels = L;
    cfg.node_width = 4;
    Mnim mnim(cfg);
    torch::NoGradGuard guard;
    const auto result = mnim->forward(random_seeds(L, 4, 64));
    EXPECT_EQ(result.grid.node_count(), L * (L + 1) / 2);
    ASSERT_EQ(static_cast<int>(result.outputs.size()), L);
    for (int i = 0; i < L; ++i) {
      for (int j = 0; i + j <= L - 1; ++j) {
        EXPECT_EQ(result.grid.evaluations[i][j], 1);
        const auto& node = result.grid.nodes[i][j];
        EXPECT_EQ(node.sizes(), (std::vector<int64_t>{2, 4, 64 >> (i + 1), 64 >> (i + 1)}));
      }
      EXPECT_TRUE(result.outputs[i].is_same(result.grid.nodes[i][L - 1 - i]));
    }
  }
}

TEST(Mnim, EveryNodeIsConsumed) {
  MnimConfig cfg;
  cfg.node_width = 4;
  Mnim mnim(cfg);
  torch::NoGradGuard guard;
  const auto result = mnim->forward(random_seeds(5, 4, 64));
  std::vector<std::vector<int>> consumers(5, std::vector<int>(5, 0));
  for (int i = 0; i < 5; ++i) {
    consumers[i][4 - i] += 1;  // row output
    for (int j = 1; i + j <= 4; ++j) {
      for (const auto& t : node_terms(i, j, 5)) ++consumers[t.row][t.col];
    }
  }
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; i + j <= 4; ++j) EXPECT_GT(consumers[i][j], 0) << i << "," << j;
  }
}

TEST(Mnim, SingleLevelIsTheSeededNode) {
  MnimConfig cfg;
  cfg.levels = 1;
  cfg.node_width = 4;
  Mnim mnim(cfg);
  torch::NoGradGuard guard;
  const auto result = mnim->forward(random_seeds(1, 4, 32));
  EXPECT_EQ(result.grid.node_count(), 1);
  EXPECT_TRUE(result.outputs[0].is_same(result.grid.nodes[0][0]));
}

TEST(Mnim, NodeInputsAreTheOperatorsAppliedToTheGrid) {
  torch::manual_seed(5);
  MnimConfig cfg;
  cfg.node_width = 4;
  Mnim mnim(cfg);
  torch::NoGradGuard guard;
  const auto result = mnim->forward(random_seeds(5, 4, 64));
  const auto& g = result.grid;
  const auto inputs = mnim->node_inputs(2, 1, g);
  ASSERT_EQ(inputs.size(), 4u);
  EXPECT_TRUE(torch::equal(inputs[0], downsample_pool(g.nodes[1][0])));
  EXPECT_TRUE(torch::equal(inputs[1], downsample_pool(g.nodes[1][1])));
  EXPECT_TRUE(torch::equal(inputs[2], upsample_bilinear(g.nodes[3][0])));
  EXPECT_TRUE(torch::equal(inputs[3], g.nodes[2][0]));
  EXPECT_THROW(mnim->node_inputs(4, 1, g), IndexError);
}

TEST(Mnim, RecursiveColumnUsesOnlyTheFirstSeed) {
  torch::manual_seed(6);
  MnimConfig cfg;
  cfg.levels = 3;
  cfg.node_width = 4;
  cfg.column_mode = ColumnMode::recursive;
  Mnim mnim(cfg);
  torch::NoGradGuard guard;
  auto seeds = random_seeds(1, 4, 32);
  const auto result = mnim->forward(seeds);
  EXPECT_EQ(result.grid.node_count(), 6);
  EXPECT_EQ(result.outputs[2].size(2), 4);
}

TEST(Mnim, UnetTopologyEvaluatesFewerNodes) {
  MnimConfig cfg;
  cfg.node_width = 4;
  cfg.topology = DecoderTopology::unet;
  Mnim mnim(cfg);
  torch::NoGradGuard guard;
  const auto result = mnim->forward(random_seeds(5, 4, 64));
  // Column 0 plus the chain of terminal nodes.
  EXPECT_EQ(result.grid.node_count(), 5 + 4);
}

TEST(Mnim, InvalidConfig) {
  MnimConfig cfg;
  cfg.levels = 6;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.levels = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = MnimConfig{};
  cfg.node_width = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Mnim, GradientsMatchFiniteDifferencesInDoublePrecision) {
  torch::manual_seed(7);
  MnimConfig cfg;
  cfg.levels = 3;
  cfg.node_width = 4;
  Mnim mnim(cfg);
  mnim->to(torch::kFloat64);
  const auto seeds = random_seeds(3, 4, 32, torch::kFloat64);
  std::vector<torch::Tensor> weights;
  for (const auto& s : seeds.levels) weights.push_back(torch::randn_like(s));
  auto objective = [&] {
    const auto result = mnim->forward(seeds);
    auto total = torch::zeros({}, torch::kFloat64);
    for (std::size_t i = 0; i < result.outputs.size(); ++i) total = total + (result.outputs[i] * weights[i]).sum();
    return total;
  };
  mnim->zero_grad();
  objective().backward();

  std::mt19937 rng(8);
  int checked = 0;
  for (auto& item : mnim->named_parameters()) {
    auto p = item.value();
    const auto grad = p.grad().clone();
    std::uniform_int_distribution<int64_t> pick(0, p.numel() - 1);
    for (int t = 0; t < 2; ++t) {
      const auto idx = pick(rng);
      const double numeric = oracle::central_difference([&] { return objective().item<double>(); }, p, idx);
      EXPECT_LE(oracle::relative_error(grad.view({-1})[idx].item<double>(), numeric), 1e-3)
          << item.key() << "[" << idx << "]";
      ++checked;
    }
  }
  EXPECT_GT(checked, 20);
}

}  // namespace
}  // namespace ismallnet
