#include "ismallnet/mnim.hpp"

#include "ismallnet/errors.hpp"

namespace ismallnet {
namespace nn = torch::nn;
namespace F = torch::nn::functional;

void MnimConfig::validate() const {
  if (levels < 1 || levels > 5) throw ConfigError("mnim: levels must be in 1..5");
  if (node_width <= 0) throw ConfigError("mnim: node_width must be positive");
  if (conv_block_depth < 1) throw ConfigError("mnim: conv_block_depth must be >= 1");
}

std::string to_string(const NodeTerm& term) {
  const auto node = "X" + std::to_string(term.row) + "," + std::to_string(term.col);
  switch (term.op) {
    case NodeTerm::Op::pool: return "P(" + node + ")";
    case NodeTerm::Op::up: return "U(" + node + ")";
    case NodeTerm::Op::same: break;
  }
  return node;
}

std::vector<NodeTerm> node_terms(int i, int j, int levels, DecoderTopology topology) {
  if (i < 0 || j < 1 || i + j > levels - 1) {
    throw IndexError("node (" + std::to_string(i) + "," + std::to_string(j) +
                     ") is not a nested node of the L=" + std::to_string(levels) + " triangle");
  }
  auto exists = [levels](int r, int c) { return r >= 0 && c >= 0 && r + c <= levels - 1; };
  using Op = NodeTerm::Op;
  std::vector<NodeTerm> terms;
  const bool pool_terms = topology == DecoderTopology::nested || topology == DecoderTopology::dnanet;
  if (pool_terms && i > 0) {
    terms.push_back({Op::pool, i - 1, j - 1});
    terms.push_back({Op::pool, i - 1, j});
  }
  if (exists(i + 1, j - 1)) terms.push_back({Op::up, i + 1, j - 1});
  switch (topology) {
    case DecoderTopology::nested:
    case DecoderTopology::unetpp:
      for (int k = 0; k < j; ++k) terms.push_back({Op::same, i, k});
      break;
    case DecoderTopology::unet:
      terms.push_back({Op::same, i, 0});
      break;
    case DecoderTopology::dnanet:
      terms.push_back({Op::same, i, j - 1});
      break;
  }
  return terms;
}

std::vector<std::vector<bool>> active_nodes(int levels, DecoderTopology topology) {
  std::vector<std::vector<bool>> active(static_cast<std::size_t>(levels));
  for (int i = 0; i < levels; ++i) active[i].assign(static_cast<std::size_t>(levels - i), false);
  // Walk dependencies backwards from the row outputs.
  std::vector<std::pair<int, int>> stack;
  for (int i = 0; i < levels; ++i) {
    active[i][0] = true;
    active[i][levels - 1 - i] = true;
    stack.emplace_back(i, levels - 1 - i);
  }
  while (!stack.empty()) {
    const auto [i, j] = stack.back();
    stack.pop_back();
    if (j == 0) continue;
    for (const auto& t : node_terms(i, j, levels, topology)) {
      if (!active[t.row][t.col]) {
        active[t.row][t.col] = true;
        stack.emplace_back(t.row, t.col);
      }
    }
  }
  return active;
}

int NodeGrid::node_count() const {
  int n = 0;
  for (const auto& row : nodes) {
    for (const auto& t : row) n += t.defined() ? 1 : 0;
  }
  return n;
}

torch::Tensor downsample_pool(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(2) % 2 != 0 || x.size(3) % 2 != 0) {
    throw ShapeError("max pooling needs a [N, C, H, W] map with even H and W");
  }
  return F::max_pool2d(x, F::MaxPool2dFuncOptions(2).stride(2));
}

torch::Tensor upsample_bilinear(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

ConvBlockImpl::ConvBlockImpl(int in_channels, int out_channels, int depth) {
  for (int d = 0; d < depth; ++d) {
    const auto n = std::to_string(d + 1);
    layers_->push_back("conv" + n, nn::Conv2d(nn::Conv2dOptions(d == 0 ? in_channels : out_channels,
                                                                 out_channels, 3)
                                                  .padding(1)
                                                  .bias(false)));
    layers_->push_back("norm" + n, make_norm(out_channels));
    layers_->push_back("relu" + n, nn::ReLU());
  }
  register_module("layers", layers_);
}

torch::Tensor ConvBlockImpl::forward(torch::Tensor x) { return layers_->forward(x); }

MnimImpl::MnimImpl(const MnimConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int L = cfg_.levels;
  const int D = cfg_.node_width;
  active_ = active_nodes(L, cfg_.topology);
  blocks_.resize(static_cast<std::size_t>(L));
  for (int i = 0; i < L; ++i) {
    blocks_[i].resize(static_cast<std::size_t>(L - i), ConvBlock(nullptr));
    for (int j = 0; j <= L - 1 - i; ++j) {
      if (!active_[i][j]) continue;
      const int fan_in = j == 0 ? 1 : static_cast<int>(node_terms(i, j, L, cfg_.topology).size());
      blocks_[i][j] = register_module("node_" + std::to_string(i) + "_" + std::to_string(j),
                                      ConvBlock(fan_in * D, D, cfg_.conv_block_depth));
    }
  }
}

std::vector<torch::Tensor> MnimImpl::node_inputs(int i, int j, const NodeGrid& grid) const {
  std::vector<torch::Tensor> inputs;
  for (const auto& t : node_terms(i, j, grid.levels, cfg_.topology)) {
    const auto& src = grid.nodes.at(t.row).at(t.col);
    if (!src.defined()) throw IndexError("node input " + to_string(t) + " has not been evaluated");
    switch (t.op) {
      case NodeTerm::Op::pool: inputs.push_back(downsample_pool(src)); break;
      case NodeTerm::Op::up: inputs.push_back(upsample_bilinear(src)); break;
      case NodeTerm::Op::same: inputs.push_back(src); break;
    }
  }
  return inputs;
}

MnimResult MnimImpl::forward(const StreamFeatures& seeds) {
  const int L = cfg_.levels;
  const auto needed = cfg_.column_mode == ColumnMode::seeded ? static_cast<std::size_t>(L) : 1u;
  if (seeds.levels.size() < needed) {
    throw ShapeError("mnim: expected " + std::to_string(needed) + " seed levels, got " +
                     std::to_string(seeds.levels.size()));
  }
  MnimResult result;
  NodeGrid& grid = result.grid;
  grid.levels = L;
  grid.nodes.resize(static_cast<std::size_t>(L));
  grid.evaluations.resize(static_cast<std::size_t>(L));
  for (int i = 0; i < L; ++i) {
    grid.nodes[i].resize(static_cast<std::size_t>(L - i));
    grid.evaluations[i].assign(static_cast<std::size_t>(L - i), 0);
  }

  // Column-major order: every dependency of (i, j) lives in column j - 1 or j, row i - 1.
  for (int j = 0; j < L; ++j) {
    for (int i = 0; i + j <= L - 1; ++i) {
      if (!active_[i][j]) continue;
      torch::Tensor input;
      if (j == 0) {
        if (cfg_.column_mode == ColumnMode::seeded || i == 0) {
          input = seeds.levels[i];
          if (input.size(1) != cfg_.node_width) throw ShapeError("mnim: seed width does not match node_width");
        } else {
          input = downsample_pool(grid.nodes[i - 1][0]);
        }
      } else {
        input = torch::cat(node_inputs(i, j, grid), 1);
      }
      grid.nodes[i][j] = blocks_[i][j]->forward(input);
      ++grid.evaluations[i][j];
    }
  }
  for (int i = 0; i < L; ++i) result.outputs.push_back(grid.nodes[i][L - 1 - i]);
  return result;
}

}  // namespace ismallnet
