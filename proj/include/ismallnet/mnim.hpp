#pragma once

#include <string>
#include <vector>

#include <torch/torch.h>

#include "ismallnet/backbone.hpp"

namespace ismallnet {

/// Which incoming connections a decoder node receives.
///  - nested: the full multi-scale nested interaction rule (two pooled terms
///    from the row above, one upsampled term from the row below, dense skips
///    from every earlier node of the row);
///  - unet: upsampled term plus the row's first node only (plain U shape);
///  - unetpp: nested without the pooled terms;
///  - dnanet: nested with only the immediately preceding node as skip.
enum class DecoderTopology { nested, unet, unetpp, dnanet };

/// How the first column X^{i,0} is produced.
///  - seeded: X^{i,0} = F(projected backbone level i);
///  - recursive: X^{0,0} = F(level 0), X^{i,0} = F(P(X^{i-1,0})).
enum class ColumnMode { seeded, recursive };

struct MnimConfig {
  int levels = 5;
  int node_width = 32;
  int conv_block_depth = 2;
  ColumnMode column_mode = ColumnMode::seeded;
  DecoderTopology topology = DecoderTopology::nested;

  void validate() const;
};

/// One term of a node's input list.
struct NodeTerm {
  enum class Op { pool, up, same } op;
  int row;
  int col;
  bool operator==(const NodeTerm&) const = default;
};

std::string to_string(const NodeTerm& term);

/// Incoming terms of node (i, j), j >= 1, in concatenation order
/// [P(X^{i-1,j-1}), P(X^{i-1,j}), U(X^{i+1,j-1}), X^{i,k}...]. Terms whose source
/// lies outside the triangle are omitted. Throws IndexError outside the triangle
/// or for j == 0.
std::vector<NodeTerm> node_terms(int i, int j, int levels,
                                 DecoderTopology topology = DecoderTopology::nested);

/// Nodes evaluated for a topology: exactly those the row outputs X^{i,L-1-i}
/// depend on (column 0 is always present).
std::vector<std::vector<bool>> active_nodes(int levels, DecoderTopology topology);

/// Triangular grid of node activations; nodes[i][j] is defined for i + j <= L - 1.
struct NodeGrid {
  int levels = 0;
  std::vector<std::vector<torch::Tensor>> nodes;
  std::vector<std::vector<int>> evaluations;  ///< per-node evaluation count of the last run

  bool exists(int i, int j) const { return i >= 0 && j >= 0 && i + j <= levels - 1; }
  bool computed(int i, int j) const { return exists(i, j) && nodes[i][j].defined(); }
  int node_count() const;
};

struct MnimResult {
  NodeGrid grid;
  std::vector<torch::Tensor> outputs;  ///< O_i = X^{i, L-1-i}
};

/// 2x2 max pooling with stride 2. Throws ShapeError on odd spatial dims.
torch::Tensor downsample_pool(const torch::Tensor& x);
/// x2 bilinear upsampling (half-pixel centres).
torch::Tensor upsample_bilinear(const torch::Tensor& x);

/// `depth` x (3x3 conv -> GroupNorm -> ReLU), first conv maps in -> out channels.
class ConvBlockImpl : public torch::nn::Module {
 public:
  ConvBlockImpl(int in_channels, int out_channels, int depth);
  torch::Tensor forward(torch::Tensor x);

 private:
  torch::nn::Sequential layers_;
};
TORCH_MODULE(ConvBlock);

class MnimImpl : public torch::nn::Module {
 public:
  explicit MnimImpl(const MnimConfig& cfg);

  MnimResult forward(const StreamFeatures& seeds);

  /// Tensors for node_terms(i, j) taken from an evaluated grid.
  std::vector<torch::Tensor> node_inputs(int i, int j, const NodeGrid& grid) const;

  const MnimConfig& config() const { return cfg_; }

 private:
  MnimConfig cfg_;
  std::vector<std::vector<bool>> active_;
  std::vector<std::vector<ConvBlock>> blocks_;
};
TORCH_MODULE(Mnim);

}  // namespace ismallnet
