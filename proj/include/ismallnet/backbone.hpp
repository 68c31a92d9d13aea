#pragma once

#include <array>
#include <vector>

#include <torch/torch.h>

namespace ismallnet {

struct BackboneConfig {
  std::array<int, 5> stage_channels{64, 64, 128, 256, 512};
  std::array<int, 5> blocks_per_stage{1, 2, 2, 2, 2};
  bool share_encoders = false;

  void validate() const;
};

/// Per-level encoder features; level i (0-based) has spatial size input / 2^(i+1).
struct FeaturePyramid {
  std::vector<torch::Tensor> levels;
};

/// Pyramid levels projected to a common decoder width.
struct StreamFeatures {
  std::vector<torch::Tensor> levels;
};

/// Group count for GroupNorm: at most 8 groups, at least 4 channels per group when possible.
int norm_groups(int channels);
torch::nn::GroupNorm make_norm(int channels);

/// Throws ShapeError unless `x` is [N, 1, H, W] with H and W divisible by 32.
void check_input_shape(const torch::Tensor& x);

class ResidualBlockImpl : public torch::nn::Module {
 public:
  ResidualBlockImpl(int in_channels, int out_channels, int stride);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, down_conv_{nullptr};
  torch::nn::GroupNorm norm1_{nullptr}, norm2_{nullptr}, down_norm_{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// Five-stage residual encoder. Stage 1 is a stride-2 stem followed by
/// residual blocks; stages 2..5 each open with a stride-2 residual block.
/// `num_stages` < 5 builds only the leading stages (for decoders that consume
/// fewer levels).
class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(const BackboneConfig& cfg, int num_stages = 5);
  FeaturePyramid forward(const torch::Tensor& images);

  int num_stages() const { return static_cast<int>(stages_.size()); }
  /// Channel count of level i.
  int channels(int level) const { return channels_.at(static_cast<std::size_t>(level)); }

 private:
  std::vector<torch::nn::Sequential> stages_;
  std::vector<int> channels_;
};
TORCH_MODULE(Encoder);

/// Per-level 1x1 convolution (+ GroupNorm when `normalize`) + ReLU to width D.
class StreamProjectionImpl : public torch::nn::Module {
 public:
  StreamProjectionImpl(const std::vector<int>& in_channels, int width, bool normalize = true);
  StreamFeatures forward(const FeaturePyramid& pyramid);

  /// Sets every level's 1x1 weight to the identity; requires in == out width.
  void init_identity();
  int width() const { return width_; }

 private:
  std::vector<torch::nn::Conv2d> convs_;
  std::vector<torch::nn::GroupNorm> norms_;
  int width_;
};
TORCH_MODULE(StreamProjection);

}  // namespace ismallnet
