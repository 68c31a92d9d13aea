#include "ismallnet/backbone.hpp"

#include <string>

#include "ismallnet/errors.hpp"

namespace ismallnet {
namespace nn = torch::nn;

namespace {

nn::Conv2d conv(int in, int out, int kernel, int stride) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(kernel / 2).bias(false));
}

}  // namespace

void BackboneConfig::validate() const {
  for (int i = 0; i < 5; ++i) {
    if (stage_channels[i] <= 0) throw ConfigError("backbone: stage_channels must be positive");
    if (blocks_per_stage[i] < 0 || (i > 0 && blocks_per_stage[i] < 1)) {
      throw ConfigError("backbone: stages 2..5 need at least one residual block");
    }
  }
}

int norm_groups(int channels) {
  for (int g = 8; g > 1; --g) {
    if (channels % g == 0 && channels / g >= 4) return g;
  }
  return 1;
}

nn::GroupNorm make_norm(int channels) {
  return nn::GroupNorm(nn::GroupNormOptions(norm_groups(channels), channels));
}

void check_input_shape(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != 1) {
    throw ShapeError("expected a [N, 1, H, W] image batch");
  }
  if (x.size(2) % 32 != 0 || x.size(3) % 32 != 0 || x.size(2) == 0 || x.size(3) == 0) {
    throw ShapeError("input height and width must be positive multiples of 32, got " +
                     std::to_string(x.size(2)) + "x" + std::to_string(x.size(3)));
  }
}

ResidualBlockImpl::ResidualBlockImpl(int in_channels, int out_channels, int stride) {
  conv1_ = register_module("conv1", conv(in_channels, out_channels, 3, stride));
  norm1_ = register_module("norm1", make_norm(out_channels));
  conv2_ = register_module("conv2", conv(out_channels, out_channels, 3, 1));
  norm2_ = register_module("norm2", make_norm(out_channels));
  if (stride != 1 || in_channels != out_channels) {
    down_conv_ = register_module("down_conv", conv(in_channels, out_channels, 1, stride));
    down_norm_ = register_module("down_norm", make_norm(out_channels));
  }
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  auto y = torch::relu(norm1_(conv1_(x)));
  y = norm2_(conv2_(y));
  auto shortcut = down_conv_ ? down_norm_(down_conv_(x)) : x;
  return torch::relu(y + shortcut);
}

EncoderImpl::EncoderImpl(const BackboneConfig& cfg, int num_stages) {
  cfg.validate();
  if (num_stages < 1 || num_stages > 5) throw ConfigError("encoder: num_stages must be in 1..5");
  int in = 1;
  for (int s = 0; s < num_stages; ++s) {
    const int out = cfg.stage_channels[s];
    nn::Sequential stage;
    if (s == 0) {
      stage->push_back("stem_conv", conv(in, out, 3, 2));
      stage->push_back("stem_norm", make_norm(out));
      stage->push_back("stem_relu", nn::ReLU());
      for (int b = 0; b < cfg.blocks_per_stage[s]; ++b) {
        stage->push_back("block" + std::to_string(b), ResidualBlock(out, out, 1));
      }
    } else {
      for (int b = 0; b < cfg.blocks_per_stage[s]; ++b) {
        stage->push_back("block" + std::to_string(b), ResidualBlock(b == 0 ? in : out, out, b == 0 ? 2 : 1));
      }
    }
    stages_.push_back(register_module("stage" + std::to_string(s + 1), stage));
    channels_.push_back(out);
    in = out;
  }
}

FeaturePyramid EncoderImpl::forward(const torch::Tensor& images) {
  check_input_shape(images);
  FeaturePyramid pyramid;
  auto x = images;
  for (auto& stage : stages_) {
    x = stage->forward(x);
    pyramid.levels.push_back(x);
  }
  return pyramid;
}

StreamProjectionImpl::StreamProjectionImpl(const std::vector<int>& in_channels, int width, bool normalize)
    : width_(width) {
  if (width <= 0) throw ConfigError("projection width must be positive");
  for (std::size_t i = 0; i < in_channels.size(); ++i) {
    const auto suffix = std::to_string(i + 1);
    convs_.push_back(register_module("level" + suffix + "_conv", conv(in_channels[i], width, 1, 1)));
    if (normalize) norms_.push_back(register_module("level" + suffix + "_norm", make_norm(width)));
  }
}

StreamFeatures StreamProjectionImpl::forward(const FeaturePyramid& pyramid) {
  if (pyramid.levels.size() != convs_.size()) {
    throw ShapeError("projection: expected " + std::to_string(convs_.size()) + " pyramid levels, got " +
                     std::to_string(pyramid.levels.size()));
  }
  StreamFeatures out;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    auto y = convs_[i](pyramid.levels[i]);
    if (!norms_.empty()) y = norms_[i](y);
    out.levels.push_back(torch::relu(y));
  }
  return out;
}

void StreamProjectionImpl::init_identity() {
  torch::NoGradGuard guard;
  for (auto& c : convs_) {
    auto& w = c->weight;
    if (w.size(0) != w.size(1)) throw ShapeError("identity init needs equal in/out channels");
    w.zero_();
    w.squeeze(-1).squeeze(-1).copy_(torch::eye(w.size(0), w.options()));
  }
}

}  // namespace ismallnet
