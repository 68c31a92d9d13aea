#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "ismallnet/backbone.hpp"
#include "ismallnet/mnim.hpp"

namespace ismallnet {

/// Full model and the ablation variants.
enum class Variant { full, no_interior, no_boundary, unet_decoder, unetpp_decoder, dnanet_decoder };

std::string_view to_string(Variant v);
/// Throws ConfigError listing the valid names.
Variant parse_variant(std::string_view name);
const std::vector<std::string_view>& variant_names();

enum class IbfmGate { sigmoid, none };

struct ModelConfig {
  BackboneConfig backbone;
  MnimConfig mnim;  ///< topology is derived from `variant`
  Variant variant = Variant::full;
  /// 0: prediction heads are a single 1x1 conv; otherwise 1x1 -> ReLU -> 1x1 with this hidden width.
  int head_width = 0;
  IbfmGate ibfm_gate = IbfmGate::sigmoid;
  bool project_norm = true;
  double head_bias_init = 0.0;
  /// Adds side heads on the non-terminal rows of each stream.
  bool deep_supervision = false;

  void validate() const;
  bool has_interior() const { return variant != Variant::no_interior; }
  bool has_boundary() const { return variant != Variant::no_boundary; }
  DecoderTopology topology() const;
};

/// Sigmoid maps at full input resolution; absent streams have no map.
struct ModelOutputs {
  torch::Tensor fused;
  std::optional<torch::Tensor> interior;
  std::optional<torch::Tensor> boundary;
  torch::Tensor fused_logits;
  std::optional<torch::Tensor> interior_logits;
  std::optional<torch::Tensor> boundary_logits;
  /// Deep-supervision maps for rows 2..L of each stream (empty unless enabled).
  std::vector<torch::Tensor> interior_side;
  std::vector<torch::Tensor> boundary_side;
};

/// Intermediate products of the fusion decoder, all at level-1 resolution.
struct FusedFeatures {
  std::vector<torch::Tensor> levels;  ///< C_i
  torch::Tensor global;               ///< G
  torch::Tensor enhanced;             ///< E
  torch::Tensor logits;
};

torch::nn::Sequential make_head(int in_channels, int hidden, double bias_init);

/// Interior-boundary fusion decoder: per-level interior||boundary reduction,
/// global concatenation, gated enhancement, and a 1x1 prediction head on G + E.
class IbfmImpl : public torch::nn::Module {
 public:
  IbfmImpl(int levels, int width, IbfmGate gate, int head_width = 0, double head_bias = 0.0);
  FusedFeatures forward(const std::vector<torch::Tensor>& interior,
                        const std::vector<torch::Tensor>& boundary);

 private:
  int levels_;
  int width_;
  IbfmGate gate_;
  std::vector<torch::nn::Conv2d> reduce_;
  std::vector<torch::nn::Conv2d> gates_;
  torch::nn::Conv2d global_{nullptr}, enhance_{nullptr};
  torch::nn::Sequential head_{nullptr};
};
TORCH_MODULE(Ibfm);

struct StreamResult {
  FeaturePyramid pyramid;
  StreamFeatures seeds;
  MnimResult decoder;
  torch::Tensor logits;              ///< level-1 resolution
  std::vector<torch::Tensor> side_logits;
};

/// Encoder + projection + nested decoder + prediction head for one stream.
class StreamImpl : public torch::nn::Module {
 public:
  /// `shared_encoder` non-null reuses another stream's encoder without registering it.
  StreamImpl(const ModelConfig& cfg, Encoder shared_encoder = nullptr);
  StreamResult forward(const torch::Tensor& images);

  Encoder encoder() const { return encoder_; }
  StreamProjection projection() const { return projection_; }
  Mnim decoder() const { return decoder_; }

 private:
  Encoder encoder_{nullptr};
  StreamProjection projection_{nullptr};
  Mnim decoder_{nullptr};
  torch::nn::Sequential head_{nullptr};
  std::vector<torch::nn::Sequential> side_heads_;
};
TORCH_MODULE(Stream);

class ISmallNetImpl : public torch::nn::Module {
 public:
  explicit ISmallNetImpl(const ModelConfig& cfg);

  /// images: [N, 1, H, W] with H, W multiples of 32.
  ModelOutputs forward(const torch::Tensor& images);

  const ModelConfig& config() const { return cfg_; }
  Stream interior_stream() const { return interior_; }
  Stream boundary_stream() const { return boundary_; }
  Ibfm fusion() const { return fusion_; }

 private:
  ModelConfig cfg_;
  Stream interior_{nullptr};
  Stream boundary_{nullptr};
  Ibfm fusion_{nullptr};
};
TORCH_MODULE(ISmallNet);

/// Builds the model for cfg.variant. Throws ConfigError on invalid configs.
ISmallNet build_variant(const ModelConfig& cfg);

/// Parameters without duplicates (shared encoders appear once), in registration order.
std::vector<std::pair<std::string, torch::Tensor>> unique_parameters(const torch::nn::Module& module);
std::int64_t parameter_count(const torch::nn::Module& module);

}  // namespace ismallnet
