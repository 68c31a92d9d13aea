#include "ismallnet/model.hpp"

#include <set>

#include "ismallnet/errors.hpp"

namespace ismallnet {
namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace {

constexpr std::string_view kVariantNames[] = {"full",           "no_interior",   "no_boundary",
                                              "unet_decoder",   "unetpp_decoder", "dnanet_decoder"};

nn::Conv2d conv1x1(int in, int out) { return nn::Conv2d(nn::Conv2dOptions(in, out, 1)); }

torch::Tensor resize_to(const torch::Tensor& x, std::int64_t h, std::int64_t w) {
  if (x.size(2) == h && x.size(3) == w) return x;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<std::int64_t>{h, w})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

}  // namespace

std::string_view to_string(Variant v) { return kVariantNames[static_cast<int>(v)]; }

const std::vector<std::string_view>& variant_names() {
  static const std::vector<std::string_view> names(std::begin(kVariantNames), std::end(kVariantNames));
  return names;
}

Variant parse_variant(std::string_view name) {
  for (std::size_t i = 0; i < std::size(kVariantNames); ++i) {
    if (kVariantNames[i] == name) return static_cast<Variant>(i);
  }
  std::string valid;
  for (auto n : kVariantNames) valid += (valid.empty() ? "" : ", ") + std::string(n);
  throw ConfigError("unknown variant '" + std::string(name) + "'; valid variants: " + valid);
}

DecoderTopology ModelConfig::topology() const {
  switch (variant) {
    case Variant::unet_decoder: return DecoderTopology::unet;
    case Variant::unetpp_decoder: return DecoderTopology::unetpp;
    case Variant::dnanet_decoder: return DecoderTopology::dnanet;
    default: return DecoderTopology::nested;
  }
}

void ModelConfig::validate() const {
  backbone.validate();
  mnim.validate();
  if (head_width < 0) throw ConfigError("model: head_width must be >= 0");
}

nn::Sequential make_head(int in_channels, int hidden, double bias_init) {
  nn::Sequential head;
  nn::Conv2d last{nullptr};
  if (hidden > 0) {
    head->push_back("conv1", conv1x1(in_channels, hidden));
    head->push_back("relu", nn::ReLU());
    last = conv1x1(hidden, 1);
    head->push_back("conv2", last);
  } else {
    last = conv1x1(in_channels, 1);
    head->push_back("conv", last);
  }
  torch::NoGradGuard guard;
  last->bias.fill_(bias_init);
  return head;
}

IbfmImpl::IbfmImpl(int levels, int width, IbfmGate gate, int head_width, double head_bias)
    : levels_(levels), width_(width), gate_(gate) {
  for (int i = 0; i < levels; ++i) {
    const auto n = std::to_string(i + 1);
    reduce_.push_back(register_module("reduce" + n, conv1x1(2 * width, width)));
    if (gate == IbfmGate::sigmoid) gates_.push_back(register_module("gate" + n, conv1x1(width, 1)));
  }
  global_ = register_module("global", conv1x1(levels * width, width));
  enhance_ = register_module("enhance", conv1x1(levels * width, width));
  head_ = register_module("head", make_head(width, head_width, head_bias));
}

FusedFeatures IbfmImpl::forward(const std::vector<torch::Tensor>& interior,
                                const std::vector<torch::Tensor>& boundary) {
  if (interior.size() != boundary.size() || static_cast<int>(interior.size()) != levels_) {
    throw ShapeError("ibfm: expected " + std::to_string(levels_) + " levels per stream, got " +
                     std::to_string(interior.size()) + " and " + std::to_string(boundary.size()));
  }
  const auto h = interior[0].size(2);
  const auto w = interior[0].size(3);
  FusedFeatures out;
  std::vector<torch::Tensor> gated;
  for (int i = 0; i < levels_; ++i) {
    if (interior[i].size(1) != width_ || boundary[i].size(1) != width_) {
      throw ShapeError("ibfm: level " + std::to_string(i + 1) + " width does not match");
    }
    auto joint = torch::cat({resize_to(interior[i], h, w), resize_to(boundary[i], h, w)}, 1);
    auto c = torch::relu(reduce_[i](joint));
    gated.push_back(gate_ == IbfmGate::sigmoid ? c * torch::sigmoid(gates_[i](c)) : c);
    out.levels.push_back(std::move(c));
  }
  out.global = torch::relu(global_(torch::cat(out.levels, 1)));
  out.enhanced = enhance_(torch::cat(gated, 1));
  out.logits = head_->forward(out.global + out.enhanced);
  return out;
}

StreamImpl::StreamImpl(const ModelConfig& cfg, Encoder shared_encoder) {
  const int levels = cfg.mnim.levels;
  const int stages = cfg.mnim.column_mode == ColumnMode::seeded ? levels : 1;
  if (shared_encoder) {
    encoder_ = shared_encoder;
  } else {
    encoder_ = register_module("encoder", Encoder(cfg.backbone, stages));
  }
  std::vector<int> channels;
  for (int s = 0; s < stages; ++s) channels.push_back(encoder_->channels(s));
  projection_ = register_module("projection", StreamProjection(channels, cfg.mnim.node_width, cfg.project_norm));
  MnimConfig mcfg = cfg.mnim;
  mcfg.topology = cfg.topology();
  decoder_ = register_module("mnim", Mnim(mcfg));
  head_ = register_module("head", make_head(cfg.mnim.node_width, cfg.head_width, cfg.head_bias_init));
  if (cfg.deep_supervision) {
    for (int i = 1; i < levels; ++i) {
      side_heads_.push_back(register_module("side" + std::to_string(i + 1),
                                            make_head(cfg.mnim.node_width, cfg.head_width, cfg.head_bias_init)));
    }
  }
}

StreamResult StreamImpl::forward(const torch::Tensor& images) {
  StreamResult r;
  r.pyramid = encoder_->forward(images);
  r.seeds = projection_->forward(r.pyramid);
  r.decoder = decoder_->forward(r.seeds);
  r.logits = head_->forward(r.decoder.outputs[0]);
  for (std::size_t k = 0; k < side_heads_.size(); ++k) {
    r.side_logits.push_back(side_heads_[k]->forward(r.decoder.outputs[k + 1]));
  }
  return r;
}

ISmallNetImpl::ISmallNetImpl(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  cfg_.mnim.topology = cfg_.topology();
  if (cfg_.has_interior()) interior_ = register_module("interior", Stream(cfg_));
  if (cfg_.has_boundary()) {
    Encoder shared = cfg_.backbone.share_encoders && interior_ ? interior_->encoder() : Encoder(nullptr);
    boundary_ = register_module("boundary", Stream(cfg_, shared));
  }
  fusion_ = register_module("fusion", Ibfm(cfg_.mnim.levels, cfg_.mnim.node_width, cfg_.ibfm_gate,
                                           cfg_.head_width, cfg_.head_bias_init));
}

ModelOutputs ISmallNetImpl::forward(const torch::Tensor& images) {
  check_input_shape(images);
  const auto h = images.size(2);
  const auto w = images.size(3);
  ModelOutputs out;

  std::optional<StreamResult> in_res, bd_res;
  if (interior_) in_res = interior_->forward(images);
  if (boundary_) bd_res = boundary_->forward(images);

  auto full_res = [&](const torch::Tensor& logits) { return resize_to(logits, h, w); };
  auto emit = [&](const std::optional<StreamResult>& res, std::optional<torch::Tensor>& map,
                  std::optional<torch::Tensor>& logits, std::vector<torch::Tensor>& side) {
    if (!res) return;
    logits = full_res(res->logits);
    map = torch::sigmoid(*logits);
    for (const auto& s : res->side_logits) side.push_back(torch::sigmoid(full_res(s)));
  };
  emit(in_res, out.interior, out.interior_logits, out.interior_side);
  emit(bd_res, out.boundary, out.boundary_logits, out.boundary_side);

  // Single-stream variants feed the surviving stream into both fusion slots.
  const auto& first = in_res ? in_res->decoder.outputs : bd_res->decoder.outputs;
  const auto& second = bd_res ? bd_res->decoder.outputs : in_res->decoder.outputs;
  out.fused_logits = full_res(fusion_->forward(first, second).logits);
  out.fused = torch::sigmoid(out.fused_logits);
  return out;
}

ISmallNet build_variant(const ModelConfig& cfg) { return ISmallNet(cfg); }

std::vector<std::pair<std::string, torch::Tensor>> unique_parameters(const nn::Module& module) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  std::set<const void*> seen;
  for (const auto& item : module.named_parameters(true)) {
    if (seen.insert(item.value().unsafeGetTensorImpl()).second) out.emplace_back(item.key(), item.value());
  }
  return out;
}

std::int64_t parameter_count(const nn::Module& module) {
  std::int64_t n = 0;
  for (const auto& [name, p] : unique_parameters(module)) n += p.numel();
  return n;
}

}  // namespace ismallnet
