#include "ismallnet/losses.hpp"

#include "ismallnet/errors.hpp"

namespace ismallnet {

void LossWeights::validate() const {
  if (fused < 0 || interior < 0 || boundary < 0) throw ConfigError("loss weights must be non-negative");
  if (fused == 0 && interior == 0 && boundary == 0) throw ConfigError("at least one loss weight must be > 0");
}

LossWeights default_weights(const ModelConfig& cfg) {
  return {1.0, cfg.has_interior() ? 1.0 : 0.0, cfg.has_boundary() ? 1.0 : 0.0};
}

torch::Tensor soft_iou_loss(const torch::Tensor& pred, const torch::Tensor& target) {
  if (pred.sizes() != target.sizes()) throw ShapeError("soft_iou_loss: prediction and target shapes differ");
  const auto inter = (pred * target).sum();
  return 1.0 - (inter + kSoftIouEpsilon) / (pred.sum() + target.sum() - inter + kSoftIouEpsilon);
}

torch::Tensor bce_loss(const torch::Tensor& pred, const torch::Tensor& target) {
  if (pred.sizes() != target.sizes()) throw ShapeError("bce_loss: prediction and target shapes differ");
  return torch::binary_cross_entropy(pred, target);
}

namespace {

torch::Tensor stream_term(const torch::Tensor& main, const std::vector<torch::Tensor>& side,
                          const torch::Tensor& target, LossKind kind) {
  auto loss_fn = kind == LossKind::soft_iou ? soft_iou_loss : bce_loss;
  auto loss = loss_fn(main, target);
  if (side.empty()) return loss;
  for (const auto& s : side) loss = loss + loss_fn(s, target);
  return loss / static_cast<double>(side.size() + 1);
}

}  // namespace

LossBreakdown total_loss(const ModelOutputs& outputs, const LabelBatch& labels, const LossWeights& w,
                         LossKind kind) {
  w.validate();
  if (w.interior > 0 && !outputs.interior) throw ConfigError("interior loss weight > 0 but the model has no interior stream");
  if (w.boundary > 0 && !outputs.boundary) throw ConfigError("boundary loss weight > 0 but the model has no boundary stream");

  const auto zero = torch::zeros({}, outputs.fused.options());
  LossBreakdown b;
  b.fused = stream_term(outputs.fused, {}, labels.gt, kind);
  b.interior = outputs.interior ? stream_term(*outputs.interior, outputs.interior_side, labels.interior, kind) : zero;
  b.boundary = outputs.boundary ? stream_term(*outputs.boundary, outputs.boundary_side, labels.boundary, kind) : zero;
  b.total = w.fused * b.fused;
  if (w.interior > 0) b.total = b.total + w.interior * b.interior;
  if (w.boundary > 0) b.total = b.total + w.boundary * b.boundary;
  return b;
}

}  // namespace ismallnet
