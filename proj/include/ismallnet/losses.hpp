#pragma once

#include <torch/torch.h>

#include "ismallnet/model.hpp"

namespace ismallnet {

struct LossWeights {
  double fused = 1.0;
  double interior = 1.0;
  double boundary = 1.0;

  /// Throws ConfigError on negative weights or when all are zero.
  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

/// Default weights with the streams a variant lacks set to zero.
LossWeights default_weights(const ModelConfig& cfg);

enum class LossKind { soft_iou, bce };

inline constexpr double kSoftIouEpsilon = 1e-6;

/// 1 - (sum(p t) + eps) / (sum p + sum t - sum(p t) + eps), pooled over every element of the batch.
/// On an empty target this reduces to sum p / (sum p + eps).
torch::Tensor soft_iou_loss(const torch::Tensor& pred, const torch::Tensor& target);

/// Mean binary cross-entropy on probabilities.
torch::Tensor bce_loss(const torch::Tensor& pred, const torch::Tensor& target);

/// Decoupled supervision for a batch, each [N, 1, H, W].
struct LabelBatch {
  torch::Tensor gt;
  torch::Tensor interior;
  torch::Tensor boundary;
};

struct LossBreakdown {
  torch::Tensor total;
  torch::Tensor fused;
  torch::Tensor interior;  ///< zero scalar when the stream is absent
  torch::Tensor boundary;
};

/// w_f L(fused, gt) + w_i L(interior, interior) + w_b L(boundary, boundary).
/// Deep-supervision side maps, when present, are averaged into their stream's term.
/// Throws ConfigError when a weight is positive for a stream the outputs lack.
LossBreakdown total_loss(const ModelOutputs& outputs, const LabelBatch& labels, const LossWeights& w,
                         LossKind kind = LossKind::soft_iou);

}  // namespace ismallnet
