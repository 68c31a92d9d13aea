#pragma once

#include <cstdint>
#include <span>
#include <string>

#include <json.hpp>

#include "ismallnet/plane.hpp"

namespace ismallnet {

/// Pixel confusion counts pooled over everything evaluated so far.
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& other);
  bool operator==(const ConfusionCounts&) const = default;
};

ConfusionCounts merge(ConfusionCounts a, const ConfusionCounts& b);

inline constexpr double kDefaultThreshold = 0.5;

/// Binarizes `pred` at `threshold` (>=) and adds its per-pixel outcome against `gt`.
/// `pred` and `gt` are row-major H*W buffers. Throws ShapeError on length mismatch.
ConfusionCounts update(ConfusionCounts counts, std::span<const float> pred, const BinaryMask& gt,
                       double threshold = kDefaultThreshold);
ConfusionCounts update(ConfusionCounts counts, const Plane<float>& pred, const BinaryMask& gt,
                       double threshold = kDefaultThreshold);

struct MetricsReport {
  double miou = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// IoU = tp/(tp+fp+fn), P = tp/(tp+fp), R = tp/(tp+fn), F1 = 2PR/(P+R); 0/0 -> 0.
MetricsReport finalize(const ConfusionCounts& counts);
double f1_score(double precision, double recall);

/// Pooled counts plus optional per-image IoU averaging for mIoU.
class MetricsAccumulator {
 public:
  enum class MiouMode { pooled, per_image };

  explicit MetricsAccumulator(double threshold = kDefaultThreshold, MiouMode mode = MiouMode::pooled)
      : threshold_(threshold), mode_(mode) {}

  void add(std::span<const float> pred, const BinaryMask& gt);
  void merge(const MetricsAccumulator& other);
  MetricsReport report() const;
  const ConfusionCounts& counts() const { return counts_; }
  std::size_t images() const { return images_; }

 private:
  double threshold_;
  MiouMode mode_;
  ConfusionCounts counts_;
  double iou_sum_ = 0.0;
  std::size_t images_ = 0;
};

nlohmann::json to_json(const MetricsReport& report);
/// `key=value` lines: miou, precision, recall, f1.
std::string to_key_value(const MetricsReport& report);

}  // namespace ismallnet
