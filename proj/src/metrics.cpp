#include "ismallnet/metrics.hpp"

#include <cstdio>

#include "ismallnet/errors.hpp"

namespace ismallnet {
namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& other) {
  tp += other.tp;
  fp += other.fp;
  fn += other.fn;
  tn += other.tn;
  return *this;
}

ConfusionCounts merge(ConfusionCounts a, const ConfusionCounts& b) { return a += b; }

ConfusionCounts update(ConfusionCounts counts, std::span<const float> pred, const BinaryMask& gt,
                       double threshold) {
  if (pred.size() != gt.size()) throw ShapeError("metrics: prediction and mask sizes differ");
  const auto truth = gt.values();
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] >= threshold;
    const bool t = truth[i] != 0;
    if (p && t) ++counts.tp;
    else if (p) ++counts.fp;
    else if (t) ++counts.fn;
    else ++counts.tn;
  }
  return counts;
}

ConfusionCounts update(ConfusionCounts counts, const Plane<float>& pred, const BinaryMask& gt, double threshold) {
  if (!pred.same_shape(gt)) throw ShapeError("metrics: prediction and mask shapes differ");
  return update(counts, pred.values(), gt, threshold);
}

double f1_score(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

MetricsReport finalize(const ConfusionCounts& c) {
  MetricsReport r;
  r.miou = ratio(c.tp, c.tp + c.fp + c.fn);
  r.precision = ratio(c.tp, c.tp + c.fp);
  r.recall = ratio(c.tp, c.tp + c.fn);
  r.f1 = f1_score(r.precision, r.recall);
  return r;
}

void MetricsAccumulator::add(std::span<const float> pred, const BinaryMask& gt) {
  const ConfusionCounts image = update({}, pred, gt, threshold_);
  counts_ += image;
  iou_sum_ += finalize(image).miou;
  ++images_;
}

void MetricsAccumulator::merge(const MetricsAccumulator& other) {
  counts_ += other.counts_;
  iou_sum_ += other.iou_sum_;
  images_ += other.images_;
}

MetricsReport MetricsAccumulator::report() const {
  MetricsReport r = finalize(counts_);
  if (mode_ == MiouMode::per_image) r.miou = images_ ? iou_sum_ / static_cast<double>(images_) : 0.0;
  return r;
}

nlohmann::json to_json(const MetricsReport& r) {
  return {{"miou", r.miou}, {"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1}};
}

std::string to_key_value(const MetricsReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "miou=%.6f\nprecision=%.6f\nrecall=%.6f\nf1=%.6f\n", r.miou, r.precision,
                r.recall, r.f1);
  return buf;
}

}  // namespace ismallnet
