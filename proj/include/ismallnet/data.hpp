#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ismallnet/plane.hpp"

namespace ismallnet {

/// A grayscale infrared frame with its binary target mask. Immutable once built.
struct Sample {
  std::string id;
  GrayImage image;
  BinaryMask mask;
};

struct LoadOptions {
  int height = 256;  ///< target size after resizing; must be divisible by 32
  int width = 256;
  /// 8-bit mask values strictly between `mask_tolerance` and `255 - mask_tolerance`
  /// are rejected as non-binary.
  int mask_tolerance = 64;
};

/// Reads `<root>/splits/<split>.txt` (one id per line). Throws LoadError if absent.
std::vector<std::string> read_split(const std::filesystem::path& root, const std::string& split);
void write_split(const std::filesystem::path& root, const std::string& split,
                 const std::vector<std::string>& ids);

/// Loads samples in split-file order from the SIRST layout
/// (`images/<id>.png`, `masks/<id>.png`, `splits/<split>.txt`).
/// Images are scaled to [0,1] and resized bilinearly, masks are binarized at 128
/// and resized by nearest neighbour.
std::vector<Sample> load_dataset(const std::filesystem::path& root, const std::string& split,
                                 const LoadOptions& options = {});

/// Writes the image (quantized to 8 bits) and the mask (0/255) in the SIRST layout.
void save_sample(const std::filesystem::path& root, const Sample& sample);

GrayImage resize_bilinear(const GrayImage& image, int height, int width);
BinaryMask resize_nearest(const BinaryMask& mask, int height, int width);

/// Signal-to-clutter ratio (mean_target - mean_background) / std_background.
/// Throws DomainError on an empty foreground, an empty background or a flat background.
double scr(const GrayImage& image, const BinaryMask& mask);

struct SynthConfig {
  int height = 256;
  int width = 256;
  int num_targets = 2;
  double radius_min = 1.0;  ///< half-maximum radius of a target blob, pixels
  double radius_max = 4.0;
  double target_scr = 5.0;
  double clutter_smoothness = 3.0;  ///< Gaussian sigma of the clutter filter, pixels
  std::uint64_t seed = 1;

  /// Throws ConfigError on invalid values.
  void validate() const;
};

/// Deterministic synthetic scene: smoothed clutter in [0.1, 0.6] plus
/// non-overlapping Gaussian targets whose amplitude is solved so that the
/// realized SCR is within 10% of `target_scr`. Throws SynthesisError when the
/// targets cannot be placed or the SCR cannot be reached.
Sample synthesize_sample(const SynthConfig& cfg);

/// `count` samples with ids `synth_00000...`; sample i uses a seed derived from (cfg.seed, i).
std::vector<Sample> synthesize_dataset(const SynthConfig& cfg, int count);

}  // namespace ismallnet
