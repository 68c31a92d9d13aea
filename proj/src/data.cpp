#include "ismallnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "ismallnet/errors.hpp"
#include "ismallnet/png_io.hpp"

namespace ismallnet {
namespace fs = std::filesystem;

namespace {

constexpr double kClutterLow = 0.1;
constexpr double kClutterHigh = 0.6;
constexpr int kPlacementRetries = 2000;

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// Separable Gaussian blur with reflected borders.
std::vector<double> gaussian_blur(const std::vector<double>& in, int h, int w, double sigma) {
  if (sigma <= 0.0) return in;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    kernel[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
    total += kernel[k + radius];
  }
  for (auto& k : kernel) k /= total;

  auto reflect = [](int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
    return i;
  };
  std::vector<double> tmp(in.size()), out(in.size());
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * in[r * w + reflect(c + k, w)];
      tmp[r * w + c] = acc;
    }
  }
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * tmp[reflect(r + k, h) * w + c];
      out[r * w + c] = acc;
    }
  }
  return out;
}

struct Target {
  int row;
  int col;
  double radius;
  double sigma;
};

}  // namespace

std::vector<std::string> read_split(const fs::path& root, const std::string& split) {
  const fs::path file = root / "splits" / (split + ".txt");
  std::ifstream in(file);
  if (!in) throw LoadError("missing split file: " + file.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    ids.push_back(line.substr(first));
  }
  return ids;
}

void write_split(const fs::path& root, const std::string& split, const std::vector<std::string>& ids) {
  fs::create_directories(root / "splits");
  const fs::path file = root / "splits" / (split + ".txt");
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write split file: " + file.string());
  for (const auto& id : ids) out << id << '\n';
}

GrayImage resize_bilinear(const GrayImage& image, int height, int width) {
  if (height <= 0 || width <= 0) throw ShapeError("resize_bilinear: non-positive size");
  if (image.height() == height && image.width() == width) return image;
  GrayImage out(height, width);
  const double sy = static_cast<double>(image.height()) / height;
  const double sx = static_cast<double>(image.width()) / width;
  for (int r = 0; r < height; ++r) {
    const double y = std::max(0.0, (r + 0.5) * sy - 0.5);
    const int y0 = std::min(static_cast<int>(y), image.height() - 1);
    const int y1 = std::min(y0 + 1, image.height() - 1);
    const double fy = y - y0;
    for (int c = 0; c < width; ++c) {
      const double x = std::max(0.0, (c + 0.5) * sx - 0.5);
      const int x0 = std::min(static_cast<int>(x), image.width() - 1);
      const int x1 = std::min(x0 + 1, image.width() - 1);
      const double fx = x - x0;
      const double top = (1 - fx) * image(y0, x0) + fx * image(y0, x1);
      const double bottom = (1 - fx) * image(y1, x0) + fx * image(y1, x1);
      out(r, c) = static_cast<float>(std::clamp((1 - fy) * top + fy * bottom, 0.0, 1.0));
    }
  }
  return out;
}

BinaryMask resize_nearest(const BinaryMask& mask, int height, int width) {
  if (height <= 0 || width <= 0) throw ShapeError("resize_nearest: non-positive size");
  if (mask.height() == height && mask.width() == width) return mask;
  BinaryMask out(height, width);
  for (int r = 0; r < height; ++r) {
    const int sr = std::min(mask.height() - 1, static_cast<int>(std::floor((r + 0.5) * mask.height() / height)));
    for (int c = 0; c < width; ++c) {
      const int sc = std::min(mask.width() - 1, static_cast<int>(std::floor((c + 0.5) * mask.width() / width)));
      out(r, c) = mask(sr, sc);
    }
  }
  return out;
}

std::vector<Sample> load_dataset(const fs::path& root, const std::string& split, const LoadOptions& options) {
  if (options.height <= 0 || options.width <= 0 || options.height % 32 || options.width % 32) {
    throw ConfigError("load size must be positive and divisible by 32");
  }
  std::vector<Sample> samples;
  for (const auto& id : read_split(root, split)) {
    const fs::path image_path = root / "images" / (id + ".png");
    const fs::path mask_path = root / "masks" / (id + ".png");
    if (!fs::exists(image_path)) throw LoadError("sample '" + id + "': missing image " + image_path.string());
    if (!fs::exists(mask_path)) throw LoadError("sample '" + id + "': missing mask " + mask_path.string());

    const Gray8 raw_image = read_png_gray8(image_path);
    const Gray8 raw_mask = read_png_gray8(mask_path);
    if (!raw_image.same_shape(raw_mask)) {
      throw DataError("sample '" + id + "': image and mask sizes differ");
    }

    GrayImage image(raw_image.height(), raw_image.width());
    std::transform(raw_image.values().begin(), raw_image.values().end(), image.values().begin(),
                   [](std::uint8_t v) { return static_cast<float>(v) / 255.0f; });

    BinaryMask mask(raw_mask.height(), raw_mask.width());
    for (std::size_t i = 0; i < raw_mask.size(); ++i) {
      const int v = raw_mask.values()[i];
      if (v > options.mask_tolerance && v < 255 - options.mask_tolerance) {
        throw DataError("sample '" + id + "': mask value " + std::to_string(v) + " is not binary");
      }
      mask.values()[i] = v >= 128 ? 1 : 0;
    }

    samples.push_back(Sample{id, resize_bilinear(image, options.height, options.width),
                             resize_nearest(mask, options.height, options.width)});
  }
  return samples;
}

void save_sample(const fs::path& root, const Sample& sample) {
  if (!sample.image.same_shape(sample.mask)) throw ShapeError("save_sample: image/mask shape mismatch");
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  Gray8 image(sample.image.height(), sample.image.width());
  Gray8 mask(sample.mask.height(), sample.mask.width());
  for (std::size_t i = 0; i < image.size(); ++i) {
    image.values()[i] = to_byte(sample.image.values()[i]);
    mask.values()[i] = sample.mask.values()[i] ? 255 : 0;
  }
  write_png_gray8(root / "images" / (sample.id + ".png"), image);
  write_png_gray8(root / "masks" / (sample.id + ".png"), mask);
}

double scr(const GrayImage& image, const BinaryMask& mask) {
  if (!image.same_shape(mask)) throw ShapeError("scr: image/mask shape mismatch");
  double fg_sum = 0.0, bg_sum = 0.0;
  std::size_t fg_n = 0, bg_n = 0;
  for (std::size_t i = 0; i < image.size(); ++i) {
    if (mask.values()[i]) {
      fg_sum += image.values()[i];
      ++fg_n;
    } else {
      bg_sum += image.values()[i];
      ++bg_n;
    }
  }
  if (fg_n == 0) throw DomainError("scr: mask has no foreground pixels");
  if (bg_n == 0) throw DomainError("scr: mask has no background pixels");
  const double mu_t = fg_sum / static_cast<double>(fg_n);
  const double mu_b = bg_sum / static_cast<double>(bg_n);
  double var = 0.0;
  for (std::size_t i = 0; i < image.size(); ++i) {
    if (!mask.values()[i]) {
      const double d = image.values()[i] - mu_b;
      var += d * d;
    }
  }
  const double sigma_b = std::sqrt(var / static_cast<double>(bg_n));
  if (sigma_b <= 0.0) throw DomainError("scr: background has zero variance");
  return (mu_t - mu_b) / sigma_b;
}

void SynthConfig::validate() const {
  if (height <= 0 || width <= 0 || height % 32 || width % 32) {
    throw ConfigError("synth: height and width must be positive multiples of 32");
  }
  if (num_targets < 0) throw ConfigError("synth: num_targets must be >= 0");
  if (radius_min < 0.5 || radius_max < radius_min) {
    throw ConfigError("synth: need 0.5 <= radius_min <= radius_max");
  }
  if (!(target_scr > 0.0)) throw ConfigError("synth: target_scr must be > 0");
  if (clutter_smoothness < 0.0) throw ConfigError("synth: clutter_smoothness must be >= 0");
}

Sample synthesize_sample(const SynthConfig& cfg) {
  cfg.validate();
  const int h = cfg.height;
  const int w = cfg.width;
  std::mt19937_64 rng(cfg.seed);

  // Clutter: smoothed white noise rescaled to [kClutterLow, kClutterHigh].
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> noise(static_cast<std::size_t>(h) * w);
  for (auto& v : noise) v = normal(rng);
  std::vector<double> background = gaussian_blur(noise, h, w, cfg.clutter_smoothness);
  const auto [lo_it, hi_it] = std::minmax_element(background.begin(), background.end());
  const double lo = *lo_it, hi = *hi_it;
  for (auto& v : background) {
    v = hi > lo ? kClutterLow + (v - lo) / (hi - lo) * (kClutterHigh - kClutterLow)
                : 0.5 * (kClutterLow + kClutterHigh);
  }

  // Target placement: integer centres, half-maximum discs kept two pixels apart
  // so every target stays its own 8-connected component.
  std::uniform_real_distribution<double> radius_dist(cfg.radius_min, cfg.radius_max);
  std::vector<Target> targets;
  const double half_max = std::sqrt(2.0 * std::log(2.0));
  for (int t = 0; t < cfg.num_targets; ++t) {
    const double radius = cfg.radius_min == cfg.radius_max ? cfg.radius_min : radius_dist(rng);
    const int margin = static_cast<int>(std::ceil(radius)) + 1;
    if (h - 2 * margin <= 0 || w - 2 * margin <= 0) throw SynthesisError("synth: target larger than image");
    std::uniform_int_distribution<int> row_dist(margin, h - 1 - margin);
    std::uniform_int_distribution<int> col_dist(margin, w - 1 - margin);
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementRetries && !placed; ++attempt) {
      const Target candidate{row_dist(rng), col_dist(rng), radius, radius / half_max};
      placed = std::none_of(targets.begin(), targets.end(), [&](const Target& other) {
        return std::hypot(candidate.row - other.row, candidate.col - other.col) <=
               candidate.radius + other.radius + 2.0;
      });
      if (placed) targets.push_back(candidate);
    }
    if (!placed) {
      throw SynthesisError("synth: could not place " + std::to_string(cfg.num_targets) +
                           " non-overlapping targets");
    }
  }

  Sample sample;
  sample.id = "synth";
  sample.mask = BinaryMask(h, w, 0);
  std::vector<double> profile(static_cast<std::size_t>(h) * w, 0.0);
  for (const auto& t : targets) {
    const int reach = static_cast<int>(std::ceil(4.0 * t.sigma)) + 1;
    for (int r = std::max(0, t.row - reach); r <= std::min(h - 1, t.row + reach); ++r) {
      for (int c = std::max(0, t.col - reach); c <= std::min(w - 1, t.col + reach); ++c) {
        const double d2 = static_cast<double>((r - t.row) * (r - t.row) + (c - t.col) * (c - t.col));
        const double g = std::exp(-0.5 * d2 / (t.sigma * t.sigma));
        profile[static_cast<std::size_t>(r) * w + c] += g;
        if (g > 0.5) sample.mask(r, c) = 1;
      }
    }
  }

  auto render = [&](double amplitude) {
    GrayImage image(h, w);
    for (std::size_t i = 0; i < image.size(); ++i) {
      const double v = background[i] + amplitude * profile[i];
      image.values()[i] = static_cast<float>(to_byte(v)) / 255.0f;
    }
    return image;
  };

  if (targets.empty()) {
    sample.image = render(0.0);
    return sample;
  }

  // scr(render(A)) grows with A until the targets saturate; bisect on it.
  double lo_a = 0.0, hi_a = 1.0;
  for (int iter = 0; iter < 50; ++iter) {
    const double mid = 0.5 * (lo_a + hi_a);
    (scr(render(mid), sample.mask) < cfg.target_scr ? lo_a : hi_a) = mid;
  }
  GrayImage best = render(hi_a);
  double best_err = std::abs(scr(best, sample.mask) - cfg.target_scr);
  GrayImage lower = render(lo_a);
  if (const double err = std::abs(scr(lower, sample.mask) - cfg.target_scr); err < best_err) {
    best = std::move(lower);
    best_err = err;
  }
  if (best_err > 0.1 * cfg.target_scr) {
    throw SynthesisError("synth: target SCR " + std::to_string(cfg.target_scr) + " is not reachable");
  }
  sample.image = std::move(best);
  return sample;
}

std::vector<Sample> synthesize_dataset(const SynthConfig& cfg, int count) {
  if (count < 0) throw ConfigError("synth: sample count must be >= 0");
  std::vector<Sample> samples;
  samples.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    SynthConfig local = cfg;
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(i)};
    std::uint32_t words[2];
    seq.generate(words, words + 2);
    local.seed = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
    Sample s = synthesize_sample(local);
    char id[32];
    std::snprintf(id, sizeof id, "synth_%05d", i);
    s.id = id;
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace ismallnet
