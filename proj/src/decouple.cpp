#include "ismallnet/decouple.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "ismallnet/archive.hpp"
#include "ismallnet/errors.hpp"

namespace ismallnet {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1-D squared distance transform of a sampled function (lower envelope of parabolas).
void squared_edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
                    std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (k < 0) {
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      k = 0;
      continue;
    }
    double s = 0.0;
    // z[0] = -inf, so the scan always stops at k = 0
    while (true) {
      const int p = v[k];
      s = ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) / (2.0 * (q - p));
      if (s > z[k]) break;
      --k;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    std::fill(d.begin(), d.end(), kInf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double diff = q - v[j];
    d[q] = diff * diff + f[v[j]];
  }
}

}  // namespace

RealMap distance_to_background(const BinaryMask& mask) {
  const int h = mask.height();
  const int w = mask.width();
  RealMap out(h, w, 0.0);
  if (mask.empty()) return out;

  const bool has_background =
      std::any_of(mask.values().begin(), mask.values().end(), [](auto v) { return v == 0; });
  if (!has_background) {
    std::fill(out.values().begin(), out.values().end(), static_cast<double>(std::max(h, w)));
    return out;
  }

  const int n = std::max(h, w);
  std::vector<double> f(static_cast<std::size_t>(n)), d(static_cast<std::size_t>(n));
  std::vector<int> v(static_cast<std::size_t>(n));
  std::vector<double> z(static_cast<std::size_t>(n) + 1);

  RealMap sq(h, w);
  for (int c = 0; c < w; ++c) {
    f.resize(h);
    d.resize(h);
    for (int r = 0; r < h; ++r) f[r] = mask(r, c) ? kInf : 0.0;
    squared_edt_1d(f, d, v, z);
    for (int r = 0; r < h; ++r) sq(r, c) = d[r];
  }
  for (int r = 0; r < h; ++r) {
    f.resize(w);
    d.resize(w);
    for (int c = 0; c < w; ++c) f[c] = sq(r, c);
    squared_edt_1d(f, d, v, z);
    for (int c = 0; c < w; ++c) out(r, c) = mask(r, c) ? std::sqrt(d[c]) : 0.0;
  }
  return out;
}

DecoupledLabel decouple(const BinaryMask& mask) {
  DecoupledLabel label{mask, RealMap(mask.height(), mask.width(), 0.0),
                       RealMap(mask.height(), mask.width(), 0.0)};
  const RealMap dist = distance_to_background(mask);
  const Components comps = label_components(mask, true);

  std::vector<double> peak(static_cast<std::size_t>(comps.count) + 1, 0.0);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const int id = comps.labels.values()[i];
    if (id) peak[id] = std::max(peak[id], dist.values()[i]);
  }
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const int id = comps.labels.values()[i];
    if (!id) continue;
    const double interior = dist.values()[i] / peak[id];
    label.interior.values()[i] = interior;
    label.boundary.values()[i] = 1.0 - interior;
  }
  return label;
}

void save_decoupled(const std::filesystem::path& path, const DecoupledLabel& label) {
  Archive archive;
  archive.manifest = R"({"kind":"decoupled_label"})";
  const std::vector<std::int64_t> shape{label.gt.height(), label.gt.width()};
  auto pack = [&](const RealMap& map) {
    NamedArray a{shape, std::vector<float>(map.size())};
    std::transform(map.values().begin(), map.values().end(), a.values.begin(),
                   [](double v) { return static_cast<float>(v); });
    return a;
  };
  archive.arrays.emplace("interior", pack(label.interior));
  archive.arrays.emplace("boundary", pack(label.boundary));
  save_archive(path, archive);
}

DecoupledLabel load_decoupled(const std::filesystem::path& path, const BinaryMask& gt) {
  const Archive archive = load_archive(path);
  DecoupledLabel label{gt, RealMap(gt.height(), gt.width()), RealMap(gt.height(), gt.width())};
  auto unpack = [&](const char* name, RealMap& map) {
    const auto it = archive.arrays.find(name);
    if (it == archive.arrays.end()) throw LoadError(path.string() + ": missing array " + name);
    if (it->second.shape != std::vector<std::int64_t>{gt.height(), gt.width()}) {
      throw ShapeError(path.string() + ": array " + name + " does not match mask shape");
    }
    std::copy(it->second.values.begin(), it->second.values.end(), map.values().begin());
  };
  unpack("interior", label.interior);
  unpack("boundary", label.boundary);
  return label;
}

}  // namespace ismallnet
