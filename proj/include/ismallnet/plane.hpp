#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ismallnet/errors.hpp"

namespace ismallnet {

/// Row-major single-channel 2-D array.
template <typename T>
class Plane {
 public:
  using value_type = T;

  Plane() = default;
  Plane(int height, int width, T fill = T{})
      : height_(height), width_(width),
        data_(static_cast<std::size_t>(checked(height, width)), fill) {}
  Plane(int height, int width, std::vector<T> values)
      : height_(height), width_(width), data_(std::move(values)) {
    if (data_.size() != static_cast<std::size_t>(checked(height, width))) {
      throw ShapeError("Plane: value count does not match height*width");
    }
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int row, int col) { return data_[index(row, col)]; }
  const T& operator()(int row, int col) const { return data_[index(row, col)]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  const std::vector<T>& vector() const { return data_; }

  template <typename U>
  bool same_shape(const Plane<U>& other) const {
    return height_ == other.height() && width_ == other.width();
  }

  bool operator==(const Plane&) const = default;

 private:
  static long checked(int height, int width) {
    if (height < 0 || width < 0) throw ShapeError("Plane: negative dimension");
    return static_cast<long>(height) * width;
  }
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(col);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

/// Grayscale intensities in [0,1].
using GrayImage = Plane<float>;
/// Binary target mask with values exactly 0 or 1.
using BinaryMask = Plane<std::uint8_t>;
/// Real-valued map (distance maps, decoupled labels, predictions).
using RealMap = Plane<double>;

/// Connected-component labelling of the nonzero pixels of a mask.
struct Components {
  Plane<int> labels;  ///< 0 = background, 1..count = component id
  int count = 0;
};

/// 8-connected by default; pass `eight_connected = false` for 4-connectivity.
Components label_components(const BinaryMask& mask, bool eight_connected = true);

int count_foreground(const BinaryMask& mask);

}  // namespace ismallnet
