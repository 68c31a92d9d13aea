#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include "ismallnet/plane.hpp"

namespace ismallnet {

using Gray8 = Plane<std::uint8_t>;
using Rgb8 = Plane<std::array<std::uint8_t, 3>>;

/// Reads any PNG and converts it to 8-bit grayscale. Throws LoadError.
Gray8 read_png_gray8(const std::filesystem::path& path);
/// Reads any PNG as 8-bit RGB (grey sources are replicated). Throws LoadError.
Rgb8 read_png_rgb8(const std::filesystem::path& path);

/// Throws LoadError when the file cannot be written.
void write_png_gray8(const std::filesystem::path& path, const Gray8& image);
void write_png_rgb8(const std::filesystem::path& path, const Rgb8& image);

}  // namespace ismallnet
