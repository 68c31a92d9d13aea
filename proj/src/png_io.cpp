#include "ismallnet/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

namespace ismallnet {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_handler(png_structp, png_const_charp message) {
  throw LoadError(std::string("png: ") + message);
}
void png_warning_handler(png_structp, png_const_charp) {}

void write_png(const std::filesystem::path& path, int height, int width, int color_type,
               const std::uint8_t* data, std::size_t row_bytes) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw LoadError("cannot open for writing: " + path.string());

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler, png_warning_handler);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw LoadError("png: out of memory");
  }
  try {
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int r = 0; r < height; ++r) {
      png_write_row(png, const_cast<png_bytep>(data + static_cast<std::size_t>(r) * row_bytes));
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
}

struct Decoded {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  ///< row-major, 1 or 3 bytes per pixel
};

Decoded read_png(const std::filesystem::path& path, bool rgb) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw LoadError("cannot open: " + path.string());

  png_byte signature[8];
  if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0) {
    throw LoadError("not a PNG file: " + path.string());
  }
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler, png_warning_handler);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw LoadError("png: out of memory");
  }

  Decoded out;
  try {
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);
    const bool has_trns = png_get_valid(png, info, PNG_INFO_tRNS) != 0;
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (has_trns) png_set_tRNS_to_alpha(png);
    if ((color & PNG_COLOR_MASK_ALPHA) || has_trns) png_set_strip_alpha(png);
    const bool colour_source = (color & PNG_COLOR_MASK_COLOR) != 0;
    if (rgb && !colour_source) png_set_gray_to_rgb(png);
    if (!rgb && colour_source) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    png_read_update_info(png, info);
    const int channels = png_get_channels(png, info);
    if (channels != (rgb ? 3 : 1)) png_error(png, "unsupported channel layout");

    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    const std::size_t row_bytes = png_get_rowbytes(png, info);
    out.pixels.resize(row_bytes * static_cast<std::size_t>(out.height));
    std::vector<png_bytep> rows(static_cast<std::size_t>(out.height));
    for (int r = 0; r < out.height; ++r) rows[r] = out.pixels.data() + row_bytes * r;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  } catch (const LoadError& e) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw LoadError(path.string() + ": " + e.what());
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

}  // namespace

Gray8 read_png_gray8(const std::filesystem::path& path) {
  Decoded d = read_png(path, false);
  return Gray8(d.height, d.width, std::move(d.pixels));
}

Rgb8 read_png_rgb8(const std::filesystem::path& path) {
  const Decoded d = read_png(path, true);
  Rgb8 out(d.height, d.width);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.values()[i] = {d.pixels[3 * i], d.pixels[3 * i + 1], d.pixels[3 * i + 2]};
  }
  return out;
}

void write_png_gray8(const std::filesystem::path& path, const Gray8& image) {
  write_png(path, image.height(), image.width(), PNG_COLOR_TYPE_GRAY, image.values().data(),
            static_cast<std::size_t>(image.width()));
}

void write_png_rgb8(const std::filesystem::path& path, const Rgb8& image) {
  static_assert(sizeof(std::array<std::uint8_t, 3>) == 3);
  write_png(path, image.height(), image.width(), PNG_COLOR_TYPE_RGB,
            reinterpret_cast<const std::uint8_t*>(image.values().data()),
            static_cast<std::size_t>(image.width()) * 3);
}

}  // namespace ismallnet
