#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rfk {

/// Interleaved RGB image with values in [0, 1], row-major from the top row.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int w, int h, float fill = 0.0f)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * 3 + c;
  }
  float& at(int x, int y, int c) { return pixels[index(x, y, c)]; }
  float at(int x, int y, int c) const { return pixels[index(x, y, c)]; }

  Eigen::Vector3d rgb(int x, int y) const { return {at(x, y, 0), at(x, y, 1), at(x, y, 2)}; }
  void set_rgb(int x, int y, const Eigen::Vector3d& v) {
    for (int c = 0; c < 3; ++c) at(x, y, c) = static_cast<float>(v[c]);
  }

  bool same_shape(const Image& o) const { return width == o.width && height == o.height; }

  /// Mirror image about the vertical axis.
  Image flipped_horizontally() const {
    Image out(width, height);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        for (int c = 0; c < 3; ++c) out.at(width - 1 - x, y, c) = at(x, y, c);
    return out;
  }
};

inline std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

/// Reads an 8-bit PNG; values map to value / 255 and any alpha channel is
/// composited over `background`.
inline Image read_png(const std::filesystem::path& path, const Eigen::Vector3d& background = Eigen::Vector3d::Ones()) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str()))
    throw std::runtime_error("cannot read PNG '" + path.string() + "': " + img.message);
  img.format = PNG_FORMAT_RGBA;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw std::runtime_error("cannot decode PNG '" + path.string() + "': " + msg);
  }
  Image out(static_cast<int>(img.width), static_cast<int>(img.height));
  for (std::size_t p = 0; p < static_cast<std::size_t>(out.width) * out.height; ++p) {
    const std::uint8_t* px = &buffer[4 * p];
    const float alpha = px[3] / 255.0f;
    for (int c = 0; c < 3; ++c) {
      const float v = px[c] / 255.0f;
      out.pixels[3 * p + c] = px[3] == 255 ? v : alpha * v + (1.0f - alpha) * static_cast<float>(background[c]);
    }
  }
  return out;
}

/// Writes an 8-bit RGB PNG (values clamped to [0, 1] and rounded).
inline void write_png(const std::filesystem::path& path, const Image& image) {
  std::vector<std::uint8_t> buffer(image.pixels.size());
  std::transform(image.pixels.begin(), image.pixels.end(), buffer.begin(), to_byte);
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, buffer.data(), 0, nullptr))
    throw std::runtime_error("cannot write PNG '" + path.string() + "': " + img.message);
}

/// Rounds every value to the nearest 8-bit level, as a PNG round trip would.
inline Image quantized(const Image& image) {
  Image out = image;
  for (float& v : out.pixels) v = to_byte(v) / 255.0f;
  return out;
}

}  // namespace rfk
