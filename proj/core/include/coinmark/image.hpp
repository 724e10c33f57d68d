#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "coinmark/tensor.hpp"

namespace coinmark {

/// Pixel grid with values in [0, 1], stored channel-major then row-major.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::size_t c = 1, double fill = 0.0);

  std::size_t size() const { return pixels.size(); }
  std::size_t plane() const { return width * height; }
  std::size_t index(std::size_t x, std::size_t y, std::size_t ch = 0) const {
    return (ch * height + y) * width + x;
  }
  double& at(std::size_t x, std::size_t y, std::size_t ch = 0) { return pixels[index(x, y, ch)]; }
  double at(std::size_t x, std::size_t y, std::size_t ch = 0) const { return pixels[index(x, y, ch)]; }

  bool same_geometry(const Image& other) const {
    return width == other.width && height == other.height && channels == other.channels;
  }

  /// Throws unless the dimensions are consistent and every pixel is in [0, 1].
  void validate() const;

  Tensor to_tensor() const;
  static Image from_tensor(const Tensor& t);

  friend bool operator==(const Image&, const Image&) = default;
};

/// Centered crop; when the slack is odd the extra pixel goes to the far side.
Image center_crop(const Image& image, std::size_t width, std::size_t height);
Image crop(const Image& image, std::size_t x0, std::size_t y0, std::size_t width, std::size_t height);

/// Inverse of center_crop for gradients: places `inner` at the centered
/// offset inside a zero image of the given size.
Image embed_centered(const Image& inner, std::size_t width, std::size_t height);

/// Rounds every pixel to the nearest of the 256 levels a P5 file can hold.
void quantize_8bit(Image& image);

/// Binary portable graymap (P5, maxval <= 255) I/O for single-channel images.
/// Written files use maxval 255; pixel value v is stored as round(255 v).
void write_pgm(const Image& image, const std::filesystem::path& path);
Image read_pgm(const std::filesystem::path& path);

}  // namespace coinmark
