#include "coinmark/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "coinmark/error.hpp"

namespace coinmark {

Image::Image(std::size_t w, std::size_t h, std::size_t c, double fill)
    : width(w), height(h), channels(c), pixels(w * h * c, fill) {
  require(w > 0 && h > 0 && c > 0, "image dimensions must be positive");
}

void Image::validate() const {
  require(width > 0 && height > 0 && channels > 0, "image dimensions must be positive");
  if (pixels.size() != width * height * channels) {
    fail(ErrorKind::ShapeMismatch, "image holds " + std::to_string(pixels.size()) +
                                       " values, expected " +
                                       std::to_string(width * height * channels));
  }
  for (double v : pixels) {
    if (!(v >= 0.0 && v <= 1.0)) fail(ErrorKind::InvalidArgument, "pixel value outside [0, 1]");
  }
}

Tensor Image::to_tensor() const { return Tensor({channels, height, width}, pixels); }

Image Image::from_tensor(const Tensor& t) {
  if (t.shape.size() != 3) fail(ErrorKind::ShapeMismatch, "image tensor must be [C, H, W]");
  Image out;
  out.channels = t.shape[0];
  out.height = t.shape[1];
  out.width = t.shape[2];
  out.pixels = t.values;
  return out;
}

Image crop(const Image& image, std::size_t x0, std::size_t y0, std::size_t width,
           std::size_t height) {
  require(width > 0 && height > 0, "crop size must be positive");
  require(x0 + width <= image.width && y0 + height <= image.height, "crop exceeds image bounds");
  Image out(width, height, image.channels);
  for (std::size_t ch = 0; ch < image.channels; ++ch) {
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) out.at(x, y, ch) = image.at(x0 + x, y0 + y, ch);
    }
  }
  return out;
}

Image center_crop(const Image& image, std::size_t width, std::size_t height) {
  require(width <= image.width && height <= image.height, "center crop larger than image");
  return crop(image, (image.width - width) / 2, (image.height - height) / 2, width, height);
}

Image embed_centered(const Image& inner, std::size_t width, std::size_t height) {
  require(inner.width <= width && inner.height <= height, "embedding target smaller than image");
  Image out(width, height, inner.channels);
  const std::size_t x0 = (width - inner.width) / 2;
  const std::size_t y0 = (height - inner.height) / 2;
  for (std::size_t ch = 0; ch < inner.channels; ++ch) {
    for (std::size_t y = 0; y < inner.height; ++y) {
      for (std::size_t x = 0; x < inner.width; ++x) out.at(x0 + x, y0 + y, ch) = inner.at(x, y, ch);
    }
  }
  return out;
}

void quantize_8bit(Image& image) {
  for (auto& v : image.pixels) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
}

void write_pgm(const Image& image, const std::filesystem::path& path) {
  image.validate();
  require(image.channels == 1, "P5 output needs a single-channel image");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  std::string data(image.pixels.size(), '\0');
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    data[i] = static_cast<char>(static_cast<unsigned char>(std::lround(image.pixels[i] * 255.0)));
  }
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) fail(ErrorKind::Io, "failed writing " + path.string());
}

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(const std::string& buf, std::size_t& pos, const std::string& file) {
  while (pos < buf.size()) {
    if (buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(buf[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos])) && buf[pos] != '#') ++pos;
  if (start == pos) fail(ErrorKind::Format, file + ": truncated P5 header");
  return buf.substr(start, pos - start);
}

std::size_t parse_header_number(const std::string& tok, const std::string& file) {
  std::size_t value = 0;
  for (char ch : tok) {
    if (ch < '0' || ch > '9') fail(ErrorKind::Format, file + ": bad header value '" + tok + "'");
    value = value * 10 + static_cast<std::size_t>(ch - '0');
    if (value > (1u << 24)) fail(ErrorKind::Format, file + ": header value too large");
  }
  return value;
}

}  // namespace

Image read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::MissingFile, "cannot open " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string file = path.string();
  std::size_t pos = 0;
  if (next_token(buf, pos, file) != "P5") fail(ErrorKind::Format, file + ": not a P5 graymap");
  const std::size_t w = parse_header_number(next_token(buf, pos, file), file);
  const std::size_t h = parse_header_number(next_token(buf, pos, file), file);
  const std::size_t maxval = parse_header_number(next_token(buf, pos, file), file);
  if (w == 0 || h == 0) fail(ErrorKind::Format, file + ": zero image dimension");
  if (maxval == 0 || maxval > 255) fail(ErrorKind::Format, file + ": unsupported maxval");
  // Exactly one whitespace byte separates the header from the raster.
  if (pos >= buf.size()) fail(ErrorKind::Truncated, file + ": missing raster");
  ++pos;
  if (buf.size() - pos < w * h) fail(ErrorKind::Truncated, file + ": raster shorter than header says");
  Image image(w, h, 1);
  for (std::size_t i = 0; i < w * h; ++i) {
    const auto v = static_cast<unsigned char>(buf[pos + i]);
    image.pixels[i] = std::min(1.0, static_cast<double>(v) / static_cast<double>(maxval));
  }
  return image;
}

}  // namespace coinmark
