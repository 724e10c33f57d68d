#include "coinmark/regions.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "coinmark/error.hpp"

namespace coinmark {

RegionSet::RegionSet(std::size_t pixel_count, std::vector<std::vector<std::size_t>> regions,
                     RegionGeometry geometry)
    : regions_(std::move(regions)), coverage_(pixel_count, 0), geometry_(geometry) {
  require(pixel_count > 0, "region set over an empty image");
  require(!regions_.empty(), "region set needs at least one region");
  for (std::size_t k = 0; k < regions_.size(); ++k) {
    auto& r = regions_[k];
    require(!r.empty(), "region " + std::to_string(k) + " is empty");
    std::sort(r.begin(), r.end());
    require(std::adjacent_find(r.begin(), r.end()) == r.end(),
            "region " + std::to_string(k) + " lists a pixel twice");
    require(r.back() < pixel_count, "region " + std::to_string(k) + " indexes past the image");
    for (auto i : r) ++coverage_[i];
  }
  normalization_.resize(pixel_count);
  for (std::size_t i = 0; i < pixel_count; ++i) {
    require(coverage_[i] > 0, "pixel " + std::to_string(i) + " is not covered by any region");
    normalization_[i] = 1.0 / static_cast<double>(coverage_[i]);
  }
}

std::vector<std::size_t> window_starts(std::size_t extent, std::size_t window, std::size_t stride) {
  require(window >= 1 && window <= extent, "window must fit inside the image");
  require(stride >= 1 && stride <= window, "stride must be in [1, window] to avoid coverage holes");
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + window <= extent; s += stride) starts.push_back(s);
  if (starts.back() + window < extent) starts.push_back(extent - window);
  return starts;
}

RegionSet grid_regions(std::size_t width, std::size_t height, std::size_t channels,
                       std::size_t window, std::size_t stride) {
  require(width > 0 && height > 0 && channels > 0, "image dimensions must be positive");
  require(window >= 1 && window <= std::min(width, height),
          "window " + std::to_string(window) + " does not fit a " + std::to_string(width) + "x" +
              std::to_string(height) + " image");
  require(stride >= 1 && stride <= window,
          "stride " + std::to_string(stride) + " exceeds window " + std::to_string(window) +
              " and would leave coverage holes");
  const auto xs = window_starts(width, window, stride);
  const auto ys = window_starts(height, window, stride);
  std::vector<std::vector<std::size_t>> regions;
  regions.reserve(xs.size() * ys.size());
  for (auto y0 : ys) {
    for (auto x0 : xs) {
      std::vector<std::size_t> r;
      r.reserve(window * window * channels);
      for (std::size_t ch = 0; ch < channels; ++ch) {
        for (std::size_t y = y0; y < y0 + window; ++y) {
          for (std::size_t x = x0; x < x0 + window; ++x) r.push_back((ch * height + y) * width + x);
        }
      }
      regions.push_back(std::move(r));
    }
  }
  return RegionSet(width * height * channels, std::move(regions),
                   {RegionGeometry::Kind::Grid, width, height, channels, window, stride});
}

RegionSet pixel_regions(std::size_t width, std::size_t height, std::size_t channels) {
  require(width > 0 && height > 0 && channels > 0, "image dimensions must be positive");
  std::vector<std::vector<std::size_t>> regions(width * height);
  for (std::size_t p = 0; p < width * height; ++p) {
    for (std::size_t ch = 0; ch < channels; ++ch) regions[p].push_back(ch * width * height + p);
  }
  return RegionSet(width * height * channels, std::move(regions),
                   {RegionGeometry::Kind::Pixel, width, height, channels, 1, 1});
}

namespace {

void check_image(const Image& image, const RegionSet& regions) {
  if (image.size() != regions.pixel_count()) {
    fail(ErrorKind::ShapeMismatch, "image has " + std::to_string(image.size()) +
                                       " values, regions cover " +
                                       std::to_string(regions.pixel_count()));
  }
}

}  // namespace

std::vector<double> spread_mask(const RegionSet& regions, std::span<const double> x) {
  if (x.size() != regions.size()) {
    fail(ErrorKind::ShapeMismatch, "mask has " + std::to_string(x.size()) + " entries, expected " +
                                       std::to_string(regions.size()));
  }
  std::vector<double> acc(regions.pixel_count(), 0.0);
  for (std::size_t k = 0; k < regions.size(); ++k) {
    for (auto i : regions.region(k)) acc[i] += x[k];
  }
  const auto& c = regions.normalization();
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] *= c[i];
  return acc;
}

Image apply_mask(const Image& image, const RegionSet& regions, std::span<const double> x) {
  check_image(image, regions);
  const auto weight = spread_mask(regions, x);
  Image out = image;
  for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] = image.pixels[i] * weight[i];
  return out;
}

std::vector<double> mask_gradient(const Image& image, const RegionSet& regions, const Image& grad) {
  check_image(image, regions);
  if (grad.size() != image.size()) {
    fail(ErrorKind::ShapeMismatch, "gradient has " + std::to_string(grad.size()) +
                                       " values, image has " + std::to_string(image.size()));
  }
  const auto& c = regions.normalization();
  std::vector<double> weighted(image.size());
  for (std::size_t i = 0; i < weighted.size(); ++i) weighted[i] = image.pixels[i] * c[i] * grad.pixels[i];
  std::vector<double> out(regions.size(), 0.0);
  for (std::size_t k = 0; k < regions.size(); ++k) {
    double acc = 0.0;
    for (auto i : regions.region(k)) acc += weighted[i];
    out[k] = acc;
  }
  return out;
}

std::string serialize_regions(const RegionSet& regions) {
  const auto& g = regions.geometry();
  nlohmann::json j;
  switch (g.kind) {
    case RegionGeometry::Kind::Grid:
      j = {{"kind", "grid"}, {"width", g.width}, {"height", g.height}, {"channels", g.channels},
           {"window", g.window}, {"stride", g.stride}, {"regions", regions.size()}};
      break;
    case RegionGeometry::Kind::Pixel:
      j = {{"kind", "pixel"}, {"width", g.width}, {"height", g.height}, {"channels", g.channels},
           {"regions", regions.size()}};
      break;
    case RegionGeometry::Kind::Explicit:
      j = {{"kind", "explicit"}, {"pixel_count", regions.pixel_count()}, {"index_lists", regions.regions()}};
      break;
  }
  return j.dump(2) + "\n";
}

RegionSet parse_regions(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "grid") {
      auto set = grid_regions(j.at("width").get<std::size_t>(), j.at("height").get<std::size_t>(),
                              j.at("channels").get<std::size_t>(), j.at("window").get<std::size_t>(),
                              j.at("stride").get<std::size_t>());
      if (j.contains("regions") && j.at("regions").get<std::size_t>() != set.size()) {
        fail(ErrorKind::Format, "region count does not match the grid geometry");
      }
      return set;
    }
    if (kind == "pixel") {
      return pixel_regions(j.at("width").get<std::size_t>(), j.at("height").get<std::size_t>(),
                           j.at("channels").get<std::size_t>());
    }
    if (kind == "explicit") {
      return RegionSet(j.at("pixel_count").get<std::size_t>(),
                       j.at("index_lists").get<std::vector<std::vector<std::size_t>>>());
    }
    fail(ErrorKind::Format, "unknown region kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("malformed region file: ") + e.what());
  }
}

void write_regions(const RegionSet& regions, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out << serialize_regions(regions);
}

RegionSet read_regions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::MissingFile, "cannot open " + path.string());
  return parse_regions(std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()));
}

}  // namespace coinmark
