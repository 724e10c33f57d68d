#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "coinmark/image.hpp"

namespace coinmark {

/// How a RegionSet was produced; grid sets serialize as their geometry.
struct RegionGeometry {
  enum class Kind { Grid, Pixel, Explicit } kind = Kind::Explicit;
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::size_t window = 0;
  std::size_t stride = 0;
};

/// K maskable regions over the flat pixel indices of one image geometry,
/// together with the per-pixel coverage count and its reciprocal C.
class RegionSet {
 public:
  /// Builds from explicit index lists. Each list is sorted and must be
  /// duplicate-free and non-empty; together they must cover [0, pixel_count).
  RegionSet(std::size_t pixel_count, std::vector<std::vector<std::size_t>> regions,
            RegionGeometry geometry = {});

  std::size_t size() const { return regions_.size(); }
  std::size_t pixel_count() const { return coverage_.size(); }
  std::span<const std::size_t> region(std::size_t k) const { return regions_.at(k); }
  const std::vector<std::vector<std::size_t>>& regions() const { return regions_; }
  const std::vector<std::size_t>& coverage() const { return coverage_; }
  /// C(i) = 1 / coverage(i).
  const std::vector<double>& normalization() const { return normalization_; }
  const RegionGeometry& geometry() const { return geometry_; }

 private:
  std::vector<std::vector<std::size_t>> regions_;
  std::vector<std::size_t> coverage_;
  std::vector<double> normalization_;
  RegionGeometry geometry_;
};

/// Start offsets of windows of `window` pixels placed every `stride` along an
/// axis of length `extent`; the last window is clamped to end at the border.
std::vector<std::size_t> window_starts(std::size_t extent, std::size_t window, std::size_t stride);

/// Sliding windows; each region is a window x window square across all channels.
RegionSet grid_regions(std::size_t width, std::size_t height, std::size_t channels,
                       std::size_t window, std::size_t stride);

/// One region per spatial pixel (spanning all channels).
RegionSet pixel_regions(std::size_t width, std::size_t height, std::size_t channels);

/// f_I(x): pixel i becomes (sum over regions k containing i of x_k) * I(i) * C(i).
Image apply_mask(const Image& image, const RegionSet& regions, std::span<const double> x);

/// Transpose-Jacobian of apply_mask applied to `grad`:
/// component k = sum over i in r_k of I(i) * C(i) * grad(i).
std::vector<double> mask_gradient(const Image& image, const RegionSet& regions, const Image& grad);

/// Per-pixel weight sum_k x_k * C(i), i.e. apply_mask of an all-ones image.
std::vector<double> spread_mask(const RegionSet& regions, std::span<const double> x);

/// Structured-text form: geometry parameters for grid/pixel sets, explicit
/// index lists otherwise.
std::string serialize_regions(const RegionSet& regions);
RegionSet parse_regions(const std::string& text);
void write_regions(const RegionSet& regions, const std::filesystem::path& path);
RegionSet read_regions(const std::filesystem::path& path);

}  // namespace coinmark
