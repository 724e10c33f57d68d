#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "coinmark/classifier.hpp"

namespace coinmark {

/// Per-pixel importance scores over the spatial grid of a source image.
struct Heatmap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> values;
  std::string method;
  std::size_t patch = 0;
  std::size_t stride = 0;
  /// Number of model passes spent producing the map.
  std::size_t model_evaluations = 0;
};

/// Zeroes a patch x patch square at every lattice position (stride, last
/// position clamped to the border), records the class-score drop
/// S_c(original) - S_c(occluded), and averages the drops covering each pixel.
Heatmap occlusion_map(const Classifier& model, const Image& image, std::size_t c,
                      std::size_t patch, std::size_t stride);

/// |d S_c / d I| from one backward pass, max over channels, then a
/// patch x patch moving average with edge clamping.
Heatmap saliency_map(const Classifier& model, const Image& image, std::size_t c, std::size_t patch);

/// Moving average over a (2r+1) square window, replicating edge pixels.
std::vector<double> box_filter(const std::vector<double>& values, std::size_t width,
                               std::size_t height, std::size_t patch);

struct Agreement {
  double rho = 0.0;
  /// Set when either map has zero variance; rho is then 0.
  bool degenerate = false;
};

/// Spearman rank correlation with average ranks for ties.
Agreement rank_agreement(const Heatmap& a, const Heatmap& b);
Agreement rank_agreement(const std::vector<double>& a, const std::vector<double>& b);

/// Average ranks (1-based) of `values`; tied values share their mean rank.
std::vector<double> average_ranks(const std::vector<double>& values);

}  // namespace coinmark
