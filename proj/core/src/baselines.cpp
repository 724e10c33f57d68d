#include "coinmark/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "coinmark/error.hpp"

namespace coinmark {

namespace {

void check_patch(const Image& image, std::size_t patch) {
  require(patch >= 1 && patch % 2 == 1, "patch size must be odd");
  require(patch <= std::min(image.width, image.height),
          "patch " + std::to_string(patch) + " larger than the " + std::to_string(image.width) +
              "x" + std::to_string(image.height) + " image");
}

}  // namespace

Heatmap occlusion_map(const Classifier& model, const Image& image, std::size_t c,
                      std::size_t patch, std::size_t stride) {
  check_patch(image, patch);
  require(stride >= 1, "stride must be at least 1");
  require(c < model.class_count(), "class index out of range");

  const double base = model.scores(image)[c];
  Heatmap map{image.width, image.height, std::vector<double>(image.plane(), 0.0), "occlusion", patch, stride, 1};
  std::vector<std::size_t> hits(image.plane(), 0);

  // window_starts requires stride <= window; a larger stride still has to
  // visit positions every `stride` pixels, leaving gaps.
  auto starts = [&](std::size_t extent) {
    std::vector<std::size_t> s;
    for (std::size_t p = 0; p + patch <= extent; p += stride) s.push_back(p);
    if (s.back() + patch < extent && stride <= patch) s.push_back(extent - patch);
    return s;
  };
  const auto xs = starts(image.width);
  const auto ys = starts(image.height);

  Image occluded = image;
  for (auto y0 : ys) {
    for (auto x0 : xs) {
      for (std::size_t ch = 0; ch < image.channels; ++ch) {
        for (std::size_t y = y0; y < y0 + patch; ++y) {
          for (std::size_t x = x0; x < x0 + patch; ++x) occluded.at(x, y, ch) = 0.0;
        }
      }
      const double drop = base - model.scores(occluded)[c];
      ++map.model_evaluations;
      for (std::size_t y = y0; y < y0 + patch; ++y) {
        for (std::size_t x = x0; x < x0 + patch; ++x) {
          map.values[y * image.width + x] += drop;
          ++hits[y * image.width + x];
        }
      }
      for (std::size_t ch = 0; ch < image.channels; ++ch) {
        for (std::size_t y = y0; y < y0 + patch; ++y) {
          for (std::size_t x = x0; x < x0 + patch; ++x) occluded.at(x, y, ch) = image.at(x, y, ch);
        }
      }
    }
  }
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    if (hits[i]) map.values[i] /= static_cast<double>(hits[i]);
  }
  return map;
}

std::vector<double> box_filter(const std::vector<double>& values, std::size_t width,
                               std::size_t height, std::size_t patch) {
  require(values.size() == width * height, "map size does not match its dimensions");
  require(patch % 2 == 1, "moving-average window must be odd");
  const auto r = static_cast<long>(patch / 2);
  const auto W = static_cast<long>(width), H = static_cast<long>(height);
  std::vector<double> out(values.size());
  for (long y = 0; y < H; ++y) {
    for (long x = 0; x < W; ++x) {
      double acc = 0.0;
      for (long dy = -r; dy <= r; ++dy) {
        const long yy = std::clamp(y + dy, 0L, H - 1);
        for (long dx = -r; dx <= r; ++dx) {
          const long xx = std::clamp(x + dx, 0L, W - 1);
          acc += values[static_cast<std::size_t>(yy * W + xx)];
        }
      }
      out[static_cast<std::size_t>(y * W + x)] = acc / static_cast<double>(patch * patch);
    }
  }
  return out;
}

Heatmap saliency_map(const Classifier& model, const Image& image, std::size_t c, std::size_t patch) {
  check_patch(image, patch);
  const Image grad = model.score_gradient(image, c);
  std::vector<double> raw(image.plane(), 0.0);
  for (std::size_t ch = 0; ch < image.channels; ++ch) {
    for (std::size_t i = 0; i < image.plane(); ++i) {
      raw[i] = std::max(raw[i], std::abs(grad.pixels[ch * image.plane() + i]));
    }
  }
  return {image.width, image.height, box_filter(raw, image.width, image.height, patch), "saliency", patch, 0, 1};
}

std::vector<double> average_ranks(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double mean_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

Agreement rank_agreement(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size(), "maps differ in size");
  require(!a.empty(), "empty maps");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double da = ra[i] - mean, db = rb[i] - mean;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return {0.0, true};
  return {std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0), false};
}

Agreement rank_agreement(const Heatmap& a, const Heatmap& b) {
  require(a.width == b.width && a.height == b.height, "heatmaps differ in dimensions");
  return rank_agreement(a.values, b.values);
}

}  // namespace coinmark
