#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "coinmark/classifier.hpp"
#include "coinmark/error.hpp"
#include "coinmark/regions.hpp"
#include "coinmark/random.hpp"

namespace coinmark::testing {

inline std::vector<std::string> class_names(std::size_t n, const std::string& prefix = "c") {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

// S = W I + b over a width x height single-channel image.
inline Classifier linear_scorer(std::size_t width, std::size_t height, const std::vector<std::vector<double>>& rows) {
  Network net({1, height, width}, {DenseSpec{width * height, rows.size()}});
  auto& layer = net.layer(0);
  for (std::size_t c = 0; c < rows.size(); ++c) {
    for (std::size_t i = 0; i < width * height; ++i) layer.weights.values[c * width * height + i] = rows[c][i];
  }
  return Classifier(std::move(net), class_names(rows.size()));
}

inline Image random_image(std::size_t w, std::size_t h, std::uint64_t seed, std::size_t channels = 1) {
  Rng rng(seed);
  Image img(w, h, channels);
  for (auto& p : img.pixels) p = rng.uniform();
  return img;
}

inline Tensor random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor t(shape);
  for (auto& v : t.values) v = rng.uniform(lo, hi);
  return t;
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
}

// Central difference of f at x along coordinate i.
template <typename F>
double central_difference(F&& f, std::vector<double>& x, std::size_t i, double h = 1e-5) {
  const double saved = x[i];
  x[i] = saved + h;
  const double up = f();
  x[i] = saved - h;
  const double down = f();
  x[i] = saved;
  return (up - down) / (2.0 * h);
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) {
    path = std::filesystem::temp_directory_path() / ("coinmark_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

// Exhaustive scan of x in {0, 0.001, ..., 1} for a single whole-image region:
// the feasible x (p > p0 - epsilon) minimizing loss + lambda * x.
inline double scan_single_region(const Classifier& model, const Image& image, std::size_t c, double epsilon,
                                 double lambda) {
  const double p0 = model.predict_proba(image)[c];
  double best_x = 1.0, best_obj = INFINITY;
  for (int i = 0; i <= 1000; ++i) {
    const double x = i / 1000.0;
    Image scaled = image;
    for (auto& v : scaled.pixels) v *= x;
    const auto p = model.predict_proba(scaled);
    if (epsilon < 1.0 && !(p[c] > p0 - epsilon)) continue;
    const double obj = -std::log(p[c]) + lambda * x;
    if (obj < best_obj) {
      best_obj = obj;
      best_x = x;
    }
  }
  return best_x;
}

}  // namespace coinmark::testing
