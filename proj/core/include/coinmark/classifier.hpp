#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "coinmark/image.hpp"
#include "coinmark/network.hpp"

namespace coinmark {

struct TrainConfig {
  std::size_t epochs = 30;
  double learning_rate = 0.2;
  /// Multiplier applied every `decay_every` epochs (step decay).
  double lr_decay = 0.5;
  std::size_t decay_every = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  std::size_t storage_size = 40;
  std::size_t crop_size = 32;

  void validate() const;
};

struct EpochStats {
  double loss = 0.0;
  double train_accuracy = 0.0;
  /// Negative when no validation set was supplied.
  double val_accuracy = -1.0;
};

/// A labeled image set. All images share one geometry.
struct LabeledImages {
  std::vector<Image> images;
  std::vector<std::size_t> labels;

  std::size_t size() const { return images.size(); }
};

/// The recognition model: a layer chain plus its label vocabulary and the
/// input geometry it expects. Inputs at storage size are center-cropped.
class Classifier {
 public:
  Classifier() = default;
  Classifier(Network net, std::vector<std::string> labels, std::size_t storage_size = 0);

  const Network& network() const { return net_; }
  Network& network() { return net_; }
  const std::vector<std::string>& labels() const { return labels_; }
  std::size_t class_count() const { return labels_.size(); }
  std::size_t input_width() const { return net_.input_shape()[2]; }
  std::size_t input_height() const { return net_.input_shape()[1]; }
  std::size_t input_channels() const { return net_.input_shape()[0]; }
  /// Side of the square storage images, 0 if only crop-size input is allowed.
  std::size_t storage_size() const { return storage_size_; }

  /// Returns the network input for `image`, center-cropping storage-size input.
  Image prepare(const Image& image) const;

  std::vector<double> scores(const Image& image) const;
  std::vector<double> predict_proba(const Image& image) const;
  std::size_t predict(const Image& image) const;

  /// d loss_c / d image, in the geometry of `image` (zero outside the crop).
  Image loss_gradient(const Image& image, std::size_t c) const;
  /// d S_c / d image, in the geometry of `image`.
  Image score_gradient(const Image& image, std::size_t c) const;

  struct Evaluation {
    std::vector<double> probabilities;
    double loss = 0.0;
    Image loss_gradient;
  };
  /// One forward and one backward pass: probabilities, loss_c and d loss_c / d image.
  Evaluation evaluate(const Image& image, std::size_t c) const;

  /// Metadata captured at training time, persisted with checkpoints.
  TrainConfig train_config;
  std::vector<EpochStats> history;

 private:
  Network net_;
  std::vector<std::string> labels_;
  std::size_t storage_size_ = 0;
};

/// conv-relu-pool-conv-relu-pool-dense-relu-dense, seeded init.
Classifier build_model(std::vector<std::string> labels, const Shape& input_shape,
                       std::uint64_t seed, std::size_t storage_size = 0);

/// Layer list used by build_model; exposed for tests and benchmarks.
std::vector<LayerSpec> default_architecture(std::size_t num_classes, const Shape& input_shape);

/// Called after every epoch with (epoch index, stats).
using EpochCallback = std::function<void(std::size_t, const EpochStats&)>;

/// Mini-batch SGD on the softmax loss with per-epoch random crops. The
/// validation set is scored on center crops. Returns the per-epoch history,
/// also stored in model.history.
std::vector<EpochStats> train(Classifier& model, const LabeledImages& train_set,
                              const LabeledImages& val_set, const TrainConfig& config,
                              const EpochCallback& on_epoch = {});

/// Fraction of images whose prediction equals the label.
double accuracy(const Classifier& model, const LabeledImages& set);

void save_checkpoint(const Classifier& model, const std::filesystem::path& path);
Classifier load_checkpoint(const std::filesystem::path& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace coinmark
