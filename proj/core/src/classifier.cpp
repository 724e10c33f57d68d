#include "coinmark/classifier.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>

#include <json.hpp>

#include "coinmark/error.hpp"
#include "coinmark/random.hpp"

namespace coinmark {

namespace {

// Pixels are shifted to be centered on zero before the first layer. The shift
// is constant, so gradients with respect to the image are unchanged.
constexpr double kInputOffset = 0.5;
constexpr double kOutputInitScale = 0.1;

Tensor network_input(const Image& image) {
  Tensor t = image.to_tensor();
  for (auto& v : t.values) v -= kInputOffset;
  return t;
}

}  // namespace

void TrainConfig::validate() const {
  require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning rate must be positive");
  require(lr_decay > 0.0 && lr_decay <= 1.0, "learning-rate decay must be in (0, 1]");
  require(decay_every >= 1, "decay interval must be at least one epoch");
  require(batch_size >= 1, "batch size must be at least 1");
  require(crop_size >= 1 && crop_size < storage_size, "crop size must be smaller than storage size");
}

Classifier::Classifier(Network net, std::vector<std::string> labels, std::size_t storage_size)
    : net_(std::move(net)), labels_(std::move(labels)), storage_size_(storage_size) {
  require(net_.input_shape().size() == 3, "classifier input must be [C, H, W]");
  require(net_.output_shape() == Shape{labels_.size()},
          "network output width does not match the label vocabulary");
  std::set<std::string> unique(labels_.begin(), labels_.end());
  require(unique.size() == labels_.size(), "class vocabulary contains duplicates");
  if (storage_size_ != 0) {
    require(storage_size_ >= input_width() && storage_size_ >= input_height(),
            "storage size smaller than the network input");
  }
}

Image Classifier::prepare(const Image& image) const {
  if (image.width == input_width() && image.height == input_height() &&
      image.channels == input_channels()) {
    return image;
  }
  if (storage_size_ != 0 && image.width == storage_size_ && image.height == storage_size_ &&
      image.channels == input_channels()) {
    return center_crop(image, input_width(), input_height());
  }
  fail(ErrorKind::ShapeMismatch,
       "image is " + std::to_string(image.width) + "x" + std::to_string(image.height) + "x" +
           std::to_string(image.channels) + ", model expects " + std::to_string(input_width()) +
           "x" + std::to_string(input_height()) +
           (storage_size_ ? " or storage size " + std::to_string(storage_size_) : std::string()));
}

std::vector<double> Classifier::scores(const Image& image) const {
  return net_.forward(network_input(prepare(image))).values;
}

std::vector<double> Classifier::predict_proba(const Image& image) const {
  return softmax(scores(image));
}

std::size_t Classifier::predict(const Image& image) const { return argmax(scores(image)); }

Classifier::Evaluation Classifier::evaluate(const Image& image, std::size_t c) const {
  require(c < class_count(), "class index out of range");
  Tape tape;
  const Tensor s = net_.forward(network_input(prepare(image)), tape);
  auto lg = softmax_loss_grad(s.values, c);
  Evaluation out;
  out.probabilities = softmax(s.values);
  out.loss = lg.loss;
  Image g = Image::from_tensor(net_.input_backward(tape, lg.grad));
  out.loss_gradient = (g.width == image.width && g.height == image.height)
                          ? std::move(g)
                          : embed_centered(g, image.width, image.height);
  return out;
}

Image Classifier::loss_gradient(const Image& image, std::size_t c) const {
  return evaluate(image, c).loss_gradient;
}

Image Classifier::score_gradient(const Image& image, std::size_t c) const {
  require(c < class_count(), "class index out of range");
  Tape tape;
  net_.forward(network_input(prepare(image)), tape);
  std::vector<double> seed(class_count(), 0.0);
  seed[c] = 1.0;
  Image g = Image::from_tensor(net_.input_backward(tape, seed));
  if (g.width == image.width && g.height == image.height) return g;
  return embed_centered(g, image.width, image.height);
}

std::vector<LayerSpec> default_architecture(std::size_t num_classes, const Shape& input_shape) {
  require(num_classes >= 2, "a classifier needs at least two classes");
  require(input_shape.size() == 3, "input shape must be [C, H, W]");
  const std::size_t channels = input_shape[0];
  // Two 3x3 valid convolutions each followed by 2x2 pooling need at least 10 pixels.
  if (input_shape[1] < 10 || input_shape[2] < 10) {
    fail(ErrorKind::ShapeMismatch,
         "input " + shape_string(input_shape) + " too small for two pooling stages (min 10x10)");
  }
  const std::size_t h = ((input_shape[1] - 2) / 2 - 2) / 2;
  const std::size_t w = ((input_shape[2] - 2) / 2 - 2) / 2;
  return {
      Conv2dSpec{channels, 8, 3, 1}, ReluSpec{}, MaxPoolSpec{2, 2},
      Conv2dSpec{8, 16, 3, 1},       ReluSpec{}, MaxPoolSpec{2, 2},
      DenseSpec{16 * h * w, 32},     ReluSpec{}, DenseSpec{32, num_classes},
  };
}

Classifier build_model(std::vector<std::string> labels, const Shape& input_shape,
                       std::uint64_t seed, std::size_t storage_size) {
  Network net(input_shape, default_architecture(labels.size(), input_shape));
  net.init_weights(seed);
  // A narrower range on the output layer keeps an untrained model's class
  // probabilities within a few percent of uniform.
  for (auto& w : net.layer(net.layer_count() - 1).weights.values) w *= kOutputInitScale;
  return Classifier(std::move(net), std::move(labels), storage_size);
}

std::vector<EpochStats> train(Classifier& model, const LabeledImages& train_set,
                              const LabeledImages& val_set, const TrainConfig& config,
                              const EpochCallback& on_epoch) {
  config.validate();
  require(train_set.size() > 0, "training set is empty");
  require(train_set.labels.size() == train_set.images.size(), "label count does not match images");
  require(model.input_width() == config.crop_size && model.input_height() == config.crop_size,
          "model input does not match the configured crop size");
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    const Image& im = train_set.images[i];
    if (train_set.labels[i] >= model.class_count()) {
      fail(ErrorKind::UnknownLabel, "training label " + std::to_string(train_set.labels[i]) +
                                        " outside vocabulary of " +
                                        std::to_string(model.class_count()));
    }
    if (im.width != config.storage_size || im.height != config.storage_size ||
        im.channels != model.input_channels()) {
      fail(ErrorKind::ShapeMismatch, "training image " + std::to_string(i) + " is not at storage size");
    }
  }

  model.train_config = config;
  model.history.clear();
  if (config.epochs == 0) return {};

  Network& net = model.network();
  auto params = net.parameters();
  std::vector<std::vector<double>> accum(params.size());
  for (std::size_t p = 0; p < params.size(); ++p) accum[p].assign(params[p]->size(), 0.0);

  Rng rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  const int slack = static_cast<int>(config.storage_size - config.crop_size);
  Tape tape;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.learning_rate *
                      std::pow(config.lr_decay, static_cast<double>(epoch / config.decay_every));
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0, batch = 0; start < order.size(); start += config.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      for (auto& a : accum) std::fill(a.begin(), a.end(), 0.0);
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = order[b];
        const auto ox = static_cast<std::size_t>(rng.between(0, slack));
        const auto oy = static_cast<std::size_t>(rng.between(0, slack));
        const Image patch = crop(train_set.images[idx], ox, oy, config.crop_size, config.crop_size);
        const Tensor s = net.forward(network_input(patch), tape);
        const std::size_t label = train_set.labels[idx];
        const bool finite = std::all_of(s.values.begin(), s.values.end(), [](double v) { return std::isfinite(v); });
        auto lg = finite ? softmax_loss_grad(s.values, label) : LossWithGrad{NAN, {}};
        if (!std::isfinite(lg.loss)) {
          fail(ErrorKind::NumericalFailure, "non-finite loss at epoch " + std::to_string(epoch) +
                                                ", batch " + std::to_string(batch));
        }
        loss_sum += lg.loss;
        if (argmax(s.values) == label) ++correct;
        net.backward(tape, lg.grad);
        for (std::size_t p = 0; p < params.size(); ++p) {
          const auto& g = params[p]->grad;
          auto& a = accum[p];
          for (std::size_t i = 0; i < a.size(); ++i) a[i] += g[i];
        }
      }
      const double scale = lr / static_cast<double>(end - start);
      for (std::size_t p = 0; p < params.size(); ++p) {
        auto& w = params[p]->values;
        const auto& a = accum[p];
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= scale * a[i];
      }
    }

    EpochStats stats;
    stats.loss = loss_sum / static_cast<double>(order.size());
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    if (!std::isfinite(stats.loss)) {
      fail(ErrorKind::NumericalFailure, "non-finite mean loss at epoch " + std::to_string(epoch));
    }
    if (val_set.size() > 0) stats.val_accuracy = accuracy(model, val_set);
    model.history.push_back(stats);
    if (on_epoch) on_epoch(epoch, stats);
  }
  for (auto* p : params) p->grad.clear();
  return model.history;
}

double accuracy(const Classifier& model, const LabeledImages& set) {
  require(set.size() > 0, "accuracy of an empty set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (model.predict(set.images[i]) == set.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(set.size());
}

// ---------------------------------------------------------------------------
// Checkpoint file layout (all integers little-endian):
//   8 bytes   magic "COINMARK"
//   u32       format version
//   u64       payload length P
//   P bytes   payload:
//               u64 metadata length M, M bytes of JSON metadata,
//               u64 block count B, then B blocks of (u64 n, n x f64)
//   u64       FNV-1a 64 checksum over every preceding byte
// Blocks are the parameters in layer order: weights then bias per layer.

namespace {

constexpr char kMagic[8] = {'C', 'O', 'I', 'N', 'M', 'A', 'R', 'K'};
constexpr std::size_t kHeaderSize = 8 + 4 + 8;

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
  }
}

template <typename T>
T get_le(std::string_view in, std::size_t& pos) {
  if (in.size() - pos < sizeof(T)) fail(ErrorKind::Format, "checkpoint payload ends early");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  pos += sizeof(T);
  return value;
}

nlohmann::json spec_to_json(const LayerSpec& spec) {
  nlohmann::json j;
  j["kind"] = layer_name(spec);
  if (auto* c = std::get_if<Conv2dSpec>(&spec)) {
    j["in_channels"] = c->in_channels;
    j["out_channels"] = c->out_channels;
    j["kernel"] = c->kernel;
    j["stride"] = c->stride;
  } else if (auto* m = std::get_if<MaxPoolSpec>(&spec)) {
    j["size"] = m->size;
    j["stride"] = m->stride;
  } else if (auto* d = std::get_if<DenseSpec>(&spec)) {
    j["in_units"] = d->in_units;
    j["out_units"] = d->out_units;
  }
  return j;
}

LayerSpec spec_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "conv2d") {
    return Conv2dSpec{j.at("in_channels").get<std::size_t>(), j.at("out_channels").get<std::size_t>(),
                      j.at("kernel").get<std::size_t>(), j.at("stride").get<std::size_t>()};
  }
  if (kind == "maxpool") return MaxPoolSpec{j.at("size").get<std::size_t>(), j.at("stride").get<std::size_t>()};
  if (kind == "relu") return ReluSpec{};
  if (kind == "dense") return DenseSpec{j.at("in_units").get<std::size_t>(), j.at("out_units").get<std::size_t>()};
  if (kind == "softmax") return SoftmaxSpec{};
  fail(ErrorKind::Format, "unknown layer kind '" + kind + "' in checkpoint");
}

}  // namespace

void save_checkpoint(const Classifier& model, const std::filesystem::path& path) {
  nlohmann::json meta;
  meta["labels"] = model.labels();
  meta["input_shape"] = model.network().input_shape();
  meta["storage_size"] = model.storage_size();
  auto& layers = meta["layers"] = nlohmann::json::array();
  for (const auto& spec : model.network().specs()) layers.push_back(spec_to_json(spec));
  const TrainConfig& tc = model.train_config;
  meta["train_config"] = {{"epochs", tc.epochs},           {"learning_rate", tc.learning_rate},
                          {"lr_decay", tc.lr_decay},       {"decay_every", tc.decay_every},
                          {"batch_size", tc.batch_size},   {"seed", tc.seed},
                          {"storage_size", tc.storage_size}, {"crop_size", tc.crop_size}};
  auto& hist = meta["history"] = nlohmann::json::array();
  for (const auto& e : model.history) {
    hist.push_back({{"loss", e.loss}, {"train_accuracy", e.train_accuracy}, {"val_accuracy", e.val_accuracy}});
  }
  const std::string meta_text = meta.dump();

  std::string payload;
  put_le<std::uint64_t>(payload, meta_text.size());
  payload += meta_text;
  const auto params = model.network().parameters();
  put_le<std::uint64_t>(payload, params.size());
  for (const Tensor* p : params) {
    put_le<std::uint64_t>(payload, p->size());
    for (double v : p->values) put_le<std::uint64_t>(payload, std::bit_cast<std::uint64_t>(v));
  }

  std::string file(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(file, kCheckpointVersion);
  put_le<std::uint64_t>(file, payload.size());
  file += payload;
  put_le<std::uint64_t>(file, fnv1a(file));

  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out.write(file.data(), static_cast<std::streamsize>(file.size()));
  if (!out) fail(ErrorKind::Io, "failed writing " + path.string());
}

Classifier load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::MissingFile, "cannot open checkpoint " + path.string());
  const std::string file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string name = path.string();

  if (file.size() < kHeaderSize) fail(ErrorKind::Truncated, name + ": shorter than the header");
  if (!std::equal(std::begin(kMagic), std::end(kMagic), file.begin())) {
    fail(ErrorKind::Format, name + ": not a coinmark checkpoint");
  }
  std::size_t pos = 8;
  const auto version = get_le<std::uint32_t>(file, pos);
  if (version != kCheckpointVersion) {
    fail(ErrorKind::Version, name + ": format version " + std::to_string(version) +
                                 ", this build reads version " + std::to_string(kCheckpointVersion));
  }
  const auto payload_size = get_le<std::uint64_t>(file, pos);
  if (file.size() - kHeaderSize < payload_size || file.size() - kHeaderSize - payload_size < 8) {
    fail(ErrorKind::Truncated, name + ": file ends before the declared payload and checksum");
  }
  const std::size_t body_end = kHeaderSize + payload_size;
  std::size_t cpos = body_end;
  const auto stored = get_le<std::uint64_t>(file, cpos);
  if (fnv1a(std::string_view(file).substr(0, body_end)) != stored) {
    fail(ErrorKind::Checksum, name + ": checksum mismatch");
  }

  const std::string_view payload = std::string_view(file).substr(kHeaderSize, payload_size);
  pos = 0;
  const auto meta_size = get_le<std::uint64_t>(payload, pos);
  if (payload.size() - pos < meta_size) fail(ErrorKind::Format, name + ": metadata overruns payload");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(payload.substr(pos, meta_size));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, name + ": bad metadata: " + e.what());
  }
  pos += meta_size;

  Classifier model;
  try {
    std::vector<LayerSpec> specs;
    for (const auto& j : meta.at("layers")) specs.push_back(spec_from_json(j));
    Network net(meta.at("input_shape").get<Shape>(), std::move(specs));
    const auto block_count = get_le<std::uint64_t>(payload, pos);
    auto params = net.parameters();
    if (block_count != params.size()) {
      fail(ErrorKind::Format, name + ": " + std::to_string(block_count) + " weight blocks, layers need " +
                                  std::to_string(params.size()));
    }
    for (Tensor* p : params) {
      const auto n = get_le<std::uint64_t>(payload, pos);
      if (n != p->size()) fail(ErrorKind::Format, name + ": weight block length does not match its layer");
      for (auto& v : p->values) v = std::bit_cast<double>(get_le<std::uint64_t>(payload, pos));
    }
    if (pos != payload.size()) fail(ErrorKind::Format, name + ": trailing bytes in payload");

    model = Classifier(std::move(net), meta.at("labels").get<std::vector<std::string>>(),
                       meta.at("storage_size").get<std::size_t>());
    const auto& tc = meta.at("train_config");
    model.train_config.epochs = tc.at("epochs").get<std::size_t>();
    model.train_config.learning_rate = tc.at("learning_rate").get<double>();
    model.train_config.lr_decay = tc.at("lr_decay").get<double>();
    model.train_config.decay_every = tc.at("decay_every").get<std::size_t>();
    model.train_config.batch_size = tc.at("batch_size").get<std::size_t>();
    model.train_config.seed = tc.at("seed").get<std::uint64_t>();
    model.train_config.storage_size = tc.at("storage_size").get<std::size_t>();
    model.train_config.crop_size = tc.at("crop_size").get<std::size_t>();
    for (const auto& e : meta.at("history")) {
      model.history.push_back({e.at("loss").get<double>(), e.at("train_accuracy").get<double>(),
                               e.at("val_accuracy").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, name + ": bad metadata: " + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Format) throw;
    fail(ErrorKind::Format, name + ": " + e.what());
  }
  return model;
}

}  // namespace coinmark
