#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <numeric>

#include "coinmark/classifier.hpp"
#include "coinmark/error.hpp"
#include "coinmark/synth.hpp"
#include "support.hpp"

using namespace coinmark;
using namespace coinmark::testing;

namespace {

LabeledImages small_reverse_set(std::size_t parents, std::size_t per_leaf, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.num_parents = parents;
  spec.images_per_leaf = per_leaf;
  spec.seed = seed;
  const Dataset ds = generate(spec);
  LabeledImages set;
  for (const auto& s : ds.samples) {
    set.images.push_back(s.reverse);
    set.labels.push_back(s.leaf);
  }
  return set;
}

ErrorKind load_error(const std::filesystem::path& p) {
  try {
    load_checkpoint(p);
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::InvalidArgument;
}

std::vector<char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST(BuildModel, Contract) {
  const Classifier m = build_model(class_names(8), {1, 32, 32}, 1);
  EXPECT_EQ(m.network().output_shape(), Shape{8});
  EXPECT_EQ(m.network().layer_count(), 9u);
  EXPECT_THROW(build_model(class_names(1), {1, 32, 32}, 1), Error);
  EXPECT_THROW(build_model(class_names(4), {1, 8, 8}, 1), Error);
  EXPECT_THROW(build_model({"a", "a"}, {1, 32, 32}, 1), Error);
}

TEST(BuildModel, SameSeedSameWeights) {
  const Classifier a = build_model(class_names(4), {1, 32, 32}, 42);
  const Classifier b = build_model(class_names(4), {1, 32, 32}, 42);
  const Classifier c = build_model(class_names(4), {1, 32, 32}, 43);
  const auto pa = a.network().parameters(), pb = b.network().parameters(), pc = c.network().parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->values, pb[i]->values);
  EXPECT_NE(pa[0]->values, pc[0]->values);
}

TEST(PredictProba, FreshModelIsNearUniform) {
  for (std::size_t classes : {2u, 8u, 16u}) {
    const Classifier m = build_model(class_names(classes), {1, 32, 32}, 7, 40);
    for (std::uint64_t s = 0; s < 5; ++s) {
      const auto p = m.predict_proba(random_image(40, 40, s));
      EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
      for (double v : p) EXPECT_NEAR(v, 1.0 / static_cast<double>(classes), 0.02);
    }
  }
}

TEST(PredictProba, CenterCropsStorageInput) {
  const Classifier m = build_model(class_names(3), {1, 32, 32}, 3, 40);
  const Image big = random_image(40, 40, 1);
  EXPECT_EQ(m.predict_proba(big), m.predict_proba(center_crop(big, 32, 32)));
  EXPECT_THROW(m.predict_proba(random_image(36, 36, 1)), Error);
}

TEST(Gradients, StorageFrameIsZeroOutsideCrop) {
  const Classifier m = build_model(class_names(3), {1, 32, 32}, 3, 40);
  const Image big = random_image(40, 40, 5);
  const Image g = m.loss_gradient(big, 1);
  ASSERT_EQ(g.width, 40u);
  for (std::size_t y = 0; y < 40; ++y)
    for (std::size_t x = 0; x < 40; ++x)
      if (x < 4 || x >= 36 || y < 4 || y >= 36) EXPECT_EQ(g.at(x, y), 0.0);
  const auto ev = m.evaluate(big, 1);
  EXPECT_EQ(ev.loss_gradient, g);
  EXPECT_EQ(ev.probabilities, m.predict_proba(big));
  EXPECT_NEAR(ev.loss, -std::log(ev.probabilities[1]), 1e-12);
}

TEST(Train, ZeroEpochsIsNoOp) {
  Classifier m = build_model(class_names(4), {1, 32, 32}, 3, 40);
  const auto before = m.network().parameters()[0]->values;
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto hist = train(m, small_reverse_set(2, 3, 1), {}, cfg);
  EXPECT_TRUE(hist.empty());
  EXPECT_EQ(before, m.network().parameters()[0]->values);
}

TEST(Train, ValidatesInput) {
  Classifier m = build_model(class_names(4), {1, 32, 32}, 3, 40);
  TrainConfig cfg;
  cfg.epochs = 1;
  auto set = small_reverse_set(2, 2, 1);
  set.labels[0] = 9;
  try {
    train(m, set, {}, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnknownLabel);
  }
  cfg.crop_size = 40;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Train, NanLossNamesEpochAndBatch) {
  Classifier m = build_model(class_names(4), {1, 32, 32}, 3, 40);
  m.network().parameters().back()->values[0] = NAN;
  TrainConfig cfg;
  cfg.epochs = 1;
  try {
    train(m, small_reverse_set(2, 2, 1), {}, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NumericalFailure);
    EXPECT_NE(std::string(e.what()).find("epoch 0, batch 0"), std::string::npos) << e.what();
  }
}

TEST(Train, DeterministicAndLearns) {
  const auto set = small_reverse_set(2, 40, 3);
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.seed = 5;
  Classifier a = build_model(class_names(4), {1, 32, 32}, 5, 40);
  Classifier b = build_model(class_names(4), {1, 32, 32}, 5, 40);
  const auto ha = train(a, set, set, cfg);
  const auto hb = train(b, set, set, cfg);
  ASSERT_EQ(ha.size(), 6u);
  for (std::size_t e = 0; e < ha.size(); ++e) {
    EXPECT_EQ(ha[e].loss, hb[e].loss);
    EXPECT_EQ(ha[e].val_accuracy, hb[e].val_accuracy);
  }
  EXPECT_LT(ha.back().loss, ha.front().loss);
  // A correctly classified training image is predicted as its label.
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto p = a.predict_proba(set.images[i]);
    if (p[set.labels[i]] > 0.5) {
      EXPECT_EQ(a.predict(set.images[i]), set.labels[i]);
    }
  }
}

TEST(Checkpoint, RoundTripIsIdentity) {
  TempDir dir("ckpt");
  Classifier m = build_model(class_names(5, "L"), {1, 32, 32}, 9, 40);
  m.history.push_back({1.5, 0.25, 0.3});
  m.train_config.epochs = 17;
  save_checkpoint(m, dir.path / "m.ckpt");
  const Classifier r = load_checkpoint(dir.path / "m.ckpt");
  EXPECT_EQ(r.labels(), m.labels());
  EXPECT_EQ(r.storage_size(), 40u);
  EXPECT_EQ(r.train_config.epochs, 17u);
  ASSERT_EQ(r.history.size(), 1u);
  EXPECT_EQ(r.history[0].loss, 1.5);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Image img = random_image(40, 40, 200 + s);
    EXPECT_EQ(r.predict_proba(img), m.predict_proba(img));
  }
}

TEST(Checkpoint, DistinctErrorKinds) {
  TempDir dir("ckpt_err");
  const auto path = dir.path / "m.ckpt";
  save_checkpoint(build_model(class_names(3), {1, 32, 32}, 1, 40), path);
  const auto bytes = slurp(path);

  auto corrupt = bytes;
  corrupt[bytes.size() - 100] ^= 0x5a;  // inside the last weight block
  spit(dir.path / "corrupt.ckpt", corrupt);
  EXPECT_EQ(load_error(dir.path / "corrupt.ckpt"), ErrorKind::Checksum);

  auto version = bytes;
  const std::uint32_t v = 999;
  std::memcpy(version.data() + 8, &v, sizeof(v));
  spit(dir.path / "version.ckpt", version);
  EXPECT_EQ(load_error(dir.path / "version.ckpt"), ErrorKind::Version);

  spit(dir.path / "short.ckpt", std::vector<char>(bytes.begin(), bytes.begin() + bytes.size() / 2));
  EXPECT_EQ(load_error(dir.path / "short.ckpt"), ErrorKind::Truncated);

  auto magic = bytes;
  magic[0] = 'X';
  spit(dir.path / "magic.ckpt", magic);
  EXPECT_EQ(load_error(dir.path / "magic.ckpt"), ErrorKind::Format);

  EXPECT_EQ(load_error(dir.path / "absent.ckpt"), ErrorKind::MissingFile);
}

TEST(Pgm, RoundTripAndErrors) {
  TempDir dir("pgm");
  Image img = random_image(7, 5, 3);
  quantize_8bit(img);
  write_pgm(img, dir.path / "a.pgm");
  EXPECT_EQ(read_pgm(dir.path / "a.pgm"), img);
  {
    std::ofstream out(dir.path / "comment.pgm", std::ios::binary);
    out << "P5\n# a comment\n2 1\n255\n";
    out.put(static_cast<char>(0)).put(static_cast<char>(255));
  }
  const Image c = read_pgm(dir.path / "comment.pgm");
  EXPECT_EQ(c.pixels, (std::vector<double>{0.0, 1.0}));
  {
    std::ofstream out(dir.path / "short.pgm", std::ios::binary);
    out << "P5\n4 4\n255\n" << "abc";
  }
  try {
    read_pgm(dir.path / "short.pgm");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Truncated);
  }
  try {
    read_pgm(dir.path / "none.pgm");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingFile);
  }
}
