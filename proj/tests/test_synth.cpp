#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "coinmark/error.hpp"
#include "coinmark/synth.hpp"
#include "support.hpp"

using namespace coinmark;
using namespace coinmark::testing;

namespace {

SyntheticSpec tiny_spec() {
  SyntheticSpec s;
  s.num_parents = 2;
  s.leaves_per_parent = 2;
  s.images_per_leaf = 10;
  return s;
}

std::string read_all(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_all(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

ErrorKind manifest_error(const std::filesystem::path& p, std::string* message = nullptr) {
  try {
    read_manifest(p);
  } catch (const Error& e) {
    if (message) *message = e.what();
    return e.kind();
  }
  return ErrorKind::InvalidArgument;
}

// Classifies a reverse image by looking for each leaf's stamp at its known
// position within the jitter range; pixels brighter than any texture value
// belong to a glyph.
std::size_t pixel_matching_oracle(const SyntheticSpec& spec, const Image& img) {
  for (std::size_t leaf = 0; leaf < spec.leaf_count(); ++leaf) {
    const Placement p = leaf_placement(spec, leaf);
    const auto& stamp = glyph_stamp(p.glyph);
    for (int dy = -spec.jitter; dy <= spec.jitter; ++dy) {
      for (int dx = -spec.jitter; dx <= spec.jitter; ++dx) {
        bool match = true;
        for (std::size_t sy = 0; sy < kGlyphSize && match; ++sy) {
          for (std::size_t sx = 0; sx < kGlyphSize && match; ++sx) {
            const auto x = static_cast<std::size_t>(static_cast<long>(p.x + sx) + dx);
            const auto y = static_cast<std::size_t>(static_cast<long>(p.y + sy) + dy);
            match = (img.at(x, y) > 0.8) == (stamp[sy * kGlyphSize + sx] != 0);
          }
        }
        if (match) return leaf;
      }
    }
  }
  return spec.leaf_count();
}

}  // namespace

TEST(SyntheticSpec, Validation) {
  EXPECT_NO_THROW(SyntheticSpec{}.validate());
  SyntheticSpec s;
  s.jitter = 8;
  EXPECT_THROW(s.validate(), Error);
  s = {};
  s.disc_radius = 9;
  EXPECT_THROW(s.validate(), Error);
  s = {};
  s.num_parents = 0;
  EXPECT_THROW(s.validate(), Error);
}

TEST(Generate, Counts) {
  const Dataset ds = generate(tiny_spec());
  EXPECT_EQ(ds.samples.size(), 40u);
  EXPECT_EQ(ds.tree.leaf_labels.size(), 4u);
  EXPECT_EQ(ds.tree.parent_labels.size(), 2u);
  for (const auto& s : ds.samples) {
    EXPECT_EQ(ds.tree.parent_of[s.leaf], s.parent);
    EXPECT_EQ(s.reverse.width, 40u);
    EXPECT_NO_THROW(s.reverse.validate());
  }
}

TEST(Generate, UniqueLandmarksPerLeaf) {
  const SyntheticSpec spec;
  std::set<std::tuple<int, std::size_t, std::size_t>> seen;
  for (std::size_t l = 0; l < spec.leaf_count(); ++l) {
    const Placement p = leaf_placement(spec, l);
    EXPECT_TRUE(seen.emplace(static_cast<int>(p.glyph), p.x, p.y).second) << "leaf " << l;
  }
}

TEST(Generate, Deterministic) {
  const Dataset a = generate(tiny_spec()), b = generate(tiny_spec());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_EQ(a.samples[i].reverse, b.samples[i].reverse);
    EXPECT_EQ(a.samples[i].obverse, b.samples[i].obverse);
    EXPECT_EQ(a.samples[i].landmark, b.samples[i].landmark);
  }
  auto other = tiny_spec();
  other.seed = 8;
  EXPECT_NE(generate(other).samples[0].reverse, a.samples[0].reverse);
}

TEST(Generate, NoRandomnessMeansIdenticalClassImages) {
  auto spec = tiny_spec();
  spec.jitter = 0;
  spec.noise = 0;
  const Dataset ds = generate(spec);
  for (const auto& s : ds.samples) {
    const auto& first = ds.samples[s.leaf * spec.images_per_leaf];
    EXPECT_EQ(s.reverse, first.reverse);
  }
}

TEST(Generate, MasksInsideDiscAndAwayFromDistractors) {
  const SyntheticSpec spec;
  const Image disc = disc_mask(spec);
  std::vector<bool> distractor(disc.size(), false);
  for (const auto& d : distractor_placements(spec)) {
    for (std::size_t y = 0; y < kGlyphSize; ++y)
      for (std::size_t x = 0; x < kGlyphSize; ++x)
        if (glyph_stamp(d.glyph)[y * kGlyphSize + x]) distractor[disc.index(d.x + x, d.y + y)] = true;
  }
  const Dataset ds = generate(spec);
  for (std::size_t i = 0; i < ds.samples.size(); i += 7) {
    const Image& m = ds.samples[i].landmark;
    std::size_t area = 0, overlap = 0;
    for (std::size_t p = 0; p < m.size(); ++p) {
      if (m.pixels[p] == 0.0) continue;
      ++area;
      EXPECT_GT(disc.pixels[p], 0.0);
      overlap += distractor[p];
    }
    EXPECT_GT(area, 0u);
    EXPECT_LE(static_cast<double>(overlap), 0.1 * static_cast<double>(area));
  }
}

TEST(Generate, PixelMatchingOracleIsPerfectWithoutNoise) {
  SyntheticSpec spec;
  spec.noise = 0;
  spec.images_per_leaf = 12;
  const Dataset ds = generate(spec);
  for (const auto& s : ds.samples) EXPECT_EQ(pixel_matching_oracle(spec, s.reverse), s.leaf) << s.id;
}

TEST(Manifest, RoundTrip) {
  TempDir dir("manifest");
  const Dataset ds = generate(tiny_spec());
  const Manifest written = write_dataset(ds, dir.path);
  const Manifest read = read_manifest(dir.path / "manifest.txt");
  EXPECT_EQ(read, written);
  EXPECT_EQ(read.spec, tiny_spec());
  const Dataset back = load_dataset(dir.path / "manifest.txt");
  ASSERT_EQ(back.samples.size(), ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    EXPECT_EQ(back.samples[i].reverse, ds.samples[i].reverse);
    EXPECT_EQ(back.samples[i].landmark, ds.samples[i].landmark);
    EXPECT_EQ(back.samples[i].leaf, ds.samples[i].leaf);
  }
}

TEST(Manifest, DistinctErrors) {
  TempDir dir("manifest_err");
  write_dataset(generate(tiny_spec()), dir.path);
  const auto path = dir.path / "manifest.txt";
  const std::string good = read_all(path);

  std::filesystem::remove(dir.path / "mask" / "00003.pgm");
  std::string msg;
  EXPECT_EQ(manifest_error(path, &msg), ErrorKind::MissingFile);
  EXPECT_NE(msg.find("00003.pgm"), std::string::npos) << msg;

  TempDir dir2("manifest_err2");
  write_dataset(generate(tiny_spec()), dir2.path);
  const auto p2 = dir2.path / "manifest.txt";
  std::string text = good;
  const auto img_line = text.find("image id=00000");
  text.insert(text.find('\n', img_line), " colour=red");
  write_all(p2, text);
  EXPECT_EQ(manifest_error(p2, &msg), ErrorKind::UnknownField);
  const std::size_t line_no = static_cast<std::size_t>(std::count(good.begin(), good.begin() + img_line, '\n')) + 1;
  EXPECT_NE(msg.find(":" + std::to_string(line_no) + ":"), std::string::npos) << msg;

  text = good;
  text.replace(text.find("leaf=R000"), 9, "leaf=R999");
  write_all(p2, text);
  EXPECT_EQ(manifest_error(p2), ErrorKind::UnknownLabel);

  write_all(p2, good + "bogus record\n");
  EXPECT_EQ(manifest_error(p2), ErrorKind::UnknownField);

  write_all(p2, "format 1\n");
  EXPECT_EQ(manifest_error(p2), ErrorKind::Format);
}
