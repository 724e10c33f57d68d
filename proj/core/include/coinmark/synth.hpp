#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "coinmark/hierarchy.hpp"
#include "coinmark/image.hpp"

namespace coinmark {

/// Small binary stamps drawn onto the coin disc.
enum class Glyph { Ring, HBar, VBar, Cross, Chevron, Dots, Square, Saltire };

inline constexpr std::size_t kGlyphCount = 8;
inline constexpr std::size_t kGlyphSize = 5;

const char* to_string(Glyph glyph);
/// 5x5 row-major occupancy of a glyph.
const std::array<std::uint8_t, kGlyphSize * kGlyphSize>& glyph_stamp(Glyph glyph);

struct Placement {
  Glyph glyph = Glyph::Ring;
  /// Top-left corner of the stamp in storage coordinates, before jitter.
  std::size_t x = 0;
  std::size_t y = 0;
};

/// Parameters of the coin-like benchmark. Obverse images carry the parent
/// ("emperor") glyph, reverse images the leaf ("type") glyph; both carry the
/// same distractor glyphs, which hold no label information.
struct SyntheticSpec {
  std::size_t num_parents = 8;
  std::size_t leaves_per_parent = 2;
  std::size_t images_per_leaf = 200;
  std::size_t storage_size = 40;
  double disc_radius = 16.0;
  int jitter = 2;
  double noise = 0.03;
  std::size_t distractors = 2;
  std::uint64_t seed = 7;

  std::size_t leaf_count() const { return num_parents * leaves_per_parent; }

  /// Throws when a glyph can leave the disc at some jitter offset or a leaf
  /// landmark overlaps a distractor by more than 10% of its area.
  void validate() const;

  friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

/// Canonical glyph placements implied by a spec.
Placement leaf_placement(const SyntheticSpec& spec, std::size_t leaf);
Placement parent_placement(const SyntheticSpec& spec, std::size_t parent);
std::vector<Placement> distractor_placements(const SyntheticSpec& spec);

/// Binary image of the pixels inside the coin disc.
Image disc_mask(const SyntheticSpec& spec);

struct Sample {
  std::string id;
  std::size_t leaf = 0;
  std::size_t parent = 0;
  Image obverse;
  Image reverse;
  /// Pixels of the leaf's defining glyph on the reverse, values {0, 1}.
  Image landmark;
};

struct Dataset {
  SyntheticSpec spec;
  HierarchyTree tree;
  std::vector<Sample> samples;
};

HierarchyTree make_tree(const SyntheticSpec& spec);

/// Deterministic given spec.seed; each image draws from its own derived stream.
Dataset generate(const SyntheticSpec& spec);

struct ManifestEntry {
  std::string id;
  std::string leaf;
  std::string parent;
  std::filesystem::path obverse;
  std::filesystem::path reverse;
  std::filesystem::path mask;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// Line-oriented text listing of a dataset on disk. Paths are relative to
/// the manifest's directory.
struct Manifest {
  SyntheticSpec spec;
  HierarchyTree tree;
  std::vector<ManifestEntry> entries;

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
/// Strict parser: unknown record types or fields are errors carrying the line
/// number; every referenced image file must exist.
Manifest read_manifest(const std::filesystem::path& path);

/// Writes every image as P5 under `dir` plus `dir/manifest.txt`; returns the manifest.
Manifest write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
/// Reads a manifest and all images it references.
Dataset load_dataset(const std::filesystem::path& manifest_path);

}  // namespace coinmark
