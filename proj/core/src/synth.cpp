#include "coinmark/synth.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "coinmark/error.hpp"
#include "coinmark/random.hpp"

namespace coinmark {

namespace {

using Stamp = std::array<std::uint8_t, kGlyphSize * kGlyphSize>;

// clang-format off
constexpr std::array<Stamp, kGlyphCount> kStamps = {{
    {0,1,1,1,0, 1,0,0,0,1, 1,0,0,0,1, 1,0,0,0,1, 0,1,1,1,0},  // ring
    {0,0,0,0,0, 1,1,1,1,1, 0,0,0,0,0, 1,1,1,1,1, 0,0,0,0,0},  // double horizontal bar
    {0,1,0,1,0, 0,1,0,1,0, 0,1,0,1,0, 0,1,0,1,0, 0,1,0,1,0},  // double vertical bar
    {0,0,1,0,0, 0,0,1,0,0, 1,1,1,1,1, 0,0,1,0,0, 0,0,1,0,0},  // cross
    {1,0,0,0,1, 0,1,0,1,0, 0,0,1,0,0, 0,0,0,0,0, 0,0,0,0,0},  // chevron
    {1,0,0,0,1, 0,0,0,0,0, 0,0,1,0,0, 0,0,0,0,0, 1,0,0,0,1},  // dot cluster
    {0,0,0,0,0, 0,1,1,1,0, 0,1,1,1,0, 0,1,1,1,0, 0,0,0,0,0},  // filled square
    {1,0,0,0,1, 0,1,0,1,0, 0,0,1,0,0, 0,1,0,1,0, 1,0,0,0,1},  // saltire
}};
// clang-format on

constexpr double kGlyphIntensity = 0.92;
constexpr std::size_t kPositions = 4;

double disc_center(const SyntheticSpec& spec) { return static_cast<double>(spec.storage_size) / 2.0; }

bool in_disc(const SyntheticSpec& spec, long x, long y) {
  const double c = disc_center(spec);
  const double dx = static_cast<double>(x) + 0.5 - c;
  const double dy = static_cast<double>(y) + 0.5 - c;
  return dx * dx + dy * dy <= spec.disc_radius * spec.disc_radius;
}

// Pixels set by `p` shifted by (dx, dy), as (x, y) pairs.
std::vector<std::pair<long, long>> footprint(const Placement& p, long dx, long dy) {
  std::vector<std::pair<long, long>> px;
  const auto& stamp = glyph_stamp(p.glyph);
  for (std::size_t sy = 0; sy < kGlyphSize; ++sy) {
    for (std::size_t sx = 0; sx < kGlyphSize; ++sx) {
      if (stamp[sy * kGlyphSize + sx]) {
        px.emplace_back(static_cast<long>(p.x + sx) + dx, static_cast<long>(p.y + sy) + dy);
      }
    }
  }
  return px;
}

// Diagonal landmark slots: stamp top-left corners around the disc center.
Placement slot(const SyntheticSpec& spec, std::size_t position, Glyph glyph) {
  const long c = static_cast<long>(spec.storage_size / 2);
  const long lo = c - 9, hi = c + 4;
  const long x = (position % 2 == 0) ? lo : hi;
  const long y = (position / 2 == 0) ? lo : hi;
  require(x >= 0 && y >= 0, "storage size too small for the glyph layout");
  return {glyph, static_cast<std::size_t>(x), static_cast<std::size_t>(y)};
}

void stamp_onto(Image& image, const Placement& p, long dx, long dy, double value) {
  for (auto [x, y] : footprint(p, dx, dy)) {
    image.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = value;
  }
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

const char* to_string(Glyph glyph) {
  switch (glyph) {
    case Glyph::Ring: return "ring";
    case Glyph::HBar: return "hbar";
    case Glyph::VBar: return "vbar";
    case Glyph::Cross: return "cross";
    case Glyph::Chevron: return "chevron";
    case Glyph::Dots: return "dots";
    case Glyph::Square: return "square";
    case Glyph::Saltire: return "saltire";
  }
  return "?";
}

const Stamp& glyph_stamp(Glyph glyph) { return kStamps[static_cast<std::size_t>(glyph)]; }

Placement leaf_placement(const SyntheticSpec& spec, std::size_t leaf) {
  require(leaf < spec.leaf_count(), "leaf index out of range");
  const std::size_t position = leaf % kPositions;
  const auto glyph = static_cast<Glyph>((leaf / kPositions + 3 * position) % kGlyphCount);
  return slot(spec, position, glyph);
}

Placement parent_placement(const SyntheticSpec& spec, std::size_t parent) {
  require(parent < spec.num_parents, "parent index out of range");
  const std::size_t position = parent % kPositions;
  const auto glyph = static_cast<Glyph>((parent / kPositions + 2 * position) % kGlyphCount);
  return slot(spec, position, glyph);
}

std::vector<Placement> distractor_placements(const SyntheticSpec& spec) {
  const long c = static_cast<long>(spec.storage_size / 2);
  const std::array<std::pair<long, long>, 4> corners = {
      {{c - 3, c - 16}, {c - 2, c + 11}, {c - 16, c - 3}, {c + 11, c - 2}}};
  std::vector<Placement> out;
  for (std::size_t i = 0; i < spec.distractors; ++i) {
    const auto [x, y] = corners[i];
    require(x >= 0 && y >= 0, "storage size too small for the distractor layout");
    out.push_back({static_cast<Glyph>((3 * i + 1) % kGlyphCount), static_cast<std::size_t>(x),
                   static_cast<std::size_t>(y)});
  }
  return out;
}

void SyntheticSpec::validate() const {
  require(num_parents >= 1, "need at least one parent class");
  require(leaves_per_parent >= 1, "need at least one leaf per parent");
  require(images_per_leaf >= 1, "need at least one image per leaf");
  require(storage_size >= 2 * kGlyphSize, "storage size too small");
  require(disc_radius > 0.0, "disc radius must be positive");
  require(jitter >= 0, "jitter must be non-negative");
  require(noise >= 0.0 && std::isfinite(noise), "noise must be non-negative");
  require(distractors <= 4, "at most 4 distractor glyphs");
  // Four slots times eight glyphs bound the number of distinct landmarks.
  require(leaf_count() <= kPositions * kGlyphCount, "too many leaf classes for the glyph library");
  require(num_parents <= kPositions * kGlyphCount, "too many parent classes for the glyph library");

  auto check_inside = [&](const Placement& p, long j, const std::string& what) {
    for (long dy = -j; dy <= j; ++dy) {
      for (long dx = -j; dx <= j; ++dx) {
        for (auto [x, y] : footprint(p, dx, dy)) {
          if (x < 0 || y < 0 || x >= static_cast<long>(storage_size) ||
              y >= static_cast<long>(storage_size) || !in_disc(*this, x, y)) {
            fail(ErrorKind::InvalidArgument,
                 what + " glyph leaves the disc at jitter offset (" + std::to_string(dx) + ", " +
                     std::to_string(dy) + ")");
          }
        }
      }
    }
  };
  const auto distractor_list = distractor_placements(*this);
  for (std::size_t l = 0; l < leaf_count(); ++l) check_inside(leaf_placement(*this, l), jitter, "leaf " + std::to_string(l));
  for (std::size_t p = 0; p < num_parents; ++p) check_inside(parent_placement(*this, p), jitter, "parent " + std::to_string(p));
  for (std::size_t d = 0; d < distractor_list.size(); ++d) check_inside(distractor_list[d], 0, "distractor " + std::to_string(d));

  // Landmarks may overlap distractors' canonical pixels by at most 10% of their area.
  for (std::size_t l = 0; l < leaf_count(); ++l) {
    const auto leaf = leaf_placement(*this, l);
    for (long dy = -jitter; dy <= jitter; ++dy) {
      for (long dx = -jitter; dx <= jitter; ++dx) {
        const auto mask = footprint(leaf, dx, dy);
        std::size_t shared = 0;
        for (const auto& d : distractor_list) {
          for (const auto& px : footprint(d, 0, 0)) shared += std::count(mask.begin(), mask.end(), px);
        }
        if (10 * shared > mask.size()) {
          fail(ErrorKind::InvalidArgument, "leaf " + std::to_string(l) + " landmark overlaps a distractor");
        }
      }
    }
  }
}

Image disc_mask(const SyntheticSpec& spec) {
  Image out(spec.storage_size, spec.storage_size, 1);
  for (std::size_t y = 0; y < spec.storage_size; ++y) {
    for (std::size_t x = 0; x < spec.storage_size; ++x) {
      out.at(x, y) = in_disc(spec, static_cast<long>(x), static_cast<long>(y)) ? 1.0 : 0.0;
    }
  }
  return out;
}

HierarchyTree make_tree(const SyntheticSpec& spec) {
  HierarchyTree tree;
  char buf[32];
  for (std::size_t p = 0; p < spec.num_parents; ++p) {
    std::snprintf(buf, sizeof(buf), "E%02zu", p);
    tree.parent_labels.emplace_back(buf);
  }
  for (std::size_t l = 0; l < spec.leaf_count(); ++l) {
    std::snprintf(buf, sizeof(buf), "R%03zu", l);
    tree.leaf_labels.emplace_back(buf);
    tree.parent_of.push_back(l / spec.leaves_per_parent);
  }
  return tree;
}

namespace {

Image blank_coin(const SyntheticSpec& spec) {
  Image img(spec.storage_size, spec.storage_size, 1);
  const double c = disc_center(spec);
  for (std::size_t y = 0; y < spec.storage_size; ++y) {
    for (std::size_t x = 0; x < spec.storage_size; ++x) {
      if (!in_disc(spec, static_cast<long>(x), static_cast<long>(y))) continue;
      const double r = std::hypot(static_cast<double>(x) + 0.5 - c, static_cast<double>(y) + 0.5 - c);
      img.at(x, y) = 0.45 + 0.08 * std::cos(0.9 * r);
    }
  }
  return img;
}

void finish(Image& img, const SyntheticSpec& spec, const Image& disc, Rng& rng) {
  for (std::size_t i = 0; i < img.size(); ++i) {
    if (disc.pixels[i] == 0.0) continue;
    if (spec.noise > 0.0) img.pixels[i] += spec.noise * rng.normal();
  }
  quantize_8bit(img);
}

}  // namespace

Dataset generate(const SyntheticSpec& spec) {
  spec.validate();
  Dataset data;
  data.spec = spec;
  data.tree = make_tree(spec);
  const Image base = blank_coin(spec);
  const Image disc = disc_mask(spec);
  const auto distractor_list = distractor_placements(spec);

  const std::size_t total = spec.leaf_count() * spec.images_per_leaf;
  data.samples.reserve(total);
  char id[32];
  for (std::size_t i = 0; i < total; ++i) {
    Rng rng(derive_seed(spec.seed, i));
    Sample s;
    std::snprintf(id, sizeof(id), "%05zu", i);
    s.id = id;
    s.leaf = i / spec.images_per_leaf;
    s.parent = data.tree.parent_of[s.leaf];

    const long jx = rng.between(-spec.jitter, spec.jitter);
    const long jy = rng.between(-spec.jitter, spec.jitter);
    const long ox = rng.between(-spec.jitter, spec.jitter);
    const long oy = rng.between(-spec.jitter, spec.jitter);

    s.reverse = base;
    s.obverse = base;
    for (const auto& d : distractor_list) {
      stamp_onto(s.reverse, d, 0, 0, kGlyphIntensity);
      stamp_onto(s.obverse, d, 0, 0, kGlyphIntensity);
    }
    const Placement leaf = leaf_placement(spec, s.leaf);
    stamp_onto(s.reverse, leaf, jx, jy, kGlyphIntensity);
    stamp_onto(s.obverse, parent_placement(spec, s.parent), ox, oy, kGlyphIntensity);

    s.landmark = Image(spec.storage_size, spec.storage_size, 1);
    stamp_onto(s.landmark, leaf, jx, jy, 1.0);

    finish(s.reverse, spec, disc, rng);
    finish(s.obverse, spec, disc, rng);
    data.samples.push_back(std::move(s));
  }
  return data;
}

// ---------------------------------------------------------------------------
// Manifest format, one record per line, fields as key=value:
//   format 1
//   spec seed=.. parents=.. leaves_per_parent=.. images_per_leaf=.. storage=..
//        radius=.. jitter=.. noise=.. distractors=..
//   parent <label>
//   leaf <label> parent=<label>
//   image id=.. leaf=.. parent=.. obverse=<path> reverse=<path> mask=<path>
// Blank lines and lines starting with '#' are ignored.

void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  m.tree.validate();
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  const auto& s = m.spec;
  out << "# coinmark synthetic dataset\n";
  out << "format 1\n";
  out << "spec seed=" << s.seed << " parents=" << s.num_parents
      << " leaves_per_parent=" << s.leaves_per_parent << " images_per_leaf=" << s.images_per_leaf
      << " storage=" << s.storage_size << " radius=" << format_double(s.disc_radius)
      << " jitter=" << s.jitter << " noise=" << format_double(s.noise)
      << " distractors=" << s.distractors << "\n";
  for (const auto& p : m.tree.parent_labels) out << "parent " << p << "\n";
  for (std::size_t r = 0; r < m.tree.leaf_labels.size(); ++r) {
    out << "leaf " << m.tree.leaf_labels[r] << " parent=" << m.tree.parent_labels[m.tree.parent_of[r]] << "\n";
  }
  for (const auto& e : m.entries) {
    out << "image id=" << e.id << " leaf=" << e.leaf << " parent=" << e.parent
        << " obverse=" << e.obverse.generic_string() << " reverse=" << e.reverse.generic_string()
        << " mask=" << e.mask.generic_string() << "\n";
  }
  if (!out) fail(ErrorKind::Io, "failed writing " + path.string());
}

namespace {

struct Record {
  std::string type;
  std::vector<std::string> positional;
  std::map<std::string, std::string> fields;
};

Record split_record(const std::string& line, std::size_t line_no, const std::string& file) {
  std::istringstream in(line);
  Record r;
  in >> r.type;
  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) {
      r.positional.push_back(tok);
    } else if (!r.fields.emplace(tok.substr(0, eq), tok.substr(eq + 1)).second) {
      fail(ErrorKind::Format, file + ":" + std::to_string(line_no) + ": duplicate field '" + tok.substr(0, eq) + "'");
    }
  }
  return r;
}

}  // namespace

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::MissingFile, "cannot open manifest " + path.string());
  const std::string file = path.string();
  const auto dir = path.parent_path();
  Manifest m;
  bool saw_format = false, saw_spec = false;
  std::map<std::string, std::size_t> parent_index, leaf_index;
  std::string line;
  std::size_t line_no = 0;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const std::string where = file + ":" + std::to_string(line_no) + ": ";
    Record r = split_record(line, line_no, file);

    auto expect_fields = [&](std::initializer_list<const char*> allowed) {
      for (const auto& [key, value] : r.fields) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) fail(ErrorKind::UnknownField, where + "unknown field '" + key + "' in " + r.type + " record");
      }
      for (const char* a : allowed) {
        if (!r.fields.count(a)) fail(ErrorKind::Format, where + r.type + " record lacks '" + a + "'");
      }
    };
    auto number = [&](const char* key) -> std::uint64_t {
      const auto& v = r.fields.at(key);
      std::uint64_t out = 0;
      auto res = std::from_chars(v.data(), v.data() + v.size(), out);
      if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        fail(ErrorKind::Format, where + "field '" + key + "' is not a non-negative integer");
      }
      return out;
    };
    auto real = [&](const char* key) -> double {
      const auto& v = r.fields.at(key);
      double out = 0;
      auto res = std::from_chars(v.data(), v.data() + v.size(), out);
      if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        fail(ErrorKind::Format, where + "field '" + key + "' is not a number");
      }
      return out;
    };

    if (r.type == "format") {
      if (r.positional.size() != 1 || r.positional[0] != "1" || !r.fields.empty()) {
        fail(ErrorKind::Version, where + "unsupported manifest format");
      }
      saw_format = true;
    } else if (r.type == "spec") {
      if (!r.positional.empty()) fail(ErrorKind::Format, where + "spec takes only key=value fields");
      expect_fields({"seed", "parents", "leaves_per_parent", "images_per_leaf", "storage", "radius",
                     "jitter", "noise", "distractors"});
      m.spec.seed = number("seed");
      m.spec.num_parents = number("parents");
      m.spec.leaves_per_parent = number("leaves_per_parent");
      m.spec.images_per_leaf = number("images_per_leaf");
      m.spec.storage_size = number("storage");
      m.spec.disc_radius = real("radius");
      m.spec.jitter = static_cast<int>(number("jitter"));
      m.spec.noise = real("noise");
      m.spec.distractors = number("distractors");
      saw_spec = true;
    } else if (r.type == "parent") {
      if (r.positional.size() != 1) fail(ErrorKind::Format, where + "parent record needs one label");
      expect_fields({});
      parent_index[r.positional[0]] = m.tree.parent_labels.size();
      m.tree.parent_labels.push_back(r.positional[0]);
    } else if (r.type == "leaf") {
      if (r.positional.size() != 1) fail(ErrorKind::Format, where + "leaf record needs one label");
      expect_fields({"parent"});
      auto it = parent_index.find(r.fields["parent"]);
      if (it == parent_index.end()) {
        fail(ErrorKind::UnknownLabel, where + "leaf names unknown parent '" + r.fields["parent"] + "'");
      }
      leaf_index[r.positional[0]] = m.tree.leaf_labels.size();
      m.tree.leaf_labels.push_back(r.positional[0]);
      m.tree.parent_of.push_back(it->second);
    } else if (r.type == "image") {
      if (!r.positional.empty()) fail(ErrorKind::Format, where + "image takes only key=value fields");
      expect_fields({"id", "leaf", "parent", "obverse", "reverse", "mask"});
      ManifestEntry e{r.fields["id"], r.fields["leaf"], r.fields["parent"],
                      r.fields["obverse"], r.fields["reverse"], r.fields["mask"]};
      auto leaf = leaf_index.find(e.leaf);
      if (leaf == leaf_index.end()) fail(ErrorKind::UnknownLabel, where + "unknown leaf label '" + e.leaf + "'");
      auto parent = parent_index.find(e.parent);
      if (parent == parent_index.end()) fail(ErrorKind::UnknownLabel, where + "unknown parent label '" + e.parent + "'");
      if (m.tree.parent_of[leaf->second] != parent->second) {
        fail(ErrorKind::Format, where + "leaf '" + e.leaf + "' does not belong to parent '" + e.parent + "'");
      }
      for (const auto* p : {&e.obverse, &e.reverse, &e.mask}) {
        if (!std::filesystem::exists(dir / *p)) {
          fail(ErrorKind::MissingFile, where + "referenced file " + (dir / *p).string() + " does not exist");
        }
      }
      m.entries.push_back(std::move(e));
    } else {
      fail(ErrorKind::UnknownField, where + "unknown record type '" + r.type + "'");
    }
  }
  if (!saw_format) fail(ErrorKind::Format, file + ": missing format line");
  if (!saw_spec) fail(ErrorKind::Format, file + ": missing spec line");
  m.tree.validate();
  return m;
}

Manifest write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  for (const char* sub : {"obverse", "reverse", "mask"}) fs::create_directories(dir / sub);
  Manifest m;
  m.spec = dataset.spec;
  m.tree = dataset.tree;
  for (const auto& s : dataset.samples) {
    ManifestEntry e;
    e.id = s.id;
    e.leaf = dataset.tree.leaf_labels[s.leaf];
    e.parent = dataset.tree.parent_labels[s.parent];
    e.obverse = fs::path("obverse") / (s.id + ".pgm");
    e.reverse = fs::path("reverse") / (s.id + ".pgm");
    e.mask = fs::path("mask") / (s.id + ".pgm");
    write_pgm(s.obverse, dir / e.obverse);
    write_pgm(s.reverse, dir / e.reverse);
    write_pgm(s.landmark, dir / e.mask);
    m.entries.push_back(std::move(e));
  }
  write_manifest(m, dir / "manifest.txt");
  return m;
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
  const Manifest m = read_manifest(manifest_path);
  const auto dir = manifest_path.parent_path();
  Dataset data;
  data.spec = m.spec;
  data.tree = m.tree;
  std::map<std::string, std::size_t> leaf_index;
  for (std::size_t r = 0; r < m.tree.leaf_labels.size(); ++r) leaf_index[m.tree.leaf_labels[r]] = r;
  for (const auto& e : m.entries) {
    Sample s;
    s.id = e.id;
    s.leaf = leaf_index.at(e.leaf);
    s.parent = m.tree.parent_of[s.leaf];
    s.obverse = read_pgm(dir / e.obverse);
    s.reverse = read_pgm(dir / e.reverse);
    s.landmark = read_pgm(dir / e.mask);
    data.samples.push_back(std::move(s));
  }
  return data;
}

}  // namespace coinmark
