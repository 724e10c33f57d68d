#include "coinmark/hierarchy.hpp"

#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include <json.hpp>

#include "coinmark/error.hpp"

namespace coinmark {

void HierarchyTree::validate() const {
  require(!parent_labels.empty() && !leaf_labels.empty(), "hierarchy needs parents and leaves");
  require(std::set<std::string>(parent_labels.begin(), parent_labels.end()).size() == parent_labels.size(),
          "duplicate parent label");
  require(std::set<std::string>(leaf_labels.begin(), leaf_labels.end()).size() == leaf_labels.size(),
          "duplicate leaf label");
  require(parent_of.size() == leaf_labels.size(), "every leaf needs exactly one parent");
  std::vector<bool> used(parent_labels.size(), false);
  for (auto p : parent_of) {
    require(p < parent_labels.size(), "leaf parent index out of range");
    used[p] = true;
  }
  for (std::size_t p = 0; p < used.size(); ++p) {
    require(used[p], "parent '" + parent_labels[p] + "' has no leaves");
  }
}

std::vector<std::size_t> HierarchyTree::leaves_of(std::size_t parent) const {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < parent_of.size(); ++r) {
    if (parent_of[r] == parent) out.push_back(r);
  }
  return out;
}

HierarchicalDecision hierarchical_decision(std::span<const double> parent_proba,
                                           std::span<const double> leaf_proba,
                                           const HierarchyTree& tree) {
  tree.validate();
  if (parent_proba.size() != tree.parent_labels.size() || leaf_proba.size() != tree.leaf_labels.size()) {
    fail(ErrorKind::ShapeMismatch, "probability vectors do not match the hierarchy vocabulary");
  }
  HierarchicalDecision d;
  d.leaf_scores.resize(leaf_proba.size());
  for (std::size_t r = 0; r < leaf_proba.size(); ++r) {
    d.leaf_scores[r] = parent_proba[tree.parent_of[r]] * leaf_proba[r];
  }
  d.leaf = argmax(d.leaf_scores);
  d.score = d.leaf_scores[d.leaf];
  return d;
}

HierarchicalDecision hierarchical_predict(const Classifier& parent_model, const Classifier& leaf_model,
                                          const Image& obverse, const Image& reverse,
                                          const HierarchyTree& tree) {
  if (parent_model.labels() != tree.parent_labels) {
    fail(ErrorKind::UnknownLabel, "parent model vocabulary does not match the hierarchy");
  }
  if (leaf_model.labels() != tree.leaf_labels) {
    fail(ErrorKind::UnknownLabel, "leaf model vocabulary does not match the hierarchy");
  }
  return hierarchical_decision(parent_model.predict_proba(obverse), leaf_model.predict_proba(reverse), tree);
}

std::size_t flat_predict(const Classifier& leaf_model, const Image& reverse) {
  return argmax(leaf_model.predict_proba(reverse));
}

std::string serialize_tree(const HierarchyTree& tree) {
  tree.validate();
  nlohmann::ordered_json j;
  j["parents"] = tree.parent_labels;
  j["leaves"] = tree.leaf_labels;
  auto& pairs = j["parent_of"] = nlohmann::ordered_json::array();
  for (std::size_t r = 0; r < tree.leaf_labels.size(); ++r) {
    pairs.push_back({tree.leaf_labels[r], tree.parent_labels[tree.parent_of[r]]});
  }
  return j.dump(2) + "\n";
}

HierarchyTree parse_tree(const std::string& text) {
  HierarchyTree tree;
  try {
    const auto j = nlohmann::json::parse(text);
    tree.parent_labels = j.at("parents").get<std::vector<std::string>>();
    tree.leaf_labels = j.at("leaves").get<std::vector<std::string>>();
    std::map<std::string, std::size_t> parent_index;
    for (std::size_t p = 0; p < tree.parent_labels.size(); ++p) parent_index[tree.parent_labels[p]] = p;
    std::map<std::string, std::size_t> assigned;
    for (const auto& pair : j.at("parent_of")) {
      const auto leaf = pair.at(0).get<std::string>();
      const auto parent = pair.at(1).get<std::string>();
      if (!parent_index.count(parent)) fail(ErrorKind::UnknownLabel, "unknown parent '" + parent + "'");
      if (!assigned.emplace(leaf, parent_index[parent]).second) {
        fail(ErrorKind::Format, "leaf '" + leaf + "' has more than one parent");
      }
    }
    for (const auto& leaf : tree.leaf_labels) {
      auto it = assigned.find(leaf);
      if (it == assigned.end()) fail(ErrorKind::Format, "leaf '" + leaf + "' has no parent");
      tree.parent_of.push_back(it->second);
    }
    if (assigned.size() != tree.leaf_labels.size()) fail(ErrorKind::UnknownLabel, "parent_of names an unknown leaf");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("malformed hierarchy: ") + e.what());
  }
  tree.validate();
  return tree;
}

void write_tree(const HierarchyTree& tree, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out << serialize_tree(tree);
}

HierarchyTree read_tree(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::MissingFile, "cannot open " + path.string());
  return parse_tree(std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()));
}

}  // namespace coinmark
