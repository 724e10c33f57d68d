#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "coinmark/classifier.hpp"

namespace coinmark {

/// Two-level taxonomy: every leaf label belongs to exactly one parent label.
struct HierarchyTree {
  std::vector<std::string> parent_labels;
  std::vector<std::string> leaf_labels;
  /// parent_of[leaf index] = parent index.
  std::vector<std::size_t> parent_of;

  void validate() const;
  std::vector<std::size_t> leaves_of(std::size_t parent) const;

  friend bool operator==(const HierarchyTree&, const HierarchyTree&) = default;
};

struct HierarchicalDecision {
  std::size_t leaf = 0;
  double score = 0.0;
  /// score[r] = p(parent_of[r]) * p(r), for every leaf.
  std::vector<double> leaf_scores;
};

/// Scores every leaf by the product of path probabilities and picks the
/// maximum, ties toward the lowest leaf index. Leaf probabilities are the
/// global softmax output, not renormalized within a parent.
HierarchicalDecision hierarchical_decision(std::span<const double> parent_proba,
                                           std::span<const double> leaf_proba,
                                           const HierarchyTree& tree);

HierarchicalDecision hierarchical_predict(const Classifier& parent_model, const Classifier& leaf_model,
                                          const Image& obverse, const Image& reverse,
                                          const HierarchyTree& tree);

/// Reverse-only prediction: argmax of the leaf model, lowest index on ties.
std::size_t flat_predict(const Classifier& leaf_model, const Image& reverse);

std::string serialize_tree(const HierarchyTree& tree);
HierarchyTree parse_tree(const std::string& text);
void write_tree(const HierarchyTree& tree, const std::filesystem::path& path);
HierarchyTree read_tree(const std::filesystem::path& path);

}  // namespace coinmark
