#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "coinmark/classifier.hpp"
#include "coinmark/regions.hpp"
#include "coinmark/synth.hpp"

namespace coinmark {

enum class Task { Reverse, Observe, Hierarchy };

const char* to_string(Task task);
Task parse_task(const std::string& name);

struct ConfusionMatrix {
  std::vector<std::string> labels;
  /// counts[truth][predicted]
  std::vector<std::vector<std::size_t>> counts;

  explicit ConfusionMatrix(std::vector<std::string> class_labels);
  void add(std::size_t truth, std::size_t predicted);
  std::vector<double> recall() const;
  /// Mean of the row-normalized diagonal over classes that have test items.
  double mean_diagonal() const;
};

/// Class-balanced partition of sample indices into k folds.
struct FoldPlan {
  std::size_t k = 0;
  std::vector<std::vector<std::size_t>> folds;

  std::vector<std::size_t> training_indices(std::size_t fold) const;
};

/// Shuffles each class's members with a seeded stream, then deals them
/// round-robin; the dealing position carries over between classes so fold
/// sizes also stay within one of each other.
FoldPlan make_folds(std::span<const std::size_t> labels, const std::vector<std::string>& class_labels,
                    std::size_t k, std::uint64_t seed);

struct TaskReport {
  Task task = Task::Reverse;
  std::vector<ConfusionMatrix> folds;
  std::vector<double> fold_accuracy;
  double mean = 0.0;
  /// Sample standard deviation across folds.
  double stddev = 0.0;
};

/// Predicts a label for a sample in the vocabulary of one task.
using Predictor = std::function<std::size_t(const Sample&)>;

struct FoldPredictors {
  Predictor reverse;
  Predictor observe;
  Predictor hierarchy;
};

/// Builds the predictors for one fold from its training indices.
using FoldTrainer = std::function<FoldPredictors(const Dataset&, std::span<const std::size_t> train_indices,
                                                 std::size_t fold, std::span<const Task> tasks)>;

std::vector<TaskReport> kfold_eval_with(const Dataset& dataset, const FoldPlan& plan,
                                        std::span<const Task> tasks, const FoldTrainer& trainer);

/// Trains the leaf model (reverse images) and/or the parent model (obverse
/// images) per fold as the tasks require; the same leaf model serves both the
/// reverse and hierarchy tasks.
std::vector<TaskReport> kfold_eval(const Dataset& dataset, std::size_t k, std::span<const Task> tasks,
                                   const TrainConfig& config, std::uint64_t seed);

/// Plain-text table: one row per task with mean accuracy and std across folds.
std::string format_report(const std::vector<TaskReport>& reports, std::size_t k);

LabeledImages reverse_images(const Dataset& dataset, std::span<const std::size_t> indices);
LabeledImages obverse_images(const Dataset& dataset, std::span<const std::size_t> indices);

/// Expected precision of the top-q in-disc pixels ranked by the spread mask
/// weight sum_k x_k C(i). Pixels tied at the cut-off count fractionally, so a
/// uniform mask scores exactly the chance level.
double localization_score(std::span<const double> x_star, const RegionSet& regions,
                          const Image& truth, const Image& disc, double q);

/// |truth within disc| / |disc|.
double chance_level(const Image& truth, const Image& disc);

/// Min-max rescales to [0, 1] and writes an 8-bit P5; constant maps become mid-gray (128).
void export_heatmap(std::span<const double> values, std::size_t width, std::size_t height,
                    const std::filesystem::path& path);

}  // namespace coinmark
