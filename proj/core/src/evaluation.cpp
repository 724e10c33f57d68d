#include "coinmark/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "coinmark/error.hpp"
#include "coinmark/hierarchy.hpp"
#include "coinmark/random.hpp"

namespace coinmark {

const char* to_string(Task task) {
  switch (task) {
    case Task::Reverse: return "reverse";
    case Task::Observe: return "observe";
    case Task::Hierarchy: return "hierarchy";
  }
  return "?";
}

Task parse_task(const std::string& name) {
  if (name == "reverse") return Task::Reverse;
  if (name == "observe" || name == "obverse") return Task::Observe;
  if (name == "hierarchy") return Task::Hierarchy;
  fail(ErrorKind::InvalidArgument, "unknown task '" + name + "' (expected reverse, observe or hierarchy)");
}

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> class_labels)
    : labels(std::move(class_labels)),
      counts(labels.size(), std::vector<std::size_t>(labels.size(), 0)) {}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted) {
  require(truth < labels.size() && predicted < labels.size(), "confusion entry out of range");
  ++counts[truth][predicted];
}

std::vector<double> ConfusionMatrix::recall() const {
  std::vector<double> out(labels.size(), 0.0);
  for (std::size_t c = 0; c < labels.size(); ++c) {
    const auto row = std::accumulate(counts[c].begin(), counts[c].end(), std::size_t{0});
    out[c] = row ? static_cast<double>(counts[c][c]) / static_cast<double>(row) : 0.0;
  }
  return out;
}

double ConfusionMatrix::mean_diagonal() const {
  const auto r = recall();
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < labels.size(); ++c) {
    if (std::accumulate(counts[c].begin(), counts[c].end(), std::size_t{0}) == 0) continue;
    sum += r[c];
    ++present;
  }
  return present ? sum / static_cast<double>(present) : 0.0;
}

std::vector<std::size_t> FoldPlan::training_indices(std::size_t fold) const {
  require(fold < folds.size(), "fold index out of range");
  std::vector<std::size_t> out;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    if (f != fold) out.insert(out.end(), folds[f].begin(), folds[f].end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

FoldPlan make_folds(std::span<const std::size_t> labels, const std::vector<std::string>& class_labels,
                    std::size_t k, std::uint64_t seed) {
  require(k >= 2, "k-fold evaluation needs k >= 2");
  std::vector<std::vector<std::size_t>> members(class_labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] < class_labels.size(), "label outside the class vocabulary");
    members[labels[i]].push_back(i);
  }
  for (std::size_t c = 0; c < members.size(); ++c) {
    if (members[c].size() < k) {
      fail(ErrorKind::InvalidArgument, "class '" + class_labels[c] + "' has " +
                                           std::to_string(members[c].size()) + " examples, fewer than k = " +
                                           std::to_string(k));
    }
  }
  FoldPlan plan;
  plan.k = k;
  plan.folds.resize(k);
  Rng rng(seed);
  std::size_t dealer = 0;
  for (auto& m : members) {
    rng.shuffle(std::span<std::size_t>(m));
    for (auto idx : m) plan.folds[dealer++ % k].push_back(idx);
  }
  for (auto& f : plan.folds) std::sort(f.begin(), f.end());
  return plan;
}

namespace {

double sample_stddev(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

bool wants(std::span<const Task> tasks, Task t) {
  return std::find(tasks.begin(), tasks.end(), t) != tasks.end();
}

}  // namespace

std::vector<TaskReport> kfold_eval_with(const Dataset& dataset, const FoldPlan& plan,
                                        std::span<const Task> tasks, const FoldTrainer& trainer) {
  require(!tasks.empty(), "no evaluation task given");
  require(plan.folds.size() == plan.k && plan.k >= 2, "malformed fold plan");
  std::vector<TaskReport> reports(tasks.size());
  for (std::size_t t = 0; t < tasks.size(); ++t) reports[t].task = tasks[t];

  for (std::size_t fold = 0; fold < plan.k; ++fold) {
    const auto train_idx = plan.training_indices(fold);
    const FoldPredictors predictors = trainer(dataset, train_idx, fold, tasks);
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      const Task task = tasks[t];
      const bool by_parent = task == Task::Observe;
      ConfusionMatrix cm(by_parent ? dataset.tree.parent_labels : dataset.tree.leaf_labels);
      const Predictor& predict = task == Task::Reverse   ? predictors.reverse
                                 : task == Task::Observe ? predictors.observe
                                                         : predictors.hierarchy;
      require(static_cast<bool>(predict), std::string("trainer supplied no predictor for task ") + to_string(task));
      for (auto idx : plan.folds[fold]) {
        const Sample& s = dataset.samples[idx];
        cm.add(by_parent ? s.parent : s.leaf, predict(s));
      }
      reports[t].fold_accuracy.push_back(cm.mean_diagonal());
      reports[t].folds.push_back(std::move(cm));
    }
  }
  for (auto& r : reports) {
    r.mean = std::accumulate(r.fold_accuracy.begin(), r.fold_accuracy.end(), 0.0) /
             static_cast<double>(r.fold_accuracy.size());
    r.stddev = sample_stddev(r.fold_accuracy, r.mean);
  }
  return reports;
}

LabeledImages reverse_images(const Dataset& dataset, std::span<const std::size_t> indices) {
  LabeledImages out;
  for (auto i : indices) {
    out.images.push_back(dataset.samples.at(i).reverse);
    out.labels.push_back(dataset.samples[i].leaf);
  }
  return out;
}

LabeledImages obverse_images(const Dataset& dataset, std::span<const std::size_t> indices) {
  LabeledImages out;
  for (auto i : indices) {
    out.images.push_back(dataset.samples.at(i).obverse);
    out.labels.push_back(dataset.samples[i].parent);
  }
  return out;
}

std::vector<TaskReport> kfold_eval(const Dataset& dataset, std::size_t k, std::span<const Task> tasks,
                                   const TrainConfig& config, std::uint64_t seed) {
  std::vector<std::size_t> leaf_labels;
  for (const auto& s : dataset.samples) leaf_labels.push_back(s.leaf);
  const FoldPlan plan = make_folds(leaf_labels, dataset.tree.leaf_labels, k, seed);
  const Shape input{1, config.crop_size, config.crop_size};

  FoldTrainer trainer = [&](const Dataset& data, std::span<const std::size_t> train_idx, std::size_t fold,
                            std::span<const Task> wanted) {
    auto leaf_model = std::make_shared<Classifier>();
    auto parent_model = std::make_shared<Classifier>();
    const bool need_leaf = wants(wanted, Task::Reverse) || wants(wanted, Task::Hierarchy);
    const bool need_parent = wants(wanted, Task::Observe) || wants(wanted, Task::Hierarchy);
    if (need_leaf) {
      TrainConfig c = config;
      c.seed = derive_seed(config.seed, 2 * fold);
      *leaf_model = build_model(data.tree.leaf_labels, input, c.seed, config.storage_size);
      train(*leaf_model, reverse_images(data, train_idx), {}, c);
    }
    if (need_parent) {
      TrainConfig c = config;
      c.seed = derive_seed(config.seed, 2 * fold + 1);
      *parent_model = build_model(data.tree.parent_labels, input, c.seed, config.storage_size);
      train(*parent_model, obverse_images(data, train_idx), {}, c);
    }
    FoldPredictors p;
    const HierarchyTree tree = data.tree;
    if (need_leaf) p.reverse = [leaf_model](const Sample& s) { return flat_predict(*leaf_model, s.reverse); };
    if (need_parent) p.observe = [parent_model](const Sample& s) { return parent_model->predict(s.obverse); };
    if (need_leaf && need_parent) {
      p.hierarchy = [leaf_model, parent_model, tree](const Sample& s) {
        return hierarchical_predict(*parent_model, *leaf_model, s.obverse, s.reverse, tree).leaf;
      };
    }
    return p;
  };
  return kfold_eval_with(dataset, plan, tasks, trainer);
}

std::string format_report(const std::vector<TaskReport>& reports, std::size_t k) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-10s  %-28s  %s\n", "task", "accuracy (mean, sample std)", "per-fold");
  out << line;
  for (const auto& r : reports) {
    std::ostringstream folds;
    for (std::size_t f = 0; f < r.fold_accuracy.size(); ++f) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%s%.4f", f ? " " : "", r.fold_accuracy[f]);
      folds << buf;
    }
    char acc[64];
    std::snprintf(acc, sizeof(acc), "%.2f%% (+/- %.2f)", 100.0 * r.mean, 100.0 * r.stddev);
    std::snprintf(line, sizeof(line), "%-10s  %-28s  %s\n", to_string(r.task), acc, folds.str().c_str());
    out << line;
  }
  out << "folds: " << k << ", class-balanced; +/- is the sample standard deviation across folds\n";
  return out.str();
}

double chance_level(const Image& truth, const Image& disc) {
  require(truth.size() == disc.size(), "truth and disc masks differ in size");
  std::size_t in_disc = 0, hits = 0;
  for (std::size_t i = 0; i < disc.size(); ++i) {
    if (disc.pixels[i] <= 0.0) continue;
    ++in_disc;
    if (truth.pixels[i] > 0.0) ++hits;
  }
  require(in_disc > 0, "disc mask is empty");
  return static_cast<double>(hits) / static_cast<double>(in_disc);
}

double localization_score(std::span<const double> x_star, const RegionSet& regions,
                          const Image& truth, const Image& disc, double q) {
  require(q > 0.0 && q <= 1.0, "q must be in (0, 1]");
  require(truth.size() == regions.pixel_count() && disc.size() == regions.pixel_count(),
          "masks do not match the region geometry");
  if (std::none_of(truth.pixels.begin(), truth.pixels.end(), [](double v) { return v > 0.0; })) {
    fail(ErrorKind::InvalidArgument, "ground-truth landmark mask is empty");
  }
  const auto weight = spread_mask(regions, x_star);
  std::vector<std::size_t> pixels;
  for (std::size_t i = 0; i < disc.size(); ++i) {
    if (disc.pixels[i] > 0.0) pixels.push_back(i);
  }
  require(!pixels.empty(), "disc mask is empty");
  std::stable_sort(pixels.begin(), pixels.end(), [&](auto a, auto b) { return weight[a] > weight[b]; });
  const auto take = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(q * static_cast<double>(pixels.size()))));

  // Values within a relative 1e-9 of each other are ties; spread weights of
  // equal masks differ only by rounding in the coverage normalization.
  auto tied = [&](double a, double b) { return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)}); };
  double hits = 0.0;
  std::size_t i = 0;
  while (i < take) {
    std::size_t j = i;
    while (j + 1 < pixels.size() && tied(weight[pixels[j + 1]], weight[pixels[i]])) ++j;
    std::size_t group_hits = 0;
    for (std::size_t t = i; t <= j; ++t) group_hits += truth.pixels[pixels[t]] > 0.0 ? 1 : 0;
    const std::size_t group = j - i + 1;
    const std::size_t used = std::min(group, take - i);
    hits += static_cast<double>(group_hits) * static_cast<double>(used) / static_cast<double>(group);
    i = j + 1;
  }
  return hits / static_cast<double>(take);
}

void export_heatmap(std::span<const double> values, std::size_t width, std::size_t height,
                    const std::filesystem::path& path) {
  require(!values.empty(), "empty heatmap");
  require(values.size() == width * height, "heatmap size does not match its dimensions");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  Image img(width, height, 1);
  for (std::size_t i = 0; i < values.size(); ++i) {
    img.pixels[i] = (*hi > *lo) ? (values[i] - *lo) / (*hi - *lo) : 128.0 / 255.0;
  }
  write_pgm(img, path);
}

}  // namespace coinmark
