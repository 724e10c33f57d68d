#include <gtest/gtest.h>

#include <map>
#include <numeric>

#include "coinmark/error.hpp"
#include "coinmark/evaluation.hpp"
#include "support.hpp"

using namespace coinmark;
using namespace coinmark::testing;

namespace {

Dataset tiny_dataset(std::size_t per_leaf = 10) {
  SyntheticSpec s;
  s.num_parents = 2;
  s.leaves_per_parent = 2;
  s.images_per_leaf = per_leaf;
  return generate(s);
}

std::vector<std::size_t> leaf_labels(const Dataset& ds) {
  std::vector<std::size_t> out;
  for (const auto& s : ds.samples) out.push_back(s.leaf);
  return out;
}

FoldTrainer stub(std::function<std::size_t(const Sample&)> leaf, std::function<std::size_t(const Sample&)> parent) {
  return [=](const Dataset&, std::span<const std::size_t>, std::size_t, std::span<const Task>) {
    return FoldPredictors{leaf, parent, leaf};
  };
}

}  // namespace

TEST(Task, Names) {
  EXPECT_EQ(parse_task("hierarchy"), Task::Hierarchy);
  EXPECT_EQ(parse_task("observe"), Task::Observe);
  EXPECT_STREQ(to_string(Task::Reverse), "reverse");
  EXPECT_THROW(parse_task("sideways"), Error);
}

TEST(ConfusionMatrix, RecallAndMeanDiagonal) {
  ConfusionMatrix cm({"a", "b", "c"});
  cm.add(0, 0);
  cm.add(0, 1);
  cm.add(1, 1);
  cm.add(1, 1);
  cm.add(1, 1);
  cm.add(1, 0);
  EXPECT_EQ(cm.recall(), (std::vector<double>{0.5, 0.75, 0.0}));
  EXPECT_DOUBLE_EQ(cm.mean_diagonal(), 0.625);  // class c has no test items
  EXPECT_THROW(cm.add(3, 0), Error);
}

TEST(Folds, PartitionAndBalance) {
  const Dataset ds = tiny_dataset(13);
  const auto labels = leaf_labels(ds);
  const FoldPlan plan = make_folds(labels, ds.tree.leaf_labels, 5, 3);
  std::vector<std::size_t> all;
  for (const auto& f : plan.folds) all.insert(all.end(), f.begin(), f.end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expected(ds.samples.size());
  std::iota(expected.begin(), expected.end(), std::size_t{0});
  EXPECT_EQ(all, expected);
  for (std::size_t c = 0; c < ds.tree.leaf_labels.size(); ++c) {
    std::vector<std::size_t> per_fold;
    for (const auto& f : plan.folds) {
      per_fold.push_back(static_cast<std::size_t>(
          std::count_if(f.begin(), f.end(), [&](std::size_t i) { return labels[i] == c; })));
    }
    EXPECT_LE(*std::max_element(per_fold.begin(), per_fold.end()) -
                  *std::min_element(per_fold.begin(), per_fold.end()),
              1u);
  }
  const auto train = plan.training_indices(2);
  EXPECT_EQ(train.size() + plan.folds[2].size(), ds.samples.size());
  EXPECT_EQ(make_folds(labels, ds.tree.leaf_labels, 5, 3).folds, plan.folds);
}

TEST(Folds, TooFewExamplesNamesClass) {
  const Dataset ds = tiny_dataset(4);
  try {
    make_folds(leaf_labels(ds), ds.tree.leaf_labels, 5, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("R000"), std::string::npos) << e.what();
  }
}

TEST(KFold, PerfectStub) {
  const Dataset ds = tiny_dataset();
  const FoldPlan plan = make_folds(leaf_labels(ds), ds.tree.leaf_labels, 5, 1);
  const std::vector<Task> tasks{Task::Reverse, Task::Observe, Task::Hierarchy};
  const auto reports =
      kfold_eval_with(ds, plan, tasks, stub([](const Sample& s) { return s.leaf; }, [](const Sample& s) { return s.parent; }));
  ASSERT_EQ(reports.size(), 3u);
  for (const auto& r : reports) {
    EXPECT_EQ(r.mean, 1.0);
    EXPECT_EQ(r.stddev, 0.0);
    EXPECT_EQ(r.folds.size(), 5u);
  }
}

TEST(KFold, AlwaysWrongStub) {
  SyntheticSpec s;
  s.num_parents = 1;
  s.leaves_per_parent = 2;
  s.images_per_leaf = 10;
  const Dataset ds = generate(s);
  const FoldPlan plan = make_folds(leaf_labels(ds), ds.tree.leaf_labels, 5, 1);
  const std::vector<Task> tasks{Task::Reverse};
  const auto reports = kfold_eval_with(ds, plan, tasks, stub([](const Sample& x) { return 1 - x.leaf; }, {}));
  EXPECT_EQ(reports[0].mean, 0.0);
}

TEST(KFold, MeanIsArithmeticMeanOfFolds) {
  const Dataset ds = tiny_dataset();
  const FoldPlan plan = make_folds(leaf_labels(ds), ds.tree.leaf_labels, 5, 1);
  const std::vector<Task> tasks{Task::Reverse};
  // Correct on even sample ids only, so per-fold accuracy varies.
  const auto reports = kfold_eval_with(
      ds, plan, tasks, stub([](const Sample& x) { return std::stoi(x.id) % 3 == 0 ? (x.leaf + 1) % 4 : x.leaf; }, {}));
  const auto& r = reports[0];
  double sum = 0;
  for (std::size_t f = 0; f < r.folds.size(); ++f) {
    EXPECT_DOUBLE_EQ(r.fold_accuracy[f], r.folds[f].mean_diagonal());
    sum += r.fold_accuracy[f];
  }
  EXPECT_NEAR(r.mean, sum / 5.0, 1e-12);
  double ss = 0;
  for (double a : r.fold_accuracy) ss += (a - r.mean) * (a - r.mean);
  EXPECT_NEAR(r.stddev, std::sqrt(ss / 4.0), 1e-12);
  const std::string text = format_report(reports, 5);
  EXPECT_NE(text.find("reverse"), std::string::npos);
  EXPECT_NE(text.find("sample standard deviation"), std::string::npos);
}

TEST(KFold, TrainsRealModelsEndToEnd) {
  const Dataset ds = tiny_dataset(10);
  TrainConfig cfg;
  cfg.epochs = 1;
  const std::vector<Task> tasks{Task::Reverse, Task::Hierarchy};
  const auto reports = kfold_eval(ds, 2, tasks, cfg, 4);
  ASSERT_EQ(reports.size(), 2u);
  EXPECT_EQ(reports[1].task, Task::Hierarchy);
  for (const auto& r : reports) {
    EXPECT_GE(r.mean, 0.0);
    EXPECT_LE(r.mean, 1.0);
  }
  EXPECT_THROW(kfold_eval(ds, 11, tasks, cfg, 4), Error);
}

TEST(Localization, PerfectRecoveryUniformAndFullQ) {
  // 10x10 image, disc = everything, truth = top-left 2x2 block, 2x2 tiling.
  const RegionSet r = grid_regions(10, 10, 1, 2, 2);
  const Image disc(10, 10, 1, 1.0);
  Image truth(10, 10);
  for (std::size_t y = 0; y < 2; ++y)
    for (std::size_t x = 0; x < 2; ++x) truth.at(x, y) = 1.0;
  const double q = chance_level(truth, disc);
  EXPECT_DOUBLE_EQ(q, 0.04);

  std::vector<double> indicator(r.size(), 0.0);
  indicator[0] = 1.0;
  EXPECT_DOUBLE_EQ(localization_score(indicator, r, truth, disc, q), 1.0);
  EXPECT_NEAR(localization_score(std::vector<double>(r.size(), 0.7), r, truth, disc, q), q, 1e-12);
  EXPECT_NEAR(localization_score(indicator, r, truth, disc, 1.0), q, 1e-12);
  EXPECT_THROW(localization_score(indicator, r, Image(10, 10), disc, q), Error);
  EXPECT_THROW(localization_score(indicator, r, truth, disc, 0.0), Error);
}

TEST(Localization, UniformMaskIsChanceOnOverlappingGrid) {
  const Dataset ds = tiny_dataset(2);
  const Image disc = disc_mask(ds.spec);
  const RegionSet r = grid_regions(40, 40, 1, 11, 3);
  for (const auto& s : ds.samples) {
    const double q = chance_level(s.landmark, disc);
    EXPECT_GT(q, 0.0);
    EXPECT_NEAR(localization_score(std::vector<double>(r.size(), 0.5), r, s.landmark, disc, q), q, 1e-9);
  }
}

TEST(ExportHeatmap, RescaleAndConstant) {
  TempDir dir("heatmap");
  export_heatmap(std::vector<double>{-2, 0, 6, 1}, 2, 2, dir.path / "a.pgm");
  const Image a = read_pgm(dir.path / "a.pgm");
  EXPECT_EQ(a.width, 2u);
  EXPECT_EQ(a.height, 2u);
  EXPECT_EQ(a.pixels[0], 0.0);
  EXPECT_EQ(a.pixels[2], 1.0);
  export_heatmap(std::vector<double>(6, 3.3), 3, 2, dir.path / "c.pgm");
  for (double v : read_pgm(dir.path / "c.pgm").pixels) EXPECT_EQ(std::lround(v * 255), 128);
  EXPECT_THROW(export_heatmap(std::vector<double>{}, 0, 0, dir.path / "e.pgm"), Error);
  EXPECT_THROW(export_heatmap(std::vector<double>{1, 2}, 2, 1, dir.path / "missing" / "x.pgm"), Error);
}
