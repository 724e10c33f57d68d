#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include <json.hpp>

#include "coinmark/landmark.hpp"
#include "support.hpp"

using namespace coinmark;
using namespace coinmark::testing;

namespace {

// Two-class linear scorer on 6x6 images whose class-0 evidence sits in the
// top-left 3x3 block; the rest of the image is neutral.
Classifier block_scorer() {
  std::vector<double> w0(36, 0.0), w1(36, 0.0);
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t x = 0; x < 3; ++x) w0[y * 6 + x] = 1.5;
  return linear_scorer(6, 6, {w0, w1});
}

Image block_image() {
  Image img = random_image(6, 6, 3);
  for (auto& v : img.pixels) v = 0.3 + 0.4 * v;
  return img;
}

}  // namespace

TEST(DiscoveryConfig, Validation) {
  DiscoveryConfig c;
  EXPECT_NO_THROW(c.validate());
  for (auto bad : {0.0, -0.1, 1.5}) {
    DiscoveryConfig d;
    d.epsilon = bad;
    EXPECT_THROW(d.validate(), Error);
  }
  DiscoveryConfig d;
  d.lambda = -1;
  EXPECT_THROW(d.validate(), Error);
  d = {};
  d.step = 0;
  EXPECT_THROW(d.validate(), Error);
  d = {};
  d.max_iterations = 0;
  EXPECT_THROW(d.validate(), Error);
}

TEST(Objective, Terms) {
  const Classifier m = block_scorer();
  const Image img = block_image();
  const RegionSet r = grid_regions(6, 6, 1, 3, 3);
  const std::vector<double> zero(r.size(), 0.0), one(r.size(), 1.0);
  const auto o0 = objective(m, img, r, 0, zero, 1.0);
  EXPECT_EQ(o0.regularization, 0.0);
  EXPECT_NEAR(o0.loss, softmax_loss(m.scores(Image(6, 6)), 0), 1e-12);
  const auto o1 = objective(m, img, r, 0, one, 2.0);
  EXPECT_EQ(o1.regularization, 4.0);
  EXPECT_NEAR(o1.loss, softmax_loss(m.scores(img), 0), 1e-12);
  EXPECT_NEAR(o1.total, o1.loss + 8.0, 1e-12);
  EXPECT_EQ(objective(m, img, r, 0, one, 0.0).total, o1.loss);
}

TEST(Constraint, Examples) {
  EXPECT_TRUE(constraint_ok(0.0, 1.0, 0.999));
  EXPECT_TRUE(constraint_ok(1e-9, 1.0, 1.0));
  EXPECT_FALSE(constraint_ok(0.39, 0.5, 0.9));
  EXPECT_FALSE(constraint_ok(0.4, 0.5, 0.9));  // equality is a violation
  const Classifier m = block_scorer();
  const Image img = block_image();
  const RegionSet r = grid_regions(6, 6, 1, 3, 3);
  const double p0 = m.predict_proba(img)[0];
  for (double eps : {0.01, 0.5, 1.0}) {
    EXPECT_TRUE(constraint_ok(m, img, r, 0, std::vector<double>(r.size(), 1.0), eps, p0));
  }
}

TEST(Discover, MatchesSingleRegionScan) {
  const Classifier m = block_scorer();
  const RegionSet whole(36, {[] {
                          std::vector<std::size_t> all(36);
                          std::iota(all.begin(), all.end(), std::size_t{0});
                          return all;
                        }()});
  for (double eps : {0.05, 0.1, 0.2, 0.5, 1.0}) {
    for (double lambda : {0.3, 1.0}) {
      DiscoveryConfig cfg;
      cfg.epsilon = eps;
      cfg.lambda = lambda;
      const Image img = block_image();
      const auto res = discover(m, img, whole, 0, cfg);
      const double oracle = scan_single_region(m, img, 0, eps, lambda);
      EXPECT_NEAR(res.x_star[0], oracle, 0.02) << "eps " << eps << " lambda " << lambda;
    }
  }
}

TEST(Discover, InvariantsAndSparsity) {
  const Classifier m = block_scorer();
  const Image img = block_image();
  const RegionSet r = grid_regions(6, 6, 1, 3, 1);
  DiscoveryConfig cfg;
  cfg.epsilon = 0.2;
  const auto res = discover(m, img, r, 0, cfg);
  EXPECT_GT(res.p_final, res.p0 - cfg.epsilon);
  EXPECT_LT(res.l1(), static_cast<double>(r.size()));
  for (double v : res.x_star) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  ASSERT_EQ(res.trace.size(), res.iterations + 1);
  EXPECT_EQ(res.model_evaluations, res.iterations + 1);
  EXPECT_EQ(res.trace.front().l1, static_cast<double>(r.size()));
  EXPECT_EQ(res.masked, apply_mask(img, r, res.x_star));
  EXPECT_NEAR(res.p_final, m.predict_proba(res.masked)[0], 1e-12);
  // The evidence block's window keeps the most mass.
  EXPECT_EQ(std::max_element(res.x_star.begin(), res.x_star.end()) - res.x_star.begin(), 0);
}

TEST(Discover, VacuousEpsilonNeverBackprojects) {
  const Classifier m = block_scorer();
  DiscoveryConfig cfg;
  cfg.epsilon = 1.0;
  const auto res = discover(m, block_image(), grid_regions(6, 6, 1, 2, 2), 0, cfg);
  for (const auto& t : res.trace) EXPECT_EQ(t.mode, StepMode::Regularized);
}

TEST(Discover, TightEpsilonUsesBackprojection) {
  const Classifier m = block_scorer();
  DiscoveryConfig cfg;
  cfg.epsilon = 0.02;
  cfg.step = 0.5;
  const auto res = discover(m, block_image(), grid_regions(6, 6, 1, 2, 2), 0, cfg);
  const bool any = std::any_of(res.trace.begin(), res.trace.end(),
                               [](const TraceEntry& t) { return t.mode == StepMode::Backprojection; });
  EXPECT_TRUE(any);
  EXPECT_GT(res.p_final, res.p0 - cfg.epsilon);
}

TEST(Discover, BackprojectionBudgetErrorCarriesTrace) {
  const Classifier m = block_scorer();
  DiscoveryConfig cfg;
  cfg.epsilon = 0.02;
  cfg.step = 0.5;
  cfg.max_backprojection_steps = 1;
  cfg.lambda = 50;
  try {
    discover(m, block_image(), grid_regions(6, 6, 1, 2, 2), 0, cfg);
    FAIL() << "expected the budget to be exhausted";
  } catch (const DiscoveryError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ConstraintRestoreFailed);
    EXPECT_GE(e.trace().size(), 2u);
  }
}

TEST(Discover, HonorsIterationCap) {
  const Classifier m = block_scorer();
  DiscoveryConfig cfg;
  cfg.max_iterations = 3;
  cfg.tolerance = 1e-12;
  const auto res = discover(m, block_image(), grid_regions(6, 6, 1, 2, 2), 0, cfg);
  EXPECT_EQ(res.iterations, 3u);
  EXPECT_FALSE(res.converged);
}

TEST(LandmarkReport, StructuredFields) {
  const Classifier m = block_scorer();
  DiscoveryConfig cfg;
  const RegionSet r = grid_regions(6, 6, 1, 3, 3);
  const auto res = discover(m, block_image(), r, 0, cfg);
  const auto j = nlohmann::json::parse(landmark_report(res, cfg, 0, r));
  EXPECT_EQ(j.at("config").at("epsilon").get<double>(), 0.5);
  EXPECT_EQ(j.at("p0").get<double>(), res.p0);
  EXPECT_EQ(j.at("iterations").get<std::size_t>(), res.iterations);
  EXPECT_EQ(j.at("trace").size(), res.trace.size());
  EXPECT_EQ(j.at("x_star").size(), r.size());
}
