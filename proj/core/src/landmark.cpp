#include "coinmark/landmark.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

namespace coinmark {

void DiscoveryConfig::validate() const {
  require(epsilon > 0.0 && epsilon <= 1.0, "epsilon must be in (0, 1]");
  require(lambda >= 0.0 && std::isfinite(lambda), "lambda must be non-negative");
  require(step > 0.0 && std::isfinite(step), "step size must be positive");
  require(max_iterations >= 1, "max iterations must be at least 1");
  require(tolerance >= 0.0, "tolerance must be non-negative");
  require(max_backprojection_steps >= 1, "backprojection budget must be at least 1");
}

const char* to_string(StepMode mode) {
  return mode == StepMode::Regularized ? "regularized" : "backprojection";
}

double LandmarkResult::l1() const { return std::accumulate(x_star.begin(), x_star.end(), 0.0); }

ObjectiveValue objective(const Classifier& model, const Image& image, const RegionSet& regions,
                         std::size_t c, std::span<const double> x, double lambda) {
  require(c < model.class_count(), "class index out of range");
  ObjectiveValue v;
  v.loss = softmax_loss(model.scores(apply_mask(image, regions, x)), c);
  v.regularization = std::accumulate(x.begin(), x.end(), 0.0);
  v.total = v.loss + lambda * v.regularization;
  return v;
}

bool constraint_ok(double probability, double epsilon, double p0) {
  return probability > p0 - epsilon;
}

bool constraint_ok(const Classifier& model, const Image& image, const RegionSet& regions,
                   std::size_t c, std::span<const double> x, double epsilon, double p0) {
  require(c < model.class_count(), "class index out of range");
  return constraint_ok(model.predict_proba(apply_mask(image, regions, x))[c], epsilon, p0);
}

LandmarkResult discover(const Classifier& model, const Image& image, const RegionSet& regions,
                        std::size_t c, const DiscoveryConfig& config) {
  config.validate();
  require(c < model.class_count(), "class index out of range");
  const std::size_t K = regions.size();
  const bool constrained = config.epsilon < 1.0;

  std::vector<double> x(K, 1.0);
  Image masked = apply_mask(image, regions, x);
  auto eval = model.evaluate(masked, c);

  LandmarkResult result;
  result.p0 = eval.probabilities[c];
  result.model_evaluations = 1;
  double loss = eval.loss;
  double l1 = static_cast<double>(K);
  double prev_objective = loss + config.lambda * l1;
  result.trace.push_back({loss, result.p0, l1, StepMode::Regularized});

  std::vector<double> best_x = x;
  double best_p = result.p0;
  Image best_masked = masked;

  double eta = config.step;
  StepMode mode = StepMode::Regularized;
  std::size_t backprojection_run = 0;

  for (std::size_t it = 1; it <= config.max_iterations; ++it) {
    auto grad = mask_gradient(image, regions, eval.loss_gradient);
    const StepMode step_mode = mode;
    double delta = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      // On the box x >= 0 the L1 subgradient is 1 everywhere; at x_k = 0 the
      // projection makes the choice immaterial.
      const double g = grad[k] + (step_mode == StepMode::Regularized ? config.lambda : 0.0);
      const double next = std::clamp(x[k] - eta * g, 0.0, 1.0);
      delta = std::max(delta, std::abs(next - x[k]));
      x[k] = next;
    }

    masked = apply_mask(image, regions, x);
    eval = model.evaluate(masked, c);
    ++result.model_evaluations;
    result.iterations = it;
    const double p = eval.probabilities[c];
    loss = eval.loss;
    l1 = std::accumulate(x.begin(), x.end(), 0.0);
    const double obj = loss + config.lambda * l1;
    result.trace.push_back({loss, p, l1, step_mode});
    const bool feasible = !constrained || constraint_ok(p, config.epsilon, result.p0);

    if (step_mode == StepMode::Regularized) {
      if (!feasible) {
        mode = StepMode::Backprojection;
        backprojection_run = 0;
        eta *= 0.5;
      } else if (obj > prev_objective) {
        eta *= 0.5;
      }
    } else {
      ++backprojection_run;
      if (feasible) {
        mode = StepMode::Regularized;
      } else if (backprojection_run >= config.max_backprojection_steps) {
        throw DiscoveryError("loss-only steps did not restore p(c) > p0 - epsilon within " +
                                 std::to_string(config.max_backprojection_steps) +
                                 " steps; reduce the step size or relax epsilon",
                             result.trace);
      }
    }
    prev_objective = obj;

    if (feasible) {
      best_x = x;
      best_p = p;
      best_masked = masked;
      if (delta < config.tolerance) {
        result.converged = true;
        break;
      }
    }
  }

  result.x_star = std::move(best_x);
  result.p_final = best_p;
  result.masked = std::move(best_masked);
  return result;
}

std::string landmark_report(const LandmarkResult& result, const DiscoveryConfig& config,
                            std::size_t c, const RegionSet& regions) {
  nlohmann::ordered_json j;
  j["class_index"] = c;
  j["config"] = {{"epsilon", config.epsilon},
                 {"lambda", config.lambda},
                 {"step", config.step},
                 {"max_iterations", config.max_iterations},
                 {"tolerance", config.tolerance},
                 {"max_backprojection_steps", config.max_backprojection_steps}};
  j["regions"] = nlohmann::json::parse(serialize_regions(regions));
  j["p0"] = result.p0;
  j["p_final"] = result.p_final;
  j["iterations"] = result.iterations;
  j["converged"] = result.converged;
  j["model_evaluations"] = result.model_evaluations;
  j["l1"] = result.l1();
  j["x_star"] = result.x_star;
  auto& trace = j["trace"] = nlohmann::ordered_json::array();
  for (const auto& t : result.trace) {
    trace.push_back({{"loss", t.loss}, {"p", t.probability}, {"l1", t.l1}, {"mode", to_string(t.mode)}});
  }
  return j.dump(2) + "\n";
}

}  // namespace coinmark
