#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "coinmark/classifier.hpp"
#include "coinmark/error.hpp"
#include "coinmark/regions.hpp"

namespace coinmark {

struct DiscoveryConfig {
  /// Allowed drop of p(c) below its full-image value, in (0, 1].
  double epsilon = 0.5;
  /// Weight of the L1 term.
  double lambda = 1.0;
  /// Initial step size; halved when a regularized step raises the objective
  /// or breaks the confidence constraint.
  double step = 0.05;
  std::size_t max_iterations = 200;
  /// Stop once a feasible step moves no coordinate by this much.
  double tolerance = 1e-3;
  /// Consecutive loss-only steps allowed before giving up.
  std::size_t max_backprojection_steps = 50;

  void validate() const;
};

enum class StepMode { Regularized, Backprojection };

const char* to_string(StepMode mode);

struct TraceEntry {
  double loss = 0.0;
  double probability = 0.0;
  double l1 = 0.0;
  /// The kind of step that produced this iterate.
  StepMode mode = StepMode::Regularized;
};

struct LandmarkResult {
  std::vector<double> x_star;
  double p0 = 0.0;
  double p_final = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  /// Forward+backward passes spent, including the one at the full image.
  std::size_t model_evaluations = 0;
  /// Iterate 0 is the all-ones start.
  std::vector<TraceEntry> trace;
  Image masked;

  double l1() const;
};

struct ObjectiveValue {
  double total = 0.0;
  double loss = 0.0;
  double regularization = 0.0;
};

/// loss_c(f_I(x)) + lambda * |x|_1, with |x|_1 = sum(x) on the nonnegative box.
ObjectiveValue objective(const Classifier& model, const Image& image, const RegionSet& regions,
                         std::size_t c, std::span<const double> x, double lambda);

/// True iff p(c | f_I(x)) > p0 - epsilon (strict).
bool constraint_ok(const Classifier& model, const Image& image, const RegionSet& regions,
                   std::size_t c, std::span<const double> x, double epsilon, double p0);
bool constraint_ok(double probability, double epsilon, double p0);

/// Raised when loss-only steps cannot restore the constraint within budget.
/// Carries the trace up to the failure.
class DiscoveryError : public Error {
 public:
  DiscoveryError(const std::string& message, std::vector<TraceEntry> trace)
      : Error(ErrorKind::ConstraintRestoreFailed, message), trace_(std::move(trace)) {}
  const std::vector<TraceEntry>& trace() const { return trace_; }

 private:
  std::vector<TraceEntry> trace_;
};

/// Projected subgradient descent with backprojection, starting from x = 1.
/// Returns the last iterate that satisfies the confidence constraint.
LandmarkResult discover(const Classifier& model, const Image& image, const RegionSet& regions,
                        std::size_t c, const DiscoveryConfig& config);

/// Structured-text (JSON) report of a discovery run.
std::string landmark_report(const LandmarkResult& result, const DiscoveryConfig& config,
                            std::size_t c, const RegionSet& regions);

}  // namespace coinmark
