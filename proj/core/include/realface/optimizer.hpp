#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace realface {

/// Nelder-Mead settings. Coefficients follow the usual reflection /
/// expansion / contraction / shrink convention.
struct OptimizerConfig {
  double reflection = 1.0;
  double expansion = 2.0;
  double contraction = 0.5;
  double shrink = 0.5;
  std::size_t max_evals = 400;
  double x_tol = 1e-4;
  double f_tol = 1e-6;
  double initial_step = 0.05;
  bool enforce_bounds = true;

  void validate(Eigen::Index dimension) const;
};

/// Same settings with box clipping switched off; violations are still traced.
OptimizerConfig disable_bounds(OptimizerConfig cfg);

struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Eigen::Index size() const noexcept { return lower.size(); }
  Eigen::VectorXd clip(const Eigen::VectorXd& p) const { return p.cwiseMax(lower).cwiseMin(upper); }
  /// max over coordinates of max(lower - p, p - upper).
  double violation(const Eigen::VectorXd& p) const;
};

/// Counted black-box objective. NaN results are mapped to +inf.
class Objective {
 public:
  using Fn = std::function<double(const Eigen::VectorXd&)>;

  Objective(Fn fn, Eigen::Index dimension) : fn_(std::move(fn)), dimension_(dimension) {}

  double operator()(const Eigen::VectorXd& p);

  Eigen::Index dimension() const noexcept { return dimension_; }
  std::size_t evaluations() const noexcept { return evaluations_; }
  std::size_t nan_count() const noexcept { return nan_count_; }

 private:
  Fn fn_;
  Eigen::Index dimension_;
  std::size_t evaluations_ = 0;
  std::size_t nan_count_ = 0;
};

struct TraceEntry {
  std::size_t eval_index = 0;
  Eigen::VectorXd p;
  double value = 0.0;
  double violation = 0.0;
};

enum class StopReason { converged, max_evals, stop_rule };
std::string_view to_string(StopReason reason);

struct MinimizeResult {
  Eigen::VectorXd p_min;
  double f_min = 0.0;
  std::vector<TraceEntry> trace;
  std::size_t iterations = 0;
  StopReason reason = StopReason::converged;
  /// p0 lay outside the box and was clipped before the first evaluation.
  bool p0_clamped = false;
};

/// Called after every evaluation; returning true ends the run early.
using StopRule = std::function<bool(const TraceEntry&)>;

/// Bounded Nelder-Mead. Every candidate is clipped into `bounds` before it is
/// evaluated (unless bounds are disabled). Stops when the simplex diameter is
/// below x_tol and the value spread below f_tol, when max_evals is reached, or
/// when `stop` fires. Returns the best vertex seen.
MinimizeResult minimize(Objective& objective, const Eigen::VectorXd& p0, const Box& bounds,
                        const OptimizerConfig& cfg, const StopRule& stop = {});

/// CSV: eval_index,value,p_0..p_k,violation
void write_trace_csv(std::ostream& out, const std::vector<TraceEntry>& trace);

}  // namespace realface
