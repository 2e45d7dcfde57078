#include "realface/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "realface/error.hpp"
#include "realface/format.hpp"

namespace realface {

void OptimizerConfig::validate(Eigen::Index dimension) const {
  if (!(reflection > 0 && expansion > 0 && contraction > 0 && shrink > 0)) {
    throw SpecError("Nelder-Mead coefficients must be positive");
  }
  if (max_evals < static_cast<std::size_t>(dimension) + 2) throw SpecError("max_evals must be at least k + 2");
  if (!(initial_step > 0)) throw SpecError("initial simplex step must be positive");
}

OptimizerConfig disable_bounds(OptimizerConfig cfg) {
  cfg.enforce_bounds = false;
  return cfg;
}

double Box::violation(const Eigen::VectorXd& p) const {
  if (p.size() != size()) throw ShapeError("box dimension mismatch");
  return std::max((lower - p).maxCoeff(), (p - upper).maxCoeff());
}

double Objective::operator()(const Eigen::VectorXd& p) {
  if (p.size() != dimension_) throw ShapeError("objective evaluated at a point of the wrong dimension");
  ++evaluations_;
  const double v = fn_(p);
  if (std::isnan(v)) {
    ++nan_count_;
    return std::numeric_limits<double>::infinity();
  }
  return v;
}

std::string_view to_string(StopReason reason) {
  switch (reason) {
    case StopReason::converged: return "converged";
    case StopReason::max_evals: return "max_evals";
    case StopReason::stop_rule: return "stop_rule";
  }
  return "unknown";
}

namespace {

struct Halt {
  StopReason reason;
};

class Runner {
 public:
  Runner(Objective& objective, const Box& bounds, const OptimizerConfig& cfg, const StopRule& stop)
      : objective_(objective), bounds_(bounds), cfg_(cfg), stop_(stop) {}

  Eigen::VectorXd prepare(const Eigen::VectorXd& p) const { return cfg_.enforce_bounds ? bounds_.clip(p) : p; }

  double evaluate(const Eigen::VectorXd& p) {
    if (trace.size() >= cfg_.max_evals) throw Halt{StopReason::max_evals};
    const double value = objective_(p);
    trace.push_back(TraceEntry{trace.size(), p, value, bounds_.violation(p)});
    if (stop_ && stop_(trace.back())) throw Halt{StopReason::stop_rule};
    return value;
  }

  std::vector<TraceEntry> trace;

 private:
  Objective& objective_;
  const Box& bounds_;
  const OptimizerConfig& cfg_;
  const StopRule& stop_;
};

}  // namespace

MinimizeResult minimize(Objective& objective, const Eigen::VectorXd& p0, const Box& bounds,
                        const OptimizerConfig& cfg, const StopRule& stop) {
  const Eigen::Index k = p0.size();
  if (k == 0) throw ShapeError("cannot minimise over a zero-dimensional parameter vector");
  if (bounds.size() != k) throw ShapeError("bounds dimension does not match p0");
  if (objective.dimension() != k) throw ShapeError("objective dimension does not match p0");
  cfg.validate(k);

  MinimizeResult result;
  Runner run(objective, bounds, cfg, stop);
  Eigen::VectorXd start = p0;
  if (cfg.enforce_bounds && bounds.violation(p0) > 0) {
    start = bounds.clip(p0);
    result.p0_clamped = true;
  }

  // The simplex moves only the coordinates listed in `free`; the others stay
  // pinned at the value they hold in every vertex.
  std::vector<Eigen::Index> free(static_cast<std::size_t>(k));
  std::iota(free.begin(), free.end(), Eigen::Index{0});
  std::vector<Eigen::VectorXd> simplex;
  std::vector<double> values;

  // Fresh simplex around `center`: one step per free coordinate, flipped when
  // clipping would fold the vertex back onto the center.
  const auto rebuild = [&](Eigen::VectorXd center, double center_value, double step, bool evaluated) {
    simplex.assign(1, center);  // center is a copy: it may alias a vertex
    values.assign(1, evaluated ? center_value : run.evaluate(center));
    for (const Eigen::Index i : free) {
      Eigen::VectorXd v = center;
      v[i] += step;
      v = run.prepare(v);
      if (v[i] == center[i]) {
        v[i] = center[i] - step;
        v = run.prepare(v);
      }
      values.push_back(run.evaluate(v));
      simplex.push_back(std::move(v));
    }
  };

  try {
    rebuild(start, 0.0, cfg.initial_step, false);
    double verified_best = std::numeric_limits<double>::infinity();
    double reseeded_best = std::numeric_limits<double>::infinity();

    std::vector<std::size_t> order;
    for (;;) {
      const std::size_t n_vertices = simplex.size();
      order.resize(n_vertices);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
      std::vector<Eigen::VectorXd> sorted_simplex;
      std::vector<double> sorted_values;
      for (const auto idx : order) {
        sorted_simplex.push_back(simplex[idx]);
        sorted_values.push_back(values[idx]);
      }
      simplex = std::move(sorted_simplex);
      values = std::move(sorted_values);

      double diameter = 0.0;
      double spread = 0.0;
      for (std::size_t i = 1; i < n_vertices; ++i) {
        diameter = std::max(diameter, (simplex[i] - simplex[0]).cwiseAbs().maxCoeff());
        spread = std::max(spread, std::abs(values[i] - values[0]));
      }
      if (diameter <= cfg.x_tol && spread <= cfg.f_tol) {
        // A clipped simplex can fold onto a face of the box and stall there.
        // Re-seed around the claimed minimum with every coordinate free; stop
        // once that yields nothing.
        if (!(values[0] < verified_best - cfg.f_tol)) throw Halt{StopReason::converged};
        verified_best = values[0];
        free.resize(static_cast<std::size_t>(k));
        std::iota(free.begin(), free.end(), Eigen::Index{0});
        rebuild(simplex[0], values[0], cfg.initial_step, true);
        continue;
      }

      // Vertices sharing a coordinate never leave it again (every move is
      // affine in the vertices), and clipping makes that common. Re-seed once
      // per improvement; when that no longer pays off the bound is treated
      // as active and the coordinate is pinned.
      if (free.size() > 1 && diameter > cfg.x_tol) {
        std::vector<Eigen::Index> still_free;
        for (const Eigen::Index i : free) {
          const bool lost = std::all_of(simplex.begin() + 1, simplex.end(),
                                        [&](const Eigen::VectorXd& v) { return v[i] == simplex[0][i]; });
          if (!lost) still_free.push_back(i);
        }
        if (still_free.size() < free.size()) {
          if (values[0] < reseeded_best - cfg.f_tol) {
            reseeded_best = values[0];
          } else {
            free = std::move(still_free);
          }
          rebuild(simplex[0], values[0], diameter, true);
          continue;
        }
      }
      ++result.iterations;

      const std::size_t worst = n_vertices - 1;
      Eigen::VectorXd centroid = Eigen::VectorXd::Zero(k);
      for (std::size_t i = 0; i < worst; ++i) centroid += simplex[i];
      centroid /= static_cast<double>(worst);

      const Eigen::VectorXd toward = centroid - simplex[worst];
      // Clipping can map a move onto a point the simplex already holds;
      // accepting it would drop a dimension, so such moves count as failed.
      const auto folds = [&](const Eigen::VectorXd& v) {
        return std::any_of(simplex.begin(), simplex.end(), [&](const Eigen::VectorXd& s) { return s == v; });
      };

      bool contract_inside = false;
      bool do_shrink = false;
      const Eigen::VectorXd reflected = run.prepare(centroid + cfg.reflection * toward);
      if (folds(reflected)) {
        contract_inside = true;
      } else {
        const double f_reflected = run.evaluate(reflected);
        if (f_reflected < values[0]) {
          const Eigen::VectorXd expanded = run.prepare(centroid + cfg.reflection * cfg.expansion * toward);
          const double f_expanded =
              (expanded == reflected || folds(expanded)) ? std::numeric_limits<double>::infinity() : run.evaluate(expanded);
          if (f_expanded < f_reflected) {
            simplex[worst] = expanded;
            values[worst] = f_expanded;
          } else {
            simplex[worst] = reflected;
            values[worst] = f_reflected;
          }
        } else if (f_reflected < values[worst - 1]) {
          simplex[worst] = reflected;
          values[worst] = f_reflected;
        } else if (f_reflected < values[worst]) {
          const Eigen::VectorXd outside = run.prepare(centroid + cfg.contraction * cfg.reflection * toward);
          if (folds(outside)) {
            contract_inside = true;
          } else {
            const double f_outside = run.evaluate(outside);
            if (f_outside <= f_reflected) {
              simplex[worst] = outside;
              values[worst] = f_outside;
            } else {
              do_shrink = true;
            }
          }
        } else {
          contract_inside = true;
        }
      }

      if (contract_inside) {
        const Eigen::VectorXd inside = run.prepare(centroid - cfg.contraction * toward);
        const double f_inside = run.evaluate(inside);
        if (f_inside < values[worst]) {
          simplex[worst] = inside;
          values[worst] = f_inside;
        } else {
          do_shrink = true;
        }
      }

      if (do_shrink) {
        for (std::size_t i = 1; i < n_vertices; ++i) {
          simplex[i] = run.prepare(simplex[0] + cfg.shrink * (simplex[i] - simplex[0]));
          values[i] = run.evaluate(simplex[i]);
        }
      }
    }
  } catch (const Halt& halt) {
    result.reason = halt.reason;
  }

  result.trace = std::move(run.trace);
  std::size_t best = 0;
  for (std::size_t i = 1; i < result.trace.size(); ++i) {
    if (result.trace[i].value < result.trace[best].value) best = i;
  }
  result.p_min = result.trace[best].p;
  result.f_min = result.trace[best].value;
  return result;
}

void write_trace_csv(std::ostream& out, const std::vector<TraceEntry>& trace) {
  const Eigen::Index k = trace.empty() ? 0 : trace.front().p.size();
  out << "eval_index,value";
  for (Eigen::Index i = 0; i < k; ++i) out << ",p_" << i;
  out << ",violation\n";
  for (const auto& e : trace) {
    out << e.eval_index << ',' << format_double(e.value);
    for (Eigen::Index i = 0; i < e.p.size(); ++i) out << ',' << format_double(e.p[i]);
    out << ',' << format_double(e.violation) << '\n';
  }
}

}  // namespace realface
