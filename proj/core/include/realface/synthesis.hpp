#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "realface/corpus.hpp"
#include "realface/subspace.hpp"

namespace realface {

/// Attacker-controllable parameters: one entry per semantic direction plus
/// the eyeglass control `g`.
struct ParamVector {
  Eigen::VectorXd semantic;
  double g = 0.0;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double mid() const noexcept { return 0.5 * (lo + hi); }
};

struct BoundBox {
  std::vector<Interval> semantic;
  Interval g{-0.20, 0.20};

  /// Default realism box keyed by mode name: facial_hair (-0.50, 0.45),
  /// marks (-0.60, 0.50), expression (-0.40, 0.40), anything else
  /// (-0.50, 0.50); g in (-0.20, 0.20).
  static BoundBox defaults_for(const SemanticBasis& basis);
  static Interval default_interval(std::string_view mode_name);

  ParamVector center() const;
  ParamVector clamp(const ParamVector& p) const;
};

/// Eyeglass overlay registered to the aligned face frame.
struct OverlayAsset {
  Eigen::VectorXd value;
  Eigen::VectorXd alpha;
  int width = 0;
  int height = 0;
  /// g at which the overlay reaches full strength.
  double full_strength_g = 0.20;
};

/// max over entries of max(lo - v, v - hi): <= 0 exactly when inside the box.
double bound_violation(const ParamVector& p, const BoundBox& box);

/// reconstruct([p.semantic ; residual]) clamped to [0,1], then alpha-blended
/// with the overlay at strength clamp(g, 0, g_full) / g_full when g > 0.
FaceVector synthesize(const SemanticBasis& basis, const ParamVector& p, const Eigen::VectorXd& residual,
                      const OverlayAsset* glasses);

/// Victim's semantic coordinates clamped into `box` with g = 0, paired with
/// the attacker's own residual.
std::pair<ParamVector, Eigen::VectorXd> params_from_victim(const SemanticBasis& basis, const FaceVector& attacker,
                                                           const FaceVector& victim, const BoundBox& box);

/// Uniform draw inside the box, deterministic per seed.
ParamVector random_params(std::uint64_t seed, const BoundBox& box);

/// Overlay from the mean faces with and without glasses: alpha is 1 where
/// the mean difference exceeds `threshold` in magnitude, value is the
/// with-glasses mean.
OverlayAsset extract_overlay(const Eigen::VectorXd& with_mean, const Eigen::VectorXd& without_mean, int width,
                             int height, double threshold = 0.05);

/// Flat layout used by the optimizer: semantic entries, then g when enabled.
Eigen::VectorXd flatten(const ParamVector& p, bool with_g);
ParamVector unflatten(const Eigen::VectorXd& flat, Eigen::Index semantic_width, bool with_g);
Eigen::VectorXd lower_bounds(const BoundBox& box, bool with_g);
Eigen::VectorXd upper_bounds(const BoundBox& box, bool with_g);

/// 𝒮(p) for one attacker: fixed basis, residual and optional overlay.
class Synthesizer {
 public:
  Synthesizer(const SemanticBasis& basis, Eigen::VectorXd residual, std::optional<OverlayAsset> glasses = {});

  FaceVector operator()(const ParamVector& p) const { return synthesize(*basis_, p, residual_, glasses()); }

  const SemanticBasis& basis() const noexcept { return *basis_; }
  const Eigen::VectorXd& residual() const noexcept { return residual_; }
  const OverlayAsset* glasses() const noexcept { return glasses_ ? &*glasses_ : nullptr; }
  bool controls_glasses() const noexcept { return glasses_.has_value(); }
  Eigen::Index parameter_count() const noexcept { return basis_->semantic_width() + (controls_glasses() ? 1 : 0); }

 private:
  const SemanticBasis* basis_;
  Eigen::VectorXd residual_;
  std::optional<OverlayAsset> glasses_;
};

}  // namespace realface
