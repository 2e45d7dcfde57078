#include "realface/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "realface/error.hpp"
#include "realface/rng.hpp"

namespace realface {

Interval BoundBox::default_interval(std::string_view mode_name) {
  if (mode_name == "facial_hair") return {-0.50, 0.45};
  if (mode_name == "marks") return {-0.60, 0.50};
  if (mode_name == "expression") return {-0.40, 0.40};
  return {-0.50, 0.50};
}

BoundBox BoundBox::defaults_for(const SemanticBasis& basis) {
  BoundBox box;
  for (const auto& mode : basis.modes) {
    for (Eigen::Index k = 0; k < mode.columns.width(); ++k) box.semantic.push_back(default_interval(mode.name));
  }
  return box;
}

ParamVector BoundBox::center() const {
  ParamVector p;
  p.semantic.resize(static_cast<Eigen::Index>(semantic.size()));
  for (std::size_t i = 0; i < semantic.size(); ++i) p.semantic[static_cast<Eigen::Index>(i)] = semantic[i].mid();
  p.g = g.mid();
  return p;
}

ParamVector BoundBox::clamp(const ParamVector& p) const {
  if (static_cast<std::size_t>(p.semantic.size()) != semantic.size()) throw ShapeError("parameter width mismatch");
  ParamVector out = p;
  for (std::size_t i = 0; i < semantic.size(); ++i) {
    auto& v = out.semantic[static_cast<Eigen::Index>(i)];
    v = std::clamp(v, semantic[i].lo, semantic[i].hi);
  }
  out.g = std::clamp(out.g, g.lo, g.hi);
  return out;
}

double bound_violation(const ParamVector& p, const BoundBox& box) {
  if (static_cast<std::size_t>(p.semantic.size()) != box.semantic.size()) {
    throw ShapeError("parameter width " + std::to_string(p.semantic.size()) + " != box width " +
                     std::to_string(box.semantic.size()));
  }
  double worst = std::max(box.g.lo - p.g, p.g - box.g.hi);
  for (std::size_t i = 0; i < box.semantic.size(); ++i) {
    const double v = p.semantic[static_cast<Eigen::Index>(i)];
    worst = std::max({worst, box.semantic[i].lo - v, v - box.semantic[i].hi});
  }
  return worst;
}

FaceVector synthesize(const SemanticBasis& basis, const ParamVector& p, const Eigen::VectorXd& residual,
                      const OverlayAsset* glasses) {
  if (p.semantic.size() != basis.semantic_width()) throw ShapeError("semantic parameter width mismatch");
  if (residual.size() != basis.residual_width()) {
    throw ShapeError("residual width " + std::to_string(residual.size()) + " != basis residual width " +
                     std::to_string(basis.residual_width()));
  }
  Eigen::VectorXd coords(basis.rank());
  coords << p.semantic, residual;
  FaceVector face = reconstruct(basis, coords);
  face.data = face.data.cwiseMax(0.0).cwiseMin(1.0);

  if (p.g > 0.0) {
    if (glasses == nullptr) throw MissingAsset("g > 0 but no eyeglass overlay is loaded");
    if (glasses->value.size() != face.size() || glasses->alpha.size() != face.size()) {
      throw ShapeError("overlay size does not match face size");
    }
    const double strength = std::min(1.0, p.g / glasses->full_strength_g);
    const Eigen::ArrayXd a = strength * glasses->alpha.array();
    face.data = ((1.0 - a) * face.data.array() + a * glasses->value.array()).matrix();
  }
  return face;
}

std::pair<ParamVector, Eigen::VectorXd> params_from_victim(const SemanticBasis& basis, const FaceVector& attacker,
                                                           const FaceVector& victim, const BoundBox& box) {
  if (attacker.size() != victim.size()) throw ShapeError("attacker and victim dimensions differ");
  const DecomposedFace v = decompose(basis, victim);
  const DecomposedFace a = decompose(basis, attacker);
  ParamVector p{v.semantic(), 0.0};
  return {box.clamp(p), a.residual()};
}

ParamVector random_params(std::uint64_t seed, const BoundBox& box) {
  Rng rng(seed);
  ParamVector p;
  p.semantic.resize(static_cast<Eigen::Index>(box.semantic.size()));
  // Half-open [lo, hi); redraw the endpoint to keep draws strictly inside.
  const auto draw = [&rng](const Interval& iv) {
    std::uniform_real_distribution<double> u(iv.lo, iv.hi);
    double v = u(rng);
    while (!(v > iv.lo && v < iv.hi)) v = u(rng);
    return v;
  };
  for (std::size_t i = 0; i < box.semantic.size(); ++i) p.semantic[static_cast<Eigen::Index>(i)] = draw(box.semantic[i]);
  p.g = draw(box.g);
  return p;
}

OverlayAsset extract_overlay(const Eigen::VectorXd& with_mean, const Eigen::VectorXd& without_mean, int width,
                             int height, double threshold) {
  if (with_mean.size() != without_mean.size()) throw ShapeError("overlay halves differ in dimension");
  OverlayAsset asset;
  asset.width = width;
  asset.height = height;
  asset.value = with_mean.cwiseMax(0.0).cwiseMin(1.0);
  asset.alpha = ((with_mean - without_mean).cwiseAbs().array() > threshold).cast<double>().matrix();
  return asset;
}

Eigen::VectorXd flatten(const ParamVector& p, bool with_g) {
  Eigen::VectorXd flat(p.semantic.size() + (with_g ? 1 : 0));
  flat.head(p.semantic.size()) = p.semantic;
  if (with_g) flat[p.semantic.size()] = p.g;
  return flat;
}

ParamVector unflatten(const Eigen::VectorXd& flat, Eigen::Index semantic_width, bool with_g) {
  if (flat.size() != semantic_width + (with_g ? 1 : 0)) throw ShapeError("flat parameter vector has wrong length");
  return ParamVector{flat.head(semantic_width), with_g ? flat[semantic_width] : 0.0};
}

Eigen::VectorXd lower_bounds(const BoundBox& box, bool with_g) {
  ParamVector p;
  p.semantic.resize(static_cast<Eigen::Index>(box.semantic.size()));
  for (std::size_t i = 0; i < box.semantic.size(); ++i) p.semantic[static_cast<Eigen::Index>(i)] = box.semantic[i].lo;
  p.g = box.g.lo;
  return flatten(p, with_g);
}

Eigen::VectorXd upper_bounds(const BoundBox& box, bool with_g) {
  ParamVector p;
  p.semantic.resize(static_cast<Eigen::Index>(box.semantic.size()));
  for (std::size_t i = 0; i < box.semantic.size(); ++i) p.semantic[static_cast<Eigen::Index>(i)] = box.semantic[i].hi;
  p.g = box.g.hi;
  return flatten(p, with_g);
}

Synthesizer::Synthesizer(const SemanticBasis& basis, Eigen::VectorXd residual, std::optional<OverlayAsset> glasses)
    : basis_(&basis), residual_(std::move(residual)), glasses_(std::move(glasses)) {
  if (residual_.size() != basis.residual_width()) throw ShapeError("residual width does not match basis");
  if (glasses_ && glasses_->value.size() != basis.dimension()) throw ShapeError("overlay size does not match basis");
}

}  // namespace realface
