#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "realface/corpus.hpp"

namespace realface {

/// Half-open column range [begin, end).
struct ColumnRange {
  Eigen::Index begin = 0;
  Eigen::Index end = 0;
  Eigen::Index width() const noexcept { return end - begin; }
  friend bool operator==(const ColumnRange&, const ColumnRange&) = default;
};

/// Whitening PCA of a training corpus.
///
/// `whitening` is d x r and maps a centred face to unit-variance principal
/// coordinates (z = whitening^T (x - mean)); `dewhitening` is d x r and maps
/// them back (x - mean ~= dewhitening z). r is n - 1 unless directions with
/// variance below 1e-12 of the largest were dropped.
struct WhiteningModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd whitening;
  Eigen::MatrixXd dewhitening;
  Eigen::VectorXd variances;
  Eigen::Index nominal_rank = 0;
  int width = 0;
  int height = 0;

  Eigen::Index rank() const noexcept { return whitening.cols(); }
  Eigen::Index dimension() const noexcept { return mean.size(); }
  bool rank_reduced() const noexcept { return rank() < nominal_rank; }

  Eigen::VectorXd whiten(const Eigen::VectorXd& x) const;
  Eigen::VectorXd dewhiten(const Eigen::VectorXd& z) const;
};

struct ModeSlice {
  std::string name;
  std::vector<std::string> labels;
  ColumnRange columns;
  /// Mean position of each label inside this slice, in label order.
  std::vector<Eigen::VectorXd> label_coords;
};

/// Orthogonal basis of whitened space partitioned into one discriminant
/// slice per mode (in declared order) followed by the residual slice that
/// carries identity.
struct SemanticBasis {
  WhiteningModel whitening;
  Eigen::MatrixXd axes;  // r x r, orthogonal
  std::vector<ModeSlice> modes;
  ColumnRange residual;

  Eigen::Index rank() const noexcept { return axes.cols(); }
  Eigen::Index semantic_width() const noexcept { return residual.begin; }
  Eigen::Index residual_width() const noexcept { return residual.width(); }
  Eigen::Index dimension() const noexcept { return whitening.dimension(); }
  const ModeSlice* find_mode(std::string_view name) const;
};

/// Coordinates of one face in the semantic basis: semantic entries first,
/// then the residual.
struct DecomposedFace {
  Eigen::VectorXd coords;
  Eigen::Index semantic_width = 0;

  auto semantic() const { return coords.head(semantic_width); }
  auto residual() const { return coords.tail(coords.size() - semantic_width); }
};

WhiteningModel fit_whitening(const TrainingCorpus& corpus);

/// Per mode: top (L_m - 1) eigenvectors of the between-class scatter of the
/// label means in whitened space, then sequential Gram-Schmidt across modes
/// and an orthonormal completion for the residual.
SemanticBasis fit_mmda(const TrainingCorpus& corpus, const WhiteningModel& whitening);

DecomposedFace decompose(const SemanticBasis& basis, const FaceVector& face);
DecomposedFace decompose(const SemanticBasis& basis, const Eigen::VectorXd& face);

FaceVector reconstruct(const SemanticBasis& basis, const DecomposedFace& face);
FaceVector reconstruct(const SemanticBasis& basis, const Eigen::VectorXd& coords);

}  // namespace realface
