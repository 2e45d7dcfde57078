#include "realface/subspace.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "realface/error.hpp"

namespace realface {
namespace {

constexpr double kRelativeEigenFloor = 1e-12;
constexpr double kGramSchmidtFloor = 1e-10;

/// Flips `v` so that its largest-magnitude entry (first on ties) is positive.
void canonical_sign(Eigen::Ref<Eigen::VectorXd> v) {
  Eigen::Index arg = 0;
  v.cwiseAbs().maxCoeff(&arg);
  if (v[arg] < 0) v = -v;
}

void orthogonalize_against(Eigen::VectorXd& v, const Eigen::MatrixXd& q, Eigen::Index count) {
  for (int pass = 0; pass < 2; ++pass) {
    for (Eigen::Index j = 0; j < count; ++j) v -= q.col(j).dot(v) * q.col(j);
  }
}

}  // namespace

Eigen::VectorXd WhiteningModel::whiten(const Eigen::VectorXd& x) const {
  if (x.size() != dimension()) {
    throw ShapeError("face dimension " + std::to_string(x.size()) + " != model dimension " +
                     std::to_string(dimension()));
  }
  return whitening.transpose() * (x - mean);
}

Eigen::VectorXd WhiteningModel::dewhiten(const Eigen::VectorXd& z) const {
  if (z.size() != rank()) throw ShapeError("whitened vector has wrong length");
  return dewhitening * z + mean;
}

const ModeSlice* SemanticBasis::find_mode(std::string_view name) const {
  for (const auto& m : modes) {
    if (m.name == name) return &m;
  }
  return nullptr;
}

WhiteningModel fit_whitening(const TrainingCorpus& corpus) {
  const Eigen::MatrixXd x = corpus.matrix();
  const Eigen::Index n = x.cols();
  if (n < 2) throw DegenerateCorpus("whitening needs at least two faces");

  WhiteningModel model;
  model.mean = x.rowwise().mean();
  const Eigen::MatrixXd centred = x.colwise() - model.mean;
  if (centred.cwiseAbs().maxCoeff() == 0.0) throw DegenerateCorpus("all training faces are identical");

  // Eigen-decompose the n x n Gram matrix instead of the d x d covariance.
  const Eigen::MatrixXd gram = centred.transpose() * centred;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
  if (solver.info() != Eigen::Success) throw DegenerateCorpus("eigen-decomposition failed");
  const Eigen::VectorXd& eig = solver.eigenvalues();  // ascending
  const double top = eig[n - 1];
  if (!(top > 0.0)) throw DegenerateCorpus("corpus has zero variance");

  std::vector<Eigen::Index> kept;
  for (Eigen::Index i = n - 1; i >= 0 && static_cast<Eigen::Index>(kept.size()) < n - 1; --i) {
    if (eig[i] > kRelativeEigenFloor * top) kept.push_back(i);
  }

  const Eigen::Index d = x.rows();
  const Eigen::Index r = static_cast<Eigen::Index>(kept.size());
  model.whitening.resize(d, r);
  model.dewhitening.resize(d, r);
  model.variances.resize(r);
  model.nominal_rank = n - 1;
  for (Eigen::Index k = 0; k < r; ++k) {
    const double lambda = eig[kept[k]];
    Eigen::VectorXd direction = centred * solver.eigenvectors().col(kept[k]) / std::sqrt(lambda);
    canonical_sign(direction);
    const double variance = lambda / static_cast<double>(n - 1);
    model.variances[k] = variance;
    model.whitening.col(k) = direction / std::sqrt(variance);
    model.dewhitening.col(k) = direction * std::sqrt(variance);
  }
  const auto& first = corpus.face(0);
  if (first.image_backed()) {
    model.width = first.width;
    model.height = first.height;
  }
  return model;
}

SemanticBasis fit_mmda(const TrainingCorpus& corpus, const WhiteningModel& whitening) {
  if (whitening.dimension() != corpus.dimension()) throw ShapeError("whitening fitted on a different dimension");
  const Eigen::Index r = whitening.rank();
  const Eigen::Index n = static_cast<Eigen::Index>(corpus.size());

  Eigen::MatrixXd z(r, n);
  for (Eigen::Index j = 0; j < n; ++j) z.col(j) = whitening.whiten(corpus.face(static_cast<std::size_t>(j)).data);

  std::vector<LabelCombination> combos(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) combos[static_cast<std::size_t>(j)] = corpus.combination(static_cast<std::size_t>(j));

  Eigen::Index semantic = 0;
  for (const auto& m : corpus.modes()) semantic += static_cast<Eigen::Index>(m.labels.size()) - 1;
  if (semantic > r) {
    throw CollinearModes("semantic width " + std::to_string(semantic) + " exceeds whitened rank " + std::to_string(r));
  }

  SemanticBasis basis;
  basis.whitening = whitening;
  basis.axes = Eigen::MatrixXd::Zero(r, r);
  std::vector<Eigen::MatrixXd> label_means;
  Eigen::Index filled = 0;

  for (std::size_t m = 0; m < corpus.modes().size(); ++m) {
    const auto& spec = corpus.modes()[m];
    const Eigen::Index labels = static_cast<Eigen::Index>(spec.labels.size());
    Eigen::MatrixXd means = Eigen::MatrixXd::Zero(r, labels);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(labels);
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto l = static_cast<Eigen::Index>(combos[static_cast<std::size_t>(j)][m]);
      means.col(l) += z.col(j);
      counts[l] += 1.0;
    }
    for (Eigen::Index l = 0; l < labels; ++l) means.col(l) /= counts[l];

    for (Eigen::Index a = 0; a < labels; ++a) {
      for (Eigen::Index b = a + 1; b < labels; ++b) {
        if ((means.col(a) - means.col(b)).norm() <= 1e-9) {
          throw DegenerateMode("labels '" + spec.labels[static_cast<std::size_t>(a)] + "' and '" +
                               spec.labels[static_cast<std::size_t>(b)] + "' of mode '" + spec.name +
                               "' have identical means");
        }
      }
    }

    // Between-class scatter C C^T has the same nonzero spectrum as C^T C.
    const Eigen::MatrixXd centred = means.colwise() - means.rowwise().mean();
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(centred.transpose() * centred);
    const Eigen::VectorXd& eig = solver.eigenvalues();
    const double top = eig[labels - 1];
    ModeSlice slice{spec.name, spec.labels, ColumnRange{filled, filled + labels - 1}, {}};
    for (Eigen::Index k = 0; k < labels - 1; ++k) {
      const Eigen::Index idx = labels - 1 - k;
      if (!(eig[idx] > kRelativeEigenFloor * top)) {
        throw DegenerateMode("label means of mode '" + spec.name + "' span fewer than " +
                             std::to_string(labels - 1) + " directions");
      }
      Eigen::VectorXd v = centred * solver.eigenvectors().col(idx) / std::sqrt(eig[idx]);
      // Orient so the first label (the "clean" setting) sits on the negative side.
      const double first = v.dot(centred.col(0));
      if (std::abs(first) > 1e-9) {
        if (first > 0) v = -v;
      } else {
        canonical_sign(v);
      }
      orthogonalize_against(v, basis.axes, filled);
      const double norm = v.norm();
      if (norm < kGramSchmidtFloor) {
        throw CollinearModes("mode '" + spec.name + "' direction is collinear with earlier modes");
      }
      basis.axes.col(filled++) = v / norm;
    }
    basis.modes.push_back(std::move(slice));
    label_means.push_back(std::move(means));
  }

  // Orthonormal completion: eigenvectors of I - Q Q^T with eigenvalue 1.
  if (filled < r) {
    const auto q = basis.axes.leftCols(filled);
    const Eigen::MatrixXd complement = Eigen::MatrixXd::Identity(r, r) - q * q.transpose();
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(complement);
    const Eigen::Index extra = r - filled;
    for (Eigen::Index k = 0; k < extra; ++k) {
      Eigen::VectorXd v = solver.eigenvectors().col(r - 1 - k);
      orthogonalize_against(v, basis.axes, filled);
      const double norm = v.norm();
      if (norm < kGramSchmidtFloor) throw CollinearModes("residual completion failed");
      v /= norm;
      canonical_sign(v);
      basis.axes.col(filled++) = v;
    }
  }
  basis.residual = ColumnRange{semantic, r};

  for (std::size_t m = 0; m < basis.modes.size(); ++m) {
    auto& slice = basis.modes[m];
    const auto cols = basis.axes.middleCols(slice.columns.begin, slice.columns.width());
    for (Eigen::Index l = 0; l < label_means[m].cols(); ++l) {
      slice.label_coords.push_back(cols.transpose() * label_means[m].col(l));
    }
  }
  return basis;
}

DecomposedFace decompose(const SemanticBasis& basis, const Eigen::VectorXd& face) {
  return DecomposedFace{basis.axes.transpose() * basis.whitening.whiten(face), basis.semantic_width()};
}

DecomposedFace decompose(const SemanticBasis& basis, const FaceVector& face) { return decompose(basis, face.data); }

FaceVector reconstruct(const SemanticBasis& basis, const Eigen::VectorXd& coords) {
  if (coords.size() != basis.rank()) {
    throw ShapeError("coordinate vector has length " + std::to_string(coords.size()) + ", basis rank is " +
                     std::to_string(basis.rank()));
  }
  return FaceVector(basis.whitening.dewhiten(basis.axes * coords), basis.whitening.width, basis.whitening.height);
}

FaceVector reconstruct(const SemanticBasis& basis, const DecomposedFace& face) {
  return reconstruct(basis, face.coords);
}

}  // namespace realface
