#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace realface {

/// A pre-aligned, masked face flattened row-major into a real vector.
/// `width`/`height` are zero for vectors that are not backed by an image.
struct FaceVector {
  Eigen::VectorXd data;
  int width = 0;
  int height = 0;

  FaceVector() = default;
  explicit FaceVector(Eigen::VectorXd values) : data(std::move(values)) {}
  FaceVector(Eigen::VectorXd values, int w, int h) : data(std::move(values)), width(w), height(h) {}

  Eigen::Index size() const noexcept { return data.size(); }
  bool image_backed() const noexcept {
    return width > 0 && height > 0 && static_cast<Eigen::Index>(width) * height == data.size();
  }
  double pixel(int x, int y) const { return data[static_cast<Eigen::Index>(y) * width + x]; }
};

struct ModeSpec {
  std::string name;
  std::vector<std::string> labels;
};

/// One label index per mode, in declared mode order.
using LabelCombination = std::vector<std::size_t>;

/// Faces of one subject laid out over the full Cartesian product of mode
/// labels. Storage is mixed-radix with the first mode most significant.
class TrainingCorpus {
 public:
  /// `faces` must be in product order; see flat_index().
  TrainingCorpus(std::vector<ModeSpec> modes, std::vector<FaceVector> faces, std::string subject_id = "attacker");

  const std::vector<ModeSpec>& modes() const noexcept { return modes_; }
  const std::string& subject_id() const noexcept { return subject_id_; }
  std::size_t size() const noexcept { return faces_.size(); }
  Eigen::Index dimension() const noexcept { return faces_.front().size(); }

  const FaceVector& face(std::size_t flat) const { return faces_.at(flat); }
  const FaceVector& face(const LabelCombination& combo) const { return faces_.at(flat_index(combo)); }
  const std::vector<FaceVector>& faces() const noexcept { return faces_; }

  std::size_t flat_index(const LabelCombination& combo) const;
  LabelCombination combination(std::size_t flat) const;

  std::optional<std::size_t> mode_index(std::string_view name) const;
  std::optional<std::size_t> label_index(std::size_t mode, std::string_view label) const;

  /// Faces as columns, d x n.
  Eigen::MatrixXd matrix() const;

  /// Label counts joined by "×", e.g. "3×4×2".
  std::string shape_string() const;

  /// Sub-corpus with `mode` fixed to `label`; that mode is dropped.
  TrainingCorpus restrict_mode(std::string_view mode, std::string_view label) const;

 private:
  std::vector<ModeSpec> modes_;
  std::vector<FaceVector> faces_;
  std::string subject_id_;
};

struct EyeAnchors {
  Eigen::Vector2d left_eye;
  Eigen::Vector2d right_eye;
};

/// Warps `image` by the similarity transform taking `anchors` onto
/// `canonical`, resampled bilinearly. Source samples outside the image read 0.
FaceVector align_face(const FaceVector& image, const EyeAnchors& anchors, const EyeAnchors& canonical,
                      int out_w, int out_h);

/// Bilinear read at sub-pixel (x, y); neighbours outside the image count as 0.
double sample_bilinear(const FaceVector& image, double x, double y);

/// Zeroes every pixel outside [x0, x1) x [y0, y1).
FaceVector apply_rect_mask(const FaceVector& image, int x0, int y0, int x1, int y1);

/// Parses a corpus.json manifest and the PGM/CSV face files it references.
TrainingCorpus load_corpus(const std::filesystem::path& manifest_path);

/// Pixel statistics of the synthetic face population: every identity is
/// center + sigma * kappa * N(0, I), where kappa ~ LogNormal(0, distinctiveness)
/// varies per identity (kappa = 1 for the corpus subject).
struct PopulationModel {
  double center = 0.5;
  double pixel_sigma = 0.05;
  double distinctiveness = 0.25;
  /// Optional population mean face; replaces the constant `center` when set.
  Eigen::VectorXd center_face;
};

struct SyntheticCorpusOptions {
  /// Norm of the per-face identity detail, orthogonal to every mode direction.
  /// Zero makes the corpus exactly additive (and rank sum(L_m - 1)).
  double residual_scale = 0.25;
  PopulationModel population{};
};

/// Seeded corpus: base + effect_scale * (sum of orthonormal label directions)
/// + residual detail. Deterministic for identical arguments.
TrainingCorpus generate_synthetic_corpus(std::uint64_t seed, Eigen::Index d, const std::vector<ModeSpec>& modes,
                                         double effect_scale, const SyntheticCorpusOptions& options = {});

struct GalleryEntry {
  std::string identity;
  FaceVector face;
};

/// `size` deterministic identities drawn from `population`; with an
/// attacker_base each one becomes (1 - similarity) * own + similarity * base.
std::vector<GalleryEntry> generate_synthetic_gallery(std::uint64_t seed, Eigen::Index d, std::size_t size,
                                                     const std::optional<FaceVector>& attacker_base,
                                                     double similarity, const PopulationModel& population = {});

/// The canonical three semantic modes used throughout the tests and examples.
std::vector<ModeSpec> canonical_modes();
/// Canonical modes plus the two-label eyeglasses mode (48 faces).
std::vector<ModeSpec> canonical_modes_with_eyeglasses();

}  // namespace realface
