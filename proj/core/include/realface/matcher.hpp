#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "realface/corpus.hpp"

namespace realface {

/// distance: lower is a better match. confidence: higher is a better match.
enum class Polarity { distance, confidence };

/// confidence is 1 / (1 + L2 distance): a monotone stand-in for services
/// that only report a confidence, not a model of any particular one.
enum class Metric { euclidean, cosine, confidence };

Polarity polarity_of(Metric metric) noexcept;
std::string_view to_string(Polarity polarity) noexcept;
std::string_view to_string(Metric metric) noexcept;
Polarity parse_polarity(std::string_view text);
Metric parse_metric(std::string_view text);

/// How faces are mapped to templates before scoring.
struct EmbeddingSpec {
  enum class Kind { raw, pca };

  Kind kind = Kind::raw;
  Eigen::Index k = 0;
  Eigen::VectorXd mean;        // pca only
  Eigen::MatrixXd components;  // d x k, orthonormal columns; pca only

  static EmbeddingSpec raw() { return {}; }
  static EmbeddingSpec pca(Eigen::Index k) { return EmbeddingSpec{Kind::pca, k, {}, {}}; }

  bool fitted() const noexcept { return kind == Kind::raw || components.cols() == k; }
  Eigen::VectorXd embed(const Eigen::VectorXd& face) const;
};

struct Template {
  std::string identity;
  Eigen::VectorXd features;
};

class Gallery {
 public:
  Gallery(std::vector<Template> templates, EmbeddingSpec embedding, Eigen::Index input_dimension);

  const std::vector<Template>& templates() const noexcept { return templates_; }
  const EmbeddingSpec& embedding() const noexcept { return embedding_; }
  std::size_t size() const noexcept { return templates_.size(); }
  bool empty() const noexcept { return templates_.empty(); }
  Eigen::Index input_dimension() const noexcept { return input_dimension_; }
  std::optional<std::size_t> index_of(std::string_view identity) const;

 private:
  std::vector<Template> templates_;
  EmbeddingSpec embedding_;
  Eigen::Index input_dimension_;
};

struct MatchResult {
  std::string id;
  double score = 0.0;
  Polarity polarity = Polarity::distance;
};

struct ThresholdPolicy {
  Polarity polarity = Polarity::distance;
  double threshold = 0.5;
};

/// Embeds every face (fitting the pca projection on these faces first).
Gallery enroll(const std::vector<GalleryEntry>& faces, EmbeddingSpec spec);

/// Score of one embedded pair under `metric`.
double pair_score(const Eigen::VectorXd& probe, const Eigen::VectorXd& templ, Metric metric);

/// Best match over the gallery; exact ties go to the earliest enrolled entry.
MatchResult match(const Gallery& gallery, const FaceVector& probe, Metric metric);
MatchResult match(const Gallery& gallery, const Eigen::VectorXd& probe, Metric metric);

/// Inclusive threshold test: distance s <= theta, confidence s >= theta.
bool passes(const MatchResult& result, const ThresholdPolicy& policy);

/// Lower is always closer to passing: distance unchanged, confidence 1 - s.
double normalized_score(const MatchResult& result) noexcept;
double normalized_threshold(const ThresholdPolicy& policy) noexcept;

struct OperatingPoint {
  double threshold = 0.0;
  double far = 0.0;
  double frr = 0.0;
};

struct ScoreDistribution {
  std::vector<double> genuine;
  std::vector<double> impostor;
  double eer = 0.0;
  Polarity polarity = Polarity::distance;
};

/// FAR / FRR at every distinct pooled score, preceded by the reject-all point.
std::vector<OperatingPoint> operating_points(const std::vector<double>& genuine, const std::vector<double>& impostor,
                                             Polarity polarity);

/// Rate where FAR = FRR, linearly interpolated between adjacent operating points.
double equal_error_rate(const std::vector<double>& genuine, const std::vector<double>& impostor, Polarity polarity);

/// Genuine: each probe against its own template. Impostor: against every other template.
ScoreDistribution genuine_impostor(const Gallery& gallery, const std::vector<GalleryEntry>& probes, Metric metric);

/// Gallery manifest: corpus.json layout with "identities" instead of modes.
struct GalleryManifest {
  std::vector<GalleryEntry> faces;
  EmbeddingSpec embedding;
};
GalleryManifest load_gallery_manifest(const std::filesystem::path& path);

}  // namespace realface
