#include "realface/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "realface/error.hpp"
#include "realface/pgm.hpp"

namespace realface {

using nlohmann::json;

Polarity polarity_of(Metric metric) noexcept {
  return metric == Metric::confidence ? Polarity::confidence : Polarity::distance;
}

std::string_view to_string(Polarity polarity) noexcept {
  return polarity == Polarity::distance ? "distance" : "confidence";
}

std::string_view to_string(Metric metric) noexcept {
  switch (metric) {
    case Metric::euclidean: return "euclidean";
    case Metric::cosine: return "cosine";
    case Metric::confidence: return "confidence";
  }
  return "euclidean";
}

Polarity parse_polarity(std::string_view text) {
  if (text == "distance") return Polarity::distance;
  if (text == "confidence") return Polarity::confidence;
  throw ParseError("unknown polarity '" + std::string(text) + "'");
}

Metric parse_metric(std::string_view text) {
  if (text == "euclidean") return Metric::euclidean;
  if (text == "cosine") return Metric::cosine;
  if (text == "confidence") return Metric::confidence;
  throw ParseError("unknown metric '" + std::string(text) + "'");
}

Eigen::VectorXd EmbeddingSpec::embed(const Eigen::VectorXd& face) const {
  if (kind == Kind::raw) return face;
  if (face.size() != mean.size()) throw ShapeError("probe dimension does not match embedding");
  return components.transpose() * (face - mean);
}

Gallery::Gallery(std::vector<Template> templates, EmbeddingSpec embedding, Eigen::Index input_dimension)
    : templates_(std::move(templates)), embedding_(std::move(embedding)), input_dimension_(input_dimension) {
  std::set<std::string> seen;
  for (const auto& t : templates_) {
    if (!seen.insert(t.identity).second) throw DuplicateIdentity("identity '" + t.identity + "' enrolled twice");
    if (!templates_.empty() && t.features.size() != templates_.front().features.size()) {
      throw ShapeError("templates differ in dimension");
    }
  }
}

std::optional<std::size_t> Gallery::index_of(std::string_view identity) const {
  for (std::size_t i = 0; i < templates_.size(); ++i) {
    if (templates_[i].identity == identity) return i;
  }
  return std::nullopt;
}

Gallery enroll(const std::vector<GalleryEntry>& faces, EmbeddingSpec spec) {
  if (faces.empty()) throw EmptyGallery("cannot enroll an empty gallery");
  const Eigen::Index d = faces.front().face.size();
  std::set<std::string> seen;
  for (const auto& f : faces) {
    if (!seen.insert(f.identity).second) throw DuplicateIdentity("identity '" + f.identity + "' enrolled twice");
    if (f.face.size() != d) throw ShapeError("gallery faces differ in dimension");
  }

  if (spec.kind == EmbeddingSpec::Kind::pca) {
    if (spec.k < 1) throw RankDeficient("pca embedding needs k >= 1");
    const auto n = static_cast<Eigen::Index>(faces.size());
    Eigen::MatrixXd x(d, n);
    for (Eigen::Index j = 0; j < n; ++j) x.col(j) = faces[static_cast<std::size_t>(j)].face.data;
    spec.mean = x.rowwise().mean();
    const Eigen::MatrixXd centred = x.colwise() - spec.mean;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(centred.transpose() * centred);
    const Eigen::VectorXd& eig = solver.eigenvalues();
    const double top = eig[n - 1];
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < n; ++i) rank += (top > 0 && eig[i] > 1e-12 * top) ? 1 : 0;
    if (spec.k > rank) {
      throw RankDeficient("pca-" + std::to_string(spec.k) + " exceeds gallery rank " + std::to_string(rank));
    }
    spec.components.resize(d, spec.k);
    for (Eigen::Index c = 0; c < spec.k; ++c) {
      const Eigen::Index idx = n - 1 - c;
      Eigen::VectorXd dir = centred * solver.eigenvectors().col(idx) / std::sqrt(eig[idx]);
      Eigen::Index arg = 0;
      dir.cwiseAbs().maxCoeff(&arg);
      if (dir[arg] < 0) dir = -dir;
      spec.components.col(c) = dir;
    }
  }

  std::vector<Template> templates;
  templates.reserve(faces.size());
  for (const auto& f : faces) templates.push_back(Template{f.identity, spec.embed(f.face.data)});
  return Gallery(std::move(templates), std::move(spec), d);
}

double pair_score(const Eigen::VectorXd& probe, const Eigen::VectorXd& templ, Metric metric) {
  switch (metric) {
    case Metric::euclidean: return (probe - templ).norm();
    case Metric::confidence: return 1.0 / (1.0 + (probe - templ).norm());
    case Metric::cosine: {
      const double np = probe.norm();
      const double nt = templ.norm();
      if (np == 0.0 || nt == 0.0) throw DegenerateVector("cosine score of a zero-norm vector");
      return 1.0 - probe.dot(templ) / (np * nt);
    }
  }
  return 0.0;
}

MatchResult match(const Gallery& gallery, const Eigen::VectorXd& probe, Metric metric) {
  if (gallery.empty()) throw EmptyGallery("gallery has no entries");
  if (probe.size() != gallery.input_dimension()) {
    throw ShapeError("probe dimension " + std::to_string(probe.size()) + " != gallery dimension " +
                     std::to_string(gallery.input_dimension()));
  }
  const Eigen::VectorXd embedded = gallery.embedding().embed(probe);
  const bool higher_better = polarity_of(metric) == Polarity::confidence;
  std::size_t best = 0;
  double best_score = 0.0;
  const auto& templates = gallery.templates();
  for (std::size_t i = 0; i < templates.size(); ++i) {
    const double s = pair_score(embedded, templates[i].features, metric);
    if (i == 0 || (higher_better ? s > best_score : s < best_score)) {
      best = i;
      best_score = s;
    }
  }
  return MatchResult{templates[best].identity, best_score, polarity_of(metric)};
}

MatchResult match(const Gallery& gallery, const FaceVector& probe, Metric metric) {
  return match(gallery, probe.data, metric);
}

bool passes(const MatchResult& result, const ThresholdPolicy& policy) {
  if (result.polarity != policy.polarity) {
    throw PolarityError("result polarity '" + std::string(to_string(result.polarity)) + "' vs policy polarity '" +
                        std::string(to_string(policy.polarity)) + "'");
  }
  return result.polarity == Polarity::distance ? result.score <= policy.threshold : result.score >= policy.threshold;
}

double normalized_score(const MatchResult& result) noexcept {
  return result.polarity == Polarity::distance ? result.score : 1.0 - result.score;
}

double normalized_threshold(const ThresholdPolicy& policy) noexcept {
  return policy.polarity == Polarity::distance ? policy.threshold : 1.0 - policy.threshold;
}

std::vector<OperatingPoint> operating_points(const std::vector<double>& genuine, const std::vector<double>& impostor,
                                             Polarity polarity) {
  if (genuine.empty() || impostor.empty()) throw SpecError("need at least one genuine and one impostor score");
  // Work in "lower is better" units: accept when normalised score <= t.
  const auto norm = [polarity](double s) { return polarity == Polarity::distance ? s : 1.0 - s; };
  std::vector<double> g, im;
  for (double s : genuine) g.push_back(norm(s));
  for (double s : impostor) im.push_back(norm(s));
  std::sort(g.begin(), g.end());
  std::sort(im.begin(), im.end());
  std::vector<double> pooled = g;
  pooled.insert(pooled.end(), im.begin(), im.end());
  std::sort(pooled.begin(), pooled.end());
  pooled.erase(std::unique(pooled.begin(), pooled.end()), pooled.end());

  const auto ng = static_cast<double>(g.size());
  const auto ni = static_cast<double>(im.size());
  std::vector<OperatingPoint> points;
  points.push_back(OperatingPoint{-std::numeric_limits<double>::infinity(), 0.0, 1.0});
  for (double t : pooled) {
    const auto accepted_impostors = std::upper_bound(im.begin(), im.end(), t) - im.begin();
    const auto accepted_genuine = std::upper_bound(g.begin(), g.end(), t) - g.begin();
    const double threshold = polarity == Polarity::distance ? t : 1.0 - t;
    points.push_back(OperatingPoint{threshold, static_cast<double>(accepted_impostors) / ni,
                                    1.0 - static_cast<double>(accepted_genuine) / ng});
  }
  return points;
}

double equal_error_rate(const std::vector<double>& genuine, const std::vector<double>& impostor, Polarity polarity) {
  const auto points = operating_points(genuine, impostor, polarity);
  for (std::size_t j = 1; j < points.size(); ++j) {
    const double diff = points[j].far - points[j].frr;
    if (diff == 0.0) return points[j].far;
    if (diff > 0.0) {
      const auto& prev = points[j - 1];
      const double prev_diff = prev.far - prev.frr;
      const double alpha = -prev_diff / (diff - prev_diff);
      return prev.far + alpha * (points[j].far - prev.far);
    }
  }
  return points.back().far;
}

ScoreDistribution genuine_impostor(const Gallery& gallery, const std::vector<GalleryEntry>& probes, Metric metric) {
  if (gallery.empty()) throw EmptyGallery("gallery has no entries");
  ScoreDistribution dist;
  dist.polarity = polarity_of(metric);
  for (const auto& probe : probes) {
    const auto own = gallery.index_of(probe.identity);
    if (!own) throw UnknownIdentity("probe identity '" + probe.identity + "' is not enrolled");
    if (probe.face.size() != gallery.input_dimension()) throw ShapeError("probe dimension mismatch");
    const Eigen::VectorXd embedded = gallery.embedding().embed(probe.face.data);
    for (std::size_t i = 0; i < gallery.size(); ++i) {
      const double s = pair_score(embedded, gallery.templates()[i].features, metric);
      (i == *own ? dist.genuine : dist.impostor).push_back(s);
    }
  }
  dist.eer = equal_error_rate(dist.genuine, dist.impostor, dist.polarity);
  return dist;
}

GalleryManifest load_gallery_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open gallery manifest " + path.string());
  const auto base = path.parent_path();
  try {
    const json m = json::parse(in);
    const auto d = m.at("d").get<Eigen::Index>();
    const int width = m.value("width", 0);
    const int height = m.value("height", 0);
    const std::string mask = m.value("mask", std::string("none"));
    std::vector<int> rect;
    if (mask == "rect") {
      rect = m.at("rect").get<std::vector<int>>();
      if (rect.size() != 4) throw ParseError("rect must be [x0,y0,x1,y1]");
    } else if (mask != "none") {
      throw ParseError("mask must be \"none\" or \"rect\"");
    }
    std::optional<EyeAnchors> canonical;
    const auto eyes = [](const json& j) {
      return EyeAnchors{Eigen::Vector2d(j.at(0).at(0).get<double>(), j.at(0).at(1).get<double>()),
                        Eigen::Vector2d(j.at(1).at(0).get<double>(), j.at(1).at(1).get<double>())};
    };
    if (m.contains("canonical_eyes")) canonical = eyes(m.at("canonical_eyes"));
    std::vector<Eigen::VectorXd> rows;
    const bool from_matrix = m.contains("matrix");
    if (from_matrix) rows = read_csv_matrix(base / m.at("matrix").get<std::string>());

    GalleryManifest out;
    std::size_t position = 0;
    for (const auto& ji : m.at("identities")) {
      FaceVector face;
      if (from_matrix) {
        const auto row = ji.value("row", position);
        if (row >= rows.size()) throw ParseError("matrix row out of range");
        face = FaceVector(rows[row], width, height);
      } else {
        face = read_pgm(base / ji.at("file").get<std::string>());
      }
      if (ji.contains("eyes")) {
        if (!canonical) throw ParseError("identity has eyes but manifest has no canonical_eyes");
        face = align_face(face, eyes(ji.at("eyes")), *canonical, width, height);
      }
      if (face.size() != d) throw ShapeError("gallery face dimension does not match manifest d");
      if (mask == "rect") face = apply_rect_mask(face, rect[0], rect[1], rect[2], rect[3]);
      out.faces.push_back(GalleryEntry{ji.at("id").get<std::string>(), std::move(face)});
      ++position;
    }
    if (m.contains("embedding")) {
      const auto& je = m.at("embedding");
      const auto kind = je.value("kind", std::string("raw"));
      if (kind == "raw") {
        out.embedding = EmbeddingSpec::raw();
      } else if (kind == "pca-k" || kind == "pca") {
        out.embedding = EmbeddingSpec::pca(je.at("k").get<Eigen::Index>());
      } else {
        throw ParseError("unknown embedding kind '" + kind + "'");
      }
    }
    return out;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed gallery manifest: ") + e.what());
  }
}

}  // namespace realface
