#include "realface/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "realface/error.hpp"
#include "realface/pgm.hpp"
#include "realface/rng.hpp"

namespace realface {

using nlohmann::json;

namespace {

std::size_t product_size(const std::vector<ModeSpec>& modes) {
  std::size_t n = 1;
  for (const auto& m : modes) n *= m.labels.size();
  return n;
}

void validate_modes(const std::vector<ModeSpec>& modes) {
  if (modes.empty()) throw ShapeError("corpus needs at least one mode");
  std::set<std::string> names;
  for (const auto& m : modes) {
    if (!names.insert(m.name).second) throw ParseError("duplicate mode name '" + m.name + "'");
    if (m.labels.size() < 2) throw ShapeError("mode '" + m.name + "' needs at least two labels");
    std::set<std::string> labels(m.labels.begin(), m.labels.end());
    if (labels.size() != m.labels.size()) throw ParseError("duplicate label in mode '" + m.name + "'");
  }
}

}  // namespace

TrainingCorpus::TrainingCorpus(std::vector<ModeSpec> modes, std::vector<FaceVector> faces, std::string subject_id)
    : modes_(std::move(modes)), faces_(std::move(faces)), subject_id_(std::move(subject_id)) {
  validate_modes(modes_);
  const std::size_t n = product_size(modes_);
  if (faces_.size() != n) {
    throw IncompleteCartesianProduct("expected " + std::to_string(n) + " faces (" + shape_string() + "), got " +
                                     std::to_string(faces_.size()));
  }
  std::size_t semantic = 0;
  for (const auto& m : modes_) semantic += m.labels.size() - 1;
  if (n < semantic + 2) {
    throw ShapeError("corpus of " + std::to_string(n) + " faces is too small for " + std::to_string(semantic) +
                     " semantic directions");
  }
  const Eigen::Index d = faces_.front().size();
  if (d == 0) throw ShapeError("faces must be non-empty");
  for (const auto& f : faces_) {
    if (f.size() != d) {
      throw ShapeError("face dimension " + std::to_string(f.size()) + " differs from " + std::to_string(d));
    }
    if (!f.data.allFinite()) throw ShapeError("face contains non-finite entries");
    if (f.image_backed() && (f.data.minCoeff() < 0.0 || f.data.maxCoeff() > 1.0)) {
      throw ShapeError("image-backed face has entries outside [0,1]");
    }
  }
}

std::size_t TrainingCorpus::flat_index(const LabelCombination& combo) const {
  if (combo.size() != modes_.size()) throw ShapeError("label combination has wrong number of modes");
  std::size_t flat = 0;
  for (std::size_t m = 0; m < modes_.size(); ++m) {
    if (combo[m] >= modes_[m].labels.size()) throw ShapeError("label index out of range");
    flat = flat * modes_[m].labels.size() + combo[m];
  }
  return flat;
}

LabelCombination TrainingCorpus::combination(std::size_t flat) const {
  LabelCombination combo(modes_.size());
  for (std::size_t m = modes_.size(); m-- > 0;) {
    combo[m] = flat % modes_[m].labels.size();
    flat /= modes_[m].labels.size();
  }
  return combo;
}

std::optional<std::size_t> TrainingCorpus::mode_index(std::string_view name) const {
  for (std::size_t m = 0; m < modes_.size(); ++m) {
    if (modes_[m].name == name) return m;
  }
  return std::nullopt;
}

std::optional<std::size_t> TrainingCorpus::label_index(std::size_t mode, std::string_view label) const {
  const auto& labels = modes_.at(mode).labels;
  for (std::size_t l = 0; l < labels.size(); ++l) {
    if (labels[l] == label) return l;
  }
  return std::nullopt;
}

Eigen::MatrixXd TrainingCorpus::matrix() const {
  Eigen::MatrixXd x(dimension(), static_cast<Eigen::Index>(faces_.size()));
  for (std::size_t j = 0; j < faces_.size(); ++j) x.col(static_cast<Eigen::Index>(j)) = faces_[j].data;
  return x;
}

std::string TrainingCorpus::shape_string() const {
  std::string out;
  for (std::size_t m = 0; m < modes_.size(); ++m) {
    if (m) out += "×";
    out += std::to_string(modes_[m].labels.size());
  }
  return out;
}

TrainingCorpus TrainingCorpus::restrict_mode(std::string_view mode, std::string_view label) const {
  const auto mi = mode_index(mode);
  if (!mi) throw SpecError("corpus has no mode '" + std::string(mode) + "'");
  const auto li = label_index(*mi, label);
  if (!li) throw SpecError("mode '" + std::string(mode) + "' has no label '" + std::string(label) + "'");
  std::vector<ModeSpec> kept;
  for (std::size_t m = 0; m < modes_.size(); ++m) {
    if (m != *mi) kept.push_back(modes_[m]);
  }
  std::vector<FaceVector> faces;
  for (std::size_t j = 0; j < faces_.size(); ++j) {
    if (combination(j)[*mi] == *li) faces.push_back(faces_[j]);
  }
  // Dropping one digit of a mixed-radix index preserves relative order.
  return TrainingCorpus(std::move(kept), std::move(faces), subject_id_);
}

double sample_bilinear(const FaceVector& image, double x, double y) {
  const double fx0 = std::floor(x);
  const double fy0 = std::floor(y);
  const double fx = x - fx0;
  const double fy = y - fy0;
  const auto read = [&](double px, double py) -> double {
    if (px < 0 || py < 0 || px >= image.width || py >= image.height) return 0.0;
    return image.pixel(static_cast<int>(px), static_cast<int>(py));
  };
  return read(fx0, fy0) * (1 - fx) * (1 - fy) + read(fx0 + 1, fy0) * fx * (1 - fy) +
         read(fx0, fy0 + 1) * (1 - fx) * fy + read(fx0 + 1, fy0 + 1) * fx * fy;
}

namespace {

void check_anchors(const EyeAnchors& a, int width, int height, const char* which) {
  if ((a.right_eye - a.left_eye).norm() == 0.0) throw DegenerateAnchors(std::string(which) + " eye anchors coincide");
  if (!(a.left_eye.x() < a.right_eye.x())) throw InvalidAnchors(std::string(which) + " left eye must be left of right eye");
  if (width > 0 && height > 0) {
    for (const auto& p : {a.left_eye, a.right_eye}) {
      if (p.x() < 0 || p.y() < 0 || p.x() > width - 1 || p.y() > height - 1) {
        throw InvalidAnchors(std::string(which) + " eye anchor outside image bounds");
      }
    }
  }
}

}  // namespace

FaceVector align_face(const FaceVector& image, const EyeAnchors& anchors, const EyeAnchors& canonical, int out_w,
                      int out_h) {
  if (!image.image_backed()) throw ShapeError("align_face needs an image-backed face");
  if (out_w <= 0 || out_h <= 0) throw ShapeError("output size must be positive");
  check_anchors(anchors, image.width, image.height, "source");
  check_anchors(canonical, out_w, out_h, "canonical");

  // canonical = A * source + t with A = [[a, -b], [b, a]] (rotation + scale).
  const Eigen::Vector2d ds = anchors.right_eye - anchors.left_eye;
  const Eigen::Vector2d dc = canonical.right_eye - canonical.left_eye;
  const double denom = ds.squaredNorm();
  const double a = (dc.x() * ds.x() + dc.y() * ds.y()) / denom;
  const double b = (dc.y() * ds.x() - dc.x() * ds.y()) / denom;
  const double tx = canonical.left_eye.x() - (a * anchors.left_eye.x() - b * anchors.left_eye.y());
  const double ty = canonical.left_eye.y() - (b * anchors.left_eye.x() + a * anchors.left_eye.y());
  const double det = a * a + b * b;

  Eigen::VectorXd out(static_cast<Eigen::Index>(out_w) * out_h);
  for (int v = 0; v < out_h; ++v) {
    for (int u = 0; u < out_w; ++u) {
      const double cx = u - tx;
      const double cy = v - ty;
      const double sx = (a * cx + b * cy) / det;
      const double sy = (-b * cx + a * cy) / det;
      out[static_cast<Eigen::Index>(v) * out_w + u] = sample_bilinear(image, sx, sy);
    }
  }
  return FaceVector(std::move(out), out_w, out_h);
}

FaceVector apply_rect_mask(const FaceVector& image, int x0, int y0, int x1, int y1) {
  if (!image.image_backed()) throw ShapeError("rect mask needs an image-backed face");
  FaceVector out = image;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      if (x < x0 || x >= x1 || y < y0 || y >= y1) out.data[static_cast<Eigen::Index>(y) * image.width + x] = 0.0;
    }
  }
  return out;
}

namespace {

EyeAnchors parse_eyes(const json& j) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_array() || j[0].size() != 2 || !j[1].is_array() ||
      j[1].size() != 2) {
    throw ParseError("eyes must be [[x,y],[x,y]]");
  }
  return EyeAnchors{Eigen::Vector2d(j[0][0].get<double>(), j[0][1].get<double>()),
                    Eigen::Vector2d(j[1][0].get<double>(), j[1][1].get<double>())};
}

}  // namespace

TrainingCorpus load_corpus(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest " + manifest_path.string());
  const auto base = manifest_path.parent_path();
  try {
    const json m = json::parse(in);
    const auto d = m.at("d").get<Eigen::Index>();
    const int width = m.value("width", 0);
    const int height = m.value("height", 0);

    std::vector<ModeSpec> modes;
    for (const auto& jm : m.at("modes")) {
      modes.push_back(ModeSpec{jm.at("name").get<std::string>(), jm.at("labels").get<std::vector<std::string>>()});
    }
    validate_modes(modes);

    const std::string mask = m.value("mask", std::string("none"));
    if (mask != "none" && mask != "rect") throw ParseError("mask must be \"none\" or \"rect\"");
    std::vector<int> rect;
    if (mask == "rect") {
      rect = m.at("rect").get<std::vector<int>>();
      if (rect.size() != 4) throw ParseError("rect must be [x0,y0,x1,y1]");
    }
    std::optional<EyeAnchors> canonical;
    if (m.contains("canonical_eyes")) canonical = parse_eyes(m.at("canonical_eyes"));

    std::vector<Eigen::VectorXd> rows;
    const bool from_matrix = m.contains("matrix");
    if (from_matrix) rows = read_csv_matrix(base / m.at("matrix").get<std::string>());

    std::map<std::size_t, FaceVector> by_index;
    std::size_t position = 0;
    for (const auto& jf : m.at("faces")) {
      const auto labels = jf.at("labels").get<std::vector<std::string>>();
      if (labels.size() != modes.size()) throw ParseError("face label count does not match mode count");
      std::size_t flat = 0;
      for (std::size_t k = 0; k < modes.size(); ++k) {
        const auto& ml = modes[k].labels;
        const auto it = std::find(ml.begin(), ml.end(), labels[k]);
        if (it == ml.end()) throw ParseError("unknown label '" + labels[k] + "' for mode '" + modes[k].name + "'");
        flat = flat * ml.size() + static_cast<std::size_t>(it - ml.begin());
      }

      FaceVector face;
      if (from_matrix) {
        const auto row = jf.value("row", position);
        if (row >= rows.size()) throw ParseError("matrix row " + std::to_string(row) + " out of range");
        face = FaceVector(rows[row], width, height);
      } else {
        face = read_pgm(base / jf.at("file").get<std::string>());
      }
      if (jf.contains("eyes")) {
        if (!canonical) throw ParseError("face has eyes but manifest has no canonical_eyes");
        face = align_face(face, parse_eyes(jf.at("eyes")), *canonical, width, height);
      }
      if (face.size() != d) {
        throw ShapeError("face " + std::to_string(position) + " has dimension " + std::to_string(face.size()) +
                         ", manifest declares " + std::to_string(d));
      }
      if (mask == "rect") face = apply_rect_mask(face, rect[0], rect[1], rect[2], rect[3]);
      if (!by_index.emplace(flat, std::move(face)).second) throw ParseError("duplicate label combination in faces");
      ++position;
    }

    const std::size_t n = product_size(modes);
    if (by_index.size() != n) {
      std::string shape;
      for (std::size_t k = 0; k < modes.size(); ++k) shape += (k ? "×" : "") + std::to_string(modes[k].labels.size());
      throw IncompleteCartesianProduct("manifest lists " + std::to_string(by_index.size()) + " of " +
                                       std::to_string(n) + " faces for " + shape);
    }
    std::vector<FaceVector> faces;
    faces.reserve(n);
    for (auto& [_, f] : by_index) faces.push_back(std::move(f));
    return TrainingCorpus(std::move(modes), std::move(faces), m.value("subject", std::string("attacker")));
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed manifest: ") + e.what());
  }
}

namespace {

/// Modified Gram-Schmidt with one re-orthogonalisation pass.
Eigen::VectorXd orthogonalize(Eigen::VectorXd v, const std::vector<Eigen::VectorXd>& basis) {
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& q : basis) v -= q.dot(v) * q;
  }
  return v;
}

}  // namespace

TrainingCorpus generate_synthetic_corpus(std::uint64_t seed, Eigen::Index d, const std::vector<ModeSpec>& modes,
                                         double effect_scale, const SyntheticCorpusOptions& options) {
  validate_modes(modes);
  if (!(effect_scale > 0)) throw SpecError("effect_scale must be positive");
  const std::size_t n = product_size(modes);
  if (d < static_cast<Eigen::Index>(n)) {
    throw ShapeError("d = " + std::to_string(d) + " is smaller than n = " + std::to_string(n));
  }
  std::size_t label_total = 0;
  for (const auto& m : modes) label_total += m.labels.size();
  if (options.residual_scale > 0 && d < static_cast<Eigen::Index>(n + label_total)) {
    throw ShapeError("residual detail needs d >= n + total label count");
  }

  Rng rng(seed);
  const auto& pop = options.population;
  const Eigen::VectorXd base =
      (Eigen::VectorXd::Constant(d, pop.center) + pop.pixel_sigma * gaussian_vector(rng, d)).eval();

  // Label directions: seeded Gaussian vectors orthonormalised in mode order.
  std::vector<Eigen::VectorXd> directions;
  std::vector<std::vector<Eigen::VectorXd>> effects(modes.size());
  for (std::size_t m = 0; m < modes.size(); ++m) {
    for (std::size_t l = 0; l < modes[m].labels.size(); ++l) {
      Eigen::VectorXd v = orthogonalize(gaussian_vector(rng, d), directions);
      v.normalize();
      directions.push_back(v);
      effects[m].push_back(effect_scale * v);
    }
  }

  std::vector<FaceVector> faces;
  faces.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t rest = j;
    LabelCombination combo(modes.size());
    for (std::size_t m = modes.size(); m-- > 0;) {
      combo[m] = rest % modes[m].labels.size();
      rest /= modes[m].labels.size();
    }
    Eigen::VectorXd x = base;
    for (std::size_t m = 0; m < modes.size(); ++m) x += effects[m][combo[m]];
    if (options.residual_scale > 0) {
      Eigen::VectorXd detail = orthogonalize(gaussian_vector(rng, d), directions);
      x += options.residual_scale * detail.normalized();
    }
    faces.emplace_back(std::move(x));
  }
  return TrainingCorpus(modes, std::move(faces), "attacker");
}

std::vector<GalleryEntry> generate_synthetic_gallery(std::uint64_t seed, Eigen::Index d, std::size_t size,
                                                     const std::optional<FaceVector>& attacker_base,
                                                     double similarity, const PopulationModel& population) {
  if (size < 1) throw SpecError("gallery size must be at least 1");
  if (d < 1) throw ShapeError("gallery dimension must be positive");
  if (attacker_base && attacker_base->size() != d) throw ShapeError("attacker_base dimension mismatch");
  if (similarity < 0.0 || similarity > 1.0) throw SpecError("similarity must lie in [0,1]");
  const bool has_center_face = population.center_face.size() > 0;
  if (has_center_face && population.center_face.size() != d) throw ShapeError("population center_face dimension mismatch");

  std::vector<GalleryEntry> out;
  out.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    Rng rng(derive_seed(seed, i));
    std::normal_distribution<double> normal(0.0, 1.0);
    const double kappa = std::exp(population.distinctiveness * normal(rng));
    Eigen::VectorXd own =
        ((has_center_face ? population.center_face : Eigen::VectorXd::Constant(d, population.center)) +
         population.pixel_sigma * kappa * gaussian_vector(rng, d))
            .eval();
    if (attacker_base) own = (1.0 - similarity) * own + similarity * attacker_base->data;
    char name[32];
    std::snprintf(name, sizeof name, "id%04zu", i);
    out.push_back(GalleryEntry{name, FaceVector(std::move(own))});
  }
  return out;
}

std::vector<ModeSpec> canonical_modes() {
  return {
      ModeSpec{"facial_hair", {"clean", "beard_mustache", "mustache"}},
      ModeSpec{"marks", {"clean", "forehead_scar", "cheek_scar", "mole"}},
      ModeSpec{"expression", {"neutral", "distorted_cheek"}},
  };
}

std::vector<ModeSpec> canonical_modes_with_eyeglasses() {
  auto modes = canonical_modes();
  modes.push_back(ModeSpec{"eyeglasses", {"none", "glasses"}});
  return modes;
}

}  // namespace realface
