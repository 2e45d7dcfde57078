#include "realface/model_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "realface/base64.hpp"
#include "realface/error.hpp"

namespace realface {

using json = nlohmann::ordered_json;

namespace {

constexpr const char* kFormat = "mmda-v1";

std::string pack(const Eigen::VectorXd& v) {
  return base64::encode_doubles({v.data(), static_cast<std::size_t>(v.size())});
}

// Column-major, matching Eigen's storage.
json pack(const Eigen::MatrixXd& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()},
              {"data", base64::encode_doubles({m.data(), static_cast<std::size_t>(m.size())})}};
}

Eigen::VectorXd unpack_vector(const json& j, Eigen::Index expected) {
  const auto values = base64::decode_doubles(j.get<std::string>());
  if (expected >= 0 && static_cast<Eigen::Index>(values.size()) != expected) {
    throw ParseError("array has " + std::to_string(values.size()) + " entries, expected " + std::to_string(expected));
  }
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

Eigen::MatrixXd unpack_matrix(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto values = base64::decode_doubles(j.at("data").get<std::string>());
  if (static_cast<Eigen::Index>(values.size()) != rows * cols) throw ParseError("matrix payload size mismatch");
  return Eigen::Map<const Eigen::MatrixXd>(values.data(), rows, cols);
}

json range_json(const ColumnRange& r) { return json::array({r.begin, r.end}); }

ColumnRange parse_range(const json& j) {
  if (!j.is_array() || j.size() != 2) throw ParseError("column range must be [begin, end]");
  return ColumnRange{j[0].get<Eigen::Index>(), j[1].get<Eigen::Index>()};
}

}  // namespace

FittedModel fit_model(const TrainingCorpus& corpus) {
  FittedModel model;
  model.subject_id = corpus.subject_id();
  std::optional<TrainingCorpus> plain;
  if (const auto eg = corpus.mode_index("eyeglasses")) {
    const auto& labels = corpus.modes()[*eg].labels;
    if (labels.size() != 2) throw SpecError("the eyeglasses mode must have exactly two labels");
    plain = corpus.restrict_mode("eyeglasses", labels[0]);
    const TrainingCorpus with = corpus.restrict_mode("eyeglasses", labels[1]);
    const Eigen::VectorXd without_mean = plain->matrix().rowwise().mean();
    const Eigen::VectorXd with_mean = with.matrix().rowwise().mean();
    const auto& f0 = corpus.face(0);
    model.glasses = extract_overlay(with_mean, without_mean, f0.width, f0.height);
  }
  const TrainingCorpus& train = plain ? *plain : corpus;
  const WhiteningModel whitening = fit_whitening(train);
  model.basis = fit_mmda(train, whitening);
  model.attacker_face = train.face(0).data;
  model.attacker_residual = decompose(model.basis, train.face(0)).residual();
  return model;
}

std::string serialize_model(const FittedModel& model) {
  const auto& b = model.basis;
  const auto& w = b.whitening;
  json j;
  j["format"] = kFormat;
  j["subject_id"] = model.subject_id;
  j["d"] = w.dimension();
  j["width"] = w.width;
  j["height"] = w.height;
  j["rank"] = w.rank();
  j["nominal_rank"] = w.nominal_rank;
  j["mean"] = pack(w.mean);
  j["variances"] = pack(w.variances);
  j["P"] = pack(w.whitening);
  j["P_r"] = pack(w.dewhitening);
  j["V"] = pack(b.axes);
  json modes = json::array();
  for (const auto& m : b.modes) {
    json coords = json::array();
    for (const auto& c : m.label_coords) coords.push_back(pack(c));
    modes.push_back(json{{"name", m.name}, {"labels", m.labels}, {"columns", range_json(m.columns)},
                         {"label_coords", std::move(coords)}});
  }
  j["modes"] = std::move(modes);
  j["residual"] = range_json(b.residual);
  j["attacker_residual"] = pack(model.attacker_residual);
  j["attacker_face"] = pack(model.attacker_face);
  if (model.glasses) {
    const auto& g = *model.glasses;
    j["overlay"] = json{{"width", g.width}, {"height", g.height}, {"full_strength_g", g.full_strength_g},
                        {"value", pack(g.value)}, {"alpha", pack(g.alpha)}};
  }
  return j.dump(1) + "\n";
}

FittedModel parse_model(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("model file is not JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("format", std::string()) != kFormat) throw ParseError("not an mmda-v1 model file");
  try {
    FittedModel model;
    auto& b = model.basis;
    auto& w = b.whitening;
    const auto d = j.at("d").get<Eigen::Index>();
    const auto r = j.at("rank").get<Eigen::Index>();
    model.subject_id = j.value("subject_id", std::string("attacker"));
    w.width = j.at("width").get<int>();
    w.height = j.at("height").get<int>();
    w.nominal_rank = j.at("nominal_rank").get<Eigen::Index>();
    w.mean = unpack_vector(j.at("mean"), d);
    w.variances = unpack_vector(j.at("variances"), r);
    w.whitening = unpack_matrix(j.at("P"));
    w.dewhitening = unpack_matrix(j.at("P_r"));
    b.axes = unpack_matrix(j.at("V"));
    if (w.whitening.rows() != d || w.whitening.cols() != r || w.dewhitening.rows() != d ||
        w.dewhitening.cols() != r || b.axes.rows() != r || b.axes.cols() != r) {
      throw ShapeError("model matrices have inconsistent shapes");
    }
    for (const auto& m : j.at("modes")) {
      ModeSlice slice;
      slice.name = m.at("name").get<std::string>();
      slice.labels = m.at("labels").get<std::vector<std::string>>();
      slice.columns = parse_range(m.at("columns"));
      for (const auto& c : m.at("label_coords")) slice.label_coords.push_back(unpack_vector(c, slice.columns.width()));
      b.modes.push_back(std::move(slice));
    }
    b.residual = parse_range(j.at("residual"));
    if (b.residual.end != r) throw ShapeError("residual slice must end at the model rank");
    model.attacker_residual = unpack_vector(j.at("attacker_residual"), b.residual_width());
    model.attacker_face = unpack_vector(j.at("attacker_face"), d);
    if (const auto it = j.find("overlay"); it != j.end()) {
      OverlayAsset g;
      g.width = it->at("width").get<int>();
      g.height = it->at("height").get<int>();
      g.full_strength_g = it->at("full_strength_g").get<double>();
      g.value = unpack_vector(it->at("value"), d);
      g.alpha = unpack_vector(it->at("alpha"), d);
      model.glasses = std::move(g);
    }
    return model;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed model file: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const FittedModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << serialize_model(model);
  if (!out) throw IoError("failed writing " + path.string());
}

FittedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_model(buf.str());
}

}  // namespace realface
