#include <fstream>
#include <initializer_list>
#include <sstream>

#include <json.hpp>

#include "realface/error.hpp"
#include "realface/harness.hpp"

namespace realface {

using json = nlohmann::json;

namespace {

// Rejects keys outside `allowed` so typos fail loudly instead of silently
// falling back to defaults.
void check_keys(const json& obj, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw SpecError(std::string(where) + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    bool known = false;
    for (const auto a : allowed) known = known || key == a;
    if (!known) throw SpecError("unknown key \"" + key + "\" in " + std::string(where));
  }
}

template <typename T>
void read(const json& obj, const char* key, T& target) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    target = it->get<T>();
  } catch (const json::exception&) {
    throw SpecError(std::string("\"") + key + "\" has the wrong type");
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::filesystem::path existing(const std::filesystem::path& base, const json& value, const char* what) {
  if (!value.is_string()) throw SpecError(std::string(what) + " must be a path string");
  auto path = resolve(base, value.get<std::string>());
  if (!std::filesystem::exists(path)) throw SpecError(std::string(what) + " not found: " + path.string());
  return path;
}

Interval interval(const json& j, const std::string& name) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw SpecError("bound for \"" + name + "\" must be [lo, hi]");
  }
  Interval iv{j[0].get<double>(), j[1].get<double>()};
  if (!(iv.lo < iv.hi)) throw SpecError("bound for \"" + name + "\" must have lo < hi");
  return iv;
}

EmbeddingSpec embedding(const json& j) {
  check_keys(j, "embedding", {"kind", "k"});
  const auto kind = j.value("kind", std::string("raw"));
  if (kind == "raw") return EmbeddingSpec::raw();
  if (kind == "pca-k" || kind == "pca") return EmbeddingSpec::pca(j.at("k").get<Eigen::Index>());
  throw SpecError("unknown embedding kind '" + kind + "'");
}

void parse_gallery(const json& j, const std::filesystem::path& base, GalleryConfig& g) {
  check_keys(j, "gallery", {"manifest", "seed", "size", "similarity", "base", "center", "pixel_sigma",
                            "distinctiveness", "planted", "enroll_attacker", "embedding"});
  if (j.contains("manifest")) g.manifest = existing(base, j.at("manifest"), "gallery manifest");
  read(j, "seed", g.seed);
  read(j, "size", g.size);
  read(j, "similarity", g.similarity);
  read(j, "base", g.base);
  read(j, "center", g.center);
  read(j, "pixel_sigma", g.pixel_sigma);
  read(j, "distinctiveness", g.distinctiveness);
  read(j, "planted", g.planted);
  read(j, "enroll_attacker", g.enroll_attacker);
  if (j.contains("embedding")) g.embedding = embedding(j.at("embedding"));
  if (g.base != "neutral" && g.base != "training" && g.base != "none") {
    throw SpecError("gallery base must be \"neutral\", \"training\" or \"none\"");
  }
  if (g.center != "neutral" && g.center != "constant") throw SpecError("gallery center must be \"neutral\" or \"constant\"");
  if (g.similarity < 0.0 || g.similarity > 1.0) throw SpecError("gallery similarity must lie in [0,1]");
}

void parse_oracle(const json& j, OracleConfig& o) {
  check_keys(j, "oracle", {"kind", "command", "url", "timeout_ms", "retries", "probe", "polarity"});
  const auto kind = j.value("kind", std::string("builtin"));
  if (kind == "builtin") {
    o.kind = OracleConfig::Kind::builtin;
  } else if (kind == "bridge") {
    o.kind = OracleConfig::Kind::bridge;
  } else if (kind == "http") {
    o.kind = OracleConfig::Kind::http;
  } else {
    throw SpecError("oracle kind must be builtin, bridge or http");
  }
  read(j, "command", o.command);
  read(j, "url", o.url);
  read(j, "timeout_ms", o.timeout_ms);
  read(j, "retries", o.retries);
  if (j.contains("probe")) {
    const auto probe = j.at("probe").get<std::string>();
    if (probe == "vector") {
      o.probe = protocol::ProbeKind::vector;
    } else if (probe == "pgm") {
      o.probe = protocol::ProbeKind::pgm;
    } else {
      throw SpecError("oracle probe must be \"vector\" or \"pgm\"");
    }
  }
  if (j.contains("polarity")) o.polarity = parse_polarity(j.at("polarity").get<std::string>());
  if (o.kind == OracleConfig::Kind::bridge && o.command.empty()) throw SpecError("bridge oracle needs a command");
  if (o.kind == OracleConfig::Kind::http && o.url.empty()) throw SpecError("http oracle needs a url");
  if (o.timeout_ms <= 0 || o.retries < 0) throw SpecError("oracle timeout must be positive and retries non-negative");
}

void parse_optimizer(const json& j, OptimizerConfig& c) {
  check_keys(j, "optimizer", {"reflection", "expansion", "contraction", "shrink", "max_evals", "x_tol", "f_tol",
                              "initial_step", "enforce_bounds"});
  read(j, "reflection", c.reflection);
  read(j, "expansion", c.expansion);
  read(j, "contraction", c.contraction);
  read(j, "shrink", c.shrink);
  read(j, "max_evals", c.max_evals);
  read(j, "x_tol", c.x_tol);
  read(j, "f_tol", c.f_tol);
  read(j, "initial_step", c.initial_step);
  read(j, "enforce_bounds", c.enforce_bounds);
}

AttackPlan parse_attack(const json& j, std::uint64_t default_seed) {
  check_keys(j, "attack", {"type", "attacker", "victim", "init", "attempts", "seed"});
  AttackPlan plan;
  plan.seed = default_seed;
  if (!j.contains("type")) throw SpecError("attack needs a type");
  plan.type = parse_attack_type(j.at("type").get<std::string>());
  if (j.contains("attacker")) plan.attacker_id = j.at("attacker").get<std::string>();
  if (j.contains("victim")) plan.victim_id = j.at("victim").get<std::string>();
  if (j.contains("init")) plan.init = parse_init_policy(j.at("init").get<std::string>());
  read(j, "attempts", plan.attempts);
  read(j, "seed", plan.seed);
  return plan;
}

}  // namespace

ThresholdPolicy RunConfig::policy() const {
  return ThresholdPolicy{oracle.polarity.value_or(polarity_of(metric)), threshold};
}

OracleConfig parse_oracle_selector(std::string_view selector, OracleConfig base) {
  if (selector == "builtin") {
    base.kind = OracleConfig::Kind::builtin;
  } else if (selector.rfind("bridge:", 0) == 0 && selector.size() > 7) {
    base.kind = OracleConfig::Kind::bridge;
    base.command = std::string(selector.substr(7));
  } else if (selector.rfind("http:", 0) == 0 && selector.size() > 5) {
    base.kind = OracleConfig::Kind::http;
    const auto rest = selector.substr(5);
    base.url = rest.rfind("//", 0) == 0 ? "http:" + std::string(rest) : std::string(rest);
  } else {
    throw SpecError("--oracle must be builtin, bridge:CMD or http:URL");
  }
  return base;
}

RunConfig parse_run_config(std::string_view json_text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("run config is not valid JSON: ") + e.what());
  }
  check_keys(j, "run config",
             {"corpus", "model", "bounds", "optimizer", "metric", "threshold", "oracle", "gallery", "attacks", "sweep",
              "variation", "scoredist", "out", "seed", "workers", "record_wall_time"});

  RunConfig c;
  c.base_dir = base_dir;
  read(j, "seed", c.seed);
  read(j, "workers", c.workers);
  read(j, "threshold", c.threshold);
  read(j, "record_wall_time", c.record_wall_time);
  if (j.contains("metric")) c.metric = parse_metric(j.at("metric").get<std::string>());
  if (j.contains("out")) c.out = resolve(base_dir, j.at("out").get<std::string>());
  else c.out = base_dir / "out";

  if (j.contains("corpus")) {
    const auto& jc = j.at("corpus");
    if (jc.is_string()) {
      c.corpus = existing(base_dir, jc, "corpus manifest");
    } else {
      check_keys(jc, "corpus", {"synthetic"});
      const auto& s = jc.at("synthetic");
      check_keys(s, "corpus.synthetic", {"seed", "d", "effect_scale", "residual_scale", "eyeglasses"});
      read(s, "seed", c.synthetic_corpus.seed);
      read(s, "d", c.synthetic_corpus.d);
      read(s, "effect_scale", c.synthetic_corpus.effect_scale);
      read(s, "residual_scale", c.synthetic_corpus.residual_scale);
      read(s, "eyeglasses", c.synthetic_corpus.eyeglasses);
    }
  }
  if (j.contains("model")) c.model = existing(base_dir, j.at("model"), "model file");

  if (j.contains("bounds")) {
    const auto& jb = j.at("bounds");
    if (!jb.is_object()) throw SpecError("bounds must be an object of [lo, hi] pairs");
    for (const auto& [name, value] : jb.items()) c.bounds[name] = interval(value, name);
  }
  if (j.contains("optimizer")) parse_optimizer(j.at("optimizer"), c.optimizer);
  if (j.contains("oracle")) parse_oracle(j.at("oracle"), c.oracle);
  if (j.contains("gallery")) parse_gallery(j.at("gallery"), base_dir, c.gallery);

  if (j.contains("attacks")) {
    const auto& ja = j.at("attacks");
    if (!ja.is_array()) throw SpecError("attacks must be an array");
    for (const auto& a : ja) c.attacks.push_back(parse_attack(a, c.seed));
  }
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    check_keys(s, "sweep", {"sizes", "attempts", "similarity", "pool", "campaigns", "seed"});
    read(s, "sizes", c.sweep.sizes);
    read(s, "attempts", c.sweep.attempts);
    read(s, "similarity", c.sweep.similarity);
    read(s, "pool", c.sweep.pool);
    read(s, "campaigns", c.sweep.campaigns);
    c.sweep.seed = c.seed;
    read(s, "seed", c.sweep.seed);
  } else {
    c.sweep.seed = c.seed;
  }
  c.variation.seed = c.seed;
  if (j.contains("variation")) {
    const auto& v = j.at("variation");
    check_keys(v, "variation", {"galleries", "attempts", "campaigns", "seed"});
    read(v, "attempts", c.variation.attempts);
    read(v, "campaigns", c.variation.campaigns);
    read(v, "seed", c.variation.seed);
    if (v.contains("galleries")) {
      std::uint64_t index = 0;
      for (const auto& g : v.at("galleries")) {
        check_keys(g, "variation gallery", {"label", "similarity", "size", "seed"});
        VariationGallery vg;
        vg.seed = 100 + index++;
        read(g, "label", vg.label);
        read(g, "similarity", vg.similarity);
        read(g, "size", vg.size);
        read(g, "seed", vg.seed);
        if (vg.label.empty()) throw SpecError("variation galleries need a label");
        c.variation.galleries.push_back(std::move(vg));
      }
    }
  }
  if (j.contains("scoredist")) {
    const auto& s = j.at("scoredist");
    check_keys(s, "scoredist", {"identities", "capture_noise", "capture_spread", "bin_width", "pixel_sigma", "seed"});
    read(s, "identities", c.scoredist.identities);
    read(s, "capture_noise", c.scoredist.capture_noise);
    read(s, "capture_spread", c.scoredist.capture_spread);
    read(s, "bin_width", c.scoredist.bin_width);
    read(s, "pixel_sigma", c.scoredist.pixel_sigma);
    read(s, "seed", c.scoredist.seed);
    if (!(c.scoredist.bin_width > 0)) throw SpecError("scoredist bin_width must be positive");
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read run config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

}  // namespace realface
