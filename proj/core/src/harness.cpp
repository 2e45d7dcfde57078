#include "realface/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include <json.hpp>

#include "realface/error.hpp"
#include "realface/format.hpp"
#include "realface/rng.hpp"

namespace realface {

using ojson = nlohmann::ordered_json;

namespace {

ojson optional_number(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v;
}

std::size_t resolve_workers(std::size_t requested, const OracleConfig& oracle) {
  // External systems are queried one attempt at a time.
  if (oracle.kind != OracleConfig::Kind::builtin) return 1;
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

void require_builtin(const RunConfig& config, std::string_view study) {
  if (config.oracle.kind != OracleConfig::Kind::builtin) {
    throw SpecError(std::string(study) + " needs the builtin oracle: it enrols synthetic galleries itself");
  }
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << contents;
  if (!out) throw IoError("failed writing " + path.string());
}

template <typename Writer>
void write_with(const std::filesystem::path& path, Writer&& writer) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  writer(out);
  if (!out) throw IoError("failed writing " + path.string());
}

std::string padded(std::size_t value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, value);
  return buf;
}

AttackSpec spec_for(const Workspace& ws, const AttackPlan& plan, std::size_t attempt) {
  AttackSpec spec;
  spec.type = plan.type;
  spec.attacker_id = plan.attacker_id;
  if (!spec.attacker_id && (plan.type == AttackType::partial_evasion || plan.type == AttackType::full_evasion)) {
    spec.attacker_id = ws.model().subject_id;
  }
  spec.victim_id = plan.victim_id;
  spec.policy = ws.config().policy();
  spec.init = plan.init;
  spec.seed = derive_seed(plan.seed, attempt);
  spec.optimizer = ws.config().optimizer;
  return spec;
}

}  // namespace

FittedModel fit_from_config(const RunConfig& config) {
  if (config.corpus) return fit_model(load_corpus(*config.corpus));
  const auto& s = config.synthetic_corpus;
  SyntheticCorpusOptions options;
  options.residual_scale = s.residual_scale;
  const auto modes = s.eyeglasses ? canonical_modes_with_eyeglasses() : canonical_modes();
  return fit_model(generate_synthetic_corpus(s.seed, s.d, modes, s.effect_scale, options));
}

Workspace::Workspace(const RunConfig& config)
    : Workspace(config, config.model ? load_model(*config.model) : fit_from_config(config)) {}

Workspace::Workspace(const RunConfig& config, FittedModel model) : config_(config), model_(std::move(model)) {
  synth_ = std::make_unique<Synthesizer>(model_.basis, model_.attacker_residual, model_.glasses);
  box_ = BoundBox::defaults_for(model_.basis);
  for (const auto& [name, iv] : config_.bounds) {
    if (name == "g") {
      box_.g = iv;
      continue;
    }
    const ModeSlice* mode = model_.basis.find_mode(name);
    if (!mode) throw SpecError("bounds name unknown mode \"" + name + "\"");
    for (Eigen::Index c = mode->columns.begin; c < mode->columns.end; ++c) box_.semantic[static_cast<std::size_t>(c)] = iv;
  }
  ParamVector zero{Eigen::VectorXd::Zero(model_.basis.semantic_width()), 0.0};
  neutral_ = (*synth_)(zero);
}

std::vector<GalleryEntry> Workspace::gallery_faces(const GalleryConfig& g) const {
  if (g.manifest) return load_gallery_manifest(*g.manifest).faces;

  PopulationModel population;
  population.pixel_sigma = g.pixel_sigma;
  population.distinctiveness = g.distinctiveness;
  if (g.center == "neutral") population.center_face = neutral_.data;

  std::optional<FaceVector> base;
  if (g.base == "neutral") base = neutral_;
  if (g.base == "training") base = FaceVector(model_.attacker_face, neutral_.width, neutral_.height);

  std::vector<GalleryEntry> faces;
  if (g.size > 0) {
    faces = generate_synthetic_gallery(g.seed, model_.basis.dimension(), g.size, base, g.similarity, population);
  }
  for (std::size_t i = 0; i < g.planted; ++i) {
    ParamVector p = random_params(derive_seed(g.seed ^ 0x5eedULL, i), box_);
    p.g = 0.0;
    faces.push_back(GalleryEntry{"victim" + padded(i, 2), (*synth_)(p)});
  }
  if (g.enroll_attacker) {
    faces.push_back(GalleryEntry{model_.subject_id, FaceVector(model_.attacker_face, neutral_.width, neutral_.height)});
  }
  if (faces.empty()) throw EmptyGallery("gallery config yields no identities");
  return faces;
}

Gallery Workspace::enrolled_gallery(const GalleryConfig& g) const {
  if (g.manifest) {
    auto manifest = load_gallery_manifest(*g.manifest);
    return enroll(manifest.faces, manifest.embedding);
  }
  return enroll(gallery_faces(g), g.embedding);
}

OracleFactory make_oracle_factory(const OracleConfig& config, const Gallery* gallery, Metric metric) {
  switch (config.kind) {
    case OracleConfig::Kind::builtin:
      if (!gallery) throw SpecError("builtin oracle needs an enrolled gallery");
      return [gallery, metric] { return std::make_unique<BuiltinOracle>(*gallery, metric); };
    case OracleConfig::Kind::bridge:
    case OracleConfig::Kind::http: {
      ProtocolOracle::Options options;
      options.timeout = std::chrono::milliseconds(config.timeout_ms);
      options.retries = config.retries;
      options.probe_kind = config.probe;
      options.polarity = config.polarity.value_or(polarity_of(metric));
      if (config.kind == OracleConfig::Kind::bridge) {
        return [command = config.command, options]() -> std::unique_ptr<Oracle> {
          return std::make_unique<ProtocolOracle>(protocol::spawn_process(command), options);
        };
      }
      return [url = config.url, options]() -> std::unique_ptr<Oracle> {
        return std::make_unique<ProtocolOracle>(protocol::connect_http(url, options.timeout), options);
      };
    }
  }
  throw SpecError("unknown oracle kind");
}

CampaignResult run_campaign(const Workspace& ws, const AttackPlan& plan, const OracleFactory& oracles,
                            const std::vector<GalleryEntry>& gallery_faces, std::size_t workers) {
  // Validate before any oracle is created or queried.
  const AttackSpec first = spec_for(ws, plan, 0);
  first.validate();
  std::optional<FaceVector> victim_face;
  if (first.victim_id && !gallery_faces.empty()) {
    const auto it = std::find_if(gallery_faces.begin(), gallery_faces.end(),
                                 [&](const GalleryEntry& e) { return e.identity == *first.victim_id; });
    if (it != gallery_faces.end()) {
      victim_face = it->face;
    } else if (plan.init == InitPolicy::from_victim || ws.config().oracle.kind == OracleConfig::Kind::builtin) {
      throw UnknownIdentity("victim \"" + *first.victim_id + "\" is not in the gallery");
    }
  }
  if (plan.init == InitPolicy::from_victim && !victim_face) {
    throw UnknownIdentity("from_victim init needs the victim's face");
  }

  CampaignResult result;
  result.reports.resize(plan.attempts);
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;

  auto worker = [&] {
    std::unique_ptr<Oracle> oracle;
    std::string unavailable;
    try {
      oracle = oracles();
    } catch (const OracleUnavailable& e) {
      unavailable = e.what();
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
      return;
    }
    for (std::size_t i = next++; i < plan.attempts; i = next++) {
      const AttackSpec spec = spec_for(ws, plan, i);
      if (!oracle) {
        AttackReport aborted;
        aborted.spec = spec;
        aborted.outcome = Outcome::aborted;
        aborted.abort_reason = unavailable;
        aborted.final_result.score = std::numeric_limits<double>::quiet_NaN();
        aborted.s_min = std::numeric_limits<double>::infinity();
        result.reports[i] = std::move(aborted);
        continue;
      }
      try {
        AttackContext ctx{&ws.synthesizer(), ws.box(), oracle.get(),
                          FaceVector(ws.model().attacker_face, ws.neutral_face().width, ws.neutral_face().height),
                          victim_face};
        result.reports[i] = run_attack(spec, ctx);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = plan.attempts;
        return;
      }
    }
  };

  const std::size_t n = std::min(std::max<std::size_t>(workers, 1), std::max<std::size_t>(plan.attempts, 1));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (error) std::rethrow_exception(error);

  result.summary = summarize(plan.type, result.reports);
  audit(result.summary, result.reports);
  return result;
}

CampaignSummary summarize(AttackType type, const std::vector<AttackReport>& reports) {
  CampaignSummary s;
  s.type = type;
  s.attempts = reports.size();
  std::set<std::string> victims;
  double min_sum = 0.0;
  std::size_t completed = 0;
  for (const auto& r : reports) {
    if (r.outcome == Outcome::aborted) {
      ++s.aborted;
      continue;
    }
    ++completed;
    min_sum += r.s_min;
    if (r.outcome == Outcome::success) {
      ++s.successes;
      victims.insert(r.final_result.id);
    }
  }
  s.unique_victims = victims.size();
  if (completed > 0) {
    s.success_rate = static_cast<double>(s.successes) / static_cast<double>(completed);
    s.mean_min_score = min_sum / static_cast<double>(completed);
  }
  return s;
}

void audit(const CampaignSummary& summary, const std::vector<AttackReport>& reports) {
  const CampaignSummary again = summarize(summary.type, reports);
  const auto same = [](const std::optional<double>& a, const std::optional<double>& b) {
    return a.has_value() == b.has_value() && (!a || *a == *b || (std::isnan(*a) && std::isnan(*b)));
  };
  if (again.attempts != summary.attempts || again.successes != summary.successes ||
      again.aborted != summary.aborted || again.unique_victims != summary.unique_victims ||
      !same(again.success_rate, summary.success_rate) || !same(again.mean_min_score, summary.mean_min_score)) {
    throw SpecError("campaign summary does not match its reports");
  }
  if (summary.successes > summary.attempts || summary.unique_victims > summary.successes) {
    throw SpecError("campaign summary violates successes <= attempts or unique victims <= successes");
  }
}

std::string summary_to_json(const CampaignSummary& s) {
  ojson j;
  j["type"] = to_string(s.type);
  j["attempts"] = s.attempts;
  j["successes"] = s.successes;
  j["aborted"] = s.aborted;
  j["unique_victims"] = s.unique_victims;
  j["success_rate"] = optional_number(s.success_rate);
  j["success_rate_denominator"] = "attempts - aborted";
  j["mean_min_score"] = optional_number(s.mean_min_score);
  return j.dump(2) + "\n";
}

std::vector<SweepRow> sweep_gallery_size(const Workspace& ws, const SweepConfig& sweep, std::size_t workers,
                                         std::vector<AttackReport>* reports) {
  const GalleryConfig& base = ws.config().gallery;
  std::size_t available = sweep.pool;
  if (base.manifest) available = load_gallery_manifest(*base.manifest).faces.size();

  std::vector<std::size_t> sizes;
  for (std::size_t s : sweep.sizes) {
    if (s == 0) throw SpecError("gallery sizes must be positive");
    if (s > available) {
      std::clog << "warning: gallery size " << s << " exceeds the " << available << " available identities; using "
                << available << "\n";
      s = available;
    }
    sizes.push_back(s);
  }
  std::sort(sizes.begin(), sizes.end());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());

  std::vector<SweepRow> rows(sizes.size());
  std::vector<double> min_sums(sizes.size(), 0.0);
  std::vector<std::size_t> completed(sizes.size(), 0);
  for (std::size_t k = 0; k < sizes.size(); ++k) rows[k].size = sizes[k];
  if (sizes.empty()) return rows;

  for (std::size_t c = 0; c < sweep.campaigns; ++c) {
    GalleryConfig pool_cfg = base;
    pool_cfg.size = available;
    pool_cfg.similarity = sweep.similarity;
    pool_cfg.seed = derive_seed(base.seed, c);
    pool_cfg.planted = 0;
    pool_cfg.enroll_attacker = false;
    const auto pool = ws.gallery_faces(pool_cfg);

    AttackPlan plan;
    plan.type = AttackType::break_in;
    plan.attempts = sweep.attempts;
    plan.seed = derive_seed(sweep.seed, c);

    for (std::size_t k = 0; k < sizes.size(); ++k) {
      std::vector<GalleryEntry> prefix(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(sizes[k]));
      const Gallery gallery = enroll(prefix, base.manifest ? load_gallery_manifest(*base.manifest).embedding
                                                           : base.embedding);
      auto result = run_campaign(ws, plan, make_oracle_factory(OracleConfig{}, &gallery, ws.config().metric), prefix,
                                 workers);
      rows[k].attempts += result.summary.attempts;
      rows[k].successes += result.summary.successes;
      for (auto& r : result.reports) {
        if (r.outcome == Outcome::aborted) continue;
        min_sums[k] += r.s_min;
        ++completed[k];
      }
      if (reports) std::move(result.reports.begin(), result.reports.end(), std::back_inserter(*reports));
    }
  }
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    rows[k].mean_min_score =
        completed[k] ? min_sums[k] / static_cast<double>(completed[k]) : std::numeric_limits<double>::quiet_NaN();
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "size,attempts,successes,mean_min_score\n";
  for (const auto& r : rows) {
    out << r.size << ',' << r.attempts << ',' << r.successes << ',' << format_double(r.mean_min_score) << '\n';
  }
}

std::vector<VariationRow> variation_study(const Workspace& ws, const VariationConfig& study, std::size_t workers) {
  std::vector<VariationRow> rows;
  for (const auto& vg : study.galleries) {
    VariationRow row;
    row.label = vg.label;
    for (std::size_t c = 0; c < study.campaigns; ++c) {
      GalleryConfig g = ws.config().gallery;
      g.manifest.reset();
      g.similarity = vg.similarity;
      g.size = vg.size;
      g.seed = derive_seed(vg.seed, c);
      g.planted = 0;
      g.enroll_attacker = false;
      const auto faces = ws.gallery_faces(g);
      const Gallery gallery = enroll(faces, g.embedding);

      AttackPlan plan;
      plan.type = AttackType::break_in;
      plan.attempts = study.attempts;
      plan.seed = derive_seed(study.seed, c);
      const auto result =
          run_campaign(ws, plan, make_oracle_factory(OracleConfig{}, &gallery, ws.config().metric), faces, workers);
      row.attempts += result.summary.attempts;
      row.successes += result.summary.successes;
      row.unique_victims += result.summary.unique_victims;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_variation_csv(std::ostream& out, const std::vector<VariationRow>& rows) {
  out << "gallery_label,attempts,successes,unique_victims\n";
  for (const auto& r : rows) {
    std::string label = r.label;
    if (label.find_first_of(",\"\n") != std::string::npos) {
      std::string quoted = "\"";
      for (char ch : label) {
        if (ch == '"') quoted += '"';
        quoted += ch;
      }
      label = quoted + "\"";
    }
    out << label << ',' << r.attempts << ',' << r.successes << ',' << r.unique_victims << '\n';
  }
}

ScoreStudy score_study(const ScoreDistConfig& study, Eigen::Index d, Metric metric) {
  if (study.identities < 2) throw SpecError("score study needs at least two identities");
  PopulationModel population;
  population.pixel_sigma = study.pixel_sigma;
  const auto enrolled = generate_synthetic_gallery(study.seed, d, study.identities, std::nullopt, 0.0, population);
  std::vector<GalleryEntry> probes;
  probes.reserve(enrolled.size());
  for (std::size_t i = 0; i < enrolled.size(); ++i) {
    Rng rng(derive_seed(derive_seed(study.seed, 0xC0FFEE), i));
    std::normal_distribution<double> normal(0.0, 1.0);
    const double noise = study.capture_noise * std::exp(study.capture_spread * normal(rng));
    probes.push_back(
        GalleryEntry{enrolled[i].identity, FaceVector(enrolled[i].face.data + noise * gaussian_vector(rng, d))});
  }
  const Gallery gallery = enroll(enrolled, EmbeddingSpec::raw());
  ScoreStudy out;
  out.distribution = genuine_impostor(gallery, probes, metric);
  out.histogram = histogram(out.distribution, study.bin_width);
  return out;
}

std::vector<HistogramRow> histogram(const ScoreDistribution& dist, double bin_width) {
  if (!(bin_width > 0.0)) throw SpecError("bin width must be positive");
  std::vector<HistogramRow> rows;
  if (dist.genuine.empty() && dist.impostor.empty()) return rows;
  const auto bin = [bin_width](double s) { return static_cast<long long>(std::floor(s / bin_width)); };
  long long lo = std::numeric_limits<long long>::max();
  long long hi = std::numeric_limits<long long>::min();
  for (const auto* scores : {&dist.genuine, &dist.impostor}) {
    for (double s : *scores) {
      lo = std::min(lo, bin(s));
      hi = std::max(hi, bin(s));
    }
  }
  rows.resize(static_cast<std::size_t>(hi - lo + 1));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    rows[k].center = (static_cast<double>(lo + static_cast<long long>(k)) + 0.5) * bin_width;
  }
  for (double s : dist.genuine) ++rows[static_cast<std::size_t>(bin(s) - lo)].genuine;
  for (double s : dist.impostor) ++rows[static_cast<std::size_t>(bin(s) - lo)].impostor;
  return rows;
}

void write_histogram_csv(std::ostream& out, const std::vector<HistogramRow>& rows) {
  out << "bin_center,genuine,impostor\n";
  for (const auto& r : rows) out << format_double(r.center) << ',' << r.genuine << ',' << r.impostor << '\n';
}

int cmd_fit(const RunConfig& config, std::ostream& log) {
  const FittedModel model = fit_from_config(config);
  const auto path = config.out / "model.json";
  std::filesystem::create_directories(config.out);
  save_model(path, model);
  log << "wrote " << path.string() << " (semantic width " << model.basis.semantic_width() << ", residual width "
      << model.basis.residual_width() << ")\n";
  return 0;
}

int cmd_attack(const RunConfig& config, std::ostream& log) {
  if (config.attacks.empty()) throw SpecError("run config lists no attacks");
  const Workspace ws(config);
  const auto faces = ws.gallery_faces(config.gallery);
  std::optional<Gallery> gallery;
  if (config.oracle.kind == OracleConfig::Kind::builtin) gallery.emplace(ws.enrolled_gallery(config.gallery));
  const auto oracles = make_oracle_factory(config.oracle, gallery ? &*gallery : nullptr, config.metric);
  const std::size_t workers = resolve_workers(config.workers, config.oracle);

  ojson summaries = ojson::array();
  for (std::size_t k = 0; k < config.attacks.size(); ++k) {
    const auto& plan = config.attacks[k];
    const auto result = run_campaign(ws, plan, oracles, faces, workers);
    const auto dir = config.out / "attack" / (padded(k, 2) + "_" + std::string(to_string(plan.type)));
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < result.reports.size(); ++i) {
      const auto& r = result.reports[i];
      write_file(dir / ("attempt_" + padded(i, 3) + ".json"), report_to_json(r, config.record_wall_time));
      write_with(dir / ("attempt_" + padded(i, 3) + "_trace.csv"),
                 [&](std::ostream& out) { write_attack_trace_csv(out, r); });
    }
    write_file(dir / "summary.json", summary_to_json(result.summary));
    summaries.push_back(ojson::parse(summary_to_json(result.summary)));
    log << to_string(plan.type) << ": " << result.summary.successes << "/"
        << (result.summary.attempts - result.summary.aborted) << " succeeded";
    if (result.summary.aborted) log << " (" << result.summary.aborted << " aborted)";
    log << ", " << result.summary.unique_victims << " unique victim(s)\n";
  }
  ojson j;
  j["campaigns"] = std::move(summaries);
  write_file(config.out / "attack" / "summary.json", j.dump(2) + "\n");
  return 0;
}

int cmd_sweep_gallery_size(const RunConfig& config, std::ostream& log) {
  require_builtin(config, "sweep");
  const Workspace ws(config);
  const auto rows = sweep_gallery_size(ws, config.sweep, resolve_workers(config.workers, config.oracle));
  const auto path = config.out / "sweep.csv";
  write_with(path, [&](std::ostream& out) { write_sweep_csv(out, rows); });
  log << "wrote " << path.string() << " (" << rows.size() << " sizes)\n";
  return 0;
}

int cmd_variation_study(const RunConfig& config, std::ostream& log) {
  require_builtin(config, "variation");
  const Workspace ws(config);
  const auto rows = variation_study(ws, config.variation, resolve_workers(config.workers, config.oracle));
  const auto path = config.out / "variation.csv";
  write_with(path, [&](std::ostream& out) { write_variation_csv(out, rows); });
  log << "wrote " << path.string() << " (" << rows.size() << " galleries)\n";
  return 0;
}

int cmd_score_dist(const RunConfig& config, std::ostream& log) {
  require_builtin(config, "scoredist");
  Eigen::Index d = config.synthetic_corpus.d;
  if (config.model) {
    d = load_model(*config.model).basis.dimension();
  } else if (config.corpus) {
    d = load_corpus(*config.corpus).dimension();
  }
  const ScoreStudy study = score_study(config.scoredist, d, config.metric);
  const auto& dist = study.distribution;
  const auto mean = [](const std::vector<double>& v) {
    return v.empty() ? std::numeric_limits<double>::quiet_NaN()
                     : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };

  write_with(config.out / "scoredist.csv", [&](std::ostream& out) { write_histogram_csv(out, study.histogram); });
  ojson j;
  j["metric"] = to_string(config.metric);
  j["polarity"] = to_string(dist.polarity);
  j["identities"] = config.scoredist.identities;
  j["genuine_count"] = dist.genuine.size();
  j["impostor_count"] = dist.impostor.size();
  j["genuine_mean"] = optional_number(mean(dist.genuine));
  j["impostor_mean"] = optional_number(mean(dist.impostor));
  j["eer"] = optional_number(dist.eer);
  j["bin_width"] = config.scoredist.bin_width;
  write_file(config.out / "scoredist.json", j.dump(2) + "\n");
  log << "eer " << format_double(dist.eer) << "\n";
  return 0;
}

}  // namespace realface
