#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "realface/attack.hpp"
#include "realface/corpus.hpp"
#include "realface/matcher.hpp"
#include "realface/model_io.hpp"
#include "realface/optimizer.hpp"
#include "realface/oracle.hpp"
#include "realface/protocol.hpp"
#include "realface/synthesis.hpp"

namespace realface {

struct SyntheticCorpusConfig {
  std::uint64_t seed = 7;
  Eigen::Index d = 256;
  double effect_scale = 1.5;
  double residual_scale = 0.25;
  bool eyeglasses = false;
};

/// Either a gallery manifest or a seeded synthetic population.
struct GalleryConfig {
  std::optional<std::filesystem::path> manifest;

  std::uint64_t seed = 11;
  std::size_t size = 40;
  double similarity = 0.0;
  /// Face the identities are mixed toward: "neutral" (S(0)), "training"
  /// (the attacker's reference training face) or "none".
  std::string base = "neutral";
  /// "neutral" centres the population on S(0); "constant" on a flat face.
  std::string center = "neutral";
  double pixel_sigma = 0.11;
  double distinctiveness = 0.25;
  /// Extra identities "victimNN" synthesized inside the realism box.
  std::size_t planted = 0;
  /// Enrol the attacker's reference face under the corpus subject id.
  bool enroll_attacker = false;
  EmbeddingSpec embedding;
};

struct OracleConfig {
  enum class Kind { builtin, bridge, http };
  Kind kind = Kind::builtin;
  std::string command;  // bridge
  std::string url;      // http
  int timeout_ms = 5000;
  int retries = 2;
  protocol::ProbeKind probe = protocol::ProbeKind::vector;
  std::optional<Polarity> polarity;  // defaults to the metric's polarity
};

/// Parses "builtin", "bridge:CMD" or "http:URL" (URL may itself be http://...).
OracleConfig parse_oracle_selector(std::string_view selector, OracleConfig base = {});

struct AttackPlan {
  AttackType type = AttackType::break_in;
  std::optional<std::string> attacker_id;
  std::optional<std::string> victim_id;
  InitPolicy init = InitPolicy::random;
  std::size_t attempts = 20;
  std::uint64_t seed = 1;
};

struct SweepConfig {
  std::vector<std::size_t> sizes{10, 50, 100, 150, 200, 250, 300, 330};
  std::size_t attempts = 10;
  double similarity = 0.5;
  /// Identities available to the nested galleries (synthetic pool size).
  std::size_t pool = 330;
  std::size_t campaigns = 1;
  std::uint64_t seed = 1;
};

struct VariationGallery {
  std::string label;
  double similarity = 0.0;
  std::size_t size = 50;
  std::uint64_t seed = 0;
};

struct VariationConfig {
  std::vector<VariationGallery> galleries;
  std::size_t attempts = 20;
  std::size_t campaigns = 1;
  std::uint64_t seed = 1;
};

struct ScoreDistConfig {
  std::size_t identities = 35;
  double capture_noise = 0.04;
  /// Per-probe capture quality: noise is scaled by LogNormal(0, capture_spread).
  double capture_spread = 0.35;
  double bin_width = 0.02;
  double pixel_sigma = 0.05;
  std::uint64_t seed = 3;
};

struct RunConfig {
  std::filesystem::path base_dir = ".";
  std::optional<std::filesystem::path> corpus;
  SyntheticCorpusConfig synthetic_corpus;
  std::optional<std::filesystem::path> model;
  std::map<std::string, Interval> bounds;  // per-mode overrides; "g" for the eyeglass control
  OptimizerConfig optimizer;
  Metric metric = Metric::euclidean;
  double threshold = 0.5;
  OracleConfig oracle;
  GalleryConfig gallery;
  std::vector<AttackPlan> attacks;
  SweepConfig sweep;
  VariationConfig variation;
  ScoreDistConfig scoredist;
  std::filesystem::path out = "out";
  std::uint64_t seed = 1;
  std::size_t workers = 0;  // 0 = hardware concurrency
  bool record_wall_time = false;

  ThresholdPolicy policy() const;
};

/// Schema-checked parse; relative paths resolve against `base_dir`.
RunConfig parse_run_config(std::string_view json_text, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

/// Fitted model plus everything derived from it that attacks need.
class Workspace {
 public:
  explicit Workspace(const RunConfig& config);
  Workspace(const RunConfig& config, FittedModel model);
  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;

  const RunConfig& config() const noexcept { return config_; }
  const FittedModel& model() const noexcept { return model_; }
  const Synthesizer& synthesizer() const noexcept { return *synth_; }
  const BoundBox& box() const noexcept { return box_; }
  /// S(0): the attacker's neutral synthesis.
  const FaceVector& neutral_face() const noexcept { return neutral_; }

  /// Synthetic gallery per `gallery` (with size and similarity as given),
  /// or the manifest's faces.
  std::vector<GalleryEntry> gallery_faces(const GalleryConfig& gallery) const;
  /// gallery_faces() enrolled with the manifest's or the config's embedding.
  Gallery enrolled_gallery(const GalleryConfig& gallery) const;

 private:
  RunConfig config_;
  FittedModel model_;
  std::unique_ptr<Synthesizer> synth_;
  BoundBox box_;
  FaceVector neutral_;
};

/// Loads the corpus (or builds the synthetic one) and fits the model.
FittedModel fit_from_config(const RunConfig& config);

struct CampaignSummary {
  AttackType type = AttackType::break_in;
  std::size_t attempts = 0;
  std::size_t successes = 0;
  std::size_t aborted = 0;
  std::size_t unique_victims = 0;
  /// successes / (attempts - aborted); empty when nothing completed.
  std::optional<double> success_rate;
  std::optional<double> mean_min_score;
};

struct CampaignResult {
  std::vector<AttackReport> reports;
  CampaignSummary summary;
};

/// Builds an oracle for one worker. Built-in oracles share `gallery`.
using OracleFactory = std::function<std::unique_ptr<Oracle>()>;
OracleFactory make_oracle_factory(const OracleConfig& config, const Gallery* gallery, Metric metric);

/// Runs `plan.attempts` attacks with seeds derive_seed(plan.seed, i) on up to
/// `workers` threads; results are ordered by attempt.
CampaignResult run_campaign(const Workspace& ws, const AttackPlan& plan, const OracleFactory& oracles,
                            const std::vector<GalleryEntry>& gallery_faces, std::size_t workers);

CampaignSummary summarize(AttackType type, const std::vector<AttackReport>& reports);
/// Re-derives the summary from the reports; throws SpecError on mismatch.
void audit(const CampaignSummary& summary, const std::vector<AttackReport>& reports);

std::string summary_to_json(const CampaignSummary& summary);

struct SweepRow {
  std::size_t size = 0;
  std::size_t attempts = 0;
  std::size_t successes = 0;
  double mean_min_score = 0.0;
};

/// Break-in campaigns on nested galleries (prefixes of one pool) with the
/// same attempt seeds at every size, summed over `campaigns` seeds.
std::vector<SweepRow> sweep_gallery_size(const Workspace& ws, const SweepConfig& sweep, std::size_t workers,
                                         std::vector<AttackReport>* reports = nullptr);
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

struct VariationRow {
  std::string label;
  std::size_t attempts = 0;
  std::size_t successes = 0;
  std::size_t unique_victims = 0;
};

std::vector<VariationRow> variation_study(const Workspace& ws, const VariationConfig& study, std::size_t workers);
void write_variation_csv(std::ostream& out, const std::vector<VariationRow>& rows);

struct HistogramRow {
  double center = 0.0;
  std::size_t genuine = 0;
  std::size_t impostor = 0;
};

struct ScoreStudy {
  ScoreDistribution distribution;
  std::vector<HistogramRow> histogram;
};

/// Enrols `identities` synthetic faces and probes each with a noisy capture.
ScoreStudy score_study(const ScoreDistConfig& study, Eigen::Index d, Metric metric);
std::vector<HistogramRow> histogram(const ScoreDistribution& dist, double bin_width);
void write_histogram_csv(std::ostream& out, const std::vector<HistogramRow>& rows);

// Subcommands. Each writes its outputs under config.out and returns 0.
int cmd_fit(const RunConfig& config, std::ostream& log);
int cmd_attack(const RunConfig& config, std::ostream& log);
int cmd_sweep_gallery_size(const RunConfig& config, std::ostream& log);
int cmd_variation_study(const RunConfig& config, std::ostream& log);
int cmd_score_dist(const RunConfig& config, std::ostream& log);

}  // namespace realface
