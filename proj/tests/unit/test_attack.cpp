#include <cmath>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "realface/attack.hpp"
#include "realface/error.hpp"
#include "realface/rng.hpp"
#include "support.hpp"

namespace rf = realface;
using rf::testing::canonical_model;

namespace {

struct Fixture {
  rf::Synthesizer synth{canonical_model().basis, canonical_model().attacker_residual};
  rf::BoundBox box = rf::BoundBox::defaults_for(canonical_model().basis);
  rf::FaceVector neutral = synth(rf::ParamVector{Eigen::VectorXd::Zero(6), 0.0});

  std::vector<rf::GalleryEntry> gallery(double similarity, std::size_t size = 20, std::uint64_t seed = 3) const {
    rf::PopulationModel pop;
    pop.pixel_sigma = 0.11;
    pop.center_face = neutral.data;
    return rf::generate_synthetic_gallery(seed, neutral.size(), size, neutral, similarity, pop);
  }
};

class CountingOracle : public rf::Oracle {
 public:
  CountingOracle(const rf::Gallery& g, std::size_t fail_after = SIZE_MAX, bool nan_every_other = false)
      : inner_(g, rf::Metric::euclidean), fail_after_(fail_after), nan_(nan_every_other) {}
  rf::MatchResult query(const rf::FaceVector& probe) override {
    if (++count_ > fail_after_) throw rf::OracleUnavailable("gone");
    auto m = inner_.query(probe);
    if (nan_ && count_ % 2 == 0) m.score = std::nan("");
    return m;
  }
  rf::Polarity polarity() const override { return rf::Polarity::distance; }
  std::size_t count() const { return count_; }

 private:
  rf::BuiltinOracle inner_;
  std::size_t fail_after_;
  bool nan_;
  std::size_t count_ = 0;
};

rf::AttackSpec break_in(std::uint64_t seed) {
  rf::AttackSpec s;
  s.type = rf::AttackType::break_in;
  s.policy = {rf::Polarity::distance, 0.5};
  s.seed = seed;
  return s;
}

}  // namespace

TEST(AttackSpec, ValidationRules) {
  rf::AttackSpec s;
  s.type = rf::AttackType::impersonation;
  EXPECT_THROW(s.validate(), rf::SpecError);
  s.victim_id = "v";
  EXPECT_NO_THROW(s.validate());
  s.type = rf::AttackType::partial_evasion;
  EXPECT_THROW(s.validate(), rf::SpecError);
  s.attacker_id = "v";
  EXPECT_THROW(s.validate(), rf::SpecError);  // same id twice
  s.attacker_id = "a";
  EXPECT_NO_THROW(s.validate());
  s = {};
  s.type = rf::AttackType::full_evasion;
  EXPECT_THROW(s.validate(), rf::SpecError);
  s = {};
  s.init = rf::InitPolicy::from_victim;
  EXPECT_THROW(s.validate(), rf::SpecError);
  EXPECT_EQ(rf::parse_attack_type("partial_evasion"), rf::AttackType::partial_evasion);
  EXPECT_THROW(rf::parse_attack_type("dodge"), rf::SpecError);
  EXPECT_THROW(rf::parse_init_policy("zero"), rf::SpecError);
}

TEST(AttackObjective, PerTypeDefinitions) {
  rf::AttackSpec s;
  s.policy = {rf::Polarity::confidence, 0.65};
  s.victim_id = "v";
  s.attacker_id = "a";
  const rf::MatchResult hit{"v", 0.7, rf::Polarity::confidence};
  const rf::MatchResult miss{"w", 0.7, rf::Polarity::confidence};
  s.type = rf::AttackType::break_in;
  EXPECT_NEAR(rf::attack_objective(s, miss), 0.3, 1e-12);
  s.type = rf::AttackType::impersonation;
  EXPECT_NEAR(rf::attack_objective(s, hit), 0.3, 1e-12);
  EXPECT_NEAR(rf::attack_objective(s, miss), 1.3, 1e-12);
  s.type = rf::AttackType::full_evasion;
  EXPECT_NEAR(rf::attack_objective(s, miss), -0.3, 1e-12);
  EXPECT_THROW(rf::attack_objective(s, {"v", 0.1, rf::Polarity::distance}), rf::PolarityError);
}

TEST(Adjudicate, OutcomeTable) {
  const rf::ThresholdPolicy p{rf::Polarity::distance, 0.5};
  const std::optional<std::string> a = "att", v = "vic";
  const rf::MatchResult victim_pass{"vic", 0.4, rf::Polarity::distance};
  const rf::MatchResult other_pass{"zed", 0.4, rf::Polarity::distance};
  const rf::MatchResult self_pass{"att", 0.4, rf::Polarity::distance};
  const rf::MatchResult victim_fail{"vic", 0.6, rf::Polarity::distance};
  using T = rf::AttackType;
  const auto ok = [&](T t, const rf::MatchResult& m) { return rf::adjudicate(t, m, p, a, v) == rf::Outcome::success; };
  EXPECT_TRUE(ok(T::break_in, other_pass));
  EXPECT_FALSE(ok(T::break_in, victim_fail));
  EXPECT_TRUE(ok(T::impersonation, victim_pass));
  EXPECT_FALSE(ok(T::impersonation, other_pass));
  EXPECT_TRUE(ok(T::partial_evasion, victim_pass));
  EXPECT_FALSE(ok(T::partial_evasion, self_pass));
  EXPECT_TRUE(ok(T::full_evasion, victim_fail));
  EXPECT_FALSE(ok(T::full_evasion, self_pass));
  EXPECT_FALSE(ok(T::break_in, {"vic", std::nan(""), rf::Polarity::distance}));
}

TEST(RunAttack, BreakInStopsAtTheFirstPassingQuery) {
  Fixture fx;
  const auto gallery = rf::enroll(fx.gallery(0.9), rf::EmbeddingSpec::raw());
  CountingOracle oracle(gallery);
  rf::AttackContext ctx{&fx.synth, fx.box, &oracle, {}, {}};
  const auto r = rf::run_attack(break_in(1), ctx);
  ASSERT_EQ(r.outcome, rf::Outcome::success);
  EXPECT_EQ(r.stop_reason, rf::StopReason::stop_rule);
  ASSERT_GE(r.trace.size(), 2u);
  // Every optimizer query before the winning one failed the threshold.
  for (std::size_t i = 0; i + 2 < r.trace.size(); ++i) EXPECT_GT(r.trace[i].value, 0.5);
  EXPECT_LE(r.trace[r.trace.size() - 2].value, 0.5);
  // The last entry is the fresh confirmation query at p_min.
  EXPECT_EQ(r.trace.back().p, r.p_min);
  EXPECT_EQ(r.evaluations, r.trace.size());
  EXPECT_EQ(r.evaluations, oracle.count());
  EXPECT_EQ(r.matched_ids.size(), r.trace.size());
  EXPECT_EQ(r.matched_ids.back(), r.final_result.id);
  EXPECT_DOUBLE_EQ(r.s_min, std::min(r.f_min, r.trace.back().value));
  EXPECT_LE(r.max_violation, 1e-12);
}

TEST(RunAttack, DeterministicPerSeed) {
  Fixture fx;
  const auto gallery = rf::enroll(fx.gallery(0.5), rf::EmbeddingSpec::raw());
  rf::BuiltinOracle oracle(gallery, rf::Metric::euclidean);
  rf::AttackContext ctx{&fx.synth, fx.box, &oracle, {}, {}};
  EXPECT_EQ(rf::report_to_json(rf::run_attack(break_in(9), ctx)), rf::report_to_json(rf::run_attack(break_in(9), ctx)));
  EXPECT_NE(rf::run_attack(break_in(9), ctx).p0, rf::run_attack(break_in(10), ctx).p0);
}

TEST(RunAttack, UnavailableOracleAborts) {
  Fixture fx;
  const auto gallery = rf::enroll(fx.gallery(0.0), rf::EmbeddingSpec::raw());
  CountingOracle oracle(gallery, 5);
  rf::AttackContext ctx{&fx.synth, fx.box, &oracle, {}, {}};
  const auto r = rf::run_attack(break_in(2), ctx);
  EXPECT_EQ(r.outcome, rf::Outcome::aborted);
  EXPECT_NE(r.abort_reason.find("gone"), std::string::npos);
  EXPECT_EQ(r.evaluations, 5u);
}

TEST(RunAttack, NanAnswersAreSurvivable) {
  Fixture fx;
  const auto gallery = rf::enroll(fx.gallery(0.0), rf::EmbeddingSpec::raw());
  CountingOracle oracle(gallery, SIZE_MAX, true);
  rf::AttackContext ctx{&fx.synth, fx.box, &oracle, {}, {}};
  auto spec = break_in(4);
  spec.optimizer.max_evals = 60;
  const auto r = rf::run_attack(spec, ctx);
  EXPECT_NE(r.outcome, rf::Outcome::aborted);
  EXPECT_TRUE(std::isfinite(r.f_min));
}

TEST(RunAttack, PolarityMismatchIsRejectedUpFront) {
  Fixture fx;
  const auto gallery = rf::enroll(fx.gallery(0.0), rf::EmbeddingSpec::raw());
  rf::BuiltinOracle oracle(gallery, rf::Metric::confidence);
  rf::AttackContext ctx{&fx.synth, fx.box, &oracle, {}, {}};
  EXPECT_THROW(rf::run_attack(break_in(1), ctx), rf::PolarityError);
  EXPECT_EQ(oracle.queries(), 0u);
}

TEST(RunAttack, FromVictimStartsAtTheVictimsClampedCoordinates) {
  Fixture fx;
  auto entries = fx.gallery(0.0, 10);
  const auto truth = rf::random_params(77, fx.box);
  entries.push_back({"victim", fx.synth(rf::ParamVector{truth.semantic, 0.0})});
  const auto gallery = rf::enroll(entries, rf::EmbeddingSpec::raw());
  rf::BuiltinOracle oracle(gallery, rf::Metric::euclidean);
  rf::AttackSpec spec = break_in(1);
  spec.type = rf::AttackType::impersonation;
  spec.victim_id = "victim";
  spec.init = rf::InitPolicy::from_victim;
  rf::AttackContext ctx{&fx.synth, fx.box, &oracle, rf::FaceVector(canonical_model().attacker_face), entries.back().face};
  const auto r = rf::run_attack(spec, ctx);
  EXPECT_LE((r.p0 - truth.semantic).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_EQ(r.outcome, rf::Outcome::success);
  EXPECT_EQ(r.final_result.id, "victim");
}

TEST(RunAttack, UnboundedSearchIsTraced) {
  Fixture fx;
  const auto gallery = rf::enroll(fx.gallery(0.0, 5), rf::EmbeddingSpec::raw());
  rf::BuiltinOracle oracle(gallery, rf::Metric::euclidean);
  rf::AttackContext ctx{&fx.synth, fx.box, &oracle, {}, {}};
  auto spec = break_in(3);
  spec.optimizer = rf::disable_bounds(spec.optimizer);
  const auto r = rf::run_attack(spec, ctx);
  double worst = -INFINITY;
  for (const auto& e : r.trace) worst = std::max(worst, e.violation);
  EXPECT_EQ(r.max_violation, worst);
}

TEST(Strictness, ConsistentAdjudicationHasNoViolations) {
  Fixture fx;
  const auto entries = fx.gallery(0.9, 10);
  const auto gallery = rf::enroll(entries, rf::EmbeddingSpec::raw());
  rf::BuiltinOracle oracle(gallery, rf::Metric::euclidean);
  rf::AttackContext ctx{&fx.synth, fx.box, &oracle, {}, {}};
  std::vector<rf::AttackReport> reports;
  for (std::uint64_t s = 0; s < 4; ++s) {
    auto spec = break_in(s);
    spec.type = rf::AttackType::impersonation;
    spec.victim_id = entries[s].identity;
    reports.push_back(rf::run_attack(spec, ctx));
  }
  EXPECT_EQ(rf::strictness_violations(reports), 0u);
}

TEST(Report, JsonAndTraceCsvShapes) {
  Fixture fx;
  const auto gallery = rf::enroll(fx.gallery(0.9, 8), rf::EmbeddingSpec::raw());
  rf::BuiltinOracle oracle(gallery, rf::Metric::euclidean);
  rf::AttackContext ctx{&fx.synth, fx.box, &oracle, {}, {}};
  const auto r = rf::run_attack(break_in(5), ctx);
  const auto j = nlohmann::json::parse(rf::report_to_json(r));
  EXPECT_EQ(j.at("spec").at("type"), "break_in");
  EXPECT_EQ(j.at("outcome"), rf::to_string(r.outcome));
  EXPECT_EQ(j.at("p_min").size(), 6u);
  EXPECT_EQ(j.at("evaluations"), r.evaluations);
  EXPECT_FALSE(j.contains("wall_ms"));
  EXPECT_TRUE(nlohmann::json::parse(rf::report_to_json(r, true)).contains("wall_ms"));

  std::ostringstream csv;
  rf::write_attack_trace_csv(csv, r);
  std::istringstream lines(csv.str());
  std::string header;
  std::getline(lines, header);
  EXPECT_EQ(header, "eval_index,value,p_0,p_1,p_2,p_3,p_4,p_5,violation,matched_id");
  std::size_t rows = 0;
  for (std::string line; std::getline(lines, line);) ++rows;
  EXPECT_EQ(rows, r.trace.size());
}
