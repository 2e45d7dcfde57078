#include "realface/attack.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>

#include <json.hpp>

#include "realface/error.hpp"
#include "realface/format.hpp"

namespace realface {

std::string_view to_string(AttackType type) noexcept {
  switch (type) {
    case AttackType::break_in: return "break_in";
    case AttackType::impersonation: return "impersonation";
    case AttackType::partial_evasion: return "partial_evasion";
    case AttackType::full_evasion: return "full_evasion";
  }
  return "unknown";
}

std::string_view to_string(InitPolicy init) noexcept {
  return init == InitPolicy::random ? "random" : "from_victim";
}

std::string_view to_string(Outcome outcome) noexcept {
  switch (outcome) {
    case Outcome::success: return "success";
    case Outcome::failed: return "failed";
    case Outcome::aborted: return "aborted";
  }
  return "unknown";
}

AttackType parse_attack_type(std::string_view text) {
  for (auto t : {AttackType::break_in, AttackType::impersonation, AttackType::partial_evasion, AttackType::full_evasion}) {
    if (text == to_string(t)) return t;
  }
  throw SpecError("unknown attack type '" + std::string(text) + "'");
}

InitPolicy parse_init_policy(std::string_view text) {
  if (text == "random") return InitPolicy::random;
  if (text == "from_victim") return InitPolicy::from_victim;
  throw SpecError("unknown init policy '" + std::string(text) + "'");
}

void AttackSpec::validate() const {
  const auto needs = [this](const std::optional<std::string>& field, const char* what) {
    if (!field || field->empty()) {
      throw SpecError(std::string(to_string(type)) + " attack requires " + what);
    }
  };
  switch (type) {
    case AttackType::break_in: break;
    case AttackType::impersonation: needs(victim_id, "victim_id"); break;
    case AttackType::partial_evasion:
      needs(attacker_id, "attacker_id");
      needs(victim_id, "victim_id");
      break;
    case AttackType::full_evasion: needs(attacker_id, "attacker_id"); break;
  }
  if (init == InitPolicy::from_victim) needs(victim_id, "victim_id for from_victim init");
  if (attacker_id && victim_id && *attacker_id == *victim_id) throw SpecError("victim_id must differ from attacker_id");
}

double attack_objective(const AttackSpec& spec, const MatchResult& result) {
  if (result.polarity != spec.policy.polarity) throw PolarityError("oracle polarity differs from threshold policy");
  const double s = normalized_score(result);
  switch (spec.type) {
    case AttackType::break_in: return s;
    case AttackType::impersonation:
    case AttackType::partial_evasion:
      return (spec.victim_id && result.id == *spec.victim_id) ? s : s + 1.0;
    case AttackType::full_evasion: return -s;
  }
  return s;
}

Objective objective_for(const AttackSpec& spec, const AttackContext& ctx, std::vector<MatchResult>* log) {
  spec.validate();
  if (ctx.synthesizer == nullptr || ctx.oracle == nullptr) throw SpecError("attack context needs a synthesizer and an oracle");
  const Synthesizer* synth = ctx.synthesizer;
  Oracle* oracle = ctx.oracle;
  const Eigen::Index width = synth->basis().semantic_width();
  const bool with_g = synth->controls_glasses();
  return Objective(
      [spec, synth, oracle, width, with_g, log](const Eigen::VectorXd& p) {
        const MatchResult result = oracle->query((*synth)(unflatten(p, width, with_g)));
        if (log) log->push_back(result);
        if (std::isnan(result.score)) return std::numeric_limits<double>::quiet_NaN();
        return attack_objective(spec, result);
      },
      synth->parameter_count());
}

Outcome adjudicate(AttackType type, const MatchResult& result, const ThresholdPolicy& policy,
                   const std::optional<std::string>& attacker_id, const std::optional<std::string>& victim_id) {
  if (std::isnan(result.score)) return Outcome::failed;
  const bool pass = passes(result, policy);
  bool ok = false;
  switch (type) {
    case AttackType::break_in: ok = pass; break;
    case AttackType::impersonation: ok = pass && victim_id && result.id == *victim_id; break;
    case AttackType::partial_evasion:
      ok = pass && victim_id && result.id == *victim_id && !(attacker_id && result.id == *attacker_id);
      break;
    case AttackType::full_evasion: ok = !pass; break;
  }
  return ok ? Outcome::success : Outcome::failed;
}

AttackReport run_attack(const AttackSpec& spec, const AttackContext& ctx) {
  spec.validate();
  if (ctx.synthesizer == nullptr || ctx.oracle == nullptr) throw SpecError("attack context needs a synthesizer and an oracle");
  if (ctx.oracle->polarity() != spec.policy.polarity) throw PolarityError("oracle polarity differs from threshold policy");
  const auto started = std::chrono::steady_clock::now();
  const Synthesizer& synth = *ctx.synthesizer;
  const bool with_g = synth.controls_glasses();
  const Eigen::Index width = synth.basis().semantic_width();
  if (static_cast<Eigen::Index>(ctx.box.semantic.size()) != width) throw ShapeError("bound box width does not match basis");

  AttackReport report;
  report.spec = spec;
  report.with_g = with_g;
  if (spec.init == InitPolicy::random) {
    ParamVector p = random_params(spec.seed, ctx.box);
    if (!with_g) p.g = 0.0;
    report.p0 = flatten(p, with_g);
  } else {
    if (!ctx.victim_face || !ctx.attacker_face) throw SpecError("from_victim init needs attacker and victim faces");
    report.p0 = flatten(params_from_victim(synth.basis(), *ctx.attacker_face, *ctx.victim_face, ctx.box).first, with_g);
  }

  const Box bounds{lower_bounds(ctx.box, with_g), upper_bounds(ctx.box, with_g)};
  std::vector<MatchResult> log;
  Objective objective = objective_for(spec, ctx, &log);
  const auto policy = spec.policy;
  const StopRule stop = [&](const TraceEntry&) {
    return !log.empty() && adjudicate(spec.type, log.back(), policy, spec.attacker_id, spec.victim_id) == Outcome::success;
  };

  try {
    MinimizeResult run = minimize(objective, report.p0, bounds, spec.optimizer, stop);
    report.p_min = run.p_min;
    report.f_min = run.f_min;
    report.trace = std::move(run.trace);
    report.stop_reason = run.reason;
    report.p0_clamped = run.p0_clamped;

    report.final_result = ctx.oracle->query(synth(unflatten(report.p_min, width, with_g)));
    log.push_back(report.final_result);
    const double final_value =
        std::isnan(report.final_result.score) ? std::numeric_limits<double>::infinity() : attack_objective(spec, report.final_result);
    report.trace.push_back(TraceEntry{report.trace.size(), report.p_min, final_value, bounds.violation(report.p_min)});
    report.outcome = adjudicate(spec.type, report.final_result, policy, spec.attacker_id, spec.victim_id);
  } catch (const OracleUnavailable& e) {
    report.outcome = Outcome::aborted;
    report.abort_reason = e.what();
    if (report.p_min.size() == 0) report.p_min = report.p0;
  }

  report.evaluations = log.size();
  for (const auto& m : log) report.matched_ids.push_back(m.id);
  double best = std::numeric_limits<double>::infinity();
  double worst_violation = -std::numeric_limits<double>::infinity();
  for (const auto& e : report.trace) {
    best = std::min(best, e.value);
    worst_violation = std::max(worst_violation, e.violation);
  }
  report.s_min = spec.type == AttackType::full_evasion ? -best : best;
  report.max_violation = report.trace.empty() ? 0.0 : worst_violation;
  report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return report;
}

std::size_t strictness_violations(const std::vector<AttackReport>& reports) {
  std::size_t violations = 0;
  for (const auto& r : reports) {
    if (r.outcome == Outcome::aborted) continue;
    const auto& ids_a = r.spec.attacker_id;
    const auto& ids_v = r.spec.victim_id;
    const auto& m = r.final_result;
    const bool brk = adjudicate(AttackType::break_in, m, r.spec.policy, ids_a, ids_v) == Outcome::success;
    const bool imp = adjudicate(AttackType::impersonation, m, r.spec.policy, ids_a, ids_v) == Outcome::success;
    const bool par = adjudicate(AttackType::partial_evasion, m, r.spec.policy, ids_a, ids_v) == Outcome::success;
    if ((imp && !brk) || (par && !imp)) ++violations;
  }
  return violations;
}

namespace {

nlohmann::ordered_json number(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

nlohmann::ordered_json vec(const Eigen::VectorXd& v) {
  auto arr = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(number(v[i]));
  return arr;
}

}  // namespace

std::string report_to_json(const AttackReport& r, bool include_wall_time) {
  using json = nlohmann::ordered_json;
  json spec;
  spec["type"] = to_string(r.spec.type);
  spec["attacker_id"] = r.spec.attacker_id ? json(*r.spec.attacker_id) : json(nullptr);
  spec["victim_id"] = r.spec.victim_id ? json(*r.spec.victim_id) : json(nullptr);
  spec["polarity"] = to_string(r.spec.policy.polarity);
  spec["threshold"] = number(r.spec.policy.threshold);
  spec["init"] = to_string(r.spec.init);
  spec["seed"] = r.spec.seed;
  spec["max_evals"] = r.spec.optimizer.max_evals;
  spec["enforce_bounds"] = r.spec.optimizer.enforce_bounds;

  json j;
  j["spec"] = std::move(spec);
  j["with_g"] = r.with_g;
  j["outcome"] = to_string(r.outcome);
  if (r.outcome == Outcome::aborted) j["abort_reason"] = r.abort_reason;
  j["final"] = json{{"id", r.final_result.id}, {"score", number(r.final_result.score)},
                    {"polarity", to_string(r.final_result.polarity)}};
  j["p0"] = vec(r.p0);
  j["p_min"] = vec(r.p_min);
  j["f_min"] = number(r.f_min);
  j["s_min"] = number(r.s_min);
  j["evaluations"] = r.evaluations;
  j["stop_reason"] = to_string(r.stop_reason);
  j["p0_clamped"] = r.p0_clamped;
  j["max_violation"] = number(r.max_violation);
  if (include_wall_time) j["wall_ms"] = r.wall_ms;
  return j.dump(2) + "\n";
}

void write_attack_trace_csv(std::ostream& out, const AttackReport& report) {
  const Eigen::Index k = report.p0.size();
  out << "eval_index,value";
  for (Eigen::Index i = 0; i < k; ++i) out << ",p_" << i;
  out << ",violation,matched_id\n";
  for (std::size_t n = 0; n < report.trace.size(); ++n) {
    const auto& e = report.trace[n];
    out << e.eval_index << ',' << format_double(e.value);
    for (Eigen::Index i = 0; i < e.p.size(); ++i) out << ',' << format_double(e.p[i]);
    out << ',' << format_double(e.violation) << ',' << (n < report.matched_ids.size() ? report.matched_ids[n] : "") << '\n';
  }
}

}  // namespace realface
