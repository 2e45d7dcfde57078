#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "realface/matcher.hpp"
#include "realface/optimizer.hpp"
#include "realface/oracle.hpp"
#include "realface/synthesis.hpp"

namespace realface {

enum class AttackType { break_in, impersonation, partial_evasion, full_evasion };
enum class InitPolicy { random, from_victim };
enum class Outcome { success, failed, aborted };

std::string_view to_string(AttackType type) noexcept;
std::string_view to_string(InitPolicy init) noexcept;
std::string_view to_string(Outcome outcome) noexcept;
AttackType parse_attack_type(std::string_view text);
InitPolicy parse_init_policy(std::string_view text);

struct AttackSpec {
  AttackType type = AttackType::break_in;
  std::optional<std::string> attacker_id;
  std::optional<std::string> victim_id;
  ThresholdPolicy policy;
  InitPolicy init = InitPolicy::random;
  std::uint64_t seed = 0;
  OptimizerConfig optimizer;

  /// Evasions need attacker_id; impersonation and partial evasion need
  /// victim_id; from_victim init needs victim_id; the two ids must differ.
  void validate() const;
};

/// What an attack runs against: the attacker's synthesizer and realism box,
/// the black-box oracle, and the victim's face for from_victim init.
struct AttackContext {
  const Synthesizer* synthesizer = nullptr;
  BoundBox box;
  Oracle* oracle = nullptr;
  std::optional<FaceVector> attacker_face;
  std::optional<FaceVector> victim_face;
};

/// Objective value of one oracle answer: normalized score for break-in;
/// plus 1 when the best match is not the victim for impersonation and
/// partial evasion; negated normalized score for full evasion.
double attack_objective(const AttackSpec& spec, const MatchResult& result);

/// p -> attack_objective(oracle(S(p))). When `log` is given every oracle
/// answer is appended to it in query order.
Objective objective_for(const AttackSpec& spec, const AttackContext& ctx, std::vector<MatchResult>* log = nullptr);

Outcome adjudicate(AttackType type, const MatchResult& result, const ThresholdPolicy& policy,
                   const std::optional<std::string>& attacker_id, const std::optional<std::string>& victim_id);

struct AttackReport {
  AttackSpec spec;
  bool with_g = false;
  Eigen::VectorXd p0;
  Eigen::VectorXd p_min;
  /// Best objective value seen by the optimizer.
  double f_min = 0.0;
  /// Minimum adjudication-relevant normalized score over the trace (for
  /// full evasion, the maximum normalized score).
  double s_min = 0.0;
  MatchResult final_result;
  Outcome outcome = Outcome::failed;
  std::string abort_reason;
  std::vector<TraceEntry> trace;
  std::vector<std::string> matched_ids;
  std::size_t evaluations = 0;
  StopReason stop_reason = StopReason::converged;
  bool p0_clamped = false;
  double max_violation = 0.0;
  double wall_ms = 0.0;
};

/// Minimizes the attack objective from the init point, stopping as soon as
/// a query adjudicates as success, then adjudicates a fresh query at p_min.
/// The final query is the last trace entry. An unreachable oracle yields an
/// aborted report instead of an exception.
AttackReport run_attack(const AttackSpec& spec, const AttackContext& ctx);

/// Count of reports whose final result breaks the ordering
/// partial_evasion => impersonation => break_in.
std::size_t strictness_violations(const std::vector<AttackReport>& reports);

std::string report_to_json(const AttackReport& report, bool include_wall_time = false);

/// Optimizer trace CSV plus the matched identity of each query.
void write_attack_trace_csv(std::ostream& out, const AttackReport& report);

}  // namespace realface
