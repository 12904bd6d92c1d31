#pragma once

// Benchmark harness: deterministic workload synthesis over a fixed tool
// corpus, the comparison strategies, and report emission.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "workflowgen/core.hpp"
#include "workflowgen/execution.hpp"
#include "workflowgen/generation.hpp"
#include "workflowgen/routing.hpp"
#include "workflowgen/store.hpp"

namespace wg {

// Report thresholds; compare_and_report flags and the acceptance suite both
// read these, so the gate lives in exactly one place.
inline constexpr double kMinReductionVsRealTime = 0.40;
inline constexpr double kMinReductionVsStatic = 0.15;
inline constexpr double kMinMediumGain = 0.20;

// One injected fault and the query index at which it becomes active.
struct FaultPlan {
  std::string tool_id;
  FaultProfile profile;
  std::int64_t activation_step = 0;

  bool operator==(const FaultPlan&) const = default;
};

struct TierMix {
  double high = 0.6;
  double medium = 0.3;
  double novel = 0.1;

  bool operator==(const TierMix&) const = default;
};

struct WorkloadConfig {
  std::uint64_t seed = 42;
  std::int64_t n_queries = 100;
  TierMix tier_mix;
  std::int64_t n_families = 8;
  std::vector<FaultPlan> faults;
};

// Throws ConfigError unless the mix sums to 1 within 1e-9, every fraction is
// non-negative, and 1 <= n_families <= min(n_queries, catalog size).
void validate(const WorkloadConfig& cfg);

// One step of the plan the generator produces for a family; the entity param
// holds the base entity value and is rebound per query.
struct PlanRow {
  std::string node_id;
  std::string tool_id;
  std::map<std::string, std::string> params;
  std::vector<std::string> depends_on;
};

// A recurring intent: a six-token base query whose entity_slot token is the
// only part the medium tier swaps. Faulted families list the fault-triggering
// entity first in swaps.
struct FamilySpec {
  std::string name;
  std::string base_text;
  std::size_t entity_slot = 0;
  std::string entity_node;
  std::string entity_param;
  std::vector<std::string> swaps;
  std::vector<PlanRow> plan;
};

const std::vector<FamilySpec>& family_catalog();

// The eight tools the catalog plans over, with their parameter schemas.
ToolRegistry benchmark_registry();

// Four faults, one per root cause, each keyed to one family's entity value.
std::vector<FaultPlan> default_faults();

// Tiered queries in one seeded shuffle. Medium queries are verified post-hoc
// to score inside (theta_b, theta_a] against their own base under the default
// thresholds, novel queries below theta_b against every base and every other
// accepted novel text; each miss resamples, bounded per query.
// Throws CalibrationFailure after 100 misses on one query.
std::vector<Query> generate_workload(const WorkloadConfig& cfg);

// Registers one full-plan rule per distinct workload query text: family
// queries get their family's plan with the query's entity bound, novel
// queries a single safe call on a fault-free tool. Payloads are indented so
// completion counts reflect plan size.
void seed_plan_rules(DeterministicMockBackend& backend,
                     const std::vector<Query>& workload);

enum class Strategy {
  WorkflowGen,
  RealTimePlanning,
  StaticSingleTrajectory,
  BasicICL,
};
const char* to_string(Strategy s);
Strategy strategy_from_string(std::string_view s);

struct StrategyMetrics {
  Strategy strategy = Strategy::WorkflowGen;
  TokenLedger total_ledger;
  double success_rate = 0.0;
  double success_rate_medium_tier = 0.0;
  double mean_wall_steps = 0.0;
  // Present only for WorkflowGen: final attempted tier per query.
  std::optional<std::map<Route, std::int64_t>> route_histogram;
};

struct QueryRow {
  std::string query_id;
  std::optional<Tier> tier;
  std::optional<Route> final_route;
  bool succeeded = false;
  TokenLedger ledger;
  std::int64_t wall_steps = 0;
};

struct StrategyRun {
  StrategyMetrics metrics;
  std::vector<QueryRow> rows;
};

// Runs one strategy over the workload. env is copied so runs are isolated;
// faults are injected into the copy when their activation step is reached.
// The store must be fresh per run; RealTimePlanning never touches it.
StrategyRun run_strategy_detailed(Strategy strategy,
                                  const std::vector<Query>& workload,
                                  const ToolRegistry& env,
                                  GeneratorBackend& backend,
                                  ExperienceStore& store,
                                  const std::vector<FaultPlan>& faults = {},
                                  const RoutingConfig& routing = {},
                                  std::uint64_t seed = 0);

StrategyMetrics run_strategy(Strategy strategy,
                             const std::vector<Query>& workload,
                             const ToolRegistry& env,
                             GeneratorBackend& backend,
                             ExperienceStore& store,
                             const std::vector<FaultPlan>& faults = {},
                             const RoutingConfig& routing = {},
                             std::uint64_t seed = 0);

struct CompareVerdict {
  double reduction_vs_real_time = 0.0;
  std::optional<double> reduction_vs_static;
  std::optional<double> medium_gain_vs_basic_icl;
  bool token_reduction_real_time_ok = false;
  bool token_reduction_static_ok = false;
  bool medium_gain_ok = false;
  bool overall_ok = false;
};

// Emits the JSON report to out_path and a plain-text table to out_path+".txt".
// Requires a WorkflowGen entry and a RealTimePlanning entry (MissingBaseline
// otherwise); flags for the other baselines apply only when present.
CompareVerdict compare_and_report(const std::vector<StrategyMetrics>& metrics,
                                  const std::filesystem::path& out_path);

void to_json(nlohmann::json& j, const FaultPlan& f);
void from_json(const nlohmann::json& j, FaultPlan& f);
void to_json(nlohmann::json& j, const TierMix& m);
void from_json(const nlohmann::json& j, TierMix& m);
void to_json(nlohmann::json& j, const WorkloadConfig& cfg);
void from_json(const nlohmann::json& j, WorkloadConfig& cfg);
void to_json(nlohmann::json& j, const StrategyMetrics& m);
void from_json(const nlohmann::json& j, StrategyMetrics& m);
void to_json(nlohmann::json& j, const QueryRow& r);
void from_json(const nlohmann::json& j, QueryRow& r);
void to_json(nlohmann::json& j, const StrategyRun& r);
void from_json(const nlohmann::json& j, StrategyRun& r);

}  // namespace wg
