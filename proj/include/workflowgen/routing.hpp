#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "workflowgen/core.hpp"
#include "workflowgen/execution.hpp"
#include "workflowgen/generation.hpp"
#include "workflowgen/store.hpp"

namespace wg {

// 0 < theta_b < theta_a <= 1.
struct RoutingConfig {
  double theta_a = 0.9;
  double theta_b = 0.6;
  int max_iters = 3;

  bool operator==(const RoutingConfig&) const = default;
};

void validate(const RoutingConfig& cfg);

// "default" and "strict" (theta_a raised to 0.99).
RoutingConfig routing_preset(const std::string& name);

// WG_THETA_A / WG_THETA_B, decimal strings; malformed values are a
// ConfigError, absent ones leave cfg untouched.
RoutingConfig apply_env_overrides(RoutingConfig cfg);

enum class Route { A_DirectReuse, B_Rewrite, C_Initialize };

const char* to_string(Route r);
Route route_from_string(std::string_view s);

struct RouteDecision {
  Route route = Route::C_Initialize;
  // (template or trajectory id, cosine score); absent on an empty store.
  std::optional<std::pair<std::string, double>> best_match;
  std::vector<Route> degraded_from;

  bool operator==(const RouteDecision&) const = default;
};

struct ExecutionReport {
  std::vector<std::pair<RouteDecision, Outcome>> trail;
  Trajectory final_trajectory;
  TokenLedger ledger;
  bool succeeded = false;
  std::int64_t wall_steps = 0;
};

// Initial tier from the best centroid score: s > theta_a is A, theta_b < s
// <= theta_a is B, everything else (including an empty store) is C. When the
// A target has no reusable Success member left (user-rejected or outcome
// flipped), the decision degrades to B up front.
RouteDecision route(const Query& query, const ExperienceStore& store,
                    const RoutingConfig& cfg);

// Attempt chain A -> B -> C, never revisiting a tier. Route A re-executes
// the stored trajectory with zero generator calls; B rewrites against the
// matched template; C plans from scratch. Failures are data in the report,
// not exceptions.
ExecutionReport execute_with_fallback(const Query& query,
                                      ExperienceStore& store,
                                      GeneratorBackend& backend,
                                      ToolRegistry& env,
                                      const RoutingConfig& cfg,
                                      std::uint64_t seed = 0);

enum class Verdict { UserOk, UserError };

// UserOk bumps usage; UserError flips the stored outcome to Failure and tags
// the trajectory "user_rejected" so route A skips it from then on.
void record_feedback(const ExecutionReport& report, Verdict verdict,
                     ExperienceStore& store);

void to_json(nlohmann::json& j, const RoutingConfig& cfg);
void from_json(const nlohmann::json& j, RoutingConfig& cfg);
void to_json(nlohmann::json& j, const RouteDecision& d);
void to_json(nlohmann::json& j, const ExecutionReport& r);

}  // namespace wg
