#pragma once
// Turns execution logs into trajectories and node experiences, classifies
// failure root causes, and induces parameter schemas from successful calls.
// Everything here is a pure transformation.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "workflowgen/core.hpp"
#include "workflowgen/embedding.hpp"

namespace wg {

class ExperienceStore;

struct StepRecord {
  struct ErrorRecord {
    std::string code;
    std::string message;
    bool operator==(const ErrorRecord&) const = default;
  };

  std::string node_id;
  std::string tool_id;
  ParamMap params;
  std::optional<std::string> output;  // exactly one of output/error
  std::optional<ErrorRecord> error;
  std::int64_t duration_units = 0;
  std::vector<std::string> depends_on;

  bool operator==(const StepRecord&) const = default;
};

struct ExecutionLog {
  Query query;
  std::vector<StepRecord> steps;
  Outcome outcome = Outcome::Failure;
  std::map<std::string, std::string> context;
  std::int64_t executed_at = 0;  // environment logical clock
  // Nodes never run because an upstream dependency failed.
  std::vector<std::string> skipped_by_condition;

  bool operator==(const ExecutionLog&) const = default;
};

void to_json(nlohmann::json& j, const StepRecord& v);
void from_json(const nlohmann::json& j, StepRecord& v);
void to_json(nlohmann::json& j, const ExecutionLog& v);
void from_json(const nlohmann::json& j, ExecutionLog& v);

// Lowercase first two query tokens joined by ':'; fewer tokens, shorter key.
std::string intent_key(const Query& q);

// One node per step, order and dependencies preserved. Pattern: skipped
// nodes mean ConditionalBranch; an exact chain means Sequential; two steps
// with identical predecessor sets mean Parallel; anything else reads as
// ConditionalBranch. Throws EmptyLog.
Trajectory extract_workflow_trajectory(const ExecutionLog& log,
                                       const EmbeddingConfig& cfg);

// Failure experiences for every errored step in the logs; Success
// experiences (best_tool + induced schema) for success-trajectory steps
// without a same-position, same-tool failed counterpart. Throws BothAbsent.
std::vector<NodeExperience> extract_node_experiences(
    const Trajectory* success, const Trajectory* failure,
    const std::vector<ExecutionLog>& logs);

// First matching rule wins; total over all inputs.
RootCause classify_root_cause(const std::string& code,
                              const std::string& message);

const char* avoidance_phrase(RootCause cause);

// Required = intersection of names, optional = union minus intersection,
// ranges over numeric fields, format kept only when every sample shares one
// generalized pattern (digit -> '#', letter -> 'a'). Throws EmptySamples.
ParameterSchema induce_parameter_schema(const std::vector<ParamMap>& samples);

std::string generalize_format(const std::string& value);

// First violated constraint as prose, or nullopt when params satisfy the
// schema. Checked in order: required fields, value ranges, formats.
std::optional<std::string> schema_violation_message(
    const ParameterSchema& schema, const ParamMap& params);

// Shape-only pattern inference shared by log extraction and plan parsing:
// skips force ConditionalBranch, a literal chain is Sequential, two nodes
// with identical predecessor sets read as Parallel.
Pattern infer_pattern(
    const std::vector<std::pair<std::string, std::vector<std::string>>>&
        id_deps,
    bool has_skips);

ReuseClass classify_experience(const TrajectoryTemplate& tpl,
                               const ExperienceStore& store, double theta_a);

}  // namespace wg
