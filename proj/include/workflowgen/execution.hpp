#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "workflowgen/core.hpp"
#include "workflowgen/extraction.hpp"

namespace wg {

// Declarative fault predicate; no user code runs.
struct FaultTrigger {
  enum class Kind { FieldEquals, FieldMissing, CallCountThreshold };

  Kind kind = Kind::FieldEquals;
  std::string field;         // FieldEquals, FieldMissing
  std::string value;         // FieldEquals, compared via param_to_string
  std::int64_t threshold = 0;  // CallCountThreshold: fails calls 1..threshold

  bool operator==(const FaultTrigger&) const = default;
};

// mode must classify back to itself from (error_code, message); inject and
// register enforce that, so the four modes stay bijective with the
// classifier's fault categories.
struct FaultProfile {
  RootCause mode = RootCause::WrongParameter;
  FaultTrigger trigger;
  std::string error_code;
  std::string message;

  bool operator==(const FaultProfile&) const = default;
};

// Canonical code/message pair for a mode, classifier-consistent by
// construction.
FaultProfile default_fault(RootCause mode, FaultTrigger trigger);

// behavior names a builtin: "echo", "concat", "sum", "lookup_table:<file>".
// behavior_args narrows which params the builtin reads (empty = all).
struct ToolSpec {
  std::string tool_id;
  ParameterSchema param_schema;
  std::string behavior = "echo";
  std::vector<std::string> behavior_args;
  std::optional<FaultProfile> fault_profile;

  bool operator==(const ToolSpec&) const = default;
};

// Value type; copies carry independent call-count and clock state, which is
// the concurrency model: one execution per instance, clone for parallel use.
class ToolRegistry {
 public:
  void register_tool(const ToolSpec& spec);
  bool has_tool(const std::string& tool_id) const;
  const ToolSpec& tool(const std::string& tool_id) const;
  std::vector<std::string> tool_ids() const;

  void inject_fault(const std::string& tool_id, const FaultProfile& profile);
  void clear_fault(const std::string& tool_id);
  std::int64_t call_count(const std::string& tool_id) const;

 private:
  friend ExecutionLog execute_trajectory(const Trajectory& trajectory,
                                         ToolRegistry& registry,
                                         std::uint64_t seed);
  friend void to_json(nlohmann::json& j, const ToolRegistry& registry);

  struct Entry {
    ToolSpec spec;
    std::map<std::string, std::string> table;  // lookup_table payload
    std::int64_t calls = 0;
  };

  Entry& entry(const std::string& tool_id);
  const Entry& entry(const std::string& tool_id) const;

  std::map<std::string, Entry> entries_;
  std::vector<std::string> order_;
  std::int64_t clock_ = 0;
};

// Runs nodes in stored order, skipping any node whose dependency errored or
// was itself skipped; such nodes leave no StepRecord. Per step: fault trigger,
// then schema validation (classifier-visible WrongParameter errors), then
// behavior. Deterministic for a given (trajectory, registry state, seed).
ExecutionLog execute_trajectory(const Trajectory& trajectory,
                                ToolRegistry& registry, std::uint64_t seed);

ToolRegistry load_registry(const std::filesystem::path& file);
void save_registry(const ToolRegistry& registry,
                   const std::filesystem::path& file);

void to_json(nlohmann::json& j, const FaultTrigger& t);
void from_json(const nlohmann::json& j, FaultTrigger& t);
void to_json(nlohmann::json& j, const FaultProfile& p);
void from_json(const nlohmann::json& j, FaultProfile& p);
void to_json(nlohmann::json& j, const ToolSpec& s);
void from_json(const nlohmann::json& j, ToolSpec& s);
void to_json(nlohmann::json& j, const ToolRegistry& registry);

}  // namespace wg
