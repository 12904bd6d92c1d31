#include "workflowgen/execution.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

namespace wg {

namespace {

std::string trigger_kind_to_string(FaultTrigger::Kind kind) {
  switch (kind) {
    case FaultTrigger::Kind::FieldEquals: return "field_equals";
    case FaultTrigger::Kind::FieldMissing: return "field_missing";
    case FaultTrigger::Kind::CallCountThreshold: return "call_count_threshold";
  }
  return "field_equals";
}

FaultTrigger::Kind trigger_kind_from_string(const std::string& s) {
  if (s == "field_equals") return FaultTrigger::Kind::FieldEquals;
  if (s == "field_missing") return FaultTrigger::Kind::FieldMissing;
  if (s == "call_count_threshold") return FaultTrigger::Kind::CallCountThreshold;
  throw Error(Errc::ConfigError, "unknown fault trigger kind: " + s);
}

// The profile must round-trip through the failure classifier, otherwise
// injected faults would be attributed to the wrong root cause downstream.
void check_profile(const FaultProfile& profile) {
  if (profile.mode == RootCause::Other) {
    throw Error(Errc::ConfigError, "fault mode must name a concrete cause");
  }
  if (classify_root_cause(profile.error_code, profile.message) !=
      profile.mode) {
    throw Error(Errc::ConfigError,
                std::string("fault code/message classify to a different cause "
                            "than mode ") +
                    to_string(profile.mode));
  }
}

bool is_builtin(const std::string& behavior) {
  return behavior == "echo" || behavior == "concat" || behavior == "sum" ||
         behavior.starts_with("lookup_table:");
}

bool is_numeric(const ParamValue& v) {
  return std::holds_alternative<std::int64_t>(v) ||
         std::holds_alternative<double>(v);
}

double as_double(const ParamValue& v) {
  if (std::holds_alternative<std::int64_t>(v)) {
    return static_cast<double>(std::get<std::int64_t>(v));
  }
  return std::get<double>(v);
}

// Params the builtin reads: the named args in order, or all params sorted.
std::vector<std::pair<std::string, ParamValue>> selected_params(
    const ParamMap& params, const std::vector<std::string>& args) {
  std::vector<std::pair<std::string, ParamValue>> out;
  if (args.empty()) {
    out.assign(params.begin(), params.end());
    return out;
  }
  for (const auto& name : args) {
    auto it = params.find(name);
    if (it != params.end()) out.emplace_back(it->first, it->second);
  }
  return out;
}

std::string run_behavior(const ToolSpec& spec,
                         const std::map<std::string, std::string>& table,
                         const ParamMap& params) {
  auto chosen = selected_params(params, spec.behavior_args);
  if (spec.behavior == "echo") {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, value] : chosen) j[name] = param_to_json(value);
    return dump_canonical(j);
  }
  if (spec.behavior == "concat") {
    std::string out;
    for (const auto& [name, value] : chosen) out += param_to_string(value);
    return out;
  }
  if (spec.behavior == "sum") {
    double total = 0.0;
    std::int64_t int_total = 0;
    bool all_int = true;
    for (const auto& [name, value] : chosen) {
      if (!is_numeric(value)) continue;
      total += as_double(value);
      if (std::holds_alternative<std::int64_t>(value)) {
        int_total += std::get<std::int64_t>(value);
      } else {
        all_int = false;
      }
    }
    if (all_int) return param_to_string(ParamValue{int_total});
    return param_to_string(ParamValue{total});
  }
  // lookup_table: key field named by args[0], default "key".
  std::string key_field =
      spec.behavior_args.empty() ? "key" : spec.behavior_args.front();
  auto it = params.find(key_field);
  if (it == params.end()) return "";
  auto hit = table.find(param_to_string(it->second));
  return hit == table.end() ? "" : hit->second;
}

// First schema violation wins; messages classify as WrongParameter.
std::optional<StepRecord::ErrorRecord> validate_against_schema(
    const ParameterSchema& schema, const ParamMap& params) {
  if (auto message = schema_violation_message(schema, params)) {
    return StepRecord::ErrorRecord{"422", *message};
  }
  return std::nullopt;
}

bool trigger_fires(const FaultTrigger& trigger, const ParamMap& params,
                   std::int64_t call_ordinal) {
  switch (trigger.kind) {
    case FaultTrigger::Kind::FieldEquals: {
      auto it = params.find(trigger.field);
      return it != params.end() &&
             param_to_string(it->second) == trigger.value;
    }
    case FaultTrigger::Kind::FieldMissing:
      return params.count(trigger.field) == 0;
    case FaultTrigger::Kind::CallCountThreshold:
      return call_ordinal <= trigger.threshold;
  }
  return false;
}

std::int64_t deterministic_duration(std::uint64_t seed,
                                    const std::string& tool_id,
                                    std::uint64_t ordinal) {
  Fnv1a64 h;
  h.update_u64(seed);
  h.update_byte(0x1F);
  h.update(tool_id);
  h.update_byte(0x1F);
  h.update_u64(ordinal);
  return 1 + static_cast<std::int64_t>(h.digest() % 9);
}

}  // namespace

FaultProfile default_fault(RootCause mode, FaultTrigger trigger) {
  FaultProfile p;
  p.mode = mode;
  p.trigger = std::move(trigger);
  switch (mode) {
    case RootCause::WrongParameter:
      p.error_code = "422";
      p.message = "invalid parameter value";
      break;
    case RootCause::InsufficientPermission:
      p.error_code = "403";
      p.message = "permission denied";
      break;
    case RootCause::ToolMismatch:
      p.error_code = "404";
      p.message = "no such tool";
      break;
    case RootCause::MissingLogic:
      p.error_code = "501";
      p.message = "unimplemented step";
      break;
    case RootCause::Other:
      throw Error(Errc::ConfigError, "fault mode must name a concrete cause");
  }
  return p;
}

void ToolRegistry::register_tool(const ToolSpec& spec) {
  if (spec.tool_id.empty()) {
    throw Error(Errc::Precondition, "tool_id must be non-empty");
  }
  if (entries_.count(spec.tool_id) != 0) {
    throw Error(Errc::DuplicateTool, "tool already registered: " + spec.tool_id);
  }
  if (!is_builtin(spec.behavior)) {
    throw Error(Errc::ConfigError,
                "unknown behavior for " + spec.tool_id + ": " + spec.behavior);
  }
  if (spec.fault_profile) check_profile(*spec.fault_profile);

  Entry e;
  e.spec = spec;
  if (spec.behavior.starts_with("lookup_table:")) {
    std::string file = spec.behavior.substr(std::string("lookup_table:").size());
    std::ifstream in(file);
    if (!in) {
      throw Error(Errc::ConfigError, "cannot open lookup table: " + file);
    }
    nlohmann::json j;
    try {
      in >> j;
      for (const auto& [k, v] : j.items()) {
        e.table[k] = v.get<std::string>();
      }
    } catch (const nlohmann::json::exception& ex) {
      throw Error(Errc::ConfigError,
                  "bad lookup table " + file + ": " + ex.what());
    }
  }
  entries_.emplace(spec.tool_id, std::move(e));
  order_.push_back(spec.tool_id);
}

bool ToolRegistry::has_tool(const std::string& tool_id) const {
  return entries_.count(tool_id) != 0;
}

ToolRegistry::Entry& ToolRegistry::entry(const std::string& tool_id) {
  auto it = entries_.find(tool_id);
  if (it == entries_.end()) {
    throw Error(Errc::UnknownTool, "unknown tool: " + tool_id);
  }
  return it->second;
}

const ToolRegistry::Entry& ToolRegistry::entry(const std::string& tool_id) const {
  auto it = entries_.find(tool_id);
  if (it == entries_.end()) {
    throw Error(Errc::UnknownTool, "unknown tool: " + tool_id);
  }
  return it->second;
}

const ToolSpec& ToolRegistry::tool(const std::string& tool_id) const {
  return entry(tool_id).spec;
}

std::vector<std::string> ToolRegistry::tool_ids() const { return order_; }

void ToolRegistry::inject_fault(const std::string& tool_id,
                                const FaultProfile& profile) {
  check_profile(profile);
  entry(tool_id).spec.fault_profile = profile;
}

void ToolRegistry::clear_fault(const std::string& tool_id) {
  Entry& e = entry(tool_id);
  e.spec.fault_profile.reset();
  e.calls = 0;
}

std::int64_t ToolRegistry::call_count(const std::string& tool_id) const {
  return entry(tool_id).calls;
}

ExecutionLog execute_trajectory(const Trajectory& trajectory,
                                ToolRegistry& registry, std::uint64_t seed) {
  for (const auto& node : trajectory.nodes) {
    if (!registry.has_tool(node.tool_id)) {
      throw Error(Errc::UnknownTool,
                  "unknown tool " + node.tool_id + " for node " + node.node_id);
    }
  }

  ExecutionLog log;
  log.query = trajectory.trigger;
  log.context = trajectory.context;
  log.executed_at = ++registry.clock_;

  // ok: produced output; failed or absent nodes halt their dependents, which
  // leave no StepRecord at all.
  std::set<std::string> ok;
  bool any_error = false;
  std::uint64_t ordinal = 0;
  for (const auto& node : trajectory.nodes) {
    ++ordinal;
    bool runnable = true;
    for (const auto& dep : node.depends_on) {
      if (ok.count(dep) == 0) {
        runnable = false;
        break;
      }
    }
    if (!runnable) continue;

    ToolRegistry::Entry& e = registry.entry(node.tool_id);
    e.calls += 1;

    StepRecord step;
    step.node_id = node.node_id;
    step.tool_id = node.tool_id;
    step.params = node.params;
    step.depends_on = node.depends_on;
    step.duration_units = deterministic_duration(seed, node.tool_id, ordinal);

    if (e.spec.fault_profile &&
        trigger_fires(e.spec.fault_profile->trigger, node.params, e.calls)) {
      step.error = StepRecord::ErrorRecord{e.spec.fault_profile->error_code,
                                           e.spec.fault_profile->message};
    } else if (auto violation =
                   validate_against_schema(e.spec.param_schema, node.params)) {
      step.error = *violation;
    } else {
      step.output = run_behavior(e.spec, e.table, node.params);
    }

    if (step.error) {
      any_error = true;
    } else {
      ok.insert(node.node_id);
    }
    log.steps.push_back(std::move(step));
  }

  log.outcome = any_error ? Outcome::Failure : Outcome::Success;
  return log;
}

ToolRegistry load_registry(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) {
    throw Error(Errc::ConfigError,
                "cannot open registry file: " + file.string());
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::ConfigError,
                "bad registry file " + file.string() + ": " + ex.what());
  }
  if (!j.is_array()) {
    throw Error(Errc::ConfigError,
                "registry file must hold a JSON array: " + file.string());
  }
  ToolRegistry registry;
  for (const auto& item : j) {
    registry.register_tool(item.get<ToolSpec>());
  }
  return registry;
}

void save_registry(const ToolRegistry& registry,
                   const std::filesystem::path& file) {
  nlohmann::json j = registry;
  std::ofstream out(file, std::ios::trunc);
  if (!out) {
    throw Error(Errc::StorageFailure,
                "cannot write registry file: " + file.string());
  }
  out << dump_canonical(j) << "\n";
}

void to_json(nlohmann::json& j, const FaultTrigger& t) {
  j = nlohmann::json::object();
  switch (t.kind) {
    case FaultTrigger::Kind::FieldEquals:
      j["field"] = t.field;
      j["value"] = t.value;
      break;
    case FaultTrigger::Kind::FieldMissing:
      j["field"] = t.field;
      break;
    case FaultTrigger::Kind::CallCountThreshold:
      j["threshold"] = t.threshold;
      break;
  }
  j["kind"] = trigger_kind_to_string(t.kind);
}

void from_json(const nlohmann::json& j, FaultTrigger& t) {
  t = FaultTrigger{};
  t.kind = trigger_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("field")) t.field = j.at("field").get<std::string>();
  if (j.contains("value")) t.value = j.at("value").get<std::string>();
  if (j.contains("threshold")) {
    t.threshold = j.at("threshold").get<std::int64_t>();
  }
}

void to_json(nlohmann::json& j, const FaultProfile& p) {
  j = nlohmann::json::object();
  j["error_code"] = p.error_code;
  j["message"] = p.message;
  j["mode"] = to_string(p.mode);
  j["trigger"] = p.trigger;
}

void from_json(const nlohmann::json& j, FaultProfile& p) {
  p = FaultProfile{};
  p.error_code = j.at("error_code").get<std::string>();
  p.message = j.at("message").get<std::string>();
  p.mode = root_cause_from_string(j.at("mode").get<std::string>());
  p.trigger = j.at("trigger").get<FaultTrigger>();
}

void to_json(nlohmann::json& j, const ToolSpec& s) {
  j = nlohmann::json::object();
  j["behavior"] = s.behavior;
  if (!s.behavior_args.empty()) j["behavior_args"] = s.behavior_args;
  if (s.fault_profile) j["fault_profile"] = *s.fault_profile;
  j["param_schema"] = s.param_schema;
  j["tool_id"] = s.tool_id;
}

void from_json(const nlohmann::json& j, ToolSpec& s) {
  s = ToolSpec{};
  s.behavior = j.at("behavior").get<std::string>();
  if (j.contains("behavior_args")) {
    s.behavior_args = j.at("behavior_args").get<std::vector<std::string>>();
  }
  if (j.contains("fault_profile")) {
    s.fault_profile = j.at("fault_profile").get<FaultProfile>();
  }
  s.param_schema = j.at("param_schema").get<ParameterSchema>();
  s.tool_id = j.at("tool_id").get<std::string>();
}

void to_json(nlohmann::json& j, const ToolRegistry& registry) {
  j = nlohmann::json::array();
  for (const auto& id : registry.order_) {
    j.push_back(registry.entries_.at(id).spec);
  }
}

}  // namespace wg
