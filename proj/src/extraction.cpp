#include "workflowgen/extraction.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include <nlohmann/json.hpp>

#include "workflowgen/store.hpp"

namespace wg {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Log serialization
// ---------------------------------------------------------------------------

void to_json(json& j, const StepRecord& v) {
  j = json::object();
  j["depends_on"] = v.depends_on;
  j["duration_units"] = v.duration_units;
  if (v.error) {
    json e = json::object();
    e["code"] = v.error->code;
    e["message"] = v.error->message;
    j["error"] = e;
  }
  j["node_id"] = v.node_id;
  if (v.output) j["output"] = *v.output;
  json params = json::object();
  for (const auto& [k, value] : v.params) params[k] = param_to_json(value);
  j["params"] = params;
  j["tool_id"] = v.tool_id;
}

void from_json(const json& j, StepRecord& v) {
  v.depends_on = j.at("depends_on").get<std::vector<std::string>>();
  v.duration_units = j.at("duration_units").get<std::int64_t>();
  v.error.reset();
  if (j.contains("error")) {
    StepRecord::ErrorRecord e;
    e.code = j.at("error").at("code").get<std::string>();
    e.message = j.at("error").at("message").get<std::string>();
    v.error = e;
  }
  v.node_id = j.at("node_id").get<std::string>();
  v.output.reset();
  if (j.contains("output")) v.output = j.at("output").get<std::string>();
  v.params.clear();
  const auto& params = j.at("params");
  for (auto it = params.begin(); it != params.end(); ++it) {
    v.params.emplace(it.key(), param_from_json(it.value()));
  }
  v.tool_id = j.at("tool_id").get<std::string>();
}

void to_json(json& j, const ExecutionLog& v) {
  j = json::object();
  j["context"] = v.context;
  j["executed_at"] = v.executed_at;
  j["outcome"] = to_string(v.outcome);
  j["query"] = v.query;
  j["skipped_by_condition"] = v.skipped_by_condition;
  j["steps"] = v.steps;
}

void from_json(const json& j, ExecutionLog& v) {
  v.context = j.at("context").get<std::map<std::string, std::string>>();
  v.executed_at = j.at("executed_at").get<std::int64_t>();
  v.outcome = j.at("outcome").get<std::string>() == "success"
                  ? Outcome::Success
                  : Outcome::Failure;
  v.query = j.at("query").get<Query>();
  v.skipped_by_condition =
      j.at("skipped_by_condition").get<std::vector<std::string>>();
  v.steps = j.at("steps").get<std::vector<StepRecord>>();
}

// ---------------------------------------------------------------------------
// Intent keys
// ---------------------------------------------------------------------------

std::string intent_key(const Query& q) {
  auto tokens = tokenize(q.text);
  std::string key;
  for (std::size_t i = 0; i < tokens.size() && i < 2; ++i) {
    if (i > 0) key += ':';
    key += tokens[i];
  }
  return key;
}

// ---------------------------------------------------------------------------
// Trajectory extraction
// ---------------------------------------------------------------------------

Pattern infer_pattern(
    const std::vector<std::pair<std::string, std::vector<std::string>>>&
        id_deps,
    bool has_skips) {
  if (has_skips) return Pattern::ConditionalBranch;

  bool chain = !id_deps.empty() && id_deps[0].second.empty();
  for (std::size_t i = 1; chain && i < id_deps.size(); ++i) {
    chain = id_deps[i].second.size() == 1 &&
            id_deps[i].second[0] == id_deps[i - 1].first;
  }
  if (chain) return Pattern::Sequential;

  for (std::size_t i = 0; i < id_deps.size(); ++i) {
    std::set<std::string> a(id_deps[i].second.begin(),
                            id_deps[i].second.end());
    for (std::size_t j = i + 1; j < id_deps.size(); ++j) {
      std::set<std::string> b(id_deps[j].second.begin(),
                              id_deps[j].second.end());
      if (a == b) return Pattern::Parallel;
    }
  }
  return Pattern::ConditionalBranch;
}

namespace {

Pattern infer_pattern(const ExecutionLog& log) {
  std::vector<std::pair<std::string, std::vector<std::string>>> id_deps;
  for (const auto& step : log.steps) {
    id_deps.emplace_back(step.node_id, step.depends_on);
  }
  return wg::infer_pattern(id_deps, !log.skipped_by_condition.empty());
}

}  // namespace

Trajectory extract_workflow_trajectory(const ExecutionLog& log,
                                       const EmbeddingConfig& cfg) {
  if (log.steps.empty()) {
    throw Error(Errc::EmptyLog, "log has no steps: " + log.query.id);
  }

  Trajectory t;
  t.trajectory_id =
      "tr-" + to_hex(fnv1a64("log|" + log.query.id + "|" + log.query.text +
                             "|" + std::to_string(log.executed_at)));
  t.trigger = log.query;
  t.trigger.tier_hint.reset();  // harness annotation, not engine state
  t.trigger_embedding = embed(log.query.text, cfg);
  for (const auto& step : log.steps) {
    WorkflowNode n;
    n.node_id = step.node_id;
    n.tool_id = step.tool_id;
    n.params = step.params;
    n.depends_on = step.depends_on;
    t.nodes.push_back(std::move(n));
  }
  t.pattern = infer_pattern(log);
  t.context = log.context;
  t.metadata.outcome = log.outcome;
  t.metadata.executed_at = log.executed_at;
  return t;
}

// ---------------------------------------------------------------------------
// Root causes and avoidance notes
// ---------------------------------------------------------------------------

RootCause classify_root_cause(const std::string& code,
                              const std::string& message) {
  std::string m;
  m.reserve(message.size());
  for (char c : message) {
    m.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  auto has = [&](const char* needle) {
    return m.find(needle) != std::string::npos;
  };

  if (code == "400" || code == "422" || has("param")) {
    return RootCause::WrongParameter;
  }
  if (code == "401" || code == "403" || has("permission") || has("denied")) {
    return RootCause::InsufficientPermission;
  }
  if (code == "404" || has("no such tool") || has("not found")) {
    return RootCause::ToolMismatch;
  }
  if (has("unimplemented") || has("missing step")) {
    return RootCause::MissingLogic;
  }
  return RootCause::Other;
}

const char* avoidance_phrase(RootCause cause) {
  switch (cause) {
    case RootCause::WrongParameter:
      return "check required fields and formats against the parameter schema "
             "before calling";
    case RootCause::InsufficientPermission:
      return "verify the caller holds the needed permission or pick a "
             "permitted channel";
    case RootCause::ToolMismatch:
      return "confirm the tool id exists in the registry and matches the "
             "intent";
    case RootCause::MissingLogic:
      return "add the missing preparatory step before this call";
    case RootCause::Other:
      return "review the error message and adjust the call";
  }
  return "review the error message and adjust the call";
}

// ---------------------------------------------------------------------------
// Schema induction
// ---------------------------------------------------------------------------

std::string generalize_format(const std::string& value) {
  std::string out;
  out.reserve(value.size());
  for (char raw : value) {
    unsigned char c = static_cast<unsigned char>(raw);
    if (std::isdigit(c)) {
      out.push_back('#');
    } else if (std::isalpha(c)) {
      out.push_back('a');
    } else {
      out.push_back(raw);
    }
  }
  return out;
}

std::optional<std::string> schema_violation_message(
    const ParameterSchema& schema, const ParamMap& params) {
  auto numeric = [](const ParamValue& v, double& out) {
    if (std::holds_alternative<std::int64_t>(v)) {
      out = static_cast<double>(std::get<std::int64_t>(v));
      return true;
    }
    if (std::holds_alternative<double>(v)) {
      out = std::get<double>(v);
      return true;
    }
    return false;
  };
  for (const auto& name : schema.required_fields) {
    if (params.count(name) == 0) return "missing required param " + name;
  }
  for (const auto& [name, range] : schema.value_ranges) {
    auto it = params.find(name);
    if (it == params.end()) continue;
    double value = 0.0;
    if (!numeric(it->second, value) || value < range.first ||
        value > range.second) {
      return "param " + name + " out of range";
    }
  }
  for (const auto& [name, pattern] : schema.format_constraints) {
    auto it = params.find(name);
    if (it == params.end()) continue;
    if (generalize_format(param_to_string(it->second)) != pattern) {
      return "param " + name + " format mismatch";
    }
  }
  return std::nullopt;
}

ParameterSchema induce_parameter_schema(const std::vector<ParamMap>& samples) {
  if (samples.empty()) {
    throw Error(Errc::EmptySamples, "schema induction needs samples");
  }

  std::map<std::string, std::size_t> presence;
  for (const auto& sample : samples) {
    for (const auto& [name, value] : sample) presence[name] += 1;
  }

  ParameterSchema schema;
  for (const auto& [name, count] : presence) {
    if (count == samples.size()) {
      schema.required_fields.push_back(name);
    } else {
      schema.optional_fields.push_back(name);
    }
  }

  for (const auto& [name, count] : presence) {
    bool all_numeric = true;
    double lo = 0.0, hi = 0.0;
    bool first = true;
    std::string pattern;
    bool one_pattern = true;
    for (const auto& sample : samples) {
      auto it = sample.find(name);
      if (it == sample.end()) continue;
      if (!param_is_numeric(it->second)) {
        all_numeric = false;
      } else {
        double v = param_as_double(it->second);
        lo = first ? v : std::min(lo, v);
        hi = first ? v : std::max(hi, v);
      }
      std::string p = generalize_format(param_to_string(it->second));
      if (first) {
        pattern = p;
      } else if (p != pattern) {
        one_pattern = false;
      }
      first = false;
    }
    if (all_numeric) schema.value_ranges[name] = {lo, hi};
    if (one_pattern) schema.format_constraints[name] = pattern;
  }

  for (const auto& [name, value] : samples[0]) {
    schema.example_template[name] = param_to_string(value);
  }
  return schema;
}

// ---------------------------------------------------------------------------
// Experience extraction
// ---------------------------------------------------------------------------

namespace {

std::string failure_experience_id(const ErrorFingerprint& fp,
                                  const std::string& intent) {
  Fnv1a64 h;
  h.update(fp.tool_id).update_byte(0x1F);
  h.update(fp.error_code).update_byte(0x1F);
  h.update_u64(fp.message_digest);
  h.update(intent);
  return "exp-f-" + to_hex(h.digest());
}

std::string success_experience_id(const std::string& tool_id,
                                  const std::string& intent) {
  Fnv1a64 h;
  h.update(tool_id).update_byte(0x1F);
  h.update(intent);
  return "exp-s-" + to_hex(h.digest());
}

}  // namespace

std::vector<NodeExperience> extract_node_experiences(
    const Trajectory* success, const Trajectory* failure,
    const std::vector<ExecutionLog>& logs) {
  if (success == nullptr && failure == nullptr) {
    throw Error(Errc::BothAbsent, "need a success or a failure trajectory");
  }

  std::vector<NodeExperience> out;
  std::set<std::string> seen;
  auto emit = [&](NodeExperience e) {
    if (seen.insert(e.experience_id).second) out.push_back(std::move(e));
  };

  for (const auto& log : logs) {
    std::string intent = intent_key(log.query);
    for (const auto& step : log.steps) {
      if (!step.error) continue;
      NodeExperience e;
      e.fingerprint =
          make_fingerprint(step.tool_id, step.error->code, step.error->message);
      e.root_cause = classify_root_cause(step.error->code, step.error->message);
      e.intent_key = intent;
      e.avoidance_note = avoidance_phrase(e.root_cause);
      e.polarity = Polarity::Failure;
      e.experience_id = failure_experience_id(*e.fingerprint, intent);
      emit(std::move(e));
    }
  }

  if (success != nullptr) {
    // Success-step parameter samples per tool, pooled across the logs.
    std::map<std::string, std::vector<ParamMap>> samples;
    for (const auto& log : logs) {
      for (const auto& step : log.steps) {
        if (step.output) samples[step.tool_id].push_back(step.params);
      }
    }
    for (const auto& node : success->nodes) {
      if (samples.find(node.tool_id) == samples.end()) {
        samples[node.tool_id].push_back(node.params);
      }
    }

    std::string intent = intent_key(success->trigger);
    for (std::size_t i = 0; i < success->nodes.size(); ++i) {
      const auto& node = success->nodes[i];
      if (failure != nullptr && i < failure->nodes.size() &&
          failure->nodes[i].tool_id == node.tool_id) {
        continue;  // the lesson for this position lives in the failure side
      }
      NodeExperience e;
      e.intent_key = intent;
      e.best_tool = node.tool_id;
      e.schema = induce_parameter_schema(samples.at(node.tool_id));
      e.polarity = Polarity::Success;
      e.avoidance_note = "";
      e.experience_id = success_experience_id(node.tool_id, intent);
      emit(std::move(e));
    }
  }

  return out;
}

ReuseClass classify_experience(const TrajectoryTemplate& tpl,
                               const ExperienceStore& store, double theta_a) {
  return store.classify_template(tpl, theta_a);
}

}  // namespace wg
