#include "workflowgen/generation.hpp"

#include <cctype>
#include <charconv>

#include <nlohmann/json.hpp>

// httplib pulls in <thread> and sockets; keep it out of the header.
#include <httplib.h>

#include "workflowgen/embedding.hpp"

namespace wg {

namespace {

constexpr const char* kTaskLabel = "task";
constexpr const char* kContractLabel = "node contract";
constexpr const char* kParadigmsLabel = "success paradigms";
constexpr const char* kAvoidanceLabel = "failure avoidance";
constexpr const char* kToolsLabel = "tools";
constexpr std::size_t kExperienceCap = 3;

const PromptSection* find_section(const GeneratorRequest& request,
                                  const std::string& label) {
  for (const auto& s : request.prompt_sections) {
    if (s.label == label) return &s;
  }
  return nullptr;
}

void check_request(const GeneratorRequest& request) {
  if (request.prompt_sections.empty()) {
    throw Error(Errc::Precondition, "prompt_sections must be non-empty");
  }
  if (request.purpose == GeneratorPurpose::RewriteNode && !request.slot) {
    throw Error(Errc::Precondition, "rewrite requests need a slot");
  }
}

// Experiences relevant to one node. Input arrives freshest first per
// polarity, the lookup_experiences contract; caps keep the freshest 3.
struct SelectedExperiences {
  std::vector<const NodeExperience*> successes;
  std::vector<const NodeExperience*> failures;
  const ParameterSchema* constraints = nullptr;
};

SelectedExperiences select_experiences(
    const WorkflowNode& node, const std::vector<NodeExperience>& experiences) {
  SelectedExperiences out;
  for (const NodeExperience& e : experiences) {
    if (e.polarity == Polarity::Success) {
      if (e.best_tool != node.tool_id) continue;
      if (out.successes.size() < kExperienceCap) out.successes.push_back(&e);
      if (out.constraints == nullptr && e.schema) {
        out.constraints = &*e.schema;
      }
    } else {
      if (e.fingerprint && e.fingerprint->tool_id != node.tool_id) continue;
      if (out.failures.size() < kExperienceCap) out.failures.push_back(&e);
    }
  }
  return out;
}

nlohmann::json example_json(const ParameterSchema& schema) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : schema.example_template) j[k] = v;
  return j;
}

std::string paradigm_line(const NodeExperience& e) {
  std::string line = "use " + *e.best_tool;
  if (e.schema && !e.schema->example_template.empty()) {
    line += " example " + dump_canonical(example_json(*e.schema));
  }
  return line;
}

std::string contract_text(const std::string& tool_id,
                          const ParameterSchema* schema) {
  std::string text = "tool: " + tool_id;
  if (schema == nullptr) return text;
  auto join = [](const std::vector<std::string>& parts) {
    std::string out;
    for (const auto& p : parts) {
      if (!out.empty()) out += ", ";
      out += p;
    }
    return out;
  };
  if (!schema->required_fields.empty()) {
    text += "\nrequired: " + join(schema->required_fields);
  }
  if (!schema->optional_fields.empty()) {
    text += "\noptional: " + join(schema->optional_fields);
  }
  if (!schema->value_ranges.empty()) {
    text += "\nranges:";
    for (const auto& [name, range] : schema->value_ranges) {
      text += " " + name + "=[" + param_to_string(ParamValue{range.first}) +
              "," + param_to_string(ParamValue{range.second}) + "]";
    }
  }
  if (!schema->format_constraints.empty()) {
    text += "\nformats:";
    for (const auto& [name, pattern] : schema->format_constraints) {
      text += " " + name + "=" + pattern;
    }
  }
  if (!schema->example_template.empty()) {
    text += "\nexample: " + dump_canonical(example_json(*schema));
  }
  return text;
}

// Payload contract for rewrites: a flat JSON object of param values.
std::optional<ParamMap> parse_params_payload(const std::string& payload) {
  nlohmann::json j = nlohmann::json::parse(payload, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  ParamMap params;
  for (const auto& [key, value] : j.items()) {
    if (!value.is_string() && !value.is_number() && !value.is_boolean()) {
      return std::nullopt;
    }
    params[key] = param_from_json(value);
  }
  return params;
}

ParamValue parse_literal(const std::string& text) {
  if (!text.empty()) {
    std::size_t start = text[0] == '-' ? 1 : 0;
    bool digits = start < text.size();
    for (std::size_t i = start; i < text.size(); ++i) {
      if (!std::isdigit(static_cast<unsigned char>(text[i]))) {
        digits = false;
        break;
      }
    }
    if (digits) {
      std::int64_t value = 0;
      auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(),
                                       value);
      if (ec == std::errc() && ptr == text.data() + text.size()) {
        return ParamValue{value};
      }
    }
  }
  return ParamValue{text};
}

bool parse_number(const std::string& text, double& out) {
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

TokenLedger single_call_ledger(const GeneratorRequest& request,
                               const std::string& payload) {
  TokenLedger ledger;
  ledger.prompt_tokens = count_tokens(render_prompt(request));
  ledger.completion_tokens = count_tokens(payload);
  ledger.generator_calls = 1;
  return ledger;
}

}  // namespace

const char* to_string(GeneratorPurpose p) {
  return p == GeneratorPurpose::RewriteNode ? "rewrite_node" : "full_plan";
}

std::int64_t count_tokens(const std::string& text) {
  std::int64_t count = 0;
  bool in_run = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      in_run = false;
    } else if (!in_run) {
      in_run = true;
      ++count;
    }
  }
  return count;
}

std::string render_prompt(const GeneratorRequest& request) {
  std::string out;
  for (const auto& section : request.prompt_sections) {
    if (!out.empty()) out += "\n\n";
    out += section.label + ":\n" + section.text;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

DeterministicMockBackend::DeterministicMockBackend(std::uint64_t seed)
    : seed_(seed) {}

void DeterministicMockBackend::set_rule(GeneratorPurpose purpose,
                                        const std::string& key,
                                        std::string payload) {
  rules_[{purpose, key}] = Rule{std::move(payload), false};
}

void DeterministicMockBackend::set_avoidance_rule(GeneratorPurpose purpose,
                                                  const std::string& key,
                                                  std::string payload) {
  avoidance_rules_[{purpose, key}] = std::move(payload);
}

void DeterministicMockBackend::set_failure(GeneratorPurpose purpose,
                                           const std::string& key) {
  rules_[{purpose, key}] = Rule{"", true};
}

std::string DeterministicMockBackend::default_rewrite_payload(
    const GeneratorRequest& request) const {
  const PromptSection* task = find_section(request, kTaskLabel);
  std::string task_text = task ? task->text : "";
  bool avoiding = find_section(request, kAvoidanceLabel) != nullptr;

  if (!request.constraints) return "{}";
  const ParameterSchema& schema = *request.constraints;

  ParamMap params;
  if (avoiding && !schema.example_template.empty()) {
    // Burned once: retreat to the schema's known-good example values.
    for (const auto& [name, value] : schema.example_template) {
      params[name] = parse_literal(value);
    }
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, value] : params) j[name] = param_to_json(value);
    return dump_canonical(j);
  }

  auto tokens = tokenize(task_text);
  std::vector<bool> consumed(tokens.size(), false);
  auto take = [&](auto&& predicate) -> std::optional<std::string> {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (!consumed[i] && predicate(tokens[i])) {
        consumed[i] = true;
        return tokens[i];
      }
    }
    return std::nullopt;
  };

  for (const auto& name : schema.required_fields) {
    auto format_it = schema.format_constraints.find(name);
    auto range_it = schema.value_ranges.find(name);
    if (format_it != schema.format_constraints.end()) {
      auto token = take([&](const std::string& t) {
        return generalize_format(t) == format_it->second;
      });
      if (token) {
        params[name] = *token;
        continue;
      }
    } else if (range_it != schema.value_ranges.end()) {
      auto token = take([&](const std::string& t) {
        double value = 0.0;
        return parse_number(t, value) && value >= range_it->second.first &&
               value <= range_it->second.second;
      });
      if (token) {
        params[name] = parse_literal(*token);
        continue;
      }
      double lo = range_it->second.first;
      if (lo == static_cast<double>(static_cast<std::int64_t>(lo))) {
        params[name] = static_cast<std::int64_t>(lo);
      } else {
        params[name] = lo;
      }
      continue;
    }
    if (params.count(name) == 0) {
      auto example = schema.example_template.find(name);
      if (example != schema.example_template.end()) {
        params[name] = parse_literal(example->second);
      } else {
        params[name] = name;
      }
    }
  }

  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, value] : params) j[name] = param_to_json(value);
  return dump_canonical(j);
}

std::string DeterministicMockBackend::default_plan_payload(
    const GeneratorRequest& request) const {
  const PromptSection* tools = find_section(request, kToolsLabel);
  if (tools == nullptr || tools->text.empty()) return "[]";
  std::string first_line = tools->text.substr(0, tools->text.find('\n'));
  std::string tool_id = first_line.substr(0, first_line.find(':'));
  nlohmann::json node = nlohmann::json::object();
  node["depends_on"] = nlohmann::json::array();
  node["node_id"] = "n0";
  node["params"] = nlohmann::json::object();
  node["tool_id"] = tool_id;
  nlohmann::json plan = nlohmann::json::array({node});
  return dump_canonical(plan);
}

GeneratorResponse DeterministicMockBackend::generate(
    const GeneratorRequest& request) {
  check_request(request);
  std::string key = request.purpose == GeneratorPurpose::RewriteNode
                        ? request.slot->second
                        : request.prompt_sections.front().text;
  std::string payload;
  auto avoid_it = avoidance_rules_.find({request.purpose, key});
  auto it = rules_.find({request.purpose, key});
  if (avoid_it != avoidance_rules_.end() &&
      find_section(request, kAvoidanceLabel) != nullptr) {
    payload = avoid_it->second;
  } else if (it != rules_.end()) {
    if (it->second.fail) {
      throw Error(Errc::GeneratorFailure, "seeded failure for key " + key);
    }
    payload = it->second.payload;
  } else if (request.purpose == GeneratorPurpose::RewriteNode) {
    payload = default_rewrite_payload(request);
  } else {
    payload = default_plan_payload(request);
  }
  return GeneratorResponse{payload, single_call_ledger(request, payload)};
}

RemoteHTTPBackend::RemoteHTTPBackend(std::string endpoint, int timeout_ms)
    : endpoint_(std::move(endpoint)), timeout_ms_(timeout_ms) {
  if (endpoint_.empty()) {
    throw Error(Errc::ConfigError, "remote backend needs an endpoint");
  }
}

GeneratorResponse RemoteHTTPBackend::generate(const GeneratorRequest& request) {
  check_request(request);

  auto scheme_end = endpoint_.find("://");
  std::size_t path_start = endpoint_.find(
      '/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  std::string base = path_start == std::string::npos
                         ? endpoint_
                         : endpoint_.substr(0, path_start);
  std::string path =
      path_start == std::string::npos ? "/" : endpoint_.substr(path_start);

  nlohmann::json body;
  body["prompt"] = render_prompt(request);
  body["purpose"] = to_string(request.purpose);

  httplib::Client client(base);
  client.set_connection_timeout(0, timeout_ms_ * 1000);
  client.set_read_timeout(0, timeout_ms_ * 1000);
  auto res = client.Post(path, dump_canonical(body), "application/json");
  if (!res || res->status != 200) {
    throw Error(Errc::RemoteUnavailable,
                "generator endpoint unreachable: " + endpoint_);
  }
  nlohmann::json j = nlohmann::json::parse(res->body, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("payload") ||
      !j.at("payload").is_string()) {
    throw Error(Errc::RemoteUnavailable,
                "generator endpoint returned a malformed body");
  }

  GeneratorResponse out;
  out.payload = j.at("payload").get<std::string>();
  out.ledger.generator_calls = 1;
  out.ledger.prompt_tokens =
      j.contains("prompt_tokens") && j.at("prompt_tokens").is_number_integer()
          ? j.at("prompt_tokens").get<std::int64_t>()
          : count_tokens(render_prompt(request));
  out.ledger.completion_tokens =
      j.contains("completion_tokens") &&
              j.at("completion_tokens").is_number_integer()
          ? j.at("completion_tokens").get<std::int64_t>()
          : count_tokens(out.payload);
  return out;
}

// ---------------------------------------------------------------------------
// Prompt assembly and generation pipelines
// ---------------------------------------------------------------------------

GeneratorRequest assemble_prompt(const WorkflowNode& node,
                                 const std::vector<NodeExperience>& experiences,
                                 const Query& query,
                                 const std::string& template_id) {
  if (!node.is_variable) {
    throw Error(Errc::NotVariableNode,
                "node is not variable: " + node.node_id);
  }

  SelectedExperiences selected = select_experiences(node, experiences);

  GeneratorRequest request;
  request.purpose = GeneratorPurpose::RewriteNode;
  request.slot = {template_id, node.node_id};
  if (selected.constraints) request.constraints = *selected.constraints;

  request.prompt_sections.push_back({kTaskLabel, query.text});
  request.prompt_sections.push_back(
      {kContractLabel, contract_text(node.tool_id, selected.constraints)});

  if (!selected.successes.empty()) {
    std::string text;
    for (const NodeExperience* e : selected.successes) {
      if (!text.empty()) text += "\n";
      text += paradigm_line(*e);
    }
    request.prompt_sections.push_back({kParadigmsLabel, text});
  }
  if (!selected.failures.empty()) {
    std::string text;
    for (const NodeExperience* e : selected.failures) {
      if (!text.empty()) text += "\n";
      text += e->avoidance_note;
    }
    request.prompt_sections.push_back({kAvoidanceLabel, text});
  }
  return request;
}

std::optional<PromptSection> success_paradigms_section(
    const std::vector<NodeExperience>& experiences) {
  std::string text;
  std::size_t used = 0;
  for (const NodeExperience& e : experiences) {
    if (e.polarity != Polarity::Success || !e.best_tool) continue;
    if (used == kExperienceCap) break;
    if (!text.empty()) text += "\n";
    text += paradigm_line(e);
    ++used;
  }
  if (text.empty()) return std::nullopt;
  return PromptSection{kParadigmsLabel, text};
}

std::pair<Trajectory, TokenLedger> rewrite_trajectory(
    const TrajectoryTemplate& tpl, const Query& query,
    GeneratorBackend& backend, const ExperienceStore& store) {
  if (tpl.skeleton.empty()) {
    throw Error(Errc::Precondition, "template skeleton must be non-empty");
  }
  if (tpl.member_ids.empty()) {
    throw Error(Errc::Precondition, "template must have members");
  }
  if (query.text.empty()) {
    throw Error(Errc::Precondition, "query text must be non-empty");
  }

  // Members share the template's structure, so any one supplies the pattern.
  auto member = store.get_trajectory(tpl.member_ids.front());
  if (!member) {
    throw Error(Errc::UnknownTrajectory,
                "template member missing: " + tpl.member_ids.front());
  }
  Pattern pattern = member->pattern;
  std::vector<NodeExperience> experiences =
      store.lookup_experiences(intent_key(query));

  Trajectory out;
  out.trajectory_id = "tr-" + to_hex(fnv1a64("rewrite|" + tpl.template_id +
                                             "|" + query.id + "|" +
                                             query.text));
  out.trigger = Query{query.text, query.id, std::nullopt};
  out.trigger_embedding = embed(query.text, store.embedding_config());
  out.pattern = pattern;

  TokenLedger total;
  for (const WorkflowNode& skeleton_node : tpl.skeleton) {
    if (!skeleton_node.is_variable) {
      out.nodes.push_back(skeleton_node);
      continue;
    }

    GeneratorRequest request =
        assemble_prompt(skeleton_node, experiences, query, tpl.template_id);

    auto ask = [&](const GeneratorRequest& r) {
      try {
        GeneratorResponse response = backend.generate(r);
        total += response.ledger;
        return response.payload;
      } catch (const Error& e) {
        if (e.code() == Errc::GeneratorFailure) throw;
        throw Error(Errc::GeneratorFailure,
                    "backend failed for node " + skeleton_node.node_id + ": " +
                        e.what());
      }
    };

    auto attempt = [&](const std::string& payload)
        -> std::pair<std::optional<ParamMap>, std::string> {
      auto params = parse_params_payload(payload);
      if (!params) return {std::nullopt, "unparsable params payload"};
      if (request.constraints) {
        if (auto violation =
                schema_violation_message(*request.constraints, *params)) {
          return {std::nullopt, *violation};
        }
      }
      return {params, ""};
    };

    auto [params, violation] = attempt(ask(request));
    if (!params) {
      // One bounded repair: surface the violation in the avoidance section.
      GeneratorRequest repair = request;
      std::string note = "schema violation: " + violation;
      bool appended = false;
      for (auto& section : repair.prompt_sections) {
        if (section.label == kAvoidanceLabel) {
          section.text += "\n" + note;
          appended = true;
          break;
        }
      }
      if (!appended) repair.prompt_sections.push_back({kAvoidanceLabel, note});
      auto [second_params, second_violation] = attempt(ask(repair));
      if (!second_params) {
        throw Error(Errc::SchemaViolation, "node " + skeleton_node.node_id +
                                               ": " + second_violation);
      }
      params = second_params;
    }

    WorkflowNode filled = skeleton_node;
    filled.params = *params;
    filled.generated_by_model = true;
    SelectedExperiences selected =
        select_experiences(skeleton_node, experiences);
    filled.experience_refs.clear();
    for (const NodeExperience* e : selected.failures) {
      filled.experience_refs.push_back(e->experience_id);
    }
    for (const NodeExperience* e : selected.successes) {
      filled.experience_refs.push_back(e->experience_id);
    }
    out.nodes.push_back(std::move(filled));
  }

  if (structural_hash(out) != tpl.structural_hash) {
    throw Error(Errc::Precondition, "rewrite altered the template structure");
  }
  return {std::move(out), total};
}

std::pair<Trajectory, TokenLedger> plan_from_scratch(
    const Query& query, GeneratorBackend& backend, const ToolRegistry& tools,
    const std::vector<PromptSection>& extra_sections) {
  auto tool_ids = tools.tool_ids();
  if (tool_ids.empty()) {
    throw Error(Errc::Precondition, "tool registry must be non-empty");
  }
  if (query.text.empty()) {
    throw Error(Errc::Precondition, "query text must be non-empty");
  }

  GeneratorRequest request;
  request.purpose = GeneratorPurpose::FullPlan;
  request.prompt_sections.push_back({kTaskLabel, query.text});
  std::string tool_lines;
  for (const auto& id : tool_ids) {
    if (!tool_lines.empty()) tool_lines += "\n";
    tool_lines += id;
    const auto& required = tools.tool(id).param_schema.required_fields;
    if (!required.empty()) {
      tool_lines += ": required ";
      for (std::size_t i = 0; i < required.size(); ++i) {
        if (i > 0) tool_lines += ",";
        tool_lines += required[i];
      }
    }
  }
  request.prompt_sections.push_back({kToolsLabel, tool_lines});
  for (const auto& section : extra_sections) {
    request.prompt_sections.push_back(section);
  }

  std::string payload;
  TokenLedger ledger;
  try {
    GeneratorResponse response = backend.generate(request);
    payload = response.payload;
    ledger = response.ledger;
  } catch (const Error& e) {
    if (e.code() == Errc::GeneratorFailure) throw;
    throw Error(Errc::GeneratorFailure,
                std::string("backend failed for plan: ") + e.what());
  }

  nlohmann::json plan = nlohmann::json::parse(payload, nullptr, false);
  if (plan.is_discarded() || !plan.is_array() || plan.empty()) {
    throw Error(Errc::UnparsablePlan, "plan payload must be a non-empty array");
  }

  Trajectory out;
  out.trajectory_id =
      "tr-" + to_hex(fnv1a64("plan|" + query.id + "|" + query.text));
  out.trigger = Query{query.text, query.id, std::nullopt};
  std::vector<std::pair<std::string, std::vector<std::string>>> id_deps;
  for (const auto& item : plan) {
    if (!item.is_object()) {
      throw Error(Errc::UnparsablePlan, "plan entries must be objects");
    }
    for (const auto& [key, value] : item.items()) {
      if (key != "depends_on" && key != "node_id" && key != "params" &&
          key != "tool_id") {
        throw Error(Errc::UnparsablePlan, "unknown plan field: " + key);
      }
    }
    if (!item.contains("node_id") || !item.at("node_id").is_string() ||
        !item.contains("tool_id") || !item.at("tool_id").is_string()) {
      throw Error(Errc::UnparsablePlan,
                  "plan entries need node_id and tool_id strings");
    }
    WorkflowNode node;
    node.node_id = item.at("node_id").get<std::string>();
    node.tool_id = item.at("tool_id").get<std::string>();
    if (!tools.has_tool(node.tool_id)) {
      throw Error(Errc::UnknownToolInPlan,
                  "plan references unknown tool: " + node.tool_id);
    }
    if (item.contains("params")) {
      if (!item.at("params").is_object()) {
        throw Error(Errc::UnparsablePlan, "plan params must be an object");
      }
      for (const auto& [key, value] : item.at("params").items()) {
        if (!value.is_string() && !value.is_number() && !value.is_boolean()) {
          throw Error(Errc::UnparsablePlan,
                      "plan param values must be scalars");
        }
        node.params[key] = param_from_json(value);
      }
    }
    if (item.contains("depends_on")) {
      if (!item.at("depends_on").is_array()) {
        throw Error(Errc::UnparsablePlan, "plan depends_on must be an array");
      }
      for (const auto& dep : item.at("depends_on")) {
        if (!dep.is_string()) {
          throw Error(Errc::UnparsablePlan, "plan dependencies must be ids");
        }
        node.depends_on.push_back(dep.get<std::string>());
      }
    }
    node.generated_by_model = true;
    id_deps.emplace_back(node.node_id, node.depends_on);
    out.nodes.push_back(std::move(node));
  }
  out.pattern = infer_pattern(id_deps, false);

  auto violations = validate(out);
  if (!violations.empty()) {
    std::string names;
    for (Violation v : violations) {
      if (!names.empty()) names += ", ";
      names += to_string(v);
    }
    throw Error(Errc::UnparsablePlan, "plan violates structure: " + names);
  }
  return {std::move(out), ledger};
}

// ---------------------------------------------------------------------------
// Iterative generation
// ---------------------------------------------------------------------------

ExhaustedIterationsError::ExhaustedIterationsError(Trajectory trajectory,
                                                   ExecutionLog log,
                                                   TokenLedger ledger)
    : Error(Errc::ExhaustedIterations,
            "no successful execution within the iteration budget"),
      trajectory_(std::move(trajectory)),
      log_(std::move(log)),
      ledger_(std::move(ledger)) {}

GenerationResult iterative_generate(const Query& query,
                                    const TrajectoryTemplate* tpl,
                                    GeneratorBackend& backend,
                                    ExperienceStore& store, ToolRegistry& env,
                                    int max_iters, std::uint64_t seed,
                                    double theta_a) {
  if (max_iters < 1) {
    throw Error(Errc::Precondition, "max_iters must be at least 1");
  }

  TokenLedger total;
  for (int iter = 1; iter <= max_iters; ++iter) {
    // Re-generated each round so freshly stored experiences feed back in.
    auto [trajectory, ledger] =
        tpl ? rewrite_trajectory(*tpl, query, backend, store)
            : plan_from_scratch(query, backend, env);
    total += ledger;

    if (trajectory.trigger_embedding.values.empty()) {
      trajectory.trigger_embedding =
          embed(query.text, store.embedding_config());
    }

    ExecutionLog log = execute_trajectory(trajectory, env, seed);
    trajectory.metadata.executed_at = log.executed_at;
    trajectory.metadata.outcome = log.outcome;

    if (log.outcome == Outcome::Success) {
      store.put_trajectory(trajectory);
      for (const auto& e :
           extract_node_experiences(&trajectory, nullptr, {log})) {
        store.put_experience(e);
      }
      store.cluster_templates(theta_a);
      return GenerationResult{std::move(trajectory), std::move(log), total,
                              iter};
    }

    for (const auto& e :
         extract_node_experiences(nullptr, &trajectory, {log})) {
      store.put_experience(e);
    }
    if (iter == max_iters) {
      store.put_trajectory(trajectory);
      throw ExhaustedIterationsError(std::move(trajectory), std::move(log),
                                     total);
    }
  }
  throw Error(Errc::ExhaustedIterations, "unreachable");
}

}  // namespace wg
