#include "workflowgen/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

namespace wg {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Enum names
// ---------------------------------------------------------------------------

const char* to_string(Errc code) {
  switch (code) {
    case Errc::EmptyText: return "empty_text";
    case Errc::RemoteUnavailable: return "remote_unavailable";
    case Errc::DimensionMismatch: return "dimension_mismatch";
    case Errc::InvalidTrajectory: return "invalid_trajectory";
    case Errc::StorageFailure: return "storage_failure";
    case Errc::EmptyStore: return "empty_store";
    case Errc::UnknownTemplate: return "unknown_template";
    case Errc::UnknownTrajectory: return "unknown_trajectory";
    case Errc::EmptyLog: return "empty_log";
    case Errc::BothAbsent: return "both_absent";
    case Errc::EmptySamples: return "empty_samples";
    case Errc::NotVariableNode: return "not_variable_node";
    case Errc::GeneratorFailure: return "generator_failure";
    case Errc::SchemaViolation: return "schema_violation";
    case Errc::UnparsablePlan: return "unparsable_plan";
    case Errc::UnknownToolInPlan: return "unknown_tool_in_plan";
    case Errc::ExhaustedIterations: return "exhausted_iterations";
    case Errc::DuplicateTool: return "duplicate_tool";
    case Errc::UnknownTool: return "unknown_tool";
    case Errc::CalibrationFailure: return "calibration_failure";
    case Errc::MissingBaseline: return "missing_baseline";
    case Errc::ConfigError: return "config_error";
    case Errc::Precondition: return "precondition";
  }
  return "unknown";
}

const char* to_string(Tier t) {
  switch (t) {
    case Tier::High: return "high";
    case Tier::Medium: return "medium";
    case Tier::Novel: return "novel";
  }
  return "unknown";
}

const char* to_string(Outcome o) {
  return o == Outcome::Success ? "success" : "failure";
}

const char* to_string(Pattern p) {
  switch (p) {
    case Pattern::Sequential: return "sequential";
    case Pattern::ConditionalBranch: return "conditional_branch";
    case Pattern::Parallel: return "parallel";
  }
  return "unknown";
}

const char* to_string(RootCause r) {
  switch (r) {
    case RootCause::WrongParameter: return "wrong_parameter";
    case RootCause::InsufficientPermission: return "insufficient_permission";
    case RootCause::ToolMismatch: return "tool_mismatch";
    case RootCause::MissingLogic: return "missing_logic";
    case RootCause::Other: return "other";
  }
  return "unknown";
}

const char* to_string(Polarity p) {
  return p == Polarity::Success ? "success" : "failure";
}

const char* to_string(ReuseClass r) {
  return r == ReuseClass::DirectReuse ? "direct_reuse" : "rewrite_reuse";
}

const char* to_string(Violation v) {
  switch (v) {
    case Violation::NodesEmpty: return "nodes_empty";
    case Violation::DuplicateNodeId: return "duplicate_node_id";
    case Violation::UnknownDependency: return "unknown_dependency";
    case Violation::ForwardDependency: return "forward_dependency";
    case Violation::SequentialChainBroken: return "sequential_chain_broken";
    case Violation::EmptyTriggerText: return "empty_trigger_text";
    case Violation::EmbeddingNotNormalized: return "embedding_not_normalized";
    case Violation::EmbeddingDimensionMismatch:
      return "embedding_dimension_mismatch";
    case Violation::BadVersionId: return "bad_version_id";
    case Violation::NegativeUsageCount: return "negative_usage_count";
    case Violation::NegativePriority: return "negative_priority";
  }
  return "unknown";
}

namespace {

template <typename E>
E enum_from_string(std::string_view s, std::initializer_list<E> all,
                   const char* kind) {
  for (E e : all) {
    if (s == to_string(e)) return e;
  }
  throw std::runtime_error(std::string("unknown ") + kind + ": " +
                           std::string(s));
}

}  // namespace

Tier tier_from_string(std::string_view s) {
  return enum_from_string<Tier>(s, {Tier::High, Tier::Medium, Tier::Novel},
                                "tier");
}

Outcome outcome_from_string(std::string_view s) {
  return enum_from_string<Outcome>(s, {Outcome::Success, Outcome::Failure},
                                   "outcome");
}

Pattern pattern_from_string(std::string_view s) {
  return enum_from_string<Pattern>(
      s, {Pattern::Sequential, Pattern::ConditionalBranch, Pattern::Parallel},
      "pattern");
}

RootCause root_cause_from_string(std::string_view s) {
  return enum_from_string<RootCause>(
      s,
      {RootCause::WrongParameter, RootCause::InsufficientPermission,
       RootCause::ToolMismatch, RootCause::MissingLogic, RootCause::Other},
      "root_cause");
}

Polarity polarity_from_string(std::string_view s) {
  return enum_from_string<Polarity>(s, {Polarity::Success, Polarity::Failure},
                                    "polarity");
}

ReuseClass reuse_class_from_string(std::string_view s) {
  return enum_from_string<ReuseClass>(
      s, {ReuseClass::DirectReuse, ReuseClass::RewriteReuse}, "reuse_class");
}

// ---------------------------------------------------------------------------
// Parameter values
// ---------------------------------------------------------------------------

std::string param_to_string(const ParamValue& v) {
  struct Visitor {
    std::string operator()(const std::string& s) const { return s; }
    std::string operator()(std::int64_t i) const { return std::to_string(i); }
    std::string operator()(double d) const {
      char buf[32];
      auto res = std::to_chars(buf, buf + sizeof(buf), d);
      return std::string(buf, res.ptr);
    }
    std::string operator()(bool b) const { return b ? "true" : "false"; }
  };
  return std::visit(Visitor{}, v);
}

bool param_is_numeric(const ParamValue& v) {
  return std::holds_alternative<std::int64_t>(v) ||
         std::holds_alternative<double>(v);
}

double param_as_double(const ParamValue& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) {
    return static_cast<double>(*i);
  }
  return std::get<double>(v);
}

// ---------------------------------------------------------------------------
// Embedding vector helpers
// ---------------------------------------------------------------------------

bool EmbeddingVector::is_zero() const {
  for (double v : values) {
    if (v != 0.0) return false;
  }
  return true;
}

double EmbeddingVector::l2_norm() const {
  double acc = 0.0;
  for (double v : values) acc += v * v;
  return std::sqrt(acc);
}

// ---------------------------------------------------------------------------
// Schema and template helpers
// ---------------------------------------------------------------------------

bool ParameterSchema::has_field(const std::string& name) const {
  return std::find(required_fields.begin(), required_fields.end(), name) !=
             required_fields.end() ||
         std::find(optional_fields.begin(), optional_fields.end(), name) !=
             optional_fields.end();
}

bool TrajectoryTemplate::has_variable_nodes() const {
  for (const auto& n : skeleton) {
    if (n.is_variable) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Token accounting
// ---------------------------------------------------------------------------

TokenLedger& TokenLedger::operator+=(const TokenLedger& o) {
  prompt_tokens += o.prompt_tokens;
  completion_tokens += o.completion_tokens;
  generator_calls += o.generator_calls;
  return *this;
}

// ---------------------------------------------------------------------------
// Hashing
// ---------------------------------------------------------------------------

Fnv1a64& Fnv1a64::update_byte(unsigned char b) {
  state_ ^= b;
  state_ *= 1099511628211ULL;
  return *this;
}

Fnv1a64& Fnv1a64::update(std::string_view bytes) {
  for (char c : bytes) update_byte(static_cast<unsigned char>(c));
  return *this;
}

Fnv1a64& Fnv1a64::update_u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    update_byte(static_cast<unsigned char>(v & 0xFF));
    v >>= 8;
  }
  return *this;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  return Fnv1a64{}.update(bytes).digest();
}

std::string to_hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

namespace {

// Field and record separators keep adjacent strings from gluing into the
// same digest ("ab"+"c" vs "a"+"bc").
constexpr unsigned char kFieldSep = 0x1F;
constexpr unsigned char kNodeSep = 0x1E;

}  // namespace

std::uint64_t structural_hash(const Trajectory& t) {
  Fnv1a64 h;
  h.update(to_string(t.pattern)).update_byte(kNodeSep);

  std::map<std::string, std::uint64_t> position;
  for (std::size_t i = 0; i < t.nodes.size(); ++i) {
    position.emplace(t.nodes[i].node_id, static_cast<std::uint64_t>(i));
  }

  for (const auto& node : t.nodes) {
    h.update(node.tool_id).update_byte(kFieldSep);
    h.update_byte(node.is_variable ? 1 : 0);

    // ParamMap iterates in key order already. Variable nodes contribute no
    // param content at all; slot substitution must not move the hash.
    if (!node.is_variable) {
      for (const auto& [name, value] : node.params) {
        h.update(name).update_byte(kFieldSep);
        h.update_byte(static_cast<unsigned char>(value.index()));
        h.update(param_to_string(value)).update_byte(kFieldSep);
      }
    }

    std::vector<std::uint64_t> edges;
    edges.reserve(node.depends_on.size());
    for (const auto& dep : node.depends_on) {
      auto it = position.find(dep);
      edges.push_back(it == position.end() ? ~0ULL : it->second);
    }
    std::sort(edges.begin(), edges.end());
    for (std::uint64_t e : edges) h.update_u64(e);

    h.update_byte(kNodeSep);
  }
  return h.digest();
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

std::vector<Violation> validate(const Trajectory& t) {
  std::vector<Violation> out;
  const auto& nodes = t.nodes;

  if (nodes.empty()) out.push_back(Violation::NodesEmpty);

  std::map<std::string, std::size_t> position;
  bool duplicate = false;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (!position.emplace(nodes[i].node_id, i).second) duplicate = true;
  }
  if (duplicate) out.push_back(Violation::DuplicateNodeId);

  bool unknown_dep = false;
  bool forward_dep = false;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (const auto& dep : nodes[i].depends_on) {
      auto it = position.find(dep);
      if (it == position.end()) {
        unknown_dep = true;
      } else if (it->second >= i) {
        forward_dep = true;
      }
    }
  }
  if (unknown_dep) out.push_back(Violation::UnknownDependency);
  if (forward_dep) out.push_back(Violation::ForwardDependency);

  if (t.pattern == Pattern::Sequential && !nodes.empty()) {
    bool chain = nodes[0].depends_on.empty();
    for (std::size_t i = 1; chain && i < nodes.size(); ++i) {
      chain = nodes[i].depends_on.size() == 1 &&
              nodes[i].depends_on[0] == nodes[i - 1].node_id;
    }
    if (!chain) out.push_back(Violation::SequentialChainBroken);
  }

  if (t.trigger.text.empty()) out.push_back(Violation::EmptyTriggerText);

  if (!t.trigger_embedding.values.empty()) {
    double norm = t.trigger_embedding.l2_norm();
    if (std::abs(norm - 1.0) > 1e-6) {
      out.push_back(Violation::EmbeddingNotNormalized);
    }
  }

  if (t.metadata.version_id < 1) out.push_back(Violation::BadVersionId);
  if (t.metadata.usage_count < 0) out.push_back(Violation::NegativeUsageCount);
  if (t.metadata.priority < 0) out.push_back(Violation::NegativePriority);

  return out;
}

// ---------------------------------------------------------------------------
// Error fingerprints
// ---------------------------------------------------------------------------

std::string normalize_error_message(std::string_view message) {
  std::string out;
  out.reserve(message.size());
  bool in_digits = false;
  bool in_space = false;
  auto emit = [&](char c) {
    if (in_space && !out.empty()) out.push_back(' ');
    in_space = false;
    out.push_back(c);
  };
  for (char raw : message) {
    unsigned char c = static_cast<unsigned char>(raw);
    if (std::isdigit(c)) {
      if (!in_digits) emit('#');
      in_digits = true;
      continue;
    }
    in_digits = false;
    if (std::isspace(c)) {
      in_space = true;
      continue;
    }
    emit(static_cast<char>(std::tolower(c)));
  }
  return out;
}

ErrorFingerprint make_fingerprint(const std::string& tool_id,
                                  const std::string& error_code,
                                  std::string_view raw_message) {
  ErrorFingerprint fp;
  fp.tool_id = tool_id;
  fp.error_code = error_code;
  fp.message_digest = fnv1a64(normalize_error_message(raw_message));
  return fp;
}

// ---------------------------------------------------------------------------
// Slot markers
// ---------------------------------------------------------------------------

std::string slot_marker(const std::string& param_name) {
  return "<slot:" + param_name + ">";
}

bool is_slot_marker(const ParamValue& v) {
  const auto* s = std::get_if<std::string>(&v);
  if (s == nullptr) return false;
  return s->size() > 7 && s->starts_with("<slot:") && s->back() == '>';
}

// ---------------------------------------------------------------------------
// JSON serialization
// ---------------------------------------------------------------------------

json param_to_json(const ParamValue& v) {
  struct Visitor {
    json operator()(const std::string& s) const { return s; }
    json operator()(std::int64_t i) const { return i; }
    json operator()(double d) const { return d; }
    json operator()(bool b) const { return b; }
  };
  return std::visit(Visitor{}, v);
}

ParamValue param_from_json(const json& j) {
  switch (j.type()) {
    case json::value_t::string: return j.get<std::string>();
    case json::value_t::boolean: return j.get<bool>();
    case json::value_t::number_integer:
    case json::value_t::number_unsigned: return j.get<std::int64_t>();
    case json::value_t::number_float: return j.get<double>();
    default:
      throw std::runtime_error("parameter value must be a scalar");
  }
}

namespace {

json params_to_json(const ParamMap& params) {
  json j = json::object();
  for (const auto& [k, v] : params) j[k] = param_to_json(v);
  return j;
}

ParamMap params_from_json(const json& j) {
  ParamMap out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    out.emplace(it.key(), param_from_json(it.value()));
  }
  return out;
}

}  // namespace

void to_json(json& j, const Query& v) {
  j = json::object();
  j["id"] = v.id;
  j["text"] = v.text;
  if (v.tier_hint) j["tier_hint"] = to_string(*v.tier_hint);
}

void from_json(const json& j, Query& v) {
  v.id = j.at("id").get<std::string>();
  v.text = j.at("text").get<std::string>();
  v.tier_hint.reset();
  if (j.contains("tier_hint")) {
    v.tier_hint = tier_from_string(j.at("tier_hint").get<std::string>());
  }
}

void to_json(json& j, const EmbeddingVector& v) {
  j = json::object();
  j["values"] = v.values;
}

void from_json(const json& j, EmbeddingVector& v) {
  v.values = j.at("values").get<std::vector<double>>();
}

void to_json(json& j, const WorkflowNode& v) {
  j = json::object();
  j["depends_on"] = v.depends_on;
  j["experience_refs"] = v.experience_refs;
  j["generated_by_model"] = v.generated_by_model;
  j["is_variable"] = v.is_variable;
  j["node_id"] = v.node_id;
  j["params"] = params_to_json(v.params);
  j["tool_id"] = v.tool_id;
}

void from_json(const json& j, WorkflowNode& v) {
  v.depends_on = j.at("depends_on").get<std::vector<std::string>>();
  v.experience_refs = j.at("experience_refs").get<std::vector<std::string>>();
  v.generated_by_model = j.at("generated_by_model").get<bool>();
  v.is_variable = j.at("is_variable").get<bool>();
  v.node_id = j.at("node_id").get<std::string>();
  v.params = params_from_json(j.at("params"));
  v.tool_id = j.at("tool_id").get<std::string>();
}

void to_json(json& j, const Metadata& v) {
  j = json::object();
  j["compatibility_tags"] = v.compatibility_tags;
  j["executed_at"] = v.executed_at;
  j["outcome"] = to_string(v.outcome);
  j["priority"] = v.priority;
  j["usage_count"] = v.usage_count;
  j["version_id"] = v.version_id;
}

void from_json(const json& j, Metadata& v) {
  v.compatibility_tags =
      j.at("compatibility_tags").get<std::vector<std::string>>();
  v.executed_at = j.at("executed_at").get<std::int64_t>();
  v.outcome = outcome_from_string(j.at("outcome").get<std::string>());
  v.priority = j.at("priority").get<std::int64_t>();
  v.usage_count = j.at("usage_count").get<std::int64_t>();
  v.version_id = j.at("version_id").get<std::int64_t>();
}

void to_json(json& j, const Trajectory& v) {
  j = json::object();
  j["context"] = v.context;
  j["metadata"] = v.metadata;
  j["nodes"] = v.nodes;
  j["pattern"] = to_string(v.pattern);
  j["trajectory_id"] = v.trajectory_id;
  j["trigger"] = v.trigger;
  j["trigger_embedding"] = v.trigger_embedding;
}

void from_json(const json& j, Trajectory& v) {
  v.context = j.at("context").get<std::map<std::string, std::string>>();
  v.metadata = j.at("metadata").get<Metadata>();
  v.nodes = j.at("nodes").get<std::vector<WorkflowNode>>();
  v.pattern = pattern_from_string(j.at("pattern").get<std::string>());
  v.trajectory_id = j.at("trajectory_id").get<std::string>();
  v.trigger = j.at("trigger").get<Query>();
  v.trigger_embedding = j.at("trigger_embedding").get<EmbeddingVector>();
}

void to_json(json& j, const ErrorFingerprint& v) {
  j = json::object();
  j["error_code"] = v.error_code;
  j["message_digest"] = to_hex(v.message_digest);
  j["tool_id"] = v.tool_id;
}

void from_json(const json& j, ErrorFingerprint& v) {
  v.error_code = j.at("error_code").get<std::string>();
  v.message_digest =
      std::stoull(j.at("message_digest").get<std::string>(), nullptr, 16);
  v.tool_id = j.at("tool_id").get<std::string>();
}

void to_json(json& j, const ParameterSchema& v) {
  j = json::object();
  j["example_template"] = v.example_template;
  j["format_constraints"] = v.format_constraints;
  j["optional_fields"] = v.optional_fields;
  j["required_fields"] = v.required_fields;
  json ranges = json::object();
  for (const auto& [name, range] : v.value_ranges) {
    ranges[name] = json::array({range.first, range.second});
  }
  j["value_ranges"] = ranges;
}

void from_json(const json& j, ParameterSchema& v) {
  v.example_template =
      j.at("example_template").get<std::map<std::string, std::string>>();
  v.format_constraints =
      j.at("format_constraints").get<std::map<std::string, std::string>>();
  v.optional_fields = j.at("optional_fields").get<std::vector<std::string>>();
  v.required_fields = j.at("required_fields").get<std::vector<std::string>>();
  v.value_ranges.clear();
  const auto& ranges = j.at("value_ranges");
  for (auto it = ranges.begin(); it != ranges.end(); ++it) {
    v.value_ranges.emplace(
        it.key(), std::make_pair(it.value().at(0).get<double>(),
                                 it.value().at(1).get<double>()));
  }
}

void to_json(json& j, const NodeExperience& v) {
  j = json::object();
  j["avoidance_note"] = v.avoidance_note;
  if (v.best_tool) j["best_tool"] = *v.best_tool;
  j["experience_id"] = v.experience_id;
  if (v.fingerprint) j["fingerprint"] = *v.fingerprint;
  j["intent_key"] = v.intent_key;
  j["polarity"] = to_string(v.polarity);
  j["root_cause"] = to_string(v.root_cause);
  if (v.schema) j["schema"] = *v.schema;
}

void from_json(const json& j, NodeExperience& v) {
  v.avoidance_note = j.at("avoidance_note").get<std::string>();
  v.best_tool.reset();
  if (j.contains("best_tool")) {
    v.best_tool = j.at("best_tool").get<std::string>();
  }
  v.experience_id = j.at("experience_id").get<std::string>();
  v.fingerprint.reset();
  if (j.contains("fingerprint")) {
    v.fingerprint = j.at("fingerprint").get<ErrorFingerprint>();
  }
  v.intent_key = j.at("intent_key").get<std::string>();
  v.polarity = polarity_from_string(j.at("polarity").get<std::string>());
  v.root_cause = root_cause_from_string(j.at("root_cause").get<std::string>());
  v.schema.reset();
  if (j.contains("schema")) {
    v.schema = j.at("schema").get<ParameterSchema>();
  }
}

void to_json(json& j, const TrajectoryTemplate& v) {
  j = json::object();
  j["member_ids"] = v.member_ids;
  j["priority"] = v.priority;
  j["reuse_class"] = to_string(v.reuse_class);
  j["skeleton"] = v.skeleton;
  j["structural_hash"] = to_hex(v.structural_hash);
  j["template_id"] = v.template_id;
  j["trigger_centroid"] = v.trigger_centroid;
}

void from_json(const json& j, TrajectoryTemplate& v) {
  v.member_ids = j.at("member_ids").get<std::vector<std::string>>();
  v.priority = j.at("priority").get<std::int64_t>();
  v.reuse_class =
      reuse_class_from_string(j.at("reuse_class").get<std::string>());
  v.skeleton = j.at("skeleton").get<std::vector<WorkflowNode>>();
  v.structural_hash =
      std::stoull(j.at("structural_hash").get<std::string>(), nullptr, 16);
  v.template_id = j.at("template_id").get<std::string>();
  v.trigger_centroid = j.at("trigger_centroid").get<EmbeddingVector>();
}

void to_json(json& j, const TokenLedger& v) {
  j = json::object();
  j["completion_tokens"] = v.completion_tokens;
  j["generator_calls"] = v.generator_calls;
  j["prompt_tokens"] = v.prompt_tokens;
}

void from_json(const json& j, TokenLedger& v) {
  v.completion_tokens = j.at("completion_tokens").get<std::int64_t>();
  v.generator_calls = j.at("generator_calls").get<std::int64_t>();
  v.prompt_tokens = j.at("prompt_tokens").get<std::int64_t>();
}

std::string dump_canonical(const json& j) { return j.dump(); }

}  // namespace wg
