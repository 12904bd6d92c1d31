#pragma once
// Core domain model: trajectories, workflow nodes, experiences, templates,
// token accounting, structural hashing and validation.
//
// Every type here is an immutable value object after construction; instances
// can be shared across threads without synchronization.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace wg {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class Errc {
  EmptyText,
  RemoteUnavailable,
  DimensionMismatch,
  InvalidTrajectory,
  StorageFailure,
  EmptyStore,
  UnknownTemplate,
  UnknownTrajectory,
  EmptyLog,
  BothAbsent,
  EmptySamples,
  NotVariableNode,
  GeneratorFailure,
  SchemaViolation,
  UnparsablePlan,
  UnknownToolInPlan,
  ExhaustedIterations,
  DuplicateTool,
  UnknownTool,
  CalibrationFailure,
  MissingBaseline,
  ConfigError,
  Precondition,
};

const char* to_string(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

// ---------------------------------------------------------------------------
// Scalars and small values
// ---------------------------------------------------------------------------

// Parameter values are JSON-expressible scalars. Integers and floating-point
// values keep their kind through serialization round trips.
using ParamValue = std::variant<std::string, std::int64_t, double, bool>;
using ParamMap = std::map<std::string, ParamValue>;

// Canonical text form of a value: type-stable and platform-independent
// (doubles use shortest round-trip formatting).
std::string param_to_string(const ParamValue& v);
bool param_is_numeric(const ParamValue& v);
double param_as_double(const ParamValue& v);

enum class Tier { High, Medium, Novel };
enum class Outcome { Success, Failure };
enum class Pattern { Sequential, ConditionalBranch, Parallel };
enum class RootCause {
  WrongParameter,
  InsufficientPermission,
  ToolMismatch,
  MissingLogic,
  Other,
};
enum class Polarity { Success, Failure };
enum class ReuseClass { DirectReuse, RewriteReuse };

const char* to_string(Tier t);
const char* to_string(Outcome o);
const char* to_string(Pattern p);
const char* to_string(RootCause r);
const char* to_string(Polarity p);
const char* to_string(ReuseClass r);

Tier tier_from_string(std::string_view s);
Outcome outcome_from_string(std::string_view s);
Pattern pattern_from_string(std::string_view s);
RootCause root_cause_from_string(std::string_view s);
Polarity polarity_from_string(std::string_view s);
ReuseClass reuse_class_from_string(std::string_view s);

struct Query {
  std::string text;
  std::string id;
  // Harness-only annotation; the engine never reads it.
  std::optional<Tier> tier_hint;

  bool operator==(const Query&) const = default;
};

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dimension() const { return values.size(); }
  bool is_zero() const;
  double l2_norm() const;

  bool operator==(const EmbeddingVector&) const = default;
};

// ---------------------------------------------------------------------------
// Workflow structure
// ---------------------------------------------------------------------------

struct WorkflowNode {
  std::string node_id;  // unique within the trajectory
  std::string tool_id;
  ParamMap params;
  bool is_variable = false;
  bool generated_by_model = false;
  std::vector<std::string> experience_refs;
  std::vector<std::string> depends_on;  // node_ids appearing earlier

  bool operator==(const WorkflowNode&) const = default;
};

struct Metadata {
  std::int64_t executed_at = 0;  // logical timestamp, monotone per environment
  Outcome outcome = Outcome::Failure;
  std::int64_t version_id = 1;  // bumped by the store on every revision
  std::vector<std::string> compatibility_tags;
  std::int64_t usage_count = 0;
  std::int64_t priority = 0;

  bool operator==(const Metadata&) const = default;
};

struct Trajectory {
  std::string trajectory_id;
  Query trigger;
  EmbeddingVector trigger_embedding;
  std::vector<WorkflowNode> nodes;
  Pattern pattern = Pattern::Sequential;
  std::map<std::string, std::string> context;
  Metadata metadata;

  bool operator==(const Trajectory&) const = default;
};

// ---------------------------------------------------------------------------
// Experiences
// ---------------------------------------------------------------------------

struct ErrorFingerprint {
  std::string tool_id;
  std::string error_code;
  std::uint64_t message_digest = 0;  // hash of the normalized message

  bool operator==(const ErrorFingerprint&) const = default;
  auto operator<=>(const ErrorFingerprint&) const = default;
};

struct ParameterSchema {
  std::vector<std::string> required_fields;
  std::vector<std::string> optional_fields;  // present in some samples only
  std::map<std::string, std::string> format_constraints;
  std::map<std::string, std::pair<double, double>> value_ranges;
  std::map<std::string, std::string> example_template;

  bool has_field(const std::string& name) const;
  bool operator==(const ParameterSchema&) const = default;
};

struct NodeExperience {
  std::string experience_id;
  std::optional<ErrorFingerprint> fingerprint;  // present iff polarity Failure
  RootCause root_cause = RootCause::Other;
  std::string intent_key;
  std::optional<std::string> best_tool;
  std::optional<ParameterSchema> schema;
  std::string avoidance_note;
  Polarity polarity = Polarity::Success;

  bool operator==(const NodeExperience&) const = default;
};

struct TrajectoryTemplate {
  std::string template_id;  // hex of structural_hash, stable across runs
  std::uint64_t structural_hash = 0;
  // Variable nodes hold slot markers instead of values.
  std::vector<WorkflowNode> skeleton;
  std::vector<std::string> member_ids;
  EmbeddingVector trigger_centroid;
  ReuseClass reuse_class = ReuseClass::RewriteReuse;
  std::int64_t priority = 0;

  bool has_variable_nodes() const;
  bool operator==(const TrajectoryTemplate&) const = default;
};

// ---------------------------------------------------------------------------
// Token accounting
// ---------------------------------------------------------------------------

struct TokenLedger {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::int64_t generator_calls = 0;

  TokenLedger& operator+=(const TokenLedger& o);
  friend TokenLedger operator+(TokenLedger a, const TokenLedger& b) {
    a += b;
    return a;
  }
  bool operator==(const TokenLedger&) const = default;
};

// ---------------------------------------------------------------------------
// Hashing
// ---------------------------------------------------------------------------

// Streaming FNV-1a over bytes; the one hash family used across the codebase
// (structural hashing, embedding buckets, deterministic ids).
class Fnv1a64 {
 public:
  Fnv1a64& update(std::string_view bytes);
  Fnv1a64& update_u64(std::uint64_t v);  // little-endian byte order
  Fnv1a64& update_byte(unsigned char b);
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 14695981039346656037ULL;
};

std::uint64_t fnv1a64(std::string_view bytes);
std::string to_hex(std::uint64_t v);  // 16 lowercase hex digits

// Digest of a trajectory's topology and fixed content. Covers, in node order:
// tool_id, the trajectory pattern, each node's variability flag, fixed-node
// param names and values (sorted by name), and the dependency shape (edges as
// ordinal positions, so node renaming does not change the hash). Variable
// nodes contribute no param content, so the hash is invariant under slot
// substitution.
std::uint64_t structural_hash(const Trajectory& t);

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

enum class Violation {
  NodesEmpty,
  DuplicateNodeId,
  UnknownDependency,
  ForwardDependency,
  SequentialChainBroken,
  EmptyTriggerText,
  EmbeddingNotNormalized,
  EmbeddingDimensionMismatch,  // raised by the store against its manifest
  BadVersionId,
  NegativeUsageCount,
  NegativePriority,
};

const char* to_string(Violation v);

// Returns every violated invariant; empty iff the trajectory is valid.
// Violations are data, not errors.
std::vector<Violation> validate(const Trajectory& t);

// ---------------------------------------------------------------------------
// Error fingerprints
// ---------------------------------------------------------------------------

// Lowercase, replace digit runs with "#", collapse whitespace runs, trim.
// Transient ids in error text collapse to one fingerprint.
std::string normalize_error_message(std::string_view message);

ErrorFingerprint make_fingerprint(const std::string& tool_id,
                                  const std::string& error_code,
                                  std::string_view raw_message);

// ---------------------------------------------------------------------------
// Slot markers
// ---------------------------------------------------------------------------

std::string slot_marker(const std::string& param_name);
bool is_slot_marker(const ParamValue& v);

// ---------------------------------------------------------------------------
// Canonical JSON serialization
// ---------------------------------------------------------------------------
// One JSON object per entity, field names as in the type definitions, keys
// in fixed alphabetical order. Optional fields are omitted when absent.

void to_json(nlohmann::json& j, const Query& v);
void from_json(const nlohmann::json& j, Query& v);
void to_json(nlohmann::json& j, const EmbeddingVector& v);
void from_json(const nlohmann::json& j, EmbeddingVector& v);
void to_json(nlohmann::json& j, const WorkflowNode& v);
void from_json(const nlohmann::json& j, WorkflowNode& v);
void to_json(nlohmann::json& j, const Metadata& v);
void from_json(const nlohmann::json& j, Metadata& v);
void to_json(nlohmann::json& j, const Trajectory& v);
void from_json(const nlohmann::json& j, Trajectory& v);
void to_json(nlohmann::json& j, const ErrorFingerprint& v);
void from_json(const nlohmann::json& j, ErrorFingerprint& v);
void to_json(nlohmann::json& j, const ParameterSchema& v);
void from_json(const nlohmann::json& j, ParameterSchema& v);
void to_json(nlohmann::json& j, const NodeExperience& v);
void from_json(const nlohmann::json& j, NodeExperience& v);
void to_json(nlohmann::json& j, const TrajectoryTemplate& v);
void from_json(const nlohmann::json& j, TrajectoryTemplate& v);
void to_json(nlohmann::json& j, const TokenLedger& v);
void from_json(const nlohmann::json& j, TokenLedger& v);

nlohmann::json param_to_json(const ParamValue& v);
ParamValue param_from_json(const nlohmann::json& j);

// Compact single-line dump with sorted keys; the byte-reproducible form used
// for JSONL files and digests.
std::string dump_canonical(const nlohmann::json& j);

}  // namespace wg
