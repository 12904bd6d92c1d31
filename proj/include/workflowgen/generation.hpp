#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "workflowgen/core.hpp"
#include "workflowgen/execution.hpp"
#include "workflowgen/store.hpp"

namespace wg {

enum class GeneratorPurpose { RewriteNode, FullPlan };

const char* to_string(GeneratorPurpose p);

struct PromptSection {
  std::string label;
  std::string text;

  bool operator==(const PromptSection&) const = default;
};

// slot = (template_id, node_id); RewriteNode requests carry one.
struct GeneratorRequest {
  GeneratorPurpose purpose = GeneratorPurpose::FullPlan;
  std::vector<PromptSection> prompt_sections;
  std::optional<ParameterSchema> constraints;
  std::optional<std::pair<std::string, std::string>> slot;

  bool operator==(const GeneratorRequest&) const = default;
};

struct GeneratorResponse {
  std::string payload;
  TokenLedger ledger;  // generator_calls == 1
};

// Number of maximal non-whitespace runs; the sole token metric for the mock
// backend and every ledger in this codebase.
std::int64_t count_tokens(const std::string& text);

// "label:\n<text>" sections joined by blank lines.
std::string render_prompt(const GeneratorRequest& request);

class GeneratorBackend {
 public:
  enum class Kind { DeterministicMock, RemoteHTTP };

  virtual ~GeneratorBackend() = default;
  virtual Kind kind() const = 0;
  // Throws on backend failure; every success costs exactly one generator call.
  virtual GeneratorResponse generate(const GeneratorRequest& request) = 0;
};

// Pure function of (request, seed, rule table). Rules are keyed by
// (purpose, key): the slot's node_id for rewrites, the task text for plans.
// Without a rule, rewrites fill the constraint schema from task-text tokens,
// switching to the schema's example values once a failure-avoidance section
// appears; plans emit a single bare call to the first listed tool.
class DeterministicMockBackend : public GeneratorBackend {
 public:
  explicit DeterministicMockBackend(std::uint64_t seed = 0);

  void set_rule(GeneratorPurpose purpose, const std::string& key,
                std::string payload);
  // Payload served instead of the base rule once the request carries a
  // failure-avoidance section; models a generator that heeds injected
  // experience.
  void set_avoidance_rule(GeneratorPurpose purpose, const std::string& key,
                          std::string payload);
  void set_failure(GeneratorPurpose purpose, const std::string& key);

  Kind kind() const override { return Kind::DeterministicMock; }
  GeneratorResponse generate(const GeneratorRequest& request) override;

 private:
  struct Rule {
    std::string payload;
    bool fail = false;
  };

  std::string default_rewrite_payload(const GeneratorRequest& request) const;
  std::string default_plan_payload(const GeneratorRequest& request) const;

  std::uint64_t seed_;
  std::map<std::pair<GeneratorPurpose, std::string>, Rule> rules_;
  std::map<std::pair<GeneratorPurpose, std::string>, std::string>
      avoidance_rules_;
};

// POST {"purpose","prompt"} -> {"payload","prompt_tokens","completion_tokens"};
// count_tokens fills in when the remote omits counts.
class RemoteHTTPBackend : public GeneratorBackend {
 public:
  explicit RemoteHTTPBackend(std::string endpoint, int timeout_ms = 5000);

  Kind kind() const override { return Kind::RemoteHTTP; }
  GeneratorResponse generate(const GeneratorRequest& request) override;

 private:
  std::string endpoint_;
  int timeout_ms_;
};

// Sections in fixed order: task, node contract, then success paradigms and
// failure avoidance when experiences supply them (most recent first, cap 3
// each). Constraints come from the freshest Success experience for the node's
// tool. experiences arrive freshest first per polarity, the
// lookup_experiences ordering.
GeneratorRequest assemble_prompt(const WorkflowNode& node,
                                 const std::vector<NodeExperience>& experiences,
                                 const Query& query,
                                 const std::string& template_id = "");

// The success-paradigm section on its own, for callers that inject examples
// into plan prompts. Filters to Success experiences carrying a tool, keeps
// input order, caps at 3; nullopt when nothing qualifies. Line shape matches
// the rewrite prompt exactly.
std::optional<PromptSection> success_paradigms_section(
    const std::vector<NodeExperience>& experiences);

// Fills the template's variable-node params through one backend call each;
// fixed nodes are copied verbatim, so the result hashes identically to the
// members. A payload that violates the node's schema earns one re-ask with
// the violation injected into the avoidance section.
std::pair<Trajectory, TokenLedger> rewrite_trajectory(
    const TrajectoryTemplate& tpl, const Query& query,
    GeneratorBackend& backend, const ExperienceStore& store);

// One FullPlan call; payload must parse as a JSON array of node objects over
// registered tools. extra_sections lets callers append context (examples,
// prior trajectories) after the task and tools sections.
std::pair<Trajectory, TokenLedger> plan_from_scratch(
    const Query& query, GeneratorBackend& backend, const ToolRegistry& tools,
    const std::vector<PromptSection>& extra_sections = {});

struct GenerationResult {
  Trajectory trajectory;
  ExecutionLog log;
  TokenLedger ledger;
  int iterations = 0;
};

// Thrown when max_iters executions all fail; carries the last attempt. The
// failing trajectory has already been stored at that point.
class ExhaustedIterationsError : public Error {
 public:
  ExhaustedIterationsError(Trajectory trajectory, ExecutionLog log,
                           TokenLedger ledger);

  const Trajectory& trajectory() const { return trajectory_; }
  const ExecutionLog& log() const { return log_; }
  const TokenLedger& ledger() const { return ledger_; }

 private:
  Trajectory trajectory_;
  ExecutionLog log_;
  TokenLedger ledger_;
};

// Generate (rewrite when tpl, plan otherwise), execute, and on failure feed
// extracted experiences back into the next attempt. Success stores the
// trajectory, its node experiences, and refreshes templates.
GenerationResult iterative_generate(const Query& query,
                                    const TrajectoryTemplate* tpl,
                                    GeneratorBackend& backend,
                                    ExperienceStore& store, ToolRegistry& env,
                                    int max_iters = 3, std::uint64_t seed = 0,
                                    double theta_a = 0.9);

}  // namespace wg
