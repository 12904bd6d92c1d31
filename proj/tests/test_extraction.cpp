#include "doctest.h"

#include <nlohmann/json.hpp>

#include "generators.hpp"
#include "workflowgen/extraction.hpp"

using namespace wg;

namespace {

EmbeddingConfig cfg16() {
  EmbeddingConfig cfg;
  cfg.dimension = 16;
  return cfg;
}

StepRecord ok_step(const std::string& node_id, const std::string& tool_id,
                   ParamMap params, std::vector<std::string> deps = {}) {
  StepRecord s;
  s.node_id = node_id;
  s.tool_id = tool_id;
  s.params = std::move(params);
  s.output = "ok:" + tool_id;
  s.depends_on = std::move(deps);
  return s;
}

StepRecord bad_step(const std::string& node_id, const std::string& tool_id,
                    const std::string& code, const std::string& message,
                    std::vector<std::string> deps = {}) {
  StepRecord s;
  s.node_id = node_id;
  s.tool_id = tool_id;
  s.error = StepRecord::ErrorRecord{code, message};
  s.depends_on = std::move(deps);
  return s;
}

ExecutionLog chain_log(const std::string& query_text, int n_steps) {
  ExecutionLog log;
  log.query = Query{query_text, "q-" + std::to_string(fnv1a64(query_text) % 1000),
                    std::nullopt};
  log.outcome = Outcome::Success;
  for (int i = 0; i < n_steps; ++i) {
    std::vector<std::string> deps;
    if (i > 0) deps.push_back("n" + std::to_string(i - 1));
    log.steps.push_back(ok_step("n" + std::to_string(i),
                                "tool_" + std::to_string(i),
                                {{"key", std::string("v")}}, deps));
  }
  return log;
}

// Random but structurally sane log: outcome matches error presence, deps
// point backward.
ExecutionLog random_log(wgtest::Rng& rng, std::uint64_t serial) {
  ExecutionLog log;
  log.query = Query{wgtest::random_words(rng, 2 + rng.index(4)),
                    "q-rl-" + std::to_string(serial), std::nullopt};
  log.executed_at = static_cast<std::int64_t>(serial);
  std::size_t n = 1 + rng.index(5);
  bool fail_last = rng.index(4) == 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::string> deps;
    if (i > 0) {
      switch (rng.index(3)) {
        case 0: deps.push_back("n" + std::to_string(i - 1)); break;
        case 1: deps.push_back("n0"); break;
        default:
          for (std::size_t j = 0; j < i; ++j) {
            if (rng.coin()) deps.push_back("n" + std::to_string(j));
          }
          break;
      }
    }
    std::string node = "n" + std::to_string(i);
    if (fail_last && i + 1 == n) {
      log.steps.push_back(bad_step(node, "tool_x", "500", "kaboom", deps));
    } else {
      log.steps.push_back(ok_step(node, "tool_" + std::to_string(rng.index(4)),
                                  {{"p", wgtest::random_param_value(rng)}},
                                  deps));
    }
  }
  log.outcome = fail_last ? Outcome::Failure : Outcome::Success;
  if (rng.index(5) == 0) log.skipped_by_condition.push_back("n-ghost");
  return log;
}

}  // namespace

TEST_CASE("intent_key takes the first two tokens") {
  CHECK(intent_key(Query{"Fetch monthly report", "q", std::nullopt}) ==
        "fetch:monthly");
  CHECK(intent_key(Query{"export", "q", std::nullopt}) == "export");
  CHECK(intent_key(Query{"!!", "q", std::nullopt}) == "");
}

TEST_CASE("extract_workflow_trajectory preserves steps and infers patterns") {
  auto log = chain_log("fetch monthly report", 3);
  auto t = extract_workflow_trajectory(log, cfg16());
  CHECK(t.pattern == Pattern::Sequential);
  REQUIRE(t.nodes.size() == 3);
  CHECK(t.nodes[1].depends_on == std::vector<std::string>{"n0"});
  CHECK(t.nodes[2].tool_id == "tool_2");
  CHECK(t.metadata.outcome == Outcome::Success);
  CHECK(t.trigger.text == "fetch monthly report");
  CHECK(t.trigger_embedding.values ==
        embed("fetch monthly report", cfg16()).values);
  CHECK(validate(t).empty());

  // Two steps hanging off step 0: parallel fan-out.
  ExecutionLog fan;
  fan.query = Query{"split the work", "q-fan", std::nullopt};
  fan.outcome = Outcome::Success;
  fan.steps.push_back(ok_step("n0", "tool_root", {}));
  fan.steps.push_back(ok_step("n1", "tool_a", {}, {"n0"}));
  fan.steps.push_back(ok_step("n2", "tool_b", {}, {"n0"}));
  CHECK(extract_workflow_trajectory(fan, cfg16()).pattern == Pattern::Parallel);

  // A recorded skip forces ConditionalBranch.
  auto skipping = chain_log("maybe export", 2);
  skipping.skipped_by_condition.push_back("n9");
  CHECK(extract_workflow_trajectory(skipping, cfg16()).pattern ==
        Pattern::ConditionalBranch);

  ExecutionLog empty;
  empty.query = Query{"nothing", "q-e", std::nullopt};
  CHECK_THROWS_AS(extract_workflow_trajectory(empty, cfg16()), Error);
}

TEST_CASE("twenty-five random logs extract to valid trajectories") {
  wgtest::Rng rng(808);
  for (int i = 0; i < 25; ++i) {
    auto log = random_log(rng, static_cast<std::uint64_t>(i));
    auto t = extract_workflow_trajectory(log, cfg16());
    auto violations = validate(t);
    CHECK(violations.empty());
    CHECK(t.nodes.size() == log.steps.size());
    CHECK(t.metadata.outcome == log.outcome);
    CHECK(t.metadata.executed_at == log.executed_at);
  }
}

TEST_CASE("classify_root_cause rule table") {
  CHECK(classify_root_cause("422", "invalid param x") ==
        RootCause::WrongParameter);
  CHECK(classify_root_cause("400", "whatever") == RootCause::WrongParameter);
  CHECK(classify_root_cause("200", "bad PARAMeter shape") ==
        RootCause::WrongParameter);
  CHECK(classify_root_cause("403", "nope") ==
        RootCause::InsufficientPermission);
  CHECK(classify_root_cause("401", "") == RootCause::InsufficientPermission);
  CHECK(classify_root_cause("200", "access Denied here") ==
        RootCause::InsufficientPermission);
  CHECK(classify_root_cause("404", "") == RootCause::ToolMismatch);
  CHECK(classify_root_cause("200", "there is no such tool") ==
        RootCause::ToolMismatch);
  CHECK(classify_root_cause("200", "key not found") == RootCause::ToolMismatch);
  CHECK(classify_root_cause("501", "unimplemented feature") ==
        RootCause::MissingLogic);
  CHECK(classify_root_cause("200", "missing step before export") ==
        RootCause::MissingLogic);
  CHECK(classify_root_cause("500", "kaboom") == RootCause::Other);

  // First match wins: "param" outranks the permission wording.
  CHECK(classify_root_cause("200", "param access denied") ==
        RootCause::WrongParameter);
}

TEST_CASE("classify_root_cause is total and deterministic") {
  wgtest::Rng rng(616);
  const char* codes[] = {"200", "400", "401", "403", "404", "422", "500", "501"};
  for (int i = 0; i < 10000; ++i) {
    std::string code = codes[rng.index(8)];
    std::string message = wgtest::random_words(rng, rng.index(5));
    auto first = classify_root_cause(code, message);
    auto second = classify_root_cause(code, message);
    CHECK(first == second);
  }
}

TEST_CASE("induce_parameter_schema single sample") {
  std::vector<ParamMap> samples = {
      {{"region", std::string("EU")}, {"limit", std::int64_t{10}}}};
  auto schema = induce_parameter_schema(samples);
  CHECK(schema.required_fields == std::vector<std::string>{"limit", "region"});
  CHECK(schema.optional_fields.empty());
  REQUIRE(schema.value_ranges.count("limit") == 1);
  CHECK(schema.value_ranges.at("limit") == std::pair{10.0, 10.0});
  CHECK(schema.value_ranges.count("region") == 0);
  CHECK(schema.format_constraints.at("region") == "aa");
  CHECK(schema.example_template.at("region") == "EU");
  CHECK(schema.example_template.at("limit") == "10");
}

TEST_CASE("induce_parameter_schema formats and optionals") {
  std::vector<ParamMap> samples = {
      {{"date", std::string("2024-01-02")}, {"mode", std::string("fast")}},
      {{"date", std::string("2023-11-30")}},
      {{"date", std::string("2022-07-15")}, {"mode", std::string("slow")}},
  };
  auto schema = induce_parameter_schema(samples);
  CHECK(schema.required_fields == std::vector<std::string>{"date"});
  CHECK(schema.optional_fields == std::vector<std::string>{"mode"});
  CHECK(schema.format_constraints.at("date") == "####-##-##");
  CHECK(schema.format_constraints.at("mode") == "aaaa");

  // Diverging patterns drop the constraint.
  samples.push_back({{"date", std::string("Jan 5")}});
  schema = induce_parameter_schema(samples);
  CHECK(schema.format_constraints.count("date") == 0);

  CHECK_THROWS_AS(induce_parameter_schema({}), Error);
}

TEST_CASE("induce_parameter_schema is permutation-invariant where promised") {
  wgtest::Rng rng(12);
  std::vector<ParamMap> samples;
  for (int i = 0; i < 6; ++i) {
    ParamMap m;
    m["alpha"] = static_cast<std::int64_t>(rng.index(50));
    if (rng.coin()) m["beta"] = wgtest::random_words(rng, 1);
    m["gamma"] = static_cast<double>(rng.index(100)) / 4.0;
    samples.push_back(m);
  }
  auto base = induce_parameter_schema(samples);
  std::vector<ParamMap> shuffled = {samples[3], samples[0], samples[5],
                                    samples[1], samples[4], samples[2]};
  auto other = induce_parameter_schema(shuffled);
  CHECK(base.required_fields == other.required_fields);
  CHECK(base.optional_fields == other.optional_fields);
  CHECK(base.value_ranges == other.value_ranges);
  CHECK(base.format_constraints == other.format_constraints);
  // example_template is explicitly excluded from the invariant.
}

TEST_CASE("extract_node_experiences failure side") {
  ExecutionLog log;
  log.query = Query{"send the alert now", "q-f", std::nullopt};
  log.outcome = Outcome::Failure;
  log.steps.push_back(
      bad_step("n0", "send_notice", "403", "permission denied for pager"));

  auto failure = extract_workflow_trajectory(log, cfg16());
  auto exps = extract_node_experiences(nullptr, &failure, {log});
  REQUIRE(exps.size() == 1);
  CHECK(exps[0].polarity == Polarity::Failure);
  CHECK(exps[0].root_cause == RootCause::InsufficientPermission);
  REQUIRE(exps[0].fingerprint.has_value());
  CHECK(exps[0].fingerprint->tool_id == "send_notice");
  CHECK(exps[0].fingerprint->error_code == "403");
  CHECK(exps[0].intent_key == "send:the");
  CHECK(exps[0].avoidance_note ==
        avoidance_phrase(RootCause::InsufficientPermission));
  CHECK(exps[0].experience_id.starts_with("exp-f-"));

  // Same failure seen twice dedups by id.
  auto twice = extract_node_experiences(nullptr, &failure, {log, log});
  CHECK(twice.size() == 1);
}

TEST_CASE("extract_node_experiences success side carries tools and schemas") {
  auto log = chain_log("fetch monthly report", 3);
  auto success = extract_workflow_trajectory(log, cfg16());
  auto exps = extract_node_experiences(&success, nullptr, {log});
  REQUIRE(exps.size() == 3);
  for (const auto& e : exps) {
    CHECK(e.polarity == Polarity::Success);
    CHECK(e.fingerprint.has_value() == false);
    REQUIRE(e.best_tool.has_value());
    REQUIRE(e.schema.has_value());
    CHECK(e.schema->required_fields == std::vector<std::string>{"key"});
    CHECK(e.intent_key == "fetch:monthly");
    CHECK(e.experience_id.starts_with("exp-s-"));
  }

  CHECK_THROWS_AS(extract_node_experiences(nullptr, nullptr, {}), Error);
}

TEST_CASE("paired success and failure yields the better tool") {
  ExecutionLog bad;
  bad.query = Query{"lookup the owner", "q-p1", std::nullopt};
  bad.outcome = Outcome::Failure;
  bad.steps.push_back(ok_step("n0", "search_catalog", {{"q", std::string("x")}}));
  bad.steps.push_back(
      bad_step("n1", "legacy_lookup", "404", "no such tool", {"n0"}));
  auto failure = extract_workflow_trajectory(bad, cfg16());

  ExecutionLog good;
  good.query = Query{"lookup the owner", "q-p2", std::nullopt};
  good.outcome = Outcome::Success;
  good.steps.push_back(ok_step("n0", "search_catalog", {{"q", std::string("x")}}));
  good.steps.push_back(
      ok_step("n1", "lookup_entity", {{"source", std::string("modern")}},
              {"n0"}));
  auto success = extract_workflow_trajectory(good, cfg16());

  auto exps = extract_node_experiences(&success, &failure, {bad, good});
  // One failure experience; one success experience for the differing slot 1;
  // slot 0 matches the failed counterpart so it stays silent.
  REQUIRE(exps.size() == 2);
  CHECK(exps[0].polarity == Polarity::Failure);
  CHECK(exps[0].root_cause == RootCause::ToolMismatch);
  CHECK(exps[1].polarity == Polarity::Success);
  CHECK(exps[1].best_tool == "lookup_entity");
}

TEST_CASE("execution log json round trip") {
  auto log = chain_log("serialize me please", 2);
  log.steps.push_back(bad_step("n2", "tool_z", "422", "invalid param", {"n1"}));
  log.outcome = Outcome::Failure;
  log.skipped_by_condition.push_back("n3");
  log.context["site"] = "test";
  log.executed_at = 77;

  nlohmann::json j = log;
  auto back = j.get<ExecutionLog>();
  CHECK(back == log);
  CHECK(dump_canonical(nlohmann::json(back)) == dump_canonical(j));
  // Optional error/output fields appear only where present.
  CHECK(dump_canonical(j).find("\"error\"") != std::string::npos);
  std::string first_step = dump_canonical(nlohmann::json(log.steps[0]));
  CHECK(first_step.find("\"error\"") == std::string::npos);
}
