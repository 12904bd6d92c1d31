#include "doctest.h"

#include <fstream>

#include <nlohmann/json.hpp>

#include "generators.hpp"
#include "temp_dir.hpp"
#include "workflowgen/execution.hpp"

using namespace wg;

namespace {

ToolSpec simple_tool(const std::string& id, const std::string& behavior = "echo",
                     std::vector<std::string> required = {}) {
  ToolSpec spec;
  spec.tool_id = id;
  spec.behavior = behavior;
  spec.param_schema.required_fields = std::move(required);
  return spec;
}

Trajectory chain_trajectory(const std::string& query,
                            const std::vector<std::string>& tools,
                            ParamMap params = {}) {
  Trajectory t;
  t.trajectory_id = "tr-" + query;
  t.trigger = Query{query, "q-" + query, std::nullopt};
  t.pattern = Pattern::Sequential;
  for (std::size_t i = 0; i < tools.size(); ++i) {
    WorkflowNode n;
    n.node_id = "n" + std::to_string(i);
    n.tool_id = tools[i];
    n.params = params;
    if (i > 0) n.depends_on.push_back("n" + std::to_string(i - 1));
    t.nodes.push_back(n);
  }
  t.metadata.outcome = Outcome::Success;
  return t;
}

ToolRegistry three_tool_registry() {
  ToolRegistry r;
  r.register_tool(simple_tool("alpha"));
  r.register_tool(simple_tool("beta"));
  r.register_tool(simple_tool("gamma"));
  return r;
}

}  // namespace

TEST_CASE("register, list, duplicate") {
  ToolRegistry r = three_tool_registry();
  CHECK(r.tool_ids() == std::vector<std::string>{"alpha", "beta", "gamma"});
  CHECK(r.has_tool("beta"));
  CHECK(r.tool("beta").behavior == "echo");
  CHECK_THROWS_AS(r.register_tool(simple_tool("beta")), Error);
  CHECK_THROWS_AS(r.tool("missing"), Error);
  CHECK_THROWS_AS(r.register_tool(simple_tool("odd", "teleport")), Error);
}

TEST_CASE("healthy chain executes every node with outputs") {
  ToolRegistry r = three_tool_registry();
  auto t = chain_trajectory("run it", {"alpha", "beta", "gamma"},
                            {{"x", std::int64_t{1}}});
  auto log = execute_trajectory(t, r, 7);
  CHECK(log.outcome == Outcome::Success);
  REQUIRE(log.steps.size() == 3);
  for (const auto& s : log.steps) {
    CHECK(s.error.has_value() == false);
    CHECK(s.output == "{\"x\":1}");
    CHECK(s.duration_units >= 1);
    CHECK(s.duration_units <= 9);
  }
  CHECK(log.query.text == "run it");
  CHECK(log.executed_at == 1);
  CHECK(r.call_count("alpha") == 1);

  // The registry clock advances per execution.
  CHECK(execute_trajectory(t, r, 7).executed_at == 2);
}

TEST_CASE("unknown tool rejected before any step runs") {
  ToolRegistry r = three_tool_registry();
  auto t = chain_trajectory("broken", {"alpha", "ghost"});
  CHECK_THROWS_WITH_AS(execute_trajectory(t, r, 1),
                       "unknown_tool: unknown tool ghost for node n1", Error);
  CHECK(r.call_count("alpha") == 0);
}

TEST_CASE("faulted middle node halts downstream dependents") {
  ToolRegistry r = three_tool_registry();
  r.inject_fault("beta",
                 default_fault(RootCause::InsufficientPermission,
                               FaultTrigger{FaultTrigger::Kind::FieldMissing,
                                            "token", "", 0}));
  auto t = chain_trajectory("guarded run", {"alpha", "beta", "gamma"});
  auto log = execute_trajectory(t, r, 7);
  CHECK(log.outcome == Outcome::Failure);
  REQUIRE(log.steps.size() == 2);
  CHECK(log.steps[1].error->code == "403");
  CHECK(log.skipped_by_condition.empty());
  // gamma never ran.
  CHECK(r.call_count("gamma") == 0);

  r.clear_fault("beta");
  CHECK(execute_trajectory(t, r, 7).outcome == Outcome::Success);
}

TEST_CASE("parallel branches independent of a failed sibling still run") {
  ToolRegistry r = three_tool_registry();
  r.inject_fault("beta", default_fault(RootCause::ToolMismatch,
                                       FaultTrigger{
                                           FaultTrigger::Kind::FieldEquals,
                                           "mode", "legacy", 0}));
  Trajectory t = chain_trajectory("fan out", {"alpha"});
  WorkflowNode left;
  left.node_id = "n1";
  left.tool_id = "beta";
  left.params["mode"] = std::string("legacy");
  left.depends_on = {"n0"};
  WorkflowNode right;
  right.node_id = "n2";
  right.tool_id = "gamma";
  right.depends_on = {"n0"};
  t.nodes.push_back(left);
  t.nodes.push_back(right);
  t.pattern = Pattern::Parallel;

  auto log = execute_trajectory(t, r, 3);
  CHECK(log.outcome == Outcome::Failure);
  REQUIRE(log.steps.size() == 3);
  CHECK(log.steps[1].error->code == "404");
  CHECK(log.steps[2].error.has_value() == false);
}

TEST_CASE("schema violations read as wrong parameters") {
  ToolRegistry r;
  ToolSpec spec = simple_tool("strict", "echo", {"region"});
  spec.param_schema.value_ranges["limit"] = {1.0, 10.0};
  spec.param_schema.format_constraints["date"] = "####-##-##";
  r.register_tool(spec);

  auto run_one = [&](ParamMap params) {
    auto t = chain_trajectory("strict call", {"strict"}, std::move(params));
    return execute_trajectory(t, r, 1);
  };

  auto missing = run_one({});
  REQUIRE(missing.steps[0].error.has_value());
  CHECK(missing.steps[0].error->message == "missing required param region");

  auto out_of_range = run_one(
      {{"region", std::string("eu")}, {"limit", std::int64_t{99}}});
  CHECK(out_of_range.steps[0].error->message == "param limit out of range");

  auto bad_format = run_one(
      {{"region", std::string("eu")}, {"date", std::string("Jan 5 2024")}});
  CHECK(bad_format.steps[0].error->message == "param date format mismatch");

  auto fine = run_one({{"region", std::string("eu")},
                       {"limit", std::int64_t{5}},
                       {"date", std::string("2024-01-05")}});
  CHECK(fine.outcome == Outcome::Success);

  // Every violation classifies as WrongParameter.
  for (const auto* log : {&missing, &out_of_range, &bad_format}) {
    CHECK(classify_root_cause(log->steps[0].error->code,
                              log->steps[0].error->message) ==
          RootCause::WrongParameter);
  }
}

TEST_CASE("call-count threshold fails the first N calls and resets on clear") {
  ToolRegistry r;
  r.register_tool(simple_tool("flaky"));
  r.inject_fault("flaky",
                 default_fault(RootCause::MissingLogic,
                               FaultTrigger{
                                   FaultTrigger::Kind::CallCountThreshold,
                                   "", "", 2}));
  auto t = chain_trajectory("poke", {"flaky"});
  CHECK(execute_trajectory(t, r, 1).outcome == Outcome::Failure);
  CHECK(execute_trajectory(t, r, 1).outcome == Outcome::Failure);
  CHECK(execute_trajectory(t, r, 1).outcome == Outcome::Success);

  r.clear_fault("flaky");
  CHECK(r.call_count("flaky") == 0);
  r.inject_fault("flaky",
                 default_fault(RootCause::MissingLogic,
                               FaultTrigger{
                                   FaultTrigger::Kind::CallCountThreshold,
                                   "", "", 1}));
  CHECK(execute_trajectory(t, r, 1).outcome == Outcome::Failure);
  CHECK(execute_trajectory(t, r, 1).outcome == Outcome::Success);
}

TEST_CASE("fault modes classify back to their namesake causes") {
  const RootCause modes[] = {
      RootCause::WrongParameter, RootCause::InsufficientPermission,
      RootCause::ToolMismatch, RootCause::MissingLogic};
  for (RootCause mode : modes) {
    ToolRegistry r;
    r.register_tool(simple_tool("target"));
    r.inject_fault("target",
                   default_fault(mode, FaultTrigger{
                                           FaultTrigger::Kind::FieldMissing,
                                           "never_present", "", 0}));
    auto log = execute_trajectory(chain_trajectory("probe it", {"target"}), r, 9);
    REQUIRE(log.steps.size() == 1);
    REQUIRE(log.steps[0].error.has_value());
    CHECK(classify_root_cause(log.steps[0].error->code,
                              log.steps[0].error->message) == mode);
    // The same log flows through trajectory extraction unharmed.
    EmbeddingConfig cfg;
    cfg.dimension = 16;
    auto failure = extract_workflow_trajectory(log, cfg);
    auto exps = extract_node_experiences(nullptr, &failure, {log});
    REQUIRE(exps.size() == 1);
    CHECK(exps[0].root_cause == mode);
  }
}

TEST_CASE("profiles that disagree with the classifier are rejected") {
  ToolRegistry r;
  r.register_tool(simple_tool("target"));
  FaultProfile lying;
  lying.mode = RootCause::WrongParameter;
  lying.trigger = FaultTrigger{FaultTrigger::Kind::FieldMissing, "f", "", 0};
  lying.error_code = "403";
  lying.message = "nope";
  CHECK_THROWS_AS(r.inject_fault("target", lying), Error);
  CHECK_THROWS_AS(default_fault(RootCause::Other, FaultTrigger{}), Error);
  CHECK_THROWS_AS(r.inject_fault("ghost", default_fault(
                                              RootCause::ToolMismatch,
                                              FaultTrigger{})),
                  Error);
}

TEST_CASE("builtin behaviors") {
  wgtest::TempDir dir("behaviors");
  auto table_file = dir.path / "table.json";
  {
    std::ofstream out(table_file);
    out << R"({"a":"first","b":"second"})";
  }

  ToolRegistry r;
  ToolSpec concat = simple_tool("weld", "concat");
  concat.behavior_args = {"right", "left"};
  r.register_tool(concat);
  r.register_tool(simple_tool("adder", "sum"));
  ToolSpec avg = simple_tool("adder_picky", "sum");
  avg.behavior_args = {"a", "b"};
  r.register_tool(avg);
  r.register_tool(
      simple_tool("lookup", "lookup_table:" + table_file.string()));

  auto run = [&](const std::string& tool, ParamMap params) {
    auto log = execute_trajectory(chain_trajectory("probe run", {tool},
                                                   std::move(params)),
                                  r, 5);
    REQUIRE(log.steps.size() == 1);
    REQUIRE(log.steps[0].output.has_value());
    return *log.steps[0].output;
  };

  // args order wins over key order.
  CHECK(run("weld", {{"left", std::string("ab")}, {"right", std::string("cd")}}) ==
        "cdab");
  CHECK(run("adder", {{"x", std::int64_t{2}}, {"y", std::int64_t{4}}}) == "6");
  CHECK(run("adder", {{"x", std::int64_t{2}}, {"y", 2.5}}) == "4.5");
  CHECK(run("adder_picky", {{"a", std::int64_t{1}},
                            {"b", std::int64_t{1}},
                            {"z", std::int64_t{50}}}) == "2");
  CHECK(run("lookup", {{"key", std::string("b")}}) == "second");
  CHECK(run("lookup", {{"key", std::string("zz")}}) == "");

  CHECK_THROWS_AS(
      r.register_tool(simple_tool("bad_lookup", "lookup_table:/no/such/file")),
      Error);
}

TEST_CASE("registry serialization round trip keeps probe behavior") {
  wgtest::TempDir dir("registry_rt");
  ToolRegistry r;
  for (int i = 0; i < 5; ++i) {
    ToolSpec spec = simple_tool("tool_" + std::to_string(i),
                                i % 2 == 0 ? "echo" : "concat");
    spec.param_schema.required_fields = {"p"};
    if (i == 3) {
      spec.fault_profile = default_fault(
          RootCause::InsufficientPermission,
          FaultTrigger{FaultTrigger::Kind::FieldEquals, "p", "secret", 0});
    }
    r.register_tool(spec);
  }
  auto file = dir.path / "registry.json";
  save_registry(r, file);
  ToolRegistry reloaded = load_registry(file);
  CHECK(nlohmann::json(reloaded) == nlohmann::json(r));

  auto probe = chain_trajectory("probe all", {"tool_0", "tool_1", "tool_2",
                                              "tool_3", "tool_4"},
                                {{"p", std::string("secret")}});
  ToolRegistry copy = r;
  auto a = execute_trajectory(probe, copy, 11);
  auto b = execute_trajectory(probe, reloaded, 11);
  CHECK(dump_canonical(nlohmann::json(a)) == dump_canonical(nlohmann::json(b)));
  CHECK(a.outcome == Outcome::Failure);
}

TEST_CASE("identical inputs yield byte-identical logs") {
  ToolRegistry base = three_tool_registry();
  base.inject_fault("gamma",
                    default_fault(RootCause::WrongParameter,
                                  FaultTrigger{
                                      FaultTrigger::Kind::FieldEquals, "p0",
                                      "trip", 0}));
  wgtest::Rng rng(404);
  for (int i = 0; i < 20; ++i) {
    auto t = wgtest::random_trajectory(rng, static_cast<std::uint64_t>(i));
    for (auto& node : t.nodes) {
      node.tool_id = std::vector<std::string>{"alpha", "beta",
                                              "gamma"}[rng.index(3)];
    }
    ToolRegistry first = base;
    ToolRegistry second = base;
    auto log_a = execute_trajectory(t, first, 1234 + i);
    auto log_b = execute_trajectory(t, second, 1234 + i);
    CHECK(dump_canonical(nlohmann::json(log_a)) ==
          dump_canonical(nlohmann::json(log_b)));
    // A different seed shifts durations but nothing else.
    ToolRegistry third = base;
    auto log_c = execute_trajectory(t, third, 999);
    REQUIRE(log_c.steps.size() == log_a.steps.size());
    CHECK(log_c.outcome == log_a.outcome);
  }
}
