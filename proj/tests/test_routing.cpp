#include "doctest.h"

#include <cstdlib>

#include <nlohmann/json.hpp>

#include "generators.hpp"
#include "temp_dir.hpp"
#include "workflowgen/embedding.hpp"
#include "workflowgen/extraction.hpp"
#include "workflowgen/routing.hpp"
#include "workflowgen/store.hpp"

using namespace wg;

namespace {

EmbeddingConfig cfg8() {
  EmbeddingConfig cfg;
  cfg.dimension = 8;
  return cfg;
}

// Same shape as the generation fixture: two Success members whose "region"
// value diverges, clustering to one template with a variable first node.
struct RoutedFixture {
  wgtest::TempDir dir;
  ExperienceStore store;
  TrajectoryTemplate tpl;

  explicit RoutedFixture(const std::string& label)
      : dir(label), store(dir.path, cfg8()) {
    for (int i = 0; i < 2; ++i) {
      Trajectory t;
      std::string region = i == 0 ? "eu" : "us";
      t.trajectory_id = "tr-seed-" + region;
      t.trigger = Query{"fetch " + region + " report", "q-seed-" + region,
                       std::nullopt};
      t.trigger_embedding = embed(t.trigger.text, cfg8());
      t.pattern = Pattern::Sequential;
      WorkflowNode fetch;
      fetch.node_id = "n0";
      fetch.tool_id = "fetch";
      fetch.params["region"] = region;
      WorkflowNode exp;
      exp.node_id = "n1";
      exp.tool_id = "export";
      exp.params["mode"] = std::string("csv");
      exp.depends_on = {"n0"};
      t.nodes = {fetch, exp};
      t.metadata.outcome = Outcome::Success;
      t.metadata.executed_at = i + 1;
      store.put_trajectory(t);
    }
    auto templates = store.cluster_templates();
    REQUIRE(templates.size() == 1);
    tpl = templates[0];
  }

  double score_of(const std::string& text) const {
    auto hits = store.find_nearest_templates(embed(text, cfg8()), 1);
    REQUIRE(hits.size() == 1);
    return hits.front().second;
  }
};

ToolRegistry fetch_export_env() {
  ToolRegistry env;
  ToolSpec fetch;
  fetch.tool_id = "fetch";
  fetch.param_schema.required_fields = {"region"};
  env.register_tool(fetch);
  ToolSpec exporter;
  exporter.tool_id = "export";
  env.register_tool(exporter);
  return env;
}

NodeExperience region_schema_exp(const std::string& intent) {
  NodeExperience e;
  e.experience_id = "exp-s-region";
  e.polarity = Polarity::Success;
  e.best_tool = "fetch";
  e.intent_key = intent;
  ParameterSchema schema;
  schema.required_fields = {"region"};
  schema.format_constraints["region"] = "aa";
  schema.example_template["region"] = "eu";
  e.schema = schema;
  return e;
}

// Every trail must walk strictly forward with each tier visited at most once.
void check_forward_only(const ExecutionReport& report) {
  int last = -1;
  for (const auto& [decision, outcome] : report.trail) {
    int rank = static_cast<int>(decision.route);
    CHECK(rank > last);
    last = rank;
  }
}

void set_env(const char* name, const char* value) {
  ::setenv(name, value, 1);
}

void unset_env(const char* name) { ::unsetenv(name); }

}  // namespace

TEST_CASE("config validation and presets") {
  RoutingConfig cfg;
  CHECK_NOTHROW(validate(cfg));
  CHECK(cfg.theta_a == 0.9);
  CHECK(cfg.theta_b == 0.6);
  CHECK(cfg.max_iters == 3);

  auto expect_invalid = [](RoutingConfig bad) {
    try {
      validate(bad);
      FAIL("expected ConfigError");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::ConfigError);
    }
  };
  expect_invalid([] { RoutingConfig c; c.theta_b = 0.0; return c; }());
  expect_invalid([] { RoutingConfig c; c.theta_b = c.theta_a; return c; }());
  expect_invalid([] { RoutingConfig c; c.theta_a = 1.01; return c; }());
  expect_invalid([] { RoutingConfig c; c.max_iters = 0; return c; }());

  CHECK(routing_preset("default").theta_a == 0.9);
  CHECK(routing_preset("strict").theta_a == 0.99);
  CHECK(routing_preset("strict").theta_b == 0.6);
  CHECK_THROWS_AS(routing_preset("loose"), Error);
}

TEST_CASE("environment variables override thresholds") {
  unset_env("WG_THETA_A");
  unset_env("WG_THETA_B");

  RoutingConfig cfg;
  RoutingConfig untouched = apply_env_overrides(cfg);
  CHECK(untouched.theta_a == 0.9);
  CHECK(untouched.theta_b == 0.6);

  set_env("WG_THETA_A", "0.95");
  set_env("WG_THETA_B", "0.3");
  RoutingConfig overridden = apply_env_overrides(cfg);
  CHECK(overridden.theta_a == 0.95);
  CHECK(overridden.theta_b == 0.3);

  set_env("WG_THETA_B", "zero point three");
  try {
    apply_env_overrides(cfg);
    FAIL("expected ConfigError for malformed override");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ConfigError);
  }

  // A numeric override that breaks the ordering invariant is still rejected.
  set_env("WG_THETA_A", "0.5");
  unset_env("WG_THETA_B");
  CHECK_THROWS_AS(apply_env_overrides(cfg), Error);

  unset_env("WG_THETA_A");
  unset_env("WG_THETA_B");
}

TEST_CASE("score bands partition into the three routes") {
  RoutedFixture fx("route_bands");
  RoutingConfig cfg;

  auto route_of = [&](const std::string& text) {
    return route(Query{text, "q-band", std::nullopt}, fx.store, cfg);
  };

  RouteDecision a = route_of("fetch eu report");
  REQUIRE(fx.score_of("fetch eu report") > cfg.theta_a);
  CHECK(a.route == Route::A_DirectReuse);
  REQUIRE(a.best_match.has_value());
  CHECK(a.best_match->first == fx.tpl.template_id);
  CHECK(a.degraded_from.empty());

  RouteDecision b = route_of("fetch de report");
  double s_b = fx.score_of("fetch de report");
  REQUIRE(s_b > cfg.theta_b);
  REQUIRE(s_b <= cfg.theta_a);
  CHECK(b.route == Route::B_Rewrite);

  RouteDecision c = route_of("unrelated chores tonight");
  REQUIRE(fx.score_of("unrelated chores tonight") <= cfg.theta_b);
  CHECK(c.route == Route::C_Initialize);
  CHECK(c.best_match.has_value());  // score recorded even when low

  // Random queries: the route always matches the band of the oracle score.
  wgtest::Rng rng(7);
  const char* pool[] = {"fetch", "eu",     "us",     "report", "de",
                        "export", "plan",  "batch",  "notice", "alpha"};
  for (int i = 0; i < 200; ++i) {
    std::string text;
    std::size_t len = 1 + rng.index(5);
    for (std::size_t j = 0; j < len; ++j) {
      if (!text.empty()) text.push_back(' ');
      text += pool[rng.index(10)];
    }
    double s = fx.score_of(text);
    RouteDecision d = route_of(text);
    Route expected = s > cfg.theta_a   ? Route::A_DirectReuse
                     : s > cfg.theta_b ? Route::B_Rewrite
                                       : Route::C_Initialize;
    CHECK(d.route == expected);
    CHECK(d.degraded_from.empty());
    RouteDecision again = route_of(text);
    CHECK(nlohmann::json(again) == nlohmann::json(d));
  }
}

TEST_CASE("boundary scores fall to the lower tier") {
  RoutedFixture fx("route_boundary");
  double s = fx.score_of("fetch de report");
  Query q{"fetch de report", "q-edge", std::nullopt};

  RoutingConfig at_a;
  at_a.theta_a = s;  // A requires strictly greater
  at_a.theta_b = 0.1;
  CHECK(route(q, fx.store, at_a).route == Route::B_Rewrite);

  RoutingConfig at_b;
  at_b.theta_a = 0.95;
  at_b.theta_b = s;  // B requires strictly greater
  CHECK(route(q, fx.store, at_b).route == Route::C_Initialize);
}

TEST_CASE("empty and template-free stores route without templates") {
  wgtest::TempDir dir("route_fallback");
  ExperienceStore store(dir.path, cfg8());
  RoutingConfig cfg;
  Query q{"alpha beta gamma", "q-f", std::nullopt};

  RouteDecision empty = route(q, store, cfg);
  CHECK(empty.route == Route::C_Initialize);
  CHECK_FALSE(empty.best_match.has_value());
  CHECK(empty.degraded_from.empty());

  // With trajectories but no templates the nearest trajectory is the match.
  Trajectory t;
  t.trajectory_id = "tr-base";
  t.trigger = q;
  t.trigger_embedding = embed(q.text, cfg8());
  t.pattern = Pattern::Sequential;
  WorkflowNode n;
  n.node_id = "n0";
  n.tool_id = "alpha";
  t.nodes = {n};
  t.metadata.outcome = Outcome::Success;
  t.metadata.executed_at = 1;
  store.put_trajectory(t);

  RouteDecision exact = route(q, store, cfg);
  CHECK(exact.route == Route::A_DirectReuse);
  REQUIRE(exact.best_match.has_value());
  CHECK(exact.best_match->first == "tr-base");
  CHECK(exact.best_match->second == doctest::Approx(1.0));

  RouteDecision near = route(Query{"alpha beta delta", "q-n", std::nullopt},
                             store, cfg);
  CHECK(near.route == Route::B_Rewrite);

  CHECK(route(Query{"omega psi chi", "q-o", std::nullopt}, store, cfg).route ==
        Route::C_Initialize);

  RoutingConfig bad;
  bad.theta_b = 2.0;
  CHECK_THROWS_AS(route(q, store, bad), Error);
}

TEST_CASE("exact repeat reuses the canonical member without the generator") {
  RoutedFixture fx("exec_reuse");
  ToolRegistry env = fetch_export_env();
  DeterministicMockBackend backend;
  RoutingConfig cfg;

  Query q{"fetch eu report", "q-a", std::nullopt};
  ExecutionReport report =
      execute_with_fallback(q, fx.store, backend, env, cfg, 42);

  REQUIRE(report.trail.size() == 1);
  CHECK(report.trail[0].first.route == Route::A_DirectReuse);
  CHECK(report.trail[0].second == Outcome::Success);
  CHECK(report.succeeded);
  CHECK(report.ledger == TokenLedger{});
  CHECK(report.wall_steps == 2);
  check_forward_only(report);

  // The freshest Success member is the canonical trajectory.
  CHECK(report.final_trajectory.trajectory_id == "tr-seed-us");
  CHECK(report.final_trajectory.metadata.usage_count == 1);
  auto boosted = fx.store.get_template(fx.tpl.template_id);
  REQUIRE(boosted.has_value());
  CHECK(boosted->priority == fx.tpl.priority + 1);

  // The run confirms both nodes: success experiences keyed to this query.
  CHECK(fx.store.experience_count() == 2);
  for (const auto& e : fx.store.experiences()) {
    CHECK(e.polarity == Polarity::Success);
    CHECK(e.intent_key == intent_key(q));
  }
}

TEST_CASE("failed reuse degrades to a rewrite that learns from it") {
  RoutedFixture fx("exec_degrade");
  ToolRegistry env = fetch_export_env();
  // First call fails regardless of params, later calls succeed.
  env.inject_fault(
      "fetch",
      default_fault(RootCause::WrongParameter,
                    FaultTrigger{FaultTrigger::Kind::CallCountThreshold, "",
                                 "", 1}));
  DeterministicMockBackend backend;
  RoutingConfig cfg;

  Query q{"fetch eu report", "q-ab", std::nullopt};
  fx.store.put_experience(region_schema_exp(intent_key(q)));

  ExecutionReport report =
      execute_with_fallback(q, fx.store, backend, env, cfg, 42);

  REQUIRE(report.trail.size() == 2);
  CHECK(report.trail[0].first.route == Route::A_DirectReuse);
  CHECK(report.trail[0].second == Outcome::Failure);
  CHECK(report.trail[1].first.route == Route::B_Rewrite);
  CHECK(report.trail[1].first.degraded_from ==
        std::vector<Route>{Route::A_DirectReuse});
  CHECK(report.trail[1].second == Outcome::Success);
  CHECK(report.succeeded);
  CHECK(report.ledger.generator_calls == 1);
  CHECK(report.wall_steps == 3);  // failed reuse: 1 call, rewrite: 2
  check_forward_only(report);

  // The reuse failure was recorded under this query's intent, which is what
  // steered the rewrite to the example values.
  auto matches = fx.store.lookup_experiences(intent_key(q));
  REQUIRE_FALSE(matches.empty());
  CHECK(matches[0].polarity == Polarity::Failure);
  REQUIRE(matches[0].fingerprint.has_value());
  CHECK(matches[0].fingerprint->tool_id == "fetch");
  CHECK(report.final_trajectory.nodes[0].params.at("region") ==
        ParamValue{std::string("eu")});

  // The stored member keeps its own outcome: the failed run is not its fault.
  CHECK(fx.store.get_trajectory("tr-seed-us")->metadata.outcome ==
        Outcome::Success);
}

TEST_CASE("mid-band queries rewrite without touching route a") {
  RoutedFixture fx("exec_rewrite");
  ToolRegistry env = fetch_export_env();
  DeterministicMockBackend backend;
  RoutingConfig cfg;

  Query q{"fetch de report", "q-b", std::nullopt};
  fx.store.put_experience(region_schema_exp(intent_key(q)));

  ExecutionReport report =
      execute_with_fallback(q, fx.store, backend, env, cfg, 42);

  REQUIRE(report.trail.size() == 1);
  CHECK(report.trail[0].first.route == Route::B_Rewrite);
  CHECK(report.trail[0].first.degraded_from.empty());
  CHECK(report.trail[0].second == Outcome::Success);
  CHECK(report.succeeded);
  CHECK(report.ledger.generator_calls == 1);
  CHECK(report.wall_steps == 2);
  CHECK(report.final_trajectory.nodes[0].params.at("region") ==
        ParamValue{std::string("de")});

  // Same shape as the members: the refreshed clustering keeps one template.
  CHECK(fx.store.template_count() == 1);
}

TEST_CASE("novel query on an empty store plans from scratch") {
  wgtest::TempDir dir("exec_novel");
  ExperienceStore store(dir.path, cfg8());
  ToolRegistry env;
  ToolSpec alpha;
  alpha.tool_id = "alpha";
  env.register_tool(alpha);
  DeterministicMockBackend backend;
  RoutingConfig cfg;

  Query q{"simple job now", "q-c", std::nullopt};
  ExecutionReport report = execute_with_fallback(q, store, backend, env, cfg);

  REQUIRE(report.trail.size() == 1);
  CHECK(report.trail[0].first.route == Route::C_Initialize);
  CHECK_FALSE(report.trail[0].first.best_match.has_value());
  CHECK(report.trail[0].first.degraded_from.empty());
  CHECK(report.trail[0].second == Outcome::Success);
  CHECK(report.succeeded);
  CHECK(report.ledger.generator_calls == 1);
  CHECK(report.wall_steps == 1);
  CHECK(store.trajectory_count() == 1);
  CHECK(store.template_count() == 1);

  SUBCASE("approval bumps usage") {
    record_feedback(report, Verdict::UserOk, store);
    auto t = store.get_trajectory(report.final_trajectory.trajectory_id);
    CHECK(t->metadata.usage_count == 1);
  }

  SUBCASE("rejection poisons reuse and the next run starts at the rewrite") {
    record_feedback(report, Verdict::UserError, store);
    record_feedback(report, Verdict::UserError, store);  // idempotent
    auto t = store.get_trajectory(report.final_trajectory.trajectory_id);
    CHECK(t->metadata.outcome == Outcome::Failure);
    CHECK(t->metadata.compatibility_tags ==
          std::vector<std::string>{"user_rejected"});

    RouteDecision next = route(q, store, cfg);
    CHECK(next.route == Route::B_Rewrite);
    CHECK(next.degraded_from == std::vector<Route>{Route::A_DirectReuse});

    ExecutionReport second =
        execute_with_fallback(q, store, backend, env, cfg);
    REQUIRE(second.trail.size() == 1);
    CHECK(second.trail[0].first.route == Route::B_Rewrite);
    CHECK(second.trail[0].first.degraded_from ==
          std::vector<Route>{Route::A_DirectReuse});
    CHECK(second.succeeded);
    // The skeleton has no variable nodes, so the rewrite costs nothing.
    CHECK(second.ledger.generator_calls == 0);
    CHECK(second.final_trajectory.trajectory_id !=
          report.final_trajectory.trajectory_id);
  }

  SUBCASE("feedback for an unstored trajectory is rejected") {
    ExecutionReport ghost;
    ghost.final_trajectory.trajectory_id = "tr-ghost";
    try {
      record_feedback(ghost, Verdict::UserOk, store);
      FAIL("expected UnknownTrajectory");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::UnknownTrajectory);
    }
    CHECK_THROWS_AS(record_feedback(ExecutionReport{}, Verdict::UserOk, store),
                    Error);
  }
}

TEST_CASE("a template-free match in the rewrite band falls through to c") {
  wgtest::TempDir dir("exec_fallthrough");
  ExperienceStore store(dir.path, cfg8());
  Trajectory t;
  t.trajectory_id = "tr-base";
  t.trigger = Query{"alpha beta gamma", "q-base", std::nullopt};
  t.trigger_embedding = embed(t.trigger.text, cfg8());
  t.pattern = Pattern::Sequential;
  WorkflowNode n;
  n.node_id = "n0";
  n.tool_id = "alpha";
  t.nodes = {n};
  t.metadata.outcome = Outcome::Success;
  t.metadata.executed_at = 1;
  store.put_trajectory(t);

  ToolRegistry env;
  ToolSpec alpha;
  alpha.tool_id = "alpha";
  env.register_tool(alpha);
  DeterministicMockBackend backend;
  RoutingConfig cfg;

  Query q{"alpha beta delta", "q-d", std::nullopt};
  REQUIRE(route(q, store, cfg).route == Route::B_Rewrite);

  ExecutionReport report = execute_with_fallback(q, store, backend, env, cfg);
  // No template to rewrite: the tier is skipped silently, not attempted.
  REQUIRE(report.trail.size() == 1);
  CHECK(report.trail[0].first.route == Route::C_Initialize);
  CHECK(report.trail[0].first.degraded_from ==
        std::vector<Route>{Route::B_Rewrite});
  CHECK(report.trail[0].second == Outcome::Success);
  CHECK(report.succeeded);
  check_forward_only(report);
}

TEST_CASE("every tier can fail and the report says so") {
  RoutedFixture fx("exec_exhaust_all");
  ToolRegistry env;
  ToolSpec fetch;
  fetch.tool_id = "fetch";
  env.register_tool(fetch);
  ToolSpec exporter;
  exporter.tool_id = "export";
  env.register_tool(exporter);
  // Fires on every call: the trigger field is never present.
  env.inject_fault("fetch",
                   default_fault(RootCause::InsufficientPermission,
                                 FaultTrigger{FaultTrigger::Kind::FieldMissing,
                                              "token", "", 0}));
  DeterministicMockBackend backend;
  RoutingConfig cfg;

  Query q{"fetch eu report", "q-all", std::nullopt};
  ExecutionReport report =
      execute_with_fallback(q, fx.store, backend, env, cfg, 42);

  REQUIRE(report.trail.size() == 3);
  CHECK(report.trail[0].first.route == Route::A_DirectReuse);
  CHECK(report.trail[1].first.route == Route::B_Rewrite);
  CHECK(report.trail[1].first.degraded_from ==
        std::vector<Route>{Route::A_DirectReuse});
  CHECK(report.trail[2].first.route == Route::C_Initialize);
  CHECK(report.trail[2].first.degraded_from ==
        std::vector<Route>{Route::A_DirectReuse, Route::B_Rewrite});
  for (const auto& [decision, outcome] : report.trail) {
    CHECK(outcome == Outcome::Failure);
  }
  CHECK_FALSE(report.succeeded);
  check_forward_only(report);

  // Reuse 1 call, three rewrite attempts at 1 call each (export is halted),
  // three plan attempts at 1 call each.
  CHECK(report.wall_steps == 7);
  CHECK(report.ledger.generator_calls == 6);
  CHECK(report.final_trajectory.metadata.outcome == Outcome::Failure);
  REQUIRE_FALSE(report.final_trajectory.trajectory_id.empty());
  CHECK(fx.store.get_trajectory(report.final_trajectory.trajectory_id)
            .has_value());
}

TEST_CASE("exhausted planning reports failure without throwing") {
  wgtest::TempDir dir("exec_exhaust_c");
  ExperienceStore store(dir.path, cfg8());
  ToolRegistry env;
  ToolSpec alpha;
  alpha.tool_id = "alpha";
  env.register_tool(alpha);
  env.inject_fault("alpha",
                   default_fault(RootCause::InsufficientPermission,
                                 FaultTrigger{FaultTrigger::Kind::FieldMissing,
                                              "token", "", 0}));
  DeterministicMockBackend backend;
  RoutingConfig cfg;

  Query q{"simple job now", "q-e", std::nullopt};
  ExecutionReport report = execute_with_fallback(q, store, backend, env, cfg);

  REQUIRE(report.trail.size() == 1);
  CHECK(report.trail[0].first.route == Route::C_Initialize);
  CHECK(report.trail[0].second == Outcome::Failure);
  CHECK_FALSE(report.succeeded);
  CHECK(report.ledger.generator_calls == 3);
  CHECK(report.wall_steps == 3);
  CHECK(report.final_trajectory.metadata.outcome == Outcome::Failure);
}

TEST_CASE("fallback execution is reproducible byte for byte") {
  auto run_once = [](const std::string& label) {
    RoutedFixture fx(label);
    ToolRegistry env = fetch_export_env();
    env.inject_fault(
        "fetch",
        default_fault(RootCause::WrongParameter,
                      FaultTrigger{FaultTrigger::Kind::CallCountThreshold, "",
                                   "", 1}));
    DeterministicMockBackend backend;
    Query q{"fetch eu report", "q-r", std::nullopt};
    fx.store.put_experience(region_schema_exp(intent_key(q)));
    ExecutionReport report =
        execute_with_fallback(q, fx.store, backend, env, RoutingConfig{}, 42);
    return dump_canonical(nlohmann::json(report));
  };
  CHECK(run_once("repro_a") == run_once("repro_b"));
}

TEST_CASE("routing structures serialize with stable fields") {
  RoutingConfig cfg;
  cfg.theta_a = 0.95;
  nlohmann::json j = cfg;
  CHECK(j == nlohmann::json({{"max_iters", 3},
                             {"theta_a", 0.95},
                             {"theta_b", 0.6}}));
  RoutingConfig back = j.get<RoutingConfig>();
  CHECK(back.theta_a == 0.95);
  CHECK(nlohmann::json::parse(R"({"theta_b":0.2})").get<RoutingConfig>()
            .theta_a == 0.9);

  RouteDecision d;
  d.route = Route::B_Rewrite;
  d.best_match = {"tpl-1", 0.75};
  d.degraded_from = {Route::A_DirectReuse};
  nlohmann::json dj = d;
  CHECK(dj.at("route") == "b_rewrite");
  CHECK(dj.at("best_match").at("id") == "tpl-1");
  CHECK(dj.at("degraded_from") == nlohmann::json::array({"a_direct_reuse"}));

  RouteDecision bare;
  CHECK_FALSE(nlohmann::json(bare).contains("best_match"));
}
