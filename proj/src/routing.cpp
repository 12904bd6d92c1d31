#include "workflowgen/routing.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>

#include <nlohmann/json.hpp>

#include "workflowgen/embedding.hpp"
#include "workflowgen/extraction.hpp"

namespace wg {

namespace {

constexpr const char* kRejectedTag = "user_rejected";

bool has_tag(const Trajectory& t, const std::string& tag) {
  return std::find(t.metadata.compatibility_tags.begin(),
                   t.metadata.compatibility_tags.end(),
                   tag) != t.metadata.compatibility_tags.end();
}

// What route A would run for a best-match id: the freshest Success member of
// a template, or the matched trajectory itself. canonical stays empty when
// every candidate is failed or user-rejected.
struct ReuseTarget {
  std::optional<std::string> template_id;
  std::optional<Trajectory> canonical;
};

ReuseTarget resolve_reuse_target(const ExperienceStore& store,
                                 const std::string& best_id) {
  ReuseTarget out;
  if (auto tpl = store.get_template(best_id)) {
    out.template_id = best_id;
    std::vector<Trajectory> members;
    for (const auto& member_id : tpl->member_ids) {
      if (auto member = store.get_trajectory(member_id)) {
        members.push_back(std::move(*member));
      }
    }
    std::sort(members.begin(), members.end(),
              [](const Trajectory& a, const Trajectory& b) {
                if (a.metadata.executed_at != b.metadata.executed_at) {
                  return a.metadata.executed_at > b.metadata.executed_at;
                }
                return a.trajectory_id < b.trajectory_id;
              });
    for (auto& member : members) {
      if (member.metadata.outcome == Outcome::Success &&
          !has_tag(member, kRejectedTag)) {
        out.canonical = std::move(member);
        break;
      }
    }
    return out;
  }
  if (auto t = store.get_trajectory(best_id)) {
    if (t->metadata.outcome == Outcome::Success && !has_tag(*t, kRejectedTag)) {
      out.canonical = std::move(*t);
    }
  }
  return out;
}

std::int64_t total_calls(const ToolRegistry& env) {
  std::int64_t total = 0;
  for (const auto& id : env.tool_ids()) total += env.call_count(id);
  return total;
}

double parse_env_double(const char* name, double fallback) {
  const char* raw = std::getenv(name);
  if (raw == nullptr || *raw == '\0') return fallback;
  std::string text(raw);
  double value = 0.0;
  auto [ptr, ec] =
      std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(Errc::ConfigError,
                std::string(name) + " must be a decimal number, got: " + text);
  }
  return value;
}

}  // namespace

void validate(const RoutingConfig& cfg) {
  if (!(cfg.theta_b > 0.0 && cfg.theta_b < cfg.theta_a &&
        cfg.theta_a <= 1.0)) {
    throw Error(Errc::ConfigError,
                "thresholds must satisfy 0 < theta_b < theta_a <= 1");
  }
  if (cfg.max_iters < 1) {
    throw Error(Errc::ConfigError, "max_iters must be at least 1");
  }
}

RoutingConfig routing_preset(const std::string& name) {
  RoutingConfig cfg;
  if (name == "default") return cfg;
  if (name == "strict") {
    cfg.theta_a = 0.99;
    return cfg;
  }
  throw Error(Errc::ConfigError, "unknown routing preset: " + name);
}

RoutingConfig apply_env_overrides(RoutingConfig cfg) {
  cfg.theta_a = parse_env_double("WG_THETA_A", cfg.theta_a);
  cfg.theta_b = parse_env_double("WG_THETA_B", cfg.theta_b);
  validate(cfg);
  return cfg;
}

const char* to_string(Route r) {
  switch (r) {
    case Route::A_DirectReuse: return "a_direct_reuse";
    case Route::B_Rewrite: return "b_rewrite";
    case Route::C_Initialize: return "c_initialize";
  }
  return "unknown";
}

Route route_from_string(std::string_view s) {
  for (Route r : {Route::A_DirectReuse, Route::B_Rewrite,
                  Route::C_Initialize}) {
    if (s == to_string(r)) return r;
  }
  throw Error(Errc::ConfigError, "unknown route: " + std::string(s));
}

RouteDecision route(const Query& query, const ExperienceStore& store,
                    const RoutingConfig& cfg) {
  validate(cfg);

  RouteDecision decision;
  if (store.template_count() == 0 && store.trajectory_count() == 0) {
    return decision;  // empty store: C with no match
  }

  EmbeddingVector q = embed(query.text, store.embedding_config());
  auto hits = store.template_count() > 0 ? store.find_nearest_templates(q, 1)
                                         : store.find_nearest(q, 1);
  decision.best_match = hits.front();
  double s = hits.front().second;

  if (s > cfg.theta_a) {
    decision.route = Route::A_DirectReuse;
    if (!resolve_reuse_target(store, hits.front().first).canonical) {
      decision.route = Route::B_Rewrite;
      decision.degraded_from = {Route::A_DirectReuse};
    }
  } else if (s > cfg.theta_b) {
    decision.route = Route::B_Rewrite;
  } else {
    decision.route = Route::C_Initialize;
  }
  return decision;
}

ExecutionReport execute_with_fallback(const Query& query,
                                      ExperienceStore& store,
                                      GeneratorBackend& backend,
                                      ToolRegistry& env,
                                      const RoutingConfig& cfg,
                                      std::uint64_t seed) {
  ExecutionReport report;
  std::int64_t steps_before = total_calls(env);
  auto finish = [&]() {
    report.wall_steps = total_calls(env) - steps_before;
    return report;
  };

  RouteDecision decision = route(query, store, cfg);

  if (decision.route == Route::A_DirectReuse) {
    ReuseTarget target =
        resolve_reuse_target(store, decision.best_match->first);
    if (target.canonical) {
      // Experiences learned on this run must key to the query being served,
      // not to the member's original trigger: the rewrite tier looks them up
      // by the served query's intent.
      target.canonical->trigger = query;
      ExecutionLog log = execute_trajectory(*target.canonical, env, seed);
      if (log.outcome == Outcome::Success) {
        const std::string& id = target.canonical->trajectory_id;
        store.bump_usage(id);
        for (const auto& e :
             extract_node_experiences(&*target.canonical, nullptr, {log})) {
          store.put_experience(e);
        }
        if (target.template_id) store.boost_priority(*target.template_id);
        report.trail.push_back({decision, Outcome::Success});
        report.final_trajectory = *store.get_trajectory(id);
        report.succeeded = true;
        return finish();
      }
      // The failed run still teaches: its errors feed the rewrite attempt.
      for (const auto& e :
           extract_node_experiences(nullptr, &*target.canonical, {log})) {
        store.put_experience(e);
      }
      report.trail.push_back({decision, Outcome::Failure});
    }
    decision = RouteDecision{Route::B_Rewrite, decision.best_match,
                             {Route::A_DirectReuse}};
  }

  if (decision.route == Route::B_Rewrite) {
    std::optional<TrajectoryTemplate> tpl;
    if (decision.best_match) {
      tpl = store.get_template(decision.best_match->first);
    }
    if (tpl) {
      try {
        GenerationResult r =
            iterative_generate(query, &*tpl, backend, store, env,
                               cfg.max_iters, seed, cfg.theta_a);
        report.ledger += r.ledger;
        report.trail.push_back({decision, Outcome::Success});
        report.final_trajectory = std::move(r.trajectory);
        report.succeeded = true;
        return finish();
      } catch (const ExhaustedIterationsError& e) {
        report.ledger += e.ledger();
        report.trail.push_back({decision, Outcome::Failure});
      } catch (const Error&) {
        report.trail.push_back({decision, Outcome::Failure});
      }
    }
    auto degraded = decision.degraded_from;
    degraded.push_back(Route::B_Rewrite);
    decision = RouteDecision{Route::C_Initialize, decision.best_match,
                             std::move(degraded)};
  }

  try {
    GenerationResult r = iterative_generate(query, nullptr, backend, store,
                                            env, cfg.max_iters, seed,
                                            cfg.theta_a);
    report.ledger += r.ledger;
    report.trail.push_back({decision, Outcome::Success});
    report.final_trajectory = std::move(r.trajectory);
    report.succeeded = true;
  } catch (const ExhaustedIterationsError& e) {
    report.ledger += e.ledger();
    report.trail.push_back({decision, Outcome::Failure});
    report.final_trajectory = e.trajectory();
  } catch (const Error&) {
    report.trail.push_back({decision, Outcome::Failure});
  }
  return finish();
}

void record_feedback(const ExecutionReport& report, Verdict verdict,
                     ExperienceStore& store) {
  const std::string& id = report.final_trajectory.trajectory_id;
  if (id.empty() || !store.get_trajectory(id)) {
    throw Error(Errc::UnknownTrajectory,
                "report's final trajectory is not stored: " + id);
  }
  if (verdict == Verdict::UserOk) {
    store.bump_usage(id);
    return;
  }
  store.set_outcome(id, Outcome::Failure);
  store.add_tag(id, kRejectedTag);
}

void to_json(nlohmann::json& j, const RoutingConfig& cfg) {
  j = nlohmann::json::object();
  j["max_iters"] = cfg.max_iters;
  j["theta_a"] = cfg.theta_a;
  j["theta_b"] = cfg.theta_b;
}

void from_json(const nlohmann::json& j, RoutingConfig& cfg) {
  cfg = RoutingConfig{};
  if (j.contains("max_iters")) cfg.max_iters = j.at("max_iters").get<int>();
  if (j.contains("theta_a")) cfg.theta_a = j.at("theta_a").get<double>();
  if (j.contains("theta_b")) cfg.theta_b = j.at("theta_b").get<double>();
}

void to_json(nlohmann::json& j, const RouteDecision& d) {
  j = nlohmann::json::object();
  if (d.best_match) {
    j["best_match"] = {{"id", d.best_match->first},
                       {"score", d.best_match->second}};
  }
  j["degraded_from"] = nlohmann::json::array();
  for (Route r : d.degraded_from) j["degraded_from"].push_back(to_string(r));
  j["route"] = to_string(d.route);
}

void to_json(nlohmann::json& j, const ExecutionReport& r) {
  j = nlohmann::json::object();
  j["final_trajectory"] = r.final_trajectory;
  j["ledger"] = r.ledger;
  j["succeeded"] = r.succeeded;
  j["trail"] = nlohmann::json::array();
  for (const auto& [decision, outcome] : r.trail) {
    j["trail"].push_back(
        {{"decision", decision}, {"outcome", to_string(outcome)}});
  }
  j["wall_steps"] = r.wall_steps;
}

}  // namespace wg
