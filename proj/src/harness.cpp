#include "workflowgen/harness.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "workflowgen/embedding.hpp"
#include "workflowgen/extraction.hpp"

namespace wg {

namespace {

// Disjoint from every family token so novel queries score below theta_b by
// construction; the post-hoc check still guards against hash collisions.
constexpr std::array<const char*, 20> kNovelVocab = {
    "draft",    "quarterly", "memo",    "garden", "budget",
    "review",   "polish",    "brass",   "fixtures", "kitchen",
    "steam",    "valve",     "winter",  "archive",  "photos",
    "music",    "library",   "shelf",   "candle",   "orchard",
};

constexpr int kCalibrationRetries = 100;

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

std::int64_t total_calls(const ToolRegistry& env) {
  std::int64_t total = 0;
  for (const auto& id : env.tool_ids()) total += env.call_count(id);
  return total;
}

std::int64_t token_total(const TokenLedger& ledger) {
  return ledger.prompt_tokens + ledger.completion_tokens;
}

ToolSpec simple_tool(const std::string& tool_id,
                     const std::vector<std::string>& required) {
  ToolSpec spec;
  spec.tool_id = tool_id;
  spec.param_schema.required_fields = required;
  return spec;
}

}  // namespace

const std::vector<FamilySpec>& family_catalog() {
  static const std::vector<FamilySpec> catalog = [] {
    std::vector<FamilySpec> out;
    out.push_back({"fetch_report",
                   "fetch sales report for eu region",
                   4,
                   "n0",
                   "region",
                   {"zz", "de"},
                   {{"n0", "fetch_report", {{"region", "eu"}, {"scope", "sales"}}, {}},
                    {"n1", "export_csv", {{"mode", "plain"}}, {"n0"}}}});
    out.push_back({"send_notice",
                   "send launch notice to mail channel",
                   4,
                   "n0",
                   "channel",
                   {"pager", "chat"},
                   {{"n0", "send_notice", {{"body", "launch"}, {"channel", "mail"}}, {}}}});
    out.push_back({"lookup_entity",
                   "lookup vendor entity from main source",
                   4,
                   "n0",
                   "source",
                   {"legacy", "backup"},
                   {{"n0", "lookup_entity", {{"name", "vendor"}, {"source", "main"}}, {}},
                    {"n1", "filter_rows", {{"column", "status"}}, {"n0"}},
                    {"n2", "export_csv", {{"mode", "plain"}}, {"n1"}}}});
    out.push_back({"export_csv",
                   "export weekly table in plain mode",
                   4,
                   "n1",
                   "mode",
                   {"batch", "tidy"},
                   {{"n0", "aggregate_sum", {{"column", "total"}}, {}},
                    {"n1", "export_csv", {{"mode", "plain"}}, {"n0"}}}});
    out.push_back({"search_catalog",
                   "search catalog for lamp items today",
                   3,
                   "n0",
                   "item",
                   {"desk", "chair"},
                   {{"n0", "search_catalog", {{"item", "lamp"}}, {}}}});
    out.push_back({"filter_rows",
                   "filter rows by score column today",
                   3,
                   "n0",
                   "column",
                   {"price", "weight"},
                   {{"n0", "filter_rows", {{"column", "score"}}, {}},
                    {"n1", "aggregate_sum", {{"column", "score"}}, {"n0"}}}});
    out.push_back({"aggregate_sum",
                   "aggregate sum of april numbers monthly",
                   3,
                   "n0",
                   "column",
                   {"june", "march"},
                   {{"n0", "aggregate_sum", {{"column", "april"}}, {}},
                    {"n1", "transform_units", {{"unit", "plain"}}, {"n0"}}}});
    out.push_back({"transform_units",
                   "transform units from mm to inches",
                   3,
                   "n0",
                   "unit",
                   {"cm", "km"},
                   {{"n0", "transform_units", {{"unit", "mm"}}, {}}}});
    return out;
  }();
  return catalog;
}

ToolRegistry benchmark_registry() {
  ToolRegistry env;
  env.register_tool(simple_tool("search_catalog", {"item"}));
  ToolSpec fetch = simple_tool("fetch_report", {"region", "scope"});
  fetch.param_schema.format_constraints["region"] = "aa";
  env.register_tool(fetch);
  env.register_tool(simple_tool("filter_rows", {"column"}));
  env.register_tool(simple_tool("aggregate_sum", {"column"}));
  env.register_tool(simple_tool("export_csv", {"mode"}));
  env.register_tool(simple_tool("send_notice", {"channel", "body"}));
  env.register_tool(simple_tool("lookup_entity", {"name", "source"}));
  env.register_tool(simple_tool("transform_units", {"unit"}));
  return env;
}

std::vector<FaultPlan> default_faults() {
  using K = FaultTrigger::Kind;
  return {
      {"fetch_report",
       default_fault(RootCause::WrongParameter,
                     FaultTrigger{K::FieldEquals, "region", "zz", 0}),
       0},
      {"send_notice",
       default_fault(RootCause::InsufficientPermission,
                     FaultTrigger{K::FieldEquals, "channel", "pager", 0}),
       0},
      {"lookup_entity",
       default_fault(RootCause::ToolMismatch,
                     FaultTrigger{K::FieldEquals, "source", "legacy", 0}),
       0},
      {"export_csv",
       default_fault(RootCause::MissingLogic,
                     FaultTrigger{K::FieldEquals, "mode", "batch", 0}),
       0},
  };
}

void validate(const WorkloadConfig& cfg) {
  const TierMix& mix = cfg.tier_mix;
  if (mix.high < 0.0 || mix.medium < 0.0 || mix.novel < 0.0 ||
      std::abs(mix.high + mix.medium + mix.novel - 1.0) > 1e-9) {
    throw Error(Errc::ConfigError,
                "tier mix must be non-negative and sum to 1");
  }
  auto families = static_cast<std::int64_t>(family_catalog().size());
  if (cfg.n_families < 1 || cfg.n_families > families) {
    throw Error(Errc::ConfigError,
                "n_families must be between 1 and " + std::to_string(families));
  }
  if (cfg.n_queries < cfg.n_families) {
    throw Error(Errc::ConfigError, "n_queries must cover every family");
  }
  for (const auto& f : cfg.faults) {
    if (f.activation_step < 0) {
      throw Error(Errc::ConfigError, "fault activation steps are 0-based");
    }
  }
}

std::vector<Query> generate_workload(const WorkloadConfig& cfg) {
  validate(cfg);
  const auto& catalog = family_catalog();
  const auto n_fam = static_cast<std::size_t>(cfg.n_families);
  const RoutingConfig bands;  // tier bands use the default thresholds
  const EmbeddingConfig ecfg;

  // Largest-remainder split of n_queries over the three tiers.
  std::array<std::pair<Tier, double>, 3> mix = {{
      {Tier::High, cfg.tier_mix.high},
      {Tier::Medium, cfg.tier_mix.medium},
      {Tier::Novel, cfg.tier_mix.novel},
  }};
  std::array<std::int64_t, 3> counts{};
  std::array<double, 3> remainders{};
  std::int64_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    double exact = static_cast<double>(cfg.n_queries) * mix[i].second;
    counts[i] = static_cast<std::int64_t>(std::floor(exact));
    remainders[i] = exact - std::floor(exact);
    assigned += counts[i];
  }
  std::array<std::size_t, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return remainders[a] > remainders[b];
  });
  for (std::size_t i = 0; assigned < cfg.n_queries; ++i) {
    counts[order[i % 3]] += 1;
    ++assigned;
  }

  std::vector<EmbeddingVector> base_vecs;
  for (std::size_t f = 0; f < n_fam; ++f) {
    base_vecs.push_back(embed(catalog[f].base_text, ecfg));
  }

  std::vector<Query> out;
  auto push = [&](std::string text, Tier tier) {
    Query q;
    q.text = std::move(text);
    q.tier_hint = tier;
    out.push_back(std::move(q));
  };

  for (std::int64_t k = 0; k < counts[0]; ++k) {
    push(catalog[k % n_fam].base_text, Tier::High);
  }

  // Medium: cycle each family's swap pool; verify the band against the base
  // and fall back to synthesized entities if hashing misbehaves.
  std::vector<std::size_t> cycle(n_fam, 0);
  for (std::int64_t k = 0; k < counts[1]; ++k) {
    std::size_t fam = k % n_fam;
    const FamilySpec& spec = catalog[fam];
    bool accepted = false;
    for (int attempt = 0; attempt < kCalibrationRetries; ++attempt) {
      std::string entity;
      if (static_cast<std::size_t>(attempt) < spec.swaps.size()) {
        entity = spec.swaps[(cycle[fam] + attempt) % spec.swaps.size()];
      } else {
        entity = "alt" + std::to_string(attempt);
      }
      auto tokens = tokenize(spec.base_text);
      tokens[spec.entity_slot] = entity;
      std::string text = join_tokens(tokens);
      double s = cosine_similarity(embed(text, ecfg), base_vecs[fam]);
      if (s > bands.theta_b && s <= bands.theta_a) {
        push(std::move(text), Tier::Medium);
        cycle[fam] += 1;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      throw Error(Errc::CalibrationFailure,
                  "no medium-band entity for family " + spec.name);
    }
  }

  std::mt19937_64 eng(cfg.seed);
  std::vector<std::string> novel_texts;
  std::vector<EmbeddingVector> novel_vecs;
  for (std::int64_t k = 0; k < counts[2]; ++k) {
    bool accepted = false;
    for (int attempt = 0; attempt < kCalibrationRetries; ++attempt) {
      std::vector<std::string> picked;
      while (picked.size() < 6) {
        const char* tok = kNovelVocab[eng() % kNovelVocab.size()];
        if (std::find(picked.begin(), picked.end(), tok) == picked.end()) {
          picked.emplace_back(tok);
        }
      }
      std::string text = join_tokens(picked);
      EmbeddingVector v = embed(text, ecfg);
      bool ok = std::find(novel_texts.begin(), novel_texts.end(), text) ==
                novel_texts.end();
      for (const auto& b : base_vecs) {
        ok = ok && cosine_similarity(v, b) < bands.theta_b;
      }
      for (const auto& n : novel_vecs) {
        ok = ok && cosine_similarity(v, n) < bands.theta_b;
      }
      if (ok) {
        novel_texts.push_back(text);
        novel_vecs.push_back(std::move(v));
        push(std::move(text), Tier::Novel);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      throw Error(Errc::CalibrationFailure,
                  "no sufficiently distant novel query");
    }
  }

  for (std::size_t i = out.size(); i > 1; --i) {
    std::size_t j = eng() % i;
    std::swap(out[i - 1], out[j]);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::string num = std::to_string(i + 1);
    while (num.size() < 4) num.insert(num.begin(), '0');
    out[i].id = "q-" + num;
  }
  return out;
}

void seed_plan_rules(DeterministicMockBackend& backend,
                     const std::vector<Query>& workload) {
  const auto& catalog = family_catalog();
  // Safe single calls for texts outside every family.
  static constexpr struct {
    const char* tool;
    const char* param;
    const char* value;
  } kCleanCalls[] = {
      {"search_catalog", "item", "desk"},
      {"filter_rows", "column", "price"},
      {"aggregate_sum", "column", "total"},
      {"transform_units", "unit", "cm"},
  };

  std::vector<std::string> seen;
  for (const Query& q : workload) {
    if (std::find(seen.begin(), seen.end(), q.text) != seen.end()) continue;
    seen.push_back(q.text);

    auto tokens = tokenize(q.text);
    const FamilySpec* fam = nullptr;
    std::string entity;
    for (const FamilySpec& spec : catalog) {
      auto base = tokenize(spec.base_text);
      if (tokens.size() != base.size()) continue;
      bool match = true;
      for (std::size_t i = 0; i < base.size(); ++i) {
        if (i != spec.entity_slot && tokens[i] != base[i]) {
          match = false;
          break;
        }
      }
      if (match) {
        fam = &spec;
        entity = tokens[spec.entity_slot];
        break;
      }
    }

    nlohmann::json plan = nlohmann::json::array();
    if (fam != nullptr) {
      for (const PlanRow& row : fam->plan) {
        nlohmann::json node = nlohmann::json::object();
        if (!row.depends_on.empty()) node["depends_on"] = row.depends_on;
        node["node_id"] = row.node_id;
        nlohmann::json params = nlohmann::json::object();
        for (const auto& [k, v] : row.params) params[k] = v;
        if (row.node_id == fam->entity_node) params[fam->entity_param] = entity;
        node["params"] = params;
        node["tool_id"] = row.tool_id;
        plan.push_back(node);
      }
    } else {
      const auto& call = kCleanCalls[fnv1a64(q.text) % 4];
      nlohmann::json node = nlohmann::json::object();
      node["node_id"] = "n0";
      node["params"] = {{call.param, call.value}};
      node["tool_id"] = call.tool;
      plan.push_back(node);
    }
    // Indented payload: completion counts then scale with plan size, the way
    // a model's emission would.
    backend.set_rule(GeneratorPurpose::FullPlan, q.text, plan.dump(1));
  }
}

const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::WorkflowGen: return "workflow_gen";
    case Strategy::RealTimePlanning: return "real_time_planning";
    case Strategy::StaticSingleTrajectory: return "static_single_trajectory";
    case Strategy::BasicICL: return "basic_icl";
  }
  return "unknown";
}

Strategy strategy_from_string(std::string_view s) {
  for (Strategy v : {Strategy::WorkflowGen, Strategy::RealTimePlanning,
                     Strategy::StaticSingleTrajectory, Strategy::BasicICL}) {
    if (s == to_string(v)) return v;
  }
  throw Error(Errc::ConfigError, "unknown strategy: " + std::string(s));
}

namespace {

struct QueryResult {
  bool succeeded = false;
  TokenLedger ledger;
  std::optional<Route> final_route;
};

QueryResult run_workflow_gen_query(const Query& q, ExperienceStore& store,
                                   GeneratorBackend& backend,
                                   ToolRegistry& env,
                                   const RoutingConfig& routing,
                                   std::uint64_t seed) {
  ExecutionReport report =
      execute_with_fallback(q, store, backend, env, routing, seed);
  QueryResult r;
  r.succeeded = report.succeeded;
  r.ledger = report.ledger;
  r.final_route = report.trail.back().first.route;
  return r;
}

QueryResult run_real_time_query(const Query& q, GeneratorBackend& backend,
                                ToolRegistry& env,
                                const RoutingConfig& routing,
                                std::uint64_t seed) {
  QueryResult r;
  for (int iter = 1; iter <= routing.max_iters; ++iter) {
    try {
      auto [t, ledger] = plan_from_scratch(q, backend, env);
      r.ledger += ledger;
      ExecutionLog log = execute_trajectory(t, env, seed);
      if (log.outcome == Outcome::Success) {
        r.succeeded = true;
        break;
      }
    } catch (const Error&) {
      // A malformed plan burns the attempt; the next iteration replans.
    }
  }
  return r;
}

QueryResult run_static_query(const Query& q, ExperienceStore& store,
                             GeneratorBackend& backend, ToolRegistry& env,
                             const RoutingConfig& routing,
                             std::uint64_t seed) {
  QueryResult r;
  EmbeddingVector qv = embed(q.text, store.embedding_config());
  double s = 0.0;
  std::string best;
  if (store.trajectory_count() > 0) {
    auto hits = store.find_nearest(qv, 1);
    best = hits.front().first;
    s = hits.front().second;
  }
  if (s > routing.theta_a) {
    // Verbatim reuse of the frozen trajectory; a failure here is final.
    Trajectory frozen = *store.get_trajectory(best);
    ExecutionLog log = execute_trajectory(frozen, env, seed);
    r.succeeded = log.outcome == Outcome::Success;
    return r;
  }
  for (int iter = 1; iter <= routing.max_iters; ++iter) {
    try {
      auto [t, ledger] = plan_from_scratch(q, backend, env);
      r.ledger += ledger;
      ExecutionLog log = execute_trajectory(t, env, seed);
      if (log.outcome != Outcome::Success) continue;
      r.succeeded = true;
      if (s <= routing.theta_b) {
        // First success of an unseen intent becomes that intent's frozen
        // trajectory; later successes never replace it.
        t.trigger_embedding = qv;
        t.metadata.outcome = Outcome::Success;
        t.metadata.executed_at = log.executed_at;
        store.put_trajectory(t);
      }
      break;
    } catch (const Error&) {
    }
  }
  return r;
}

QueryResult run_basic_icl_query(const Query& q, ExperienceStore& store,
                                GeneratorBackend& backend, ToolRegistry& env,
                                const RoutingConfig& routing,
                                std::uint64_t seed) {
  QueryResult r;
  // Success-polarity injection only; failures are never extracted, so a
  // repeated fault replans identically.
  std::vector<PromptSection> extras;
  if (auto section =
          success_paradigms_section(store.lookup_experiences(intent_key(q)))) {
    extras.push_back(std::move(*section));
  }
  for (int iter = 1; iter <= routing.max_iters; ++iter) {
    try {
      auto [t, ledger] = plan_from_scratch(q, backend, env, extras);
      r.ledger += ledger;
      ExecutionLog log = execute_trajectory(t, env, seed);
      if (log.outcome != Outcome::Success) continue;
      r.succeeded = true;
      t.metadata.outcome = Outcome::Success;
      t.metadata.executed_at = log.executed_at;
      for (const auto& e : extract_node_experiences(&t, nullptr, {log})) {
        store.put_experience(e);
      }
      break;
    } catch (const Error&) {
    }
  }
  return r;
}

}  // namespace

StrategyRun run_strategy_detailed(Strategy strategy,
                                  const std::vector<Query>& workload,
                                  const ToolRegistry& env,
                                  GeneratorBackend& backend,
                                  ExperienceStore& store,
                                  const std::vector<FaultPlan>& faults,
                                  const RoutingConfig& routing,
                                  std::uint64_t seed) {
  if (workload.empty()) {
    throw Error(Errc::Precondition, "workload must be non-empty");
  }
  validate(routing);

  ToolRegistry run_env = env;  // private copy: counts and faults stay local
  StrategyRun run;
  run.metrics.strategy = strategy;
  if (strategy == Strategy::WorkflowGen) run.metrics.route_histogram.emplace();

  std::int64_t succeeded = 0;
  std::int64_t medium_total = 0;
  std::int64_t medium_succeeded = 0;
  std::int64_t wall_total = 0;

  for (std::size_t i = 0; i < workload.size(); ++i) {
    for (const FaultPlan& f : faults) {
      if (std::max<std::int64_t>(f.activation_step, 0) ==
          static_cast<std::int64_t>(i)) {
        run_env.inject_fault(f.tool_id, f.profile);
      }
    }

    const Query& q = workload[i];
    std::int64_t before = total_calls(run_env);
    QueryResult qr;
    switch (strategy) {
      case Strategy::WorkflowGen:
        qr = run_workflow_gen_query(q, store, backend, run_env, routing, seed);
        break;
      case Strategy::RealTimePlanning:
        qr = run_real_time_query(q, backend, run_env, routing, seed);
        break;
      case Strategy::StaticSingleTrajectory:
        qr = run_static_query(q, store, backend, run_env, routing, seed);
        break;
      case Strategy::BasicICL:
        qr = run_basic_icl_query(q, store, backend, run_env, routing, seed);
        break;
    }

    QueryRow row;
    row.query_id = q.id;
    row.tier = q.tier_hint;
    row.final_route = qr.final_route;
    row.succeeded = qr.succeeded;
    row.ledger = qr.ledger;
    row.wall_steps = total_calls(run_env) - before;

    wall_total += row.wall_steps;
    run.metrics.total_ledger += qr.ledger;
    if (qr.succeeded) ++succeeded;
    if (q.tier_hint == Tier::Medium) {
      ++medium_total;
      if (qr.succeeded) ++medium_succeeded;
    }
    if (run.metrics.route_histogram && qr.final_route) {
      (*run.metrics.route_histogram)[*qr.final_route] += 1;
    }
    run.rows.push_back(std::move(row));
  }

  auto n = static_cast<double>(workload.size());
  run.metrics.success_rate = static_cast<double>(succeeded) / n;
  run.metrics.success_rate_medium_tier =
      medium_total == 0
          ? 1.0
          : static_cast<double>(medium_succeeded) /
                static_cast<double>(medium_total);
  run.metrics.mean_wall_steps = static_cast<double>(wall_total) / n;
  return run;
}

StrategyMetrics run_strategy(Strategy strategy,
                             const std::vector<Query>& workload,
                             const ToolRegistry& env,
                             GeneratorBackend& backend,
                             ExperienceStore& store,
                             const std::vector<FaultPlan>& faults,
                             const RoutingConfig& routing,
                             std::uint64_t seed) {
  return run_strategy_detailed(strategy, workload, env, backend, store, faults,
                               routing, seed)
      .metrics;
}

namespace {

const StrategyMetrics* find_strategy(const std::vector<StrategyMetrics>& ms,
                                     Strategy s) {
  for (const auto& m : ms) {
    if (m.strategy == s) return &m;
  }
  return nullptr;
}

std::string format_line(const char* fmt, ...) {
  char buf[200];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof buf, fmt, args);
  va_end(args);
  return buf;
}

}  // namespace

CompareVerdict compare_and_report(const std::vector<StrategyMetrics>& metrics,
                                  const std::filesystem::path& out_path) {
  const StrategyMetrics* wgm = find_strategy(metrics, Strategy::WorkflowGen);
  const StrategyMetrics* rtp =
      find_strategy(metrics, Strategy::RealTimePlanning);
  if (wgm == nullptr || rtp == nullptr) {
    throw Error(Errc::MissingBaseline,
                "comparison requires workflow_gen and real_time_planning");
  }
  const StrategyMetrics* stat =
      find_strategy(metrics, Strategy::StaticSingleTrajectory);
  const StrategyMetrics* icl = find_strategy(metrics, Strategy::BasicICL);

  auto reduction_vs = [&](const StrategyMetrics& base) {
    std::int64_t b = token_total(base.total_ledger);
    if (b == 0) return 0.0;
    return 1.0 -
           static_cast<double>(token_total(wgm->total_ledger)) /
               static_cast<double>(b);
  };

  CompareVerdict verdict;
  verdict.reduction_vs_real_time = reduction_vs(*rtp);
  verdict.token_reduction_real_time_ok =
      verdict.reduction_vs_real_time >= kMinReductionVsRealTime;
  if (stat != nullptr) {
    verdict.reduction_vs_static = reduction_vs(*stat);
    verdict.token_reduction_static_ok =
        *verdict.reduction_vs_static >= kMinReductionVsStatic;
  }
  if (icl != nullptr) {
    verdict.medium_gain_vs_basic_icl =
        wgm->success_rate_medium_tier - icl->success_rate_medium_tier;
    verdict.medium_gain_ok = *verdict.medium_gain_vs_basic_icl >= kMinMediumGain;
  }
  verdict.overall_ok = verdict.token_reduction_real_time_ok &&
                       (stat == nullptr || verdict.token_reduction_static_ok) &&
                       (icl == nullptr || verdict.medium_gain_ok);

  nlohmann::json report = nlohmann::json::object();
  nlohmann::json acceptance = nlohmann::json::object();
  acceptance["overall"] = verdict.overall_ok;
  acceptance["token_reduction_vs_real_time_planning"] =
      verdict.token_reduction_real_time_ok;
  if (stat != nullptr) {
    acceptance["token_reduction_vs_static_single_trajectory"] =
        verdict.token_reduction_static_ok;
  }
  if (icl != nullptr) {
    acceptance["medium_gain_vs_basic_icl"] = verdict.medium_gain_ok;
  }
  report["acceptance"] = acceptance;

  nlohmann::json reductions = nlohmann::json::object();
  reductions["vs_real_time_planning"] = verdict.reduction_vs_real_time;
  if (stat != nullptr) {
    reductions["vs_static_single_trajectory"] = *verdict.reduction_vs_static;
  }
  if (icl != nullptr) reductions["vs_basic_icl"] = reduction_vs(*icl);
  report["reductions"] = reductions;

  nlohmann::json deltas = nlohmann::json::object();
  for (const StrategyMetrics* base : {rtp, stat, icl}) {
    if (base == nullptr) continue;
    deltas[std::string("vs_") + to_string(base->strategy)] = {
        {"medium_tier",
         wgm->success_rate_medium_tier - base->success_rate_medium_tier},
        {"overall", wgm->success_rate - base->success_rate},
    };
  }
  report["success_deltas"] = deltas;

  if (icl != nullptr) {
    report["medium_gain_vs_basic_icl"] = *verdict.medium_gain_vs_basic_icl;
  }
  if (wgm->route_histogram) {
    nlohmann::json histogram = nlohmann::json::object();
    for (const auto& [route, count] : *wgm->route_histogram) {
      histogram[to_string(route)] = count;
    }
    report["route_histogram"] = histogram;
  }
  report["strategies"] = metrics;
  report["thresholds"] = {
      {"medium_gain", kMinMediumGain},
      {"token_reduction_real_time", kMinReductionVsRealTime},
      {"token_reduction_static", kMinReductionVsStatic},
  };

  if (out_path.has_parent_path()) {
    std::filesystem::create_directories(out_path.parent_path());
  }
  {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) {
      throw Error(Errc::StorageFailure, "cannot write " + out_path.string());
    }
    out << dump_canonical(report) << "\n";
  }

  std::ostringstream text;
  text << format_line("%-26s %10s %12s %7s %9s %9s %11s\n", "strategy",
                      "prompt", "completion", "calls", "success", "medium",
                      "mean_steps");
  for (const auto& m : metrics) {
    text << format_line(
        "%-26s %10lld %12lld %7lld %9.3f %9.3f %11.2f\n", to_string(m.strategy),
        static_cast<long long>(m.total_ledger.prompt_tokens),
        static_cast<long long>(m.total_ledger.completion_tokens),
        static_cast<long long>(m.total_ledger.generator_calls), m.success_rate,
        m.success_rate_medium_tier, m.mean_wall_steps);
  }
  if (wgm->route_histogram) {
    text << "routes:";
    for (const auto& [route, count] : *wgm->route_histogram) {
      text << format_line(" %s=%lld", to_string(route),
                          static_cast<long long>(count));
    }
    text << "\n";
  }
  text << format_line("token reduction vs real_time_planning: %.1f%% (need "
                      "%.1f%%) %s\n",
                      verdict.reduction_vs_real_time * 100.0,
                      kMinReductionVsRealTime * 100.0,
                      verdict.token_reduction_real_time_ok ? "PASS" : "FAIL");
  if (stat != nullptr) {
    text << format_line(
        "token reduction vs static_single_trajectory: %.1f%% (need %.1f%%) "
        "%s\n",
        *verdict.reduction_vs_static * 100.0, kMinReductionVsStatic * 100.0,
        verdict.token_reduction_static_ok ? "PASS" : "FAIL");
  }
  if (icl != nullptr) {
    text << format_line(
        "medium-tier success gain vs basic_icl: %.1f points (need %.1f) %s\n",
        *verdict.medium_gain_vs_basic_icl * 100.0, kMinMediumGain * 100.0,
        verdict.medium_gain_ok ? "PASS" : "FAIL");
  }
  text << format_line("acceptance: %s\n", verdict.overall_ok ? "PASS" : "FAIL");

  std::filesystem::path text_path = out_path;
  text_path += ".txt";
  std::ofstream out_text(text_path, std::ios::binary);
  if (!out_text) {
    throw Error(Errc::StorageFailure, "cannot write " + text_path.string());
  }
  out_text << text.str();

  return verdict;
}

void to_json(nlohmann::json& j, const FaultPlan& f) {
  j = nlohmann::json::object();
  j["activation_step"] = f.activation_step;
  j["profile"] = f.profile;
  j["tool_id"] = f.tool_id;
}

void from_json(const nlohmann::json& j, FaultPlan& f) {
  f = FaultPlan{};
  j.at("tool_id").get_to(f.tool_id);
  j.at("profile").get_to(f.profile);
  if (j.contains("activation_step")) {
    j.at("activation_step").get_to(f.activation_step);
  }
}

void to_json(nlohmann::json& j, const TierMix& m) {
  j = nlohmann::json::object();
  j["high"] = m.high;
  j["medium"] = m.medium;
  j["novel"] = m.novel;
}

void from_json(const nlohmann::json& j, TierMix& m) {
  m = TierMix{};
  if (j.contains("high")) j.at("high").get_to(m.high);
  if (j.contains("medium")) j.at("medium").get_to(m.medium);
  if (j.contains("novel")) j.at("novel").get_to(m.novel);
}

void to_json(nlohmann::json& j, const WorkloadConfig& cfg) {
  j = nlohmann::json::object();
  j["faults"] = cfg.faults;
  j["n_families"] = cfg.n_families;
  j["n_queries"] = cfg.n_queries;
  j["seed"] = cfg.seed;
  j["tier_mix"] = cfg.tier_mix;
}

void from_json(const nlohmann::json& j, WorkloadConfig& cfg) {
  cfg = WorkloadConfig{};
  if (j.contains("seed")) j.at("seed").get_to(cfg.seed);
  if (j.contains("n_queries")) j.at("n_queries").get_to(cfg.n_queries);
  if (j.contains("tier_mix")) j.at("tier_mix").get_to(cfg.tier_mix);
  if (j.contains("n_families")) j.at("n_families").get_to(cfg.n_families);
  if (j.contains("faults")) j.at("faults").get_to(cfg.faults);
}

void to_json(nlohmann::json& j, const StrategyMetrics& m) {
  j = nlohmann::json::object();
  j["mean_wall_steps"] = m.mean_wall_steps;
  if (m.route_histogram) {
    nlohmann::json histogram = nlohmann::json::object();
    for (const auto& [route, count] : *m.route_histogram) {
      histogram[to_string(route)] = count;
    }
    j["route_histogram"] = histogram;
  }
  j["strategy"] = to_string(m.strategy);
  j["success_rate"] = m.success_rate;
  j["success_rate_medium_tier"] = m.success_rate_medium_tier;
  j["total_ledger"] = m.total_ledger;
}

void from_json(const nlohmann::json& j, StrategyMetrics& m) {
  m = StrategyMetrics{};
  m.strategy = strategy_from_string(j.at("strategy").get<std::string>());
  j.at("total_ledger").get_to(m.total_ledger);
  j.at("success_rate").get_to(m.success_rate);
  j.at("success_rate_medium_tier").get_to(m.success_rate_medium_tier);
  j.at("mean_wall_steps").get_to(m.mean_wall_steps);
  if (j.contains("route_histogram")) {
    m.route_histogram.emplace();
    for (const auto& [key, value] : j.at("route_histogram").items()) {
      (*m.route_histogram)[route_from_string(key)] =
          value.get<std::int64_t>();
    }
  }
}

void to_json(nlohmann::json& j, const QueryRow& r) {
  j = nlohmann::json::object();
  if (r.final_route) j["final_route"] = to_string(*r.final_route);
  j["ledger"] = r.ledger;
  j["query_id"] = r.query_id;
  j["succeeded"] = r.succeeded;
  if (r.tier) j["tier"] = to_string(*r.tier);
  j["wall_steps"] = r.wall_steps;
}

void from_json(const nlohmann::json& j, QueryRow& r) {
  r = QueryRow{};
  j.at("query_id").get_to(r.query_id);
  j.at("succeeded").get_to(r.succeeded);
  j.at("ledger").get_to(r.ledger);
  j.at("wall_steps").get_to(r.wall_steps);
  if (j.contains("tier")) {
    r.tier = tier_from_string(j.at("tier").get<std::string>());
  }
  if (j.contains("final_route")) {
    r.final_route = route_from_string(j.at("final_route").get<std::string>());
  }
}

void to_json(nlohmann::json& j, const StrategyRun& r) {
  j = nlohmann::json::object();
  j["metrics"] = r.metrics;
  j["rows"] = r.rows;
}

void from_json(const nlohmann::json& j, StrategyRun& r) {
  r = StrategyRun{};
  j.at("metrics").get_to(r.metrics);
  j.at("rows").get_to(r.rows);
}

}  // namespace wg
