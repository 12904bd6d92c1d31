// Command-line front end: store management, benchmark runs, report
// comparison, and one-off routing/replay inspection.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "workflowgen/embedding.hpp"
#include "workflowgen/extraction.hpp"
#include "workflowgen/harness.hpp"

namespace {

struct CliConfig {
  wg::EmbeddingConfig embedding;
  wg::RoutingConfig routing;
  std::string backend_kind = "deterministic_mock";
  std::string backend_endpoint;
  std::string registry_path;  // empty: the built-in benchmark registry
};

CliConfig load_config(const std::string& path) {
  CliConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw wg::Error(wg::Errc::ConfigError, "cannot open config: " + path);
  }
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.contains("embedding")) j.at("embedding").get_to(cfg.embedding);
  if (j.contains("routing")) {
    const nlohmann::json& r = j.at("routing");
    if (r.contains("preset")) {
      cfg.routing = wg::routing_preset(r.at("preset").get<std::string>());
      if (r.contains("max_iters")) r.at("max_iters").get_to(cfg.routing.max_iters);
    } else {
      r.get_to(cfg.routing);
    }
  }
  if (j.contains("backend")) {
    const nlohmann::json& b = j.at("backend");
    if (b.contains("kind")) b.at("kind").get_to(cfg.backend_kind);
    if (b.contains("endpoint")) b.at("endpoint").get_to(cfg.backend_endpoint);
  }
  if (j.contains("registry")) j.at("registry").get_to(cfg.registry_path);
  return cfg;
}

wg::ToolRegistry resolve_registry(const CliConfig& cfg) {
  if (cfg.registry_path.empty()) return wg::benchmark_registry();
  return wg::load_registry(cfg.registry_path);
}

std::unique_ptr<wg::GeneratorBackend> resolve_backend(
    const CliConfig& cfg, const std::vector<wg::Query>& workload) {
  if (cfg.backend_kind == "deterministic_mock") {
    auto mock = std::make_unique<wg::DeterministicMockBackend>();
    // The mock knows nothing by itself; give it the catalog plan for every
    // workload text so runs are self-contained.
    wg::seed_plan_rules(*mock, workload);
    return mock;
  }
  if (cfg.backend_kind == "remote_http") {
    if (cfg.backend_endpoint.empty()) {
      throw wg::Error(wg::Errc::ConfigError,
                      "remote_http backend needs an endpoint");
    }
    return std::make_unique<wg::RemoteHTTPBackend>(cfg.backend_endpoint);
  }
  throw wg::Error(wg::Errc::ConfigError,
                  "unknown backend kind: " + cfg.backend_kind);
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw wg::Error(wg::Errc::ConfigError, "cannot open: " + path);
  }
  return nlohmann::json::parse(in);
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& body) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw wg::Error(wg::Errc::StorageFailure, "cannot write " + path.string());
  }
  out << body;
}

int cmd_init(const CliConfig& cfg, const std::string& store_dir) {
  wg::ExperienceStore store(store_dir, cfg.embedding);
  nlohmann::json out = {
      {"dimension", store.embedding_config().dimension},
      {"experiences", store.experience_count()},
      {"store", store.path().string()},
      {"templates", store.template_count()},
      {"trajectories", store.trajectory_count()},
  };
  std::cout << wg::dump_canonical(out) << "\n";
  return 0;
}

int cmd_run(const CliConfig& cfg, const std::string& workload_path,
            const std::string& strategy_name, const std::string& store_dir,
            std::uint64_t seed, const std::string& out_path) {
  wg::Strategy strategy = wg::strategy_from_string(strategy_name);
  wg::WorkloadConfig wcfg = read_json_file(workload_path).get<wg::WorkloadConfig>();
  std::vector<wg::Query> workload = wg::generate_workload(wcfg);

  wg::ToolRegistry env = resolve_registry(cfg);
  auto backend = resolve_backend(cfg, workload);
  wg::ExperienceStore store(store_dir, cfg.embedding);
  if (store.trajectory_count() > 0 || store.experience_count() > 0) {
    throw wg::Error(wg::Errc::Precondition,
                    "run needs a fresh store, " + store_dir +
                        " already holds data");
  }
  wg::RoutingConfig routing = wg::apply_env_overrides(cfg.routing);

  wg::StrategyRun run = wg::run_strategy_detailed(
      strategy, workload, env, *backend, store, wcfg.faults, routing, seed);

  std::string report = wg::dump_canonical(nlohmann::json(run)) + "\n";
  if (!out_path.empty()) write_text_file(out_path, report);
  std::cout << wg::dump_canonical(nlohmann::json(run.metrics)) << "\n";
  return 0;
}

int cmd_compare(const std::vector<std::string>& report_paths,
                const std::string& out_path) {
  std::vector<wg::StrategyMetrics> metrics;
  for (const auto& path : report_paths) {
    nlohmann::json j = read_json_file(path);
    // Accept a bare metrics object or a full run report.
    const nlohmann::json& m = j.contains("metrics") ? j.at("metrics") : j;
    metrics.push_back(m.get<wg::StrategyMetrics>());
  }
  wg::CompareVerdict verdict = wg::compare_and_report(metrics, out_path);
  std::ifstream table(out_path + ".txt", std::ios::binary);
  std::cout << table.rdbuf();
  return verdict.overall_ok ? 0 : 1;
}

int cmd_route(const CliConfig& cfg, const std::string& query_text,
              const std::string& store_dir) {
  wg::ExperienceStore store(store_dir);
  wg::RoutingConfig routing = wg::apply_env_overrides(cfg.routing);
  wg::Query query{query_text, "q-cli", std::nullopt};
  wg::RouteDecision decision = wg::route(query, store, routing);
  std::cout << wg::dump_canonical(nlohmann::json(decision)) << "\n";
  return 0;
}

int cmd_replay(const CliConfig& cfg, const std::string& trajectory_id,
               const std::string& store_dir, std::uint64_t seed) {
  wg::ExperienceStore store(store_dir);
  auto trajectory = store.get_trajectory(trajectory_id);
  if (!trajectory) {
    throw wg::Error(wg::Errc::UnknownTrajectory, trajectory_id);
  }
  wg::ToolRegistry env = resolve_registry(cfg);
  wg::ExecutionLog log = wg::execute_trajectory(*trajectory, env, seed);
  nlohmann::json out = {
      {"log", log},
      {"outcome", wg::to_string(log.outcome)},
      {"trajectory_id", trajectory_id},
  };
  std::cout << wg::dump_canonical(out) << "\n";
  return log.outcome == wg::Outcome::Success ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"experience-driven workflow engine"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "JSON config file")
      ->envname("WG_CONFIG");

  auto* init = app.add_subcommand("init", "create or open a store directory");
  std::string init_store;
  init->add_option("store", init_store, "store directory")
      ->envname("WG_STORE")
      ->required();

  auto* run = app.add_subcommand("run", "run one strategy over a workload");
  std::string run_workload, run_strategy, run_store, run_out;
  std::uint64_t run_seed = 0;
  run->add_option("--workload", run_workload, "workload config JSON")
      ->envname("WG_WORKLOAD")
      ->required();
  run->add_option("--strategy", run_strategy,
                  "workflow_gen | real_time_planning | "
                  "static_single_trajectory | basic_icl")
      ->envname("WG_STRATEGY")
      ->required();
  run->add_option("--store", run_store, "fresh store directory")
      ->envname("WG_STORE")
      ->required();
  run->add_option("--seed", run_seed, "execution seed")->envname("WG_SEED");
  run->add_option("--out", run_out, "write the full run report here")
      ->envname("WG_OUT");

  auto* compare = app.add_subcommand("compare", "compare strategy reports");
  std::vector<std::string> compare_reports;
  std::string compare_out;
  compare->add_option("reports", compare_reports, "run report files")
      ->required()
      ->expected(-2);
  compare->add_option("--out", compare_out, "comparison report path")
      ->envname("WG_OUT")
      ->required();

  auto* route = app.add_subcommand("route", "print the routing decision");
  std::string route_query, route_store;
  route->add_option("--query", route_query, "query text")
      ->envname("WG_QUERY")
      ->required();
  route->add_option("--store", route_store, "store directory")
      ->envname("WG_STORE")
      ->required();

  auto* replay = app.add_subcommand("replay", "re-execute a stored trajectory");
  std::string replay_id, replay_store;
  std::uint64_t replay_seed = 0;
  replay->add_option("--trajectory-id", replay_id, "stored trajectory id")
      ->envname("WG_TRAJECTORY_ID")
      ->required();
  replay->add_option("--store", replay_store, "store directory")
      ->envname("WG_STORE")
      ->required();
  replay->add_option("--seed", replay_seed, "execution seed")
      ->envname("WG_SEED");

  CLI11_PARSE(app, argc, argv);

  try {
    CliConfig cfg = load_config(config_path);
    if (init->parsed()) return cmd_init(cfg, init_store);
    if (run->parsed()) {
      return cmd_run(cfg, run_workload, run_strategy, run_store, run_seed,
                     run_out);
    }
    if (compare->parsed()) return cmd_compare(compare_reports, compare_out);
    if (route->parsed()) return cmd_route(cfg, route_query, route_store);
    if (replay->parsed()) {
      return cmd_replay(cfg, replay_id, replay_store, replay_seed);
    }
  } catch (const wg::Error& e) {
    std::cerr << "wg: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "wg: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
