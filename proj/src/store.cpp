#include "workflowgen/store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

namespace wg {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kTrajectoriesFile = "trajectories.jsonl";
constexpr const char* kExperiencesFile = "experiences.jsonl";
constexpr const char* kTemplatesFile = "templates.jsonl";
constexpr const char* kManifestFile = "manifest.json";

void atomic_write(const fs::path& target, const std::string& content) {
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << content;
    if (!out) {
      throw Error(Errc::StorageFailure, "write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    throw Error(Errc::StorageFailure,
                "rename failed: " + target.string() + ": " + ec.message());
  }
}

// Replays a JSONL file: last record per id wins, order of first appearance
// is preserved.
template <typename T, typename IdOf>
void replay_jsonl(const fs::path& file, std::map<std::string, T>& map,
                  std::vector<std::string>& order, IdOf id_of) {
  if (!fs::exists(file)) return;
  std::ifstream in(file, std::ios::binary);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    T value;
    try {
      value = json::parse(line).get<T>();
    } catch (const std::exception& e) {
      throw Error(Errc::StorageFailure, file.string() + ":" +
                                            std::to_string(line_no) + ": " +
                                            e.what());
    }
    std::string id = id_of(value);
    auto [it, inserted] = map.emplace(id, value);
    if (inserted) {
      order.push_back(id);
    } else {
      it->second = value;
    }
  }
}

struct UnionFind {
  std::vector<std::size_t> parent;

  explicit UnionFind(std::size_t n) : parent(n) {
    std::iota(parent.begin(), parent.end(), std::size_t{0});
  }

  std::size_t find(std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }

  void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

// (executed_at desc, id asc): "more recent" with a deterministic tie.
bool more_recent(const Trajectory& a, const Trajectory& b) {
  if (a.metadata.executed_at != b.metadata.executed_at) {
    return a.metadata.executed_at > b.metadata.executed_at;
  }
  return a.trajectory_id < b.trajectory_id;
}

bool has_tag(const Trajectory& t, const std::string& tag) {
  const auto& tags = t.metadata.compatibility_tags;
  return std::find(tags.begin(), tags.end(), tag) != tags.end();
}

}  // namespace

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

ExperienceStore::ExperienceStore(const fs::path& dir,
                                 std::optional<EmbeddingConfig> cfg)
    : dir_(dir) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) {
    throw Error(Errc::StorageFailure,
                "cannot create " + dir_.string() + ": " + ec.message());
  }

  fs::path manifest = dir_ / kManifestFile;
  if (fs::exists(manifest)) {
    json m;
    try {
      std::ifstream in(manifest);
      m = json::parse(in);
    } catch (const std::exception& e) {
      throw Error(Errc::StorageFailure,
                  manifest.string() + ": " + e.what());
    }
    auto dimension = m.at("embedding_dimension").get<std::size_t>();
    if (cfg && cfg->dimension != dimension) {
      throw Error(Errc::DimensionMismatch,
                  "manifest dimension " + std::to_string(dimension) +
                      ", config wants " + std::to_string(cfg->dimension));
    }
    cfg_ = cfg.value_or(EmbeddingConfig{});
    cfg_.dimension = dimension;
  } else {
    if (!cfg) {
      throw Error(Errc::ConfigError,
                  "fresh store needs an embedding config: " + dir_.string());
    }
    validate(*cfg);
    cfg_ = *cfg;
    json m;
    m["embedding_dimension"] = cfg_.dimension;
    m["schema_version"] = 1;
    atomic_write(manifest, dump_canonical(m) + "\n");
  }

  replay_jsonl<Trajectory>(dir_ / kTrajectoriesFile, trajectories_,
                           trajectory_order_,
                           [](const Trajectory& t) { return t.trajectory_id; });
  replay_jsonl<NodeExperience>(
      dir_ / kExperiencesFile, experiences_, experience_order_,
      [](const NodeExperience& e) { return e.experience_id; });
  replay_jsonl<TrajectoryTemplate>(
      dir_ / kTemplatesFile, templates_, template_order_,
      [](const TrajectoryTemplate& t) { return t.template_id; });

  for (const auto& id : experience_order_) {
    index_experience_locked(experiences_.at(id));
  }
}

// ---------------------------------------------------------------------------
// Writes
// ---------------------------------------------------------------------------

void ExperienceStore::append_record(const char* file, const json& j) const {
  std::ofstream out(dir_ / file, std::ios::binary | std::ios::app);
  out << dump_canonical(j) << '\n';
  out.flush();
  if (!out) {
    throw Error(Errc::StorageFailure,
                "append failed: " + (dir_ / file).string());
  }
}

std::string ExperienceStore::put_trajectory_locked(Trajectory t) {
  if (t.trajectory_id.empty()) {
    throw Error(Errc::Precondition, "trajectory_id must be non-empty");
  }

  auto violations = validate(t);
  if (t.trigger_embedding.dimension() != cfg_.dimension) {
    violations.push_back(Violation::EmbeddingDimensionMismatch);
  }
  if (!violations.empty()) {
    std::string names;
    for (auto v : violations) {
      if (!names.empty()) names += ", ";
      names += to_string(v);
    }
    throw InvalidTrajectoryError(std::move(violations),
                                 t.trajectory_id + ": " + names);
  }

  for (const auto& node : t.nodes) {
    for (const auto& ref : node.experience_refs) {
      if (experiences_.find(ref) == experiences_.end()) {
        throw Error(Errc::Precondition,
                    "experience_ref does not resolve: " + ref);
      }
    }
  }

  auto it = trajectories_.find(t.trajectory_id);
  t.metadata.version_id =
      it == trajectories_.end() ? 1 : it->second.metadata.version_id + 1;

  if (it == trajectories_.end()) {
    trajectory_order_.push_back(t.trajectory_id);
    it = trajectories_.emplace(t.trajectory_id, t).first;
  } else {
    it->second = t;
  }
  append_record(kTrajectoriesFile, json(t));
  return t.trajectory_id;
}

std::string ExperienceStore::put_trajectory(Trajectory t) {
  std::unique_lock lock(mutex_);
  return put_trajectory_locked(std::move(t));
}

void ExperienceStore::index_experience_locked(const NodeExperience& e) {
  if (e.fingerprint) {
    by_fingerprint_[*e.fingerprint].push_back(e.experience_id);
  }
  if (!e.intent_key.empty()) {
    by_intent_[e.intent_key].push_back(e.experience_id);
  }
}

void ExperienceStore::unindex_experience_locked(const NodeExperience& e) {
  auto drop = [&](auto& index, const auto& key) {
    auto it = index.find(key);
    if (it == index.end()) return;
    auto& ids = it->second;
    ids.erase(std::remove(ids.begin(), ids.end(), e.experience_id), ids.end());
    if (ids.empty()) index.erase(it);
  };
  if (e.fingerprint) drop(by_fingerprint_, *e.fingerprint);
  if (!e.intent_key.empty()) drop(by_intent_, e.intent_key);
}

std::string ExperienceStore::put_experience(const NodeExperience& e) {
  if (e.experience_id.empty()) {
    throw Error(Errc::Precondition, "experience_id must be non-empty");
  }
  std::unique_lock lock(mutex_);
  auto it = experiences_.find(e.experience_id);
  if (it != experiences_.end()) {
    if (it->second == e) return e.experience_id;  // idempotent
    unindex_experience_locked(it->second);
    it->second = e;
  } else {
    experience_order_.push_back(e.experience_id);
    experiences_.emplace(e.experience_id, e);
  }
  index_experience_locked(e);
  append_record(kExperiencesFile, json(e));
  return e.experience_id;
}

void ExperienceStore::bump_usage(const std::string& trajectory_id) {
  std::unique_lock lock(mutex_);
  auto it = trajectories_.find(trajectory_id);
  if (it == trajectories_.end()) {
    throw Error(Errc::UnknownTrajectory, trajectory_id);
  }
  Trajectory t = it->second;
  t.metadata.usage_count += 1;
  put_trajectory_locked(std::move(t));
}

void ExperienceStore::add_tag(const std::string& trajectory_id,
                              const std::string& tag) {
  std::unique_lock lock(mutex_);
  auto it = trajectories_.find(trajectory_id);
  if (it == trajectories_.end()) {
    throw Error(Errc::UnknownTrajectory, trajectory_id);
  }
  if (has_tag(it->second, tag)) return;  // idempotent
  Trajectory t = it->second;
  t.metadata.compatibility_tags.push_back(tag);
  put_trajectory_locked(std::move(t));
}

void ExperienceStore::set_outcome(const std::string& trajectory_id,
                                  Outcome outcome) {
  std::unique_lock lock(mutex_);
  auto it = trajectories_.find(trajectory_id);
  if (it == trajectories_.end()) {
    throw Error(Errc::UnknownTrajectory, trajectory_id);
  }
  if (it->second.metadata.outcome == outcome) return;
  Trajectory t = it->second;
  t.metadata.outcome = outcome;
  put_trajectory_locked(std::move(t));
}

// ---------------------------------------------------------------------------
// Reads
// ---------------------------------------------------------------------------

std::optional<Trajectory> ExperienceStore::get_trajectory(
    const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = trajectories_.find(id);
  if (it == trajectories_.end()) return std::nullopt;
  return it->second;
}

std::optional<NodeExperience> ExperienceStore::get_experience(
    const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = experiences_.find(id);
  if (it == experiences_.end()) return std::nullopt;
  return it->second;
}

std::optional<TrajectoryTemplate> ExperienceStore::get_template(
    const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = templates_.find(id);
  if (it == templates_.end()) return std::nullopt;
  return it->second;
}

std::vector<Trajectory> ExperienceStore::trajectories() const {
  std::shared_lock lock(mutex_);
  std::vector<Trajectory> out;
  out.reserve(trajectory_order_.size());
  for (const auto& id : trajectory_order_) out.push_back(trajectories_.at(id));
  return out;
}

std::vector<NodeExperience> ExperienceStore::experiences() const {
  std::shared_lock lock(mutex_);
  std::vector<NodeExperience> out;
  out.reserve(experience_order_.size());
  for (const auto& id : experience_order_) out.push_back(experiences_.at(id));
  return out;
}

std::vector<TrajectoryTemplate> ExperienceStore::templates() const {
  std::shared_lock lock(mutex_);
  std::vector<TrajectoryTemplate> out;
  out.reserve(template_order_.size());
  for (const auto& id : template_order_) out.push_back(templates_.at(id));
  return out;
}

std::size_t ExperienceStore::trajectory_count() const {
  std::shared_lock lock(mutex_);
  return trajectories_.size();
}

std::size_t ExperienceStore::experience_count() const {
  std::shared_lock lock(mutex_);
  return experiences_.size();
}

std::size_t ExperienceStore::template_count() const {
  std::shared_lock lock(mutex_);
  return templates_.size();
}

std::vector<std::pair<std::string, double>> ExperienceStore::find_nearest(
    const EmbeddingVector& q, std::size_t k) const {
  if (k < 1) throw Error(Errc::Precondition, "k must be at least 1");
  std::shared_lock lock(mutex_);
  if (trajectories_.empty()) {
    throw Error(Errc::EmptyStore, "no trajectories stored");
  }

  struct Row {
    std::string id;
    double score;
    std::int64_t priority;
    std::int64_t recency;
  };
  std::vector<Row> rows;
  rows.reserve(trajectories_.size());
  for (const auto& id : trajectory_order_) {
    const Trajectory& t = trajectories_.at(id);
    rows.push_back({id, cosine_similarity(q, t.trigger_embedding),
                    t.metadata.priority, t.metadata.executed_at});
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.priority != b.priority) return a.priority > b.priority;
    if (a.recency != b.recency) return a.recency > b.recency;
    return a.id < b.id;
  });
  if (rows.size() > k) rows.resize(k);

  std::vector<std::pair<std::string, double>> out;
  out.reserve(rows.size());
  for (auto& r : rows) out.emplace_back(std::move(r.id), r.score);
  return out;
}

std::vector<const Trajectory*> ExperienceStore::members_of_locked(
    const TrajectoryTemplate& tpl) const {
  std::vector<const Trajectory*> out;
  for (const auto& id : tpl.member_ids) {
    auto it = trajectories_.find(id);
    if (it != trajectories_.end()) out.push_back(&it->second);
  }
  return out;
}

std::int64_t ExperienceStore::template_recency_locked(
    const TrajectoryTemplate& tpl) const {
  std::int64_t recency = 0;
  for (const Trajectory* t : members_of_locked(tpl)) {
    recency = std::max(recency, t->metadata.executed_at);
  }
  return recency;
}

std::vector<std::pair<std::string, double>>
ExperienceStore::find_nearest_templates(const EmbeddingVector& q,
                                        std::size_t k) const {
  if (k < 1) throw Error(Errc::Precondition, "k must be at least 1");
  std::shared_lock lock(mutex_);
  if (templates_.empty()) {
    throw Error(Errc::EmptyStore, "no templates stored");
  }

  struct Row {
    std::string id;
    double score;
    std::int64_t priority;
    std::int64_t recency;
  };
  std::vector<Row> rows;
  rows.reserve(templates_.size());
  for (const auto& id : template_order_) {
    const TrajectoryTemplate& tpl = templates_.at(id);
    rows.push_back({id, cosine_similarity(q, tpl.trigger_centroid),
                    tpl.priority, template_recency_locked(tpl)});
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.priority != b.priority) return a.priority > b.priority;
    if (a.recency != b.recency) return a.recency > b.recency;
    return a.id < b.id;
  });
  if (rows.size() > k) rows.resize(k);

  std::vector<std::pair<std::string, double>> out;
  out.reserve(rows.size());
  for (auto& r : rows) out.emplace_back(std::move(r.id), r.score);
  return out;
}

namespace {

// Failure polarity first; inside a polarity, latest insertion first.
std::vector<NodeExperience> order_matches(
    const std::vector<std::string>& ids,
    const std::map<std::string, NodeExperience>& all) {
  std::vector<NodeExperience> failures, successes;
  for (const auto& id : ids) {
    const NodeExperience& e = all.at(id);
    (e.polarity == Polarity::Failure ? failures : successes).push_back(e);
  }
  std::reverse(failures.begin(), failures.end());
  std::reverse(successes.begin(), successes.end());
  failures.insert(failures.end(), successes.begin(), successes.end());
  return failures;
}

}  // namespace

std::vector<NodeExperience> ExperienceStore::lookup_experiences(
    const ErrorFingerprint& key) const {
  std::shared_lock lock(mutex_);
  auto it = by_fingerprint_.find(key);
  if (it == by_fingerprint_.end()) return {};
  return order_matches(it->second, experiences_);
}

std::vector<NodeExperience> ExperienceStore::lookup_experiences(
    const std::string& intent_key) const {
  std::shared_lock lock(mutex_);
  auto it = by_intent_.find(intent_key);
  if (it == by_intent_.end()) return {};
  return order_matches(it->second, experiences_);
}

// ---------------------------------------------------------------------------
// Update management
// ---------------------------------------------------------------------------

MergeReport ExperienceStore::merge_similar(double similarity_floor) {
  if (!(similarity_floor > 0.0 && similarity_floor <= 1.0)) {
    throw Error(Errc::Precondition, "similarity_floor must be in (0, 1]");
  }
  std::unique_lock lock(mutex_);

  const auto& ids = trajectory_order_;
  std::vector<std::uint64_t> hashes(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    hashes[i] = structural_hash(trajectories_.at(ids[i]));
  }

  UnionFind uf(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t j = i + 1; j < ids.size(); ++j) {
      if (hashes[i] != hashes[j]) continue;
      double s = cosine_similarity(trajectories_.at(ids[i]).trigger_embedding,
                                   trajectories_.at(ids[j]).trigger_embedding);
      if (s >= similarity_floor) uf.unite(i, j);
    }
  }

  std::map<std::size_t, std::vector<std::size_t>> components;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    components[uf.find(i)].push_back(i);
  }

  MergeReport report;
  for (const auto& [root, indices] : components) {
    if (indices.size() < 2) continue;

    const Trajectory* canonical = nullptr;
    for (std::size_t i : indices) {
      const Trajectory& t = trajectories_.at(ids[i]);
      if (t.metadata.outcome != Outcome::Success) continue;
      if (canonical == nullptr || more_recent(t, *canonical)) canonical = &t;
    }
    if (canonical == nullptr) continue;  // nothing safe to promote

    MergeGroup group;
    group.canonical_id = canonical->trajectory_id;
    std::int64_t transferred = 0;
    for (std::size_t i : indices) {
      group.member_ids.push_back(ids[i]);
      if (ids[i] == group.canonical_id) continue;
      const Trajectory& stored = trajectories_.at(ids[i]);
      std::string tag = "merged:" + group.canonical_id;
      bool tagged = has_tag(stored, tag);
      if (stored.metadata.usage_count == 0 && tagged) continue;
      Trajectory t = stored;
      transferred += t.metadata.usage_count;
      t.metadata.usage_count = 0;
      if (!tagged) t.metadata.compatibility_tags.push_back(tag);
      put_trajectory_locked(std::move(t));
    }
    if (transferred > 0) {
      Trajectory t = trajectories_.at(group.canonical_id);
      t.metadata.usage_count += transferred;
      put_trajectory_locked(std::move(t));
    }
    group.transferred_usage = transferred;
    std::sort(group.member_ids.begin(), group.member_ids.end());
    report.groups.push_back(std::move(group));
  }

  std::sort(report.groups.begin(), report.groups.end(),
            [](const MergeGroup& a, const MergeGroup& b) {
              return a.canonical_id < b.canonical_id;
            });
  return report;
}

std::vector<TrajectoryTemplate> ExperienceStore::cluster_templates(
    double theta_a) {
  std::unique_lock lock(mutex_);

  // Shape key is flag- and value-insensitive: pattern, tool order, sorted
  // param names per node, dependency ordinals. Members of one group differ
  // at most in param values and variability marks.
  auto shape_key = [](const Trajectory& t) {
    std::string key = to_string(t.pattern);
    std::map<std::string, std::size_t> position;
    for (std::size_t i = 0; i < t.nodes.size(); ++i) {
      position.emplace(t.nodes[i].node_id, i);
    }
    for (const auto& node : t.nodes) {
      key += '\x1e';
      key += node.tool_id;
      key += '\x1f';
      for (const auto& [name, value] : node.params) {
        key += name;
        key += ',';
      }
      key += '\x1f';
      std::vector<std::size_t> deps;
      for (const auto& d : node.depends_on) {
        auto it = position.find(d);
        deps.push_back(it == position.end() ? ~std::size_t{0} : it->second);
      }
      std::sort(deps.begin(), deps.end());
      for (auto d : deps) {
        key += std::to_string(d);
        key += ',';
      }
    }
    return key;
  };

  std::map<std::string, std::vector<std::string>> groups;
  for (const auto& id : trajectory_order_) {
    const Trajectory& t = trajectories_.at(id);
    if (t.metadata.outcome != Outcome::Success) continue;
    groups[shape_key(t)].push_back(id);
  }

  struct Cluster {
    std::vector<std::string> member_ids;
    std::string representative_id;
  };
  std::map<std::uint64_t, Cluster> by_hash;

  for (const auto& [key, member_ids] : groups) {
    std::size_t n_nodes = trajectories_.at(member_ids[0]).nodes.size();
    std::vector<bool> variable(n_nodes, false);

    for (const auto& id : member_ids) {
      const Trajectory& t = trajectories_.at(id);
      for (std::size_t i = 0; i < n_nodes; ++i) {
        if (t.nodes[i].is_variable) variable[i] = true;
      }
    }

    if (member_ids.size() >= 2) {
      const Trajectory& first = trajectories_.at(member_ids[0]);
      for (std::size_t i = 0; i < n_nodes; ++i) {
        if (variable[i]) continue;
        for (std::size_t m = 1; m < member_ids.size() && !variable[i]; ++m) {
          if (trajectories_.at(member_ids[m]).nodes[i].params !=
              first.nodes[i].params) {
            variable[i] = true;
          }
        }
      }
    } else {
      // Entity binding: a param value sharing a token with the trigger text
      // is query-bound, so its node is a rewrite slot.
      const Trajectory& only = trajectories_.at(member_ids[0]);
      std::set<std::string> query_tokens;
      for (auto& tok : tokenize(only.trigger.text)) {
        query_tokens.insert(std::move(tok));
      }
      for (std::size_t i = 0; i < n_nodes; ++i) {
        if (variable[i]) continue;
        for (const auto& [name, value] : only.nodes[i].params) {
          for (const auto& tok : tokenize(param_to_string(value))) {
            if (query_tokens.count(tok) != 0) {
              variable[i] = true;
              break;
            }
          }
          if (variable[i]) break;
        }
      }
    }

    // Write marks back so stored members carry their template's hash.
    for (const auto& id : member_ids) {
      const Trajectory& stored = trajectories_.at(id);
      bool changed = false;
      for (std::size_t i = 0; i < n_nodes; ++i) {
        if (stored.nodes[i].is_variable != variable[i]) changed = true;
      }
      if (!changed) continue;
      Trajectory t = stored;
      for (std::size_t i = 0; i < n_nodes; ++i) {
        t.nodes[i].is_variable = variable[i];
      }
      put_trajectory_locked(std::move(t));
    }

    const Trajectory* representative = nullptr;
    for (const auto& id : member_ids) {
      const Trajectory& t = trajectories_.at(id);
      if (representative == nullptr || more_recent(t, *representative)) {
        representative = &t;
      }
    }

    std::uint64_t hash = structural_hash(*representative);
    Cluster& cluster = by_hash[hash];
    cluster.member_ids.insert(cluster.member_ids.end(), member_ids.begin(),
                              member_ids.end());
    if (cluster.representative_id.empty() ||
        more_recent(*representative,
                    trajectories_.at(cluster.representative_id))) {
      cluster.representative_id = representative->trajectory_id;
    }
  }

  std::map<std::string, TrajectoryTemplate> next;
  std::vector<std::string> next_order;
  for (auto& [hash, cluster] : by_hash) {
    TrajectoryTemplate tpl;
    tpl.template_id = to_hex(hash);
    tpl.structural_hash = hash;

    const Trajectory& rep = trajectories_.at(cluster.representative_id);
    tpl.skeleton = rep.nodes;
    for (auto& node : tpl.skeleton) {
      if (!node.is_variable) continue;
      for (auto& [name, value] : node.params) {
        value = slot_marker(name);
      }
    }

    std::sort(cluster.member_ids.begin(), cluster.member_ids.end());
    tpl.member_ids = cluster.member_ids;

    std::vector<double> centroid(cfg_.dimension, 0.0);
    std::int64_t priority = 0;
    for (const auto& id : tpl.member_ids) {
      const Trajectory& t = trajectories_.at(id);
      for (std::size_t i = 0; i < centroid.size(); ++i) {
        centroid[i] += t.trigger_embedding.values[i];
      }
      priority += t.metadata.usage_count;
    }
    double norm = 0.0;
    for (double v : centroid) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0.0) {
      for (double& v : centroid) v /= norm;
    }
    tpl.trigger_centroid.values = std::move(centroid);
    tpl.priority = priority;
    tpl.reuse_class = classify_template_locked(tpl, theta_a);

    next_order.push_back(tpl.template_id);
    next.emplace(tpl.template_id, std::move(tpl));
  }

  templates_ = std::move(next);
  template_order_ = std::move(next_order);
  write_templates_locked();

  std::vector<TrajectoryTemplate> out;
  out.reserve(template_order_.size());
  for (const auto& id : template_order_) out.push_back(templates_.at(id));
  return out;
}

std::int64_t ExperienceStore::boost_priority(const std::string& template_id) {
  std::unique_lock lock(mutex_);
  auto it = templates_.find(template_id);
  if (it == templates_.end()) {
    throw Error(Errc::UnknownTemplate, template_id);
  }
  std::int64_t priority = 0;
  for (const Trajectory* t : members_of_locked(it->second)) {
    priority += t->metadata.usage_count;
  }
  if (priority != it->second.priority) {
    it->second.priority = priority;
    write_templates_locked();
  }
  return priority;
}

ReuseClass ExperienceStore::classify_template_locked(
    const TrajectoryTemplate& tpl, double theta_a) const {
  if (tpl.has_variable_nodes()) return ReuseClass::RewriteReuse;
  auto members = members_of_locked(tpl);
  double min_cosine = 1.0;  // singleton: min over the empty pair set
  for (std::size_t i = 0; i < members.size(); ++i) {
    for (std::size_t j = i + 1; j < members.size(); ++j) {
      min_cosine = std::min(
          min_cosine, cosine_similarity(members[i]->trigger_embedding,
                                        members[j]->trigger_embedding));
    }
  }
  return min_cosine >= theta_a ? ReuseClass::DirectReuse
                               : ReuseClass::RewriteReuse;
}

ReuseClass ExperienceStore::classify_template(const TrajectoryTemplate& tpl,
                                              double theta_a) const {
  std::shared_lock lock(mutex_);
  return classify_template_locked(tpl, theta_a);
}

TemplateStats ExperienceStore::template_stats(
    const std::string& template_id) const {
  std::shared_lock lock(mutex_);
  auto it = templates_.find(template_id);
  if (it == templates_.end()) {
    throw Error(Errc::UnknownTemplate, template_id);
  }
  TemplateStats stats;
  for (const Trajectory* t : members_of_locked(it->second)) {
    if (t->metadata.outcome == Outcome::Success) stats.successes += 1;
  }
  for (const auto& [id, t] : trajectories_) {
    if (t.metadata.outcome == Outcome::Failure &&
        structural_hash(t) == it->second.structural_hash) {
      stats.failures += 1;
    }
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

void ExperienceStore::write_templates_locked() const {
  std::string content;
  for (const auto& id : template_order_) {
    content += dump_canonical(json(templates_.at(id)));
    content += '\n';
  }
  atomic_write(dir_ / kTemplatesFile, content);
}

void ExperienceStore::save() const {
  std::unique_lock lock(mutex_);
  std::string content;
  for (const auto& id : trajectory_order_) {
    content += dump_canonical(json(trajectories_.at(id)));
    content += '\n';
  }
  atomic_write(dir_ / kTrajectoriesFile, content);

  content.clear();
  for (const auto& id : experience_order_) {
    content += dump_canonical(json(experiences_.at(id)));
    content += '\n';
  }
  atomic_write(dir_ / kExperiencesFile, content);

  write_templates_locked();

  json m;
  m["embedding_dimension"] = cfg_.dimension;
  m["schema_version"] = 1;
  atomic_write(dir_ / kManifestFile, dump_canonical(m) + "\n");
}

}  // namespace wg
