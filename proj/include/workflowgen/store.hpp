#pragma once
// Durable repository of trajectories, node experiences, and templates.
// Layout: <dir>/trajectories.jsonl, experiences.jsonl, templates.jsonl,
// manifest.json. Trajectory and experience puts append one line each; load
// replays the files in order, last record per id wins. save() rewrites every
// file in canonical form (one line per live record, insertion order).
//
// Concurrency: many readers or one writer, store-wide. A reader observes
// fully the pre- or post-state of any mutation, never a partial one.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include "workflowgen/core.hpp"
#include "workflowgen/embedding.hpp"

namespace wg {

class InvalidTrajectoryError : public Error {
 public:
  InvalidTrajectoryError(std::vector<Violation> violations,
                         const std::string& what)
      : Error(Errc::InvalidTrajectory, what),
        violations_(std::move(violations)) {}

  const std::vector<Violation>& violations() const { return violations_; }

 private:
  std::vector<Violation> violations_;
};

struct MergeGroup {
  std::string canonical_id;
  std::vector<std::string> member_ids;  // canonical included, sorted
  std::int64_t transferred_usage = 0;
};

struct MergeReport {
  std::vector<MergeGroup> groups;  // only groups of two or more
};

struct TemplateStats {
  std::int64_t successes = 0;  // members currently marked Success
  std::int64_t failures = 0;   // stored Failure trajectories with this hash
};

class ExperienceStore {
 public:
  // Opens or creates the store directory. A fresh directory needs cfg to fix
  // the embedding dimension; an existing manifest must agree with cfg when
  // both are present.
  explicit ExperienceStore(const std::filesystem::path& dir,
                           std::optional<EmbeddingConfig> cfg = std::nullopt);

  ExperienceStore(const ExperienceStore&) = delete;
  ExperienceStore& operator=(const ExperienceStore&) = delete;

  const std::filesystem::path& path() const { return dir_; }
  const EmbeddingConfig& embedding_config() const { return cfg_; }

  // ---- writes --------------------------------------------------------------

  // Validates, assigns version_id (1, or previous + 1 on an existing id),
  // appends to the log. Every experience_ref must resolve.
  std::string put_trajectory(Trajectory t);

  // Upsert by experience_id; storing identical content is a no-op.
  std::string put_experience(const NodeExperience& e);

  // Convenience revisions used by routing; each goes through the trajectory
  // put path, so version_id moves forward.
  void bump_usage(const std::string& trajectory_id);
  void add_tag(const std::string& trajectory_id, const std::string& tag);
  void set_outcome(const std::string& trajectory_id, Outcome outcome);

  // ---- reads ---------------------------------------------------------------

  std::optional<Trajectory> get_trajectory(const std::string& id) const;
  std::optional<NodeExperience> get_experience(const std::string& id) const;
  std::optional<TrajectoryTemplate> get_template(const std::string& id) const;

  // Insertion order.
  std::vector<Trajectory> trajectories() const;
  std::vector<NodeExperience> experiences() const;
  std::vector<TrajectoryTemplate> templates() const;
  std::size_t trajectory_count() const;
  std::size_t experience_count() const;
  std::size_t template_count() const;

  // Exact scan over trigger embeddings, score descending, ties broken by
  // priority, then recency (executed_at), then lexicographic id.
  std::vector<std::pair<std::string, double>> find_nearest(
      const EmbeddingVector& q, std::size_t k) const;

  // Same contract over template trigger centroids; recency of a template is
  // its members' latest executed_at.
  std::vector<std::pair<std::string, double>> find_nearest_templates(
      const EmbeddingVector& q, std::size_t k) const;

  // Exact index matches. Failure polarity precedes Success; within one
  // polarity, most recently inserted first.
  std::vector<NodeExperience> lookup_experiences(
      const ErrorFingerprint& key) const;
  std::vector<NodeExperience> lookup_experiences(
      const std::string& intent_key) const;

  // ---- update management ---------------------------------------------------

  // Groups trajectories by (equal structural_hash, trigger cosine ≥ floor,
  // transitively); the most recent Success in a group becomes canonical,
  // the rest gain tag "merged:<canonical_id>" and their usage_counts move
  // into the canonical. Groups without a Success member are skipped.
  MergeReport merge_similar(double similarity_floor);

  // Rebuilds the template set from Success trajectories: one template per
  // distinct structural_hash. Value divergence across a group marks a node
  // variable; a singleton group marks nodes whose param values share tokens
  // with its own trigger text. Marks are written back to members (revision)
  // when they change, so members share their template's hash. Idempotent.
  std::vector<TrajectoryTemplate> cluster_templates(double theta_a = 0.9);

  // priority := sum of member usage_counts.
  std::int64_t boost_priority(const std::string& template_id);

  // DirectReuse needs minimum pairwise member-trigger cosine ≥ theta_a and a
  // slot-free skeleton.
  ReuseClass classify_template(const TrajectoryTemplate& tpl,
                               double theta_a) const;

  TemplateStats template_stats(const std::string& template_id) const;

  // Canonical rewrite of all files; byte-stable under load-then-save.
  void save() const;

 private:
  std::string put_trajectory_locked(Trajectory t);
  void index_experience_locked(const NodeExperience& e);
  void unindex_experience_locked(const NodeExperience& e);
  void write_templates_locked() const;
  void append_record(const char* file, const nlohmann::json& j) const;
  std::vector<const Trajectory*> members_of_locked(
      const TrajectoryTemplate& tpl) const;
  std::int64_t template_recency_locked(const TrajectoryTemplate& tpl) const;
  ReuseClass classify_template_locked(const TrajectoryTemplate& tpl,
                                      double theta_a) const;

  std::filesystem::path dir_;
  EmbeddingConfig cfg_;

  mutable std::shared_mutex mutex_;
  std::map<std::string, Trajectory> trajectories_;
  std::vector<std::string> trajectory_order_;
  std::map<std::string, NodeExperience> experiences_;
  std::vector<std::string> experience_order_;
  std::map<std::string, TrajectoryTemplate> templates_;
  std::vector<std::string> template_order_;
  std::map<ErrorFingerprint, std::vector<std::string>> by_fingerprint_;
  std::map<std::string, std::vector<std::string>> by_intent_;
};

}  // namespace wg
