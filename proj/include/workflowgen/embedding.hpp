#pragma once
// Deterministic bag-of-tokens embeddings and cosine similarity. The hash
// provider is a pure function of (text, config); the remote provider speaks
// one POST endpoint and is never used by the acceptance suite.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "workflowgen/core.hpp"

namespace wg {

enum class EmbeddingProvider { DeterministicHash, Remote };

const char* to_string(EmbeddingProvider p);

struct EmbeddingConfig {
  std::size_t dimension = 256;  // at least 8
  EmbeddingProvider provider = EmbeddingProvider::DeterministicHash;
  std::optional<std::string> remote_endpoint;  // required for Remote
  int timeout_ms = 5000;

  bool operator==(const EmbeddingConfig&) const = default;
};

// Throws ConfigError on a violated config invariant.
void validate(const EmbeddingConfig& cfg);

// Lowercase tokens split on every non-alphanumeric byte. Shared by the
// embedder, intent keys, and the harness's overlap construction.
std::vector<std::string> tokenize(std::string_view text);

// Token counts hashed into cfg.dimension buckets, L2-normalized.
// Throws EmptyText when no token survives tokenization; RemoteUnavailable
// when the Remote provider cannot produce a usable vector.
EmbeddingVector embed(const std::string& text, const EmbeddingConfig& cfg);

// Throws DimensionMismatch. Zero-norm input has no direction; score is 0.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

void to_json(nlohmann::json& j, const EmbeddingConfig& v);
void from_json(const nlohmann::json& j, EmbeddingConfig& v);

}  // namespace wg
