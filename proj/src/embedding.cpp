#include "workflowgen/embedding.hpp"

#include <cctype>
#include <cmath>

#include <nlohmann/json.hpp>

// httplib pulls in <thread> and sockets; keep it out of the header.
#include <httplib.h>

namespace wg {

using nlohmann::json;

const char* to_string(EmbeddingProvider p) {
  return p == EmbeddingProvider::DeterministicHash ? "deterministic_hash"
                                                   : "remote";
}

void validate(const EmbeddingConfig& cfg) {
  if (cfg.dimension < 8) {
    throw Error(Errc::ConfigError, "embedding dimension must be at least 8");
  }
  if (cfg.provider == EmbeddingProvider::Remote && !cfg.remote_endpoint) {
    throw Error(Errc::ConfigError, "remote provider needs remote_endpoint");
  }
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char raw : text) {
    unsigned char c = static_cast<unsigned char>(raw);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

namespace {

EmbeddingVector normalize(std::vector<double> values) {
  double norm = 0.0;
  for (double v : values) norm += v * v;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (double& v : values) v /= norm;
  }
  return EmbeddingVector{std::move(values)};
}

EmbeddingVector embed_hash(const std::string& text,
                           const EmbeddingConfig& cfg) {
  auto tokens = tokenize(text);
  if (tokens.empty()) {
    throw Error(Errc::EmptyText, "no tokens in embedding input");
  }
  std::vector<double> counts(cfg.dimension, 0.0);
  for (const auto& tok : tokens) {
    counts[fnv1a64(tok) % cfg.dimension] += 1.0;
  }
  return normalize(std::move(counts));
}

EmbeddingVector embed_remote(const std::string& text,
                             const EmbeddingConfig& cfg) {
  const std::string& endpoint = *cfg.remote_endpoint;
  auto scheme_end = endpoint.find("://");
  std::size_t path_start = endpoint.find(
      '/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  std::string base = endpoint.substr(0, path_start);
  std::string path =
      path_start == std::string::npos ? "/" : endpoint.substr(path_start);

  httplib::Client client(base);
  client.set_connection_timeout(0, cfg.timeout_ms * 1000);
  client.set_read_timeout(0, cfg.timeout_ms * 1000);

  json body;
  body["text"] = text;
  auto res = client.Post(path, body.dump(), "application/json");
  if (!res || res->status != 200) {
    throw Error(Errc::RemoteUnavailable, "embedding endpoint " + endpoint);
  }
  std::vector<double> values;
  try {
    values = json::parse(res->body).at("values").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw Error(Errc::RemoteUnavailable,
                std::string("bad embedding payload: ") + e.what());
  }
  if (values.size() != cfg.dimension) {
    throw Error(Errc::DimensionMismatch,
                "remote returned " + std::to_string(values.size()) +
                    " values, config wants " + std::to_string(cfg.dimension));
  }
  EmbeddingVector v = normalize(std::move(values));
  if (v.is_zero()) {
    throw Error(Errc::RemoteUnavailable, "remote returned a zero vector");
  }
  return v;
}

}  // namespace

EmbeddingVector embed(const std::string& text, const EmbeddingConfig& cfg) {
  validate(cfg);
  if (cfg.provider == EmbeddingProvider::Remote) {
    return embed_remote(text, cfg);
  }
  return embed_hash(text, cfg);
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dimension() != b.dimension()) {
    throw Error(Errc::DimensionMismatch,
                std::to_string(a.dimension()) + " vs " +
                    std::to_string(b.dimension()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

void to_json(json& j, const EmbeddingConfig& v) {
  j = json::object();
  j["dimension"] = v.dimension;
  j["provider"] = to_string(v.provider);
  if (v.remote_endpoint) j["remote_endpoint"] = *v.remote_endpoint;
  j["timeout_ms"] = v.timeout_ms;
}

void from_json(const json& j, EmbeddingConfig& v) {
  v = EmbeddingConfig{};
  if (j.contains("dimension")) {
    v.dimension = j.at("dimension").get<std::size_t>();
  }
  if (j.contains("provider")) {
    std::string p = j.at("provider").get<std::string>();
    if (p == "deterministic_hash") {
      v.provider = EmbeddingProvider::DeterministicHash;
    } else if (p == "remote") {
      v.provider = EmbeddingProvider::Remote;
    } else {
      throw std::runtime_error("unknown embedding provider: " + p);
    }
  }
  if (j.contains("remote_endpoint")) {
    v.remote_endpoint = j.at("remote_endpoint").get<std::string>();
  }
  if (j.contains("timeout_ms")) {
    v.timeout_ms = j.at("timeout_ms").get<int>();
  }
}

}  // namespace wg
