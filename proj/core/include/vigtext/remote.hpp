#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vigtext/embed.hpp"
#include "vigtext/textgraph.hpp"

namespace vigtext {

struct RemoteConfig {
  std::string endpoint;  // e.g. "http://127.0.0.1:8600"
  int parallelism = 4;   // in-flight request bound
  int max_attempts = 3;
  std::chrono::milliseconds backoff{50};  // doubled after every failed attempt
  int max_batch = 16;    // items per /embed request
  std::chrono::seconds timeout{60};
};

// Client for the model server:
//   POST /embed/image {"images": [base64 P6, ...]}  -> {"dim": d, "vectors": [[...], ...]}
//   POST /embed/text  {"tokens": [...]}             -> {"dim": d, "vectors": [[...], ...]}
//   POST /parse       {"sentence": s}               -> {"tokens": [...], "edges": [[head, dep], ...]}
//   POST /explain     {"image": base64 P6, "grid_n": n, "prompt": p} -> {"text": "..."}
//   GET  /healthz
// Transport failures and 5xx responses are retried with exponential backoff;
// other non-200 statuses fail immediately.
class ModelServerClient {
 public:
  explicit ModelServerClient(RemoteConfig config);

  std::vector<EmbeddingVector> embed_images(std::span<const RasterImage> images, int expected_dim = 0) const;
  std::vector<EmbeddingVector> embed_tokens(std::span<const std::string> tokens, int expected_dim = 0) const;
  DependencyParse parse(const std::string& sentence) const;
  std::string explain(const RasterImage& image, int grid_n, const std::string& prompt) const;
  nlohmann::json healthz() const;

  const RemoteConfig& config() const { return config_; }
  std::size_t requests_sent() const { return requests_->load(); }

 private:
  nlohmann::json post(const std::string& path, const nlohmann::json& body) const;
  std::vector<EmbeddingVector> embed_batched(const std::string& path, const char* field,
                                             const std::vector<std::string>& items, int expected_dim) const;

  RemoteConfig config_;
  std::shared_ptr<std::atomic<std::size_t>> requests_;
};

class RemoteProvider final : public EmbeddingProvider {
 public:
  RemoteProvider(RemoteConfig config, int image_dim = 768, int text_dim = 768);

  ProviderKind kind() const override { return ProviderKind::kRemote; }
  int image_dim() const override { return image_dim_; }
  int text_dim() const override { return text_dim_; }
  std::string id() const override;

  std::vector<EmbeddingVector> embed_images(std::span<const RasterImage> images) const override;
  std::vector<EmbeddingVector> embed_tokens(std::span<const std::string> tokens) const override;

  const ModelServerClient& client() const { return client_; }

 private:
  ModelServerClient client_;
  int image_dim_;
  int text_dim_;
};

// Remote form of embedding a batch of patches or tokens; output order matches input order.
std::vector<EmbeddingVector> remote_embed(std::span<const RasterImage> images, const RemoteConfig& config,
                                          int expected_dim = 0);
std::vector<EmbeddingVector> remote_embed(std::span<const std::string> tokens, const RemoteConfig& config,
                                          int expected_dim = 0);

}  // namespace vigtext
