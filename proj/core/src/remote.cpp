#include "vigtext/remote.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

#include "vigtext/digest.hpp"
#include "vigtext/error.hpp"

namespace vigtext {

using nlohmann::json;

ModelServerClient::ModelServerClient(RemoteConfig config)
    : config_(std::move(config)), requests_(std::make_shared<std::atomic<std::size_t>>(0)) {
  if (config_.endpoint.empty()) throw Error(Errc::kInvalidArgument, "remote endpoint is empty");
  if (config_.parallelism < 1 || config_.max_attempts < 1 || config_.max_batch < 1) {
    throw Error(Errc::kInvalidArgument, "remote parallelism, attempts and batch size must be >= 1");
  }
}

json ModelServerClient::post(const std::string& path, const json& body) const {
  const std::string payload = body.dump();
  std::string last_failure;
  auto delay = config_.backoff;
  for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
    httplib::Client cli(config_.endpoint);
    cli.set_connection_timeout(config_.timeout);
    cli.set_read_timeout(config_.timeout);
    cli.set_write_timeout(config_.timeout);
    requests_->fetch_add(1);
    auto res = path == "/healthz" ? cli.Get(path) : cli.Post(path, payload, "application/json");
    if (!res) {
      last_failure = httplib::to_string(res.error());
    } else if (res->status == 200) {
      try {
        return json::parse(res->body);
      } catch (const json::exception& e) {
        throw Error(Errc::kProtocol, path + ": response is not JSON: " + e.what());
      }
    } else if (res->status >= 500) {
      last_failure = "HTTP " + std::to_string(res->status);
    } else {
      throw Error(Errc::kHttpStatus, path + ": HTTP " + std::to_string(res->status) + " " + res->body);
    }
    if (attempt < config_.max_attempts) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
  }
  throw Error(Errc::kTransport, path + " failed after " + std::to_string(config_.max_attempts) +
                                    " attempts: " + last_failure);
}

namespace {

std::vector<EmbeddingVector> decode_vectors(const json& body, std::size_t expected_count, int expected_dim,
                                            const std::string& path) {
  try {
    const int dim = body.at("dim").get<int>();
    const auto& vectors = body.at("vectors");
    if (!vectors.is_array() || vectors.size() != expected_count) {
      throw Error(Errc::kProtocol, path + ": expected " + std::to_string(expected_count) + " vectors");
    }
    if (expected_dim > 0 && dim != expected_dim) {
      throw Error(Errc::kDimensionMismatch, path + ": server dim " + std::to_string(dim) + ", expected " +
                                                std::to_string(expected_dim));
    }
    std::vector<EmbeddingVector> out;
    out.reserve(expected_count);
    for (const auto& v : vectors) {
      if (!v.is_array() || static_cast<int>(v.size()) != dim) {
        throw Error(Errc::kDimensionMismatch, path + ": vector length differs from declared dim");
      }
      EmbeddingVector e(dim);
      for (int i = 0; i < dim; ++i) {
        e(i) = v[static_cast<std::size_t>(i)].get<double>();
        if (!std::isfinite(e(i))) throw Error(Errc::kProtocol, path + ": non-finite embedding value");
      }
      out.push_back(std::move(e));
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(Errc::kProtocol, path + ": schema violation: " + e.what());
  }
}

}  // namespace

std::vector<EmbeddingVector> ModelServerClient::embed_batched(const std::string& path, const char* field,
                                                              const std::vector<std::string>& items,
                                                              int expected_dim) const {
  const std::size_t batch = static_cast<std::size_t>(config_.max_batch);
  const std::size_t chunks = (items.size() + batch - 1) / batch;
  std::vector<std::vector<EmbeddingVector>> results(chunks);
  std::vector<std::exception_ptr> errors(chunks);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t c = next.fetch_add(1); c < chunks; c = next.fetch_add(1)) {
      try {
        const std::size_t lo = c * batch;
        const std::size_t hi = std::min(items.size(), lo + batch);
        json body;
        body[field] = std::vector<std::string>(items.begin() + static_cast<std::ptrdiff_t>(lo),
                                               items.begin() + static_cast<std::ptrdiff_t>(hi));
        results[c] = decode_vectors(post(path, body), hi - lo, expected_dim, path);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  {
    const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(config_.parallelism), chunks);
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    if (chunks > 0) worker();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<EmbeddingVector> out;
  out.reserve(items.size());
  for (auto& r : results) {
    for (auto& v : r) out.push_back(std::move(v));
  }
  return out;
}

std::vector<EmbeddingVector> ModelServerClient::embed_images(std::span<const RasterImage> images,
                                                             int expected_dim) const {
  std::vector<std::string> encoded;
  encoded.reserve(images.size());
  for (const auto& img : images) encoded.push_back(base64_encode(encode_ppm(img)));
  return embed_batched("/embed/image", "images", encoded, expected_dim);
}

std::vector<EmbeddingVector> ModelServerClient::embed_tokens(std::span<const std::string> tokens,
                                                             int expected_dim) const {
  return embed_batched("/embed/text", "tokens", std::vector<std::string>(tokens.begin(), tokens.end()),
                       expected_dim);
}

DependencyParse ModelServerClient::parse(const std::string& sentence) const {
  const json body = post("/parse", json{{"sentence", sentence}});
  try {
    DependencyParse p;
    p.tokens = body.at("tokens").get<std::vector<std::string>>();
    for (const auto& e : body.at("edges")) {
      if (!e.is_array() || e.size() != 2) throw Error(Errc::kProtocol, "/parse: edge must be [head, dep]");
      p.edges.push_back({e[0].get<int>(), e[1].get<int>()});
    }
    const int k = static_cast<int>(p.tokens.size());
    for (const auto& e : p.edges) {
      if (e.head < 0 || e.dep < 0 || e.head >= k || e.dep >= k) {
        throw Error(Errc::kProtocol, "/parse: edge index out of range");
      }
    }
    return p;
  } catch (const json::exception& e) {
    throw Error(Errc::kProtocol, std::string("/parse: schema violation: ") + e.what());
  }
}

std::string ModelServerClient::explain(const RasterImage& image, int grid_n, const std::string& prompt) const {
  const json body =
      post("/explain", json{{"image", base64_encode(encode_ppm(image))}, {"grid_n", grid_n}, {"prompt", prompt}});
  try {
    return body.at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(Errc::kProtocol, std::string("/explain: schema violation: ") + e.what());
  }
}

json ModelServerClient::healthz() const { return post("/healthz", json::object()); }

RemoteProvider::RemoteProvider(RemoteConfig config, int image_dim, int text_dim)
    : client_(std::move(config)), image_dim_(image_dim), text_dim_(text_dim) {}

std::string RemoteProvider::id() const {
  return "remote:" + client_.config().endpoint + ":" + std::to_string(image_dim_) + ":" + std::to_string(text_dim_);
}

std::vector<EmbeddingVector> RemoteProvider::embed_images(std::span<const RasterImage> images) const {
  return client_.embed_images(images, image_dim_);
}

std::vector<EmbeddingVector> RemoteProvider::embed_tokens(std::span<const std::string> tokens) const {
  return client_.embed_tokens(tokens, text_dim_);
}

std::vector<EmbeddingVector> remote_embed(std::span<const RasterImage> images, const RemoteConfig& config,
                                          int expected_dim) {
  return ModelServerClient(config).embed_images(images, expected_dim);
}

std::vector<EmbeddingVector> remote_embed(std::span<const std::string> tokens, const RemoteConfig& config,
                                          int expected_dim) {
  return ModelServerClient(config).embed_tokens(tokens, expected_dim);
}

}  // namespace vigtext
