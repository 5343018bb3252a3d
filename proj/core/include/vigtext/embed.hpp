#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "vigtext/digest.hpp"
#include "vigtext/raster.hpp"

namespace vigtext {

using EmbeddingVector = Eigen::VectorXd;

enum class ProviderKind { kToy, kFixture, kRemote };

std::string_view provider_kind_name(ProviderKind kind);

// Deterministic image and word embedder. Implementations are immutable after
// construction and safe to call from several threads at once.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual ProviderKind kind() const = 0;
  virtual int image_dim() const = 0;
  virtual int text_dim() const = 0;
  // Stable identity used in cache keys; changes whenever outputs could.
  virtual std::string id() const = 0;

  virtual std::vector<EmbeddingVector> embed_images(std::span<const RasterImage> images) const = 0;
  virtual std::vector<EmbeddingVector> embed_tokens(std::span<const std::string> tokens) const = 0;

  EmbeddingVector embed_image(const RasterImage& image) const;
  EmbeddingVector embed_token(const std::string& token) const;
};

inline constexpr int kToyImageDim = 64;
inline constexpr int kToyTextDim = 32;
inline constexpr int kToyResample = 16;

// Stand-in for a pretrained backbone: grayscale, bilinear resample to 16x16,
// then tanh(P g). P (dim x 256) holds (2u - 1) * sqrt(3/256) with u drawn from
// Rng(derive_seed(seed, "toy-image")) in row-major order. Word vectors come
// from Rng(derive_seed(seed, fnv1a64(lowercase(token)))) as dim uniform draws
// on [-1, 1].
class ToyProvider final : public EmbeddingProvider {
 public:
  ToyProvider(std::uint64_t seed, int image_dim = kToyImageDim, int text_dim = kToyTextDim);

  ProviderKind kind() const override { return ProviderKind::kToy; }
  int image_dim() const override { return image_dim_; }
  int text_dim() const override { return text_dim_; }
  std::string id() const override;
  std::uint64_t seed() const { return seed_; }

  std::vector<EmbeddingVector> embed_images(std::span<const RasterImage> images) const override;
  std::vector<EmbeddingVector> embed_tokens(std::span<const std::string> tokens) const override;

  // Differentiable interface over normalized [0,1] pixels.
  EmbeddingVector embed(const FloatImage& pixels) const;
  EmbeddingVector jvp(const FloatImage& pixels, const FloatImage& direction) const;
  FloatImage vjp(const FloatImage& pixels, const EmbeddingVector& grad_out) const;

  const Eigen::MatrixXd& projection() const { return projection_; }

 private:
  Eigen::VectorXd grayscale_features(const FloatImage& pixels) const;

  std::uint64_t seed_;
  int image_dim_;
  int text_dim_;
  Eigen::MatrixXd projection_;
};

EmbeddingVector toy_embed_image(const Patch& patch, std::uint64_t seed, int dim);
EmbeddingVector toy_embed_text(std::string_view token, std::uint64_t seed, int dim);

// Content key for fixture lookup: SHA-256 of the P6 encoding of an image, or
// of the raw token bytes.
Digest image_digest(const RasterImage& image);
Digest token_digest(std::string_view token);

// "VGFX1" fixture: magic, u32 LE dim, then (32-byte digest, dim f64 LE) records.
class FixtureStore {
 public:
  explicit FixtureStore(int dim = 0) : dim_(dim) {}

  static FixtureStore load(const std::filesystem::path& path);
  static FixtureStore parse(std::string_view bytes);
  void save(const std::filesystem::path& path) const;
  std::string serialize() const;

  int dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }
  void insert(const Digest& key, const EmbeddingVector& value);
  const EmbeddingVector& lookup(const Digest& key) const;
  bool contains(const Digest& key) const { return records_.contains(key); }

 private:
  int dim_;
  std::map<Digest, EmbeddingVector> records_;
};

class FixtureProvider final : public EmbeddingProvider {
 public:
  FixtureProvider(FixtureStore images, FixtureStore tokens);

  ProviderKind kind() const override { return ProviderKind::kFixture; }
  int image_dim() const override { return images_.dim(); }
  int text_dim() const override { return tokens_.dim(); }
  std::string id() const override { return id_; }

  std::vector<EmbeddingVector> embed_images(std::span<const RasterImage> images) const override;
  std::vector<EmbeddingVector> embed_tokens(std::span<const std::string> tokens) const override;

 private:
  FixtureStore images_;
  FixtureStore tokens_;
  std::string id_;
};

// 0.5 * (embed(patch) + embed(dct_visual(patch))), same provider for both.
EmbeddingVector node_feature(const Patch& patch, const EmbeddingProvider& provider);
// Batched form: one provider call covering every patch and its DCT visual.
std::vector<EmbeddingVector> node_features(std::span<const Patch> patches, const EmbeddingProvider& provider);

}  // namespace vigtext
