#include "vigtext/embed.hpp"

#include <cctype>
#include <cmath>

#include "vigtext/dct.hpp"
#include "vigtext/error.hpp"
#include "vigtext/rng.hpp"

namespace vigtext {

namespace {

constexpr double kLuma[3] = {0.299, 0.587, 0.114};

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

Eigen::MatrixXd make_projection(std::uint64_t seed, int dim) {
  Rng rng(derive_seed(seed, "toy-image"));
  const double scale = std::sqrt(3.0 / (kToyResample * kToyResample));
  Eigen::MatrixXd p(dim, kToyResample * kToyResample);
  for (int r = 0; r < dim; ++r) {
    for (int c = 0; c < p.cols(); ++c) p(r, c) = (2.0 * rng.uniform() - 1.0) * scale;
  }
  return p;
}

EmbeddingVector text_vector(std::string_view token, std::uint64_t seed, int dim) {
  if (token.empty()) throw Error(Errc::kInvalidArgument, "cannot embed an empty token");
  Rng rng(derive_seed(seed, fnv1a64(lowercase(token))));
  EmbeddingVector v(dim);
  for (int i = 0; i < dim; ++i) v(i) = rng.uniform(-1.0, 1.0);
  return v;
}

}  // namespace

std::string_view provider_kind_name(ProviderKind kind) {
  switch (kind) {
    case ProviderKind::kToy: return "toy";
    case ProviderKind::kFixture: return "fixture";
    case ProviderKind::kRemote: return "remote";
  }
  return "unknown";
}

EmbeddingVector EmbeddingProvider::embed_image(const RasterImage& image) const {
  return embed_images(std::span<const RasterImage>(&image, 1)).front();
}

EmbeddingVector EmbeddingProvider::embed_token(const std::string& token) const {
  return embed_tokens(std::span<const std::string>(&token, 1)).front();
}

// ---------------------------------------------------------------------------
// Toy provider

ToyProvider::ToyProvider(std::uint64_t seed, int image_dim, int text_dim)
    : seed_(seed), image_dim_(image_dim), text_dim_(text_dim) {
  if (image_dim < 1 || text_dim < 1) throw Error(Errc::kInvalidArgument, "embedding dim must be >= 1");
  projection_ = make_projection(seed, image_dim);
}

std::string ToyProvider::id() const {
  return "toy:" + std::to_string(seed_) + ":" + std::to_string(image_dim_) + ":" + std::to_string(text_dim_);
}

Eigen::VectorXd ToyProvider::grayscale_features(const FloatImage& pixels) const {
  const FloatImage small = resize_bilinear(pixels, kToyResample, kToyResample);
  Eigen::VectorXd g(kToyResample * kToyResample);
  for (int y = 0; y < kToyResample; ++y) {
    for (int x = 0; x < kToyResample; ++x) {
      g(y * kToyResample + x) =
          kLuma[0] * small.at(x, y, 0) + kLuma[1] * small.at(x, y, 1) + kLuma[2] * small.at(x, y, 2);
    }
  }
  return g;
}

EmbeddingVector ToyProvider::embed(const FloatImage& pixels) const {
  return (projection_ * grayscale_features(pixels)).array().tanh().matrix();
}

EmbeddingVector ToyProvider::jvp(const FloatImage& pixels, const FloatImage& direction) const {
  const EmbeddingVector out = embed(pixels);
  const Eigen::VectorXd dg = grayscale_features(direction);
  return ((1.0 - out.array().square()) * (projection_ * dg).array()).matrix();
}

FloatImage ToyProvider::vjp(const FloatImage& pixels, const EmbeddingVector& grad_out) const {
  const EmbeddingVector out = embed(pixels);
  const Eigen::VectorXd dg = projection_.transpose() * ((1.0 - out.array().square()) * grad_out.array()).matrix();
  FloatImage small(kToyResample, kToyResample);
  for (int y = 0; y < kToyResample; ++y) {
    for (int x = 0; x < kToyResample; ++x) {
      for (int c = 0; c < 3; ++c) small.at(x, y, c) = kLuma[c] * dg(y * kToyResample + x);
    }
  }
  return resize_bilinear_adjoint(small, pixels.width, pixels.height);
}

std::vector<EmbeddingVector> ToyProvider::embed_images(std::span<const RasterImage> images) const {
  std::vector<EmbeddingVector> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(embed(to_float(img)));
  return out;
}

std::vector<EmbeddingVector> ToyProvider::embed_tokens(std::span<const std::string> tokens) const {
  std::vector<EmbeddingVector> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(text_vector(t, seed_, text_dim_));
  return out;
}

EmbeddingVector toy_embed_image(const Patch& patch, std::uint64_t seed, int dim) {
  if (dim < 1) throw Error(Errc::kInvalidArgument, "embedding dim must be >= 1");
  return ToyProvider(seed, dim, 1).embed(to_float(patch.pixels));
}

EmbeddingVector toy_embed_text(std::string_view token, std::uint64_t seed, int dim) {
  if (dim < 1) throw Error(Errc::kInvalidArgument, "embedding dim must be >= 1");
  return text_vector(token, seed, dim);
}

// ---------------------------------------------------------------------------
// Node features

Digest image_digest(const RasterImage& image) { return sha256(encode_ppm(image)); }
Digest token_digest(std::string_view token) { return sha256(token); }

EmbeddingVector node_feature(const Patch& patch, const EmbeddingProvider& provider) {
  return node_features(std::span<const Patch>(&patch, 1), provider).front();
}

std::vector<EmbeddingVector> node_features(std::span<const Patch> patches, const EmbeddingProvider& provider) {
  std::vector<RasterImage> batch;
  batch.reserve(patches.size() * 2);
  for (const auto& p : patches) {
    batch.push_back(p.pixels);
    batch.push_back(dct_visual(p));
  }
  const auto vectors = provider.embed_images(batch);
  if (vectors.size() != batch.size()) throw Error(Errc::kProtocol, "provider returned wrong vector count");
  std::vector<EmbeddingVector> out;
  out.reserve(patches.size());
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const auto& spatial = vectors[2 * i];
    const auto& freq = vectors[2 * i + 1];
    if (spatial.size() != provider.image_dim() || freq.size() != provider.image_dim()) {
      throw Error(Errc::kDimensionMismatch, "image embedding dim differs from provider declaration");
    }
    out.push_back(0.5 * (spatial + freq));
  }
  return out;
}

}  // namespace vigtext
