#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "support.hpp"
#include "vigtext/dct.hpp"
#include "vigtext/error.hpp"
#include "vigtext/rng.hpp"

using namespace vigtext;
using vigtext::testing::random_float_image;
using vigtext::testing::random_image;
using vigtext::testing::TempDir;

namespace {

// Grayscale, half-pixel bilinear resample to 16x16, then tanh(P g).
Eigen::VectorXd toy_oracle(const RasterImage& img, std::uint64_t seed, int dim) {
  const int n = 16;
  std::vector<double> gray(static_cast<std::size_t>(img.width) * img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      gray[static_cast<std::size_t>(y) * img.width + x] =
          (0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2)) / 255.0;
    }
  }
  auto coord = [](int d, int src, int dst) {
    const double s = std::clamp((d + 0.5) * src / dst - 0.5, 0.0, src - 1.0);
    const int i = static_cast<int>(s);
    return std::tuple(i, std::min(i + 1, src - 1), s - i);
  };
  Eigen::VectorXd g(n * n);
  for (int y = 0; y < n; ++y) {
    const auto [y0, y1, fy] = coord(y, img.height, n);
    for (int x = 0; x < n; ++x) {
      const auto [x0, x1, fx] = coord(x, img.width, n);
      auto at = [&](int xx, int yy) { return gray[static_cast<std::size_t>(yy) * img.width + xx]; };
      g(y * n + x) = (1 - fy) * ((1 - fx) * at(x0, y0) + fx * at(x1, y0)) + fy * ((1 - fx) * at(x0, y1) + fx * at(x1, y1));
    }
  }
  Rng rng(derive_seed(seed, "toy-image"));
  Eigen::MatrixXd p(dim, n * n);
  for (int r = 0; r < dim; ++r) {
    for (int c = 0; c < n * n; ++c) p(r, c) = (2.0 * rng.uniform() - 1.0) * std::sqrt(3.0 / 256.0);
  }
  return (p * g).array().tanh();
}

double dot(const FloatImage& a, const FloatImage& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

}  // namespace

TEST(ToyImage, BlackPatchEmbedsToZero) {
  ToyProvider toy(1);
  EXPECT_EQ(toy.embed_image(RasterImage::filled(16, 16, 0, 0, 0)), Eigen::VectorXd::Zero(kToyImageDim));
}

TEST(ToyImage, Deterministic) {
  const auto img = random_image(15, 15, 1);
  EXPECT_EQ(ToyProvider(5).embed_image(img), ToyProvider(5).embed_image(img));
  EXPECT_NE(ToyProvider(5).embed_image(img), ToyProvider(6).embed_image(img));
}

TEST(ToyImage, MatchesStepwiseOracle) {
  for (auto [w, h] : std::vector<std::pair<int, int>>{{15, 15}, {16, 16}, {40, 23}, {5, 9}}) {
    const auto img = random_image(w, h, static_cast<std::uint64_t>(w * h));
    const Patch p{"A1", 0, 0, img};
    EXPECT_LT((toy_embed_image(p, 42, 24) - toy_oracle(img, 42, 24)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(ToyImage, JvpMatchesFiniteDifferences) {
  ToyProvider toy(3);
  const auto x = random_float_image(12, 12, 4);
  const auto d = random_float_image(12, 12, 5);
  const double h = 1e-6;
  auto xp = x, xm = x;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    xp.data[i] += h * d.data[i];
    xm.data[i] -= h * d.data[i];
  }
  const Eigen::VectorXd fd = (toy.embed(xp) - toy.embed(xm)) / (2 * h);
  EXPECT_LT((toy.jvp(x, d) - fd).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(ToyImage, VjpIsAdjointOfJvp) {
  ToyProvider toy(3);
  const auto x = random_float_image(21, 13, 6);
  const auto d = random_float_image(21, 13, 7);
  Eigen::VectorXd g = Eigen::VectorXd::LinSpaced(kToyImageDim, -1.0, 1.0);
  EXPECT_NEAR(toy.jvp(x, d).dot(g), dot(toy.vjp(x, g), d), 1e-10);
}

TEST(ToyText, DeterministicAndCaseInsensitive) {
  ToyProvider toy(9);
  EXPECT_EQ(toy.embed_token("the"), toy.embed_token("the"));
  EXPECT_EQ(toy.embed_token("The"), toy.embed_token("the"));
  EXPECT_NE(toy.embed_token("shadow"), toy.embed_token("shadows"));
  EXPECT_EQ(toy.embed_token("blinds").size(), kToyTextDim);
  EXPECT_THROW(toy.embed_token(""), Error);
}

// Hash oracle: FNV-1a of the lowercased bytes seeds the stream.
TEST(ToyText, MatchesHashOracle) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : std::string("shadow")) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  EXPECT_EQ(fnv1a64("shadow"), h);
  Rng rng(derive_seed(9, h));
  Eigen::VectorXd v(kToyTextDim);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  EXPECT_EQ(toy_embed_text("SHADOW", 9, kToyTextDim), v);
}

TEST(Fixture, StoreRoundTripAndMiss) {
  FixtureStore store(3);
  const Digest d = token_digest("window");
  store.insert(d, Eigen::Vector3d(1, -2, 0.5));
  const auto back = FixtureStore::parse(store.serialize());
  EXPECT_EQ(back.lookup(d), Eigen::Vector3d(1, -2, 0.5));
  try {
    back.lookup(token_digest("door"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kNotFound);
  }
}

TEST(Fixture, ShortRecordIsFormatError) {
  FixtureStore store(768);
  store.insert(token_digest("a"), Eigen::VectorXd::Ones(768));
  std::string bytes = store.serialize();
  bytes.resize(bytes.size() - 8);
  EXPECT_THROW(FixtureStore::parse(bytes), Error);
  EXPECT_THROW(FixtureStore::parse("VGFX0...."), Error);
}

TEST(Fixture, WrongDimensionRejected) {
  FixtureStore store(4);
  EXPECT_THROW(store.insert(token_digest("a"), Eigen::VectorXd::Ones(3)), Error);
}

TEST(Fixture, SaveLoad) {
  TempDir dir;
  FixtureStore store(2);
  store.insert(image_digest(random_image(3, 3, 1)), Eigen::Vector2d(0.25, 4));
  store.save(dir / "x.vgfx");
  EXPECT_EQ(FixtureStore::load(dir / "x.vgfx").serialize(), store.serialize());
}

TEST(Fixture, ProviderAnswersFromStores) {
  const auto img = random_image(4, 4, 2);
  FixtureStore images(2), tokens(3);
  images.insert(image_digest(img), Eigen::Vector2d(1, 2));
  tokens.insert(token_digest("fake"), Eigen::Vector3d(3, 4, 5));
  FixtureProvider fp(std::move(images), std::move(tokens));
  EXPECT_EQ(fp.image_dim(), 2);
  EXPECT_EQ(fp.embed_image(img), Eigen::Vector2d(1, 2));
  EXPECT_EQ(fp.embed_token("fake"), Eigen::Vector3d(3, 4, 5));
  EXPECT_THROW(fp.embed_token("real"), Error);
}

namespace {

// Returns fixed vectors for two known images.
class TableProvider final : public EmbeddingProvider {
 public:
  std::map<Digest, EmbeddingVector> table;
  ProviderKind kind() const override { return ProviderKind::kFixture; }
  int image_dim() const override { return 3; }
  int text_dim() const override { return 3; }
  std::string id() const override { return "table"; }
  std::vector<EmbeddingVector> embed_images(std::span<const RasterImage> images) const override {
    std::vector<EmbeddingVector> out;
    for (const auto& i : images) out.push_back(table.at(image_digest(i)));
    return out;
  }
  std::vector<EmbeddingVector> embed_tokens(std::span<const std::string>) const override { return {}; }
};

}  // namespace

TEST(NodeFeature, AveragesPatchAndSpectrum) {
  const auto img = random_image(8, 8, 3);
  const Patch p{"A1", 0, 0, img};
  TableProvider same;
  same.table[image_digest(img)] = Eigen::Vector3d(1, 2, 3);
  same.table[image_digest(dct_visual(img))] = Eigen::Vector3d(1, 2, 3);
  EXPECT_EQ(node_feature(p, same), Eigen::Vector3d(1, 2, 3));
  TableProvider opposite;
  opposite.table[image_digest(img)] = Eigen::Vector3d(1, -2, 3);
  opposite.table[image_digest(dct_visual(img))] = Eigen::Vector3d(-1, 2, -3);
  EXPECT_EQ(node_feature(p, opposite), Eigen::Vector3d::Zero());
}

TEST(NodeFeature, ToyComposition) {
  ToyProvider toy(4);
  const Patch p{"B2", 1, 1, random_image(15, 15, 5)};
  const Eigen::VectorXd expect = 0.5 * (toy_embed_image(p, 4, kToyImageDim) +
                                        toy_embed_image(Patch{"", 0, 0, dct_visual(p.pixels)}, 4, kToyImageDim));
  EXPECT_LT((node_feature(p, toy) - expect).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(NodeFeature, BatchedEqualsSingle) {
  ToyProvider toy(4);
  const auto patches = split_patches(random_image(40, 40, 6), 4);
  const auto batched = node_features(patches, toy);
  for (std::size_t i = 0; i < patches.size(); ++i) EXPECT_EQ(batched[i], node_feature(patches[i], toy));
}
