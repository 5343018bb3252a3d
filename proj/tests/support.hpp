#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vigtext/attacks.hpp"
#include "vigtext/pipeline.hpp"

namespace vigtext::testing {

std::filesystem::path fixture(const std::string& name);

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

RasterImage random_image(int w, int h, std::uint64_t seed);
FloatImage random_float_image(int w, int h, std::uint64_t seed);

// Straight evaluation of the orthonormal DCT-II definition, four nested loops.
Eigen::MatrixXd brute_dct2(const Eigen::MatrixXd& x);

// Dense GAT reference: adjacency matrix with self-loops, masked softmax per row.
Eigen::MatrixXd dense_gat(const Eigen::MatrixXd& x, const std::vector<std::pair<int, int>>& edges,
                          const GatLayerParams& params, double slope);

// 2x2 patch grid plus one two-token record: six nodes of both kinds.
DualGraph mixed_dual_graph(std::uint64_t seed, int image_dim, int text_dim);

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // parameter name and index of the worst entry
};

// Central differences (step h) of the batch-mean cross-entropy in training
// mode against backward(), over every trainable entry and every input
// feature. Relative error uses max(|a|, |b|, 1e-6) as the denominator.
GradCheck gradient_check(const ModelParams& model, const GraphBatch& batch, const std::vector<int>& labels,
                         std::uint64_t dropout_seed, double h = 1e-5);

// Forwards to another provider while counting calls.
class CountingProvider final : public EmbeddingProvider {
 public:
  explicit CountingProvider(const EmbeddingProvider& inner) : inner_(inner) {}
  ProviderKind kind() const override { return inner_.kind(); }
  int image_dim() const override { return inner_.image_dim(); }
  int text_dim() const override { return inner_.text_dim(); }
  std::string id() const override { return inner_.id(); }
  std::vector<EmbeddingVector> embed_images(std::span<const RasterImage> images) const override;
  std::vector<EmbeddingVector> embed_tokens(std::span<const std::string> tokens) const override;
  std::size_t calls() const { return calls_.load(); }

 private:
  const EmbeddingProvider& inner_;
  mutable std::atomic<std::size_t> calls_{0};
};

// Small synthetic dataset with built graphs and a detector trained on it,
// shared by the tests of one binary.
struct SmallWorld {
  std::unique_ptr<TempDir> dir;
  SynthConfig synth;
  DatasetManifest manifest;
  std::unique_ptr<DependencyFixture> deps;
  std::unique_ptr<ToyProvider> toy;
  std::unique_ptr<GraphBuilder> builder;
  std::vector<DualGraph> train, val, test;
  TrainResult trained;

  std::vector<DualGraph> graphs(const std::string& split) const;
  DifferentiableGraphBuilder differentiable(const std::string& explanation) const;
};

const SmallWorld& small_world();

}  // namespace vigtext::testing
