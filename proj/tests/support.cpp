#include "support.hpp"

#include <cmath>
#include <numbers>
#include <algorithm>
#include <random>

#include "vigtext/rng.hpp"

namespace vigtext::testing {

namespace fs = std::filesystem;

fs::path fixture(const std::string& name) { return fs::path(VIGTEXT_TEST_FIXTURES) / name; }

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  std::random_device rd;
  for (;;) {
    path_ = fs::temp_directory_path() /
            ("vigtext-test-" + std::to_string(rd()) + "-" + std::to_string(counter.fetch_add(1)));
    if (fs::create_directory(path_)) break;
  }
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

RasterImage random_image(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  RasterImage img(w, h);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

FloatImage random_float_image(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  FloatImage img(w, h);
  for (auto& v : img.data) v = rng.uniform();
  return img;
}

Eigen::MatrixXd brute_dct2(const Eigen::MatrixXd& x) {
  const auto rows = x.rows();
  const auto cols = x.cols();
  auto a = [](Eigen::Index k, Eigen::Index n) {
    return k == 0 ? std::sqrt(1.0 / static_cast<double>(n)) : std::sqrt(2.0 / static_cast<double>(n));
  };
  Eigen::MatrixXd out(rows, cols);
  for (Eigen::Index u = 0; u < rows; ++u) {
    for (Eigen::Index v = 0; v < cols; ++v) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
          s += x(i, j) * std::cos(std::numbers::pi * (2.0 * i + 1) * u / (2.0 * rows)) *
               std::cos(std::numbers::pi * (2.0 * j + 1) * v / (2.0 * cols));
        }
      }
      out(u, v) = a(u, rows) * a(v, cols) * s;
    }
  }
  return out;
}

Eigen::MatrixXd dense_gat(const Eigen::MatrixXd& x, const std::vector<std::pair<int, int>>& edges,
                          const GatLayerParams& params, double slope) {
  const auto n = x.rows();
  Eigen::MatrixXd adj = Eigen::MatrixXd::Identity(n, n);
  for (auto [u, v] : edges) adj(u, v) = adj(v, u) = 1.0;
  const auto heads = static_cast<int>(params.weight.size());
  const auto hidden = params.weight[0].rows();
  Eigen::MatrixXd out(n, hidden * heads);
  for (int h = 0; h < heads; ++h) {
    const Eigen::MatrixXd z = x * params.weight[h].transpose();
    const Eigen::VectorXd a1 = params.attention[h].head(hidden);
    const Eigen::VectorXd a2 = params.attention[h].tail(hidden);
    Eigen::MatrixXd e(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        const double s = z.row(i).dot(a1) + z.row(j).dot(a2);
        e(i, j) = adj(i, j) > 0 ? (s > 0 ? s : slope * s) : -std::numeric_limits<double>::infinity();
      }
    }
    Eigen::MatrixXd alpha(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double m = e.row(i).maxCoeff();
      const Eigen::RowVectorXd ex = (e.row(i).array() - m).exp();
      alpha.row(i) = ex / ex.sum();
    }
    out.middleCols(h * hidden, hidden) = alpha * z;
  }
  return out;
}

DualGraph mixed_dual_graph(std::uint64_t seed, int image_dim, int text_dim) {
  const ToyProvider toy(seed, image_dim, text_dim);
  const auto patches = split_patches(random_image(8, 8, seed), 2);
  DualGraph g = build_image_graph(patches, toy);
  ExplanationRecord r;
  r.patch_labels = {"A1", "B2"};
  r.tokens = {"odd", "seam"};
  r.dep_edges = {{1, 0}};
  const std::vector<TextGraph> tgs = {build_text_graph(r, toy)};
  return integrate(std::move(g), tgs);
}

namespace {

double batch_loss(const ModelParams& model, const GraphBatch& batch, const std::vector<int>& labels,
                  std::uint64_t seed) {
  const auto r = forward(model, batch, true, seed);
  double s = 0.0;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    s += loss_ce(r.logits.row(static_cast<Eigen::Index>(b)).transpose(), labels[b]);
  }
  return s / static_cast<double>(labels.size());
}

}  // namespace

GradCheck gradient_check(const ModelParams& model, const GraphBatch& batch, const std::vector<int>& labels,
                         std::uint64_t dropout_seed, double h) {
  const auto fwd = forward(model, batch, true, dropout_seed);
  const Gradients g = backward(model, fwd.cache, fwd.logits, labels);
  GradCheck out;
  auto note = [&](double analytic, double numeric, const std::string& where) {
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    ++out.checked;
    if (rel > out.max_rel_error) {
      out.max_rel_error = rel;
      out.worst = where;
    }
  };
  ModelParams probe = model;
  const auto names = trainable_names(model);
  auto views = trainable_views(probe);
  const auto grads = trainable_views(g.params);
  for (std::size_t t = 0; t < views.size(); ++t) {
    for (std::size_t i = 0; i < views[t].size(); ++i) {
      const double keep = views[t][i];
      views[t][i] = keep + h;
      const double up = batch_loss(probe, batch, labels, dropout_seed);
      views[t][i] = keep - h;
      const double down = batch_loss(probe, batch, labels, dropout_seed);
      views[t][i] = keep;
      note(grads[t][i], (up - down) / (2 * h), names[t] + "[" + std::to_string(i) + "]");
    }
  }
  GraphBatch shifted = batch;
  for (Eigen::Index i = 0; i < batch.features.size(); ++i) {
    const double keep = batch.features.data()[i];
    shifted.features.data()[i] = keep + h;
    const double up = batch_loss(model, shifted, labels, dropout_seed);
    shifted.features.data()[i] = keep - h;
    const double down = batch_loss(model, shifted, labels, dropout_seed);
    shifted.features.data()[i] = keep;
    note(g.input.data()[i], (up - down) / (2 * h), "input[" + std::to_string(i) + "]");
  }
  return out;
}

std::vector<EmbeddingVector> CountingProvider::embed_images(std::span<const RasterImage> images) const {
  calls_.fetch_add(1);
  return inner_.embed_images(images);
}

std::vector<EmbeddingVector> CountingProvider::embed_tokens(std::span<const std::string> tokens) const {
  calls_.fetch_add(1);
  return inner_.embed_tokens(tokens);
}

std::vector<DualGraph> SmallWorld::graphs(const std::string& split) const {
  std::vector<DualGraph> out;
  for (auto& b : builder->build_entries(manifest, manifest.split_indices(split))) out.push_back(std::move(b.graph));
  return out;
}

DifferentiableGraphBuilder SmallWorld::differentiable(const std::string& explanation) const {
  return DifferentiableGraphBuilder(*toy, manifest.grid_n, builder->text_graphs(explanation, nullptr));
}

const SmallWorld& small_world() {
  static const SmallWorld world = [] {
    SmallWorld w;
    w.dir = std::make_unique<TempDir>();
    w.synth.count = 160;
    w.synth.seed = 11;
    w.manifest = synth_dataset(w.synth, w.dir->path() / "data");
    if (auto d = manifest_dependencies(w.manifest)) w.deps = std::make_unique<DependencyFixture>(std::move(*d));
    w.toy = std::make_unique<ToyProvider>(w.manifest.provider.seed);
    GraphBuildOptions opts;
    opts.workers = 4;
    w.builder = std::make_unique<GraphBuilder>(*w.toy, w.manifest.grid_n, w.deps.get(), opts);
    w.train = w.graphs("train");
    w.val = w.graphs("val");
    w.test = w.graphs("test");
    TrainConfig tc;
    tc.epochs = 30;
    tc.seed = 3;
    w.trained = train(w.train, w.val, tc);
    return w;
  }();
  return world;
}

}  // namespace vigtext::testing
