#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vigtext/dualgraph.hpp"
#include "vigtext/embed.hpp"
#include "vigtext/gnn.hpp"
#include "vigtext/remote.hpp"
#include "vigtext/textgraph.hpp"

namespace vigtext {

// ---------------------------------------------------------------------------
// Metrics

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  void add(int truth, int predicted);
  std::size_t total() const { return tp + fp + tn + fn; }
  bool operator==(const Confusion&) const = default;
};

struct MetricsReport {
  std::string split;
  Confusion counts;
  double accuracy = 0.0;
  double precision = 0.0;  // 0 when tp + fp = 0
  double recall = 0.0;     // 0 when tp + fn = 0
  double f1 = 0.0;         // 0 when precision + recall = 0
  // Threshold checks: accuracy >= threshold, when a threshold applies.
  std::optional<double> threshold;
  std::optional<bool> pass;

  bool operator==(const MetricsReport&) const = default;
};

MetricsReport metrics_from(const Confusion& counts, std::string split = "");
// Ties go to label 0.
int predict(const Eigen::Ref<const Eigen::VectorXd>& logits);

nlohmann::json to_json(const MetricsReport& r);
MetricsReport metrics_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Manifest

inline constexpr std::string_view kManifestFormat = "vigtext-manifest/1";

struct ProviderConfig {
  ProviderKind kind = ProviderKind::kToy;
  std::uint64_t seed = 0;                  // toy
  std::filesystem::path image_fixture;     // fixture
  std::filesystem::path token_fixture;     // fixture
  std::string endpoint;                    // remote
  int image_dim = 768;                     // remote
  int text_dim = 768;                      // remote
};

struct ManifestEntry {
  std::filesystem::path image;  // absolute after loading
  std::optional<std::filesystem::path> explanation_path;
  std::string explanation_text;  // filled from the file when a path is given
  int label = 0;
  std::string split;  // train | val | test | extra:<name>
};

struct DatasetManifest {
  std::filesystem::path root;  // directory relative paths resolve against
  int grid_n = 4;
  ProviderConfig provider;
  std::optional<std::filesystem::path> dependencies;  // JSON-lines dependency fixture
  std::vector<ManifestEntry> entries;

  std::vector<std::size_t> split_indices(std::string_view split) const;
  std::vector<std::string> splits() const;  // in first-appearance order
};

DatasetManifest load_manifest(const std::filesystem::path& path);
DatasetManifest parse_manifest(std::string_view text, const std::filesystem::path& root);
// Paths are written relative to `root` when they live below it.
std::string serialize_manifest(const DatasetManifest& m);
void validate_manifest(const DatasetManifest& m);

std::unique_ptr<EmbeddingProvider> make_provider(const ProviderConfig& config);

// ---------------------------------------------------------------------------
// Synthetic data

struct SynthConfig {
  int count = 400;
  int grid_n = 4;
  std::uint64_t seed = 0;
  double artifact_strength = 40.0;  // checkerboard peak-to-peak, in 8-bit levels
  int size = 60;                    // square image side
  // Probability that a sample's explanation describes the other class,
  // standing in for explainer mistakes.
  double explanation_noise = 0.25;
};

struct SynthSample {
  int index = 0;
  int pair = 0;
  int label = 0;
  std::string split;
  FloatImage base;  // smooth gradient plus noise, [0,1]
  std::vector<std::pair<int, int>> artifact_cells;  // (row, col); fakes only
  RasterImage image;
  std::string explanation;
};

// Peak-to-peak `amplitude` (8-bit levels) checkerboard (a/2) cos(pi (x + y) + phase)
// added to `cells` of an n x n grid on top of `base`.
FloatImage plant_artifact(const FloatImage& base, int grid_n, const std::vector<std::pair<int, int>>& cells,
                          double amplitude, double phase);

std::vector<SynthSample> synth_samples(const SynthConfig& cfg);
// Writes images/, explanations/, dependencies.jsonl and manifest.json under `dir`.
DatasetManifest synth_dataset(const SynthConfig& cfg, const std::filesystem::path& dir);
// Hand-annotated parses of every sentence the generator can emit.
DependencyFixture synth_dependency_fixture();

// ---------------------------------------------------------------------------
// Graph building

struct GraphBuildOptions {
  Adjacency adjacency = Adjacency::kFour;
  std::optional<std::filesystem::path> cache_dir;
  int workers = 1;
};

struct BuiltGraph {
  DualGraph graph;
  std::vector<Diagnostic> diagnostics;
  bool cache_hit = false;
};

class GraphBuilder {
 public:
  GraphBuilder(const EmbeddingProvider& provider, int grid_n, const DependencyFixture* dependencies,
               GraphBuildOptions options = {});

  // Graph for a raster plus raw explanation text. Cache key: (image digest,
  // explanation digest, grid_n, provider id, adjacency).
  BuiltGraph build(const RasterImage& image, const std::string& explanation, std::optional<int> label) const;
  // Parsed, dependency-enriched records for an explanation.
  std::vector<ExplanationRecord> records(const std::string& explanation, std::vector<Diagnostic>* diags) const;
  std::vector<TextGraph> text_graphs(const std::string& explanation, std::vector<Diagnostic>* diags) const;

  // All entries at `indices`, in order, using the worker pool.
  std::vector<BuiltGraph> build_entries(const DatasetManifest& m, const std::vector<std::size_t>& indices) const;
  // Same, with each image passed through `perturb` first.
  std::vector<BuiltGraph> build_entries(const DatasetManifest& m, const std::vector<std::size_t>& indices,
                                        const std::function<RasterImage(const RasterImage&, std::size_t)>& perturb) const;

  const EmbeddingProvider& provider() const { return provider_; }
  int grid_n() const { return grid_n_; }
  const GraphBuildOptions& options() const { return options_; }

 private:
  std::string cache_key(const RasterImage& image, const std::string& explanation) const;

  const EmbeddingProvider& provider_;
  int grid_n_;
  const DependencyFixture* dependencies_;
  std::string dependencies_digest_;  // "none" without a fixture
  GraphBuildOptions options_;
};

// Loads the dependency fixture named by the manifest, if any.
std::optional<DependencyFixture> manifest_dependencies(const DatasetManifest& m);

// ---------------------------------------------------------------------------
// Training and evaluation

struct TrainConfig {
  GnnConfig model;
  int epochs = 40;
  std::uint64_t seed = 0;
  LrSchedule schedule;
  int batch_size = 16;  // graphs stacked block-diagonally per optimizer step
};

struct HistoryRow {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_acc = 0.0;
  double val_f1 = 0.0;
};

struct TrainResult {
  ModelParams initial;
  ModelParams best;
  ModelParams last;
  std::vector<HistoryRow> history;
  int best_epoch = -1;  // -1: no epoch ran, or no validation split
};

// Graphs and labels; graphs must carry labels.
TrainResult train(const std::vector<DualGraph>& train_set, const std::vector<DualGraph>& val_set,
                  const TrainConfig& cfg);
// Mean cross-entropy in inference mode.
double mean_loss(const ModelParams& model, const std::vector<DualGraph>& graphs);
MetricsReport evaluate(const ModelParams& model, const std::vector<DualGraph>& graphs, std::string split = "");

std::string history_csv(const std::vector<HistoryRow>& rows);

// Metrics for every split of a manifest. "extra:" splits are checked against tau_g.
struct EvalReport {
  std::vector<MetricsReport> splits;
};
nlohmann::json to_json(const EvalReport& r);

}  // namespace vigtext
