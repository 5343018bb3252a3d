#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vigtext/dualgraph.hpp"

namespace vigtext {

struct GnnConfig {
  int in_dim = kToyImageDim;
  int hidden = 64;  // per head
  int heads = 2;
  int layers = 3;
  double dropout = 0.2;
  double leaky_slope = 0.2;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;
  int classes = 2;

  int layer_in_dim(int layer) const { return layer == 0 ? in_dim : hidden * heads; }
  int pooled_dim() const { return hidden * heads; }
  bool operator==(const GnnConfig&) const = default;
};

struct GatLayerParams {
  std::vector<Eigen::MatrixXd> weight;     // per head, hidden x in
  std::vector<Eigen::VectorXd> attention;  // per head, 2 * hidden: [source half | neighbor half]
};

struct BatchNormParams {
  Eigen::VectorXd gamma;
  Eigen::VectorXd beta;
  Eigen::VectorXd running_mean;
  Eigen::VectorXd running_var;
};

struct ModelParams {
  GnnConfig config;
  std::vector<GatLayerParams> gat;
  std::vector<BatchNormParams> bn;
  Eigen::MatrixXd fc_weight;  // classes x pooled
  Eigen::VectorXd fc_bias;
  // Bumped by every optimizer step; forward caches remember it.
  std::uint64_t revision = 0;
};

// Glorot-uniform weights from Rng(derive_seed(seed, "gnn-init")); gamma 1,
// beta 0, running mean 0, running variance 1, zero classifier bias.
ModelParams init_model(const GnnConfig& config, std::uint64_t seed);
ModelParams zeros_like(const ModelParams& model);

// Every trainable tensor (GAT weights and attention, batch-norm gamma/beta,
// classifier weight/bias) as a flat view, in a fixed order.
std::vector<std::span<double>> trainable_views(ModelParams& model);
std::vector<std::span<const double>> trainable_views(const ModelParams& model);
std::vector<std::string> trainable_names(const ModelParams& model);
std::size_t trainable_count(const ModelParams& model);

// Several graphs stacked block-diagonally. Node rows of graph b are
// [offsets[b], offsets[b+1]).
struct GraphBatch {
  Eigen::MatrixXd features;
  std::vector<int> nbr_offsets;  // CSR over nodes, self-loop included
  std::vector<int> nbr_index;
  std::vector<int> offsets;

  int node_count() const { return static_cast<int>(features.rows()); }
  int graph_count() const { return static_cast<int>(offsets.size()) - 1; }
};

GraphBatch make_batch(const Eigen::MatrixXd& features, const std::vector<std::pair<int, int>>& edges);
GraphBatch make_batch(const DualGraph& g, int in_dim);
GraphBatch make_batch(std::span<const DualGraph* const> graphs, int in_dim);

struct GatHeadCache {
  Eigen::MatrixXd projected;  // N x hidden
  std::vector<double> pre;    // per CSR slot, before LeakyReLU
  std::vector<double> alpha;  // per CSR slot
};

struct LayerCache {
  Eigen::MatrixXd input;
  std::vector<GatHeadCache> heads;
  Eigen::MatrixXd normalized;  // x-hat
  Eigen::VectorXd batch_mean;
  Eigen::VectorXd batch_var;  // biased
  Eigen::VectorXd inv_std;
  Eigen::MatrixXd activated;  // after ReLU
  Eigen::MatrixXd dropout_mask;  // empty when dropout inactive
};

struct ForwardCache {
  bool training = false;
  std::uint64_t revision = 0;
  std::vector<int> nbr_offsets;
  std::vector<int> nbr_index;
  std::vector<int> offsets;
  std::vector<LayerCache> layers;
  Eigen::MatrixXd pooled;  // B x pooled_dim
};

struct ForwardResult {
  Eigen::MatrixXd logits;  // B x classes
  ForwardCache cache;
};

// x -> [GAT -> batch norm -> ReLU -> dropout] x layers -> mean over every node
// of each graph -> linear. Dropout masks come from rng_seed and only apply
// when training; batch norm uses batch statistics when training.
ForwardResult forward(const ModelParams& model, const GraphBatch& batch, bool training, std::uint64_t rng_seed = 0);
Eigen::Vector2d forward_logits(const ModelParams& model, const DualGraph& g);

// One GAT layer on its own (heads concatenated), self-loops added.
Eigen::MatrixXd gat_layer(const Eigen::MatrixXd& features, const std::vector<std::pair<int, int>>& edges,
                          const GatLayerParams& params, double leaky_slope = 0.2);

double loss_ce(const Eigen::Ref<const Eigen::VectorXd>& logits, int y);
Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits);

struct Gradients {
  ModelParams params;     // running statistics unused (zero)
  Eigen::MatrixXd input;  // d loss / d node features
};

// Reverse pass for an arbitrary upstream gradient on the logits.
Gradients backward_from_logits(const ModelParams& model, const ForwardCache& cache, const Eigen::MatrixXd& dlogits);
// Gradient of the batch-mean cross-entropy.
Gradients backward(const ModelParams& model, const ForwardCache& cache, const Eigen::MatrixXd& logits,
                   std::span<const int> labels);

// Exponential moving update of batch-norm running statistics from a training pass.
void update_running_stats(ModelParams& model, const ForwardCache& cache);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  ModelParams m;
  ModelParams v;

  static AdamState for_model(const ModelParams& model);
};

void adam_step(ModelParams& model, const ModelParams& grads, AdamState& state, double lr);

struct LrSchedule {
  double base = 1e-3;
  int step_epochs = 10;
  double gamma = 0.5;

  double at(int epoch) const;
};

// "vgmd1": magic, u32 LE header length, JSON header (config, tensor names and
// shapes), then every tensor as f64 LE in header order.
std::string encode_checkpoint(const ModelParams& model);
ModelParams decode_checkpoint(std::string_view bytes);
void save_checkpoint(const ModelParams& model, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

bool same_weights(const ModelParams& a, const ModelParams& b);

}  // namespace vigtext
