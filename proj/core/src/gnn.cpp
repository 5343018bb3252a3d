#include "vigtext/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "vigtext/error.hpp"
#include "vigtext/rng.hpp"

namespace vigtext {

namespace {

void glorot(Eigen::MatrixXd& m, Rng& rng, double fan_in, double fan_out) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-limit, limit);
  }
}

void glorot(Eigen::VectorXd& v, Rng& rng, double fan_in, double fan_out) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(-limit, limit);
}

void check_config(const GnnConfig& c) {
  if (c.in_dim < 1 || c.hidden < 1 || c.heads < 1 || c.layers < 1 || c.classes < 2) {
    throw Error(Errc::kInvalidArgument, "GNN dimensions must be positive (classes >= 2)");
  }
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw Error(Errc::kInvalidArgument, "dropout must be in [0, 1)");
}

}  // namespace

ModelParams init_model(const GnnConfig& config, std::uint64_t seed) {
  check_config(config);
  Rng rng(derive_seed(seed, "gnn-init"));
  ModelParams m;
  m.config = config;
  for (int l = 0; l < config.layers; ++l) {
    GatLayerParams layer;
    const int in = config.layer_in_dim(l);
    for (int h = 0; h < config.heads; ++h) {
      Eigen::MatrixXd w(config.hidden, in);
      glorot(w, rng, in, config.hidden);
      Eigen::VectorXd a(2 * config.hidden);
      glorot(a, rng, config.hidden, 1);
      layer.weight.push_back(std::move(w));
      layer.attention.push_back(std::move(a));
    }
    m.gat.push_back(std::move(layer));
    const int width = config.hidden * config.heads;
    m.bn.push_back({Eigen::VectorXd::Ones(width), Eigen::VectorXd::Zero(width), Eigen::VectorXd::Zero(width),
                    Eigen::VectorXd::Ones(width)});
  }
  m.fc_weight.resize(config.classes, config.pooled_dim());
  glorot(m.fc_weight, rng, config.pooled_dim(), config.classes);
  m.fc_bias = Eigen::VectorXd::Zero(config.classes);
  return m;
}

ModelParams zeros_like(const ModelParams& model) {
  ModelParams z = model;
  for (auto& layer : z.gat) {
    for (auto& w : layer.weight) w.setZero();
    for (auto& a : layer.attention) a.setZero();
  }
  for (auto& bn : z.bn) {
    bn.gamma.setZero();
    bn.beta.setZero();
    bn.running_mean.setZero();
    bn.running_var.setZero();
  }
  z.fc_weight.setZero();
  z.fc_bias.setZero();
  return z;
}

namespace {

template <typename Model, typename Span>
std::vector<Span> views(Model& model) {
  std::vector<Span> out;
  auto add = [&](auto& t) { out.emplace_back(t.data(), static_cast<std::size_t>(t.size())); };
  for (auto& layer : model.gat) {
    for (std::size_t h = 0; h < layer.weight.size(); ++h) {
      add(layer.weight[h]);
      add(layer.attention[h]);
    }
  }
  for (auto& bn : model.bn) {
    add(bn.gamma);
    add(bn.beta);
  }
  add(model.fc_weight);
  add(model.fc_bias);
  return out;
}

}  // namespace

std::vector<std::span<double>> trainable_views(ModelParams& model) {
  return views<ModelParams, std::span<double>>(model);
}

std::vector<std::span<const double>> trainable_views(const ModelParams& model) {
  return views<const ModelParams, std::span<const double>>(model);
}

std::vector<std::string> trainable_names(const ModelParams& model) {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < model.gat.size(); ++l) {
    for (std::size_t h = 0; h < model.gat[l].weight.size(); ++h) {
      names.push_back("gat" + std::to_string(l) + ".head" + std::to_string(h) + ".weight");
      names.push_back("gat" + std::to_string(l) + ".head" + std::to_string(h) + ".attention");
    }
  }
  for (std::size_t l = 0; l < model.bn.size(); ++l) {
    names.push_back("bn" + std::to_string(l) + ".gamma");
    names.push_back("bn" + std::to_string(l) + ".beta");
  }
  names.push_back("fc.weight");
  names.push_back("fc.bias");
  return names;
}

std::size_t trainable_count(const ModelParams& model) {
  std::size_t n = 0;
  for (const auto& v : trainable_views(model)) n += v.size();
  return n;
}

// ---------------------------------------------------------------------------
// Batching

namespace {

void build_csr(int n, const std::vector<std::pair<int, int>>& edges, std::vector<int>& offsets,
               std::vector<int>& index) {
  std::vector<std::set<int>> nbrs(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) nbrs[static_cast<std::size_t>(i)].insert(i);
  for (const auto& [u, v] : edges) {
    if (u < 0 || v < 0 || u >= n || v >= n) throw Error(Errc::kInvalidArgument, "edge index out of range");
    nbrs[static_cast<std::size_t>(u)].insert(v);
    nbrs[static_cast<std::size_t>(v)].insert(u);
  }
  offsets.assign(1, 0);
  index.clear();
  for (const auto& s : nbrs) {
    index.insert(index.end(), s.begin(), s.end());
    offsets.push_back(static_cast<int>(index.size()));
  }
}

}  // namespace

GraphBatch make_batch(const Eigen::MatrixXd& features, const std::vector<std::pair<int, int>>& edges) {
  GraphBatch b;
  b.features = features;
  build_csr(static_cast<int>(features.rows()), edges, b.nbr_offsets, b.nbr_index);
  b.offsets = {0, static_cast<int>(features.rows())};
  return b;
}

GraphBatch make_batch(const DualGraph& g, int in_dim) {
  const DualGraph* ptr = &g;
  return make_batch(std::span<const DualGraph* const>(&ptr, 1), in_dim);
}

GraphBatch make_batch(std::span<const DualGraph* const> graphs, int in_dim) {
  int total = 0;
  for (const auto* g : graphs) total += static_cast<int>(g->nodes.size());
  Eigen::MatrixXd x(total, in_dim);
  std::vector<std::pair<int, int>> edges;
  std::vector<int> offsets{0};
  int base = 0;
  for (const auto* g : graphs) {
    if (g->nodes.empty()) throw Error(Errc::kInvalidArgument, "cannot batch an empty graph");
    x.middleRows(base, static_cast<Eigen::Index>(g->nodes.size())) = feature_matrix(*g, in_dim);
    for (const auto& e : g->edges) edges.emplace_back(base + e.u, base + e.v);
    base += static_cast<int>(g->nodes.size());
    offsets.push_back(base);
  }
  GraphBatch b;
  b.features = std::move(x);
  build_csr(total, edges, b.nbr_offsets, b.nbr_index);
  b.offsets = std::move(offsets);
  return b;
}

// ---------------------------------------------------------------------------
// Forward

namespace {

Eigen::MatrixXd gat_forward(const Eigen::MatrixXd& x, const GatLayerParams& params, const std::vector<int>& off,
                            const std::vector<int>& idx, double slope, std::vector<GatHeadCache>* cache) {
  const Eigen::Index n = x.rows();
  const int heads = static_cast<int>(params.weight.size());
  const Eigen::Index hidden = params.weight.front().rows();
  if (x.cols() != params.weight.front().cols()) {
    throw Error(Errc::kDimensionMismatch, "GAT input has " + std::to_string(x.cols()) + " columns, layer expects " +
                                              std::to_string(params.weight.front().cols()));
  }
  Eigen::MatrixXd out(n, hidden * heads);
  for (int h = 0; h < heads; ++h) {
    GatHeadCache hc;
    hc.projected = x * params.weight[static_cast<std::size_t>(h)].transpose();
    const Eigen::VectorXd& a = params.attention[static_cast<std::size_t>(h)];
    const Eigen::VectorXd src = hc.projected * a.head(hidden);
    const Eigen::VectorXd dst = hc.projected * a.tail(hidden);
    hc.pre.resize(idx.size());
    hc.alpha.resize(idx.size());
    auto block = out.middleCols(h * hidden, hidden);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int lo = off[static_cast<std::size_t>(i)];
      const int hi = off[static_cast<std::size_t>(i) + 1];
      double mx = -INFINITY;
      for (int s = lo; s < hi; ++s) {
        const double p = src(i) + dst(idx[static_cast<std::size_t>(s)]);
        hc.pre[static_cast<std::size_t>(s)] = p;
        const double e = p > 0.0 ? p : slope * p;
        hc.alpha[static_cast<std::size_t>(s)] = e;
        mx = std::max(mx, e);
      }
      double z = 0.0;
      for (int s = lo; s < hi; ++s) {
        double& w = hc.alpha[static_cast<std::size_t>(s)];
        w = std::exp(w - mx);
        z += w;
      }
      Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(hidden);
      for (int s = lo; s < hi; ++s) {
        double& w = hc.alpha[static_cast<std::size_t>(s)];
        w /= z;
        acc += w * hc.projected.row(idx[static_cast<std::size_t>(s)]);
      }
      block.row(i) = acc;
    }
    if (cache) cache->push_back(std::move(hc));
  }
  return out;
}

}  // namespace

Eigen::MatrixXd gat_layer(const Eigen::MatrixXd& features, const std::vector<std::pair<int, int>>& edges,
                          const GatLayerParams& params, double leaky_slope) {
  std::vector<int> off, idx;
  build_csr(static_cast<int>(features.rows()), edges, off, idx);
  return gat_forward(features, params, off, idx, leaky_slope, nullptr);
}

ForwardResult forward(const ModelParams& model, const GraphBatch& batch, bool training, std::uint64_t rng_seed) {
  const GnnConfig& cfg = model.config;
  if (batch.node_count() == 0 || batch.graph_count() < 1) throw Error(Errc::kInvalidArgument, "empty graph");
  if (batch.features.cols() != cfg.in_dim) {
    throw Error(Errc::kDimensionMismatch, "node features have " + std::to_string(batch.features.cols()) +
                                              " columns, model expects " + std::to_string(cfg.in_dim));
  }
  ForwardResult result;
  ForwardCache& cache = result.cache;
  cache.training = training;
  cache.revision = model.revision;
  cache.nbr_offsets = batch.nbr_offsets;
  cache.nbr_index = batch.nbr_index;
  cache.offsets = batch.offsets;

  const Eigen::Index n = batch.node_count();
  Eigen::MatrixXd x = batch.features;
  for (int l = 0; l < cfg.layers; ++l) {
    LayerCache lc;
    lc.input = x;
    const Eigen::MatrixXd z =
        gat_forward(x, model.gat[static_cast<std::size_t>(l)], batch.nbr_offsets, batch.nbr_index, cfg.leaky_slope,
                    &lc.heads);
    const BatchNormParams& bn = model.bn[static_cast<std::size_t>(l)];
    if (training) {
      lc.batch_mean = z.colwise().mean().transpose();
      const Eigen::MatrixXd centered = z.rowwise() - lc.batch_mean.transpose();
      lc.batch_var = centered.colwise().squaredNorm().transpose() / static_cast<double>(n);
      lc.inv_std = (lc.batch_var.array() + cfg.bn_eps).rsqrt().matrix();
      lc.normalized = centered * lc.inv_std.asDiagonal();
    } else {
      lc.inv_std = (bn.running_var.array() + cfg.bn_eps).rsqrt().matrix();
      lc.normalized = (z.rowwise() - bn.running_mean.transpose()) * lc.inv_std.asDiagonal();
    }
    Eigen::MatrixXd y = (lc.normalized * bn.gamma.asDiagonal()).rowwise() + bn.beta.transpose();
    lc.activated = y.cwiseMax(0.0);
    x = lc.activated;
    if (training && cfg.dropout > 0.0) {
      Rng rng(derive_seed(rng_seed, static_cast<std::uint64_t>(l)));
      const double keep = 1.0 - cfg.dropout;
      lc.dropout_mask.resize(x.rows(), x.cols());
      for (Eigen::Index r = 0; r < x.rows(); ++r) {
        for (Eigen::Index c = 0; c < x.cols(); ++c) lc.dropout_mask(r, c) = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
      }
      x = x.cwiseProduct(lc.dropout_mask);
    }
    cache.layers.push_back(std::move(lc));
  }

  const int graphs = batch.graph_count();
  cache.pooled.resize(graphs, x.cols());
  for (int b = 0; b < graphs; ++b) {
    const int lo = batch.offsets[static_cast<std::size_t>(b)];
    const int hi = batch.offsets[static_cast<std::size_t>(b) + 1];
    if (hi <= lo) throw Error(Errc::kInvalidArgument, "empty graph in batch");
    cache.pooled.row(b) = x.middleRows(lo, hi - lo).colwise().mean();
  }
  result.logits = (cache.pooled * model.fc_weight.transpose()).rowwise() + model.fc_bias.transpose();
  return result;
}

Eigen::Vector2d forward_logits(const ModelParams& model, const DualGraph& g) {
  const auto r = forward(model, make_batch(g, model.config.in_dim), false);
  return r.logits.row(0).transpose().head<2>();
}

Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  const double mx = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - mx).exp().matrix();
  return e / e.sum();
}

double loss_ce(const Eigen::Ref<const Eigen::VectorXd>& logits, int y) {
  if (y < 0 || y >= logits.size()) throw Error(Errc::kInvalidArgument, "label out of range");
  const double mx = logits.maxCoeff();
  return mx + std::log((logits.array() - mx).exp().sum()) - logits(y);
}

// ---------------------------------------------------------------------------
// Backward

Gradients backward_from_logits(const ModelParams& model, const ForwardCache& cache, const Eigen::MatrixXd& dlogits) {
  const GnnConfig& cfg = model.config;
  if (cache.revision != model.revision || cache.layers.size() != static_cast<std::size_t>(cfg.layers) ||
      cache.pooled.rows() != dlogits.rows()) {
    throw Error(Errc::kStaleCache, "forward cache does not match this model state");
  }
  Gradients grads{zeros_like(model), {}};
  ModelParams& g = grads.params;
  g.revision = model.revision;

  g.fc_weight = dlogits.transpose() * cache.pooled;
  g.fc_bias = dlogits.colwise().sum().transpose();
  const Eigen::MatrixXd dpooled = dlogits * model.fc_weight;

  const Eigen::Index n = cache.layers.front().input.rows();
  Eigen::MatrixXd dx(n, cfg.pooled_dim());
  for (int b = 0; b + 1 < static_cast<int>(cache.offsets.size()); ++b) {
    const int lo = cache.offsets[static_cast<std::size_t>(b)];
    const int hi = cache.offsets[static_cast<std::size_t>(b) + 1];
    dx.middleRows(lo, hi - lo).rowwise() = dpooled.row(b) / static_cast<double>(hi - lo);
  }

  const auto& off = cache.nbr_offsets;
  const auto& idx = cache.nbr_index;
  for (int l = cfg.layers - 1; l >= 0; --l) {
    const LayerCache& lc = cache.layers[static_cast<std::size_t>(l)];
    const BatchNormParams& bn = model.bn[static_cast<std::size_t>(l)];
    BatchNormParams& gbn = g.bn[static_cast<std::size_t>(l)];

    Eigen::MatrixXd dact = lc.dropout_mask.size() ? dx.cwiseProduct(lc.dropout_mask) : dx;
    const Eigen::MatrixXd dy = (lc.activated.array() > 0.0).select(dact, 0.0);
    gbn.gamma = (dy.cwiseProduct(lc.normalized)).colwise().sum().transpose();
    gbn.beta = dy.colwise().sum().transpose();
    const Eigen::MatrixXd dxhat = dy * bn.gamma.asDiagonal();
    Eigen::MatrixXd dz;
    if (cache.training) {
      const double nn = static_cast<double>(n);
      const Eigen::RowVectorXd sum_d = dxhat.colwise().sum();
      const Eigen::RowVectorXd sum_dx = dxhat.cwiseProduct(lc.normalized).colwise().sum();
      dz = ((nn * dxhat).rowwise() - sum_d - (lc.normalized * sum_dx.asDiagonal())) *
           (lc.inv_std / nn).asDiagonal();
    } else {
      dz = dxhat * lc.inv_std.asDiagonal();
    }

    const GatLayerParams& gat = model.gat[static_cast<std::size_t>(l)];
    GatLayerParams& ggat = g.gat[static_cast<std::size_t>(l)];
    const Eigen::Index hidden = cfg.hidden;
    Eigen::MatrixXd dinput = Eigen::MatrixXd::Zero(lc.input.rows(), lc.input.cols());
    for (int h = 0; h < cfg.heads; ++h) {
      const GatHeadCache& hc = lc.heads[static_cast<std::size_t>(h)];
      const Eigen::VectorXd& a = gat.attention[static_cast<std::size_t>(h)];
      const auto dout = dz.middleCols(h * hidden, hidden);
      Eigen::MatrixXd dproj = Eigen::MatrixXd::Zero(n, hidden);
      Eigen::VectorXd dsrc = Eigen::VectorXd::Zero(n);
      Eigen::VectorXd ddst = Eigen::VectorXd::Zero(n);
      std::vector<double> dalpha;
      for (Eigen::Index i = 0; i < n; ++i) {
        const int lo = off[static_cast<std::size_t>(i)];
        const int hi = off[static_cast<std::size_t>(i) + 1];
        dalpha.assign(static_cast<std::size_t>(hi - lo), 0.0);
        double weighted = 0.0;
        for (int s = lo; s < hi; ++s) {
          const int j = idx[static_cast<std::size_t>(s)];
          const double al = hc.alpha[static_cast<std::size_t>(s)];
          dproj.row(j) += al * dout.row(i);
          const double da = dout.row(i).dot(hc.projected.row(j));
          dalpha[static_cast<std::size_t>(s - lo)] = da;
          weighted += al * da;
        }
        for (int s = lo; s < hi; ++s) {
          const int j = idx[static_cast<std::size_t>(s)];
          const double al = hc.alpha[static_cast<std::size_t>(s)];
          const double de = al * (dalpha[static_cast<std::size_t>(s - lo)] - weighted);
          const double dpre = hc.pre[static_cast<std::size_t>(s)] > 0.0 ? de : cfg.leaky_slope * de;
          dsrc(i) += dpre;
          ddst(j) += dpre;
        }
      }
      Eigen::VectorXd& ga = ggat.attention[static_cast<std::size_t>(h)];
      ga.head(hidden) = hc.projected.transpose() * dsrc;
      ga.tail(hidden) = hc.projected.transpose() * ddst;
      dproj += dsrc * a.head(hidden).transpose() + ddst * a.tail(hidden).transpose();
      ggat.weight[static_cast<std::size_t>(h)] = dproj.transpose() * lc.input;
      dinput += dproj * gat.weight[static_cast<std::size_t>(h)];
    }
    dx = std::move(dinput);
  }
  grads.input = std::move(dx);
  return grads;
}

Gradients backward(const ModelParams& model, const ForwardCache& cache, const Eigen::MatrixXd& logits,
                   std::span<const int> labels) {
  if (labels.size() != static_cast<std::size_t>(logits.rows())) {
    throw Error(Errc::kInvalidArgument, "one label per graph required");
  }
  Eigen::MatrixXd dlogits(logits.rows(), logits.cols());
  const double scale = 1.0 / static_cast<double>(logits.rows());
  for (Eigen::Index b = 0; b < logits.rows(); ++b) {
    Eigen::VectorXd p = softmax(logits.row(b).transpose());
    p(labels[static_cast<std::size_t>(b)]) -= 1.0;
    dlogits.row(b) = scale * p.transpose();
  }
  return backward_from_logits(model, cache, dlogits);
}

void update_running_stats(ModelParams& model, const ForwardCache& cache) {
  if (!cache.training) return;
  const double m = model.config.bn_momentum;
  for (std::size_t l = 0; l < cache.layers.size(); ++l) {
    const LayerCache& lc = cache.layers[l];
    const double n = static_cast<double>(lc.input.rows());
    const Eigen::VectorXd unbiased = n > 1.0 ? Eigen::VectorXd(lc.batch_var * (n / (n - 1.0))) : lc.batch_var;
    BatchNormParams& bn = model.bn[l];
    bn.running_mean = (1.0 - m) * bn.running_mean + m * lc.batch_mean;
    bn.running_var = (1.0 - m) * bn.running_var + m * unbiased;
  }
}

// ---------------------------------------------------------------------------
// Optimizer

AdamState AdamState::for_model(const ModelParams& model) {
  AdamState s;
  s.m = zeros_like(model);
  s.v = zeros_like(model);
  return s;
}

void adam_step(ModelParams& model, const ModelParams& grads, AdamState& state, double lr) {
  auto p = trainable_views(model);
  const auto g = trainable_views(grads);
  auto m = trainable_views(state.m);
  auto v = trainable_views(state.v);
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
    throw Error(Errc::kDimensionMismatch, "optimizer tensors do not match the model");
  }
  for (std::size_t t = 0; t < p.size(); ++t) {
    if (g[t].size() != p[t].size() || m[t].size() != p[t].size() || v[t].size() != p[t].size()) {
      throw Error(Errc::kDimensionMismatch, "optimizer tensor shape mismatch");
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t t = 0; t < p.size(); ++t) {
    for (std::size_t i = 0; i < p[t].size(); ++i) {
      const double gi = g[t][i];
      m[t][i] = state.beta1 * m[t][i] + (1.0 - state.beta1) * gi;
      v[t][i] = state.beta2 * v[t][i] + (1.0 - state.beta2) * gi * gi;
      const double mhat = m[t][i] / bc1;
      const double vhat = v[t][i] / bc2;
      p[t][i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
  ++model.revision;
}

double LrSchedule::at(int epoch) const {
  if (epoch < 0) throw Error(Errc::kInvalidArgument, "epoch must be >= 0");
  if (step_epochs <= 0) return base;
  return base * std::pow(gamma, epoch / step_epochs);
}

bool same_weights(const ModelParams& a, const ModelParams& b) {
  if (!(a.config == b.config)) return false;
  const auto va = trainable_views(a);
  const auto vb = trainable_views(b);
  for (std::size_t t = 0; t < va.size(); ++t) {
    if (!std::equal(va[t].begin(), va[t].end(), vb[t].begin(), vb[t].end())) return false;
  }
  for (std::size_t l = 0; l < a.bn.size(); ++l) {
    if (a.bn[l].running_mean != b.bn[l].running_mean || a.bn[l].running_var != b.bn[l].running_var) return false;
  }
  return true;
}

}  // namespace vigtext
