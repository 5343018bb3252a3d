#include <algorithm>
#include <cmath>
#include <cstdio>

#include "vigtext/digest.hpp"
#include "vigtext/error.hpp"
#include "vigtext/pipeline.hpp"
#include "vigtext/rng.hpp"

namespace vigtext {

namespace {

std::vector<GraphBatch> batches_for(const std::vector<DualGraph>& graphs, int in_dim) {
  std::vector<GraphBatch> out;
  out.reserve(graphs.size());
  for (const auto& g : graphs) {
    if (!g.label) throw Error(Errc::kInvalidArgument, "training and evaluation graphs need labels");
    out.push_back(make_batch(g, in_dim));
  }
  return out;
}

MetricsReport evaluate_batches(const ModelParams& model, const std::vector<GraphBatch>& batches,
                               const std::vector<DualGraph>& graphs, std::string split) {
  Confusion c;
  for (std::size_t i = 0; i < batches.size(); ++i) {
    const auto r = forward(model, batches[i], false);
    c.add(*graphs[i].label, predict(r.logits.row(0).transpose()));
  }
  return metrics_from(c, std::move(split));
}

}  // namespace

TrainResult train(const std::vector<DualGraph>& train_set, const std::vector<DualGraph>& val_set,
                  const TrainConfig& cfg) {
  if (cfg.epochs < 0) throw Error(Errc::kInvalidArgument, "epochs must be >= 0");
  TrainResult result;
  result.initial = init_model(cfg.model, cfg.seed);
  result.best = result.initial;
  result.last = result.initial;
  if (cfg.epochs == 0) return result;
  if (train_set.empty()) throw Error(Errc::kInvalidArgument, "training split is empty");
  if (cfg.batch_size < 1) throw Error(Errc::kInvalidArgument, "batch size must be >= 1");
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  // Canonical order first, so the seeded shuffle does not depend on how the
  // caller happened to list the graphs.
  std::vector<std::pair<std::string, std::size_t>> keyed;
  for (std::size_t i = 0; i < train_set.size(); ++i) keyed.emplace_back(sha256_hex(serialize(train_set[i])), i);
  std::sort(keyed.begin(), keyed.end());
  const auto train_batches = batches_for(train_set, cfg.model.in_dim);
  const auto val_batches = batches_for(val_set, cfg.model.in_dim);
  ModelParams& model = result.last;
  AdamState adam = AdamState::for_model(model);
  const std::uint64_t shuffle_seed = derive_seed(cfg.seed, "shuffle");
  const std::uint64_t dropout_seed = derive_seed(cfg.seed, "dropout");
  std::vector<std::size_t> order(train_batches.size());
  std::uint64_t step = 0;
  double best_f1 = -1.0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = keyed[i].second;
    Rng rng(derive_seed(shuffle_seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    const double lr = cfg.schedule.at(epoch);
    double loss_sum = 0.0;
    for (std::size_t lo = 0; lo < order.size(); lo += batch) {
      const std::size_t hi = std::min(order.size(), lo + batch);
      std::vector<const DualGraph*> members;
      std::vector<int> labels;
      for (std::size_t i = lo; i < hi; ++i) {
        members.push_back(&train_set[order[i]]);
        labels.push_back(*train_set[order[i]].label);
      }
      const GraphBatch stacked =
          members.size() == 1 ? train_batches[order[lo]] : make_batch(members, cfg.model.in_dim);
      const auto fwd = forward(model, stacked, true, derive_seed(dropout_seed, step++));
      for (std::size_t b = 0; b < labels.size(); ++b) {
        const double loss = loss_ce(fwd.logits.row(static_cast<Eigen::Index>(b)).transpose(), labels[b]);
        if (!std::isfinite(loss)) {
          throw Error(Errc::kNumeric, "training loss became non-finite at epoch " + std::to_string(epoch));
        }
        loss_sum += loss;
      }
      const Gradients g = backward(model, fwd.cache, fwd.logits, labels);
      update_running_stats(model, fwd.cache);
      adam_step(model, g.params, adam, lr);
    }

    HistoryRow row;
    row.epoch = epoch;
    row.lr = lr;
    row.train_loss = loss_sum / static_cast<double>(order.size());
    if (!val_batches.empty()) {
      const auto m = evaluate_batches(model, val_batches, val_set, "val");
      row.val_acc = m.accuracy;
      row.val_f1 = m.f1;
      if (m.f1 > best_f1) {
        best_f1 = m.f1;
        result.best = model;
        result.best_epoch = epoch;
      }
    }
    result.history.push_back(row);
  }
  if (val_batches.empty()) result.best = model;
  return result;
}

double mean_loss(const ModelParams& model, const std::vector<DualGraph>& graphs) {
  if (graphs.empty()) throw Error(Errc::kInvalidArgument, "no graphs");
  double sum = 0.0;
  for (const auto& g : graphs) {
    if (!g.label) throw Error(Errc::kInvalidArgument, "graph has no label");
    sum += loss_ce(forward_logits(model, g), *g.label);
  }
  return sum / static_cast<double>(graphs.size());
}

MetricsReport evaluate(const ModelParams& model, const std::vector<DualGraph>& graphs, std::string split) {
  if (graphs.empty()) throw Error(Errc::kInvalidArgument, "split '" + split + "' is empty");
  return evaluate_batches(model, batches_for(graphs, model.config.in_dim), graphs, std::move(split));
}

std::string history_csv(const std::vector<HistoryRow>& rows) {
  std::string out = "epoch,lr,train_loss,val_acc,val_f1\n";
  char line[160];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.lr, r.train_loss, r.val_acc,
                  r.val_f1);
    out += line;
  }
  return out;
}

}  // namespace vigtext
