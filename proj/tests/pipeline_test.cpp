#include <gtest/gtest.h>

#include <algorithm>

#include "support.hpp"
#include "vigtext/error.hpp"
#include "vigtext/io.hpp"

using namespace vigtext;
using vigtext::testing::brute_dct2;
using vigtext::testing::CountingProvider;
using vigtext::testing::small_world;
using vigtext::testing::TempDir;
namespace fs = std::filesystem;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::kInvalidArgument;
}

std::string tree_digest(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir));
  }
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) all += f.generic_string() + "\n" + sha256_hex(read_file(dir / f)) + "\n";
  return all;
}

// Two tiny images and a manifest around them.
struct MiniSet {
  TempDir dir;
  MiniSet() {
    save_ppm(RasterImage::filled(8, 8, 10, 20, 30), dir / "a.ppm");
    save_ppm(RasterImage::filled(8, 8, 200, 20, 30), dir / "b.ppm");
    write_file_atomic(dir / "b.txt", "{A1}: odd glow");
  }
  std::string manifest(const std::string& entries) const {
    return R"({"format": "vigtext-manifest/1", "grid_n": 2, "provider": {"kind": "toy", "seed": 3}, "entries": [)" +
           entries + "]}";
  }
};

}  // namespace

TEST(Metrics, PerfectPredictions) {
  Confusion c;
  for (int i = 0; i < 5; ++i) c.add(i % 2, i % 2);
  const auto m = metrics_from(c);
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.precision, 1.0);
  EXPECT_EQ(m.recall, 1.0);
  EXPECT_EQ(m.f1, 1.0);
}

TEST(Metrics, WorkedExample) {
  const auto m = metrics_from({.tp = 50, .fp = 10, .tn = 35, .fn = 5});
  EXPECT_NEAR(m.precision, 50.0 / 60.0, 1e-15);
  EXPECT_NEAR(m.recall, 50.0 / 55.0, 1e-15);
  EXPECT_NEAR(m.accuracy, 0.85, 1e-15);
  EXPECT_NEAR(m.f1, 2.0 * 50 / (2.0 * 50 + 10 + 5), 1e-15);
  EXPECT_NEAR(m.precision, 0.833333, 5e-7);
  EXPECT_NEAR(m.recall, 0.909091, 5e-7);
  EXPECT_NEAR(m.f1, 0.869565, 5e-7);
}

TEST(Metrics, EmptyPositivesAreZero) {
  const auto m = metrics_from({.tp = 0, .fp = 0, .tn = 7, .fn = 0});
  EXPECT_EQ(m.precision, 0.0);
  EXPECT_EQ(m.recall, 0.0);
  EXPECT_EQ(m.f1, 0.0);
  EXPECT_EQ(m.accuracy, 1.0);
}

TEST(Metrics, JsonRoundTripAndPredict) {
  auto m = metrics_from({.tp = 3, .fp = 1, .tn = 2, .fn = 4}, "test");
  m.threshold = 0.5;
  m.pass = true;
  EXPECT_EQ(metrics_from_json(to_json(m)), m);
  EXPECT_EQ(predict(Eigen::Vector2d(0.1, 0.1)), 0);
  EXPECT_EQ(predict(Eigen::Vector2d(0.1, 0.2)), 1);
}

TEST(Manifest, MinimalTwoEntries) {
  MiniSet s;
  const auto m = parse_manifest(s.manifest(R"({"image": "a.ppm", "label": 0, "split": "train"},
      {"image": "b.ppm", "label": 1, "split": "test", "explanation": "b.txt"})"),
                                s.dir.path());
  EXPECT_EQ(m.split_indices("train"), std::vector<std::size_t>{0});
  EXPECT_EQ(m.split_indices("test"), std::vector<std::size_t>{1});
  EXPECT_EQ(m.entries[1].explanation_text, "{A1}: odd glow");
  EXPECT_EQ(m.entries[0].image, s.dir / "a.ppm");
  const auto again = parse_manifest(serialize_manifest(m), s.dir.path());
  EXPECT_EQ(serialize_manifest(again), serialize_manifest(m));
}

TEST(Manifest, Errors) {
  MiniSet s;
  auto parse = [&](const std::string& entries) { return parse_manifest(s.manifest(entries), s.dir.path()); };
  EXPECT_EQ(code_of([&] { parse(R"({"image": "a.ppm", "label": 2, "split": "train"})"); }), Errc::kSchema);
  EXPECT_EQ(code_of([&] {
              parse(R"({"image": "a.ppm", "label": 0, "split": "train"}, {"image": "a.ppm", "label": 1, "split": "test"})");
            }),
            Errc::kSchema);
  EXPECT_EQ(code_of([&] { parse(R"({"image": "a.ppm", "label": 0, "split": "holdout"})"); }), Errc::kSchema);
  EXPECT_EQ(code_of([&] { parse(R"({"image": "zzz.ppm", "label": 0, "split": "train"})"); }), Errc::kNotFound);
  EXPECT_EQ(code_of([&] { parse(R"({"image": "a.ppm", "label": 0, "split": "train", "explanation": "no.txt"})"); }),
            Errc::kNotFound);
  EXPECT_EQ(code_of([&] { parse_manifest(R"({"format": "vigtext-manifest/2", "entries": []})", s.dir.path()); }),
            Errc::kVersion);
  EXPECT_EQ(code_of([&] { parse_manifest("[1,", s.dir.path()); }), Errc::kMalformed);
  EXPECT_EQ(code_of([&] { load_manifest(s.dir / "nothing.json"); }), Errc::kNotFound);
}

TEST(Synth, SameSeedSameBytes) {
  TempDir a, b;
  const SynthConfig cfg{.count = 20, .seed = 4};
  synth_dataset(cfg, a.path());
  synth_dataset(cfg, b.path());
  EXPECT_EQ(tree_digest(a.path()), tree_digest(b.path()));
  const auto m = load_manifest(a / "manifest.json");
  EXPECT_EQ(m.entries.size(), 20u);
  EXPECT_EQ(m.split_indices("train").size(), 16u);
  EXPECT_EQ(m.split_indices("val").size(), 2u);
  EXPECT_EQ(m.split_indices("test").size(), 2u);
}

TEST(Synth, ZeroStrengthTwinsAreIdentical) {
  const auto samples = synth_samples({.count = 20, .seed = 5, .artifact_strength = 0.0});
  for (const auto& f : samples) {
    if (f.label != 1) continue;
    const auto twin = std::find_if(samples.begin(), samples.end(),
                                   [&](const SynthSample& s) { return s.pair == f.pair && s.label == 0; });
    ASSERT_NE(twin, samples.end());
    EXPECT_EQ(twin->image, f.image);
  }
}

// Mean |DCT| over the upper half of the frequency plane, luma channel.
TEST(Synth, ArtifactRaisesHighBandEnergy) {
  const SynthConfig cfg{.count = 40, .seed = 6};
  const auto samples = synth_samples(cfg);
  auto band = [](const RasterImage& patch) {
    Eigen::MatrixXd y(patch.height, patch.width);
    for (int r = 0; r < patch.height; ++r) {
      for (int c = 0; c < patch.width; ++c) {
        y(r, c) = 0.299 * patch.at(c, r, 0) + 0.587 * patch.at(c, r, 1) + 0.114 * patch.at(c, r, 2);
      }
    }
    const auto X = brute_dct2(y);
    double s = 0.0;
    int n = 0;
    for (int u = 0; u < X.rows(); ++u) {
      for (int v = 0; v < X.cols(); ++v) {
        if (u + v >= (X.rows() + X.cols()) / 2) {
          s += std::abs(X(u, v));
          ++n;
        }
      }
    }
    return s / n;
  };
  int checked = 0;
  for (const auto& f : samples) {
    if (f.label != 1) continue;
    const auto& twin = *std::find_if(samples.begin(), samples.end(),
                                     [&](const SynthSample& s) { return s.pair == f.pair && s.label == 0; });
    ASSERT_FALSE(f.artifact_cells.empty());
    const auto fp = split_patches(f.image, cfg.grid_n);
    const auto rp = split_patches(twin.image, cfg.grid_n);
    for (auto [r, c] : f.artifact_cells) {
      const auto i = static_cast<std::size_t>(r * cfg.grid_n + c);
      EXPECT_GT(band(fp[i].pixels), band(rp[i].pixels));
      ++checked;
    }
  }
  EXPECT_GT(checked, 20);
}

TEST(Synth, ExplanationsParseInGrid) {
  for (const auto& s : synth_samples({.count = 30, .grid_n = 5, .seed = 7})) {
    const auto r = parse_explanations(s.explanation, 5);
    EXPECT_FALSE(r.records.empty());
    EXPECT_TRUE(r.diagnostics.empty());
  }
}

TEST(Builder, CacheRerunMakesNoProviderCalls) {
  TempDir dir;
  const auto m = synth_dataset({.count = 10, .seed = 8}, dir / "data");
  const auto deps = manifest_dependencies(m);
  const ToyProvider toy(m.provider.seed);
  CountingProvider counting(toy);
  std::vector<std::size_t> all(m.entries.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  GraphBuilder builder(counting, m.grid_n, &*deps, {.cache_dir = dir / "cache", .workers = 3});
  const auto first = builder.build_entries(m, all);
  const auto calls = counting.calls();
  EXPECT_GT(calls, 0u);
  const auto second = builder.build_entries(m, all);
  EXPECT_EQ(counting.calls(), calls);
  for (std::size_t i = 0; i < all.size(); ++i) {
    EXPECT_FALSE(first[i].cache_hit);
    EXPECT_TRUE(second[i].cache_hit);
    EXPECT_EQ(first[i].graph, second[i].graph);
  }
  // A different grid misses the cache.
  GraphBuilder other(counting, 3, &*deps, {.cache_dir = dir / "cache"});
  EXPECT_FALSE(other.build(load_image(m.entries[0].image), m.entries[0].explanation_text, 0).cache_hit);
  EXPECT_GT(counting.calls(), calls);
  // So does building without the dependency fixture.
  GraphBuilder bare(counting, m.grid_n, nullptr, {.cache_dir = dir / "cache"});
  EXPECT_FALSE(bare.build(load_image(m.entries[0].image), m.entries[0].explanation_text, 0).cache_hit);
}

TEST(Builder, WorkerCountDoesNotChangeGraphs) {
  const auto& w = small_world();
  GraphBuilder serial(*w.toy, w.manifest.grid_n, w.deps.get(), {.workers = 1});
  const auto idx = w.manifest.split_indices("test");
  const auto a = serial.build_entries(w.manifest, idx);
  for (std::size_t i = 0; i < idx.size(); ++i) EXPECT_EQ(serialize(a[i].graph), serialize(w.test[i]));
}

TEST(Training, ZeroEpochsReturnsInitialization) {
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 12;
  const auto r = train({}, {}, cfg);
  EXPECT_TRUE(r.history.empty());
  EXPECT_TRUE(same_weights(r.best, init_model(cfg.model, 12)));
  EXPECT_EQ(encode_checkpoint(r.best), encode_checkpoint(init_model(cfg.model, 12)));
}

TEST(Training, SameSeedSameHistory) {
  const auto& w = small_world();
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 13;
  const auto a = train(w.train, w.val, cfg);
  const auto b = train(w.train, w.val, cfg);
  EXPECT_EQ(history_csv(a.history), history_csv(b.history));
  EXPECT_EQ(encode_checkpoint(a.best), encode_checkpoint(b.best));
}

TEST(Training, InputOrderDoesNotMatter) {
  const auto& w = small_world();
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 14;
  auto reversed = w.train;
  std::reverse(reversed.begin(), reversed.end());
  const auto a = train(w.train, w.val, cfg);
  const auto b = train(reversed, w.val, cfg);
  EXPECT_EQ(encode_checkpoint(a.last), encode_checkpoint(b.last));
}

TEST(Training, LossDecreasesOnSynthetic) {
  TempDir dir;
  const auto m = synth_dataset({.count = 200, .seed = 15, .artifact_strength = 40}, dir.path());
  const auto deps = manifest_dependencies(m);
  const ToyProvider toy(m.provider.seed);
  GraphBuilder builder(toy, m.grid_n, &*deps, {.workers = 4});
  std::vector<DualGraph> tr, va;
  for (auto& b : builder.build_entries(m, m.split_indices("train"))) tr.push_back(b.graph);
  for (auto& b : builder.build_entries(m, m.split_indices("val"))) va.push_back(b.graph);
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.seed = 16;
  const auto r = train(tr, va, cfg);
  EXPECT_LT(mean_loss(r.last, tr), mean_loss(r.initial, tr));
  EXPECT_LT(r.history.back().train_loss, r.history.front().train_loss);
}

TEST(Training, HistoryCsvShape) {
  const std::vector<HistoryRow> rows = {{0, 1e-3, 0.5, 0.75, 0.8}};
  EXPECT_EQ(history_csv(rows), "epoch,lr,train_loss,val_acc,val_f1\n0,0.001,0.5,0.75,0.80000000000000004\n");
}

TEST(Training, BestCheckpointScoresOnValidation) {
  const auto& w = small_world();
  ASSERT_GE(w.trained.best_epoch, 0);
  const double best_f1 = w.trained.history[static_cast<std::size_t>(w.trained.best_epoch)].val_f1;
  for (const auto& row : w.trained.history) EXPECT_LE(row.val_f1, best_f1);
  EXPECT_EQ(evaluate(w.trained.best, w.val, "val").f1, best_f1);
}

TEST(Evaluate, SmallWorldDetectorLearns) {
  const auto& w = small_world();
  const auto m = evaluate(w.trained.best, w.test, "test");
  EXPECT_EQ(m.counts.total(), w.test.size());
  EXPECT_GE(m.accuracy, 0.9);
  // Evaluation does not touch the model.
  EXPECT_EQ(evaluate(w.trained.best, w.test, "test"), m);
}

TEST(Evaluate, ReportJson) {
  EvalReport r;
  r.splits.push_back(metrics_from({.tp = 1, .fp = 0, .tn = 1, .fn = 0}, "test"));
  const auto j = to_json(r);
  ASSERT_TRUE(j.contains("splits"));
  EXPECT_EQ(j["splits"][0]["split"], "test");
}
