#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "vigtext/error.hpp"
#include "vigtext/io.hpp"
#include "vigtext/pipeline.hpp"
#include "vigtext/rng.hpp"

namespace vigtext {

namespace {

struct Template {
  const char* sentence;
  std::vector<DependencyEdge> edges;
};

// Sentences describing untouched regions, then ones flagging artifacts.
// Parses are hand-annotated against tokenize() output.
const std::vector<Template>& consistent_templates() {
  static const std::vector<Template> t = {
      {"The lighting is consistent with the surrounding area.",
       {{2, 1}, {1, 0}, {2, 3}, {3, 4}, {4, 7}, {7, 5}, {7, 6}, {2, 8}}},
      {"Shadows fall naturally across this region.", {{1, 0}, {1, 2}, {1, 3}, {3, 5}, {5, 4}, {1, 6}}},
      {"Texture and grain look uniform and natural.", {{3, 0}, {0, 1}, {0, 2}, {3, 4}, {4, 5}, {4, 6}, {3, 7}}},
      {"Edges blend smoothly into the background.", {{1, 0}, {1, 2}, {1, 3}, {3, 5}, {5, 4}, {1, 6}}},
  };
  return t;
}

const std::vector<Template>& artifact_templates() {
  static const std::vector<Template> t = {
      {"A fine grid pattern repeats unnaturally here.", {{4, 3}, {3, 0}, {3, 1}, {3, 2}, {4, 5}, {4, 6}, {4, 7}}},
      {"The texture shows periodic noise typical of synthesis.",
       {{2, 1}, {1, 0}, {2, 4}, {4, 3}, {4, 5}, {5, 6}, {6, 7}, {2, 8}}},
      {"Pixels alternate in a checkered artifact.", {{1, 0}, {1, 2}, {2, 5}, {5, 3}, {5, 4}, {1, 6}}},
      {"High frequency artifacts break the surface texture.", {{3, 2}, {2, 1}, {1, 0}, {3, 6}, {6, 4}, {6, 5}, {3, 7}}},
  };
  return t;
}

FloatImage smooth_base(int size, Rng& rng) {
  FloatImage img(size, size);
  for (int c = 0; c < 3; ++c) {
    const double level = rng.uniform(0.25, 0.75);
    const double gx = rng.uniform(-0.2, 0.2);
    const double gy = rng.uniform(-0.2, 0.2);
    const double bump = rng.uniform(0.0, 0.1);
    const double kx = 0.5 + 0.5 * static_cast<double>(rng.below(2));
    const double ky = 0.5 + 0.5 * static_cast<double>(rng.below(2));
    const double px = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double py = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double u = static_cast<double>(x) / size;
        const double v = static_cast<double>(y) / size;
        img.at(x, y, c) = level + gx * (u - 0.5) + gy * (v - 0.5) +
                          bump * std::sin(2.0 * std::numbers::pi * kx * u + px) *
                              std::cos(2.0 * std::numbers::pi * ky * v + py);
      }
    }
  }
  for (auto& s : img.data) s += rng.uniform(-3.0, 3.0) / 255.0;
  return img;
}

std::vector<std::pair<int, int>> random_cells(int n, int k, Rng& rng) {
  std::vector<int> cells(static_cast<std::size_t>(n * n));
  for (int i = 0; i < n * n; ++i) cells[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < k; ++i) {
    const auto j = static_cast<std::size_t>(i) + rng.below(cells.size() - static_cast<std::size_t>(i));
    std::swap(cells[static_cast<std::size_t>(i)], cells[j]);
  }
  std::vector<int> picked(cells.begin(), cells.begin() + k);
  std::sort(picked.begin(), picked.end());
  std::vector<std::pair<int, int>> out;
  for (int c : picked) out.emplace_back(c / n, c % n);
  return out;
}

std::string record_line(const std::vector<std::pair<int, int>>& cells, const char* sentence) {
  std::string line = "{";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) line += ", ";
    line += grid_label(cells[i].first, cells[i].second);
  }
  return line + "}: " + sentence + "\n";
}

std::string explanation_for(bool flags_artifact, const std::vector<std::pair<int, int>>& artifact_cells, int n,
                            Rng& rng) {
  std::string text;
  if (flags_artifact) {
    const auto cells = artifact_cells.empty() ? random_cells(n, 1 + static_cast<int>(rng.below(2)), rng)
                                              : artifact_cells;
    const auto& t = artifact_templates()[rng.below(artifact_templates().size())];
    text += record_line(cells, t.sentence);
    if (rng.bernoulli(0.5)) {
      const auto& c = consistent_templates()[rng.below(consistent_templates().size())];
      text += record_line(random_cells(n, 1, rng), c.sentence);
    }
  } else {
    const int records = 1 + static_cast<int>(rng.below(2));
    for (int r = 0; r < records; ++r) {
      const auto& c = consistent_templates()[rng.below(consistent_templates().size())];
      text += record_line(random_cells(n, 1 + static_cast<int>(rng.below(2)), rng), c.sentence);
    }
  }
  return text;
}

}  // namespace

FloatImage plant_artifact(const FloatImage& base, int grid_n, const std::vector<std::pair<int, int>>& cells,
                          double amplitude, double phase) {
  FloatImage out = base;
  for (const auto& [row, col] : cells) {
    const int x0 = col * base.width / grid_n;
    const int x1 = (col + 1) * base.width / grid_n;
    const int y0 = row * base.height / grid_n;
    const int y1 = (row + 1) * base.height / grid_n;
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        const double d = 0.5 * amplitude / 255.0 * std::cos(std::numbers::pi * (x + y) + phase);
        for (int c = 0; c < 3; ++c) out.at(x, y, c) += d;
      }
    }
  }
  return out;
}

std::vector<SynthSample> synth_samples(const SynthConfig& cfg) {
  if (cfg.count < 4) throw Error(Errc::kInvalidArgument, "synthetic dataset needs count >= 4");
  if (cfg.grid_n < 1 || cfg.size < cfg.grid_n) throw Error(Errc::kInvalidArgument, "grid does not fit the image");
  if (!(cfg.artifact_strength >= 0.0)) throw Error(Errc::kInvalidArgument, "artifact strength must be >= 0");
  if (!(cfg.explanation_noise >= 0.0 && cfg.explanation_noise <= 1.0)) {
    throw Error(Errc::kInvalidArgument, "explanation noise must be in [0, 1]");
  }
  const int pairs = cfg.count / 2;
  std::vector<int> order(static_cast<std::size_t>(pairs));
  for (int p = 0; p < pairs; ++p) order[static_cast<std::size_t>(p)] = p;
  Rng split_rng(derive_seed(cfg.seed, "synth-split"));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[split_rng.below(i)]);
  const int n_train = std::min(pairs * 8 / 10, pairs - 1);
  const int n_val = pairs / 10;
  std::vector<std::string> pair_split(static_cast<std::size_t>(pairs));
  for (int i = 0; i < pairs; ++i) {
    pair_split[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] =
        i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
  }

  std::vector<SynthSample> out;
  const int n = cfg.grid_n;
  for (int p = 0; p < (cfg.count + 1) / 2; ++p) {
    Rng rng(derive_seed(derive_seed(cfg.seed, "synth-pair"), static_cast<std::uint64_t>(p)));
    const FloatImage base = smooth_base(cfg.size, rng);
    const auto cells = random_cells(n, 1 + static_cast<int>(rng.below(3)), rng);
    const std::string split = p < pairs ? pair_split[static_cast<std::size_t>(p)] : "train";
    for (int label = 0; label < 2; ++label) {
      const int index = 2 * p + label;
      if (index >= cfg.count) break;
      Rng text_rng(derive_seed(derive_seed(cfg.seed, "synth-text"), static_cast<std::uint64_t>(index)));
      SynthSample s;
      s.index = index;
      s.pair = p;
      s.label = label;
      s.split = split;
      s.base = base;
      if (label == 1) s.artifact_cells = cells;
      s.image = quantize(label == 1 ? plant_artifact(base, n, cells, cfg.artifact_strength, 0.0) : base);
      const bool flip = text_rng.bernoulli(cfg.explanation_noise);
      const bool flags = (label == 1) != flip;
      s.explanation = explanation_for(flags, label == 1 && !flip ? cells : std::vector<std::pair<int, int>>{}, n,
                                      text_rng);
      out.push_back(std::move(s));
    }
  }
  return out;
}

DependencyFixture synth_dependency_fixture() {
  DependencyFixture f;
  for (const auto* list : {&consistent_templates(), &artifact_templates()}) {
    for (const auto& t : *list) f.insert(t.sentence, {tokenize(t.sentence), t.edges});
  }
  return f;
}

DatasetManifest synth_dataset(const SynthConfig& cfg, const std::filesystem::path& dir) {
  const auto samples = synth_samples(cfg);
  DatasetManifest m;
  m.root = dir;
  m.grid_n = cfg.grid_n;
  m.provider.kind = ProviderKind::kToy;
  m.provider.seed = cfg.seed;
  m.dependencies = dir / "dependencies.jsonl";
  write_file_atomic(*m.dependencies, synth_dependency_fixture().serialize());
  for (const auto& s : samples) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "%05d", s.index);
    ManifestEntry e;
    e.image = dir / "images" / (std::string(stem) + ".ppm");
    e.explanation_path = dir / "explanations" / (std::string(stem) + ".txt");
    e.explanation_text = s.explanation;
    e.label = s.label;
    e.split = s.split;
    write_file_atomic(e.image, encode_ppm(s.image));
    write_file_atomic(*e.explanation_path, s.explanation);
    m.entries.push_back(std::move(e));
  }
  write_file_atomic(dir / "manifest.json", serialize_manifest(m));
  return m;
}

}  // namespace vigtext
