#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <sstream>

#include "vigtext/attacks.hpp"
#include "vigtext/error.hpp"
#include "vigtext/io.hpp"
#include "vigtext/pipeline.hpp"

namespace vigtext {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string manifest;
  std::string provider;
  std::string endpoint;
  std::string fixture_images;
  std::string fixture_tokens;
  int grid = 0;  // 0: take the manifest's grid
  std::uint64_t seed = 0;
  int epochs = 40;
  int batch = 16;
  std::string out = ".";
  std::string checkpoint;
  std::string cache;
  std::string split;
  double tau_r = 0.9;
  double tau_g = 0.9;
  std::vector<double> eps;
  std::string kind;
  std::vector<std::string> specs;
  int workers = 1;

  // synth
  int count = 400;
  double strength = 40.0;
  double noise = 0.25;

  // report / overlay
  std::string input;
  std::string image;
};

struct Session {
  DatasetManifest manifest;
  std::unique_ptr<EmbeddingProvider> provider;
  std::optional<DependencyFixture> dependencies;
  int grid_n = 4;
};

Session open_session(const Options& o) {
  if (o.manifest.empty()) throw Error(Errc::kInvalidArgument, "--manifest is required");
  Session s;
  s.manifest = load_manifest(o.manifest);
  ProviderConfig pc = s.manifest.provider;
  if (!o.provider.empty()) {
    if (o.provider == "toy") {
      pc.kind = ProviderKind::kToy;
    } else if (o.provider == "fixture") {
      pc.kind = ProviderKind::kFixture;
      if (!o.fixture_images.empty()) pc.image_fixture = o.fixture_images;
      if (!o.fixture_tokens.empty()) pc.token_fixture = o.fixture_tokens;
    } else if (o.provider == "remote") {
      pc.kind = ProviderKind::kRemote;
    } else {
      throw Error(Errc::kInvalidArgument, "unknown provider '" + o.provider + "'");
    }
  }
  if (pc.kind == ProviderKind::kRemote) {
    if (!o.endpoint.empty()) {
      pc.endpoint = o.endpoint;
    } else if (const char* env = std::getenv("VIGTEXT_ENDPOINT"); env && *env) {
      pc.endpoint = env;
    }
  }
  s.provider = make_provider(pc);
  s.dependencies = manifest_dependencies(s.manifest);
  s.grid_n = o.grid > 0 ? o.grid : s.manifest.grid_n;
  return s;
}

GraphBuilder builder_for(const Session& s, const Options& o, std::optional<fs::path> cache) {
  GraphBuildOptions bo;
  bo.workers = std::max(1, o.workers);
  bo.cache_dir = std::move(cache);
  return GraphBuilder(*s.provider, s.grid_n, s.dependencies ? &*s.dependencies : nullptr, bo);
}

std::optional<fs::path> cache_option(const Options& o) {
  if (o.cache.empty()) return std::nullopt;
  return fs::path(o.cache);
}

std::vector<DualGraph> graphs_for(const GraphBuilder& b, const DatasetManifest& m, const std::string& split) {
  std::vector<DualGraph> out;
  for (auto& built : b.build_entries(m, m.split_indices(split))) out.push_back(std::move(built.graph));
  return out;
}

GnnConfig model_config(const EmbeddingProvider& p) {
  GnnConfig c;
  c.in_dim = std::max(p.image_dim(), p.text_dim());
  return c;
}

fs::path checkpoint_path(const Options& o) {
  return o.checkpoint.empty() ? fs::path(o.out) / "model.vgmd" : fs::path(o.checkpoint);
}

ModelParams load_model_for(const Options& o, const Session& s) {
  ModelParams m = load_checkpoint(checkpoint_path(o));
  const int want = std::max(s.provider->image_dim(), s.provider->text_dim());
  if (m.config.in_dim != want) {
    throw Error(Errc::kDimensionMismatch, "checkpoint expects " + std::to_string(m.config.in_dim) +
                                              "-dim features, provider yields " + std::to_string(want));
  }
  return m;
}

std::string format4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// ---------------------------------------------------------------------------

int cmd_synth(const Options& o, std::ostream& out) {
  SynthConfig cfg;
  cfg.count = o.count;
  cfg.grid_n = o.grid > 0 ? o.grid : 4;
  cfg.seed = o.seed;
  cfg.artifact_strength = o.strength;
  cfg.explanation_noise = o.noise;
  const auto m = synth_dataset(cfg, o.out);
  out << "wrote " << m.entries.size() << " samples to " << (fs::path(o.out) / "manifest.json").string() << "\n";
  return 0;
}

int cmd_build_graphs(const Options& o, std::ostream& out) {
  const Session s = open_session(o);
  const fs::path dir(o.out);
  const auto builder = builder_for(s, o, o.cache.empty() ? dir / "cache" : fs::path(o.cache));
  std::vector<std::size_t> all(s.manifest.entries.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  // Everything is built before anything is written, so a provider failure
  // leaves no graph files behind.
  const auto built = builder.build_entries(s.manifest, all);
  std::string log;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < built.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "%05zu", i);
    const auto& b = built[i];
    write_file_atomic(dir / "graphs" / (std::string(stem) + ".json"), serialize(b.graph));
    const std::string image = s.manifest.entries[i].image.lexically_relative(s.manifest.root).generic_string();
    for (const auto& d : b.diagnostics) {
      log += "WARN " + image + ": line " + std::to_string(d.line) + ": " + d.message + "\n";
    }
    log += "OK " + image + " nodes=" + std::to_string(b.graph.nodes.size()) +
           " edges=" + std::to_string(b.graph.edges.size()) + "\n";
    hits += b.cache_hit ? 1 : 0;
  }
  // Cache status stays out of the log so reruns write the same bytes.
  log += "built " + std::to_string(built.size()) + " graphs\n";
  write_file_atomic(dir / "build.log", log);
  out << "built " << built.size() << " graphs (" << hits << " cache hits)\n";
  return 0;
}

int cmd_train(const Options& o, std::ostream& out) {
  const Session s = open_session(o);
  const auto builder = builder_for(s, o, cache_option(o));
  const auto train_set = graphs_for(builder, s.manifest, "train");
  const auto val_set = graphs_for(builder, s.manifest, "val");
  TrainConfig cfg;
  cfg.model = model_config(*s.provider);
  cfg.epochs = o.epochs;
  cfg.seed = o.seed;
  cfg.batch_size = o.batch;
  if (cfg.epochs > 0 && train_set.empty()) throw Error(Errc::kSchema, "manifest has no train entries");
  const TrainResult r = train(train_set, val_set, cfg);
  const fs::path dir(o.out);
  save_checkpoint(r.best, checkpoint_path(o));
  write_file_atomic(dir / "history.csv", history_csv(r.history));
  out << "trained " << r.history.size() << " epochs";
  if (r.best_epoch >= 0) out << ", best validation F1 at epoch " << r.best_epoch;
  out << "; checkpoint " << checkpoint_path(o).string() << "\n";
  return 0;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const Session s = open_session(o);
  const ModelParams model = load_model_for(o, s);
  const auto builder = builder_for(s, o, cache_option(o));
  EvalReport report;
  const auto splits = o.split.empty() ? s.manifest.splits() : std::vector<std::string>{o.split};
  for (const auto& split : splits) {
    MetricsReport m = evaluate(model, graphs_for(builder, s.manifest, split), split);
    if (split.starts_with("extra:")) {
      m.threshold = o.tau_g;
      m.pass = m.accuracy >= o.tau_g;
    }
    report.splits.push_back(std::move(m));
  }
  const json j = to_json(report);
  write_file_atomic(fs::path(o.out) / "report.json", j.dump(2) + "\n");
  out << render_table(j);
  return 0;
}

int cmd_attack(const Options& o, std::ostream& out) {
  const Session s = open_session(o);
  const ModelParams model = load_model_for(o, s);
  const auto builder = builder_for(s, o, cache_option(o));
  std::vector<SuiteSpec> specs;
  if (!o.kind.empty()) {
    const std::vector<double> eps = o.eps.empty() ? std::vector<double>{1e-4, 1e-3, 1e-2} : o.eps;
    for (const double e : eps) {
      AttackConfig a;
      if (o.kind == "fgsm") {
        a.kind = AttackKind::kFgsm;
      } else if (o.kind == "pgd") {
        a.kind = AttackKind::kPgd;
      } else {
        throw Error(Errc::kInvalidArgument, "--kind must be fgsm or pgd");
      }
      a.epsilon = e;
      a.validate();
      specs.push_back({a});
    }
  }
  for (const auto& text : o.specs) specs.push_back(SuiteSpec::parse(text));
  if (o.kind.empty() && o.specs.empty()) specs = default_suite();
  const auto report = run_robustness_suite(model, s.manifest, builder, specs, o.tau_r, o.split.empty() ? "test" : o.split);
  const json j = to_json(report);
  write_file_atomic(fs::path(o.out) / "robustness.json", j.dump(2) + "\n");
  out << render_table(j);
  return 0;
}

int cmd_report(const Options& o, std::ostream& out) {
  if (o.input.empty()) throw Error(Errc::kInvalidArgument, "--in is required");
  json j;
  try {
    j = json::parse(read_file(o.input));
  } catch (const json::exception& e) {
    throw Error(Errc::kMalformed, std::string("report is not JSON: ") + e.what());
  }
  out << render_table(j);
  return 0;
}

int cmd_overlay(const Options& o, std::ostream& out) {
  if (o.image.empty()) throw Error(Errc::kInvalidArgument, "--image is required");
  const RasterImage img = load_image(o.image);
  const fs::path target = fs::path(o.out).extension() == ".ppm" ? fs::path(o.out) : fs::path(o.out) / "overlay.ppm";
  write_file_atomic(target, encode_ppm(overlay_grid(img, o.grid > 0 ? o.grid : 4)));
  out << "wrote " << target.string() << "\n";
  return 0;
}

}  // namespace

std::string render_table(const json& report) {
  std::vector<std::pair<std::string, MetricsReport>> rows;
  bool thresholds = false;
  if (report.is_array()) {
    const RobustnessReport r = robustness_from_json(report);
    for (const auto& row : r.rows) rows.emplace_back(row.spec, row.metrics);
  } else if (report.is_object() && report.contains("splits")) {
    for (const auto& m : report.at("splits")) {
      const MetricsReport mr = metrics_from_json(m);
      rows.emplace_back(mr.split, mr);
    }
  } else {
    throw Error(Errc::kSchema, "not an eval or robustness report");
  }
  std::size_t width = 7;
  for (const auto& [name, m] : rows) {
    width = std::max(width, name.size());
    thresholds = thresholds || m.pass.has_value();
  }
  std::ostringstream os;
  auto cell = [&](const std::string& s, std::size_t w) {
    os << s;
    for (std::size_t i = s.size(); i < w; ++i) os << ' ';
  };
  cell("Setting", width + 2);
  cell("Accuracy", 11);
  cell("Precision", 11);
  cell("Recall", 11);
  if (thresholds) {
    cell("F1", 11);
    os << "Pass";
  } else {
    os << "F1";
  }
  os << "\n";
  for (const auto& [name, m] : rows) {
    cell(name, width + 2);
    cell(format4(m.accuracy), 11);
    cell(format4(m.precision), 11);
    cell(format4(m.recall), 11);
    if (thresholds) {
      cell(format4(m.f1), 11);
      os << (m.pass ? (*m.pass ? "yes" : "no") : "-");
    } else {
      os << format4(m.f1);
    }
    os << "\n";
  }
  return os.str();
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Deepfake detection over patch and explanation graphs"};
  app.require_subcommand(1);
  Options o;

  auto data_flags = [&](CLI::App* c) {
    c->add_option("--manifest", o.manifest, "Dataset manifest (vigtext-manifest/1)")->required();
    c->add_option("--provider", o.provider, "Embedding provider override")
        ->check(CLI::IsMember({"toy", "fixture", "remote"}));
    c->add_option("--endpoint", o.endpoint, "Model server URL (falls back to VIGTEXT_ENDPOINT)");
    c->add_option("--fixture-images", o.fixture_images, "VGFX1 image fixture for --provider fixture");
    c->add_option("--fixture-tokens", o.fixture_tokens, "VGFX1 token fixture for --provider fixture");
    c->add_option("--grid", o.grid, "Grid size n (default: manifest value)")->check(CLI::PositiveNumber);
    c->add_option("--out", o.out, "Output directory");
    c->add_option("--cache", o.cache, "Graph cache directory");
    c->add_option("--workers", o.workers, "Graph-building worker threads")->check(CLI::PositiveNumber);
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic real/fake dataset");
  synth->add_option("--out", o.out, "Output directory")->required();
  synth->add_option("--count", o.count, "Number of samples")->check(CLI::Range(4, 1000000));
  synth->add_option("--grid", o.grid, "Grid size n")->check(CLI::PositiveNumber);
  synth->add_option("--seed", o.seed, "Random seed");
  synth->add_option("--strength", o.strength, "Artifact peak-to-peak amplitude in 8-bit levels");
  synth->add_option("--noise", o.noise, "Probability of a misleading explanation")->check(CLI::Range(0.0, 1.0));

  auto* build = app.add_subcommand("build-graphs", "Build one dual graph per manifest entry");
  data_flags(build);

  auto* trn = app.add_subcommand("train", "Train the graph attention detector");
  data_flags(trn);
  trn->add_option("--seed", o.seed, "Random seed");
  trn->add_option("--epochs", o.epochs, "Training epochs")->check(CLI::NonNegativeNumber);
  trn->add_option("--batch", o.batch, "Graphs per optimizer step")->check(CLI::PositiveNumber);
  trn->add_option("--checkpoint", o.checkpoint, "Checkpoint path (default <out>/model.vgmd)");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on every split");
  data_flags(ev);
  ev->add_option("--checkpoint", o.checkpoint, "Checkpoint path (default <out>/model.vgmd)");
  ev->add_option("--split", o.split, "Evaluate only this split");
  ev->add_option("--tau-g", o.tau_g, "Generalization threshold for extra: splits");
  ev->add_option("--seed", o.seed, "Random seed (unused by inference)");

  auto* atk = app.add_subcommand("attack", "Run perturbations and gradient attacks against a checkpoint");
  data_flags(atk);
  atk->add_option("--checkpoint", o.checkpoint, "Checkpoint path (default <out>/model.vgmd)");
  atk->add_option("--kind", o.kind, "Gradient attack")->check(CLI::IsMember({"fgsm", "pgd"}));
  atk->add_option("--eps", o.eps, "L-infinity budgets in [0,1] units");
  atk->add_option("--spec", o.specs, "Suite entries such as blur:radius=2,sigma=1 or pgd:eps=0.01");
  atk->add_option("--split", o.split, "Split to attack (default test)");
  atk->add_option("--tau-r", o.tau_r, "Robustness threshold");
  atk->add_option("--seed", o.seed, "Random seed (attacks are deterministic)");

  auto* rep = app.add_subcommand("report", "Render a report JSON as a table");
  rep->add_option("--in", o.input, "report.json or robustness.json")->required();

  auto* ovl = app.add_subcommand("overlay", "Draw the labeled grid used for visual prompting");
  ovl->add_option("--image", o.image, "Input PPM or PNG")->required();
  ovl->add_option("--grid", o.grid, "Grid size n")->check(CLI::PositiveNumber);
  ovl->add_option("--out", o.out, "Output .ppm file or directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) return cmd_synth(o, out);
    if (build->parsed()) return cmd_build_graphs(o, out);
    if (trn->parsed()) return cmd_train(o, out);
    if (ev->parsed()) return cmd_eval(o, out);
    if (atk->parsed()) return cmd_attack(o, out);
    if (rep->parsed()) return cmd_report(o, out);
    if (ovl->parsed()) return cmd_overlay(o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace vigtext
