#include "vigtext/attacks.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>

#include "vigtext/dct.hpp"
#include "vigtext/error.hpp"

namespace vigtext {

// ---------------------------------------------------------------------------
// Attack configuration

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw Error(Errc::kInvalidArgument, "epsilon must be >= 0");
  if (alpha < 0.0 || !std::isfinite(alpha)) throw Error(Errc::kInvalidArgument, "alpha must be > 0");
  if (kind == AttackKind::kPgd && steps < 1) throw Error(Errc::kInvalidArgument, "pgd needs steps >= 1");
}

namespace {

double parse_number(std::string_view text, std::string_view what) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(Errc::kInvalidArgument, "bad value for " + std::string(what) + ": '" + std::string(text) + "'");
  }
  return v;
}

std::string format_number(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

AttackConfig AttackConfig::parse(std::string_view text) {
  AttackConfig cfg;
  const auto colon = text.find(':');
  const std::string_view name = text.substr(0, colon);
  if (name == "fgsm") {
    cfg.kind = AttackKind::kFgsm;
  } else if (name == "pgd") {
    cfg.kind = AttackKind::kPgd;
  } else {
    throw Error(Errc::kInvalidArgument, "unknown attack '" + std::string(name) + "'");
  }
  std::string_view rest = colon == std::string_view::npos ? std::string_view() : text.substr(colon + 1);
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const std::string_view item = rest.substr(0, comma);
    rest = comma == std::string_view::npos ? std::string_view() : rest.substr(comma + 1);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) throw Error(Errc::kInvalidArgument, "expected key=value in attack spec");
    const auto key = item.substr(0, eq);
    const auto value = item.substr(eq + 1);
    if (key == "eps") {
      cfg.epsilon = parse_number(value, key);
    } else if (key == "alpha" && cfg.kind == AttackKind::kPgd) {
      cfg.alpha = parse_number(value, key);
    } else if (key == "steps" && cfg.kind == AttackKind::kPgd) {
      cfg.steps = static_cast<int>(parse_number(value, key));
    } else {
      throw Error(Errc::kInvalidArgument, "unknown attack parameter '" + std::string(key) + "'");
    }
  }
  cfg.validate();
  return cfg;
}

std::string AttackConfig::to_string() const {
  if (kind == AttackKind::kFgsm) return "fgsm:eps=" + format_number(epsilon);
  return "pgd:eps=" + format_number(epsilon) + ",alpha=" + format_number(step_size()) +
         ",steps=" + std::to_string(steps);
}

// ---------------------------------------------------------------------------
// Differentiable graph construction

DifferentiableGraphBuilder::DifferentiableGraphBuilder(const ToyProvider& provider, int grid_n,
                                                       std::vector<TextGraph> text_graphs, Adjacency adjacency)
    : provider_(provider), grid_n_(grid_n), text_graphs_(std::move(text_graphs)), adjacency_(adjacency) {
  if (grid_n_ < 1) throw Error(Errc::kInvalidArgument, "grid_n must be >= 1");
}

namespace {

struct PatchTape {
  FloatImage pixels;
  DctVisualTape dct;
  FloatImage visual;  // dct visual in [0,1]
  int x0 = 0;
  int y0 = 0;
};

FloatImage scaled(const FloatImage& img, double s) {
  FloatImage out = img;
  for (auto& v : out.data) v *= s;
  return out;
}

struct ImageTape {
  FloatImage aligned;
  std::vector<PatchTape> patches;
  std::vector<Patch> labels;
  std::vector<EmbeddingVector> features;
};

ImageTape record(const ToyProvider& provider, const FloatImage& pixels, int n) {
  ImageTape t;
  const auto [w, h] = grid_aligned_size(pixels.width, pixels.height, n);
  t.aligned = (w == pixels.width && h == pixels.height) ? pixels : resize_bilinear(pixels, w, h);
  const int pw = w / n;
  const int ph = h / n;
  for (int row = 0; row < n; ++row) {
    for (int col = 0; col < n; ++col) {
      PatchTape p;
      p.x0 = col * pw;
      p.y0 = row * ph;
      p.pixels = crop(t.aligned, p.x0, p.y0, pw, ph);
      p.dct = dct_visual_forward(p.pixels);
      p.visual = scaled(p.dct.visual, 1.0 / 255.0);
      t.features.push_back(0.5 * (provider.embed(p.pixels) + provider.embed(p.visual)));
      Patch label;
      label.label = grid_label(row, col);
      label.row = row;
      label.col = col;
      t.labels.push_back(std::move(label));
      t.patches.push_back(std::move(p));
    }
  }
  return t;
}

}  // namespace

DualGraph DifferentiableGraphBuilder::graph(const FloatImage& pixels) const {
  const ImageTape t = record(provider_, pixels, grid_n_);
  return integrate(build_image_graph(t.labels, t.features, adjacency_), text_graphs_);
}

DifferentiableGraphBuilder::Evaluation DifferentiableGraphBuilder::evaluate(const ModelParams& model,
                                                                            const FloatImage& pixels,
                                                                            const LossFn& loss) const {
  const ImageTape t = record(provider_, pixels, grid_n_);
  const DualGraph g = integrate(build_image_graph(t.labels, t.features, adjacency_), text_graphs_);
  const auto fwd = forward(model, make_batch(g, model.config.in_dim), false);
  Evaluation ev;
  ev.logits = fwd.logits.row(0).transpose();
  auto [value, dlogits] = loss(ev.logits);
  ev.loss = value;
  const Gradients grads = backward_from_logits(model, fwd.cache, dlogits.transpose());

  // Patch nodes come first, in row-major grid order.
  FloatImage grad_aligned(t.aligned.width, t.aligned.height);
  const int dim = provider_.image_dim();
  for (std::size_t i = 0; i < t.patches.size(); ++i) {
    const PatchTape& p = t.patches[i];
    const EmbeddingVector gf = 0.5 * grads.input.row(static_cast<Eigen::Index>(i)).head(dim).transpose();
    FloatImage gp = provider_.vjp(p.pixels, gf);
    const FloatImage gv = dct_visual_backward(p.dct, scaled(provider_.vjp(p.visual, gf), 1.0 / 255.0));
    for (std::size_t k = 0; k < gp.data.size(); ++k) gp.data[k] += gv.data[k];
    add_into(grad_aligned, gp, p.x0, p.y0);
  }
  ev.gradient = (t.aligned.width == pixels.width && t.aligned.height == pixels.height)
                    ? std::move(grad_aligned)
                    : resize_bilinear_adjoint(grad_aligned, pixels.width, pixels.height);
  return ev;
}

DifferentiableGraphBuilder::Evaluation DifferentiableGraphBuilder::evaluate_ce(const ModelParams& model,
                                                                               const FloatImage& pixels,
                                                                               int label) const {
  return evaluate(model, pixels, [label](const Eigen::VectorXd& z) {
    Eigen::VectorXd d = softmax(z);
    d(label) -= 1.0;
    return std::make_pair(loss_ce(z, label), d);
  });
}

// ---------------------------------------------------------------------------
// FGSM / PGD

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

FloatImage fgsm_continuous(const FloatImage& x0, const DifferentiableGraphBuilder& builder, const ModelParams& model,
                           int label, const AttackConfig& cfg) {
  cfg.validate();
  if (cfg.epsilon == 0.0) return x0;
  const auto ev = builder.evaluate_ce(model, x0, label);
  FloatImage x = x0;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    x.data[i] = std::clamp(x0.data[i] + cfg.epsilon * sign(ev.gradient.data[i]), 0.0, 1.0);
  }
  return x;
}

FloatImage pgd_continuous(const FloatImage& x0, const DifferentiableGraphBuilder& builder, const ModelParams& model,
                          int label, const AttackConfig& cfg) {
  cfg.validate();
  if (cfg.epsilon == 0.0) return x0;
  const double alpha = cfg.step_size();
  FloatImage x = x0;
  for (int k = 0; k < cfg.steps; ++k) {
    const auto ev = builder.evaluate_ce(model, x, label);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      const double stepped = std::clamp(x.data[i] + alpha * sign(ev.gradient.data[i]), 0.0, 1.0);
      x.data[i] = std::clamp(stepped, x0.data[i] - cfg.epsilon, x0.data[i] + cfg.epsilon);
    }
  }
  return x;
}

RasterImage fgsm(const RasterImage& image, const DifferentiableGraphBuilder& builder, const ModelParams& model,
                 int label, const AttackConfig& cfg) {
  return quantize(fgsm_continuous(to_float(image), builder, model, label, cfg));
}

RasterImage pgd(const RasterImage& image, const DifferentiableGraphBuilder& builder, const ModelParams& model,
                int label, const AttackConfig& cfg) {
  return quantize(pgd_continuous(to_float(image), builder, model, label, cfg));
}

RasterImage attack(const RasterImage& image, const DifferentiableGraphBuilder& builder, const ModelParams& model,
                   int label, const AttackConfig& cfg) {
  return cfg.kind == AttackKind::kFgsm ? fgsm(image, builder, model, label, cfg)
                                       : pgd(image, builder, model, label, cfg);
}

// ---------------------------------------------------------------------------
// Surrogate loss

namespace {

// log softmax(z)[0] and log(1 - softmax(z)[0]), both via log-sum-exp.
std::pair<double, double> log_real_fake(const Eigen::Ref<const Eigen::VectorXd>& z) {
  const double mx = z.maxCoeff();
  const double lse = mx + std::log((z.array() - mx).exp().sum());
  const auto rest = z.tail(z.size() - 1);
  const double mr = rest.maxCoeff();
  const double lse_rest = mr + std::log((rest.array() - mr).exp().sum());
  return {z(0) - lse, lse_rest - lse};
}

}  // namespace

double surrogate_adv_loss(const Eigen::Ref<const Eigen::VectorXd>& logits, double y) {
  if (logits.size() < 2) throw Error(Errc::kInvalidArgument, "need at least two logits");
  const auto [log_p, log_q] = log_real_fake(logits);
  const double a = y == 0.0 ? 0.0 : y * log_p;
  const double b = y == 1.0 ? 0.0 : (1.0 - y) * log_q;
  return -(a + b);
}

Eigen::VectorXd surrogate_adv_grad(const Eigen::Ref<const Eigen::VectorXd>& logits, double y) {
  // dL/dz = p_k - target_k with target mass y on class 0 and (1 - y) spread
  // over the rest in proportion to their probabilities.
  const Eigen::VectorXd p = softmax(logits);
  const double p0 = p(0);
  Eigen::VectorXd d(p.size());
  d(0) = p0 - y;
  for (Eigen::Index k = 1; k < p.size(); ++k) {
    d(k) = p(k) - (1.0 - y) * (p0 < 1.0 ? p(k) / (1.0 - p0) : 0.0);
  }
  return d;
}

double surrogate_adv_loss(std::span<const Eigen::VectorXd> logits, double y) {
  if (logits.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& z : logits) sum += surrogate_adv_loss(z, y);
  return sum / static_cast<double>(logits.size());
}

// ---------------------------------------------------------------------------
// Generator attack

std::vector<GeneratedSample> toy_generator_attack(const ModelParams& surrogate, const GraphBuilder& builder,
                                                  std::span<const SynthSample> fakes, double artifact_strength,
                                                  const GeneratorConfig& cfg) {
  const auto* toy = dynamic_cast<const ToyProvider*>(&builder.provider());
  if (!toy) throw Error(Errc::kUnsupported, "generator attack needs the differentiable toy provider");
  if (cfg.steps < 0) throw Error(Errc::kInvalidArgument, "steps must be >= 0");
  const int n = builder.grid_n();
  constexpr double kTargetReal = 1.0;

  auto quantized_loss = [&](const RasterImage& img, const std::string& explanation) {
    const DualGraph g = builder.build(img, explanation, std::nullopt).graph;
    return surrogate_adv_loss(forward_logits(surrogate, g), kTargetReal);
  };

  std::vector<GeneratedSample> out;
  for (const SynthSample& s : fakes) {
    if (s.label != 1) throw Error(Errc::kInvalidArgument, "generator attack applies to fake samples only");
    const DifferentiableGraphBuilder diff(*toy, n, builder.text_graphs(s.explanation, nullptr),
                                          builder.options().adjacency);
    GeneratedSample best;
    best.index = s.index;
    best.amplitude = artifact_strength;
    best.phase = 0.0;
    best.image = s.image;
    best.loss_before = quantized_loss(s.image, s.explanation);
    best.loss_after = best.loss_before;

    double theta[2] = {artifact_strength, 0.0};
    const double lr[2] = {cfg.lr_amplitude, cfg.lr_phase};
    double m[2] = {0.0, 0.0};
    double v[2] = {0.0, 0.0};
    for (int step = 1; step <= cfg.steps; ++step) {
      const FloatImage x = plant_artifact(s.base, n, s.artifact_cells, theta[0], theta[1]);
      const auto ev = diff.evaluate(surrogate, x, [](const Eigen::VectorXd& z) {
        return std::make_pair(surrogate_adv_loss(z, kTargetReal), surrogate_adv_grad(z, kTargetReal));
      });
      if (!std::isfinite(ev.loss)) {
        throw Error(Errc::kNumeric, "generator loss diverged for sample " + std::to_string(s.index) + " at step " +
                                        std::to_string(step) + " (amplitude " + std::to_string(theta[0]) +
                                        ", phase " + std::to_string(theta[1]) + ")");
      }
      // Chain rule through the artifact: d x / d a and d x / d phase.
      double grad[2] = {0.0, 0.0};
      for (const auto& [row, col] : s.artifact_cells) {
        const int x0 = col * x.width / n;
        const int x1 = (col + 1) * x.width / n;
        const int y0 = row * x.height / n;
        const int y1 = (row + 1) * x.height / n;
        for (int yy = y0; yy < y1; ++yy) {
          for (int xx = x0; xx < x1; ++xx) {
            const double arg = std::numbers::pi * (xx + yy) + theta[1];
            double gsum = 0.0;
            for (int c = 0; c < 3; ++c) gsum += ev.gradient.at(xx, yy, c);
            grad[0] += gsum * 0.5 / 255.0 * std::cos(arg);
            grad[1] -= gsum * 0.5 * theta[0] / 255.0 * std::sin(arg);
          }
        }
      }
      for (int k = 0; k < 2; ++k) {
        m[k] = 0.9 * m[k] + 0.1 * grad[k];
        v[k] = 0.999 * v[k] + 0.001 * grad[k] * grad[k];
        const double mhat = m[k] / (1.0 - std::pow(0.9, step));
        const double vhat = v[k] / (1.0 - std::pow(0.999, step));
        theta[k] -= lr[k] * mhat / (std::sqrt(vhat) + 1e-8);
      }
      const RasterImage img = quantize(plant_artifact(s.base, n, s.artifact_cells, theta[0], theta[1]));
      const double loss = quantized_loss(img, s.explanation);
      if (!std::isfinite(loss)) throw Error(Errc::kNumeric, "generator produced a non-finite surrogate loss");
      if (loss < best.loss_after) {
        best.loss_after = loss;
        best.amplitude = theta[0];
        best.phase = theta[1];
        best.image = img;
      }
    }
    out.push_back(std::move(best));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Robustness suite

SuiteSpec SuiteSpec::parse(std::string_view text) {
  const std::string_view name = text.substr(0, text.find(':'));
  if (name == "fgsm" || name == "pgd") return {AttackConfig::parse(text)};
  return {PerturbationSpec::parse(text)};
}

std::string SuiteSpec::to_string() const {
  return std::visit([](const auto& s) { return s.to_string(); }, spec);
}

std::vector<SuiteSpec> default_suite() {
  std::vector<SuiteSpec> out = {
      {PerturbationSpec::blur(2, 1.0)},
      {PerturbationSpec::brightness(1.2)},
      {PerturbationSpec::rotate(15.0)},
      {PerturbationSpec::scale_translate(0.9, 10, 10)},
      {PerturbationSpec::resize_relative(0.5)},
      {PerturbationSpec::resize_relative(0.75)},
      {PerturbationSpec::resize_relative(1.5)},
  };
  for (const AttackKind kind : {AttackKind::kFgsm, AttackKind::kPgd}) {
    for (const double eps : {1e-4, 1e-3, 1e-2}) {
      AttackConfig a;
      a.kind = kind;
      a.epsilon = eps;
      out.push_back({a});
    }
  }
  return out;
}

RobustnessReport run_robustness_suite(const ModelParams& model, const DatasetManifest& manifest,
                                      const GraphBuilder& builder, std::span<const SuiteSpec> specs, double tau_r,
                                      const std::string& split) {
  const auto indices = manifest.split_indices(split);
  if (indices.empty()) throw Error(Errc::kInvalidArgument, "split '" + split + "' is empty");
  const auto* toy = dynamic_cast<const ToyProvider*>(&builder.provider());
  for (const SuiteSpec& s : specs) {
    if (const auto* p = std::get_if<PerturbationSpec>(&s.spec)) {
      p->validate();
      continue;
    }
    std::get<AttackConfig>(s.spec).validate();
    if (!toy) {
      throw Error(Errc::kUnsupported, "gradient attacks need the differentiable toy provider, not " +
                                          std::string(provider_kind_name(builder.provider().kind())));
    }
  }

  auto run = [&](const std::string& name,
                 const std::function<RasterImage(const RasterImage&, std::size_t)>& perturb) {
    const auto built = builder.build_entries(manifest, indices, perturb);
    std::vector<DualGraph> graphs;
    graphs.reserve(built.size());
    for (const auto& b : built) graphs.push_back(b.graph);
    RobustnessRow row;
    row.spec = name;
    row.metrics = evaluate(model, graphs, split);
    row.metrics.threshold = tau_r;
    row.pass_tau_r = row.metrics.accuracy >= tau_r;
    row.metrics.pass = row.pass_tau_r;
    return row;
  };

  RobustnessReport report;
  report.rows.push_back(run("clean", nullptr));
  for (const SuiteSpec& s : specs) {
    if (const auto* p = std::get_if<PerturbationSpec>(&s.spec)) {
      const PerturbationSpec spec = *p;
      report.rows.push_back(run(s.to_string(), [spec](const RasterImage& img, std::size_t) {
        return transform(img, spec);
      }));
      continue;
    }
    const AttackConfig cfg = std::get<AttackConfig>(s.spec);
    report.rows.push_back(run(s.to_string(), [&, cfg](const RasterImage& img, std::size_t index) {
      const ManifestEntry& e = manifest.entries[index];
      const DifferentiableGraphBuilder diff(*toy, builder.grid_n(), builder.text_graphs(e.explanation_text, nullptr),
                                            builder.options().adjacency);
      return attack(img, diff, model, e.label, cfg);
    }));
  }
  return report;
}

nlohmann::json to_json(const RobustnessReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"spec", row.spec}, {"metrics", to_json(row.metrics)}, {"pass_tau_r", row.pass_tau_r}});
  }
  return rows;
}

RobustnessReport robustness_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error(Errc::kSchema, "robustness report must be a JSON array");
  RobustnessReport r;
  try {
    for (const auto& row : j) {
      r.rows.push_back({row.at("spec").get<std::string>(), metrics_from_json(row.at("metrics")),
                        row.at("pass_tau_r").get<bool>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kSchema, std::string("robustness report: ") + e.what());
  }
  return r;
}

}  // namespace vigtext
