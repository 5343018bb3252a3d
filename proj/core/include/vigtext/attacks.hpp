#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "vigtext/pipeline.hpp"

namespace vigtext {

enum class AttackKind { kFgsm, kPgd };

// L-infinity evasion attack in normalized [0,1] pixel units.
struct AttackConfig {
  AttackKind kind = AttackKind::kFgsm;
  double epsilon = 0.0;
  double alpha = 0.0;  // pgd step; 0 means epsilon / 4
  int steps = 10;      // pgd only

  double step_size() const { return alpha > 0.0 ? alpha : epsilon / 4.0; }
  void validate() const;
  // "fgsm:eps=0.01", "pgd:eps=0.01,alpha=0.0025,steps=10"
  static AttackConfig parse(std::string_view text);
  std::string to_string() const;
};

// Rebuilds a dual graph from continuous pixels through the toy embedder so the
// loss can be differentiated back to the image. Explanations stay fixed.
class DifferentiableGraphBuilder {
 public:
  DifferentiableGraphBuilder(const ToyProvider& provider, int grid_n, std::vector<TextGraph> text_graphs,
                             Adjacency adjacency = Adjacency::kFour);

  DualGraph graph(const FloatImage& pixels) const;

  struct Evaluation {
    Eigen::VectorXd logits;
    double loss = 0.0;
    FloatImage gradient;  // d loss / d pixels, same size as the input
  };
  using LossFn = std::function<std::pair<double, Eigen::VectorXd>(const Eigen::VectorXd& logits)>;
  // Inference-mode forward; `loss` returns the value and d loss / d logits.
  Evaluation evaluate(const ModelParams& model, const FloatImage& pixels, const LossFn& loss) const;
  // Cross-entropy toward `label`.
  Evaluation evaluate_ce(const ModelParams& model, const FloatImage& pixels, int label) const;

 private:
  const ToyProvider& provider_;
  int grid_n_;
  std::vector<TextGraph> text_graphs_;
  Adjacency adjacency_;
};

// Continuous adversarial images (before re-quantization).
FloatImage fgsm_continuous(const FloatImage& x0, const DifferentiableGraphBuilder& builder, const ModelParams& model,
                           int label, const AttackConfig& cfg);
FloatImage pgd_continuous(const FloatImage& x0, const DifferentiableGraphBuilder& builder, const ModelParams& model,
                          int label, const AttackConfig& cfg);
// Attack `label` (the true class) and re-quantize to 8 bits.
RasterImage fgsm(const RasterImage& image, const DifferentiableGraphBuilder& builder, const ModelParams& model,
                 int label, const AttackConfig& cfg);
RasterImage pgd(const RasterImage& image, const DifferentiableGraphBuilder& builder, const ModelParams& model,
                int label, const AttackConfig& cfg);
RasterImage attack(const RasterImage& image, const DifferentiableGraphBuilder& builder, const ModelParams& model,
                   int label, const AttackConfig& cfg);

// Binary cross-entropy -[y log p + (1 - y) log(1 - p)] with p = softmax(z)[0],
// the probability of the real class. y = 1 rewards looking real.
double surrogate_adv_loss(const Eigen::Ref<const Eigen::VectorXd>& logits, double y);
Eigen::VectorXd surrogate_adv_grad(const Eigen::Ref<const Eigen::VectorXd>& logits, double y);
double surrogate_adv_loss(std::span<const Eigen::VectorXd> logits, double y);

struct GeneratorConfig {
  int steps = 40;
  double lr_amplitude = 4.0;  // 8-bit levels per step
  double lr_phase = 0.1;
};

struct GeneratedSample {
  int index = 0;  // SynthSample::index
  double amplitude = 0.0;
  double phase = 0.0;
  double loss_before = 0.0;
  double loss_after = 0.0;  // never above loss_before
  RasterImage image;
};

// Optimizes each fake's planted artifact (amplitude, phase) with Adam to
// minimize surrogate_adv_loss toward "real", keeping the best quantized
// iterate. `builder` must wrap the same toy provider the surrogate was trained on.
std::vector<GeneratedSample> toy_generator_attack(const ModelParams& surrogate, const GraphBuilder& builder,
                                                  std::span<const SynthSample> fakes, double artifact_strength,
                                                  const GeneratorConfig& cfg);

struct SuiteSpec {
  std::variant<PerturbationSpec, AttackConfig> spec;

  // Perturbation text ("blur:radius=2,sigma=1") or attack text ("pgd:eps=0.01").
  static SuiteSpec parse(std::string_view text);
  std::string to_string() const;
};

// Standard robustness grid: blur, brightness, rotate, scale_translate, three
// resizes, and FGSM/PGD at eps 1e-4, 1e-3, 1e-2.
std::vector<SuiteSpec> default_suite();

struct RobustnessRow {
  std::string spec;  // "clean" for the unperturbed baseline
  MetricsReport metrics;
  bool pass_tau_r = false;
};

struct RobustnessReport {
  std::vector<RobustnessRow> rows;
};

// First row is the clean baseline; one row per spec follows. Explanations are
// reused unchanged for perturbed images.
RobustnessReport run_robustness_suite(const ModelParams& model, const DatasetManifest& manifest,
                                      const GraphBuilder& builder, std::span<const SuiteSpec> specs, double tau_r,
                                      const std::string& split = "test");

nlohmann::json to_json(const RobustnessReport& r);
RobustnessReport robustness_from_json(const nlohmann::json& j);

}  // namespace vigtext
