#include "vigtext/error.hpp"
#include "vigtext/pipeline.hpp"

namespace vigtext {

using nlohmann::json;

void Confusion::add(int truth, int predicted) {
  if (truth == 1) {
    ++(predicted == 1 ? tp : fn);
  } else {
    ++(predicted == 1 ? fp : tn);
  }
}

MetricsReport metrics_from(const Confusion& c, std::string split) {
  MetricsReport r;
  r.split = std::move(split);
  r.counts = c;
  const auto d = [](std::size_t x) { return static_cast<double>(x); };
  if (c.total() > 0) r.accuracy = d(c.tp + c.tn) / d(c.total());
  if (c.tp + c.fp > 0) r.precision = d(c.tp) / d(c.tp + c.fp);
  if (c.tp + c.fn > 0) r.recall = d(c.tp) / d(c.tp + c.fn);
  if (r.precision + r.recall > 0.0) r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

int predict(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  int best = 0;
  for (Eigen::Index k = 1; k < logits.size(); ++k) {
    if (logits(k) > logits(best)) best = static_cast<int>(k);
  }
  return best;
}

json to_json(const MetricsReport& r) {
  json j = {{"split", r.split},
            {"tp", r.counts.tp},
            {"fp", r.counts.fp},
            {"tn", r.counts.tn},
            {"fn", r.counts.fn},
            {"accuracy", r.accuracy},
            {"precision", r.precision},
            {"recall", r.recall},
            {"f1", r.f1}};
  if (r.threshold) j["threshold"] = *r.threshold;
  if (r.pass) j["pass"] = *r.pass;
  return j;
}

MetricsReport metrics_from_json(const json& j) {
  try {
    Confusion c;
    c.tp = j.at("tp").get<std::size_t>();
    c.fp = j.at("fp").get<std::size_t>();
    c.tn = j.at("tn").get<std::size_t>();
    c.fn = j.at("fn").get<std::size_t>();
    MetricsReport r = metrics_from(c, j.value("split", std::string()));
    if (j.contains("threshold")) r.threshold = j.at("threshold").get<double>();
    if (j.contains("pass")) r.pass = j.at("pass").get<bool>();
    return r;
  } catch (const json::exception& e) {
    throw Error(Errc::kSchema, std::string("metrics report: ") + e.what());
  }
}

json to_json(const EvalReport& r) {
  json splits = json::array();
  for (const auto& m : r.splits) splits.push_back(to_json(m));
  return {{"splits", splits}};
}

}  // namespace vigtext
