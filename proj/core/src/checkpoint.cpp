#include <bit>
#include <cmath>

#include <nlohmann/json.hpp>

#include "vigtext/error.hpp"
#include "vigtext/gnn.hpp"
#include "vigtext/io.hpp"

namespace vigtext {

namespace {

constexpr std::string_view kMagic = "vgmd1";

using nlohmann::json;

// Every stored tensor in file order, including running statistics.
template <typename Model, typename Fn>
void visit_tensors(Model& m, Fn&& fn) {
  for (std::size_t l = 0; l < m.gat.size(); ++l) {
    for (std::size_t h = 0; h < m.gat[l].weight.size(); ++h) {
      const std::string p = "gat" + std::to_string(l) + ".head" + std::to_string(h);
      fn(p + ".weight", m.gat[l].weight[h]);
      fn(p + ".attention", m.gat[l].attention[h]);
    }
  }
  for (std::size_t l = 0; l < m.bn.size(); ++l) {
    const std::string p = "bn" + std::to_string(l);
    fn(p + ".gamma", m.bn[l].gamma);
    fn(p + ".beta", m.bn[l].beta);
    fn(p + ".running_mean", m.bn[l].running_mean);
    fn(p + ".running_var", m.bn[l].running_var);
  }
  fn(std::string("fc.weight"), m.fc_weight);
  fn(std::string("fc.bias"), m.fc_bias);
}

json config_json(const GnnConfig& c) {
  return {{"in_dim", c.in_dim},           {"hidden", c.hidden},           {"heads", c.heads},
          {"layers", c.layers},           {"dropout", c.dropout},         {"leaky_slope", c.leaky_slope},
          {"bn_momentum", c.bn_momentum}, {"bn_eps", c.bn_eps},           {"classes", c.classes}};
}

GnnConfig config_from(const json& j) {
  GnnConfig c;
  c.in_dim = j.at("in_dim").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.heads = j.at("heads").get<int>();
  c.layers = j.at("layers").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.leaky_slope = j.at("leaky_slope").get<double>();
  c.bn_momentum = j.at("bn_momentum").get<double>();
  c.bn_eps = j.at("bn_eps").get<double>();
  c.classes = j.at("classes").get<int>();
  return c;
}

}  // namespace

std::string encode_checkpoint(const ModelParams& model) {
  json header;
  header["format"] = std::string(kMagic);
  header["config"] = config_json(model.config);
  header["tensors"] = json::array();
  std::string body;
  visit_tensors(model, [&](const std::string& name, const auto& t) {
    header["tensors"].push_back({{"name", name}, {"shape", {t.rows(), t.cols()}}});
    for (Eigen::Index c = 0; c < t.cols(); ++c) {
      for (Eigen::Index r = 0; r < t.rows(); ++r) {
        const auto bits = std::bit_cast<std::uint64_t>(t(r, c));
        for (int i = 0; i < 8; ++i) body.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
      }
    }
  });
  const std::string h = header.dump();
  std::string out(kMagic);
  const auto len = static_cast<std::uint32_t>(h.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((len >> (8 * i)) & 0xff));
  out += h;
  out += body;
  return out;
}

ModelParams decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + 4 || bytes.substr(0, kMagic.size()) != kMagic) {
    throw Error(Errc::kMalformed, "not a vgmd1 checkpoint");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(p[kMagic.size() + i]) << (8 * i);
  const std::size_t body_at = kMagic.size() + 4 + len;
  if (body_at > bytes.size()) throw Error(Errc::kTruncated, "checkpoint header truncated");
  json header;
  try {
    header = json::parse(bytes.substr(kMagic.size() + 4, len));
  } catch (const json::exception& e) {
    throw Error(Errc::kMalformed, std::string("checkpoint header: ") + e.what());
  }
  ModelParams model;
  try {
    if (header.at("format").get<std::string>() != kMagic) throw Error(Errc::kVersion, "unknown checkpoint format");
    model = init_model(config_from(header.at("config")), 0);
    const auto& tensors = header.at("tensors");
    std::size_t index = 0;
    std::size_t off = body_at;
    visit_tensors(model, [&](const std::string& name, auto& t) {
      if (index >= tensors.size()) throw Error(Errc::kSchema, "checkpoint is missing tensor " + name);
      const auto& entry = tensors[index++];
      const auto shape = entry.at("shape").get<std::vector<Eigen::Index>>();
      if (entry.at("name").get<std::string>() != name || shape.size() != 2 || shape[0] != t.rows() ||
          shape[1] != t.cols()) {
        throw Error(Errc::kSchema, "checkpoint tensor " + name + " does not match the configured shape");
      }
      const std::size_t need = static_cast<std::size_t>(t.size()) * 8;
      if (off + need > bytes.size()) throw Error(Errc::kTruncated, "checkpoint data truncated in " + name);
      for (Eigen::Index c = 0; c < t.cols(); ++c) {
        for (Eigen::Index r = 0; r < t.rows(); ++r) {
          std::uint64_t bits = 0;
          for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[off + i]) << (8 * i);
          off += 8;
          const double v = std::bit_cast<double>(bits);
          if (!std::isfinite(v)) throw Error(Errc::kNumeric, "non-finite value in checkpoint tensor " + name);
          t(r, c) = v;
        }
      }
    });
    if (index != tensors.size() || off != bytes.size()) {
      throw Error(Errc::kSchema, "checkpoint has unexpected trailing tensors or bytes");
    }
  } catch (const json::exception& e) {
    throw Error(Errc::kSchema, std::string("checkpoint header: ") + e.what());
  }
  return model;
}

void save_checkpoint(const ModelParams& model, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(model));
}

ModelParams load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace vigtext
