#include <algorithm>
#include <set>

#include "vigtext/error.hpp"
#include "vigtext/io.hpp"
#include "vigtext/pipeline.hpp"

namespace vigtext {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::size_t> DatasetManifest::split_indices(std::string_view split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].split == split) out.push_back(i);
  }
  return out;
}

std::vector<std::string> DatasetManifest::splits() const {
  std::vector<std::string> out;
  for (const auto& e : entries) {
    if (std::find(out.begin(), out.end(), e.split) == out.end()) out.push_back(e.split);
  }
  return out;
}

namespace {

bool valid_split(const std::string& s) {
  return s == "train" || s == "val" || s == "test" || (s.starts_with("extra:") && s.size() > 6);
}

fs::path resolve(const fs::path& root, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : root / path;
}

std::string relative_to(const fs::path& root, const fs::path& p) {
  const fs::path rel = p.lexically_relative(root);
  if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
  return p.generic_string();
}

ProviderConfig provider_from(const json& j, const fs::path& root) {
  ProviderConfig c;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "toy") {
    c.kind = ProviderKind::kToy;
    c.seed = j.value("seed", std::uint64_t{0});
  } else if (kind == "fixture") {
    c.kind = ProviderKind::kFixture;
    c.image_fixture = resolve(root, j.at("images").get<std::string>());
    c.token_fixture = resolve(root, j.at("tokens").get<std::string>());
  } else if (kind == "remote") {
    c.kind = ProviderKind::kRemote;
    c.endpoint = j.value("endpoint", std::string());
    c.image_dim = j.value("image_dim", 768);
    c.text_dim = j.value("text_dim", 768);
  } else {
    throw Error(Errc::kSchema, "unknown provider kind '" + kind + "'");
  }
  return c;
}

json provider_json(const ProviderConfig& c, const fs::path& root) {
  switch (c.kind) {
    case ProviderKind::kToy:
      return {{"kind", "toy"}, {"seed", c.seed}};
    case ProviderKind::kFixture:
      return {{"kind", "fixture"},
              {"images", relative_to(root, c.image_fixture)},
              {"tokens", relative_to(root, c.token_fixture)}};
    case ProviderKind::kRemote:
      return {{"kind", "remote"}, {"endpoint", c.endpoint}, {"image_dim", c.image_dim}, {"text_dim", c.text_dim}};
  }
  return {};
}

}  // namespace

void validate_manifest(const DatasetManifest& m) {
  if (m.grid_n < 1) throw Error(Errc::kSchema, "grid_n must be >= 1");
  std::set<fs::path> seen;
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto& e = m.entries[i];
    const std::string where = "manifest entry " + std::to_string(i);
    if (e.label != 0 && e.label != 1) throw Error(Errc::kSchema, where + ": label must be 0 or 1");
    if (!valid_split(e.split)) throw Error(Errc::kSchema, where + ": unknown split '" + e.split + "'");
    if (!seen.insert(e.image.lexically_normal()).second) {
      throw Error(Errc::kSchema, where + ": duplicate image path " + e.image.string());
    }
    if (!fs::exists(e.image)) throw Error(Errc::kNotFound, where + ": missing image " + e.image.string());
  }
}

DatasetManifest parse_manifest(std::string_view text, const fs::path& root) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::kMalformed, std::string("manifest is not JSON: ") + e.what());
  }
  DatasetManifest m;
  m.root = root;
  try {
    if (j.at("format").get<std::string>() != kManifestFormat) {
      throw Error(Errc::kVersion, "unsupported manifest format " + j.at("format").dump());
    }
    m.grid_n = j.value("grid_n", 4);
    if (j.contains("provider")) m.provider = provider_from(j.at("provider"), root);
    if (j.contains("dependencies")) m.dependencies = resolve(root, j.at("dependencies").get<std::string>());
    for (const auto& je : j.at("entries")) {
      ManifestEntry e;
      e.image = resolve(root, je.at("image").get<std::string>());
      const auto& label = je.at("label");
      if (!label.is_number_integer()) throw Error(Errc::kSchema, "manifest label must be an integer");
      e.label = label.get<int>();
      e.split = je.at("split").get<std::string>();
      if (je.contains("explanation")) {
        e.explanation_path = resolve(root, je.at("explanation").get<std::string>());
        if (!fs::exists(*e.explanation_path)) {
          throw Error(Errc::kNotFound, "missing explanation " + e.explanation_path->string());
        }
        e.explanation_text = read_file(*e.explanation_path);
      } else {
        e.explanation_text = je.value("explanation_text", std::string());
      }
      m.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::kSchema, std::string("manifest: ") + e.what());
  }
  validate_manifest(m);
  return m;
}

DatasetManifest load_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw Error(Errc::kNotFound, "manifest not found: " + path.string());
  return parse_manifest(read_file(path), path.parent_path());
}

std::string serialize_manifest(const DatasetManifest& m) {
  json j;
  j["format"] = std::string(kManifestFormat);
  j["grid_n"] = m.grid_n;
  j["provider"] = provider_json(m.provider, m.root);
  if (m.dependencies) j["dependencies"] = relative_to(m.root, *m.dependencies);
  j["entries"] = json::array();
  for (const auto& e : m.entries) {
    json je = {{"image", relative_to(m.root, e.image)}, {"label", e.label}, {"split", e.split}};
    if (e.explanation_path) {
      je["explanation"] = relative_to(m.root, *e.explanation_path);
    } else {
      je["explanation_text"] = e.explanation_text;
    }
    j["entries"].push_back(std::move(je));
  }
  return j.dump(2) + "\n";
}

std::unique_ptr<EmbeddingProvider> make_provider(const ProviderConfig& c) {
  switch (c.kind) {
    case ProviderKind::kToy:
      return std::make_unique<ToyProvider>(c.seed);
    case ProviderKind::kFixture:
      return std::make_unique<FixtureProvider>(FixtureStore::load(c.image_fixture),
                                               FixtureStore::load(c.token_fixture));
    case ProviderKind::kRemote: {
      if (c.endpoint.empty()) throw Error(Errc::kInvalidArgument, "remote provider needs an endpoint");
      RemoteConfig rc;
      rc.endpoint = c.endpoint;
      return std::make_unique<RemoteProvider>(rc, c.image_dim, c.text_dim);
    }
  }
  throw Error(Errc::kInvalidArgument, "unknown provider kind");
}

}  // namespace vigtext
