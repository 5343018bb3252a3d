#include <atomic>
#include <exception>
#include <thread>

#include "vigtext/digest.hpp"
#include "vigtext/error.hpp"
#include "vigtext/io.hpp"
#include "vigtext/pipeline.hpp"

namespace vigtext {

namespace fs = std::filesystem;

GraphBuilder::GraphBuilder(const EmbeddingProvider& provider, int grid_n, const DependencyFixture* dependencies,
                           GraphBuildOptions options)
    : provider_(provider), grid_n_(grid_n), dependencies_(dependencies), options_(std::move(options)) {
  if (grid_n_ < 1) throw Error(Errc::kInvalidArgument, "grid_n must be >= 1");
  if (options_.workers < 1) options_.workers = 1;
  dependencies_digest_ = dependencies_ ? sha256_hex(dependencies_->serialize()) : "none";
}

std::string GraphBuilder::cache_key(const RasterImage& image, const std::string& explanation) const {
  const std::string key = to_hex(image_digest(image)) + "|" + sha256_hex(explanation) + "|" +
                          std::to_string(grid_n_) + "|" + provider_.id() + "|" +
                          (options_.adjacency == Adjacency::kFour ? "4" : "8") + "|" + dependencies_digest_;
  return sha256_hex(key);
}

std::vector<ExplanationRecord> GraphBuilder::records(const std::string& explanation,
                                                     std::vector<Diagnostic>* diags) const {
  ParseResult parsed = parse_explanations(explanation, grid_n_);
  if (diags) diags->insert(diags->end(), parsed.diagnostics.begin(), parsed.diagnostics.end());
  std::vector<ExplanationRecord> out;
  out.reserve(parsed.records.size());
  for (auto& r : parsed.records) out.push_back(enrich_record(std::move(r), dependencies_, diags));
  return out;
}

std::vector<TextGraph> GraphBuilder::text_graphs(const std::string& explanation,
                                                 std::vector<Diagnostic>* diags) const {
  std::vector<TextGraph> out;
  for (const auto& r : records(explanation, diags)) {
    if (r.tokens.empty()) continue;
    out.push_back(build_text_graph(r, provider_));
  }
  return out;
}

BuiltGraph GraphBuilder::build(const RasterImage& image, const std::string& explanation,
                               std::optional<int> label) const {
  BuiltGraph result;
  std::optional<fs::path> cached;
  if (options_.cache_dir) {
    cached = *options_.cache_dir / (cache_key(image, explanation) + ".json");
    if (fs::exists(*cached)) {
      try {
        result.graph = deserialize(read_file(*cached));
        result.graph.label = label;
        result.cache_hit = true;
        records(explanation, &result.diagnostics);
        return result;
      } catch (const Error&) {
        // Unreadable cache entries are rebuilt below.
      }
    }
  }
  const auto patches = split_patches(image, grid_n_);
  DualGraph g = build_image_graph(patches, provider_, options_.adjacency);
  g = integrate(std::move(g), text_graphs(explanation, &result.diagnostics));
  g.label = label;
  if (cached) {
    DualGraph stored = g;
    stored.label.reset();
    write_file_atomic(*cached, serialize(stored));
  }
  result.graph = std::move(g);
  return result;
}

std::vector<BuiltGraph> GraphBuilder::build_entries(const DatasetManifest& m,
                                                    const std::vector<std::size_t>& indices) const {
  return build_entries(m, indices, nullptr);
}

std::vector<BuiltGraph> GraphBuilder::build_entries(
    const DatasetManifest& m, const std::vector<std::size_t>& indices,
    const std::function<RasterImage(const RasterImage&, std::size_t)>& perturb) const {
  std::vector<BuiltGraph> out(indices.size());
  std::vector<std::exception_ptr> errors(indices.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < indices.size(); i = next.fetch_add(1)) {
      try {
        const ManifestEntry& e = m.entries.at(indices[i]);
        RasterImage img = load_image(e.image);
        if (perturb) img = perturb(img, indices[i]);
        out[i] = build(img, e.explanation_text, e.label);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  {
    const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(options_.workers), indices.size());
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::optional<DependencyFixture> manifest_dependencies(const DatasetManifest& m) {
  if (!m.dependencies) return std::nullopt;
  return DependencyFixture::load(*m.dependencies);
}

}  // namespace vigtext
