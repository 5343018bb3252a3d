#include "vigtext/dualgraph.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "vigtext/error.hpp"

namespace vigtext {

using nlohmann::json;

std::string_view node_kind_name(NodeKind kind) { return kind == NodeKind::kPatch ? "patch" : "word"; }

std::string_view edge_kind_name(EdgeKind kind) {
  switch (kind) {
    case EdgeKind::kAdjacency: return "adjacency";
    case EdgeKind::kDependency: return "dependency";
    case EdgeKind::kCross: return "cross";
  }
  return "unknown";
}

bool GraphNode::operator==(const GraphNode& o) const {
  return kind == o.kind && patch_label == o.patch_label && record == o.record && token == o.token &&
         text == o.text && feature.size() == o.feature.size() && feature == o.feature;
}

int DualGraph::patch_count() const {
  return static_cast<int>(std::count_if(nodes.begin(), nodes.end(),
                                        [](const GraphNode& n) { return n.kind == NodeKind::kPatch; }));
}

std::size_t DualGraph::count_edges(EdgeKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(edges.begin(), edges.end(), [&](const GraphEdge& e) { return e.kind == kind; }));
}

int DualGraph::feature_dim() const {
  int dim = 0;
  for (const auto& n : nodes) dim = std::max(dim, static_cast<int>(n.feature.size()));
  return dim;
}

namespace {

void canonicalize_edges(std::vector<GraphEdge>& edges) {
  for (auto& e : edges) {
    if (e.u > e.v) std::swap(e.u, e.v);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
}

}  // namespace

DualGraph build_image_graph(std::span<const Patch> patches, std::span<const EmbeddingVector> features,
                            Adjacency adjacency) {
  if (patches.size() != features.size()) {
    throw Error(Errc::kInvalidArgument, "patch and feature counts differ");
  }
  const int n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(patches.size()))));
  if (n < 1 || static_cast<std::size_t>(n) * n != patches.size()) {
    throw Error(Errc::kInvalidArgument, "patches do not form a square grid");
  }
  std::vector<int> slot(patches.size(), -1);
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const auto& p = patches[i];
    if (p.row < 0 || p.col < 0 || p.row >= n || p.col >= n || p.label != grid_label(p.row, p.col)) {
      throw Error(Errc::kInvalidArgument, "patch '" + p.label + "' is not a cell of the " + std::to_string(n) +
                                              "x" + std::to_string(n) + " grid");
    }
    int& s = slot[static_cast<std::size_t>(p.row * n + p.col)];
    if (s != -1) throw Error(Errc::kInvalidArgument, "duplicate patch " + p.label + ": incomplete grid");
    s = static_cast<int>(i);
  }

  DualGraph g;
  g.grid_n = n;
  g.nodes.reserve(patches.size());
  for (int cell = 0; cell < n * n; ++cell) {
    const auto idx = static_cast<std::size_t>(slot[static_cast<std::size_t>(cell)]);
    GraphNode node;
    node.kind = NodeKind::kPatch;
    node.feature = features[idx];
    node.patch_label = patches[idx].label;
    g.nodes.push_back(std::move(node));
  }
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const int id = r * n + c;
      if (c + 1 < n) g.edges.push_back({EdgeKind::kAdjacency, id, id + 1});
      if (r + 1 < n) g.edges.push_back({EdgeKind::kAdjacency, id, id + n});
      if (adjacency == Adjacency::kEight && r + 1 < n) {
        if (c + 1 < n) g.edges.push_back({EdgeKind::kAdjacency, id, id + n + 1});
        if (c > 0) g.edges.push_back({EdgeKind::kAdjacency, id, id + n - 1});
      }
    }
  }
  canonicalize_edges(g.edges);
  return g;
}

DualGraph build_image_graph(std::span<const Patch> patches, const EmbeddingProvider& provider,
                            Adjacency adjacency) {
  const auto features = node_features(patches, provider);
  return build_image_graph(patches, features, adjacency);
}

DualGraph integrate(DualGraph g, std::span<const TextGraph> text_graphs) {
  std::map<std::string, int, std::less<>> patch_index;
  int next_record = 0;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const auto& node = g.nodes[i];
    if (node.kind == NodeKind::kPatch) patch_index.emplace(node.patch_label, static_cast<int>(i));
    else next_record = std::max(next_record, node.record + 1);
  }
  for (const auto& tg : text_graphs) {
    std::vector<int> anchors;
    for (const auto& label : tg.anchor_labels) {
      const auto it = patch_index.find(label);
      if (it == patch_index.end()) {
        throw Error(Errc::kInvalidArgument, "anchor label " + label + " does not name a patch node");
      }
      anchors.push_back(it->second);
    }
    const int base = static_cast<int>(g.nodes.size());
    const int k = static_cast<int>(tg.features.rows());
    for (int t = 0; t < k; ++t) {
      GraphNode node;
      node.kind = NodeKind::kWord;
      node.feature = tg.features.row(t).transpose();
      node.record = next_record;
      node.token = t;
      if (static_cast<std::size_t>(t) < tg.tokens.size()) node.text = tg.tokens[static_cast<std::size_t>(t)];
      g.nodes.push_back(std::move(node));
      for (int a : anchors) g.edges.push_back({EdgeKind::kCross, a, base + t});
    }
    for (const auto& [a, b] : tg.edges) {
      if (a < 0 || b < 0 || a >= k || b >= k) throw Error(Errc::kInvalidArgument, "text graph edge out of range");
      if (a == b) continue;
      g.edges.push_back({EdgeKind::kDependency, base + a, base + b});
    }
    ++next_record;
  }
  canonicalize_edges(g.edges);
  return g;
}

std::vector<std::string> validate(const DualGraph& g) {
  std::vector<std::string> problems;
  const int n_nodes = static_cast<int>(g.nodes.size());
  const int patches = g.patch_count();
  if (g.grid_n < 1) problems.push_back("grid_n must be >= 1");
  if (patches != g.grid_n * g.grid_n) {
    problems.push_back("expected " + std::to_string(g.grid_n * g.grid_n) + " patch nodes, found " +
                       std::to_string(patches));
  }
  if (g.label && *g.label != 0 && *g.label != 1) problems.push_back("label must be 0 or 1");
  std::pair<int, int> last_word{-1, -1};
  for (int i = 0; i < n_nodes; ++i) {
    const auto& node = g.nodes[static_cast<std::size_t>(i)];
    if (node.feature.size() == 0 || !node.feature.allFinite()) {
      problems.push_back("node " + std::to_string(i) + " has an empty or non-finite feature");
    }
    if (node.kind == NodeKind::kPatch) {
      if (i >= patches) problems.push_back("patch node " + std::to_string(i) + " follows a word node");
      else if (g.grid_n > 0 && node.patch_label != grid_label(i / g.grid_n, i % g.grid_n)) {
        problems.push_back("patch node " + std::to_string(i) + " label '" + node.patch_label +
                           "' breaks row-major order");
      }
    } else {
      const std::pair<int, int> key{node.record, node.token};
      if (node.record < 0 || node.token < 0 || key <= last_word) {
        problems.push_back("word node " + std::to_string(i) + " out of (record, token) order");
      }
      last_word = key;
    }
  }
  const GraphEdge* prev = nullptr;
  for (const auto& e : g.edges) {
    const std::string tag = "edge (" + std::to_string(e.u) + "," + std::to_string(e.v) + ")";
    if (e.u < 0 || e.v >= n_nodes || e.u >= e.v) {
      problems.push_back(tag + " is out of range, a self-loop, or not stored with u < v");
      continue;
    }
    if (prev && !(*prev < e)) problems.push_back(tag + " is duplicated or out of canonical order");
    prev = &e;
    const auto& a = g.nodes[static_cast<std::size_t>(e.u)];
    const auto& b = g.nodes[static_cast<std::size_t>(e.v)];
    switch (e.kind) {
      case EdgeKind::kAdjacency:
        if (a.kind != NodeKind::kPatch || b.kind != NodeKind::kPatch) {
          problems.push_back(tag + ": adjacency edge must join two patches");
        }
        break;
      case EdgeKind::kDependency:
        if (a.kind != NodeKind::kWord || b.kind != NodeKind::kWord || a.record != b.record) {
          problems.push_back(tag + ": dependency edge must join words of one record");
        }
        break;
      case EdgeKind::kCross:
        if (a.kind == b.kind) problems.push_back(tag + ": cross edge must join a word and a patch");
        break;
    }
  }
  // The same pair may not appear under two kinds either.
  std::set<std::pair<int, int>> pairs;
  for (const auto& e : g.edges) {
    if (!pairs.insert({e.u, e.v}).second) {
      problems.push_back("edge (" + std::to_string(e.u) + "," + std::to_string(e.v) + ") stored twice");
    }
  }
  return problems;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

std::string encode_feature(const EmbeddingVector& v) {
  std::string out;
  out.reserve(static_cast<std::size_t>(v.size()) * 16);
  char buf[17];
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(std::bit_cast<std::uint64_t>(v(i))));
    out.append(buf, 16);
  }
  return out;
}

EmbeddingVector decode_feature(const std::string& hex) {
  if (hex.empty() || hex.size() % 16 != 0) throw Error(Errc::kSchema, "feature hex length must be a multiple of 16");
  EmbeddingVector v(static_cast<Eigen::Index>(hex.size() / 16));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    std::uint64_t bits = 0;
    for (int k = 0; k < 16; ++k) {
      const char c = hex[static_cast<std::size_t>(i) * 16 + static_cast<std::size_t>(k)];
      int d;
      if (c >= '0' && c <= '9') d = c - '0';
      else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
      else throw Error(Errc::kSchema, "feature hex contains a non-lowercase-hex character");
      bits = (bits << 4) | static_cast<std::uint64_t>(d);
    }
    v(i) = std::bit_cast<double>(bits);
  }
  return v;
}

EdgeKind parse_edge_kind(const std::string& s) {
  if (s == "adjacency") return EdgeKind::kAdjacency;
  if (s == "dependency") return EdgeKind::kDependency;
  if (s == "cross") return EdgeKind::kCross;
  throw Error(Errc::kSchema, "unknown edge kind '" + s + "'");
}

}  // namespace

std::string serialize(const DualGraph& g) {
  json nodes = json::array();
  for (const auto& n : g.nodes) {
    json j;
    j["kind"] = node_kind_name(n.kind);
    j["feature"] = encode_feature(n.feature);
    if (n.kind == NodeKind::kPatch) {
      j["label"] = n.patch_label;
    } else {
      j["record"] = n.record;
      j["token"] = n.token;
      j["text"] = n.text;
    }
    nodes.push_back(std::move(j));
  }
  std::vector<GraphEdge> sorted = g.edges;
  canonicalize_edges(sorted);
  json edges = json::array();
  for (const auto& e : sorted) edges.push_back({{"kind", edge_kind_name(e.kind)}, {"u", e.u}, {"v", e.v}});
  json doc;
  doc["format"] = kGraphFormat;
  doc["grid_n"] = g.grid_n;
  doc["label"] = g.label ? json(*g.label) : json(nullptr);
  doc["nodes"] = std::move(nodes);
  doc["edges"] = std::move(edges);
  return doc.dump() + "\n";
}

DualGraph deserialize(std::string_view bytes) {
  json doc;
  try {
    doc = json::parse(bytes);
  } catch (const json::exception& e) {
    throw Error(Errc::kMalformed, std::string("graph is not valid JSON: ") + e.what());
  }
  DualGraph g;
  try {
    const auto format = doc.at("format").get<std::string>();
    if (format != kGraphFormat) {
      throw Error(Errc::kVersion, "graph format '" + format + "' is not " + std::string(kGraphFormat));
    }
    g.grid_n = doc.at("grid_n").get<int>();
    const auto& label = doc.at("label");
    if (!label.is_null()) g.label = label.get<int>();
    for (const auto& j : doc.at("nodes")) {
      GraphNode n;
      const auto kind = j.at("kind").get<std::string>();
      if (kind == "patch") {
        n.kind = NodeKind::kPatch;
        n.patch_label = j.at("label").get<std::string>();
      } else if (kind == "word") {
        n.kind = NodeKind::kWord;
        n.record = j.at("record").get<int>();
        n.token = j.at("token").get<int>();
        n.text = j.at("text").get<std::string>();
      } else {
        throw Error(Errc::kSchema, "unknown node kind '" + kind + "'");
      }
      n.feature = decode_feature(j.at("feature").get<std::string>());
      g.nodes.push_back(std::move(n));
    }
    for (const auto& j : doc.at("edges")) {
      g.edges.push_back({parse_edge_kind(j.at("kind").get<std::string>()), j.at("u").get<int>(), j.at("v").get<int>()});
    }
  } catch (const json::exception& e) {
    throw Error(Errc::kSchema, std::string("graph schema violation: ") + e.what());
  }
  const auto problems = validate(g);
  if (!problems.empty()) throw Error(Errc::kSchema, "invalid graph: " + problems.front());
  return g;
}

Eigen::MatrixXd feature_matrix(const DualGraph& g, int dim) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(g.nodes.size()), dim);
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const auto& f = g.nodes[i].feature;
    if (f.size() > dim) throw Error(Errc::kDimensionMismatch, "node feature wider than model input");
    x.row(static_cast<Eigen::Index>(i)).head(f.size()) = f.transpose();
  }
  return x;
}

}  // namespace vigtext
