#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "vigtext/embed.hpp"
#include "vigtext/raster.hpp"
#include "vigtext/textgraph.hpp"

namespace vigtext {

inline constexpr std::string_view kGraphFormat = "vigtext-graph/1";

enum class NodeKind { kPatch, kWord };
enum class EdgeKind { kAdjacency, kDependency, kCross };
enum class Adjacency { kFour, kEight };

std::string_view node_kind_name(NodeKind kind);
std::string_view edge_kind_name(EdgeKind kind);

struct GraphNode {
  NodeKind kind = NodeKind::kPatch;
  EmbeddingVector feature;
  // Patch nodes: grid label. Word nodes: record/token indices and token text.
  std::string patch_label;
  int record = -1;
  int token = -1;
  std::string text;

  bool operator==(const GraphNode& other) const;
};

struct GraphEdge {
  EdgeKind kind = EdgeKind::kAdjacency;
  int u = 0;  // u < v
  int v = 0;

  bool operator==(const GraphEdge&) const = default;
  auto operator<=>(const GraphEdge& o) const {
    if (auto c = u <=> o.u; c != 0) return c;
    if (auto c = v <=> o.v; c != 0) return c;
    return static_cast<int>(kind) <=> static_cast<int>(o.kind);
  }
};

// Image graph plus explanation graphs. Patch nodes come first in row-major
// grid order, then word nodes ordered by (record, token). Edges are stored
// once, sorted, with u < v.
struct DualGraph {
  int grid_n = 0;
  std::optional<int> label;  // 0 real, 1 fake
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;

  int patch_count() const;
  int word_count() const { return static_cast<int>(nodes.size()) - patch_count(); }
  std::size_t count_edges(EdgeKind kind) const;
  // Widest feature over all nodes; the GNN input width.
  int feature_dim() const;

  bool operator==(const DualGraph&) const = default;
};

// Patches must cover a complete n x n grid (any order); `features[i]` belongs to patches[i].
DualGraph build_image_graph(std::span<const Patch> patches, std::span<const EmbeddingVector> features,
                            Adjacency adjacency = Adjacency::kFour);
DualGraph build_image_graph(std::span<const Patch> patches, const EmbeddingProvider& provider,
                            Adjacency adjacency = Adjacency::kFour);

DualGraph integrate(DualGraph g, std::span<const TextGraph> text_graphs);

// Empty when every DualGraph invariant holds; otherwise one message per violation.
std::vector<std::string> validate(const DualGraph& g);

// Canonical "vigtext-graph/1" JSON: sorted keys, canonical node/edge order,
// features as concatenated 16-digit hex of IEEE-754 bits.
std::string serialize(const DualGraph& g);
DualGraph deserialize(std::string_view bytes);

// Node features stacked row-wise and zero-padded to `dim` columns.
Eigen::MatrixXd feature_matrix(const DualGraph& g, int dim);

}  // namespace vigtext
