#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "vigtext/embed.hpp"

namespace vigtext {

struct DependencyEdge {
  int head = 0;
  int dep = 0;

  bool operator==(const DependencyEdge&) const = default;
};

struct ExplanationRecord {
  std::vector<std::string> patch_labels;  // unique, row-major grid order
  std::string sentence;
  std::vector<std::string> tokens;
  std::vector<DependencyEdge> dep_edges;

  bool operator==(const ExplanationRecord&) const = default;
};

struct Diagnostic {
  int line = 0;  // 1-based; 0 when not tied to an input line
  std::string message;
};

struct ParseResult {
  std::vector<ExplanationRecord> records;
  std::vector<Diagnostic> diagnostics;
};

// Total parser for "{B3, B4}: sentence" lines. Braces and the surrounding
// square brackets are optional; labels outside the n x n grid are dropped with
// a diagnostic and lines left without any label are skipped.
ParseResult parse_explanations(std::string_view text, int n);
std::string format_explanations(const std::vector<ExplanationRecord>& records);

// Whitespace split, with leading and trailing punctuation peeled into
// one-character tokens. Inner punctuation ("don't") stays put.
std::vector<std::string> tokenize(std::string_view sentence);

// Validates and stores dependency edges. Self-loops and duplicates (in either
// direction) are removed and reported through `diagnostics` when given.
ExplanationRecord attach_dependencies(ExplanationRecord record, const std::vector<DependencyEdge>& edges,
                                      std::vector<Diagnostic>* diagnostics = nullptr);

struct DependencyParse {
  std::vector<std::string> tokens;
  std::vector<DependencyEdge> edges;
};

// JSON-lines dependency fixture keyed by SHA-256 of the sentence bytes:
// {"sentence_digest": hex, "tokens": [...], "edges": [[head, dep], ...]}
class DependencyFixture {
 public:
  static DependencyFixture load(const std::filesystem::path& path);
  static DependencyFixture parse(std::string_view text);
  std::string serialize() const;
  void save(const std::filesystem::path& path) const;

  void insert(std::string_view sentence, DependencyParse parse);
  const DependencyParse* find(std::string_view sentence) const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<std::pair<std::string, DependencyParse>> entries_;  // insertion order
  std::unordered_map<std::string, std::size_t> index_;
};

// Fills tokens and edges: fixture hit first, otherwise tokenize() with a
// left-to-right chain (token i heads token i+1) and a diagnostic.
ExplanationRecord enrich_record(ExplanationRecord record, const DependencyFixture* fixture,
                                std::vector<Diagnostic>* diagnostics = nullptr);
std::vector<DependencyEdge> chain_edges(std::size_t token_count);

struct TextGraph {
  Eigen::MatrixXd features;  // one row per token
  std::vector<std::pair<int, int>> edges;  // undirected, u < v
  std::vector<std::string> anchor_labels;
  std::vector<std::string> tokens;
};

TextGraph build_text_graph(const ExplanationRecord& record, const EmbeddingProvider& provider);

std::string default_prompt_template();
std::string load_prompt_template(const std::filesystem::path& path);

}  // namespace vigtext
