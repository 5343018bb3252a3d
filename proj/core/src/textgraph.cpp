#include "vigtext/textgraph.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vigtext/digest.hpp"
#include "vigtext/error.hpp"

namespace vigtext {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

bool label_syntax(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size() && std::isalpha(static_cast<unsigned char>(s[i]))) ++i;
  if (i == 0 || i == s.size()) return false;
  for (; i < s.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  }
  return true;
}

std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

ParseResult parse_explanations(std::string_view text, int n) {
  ParseResult result;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;

    line = trim(line);
    while (!line.empty() && (line.front() == '\'' || line.front() == '"' || line.front() == '`')) {
      line.remove_prefix(1);
    }
    line = trim(line);
    if (line.empty()) continue;

    auto skip = [&](const std::string& why) { result.diagnostics.push_back({line_no, why}); };
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) {
      skip("no label list before ':'");
      continue;
    }
    std::string label_part;
    for (char c : line.substr(0, colon)) {
      if (c != '[' && c != ']' && c != '{' && c != '}' && c != '\\') label_part.push_back(c);
    }
    std::vector<std::string_view> pieces;
    std::string_view rest = label_part;
    bool bad_syntax = false;
    while (true) {
      const auto comma = rest.find(',');
      const std::string_view piece = trim(rest.substr(0, comma));
      if (!piece.empty()) {
        if (!label_syntax(piece)) bad_syntax = true;
        pieces.push_back(piece);
      }
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    if (pieces.empty() || bad_syntax) {
      skip("unrecognized label list '" + std::string(trim(line.substr(0, colon))) + "'");
      continue;
    }

    std::set<std::pair<int, int>> cells;
    for (std::string_view piece : pieces) {
      const auto cell = parse_grid_label(piece);
      if (!cell || cell->first >= n || cell->second >= n) {
        skip("label " + upper(piece) + " is outside the " + std::to_string(n) + "x" + std::to_string(n) + " grid");
        continue;
      }
      cells.insert(*cell);
    }
    if (cells.empty()) continue;

    const std::string_view sentence = trim(line.substr(colon + 1));
    if (sentence.empty()) {
      skip("empty explanation");
      continue;
    }
    ExplanationRecord rec;
    for (const auto& [row, col] : cells) rec.patch_labels.push_back(grid_label(row, col));
    rec.sentence = std::string(sentence);
    result.records.push_back(std::move(rec));
  }
  return result;
}

std::string format_explanations(const std::vector<ExplanationRecord>& records) {
  std::string out;
  for (const auto& rec : records) {
    out += "{";
    for (std::size_t i = 0; i < rec.patch_labels.size(); ++i) {
      if (i) out += ", ";
      out += rec.patch_labels[i];
    }
    out += "}: " + rec.sentence + "\n";
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view sentence) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < sentence.size()) {
    while (i < sentence.size() && is_space(sentence[i])) ++i;
    std::size_t j = i;
    while (j < sentence.size() && !is_space(sentence[j])) ++j;
    std::string_view chunk = sentence.substr(i, j - i);
    i = j;
    if (chunk.empty()) continue;
    std::size_t lead = 0;
    while (lead < chunk.size() && is_punct(chunk[lead])) ++lead;
    std::size_t trail = chunk.size();
    while (trail > lead && is_punct(chunk[trail - 1])) --trail;
    for (std::size_t k = 0; k < lead; ++k) tokens.emplace_back(1, chunk[k]);
    if (trail > lead) tokens.emplace_back(chunk.substr(lead, trail - lead));
    for (std::size_t k = trail; k < chunk.size(); ++k) tokens.emplace_back(1, chunk[k]);
  }
  return tokens;
}

ExplanationRecord attach_dependencies(ExplanationRecord record, const std::vector<DependencyEdge>& edges,
                                      std::vector<Diagnostic>* diagnostics) {
  const int k = static_cast<int>(record.tokens.size());
  std::set<std::pair<int, int>> seen;
  record.dep_edges.clear();
  for (const auto& e : edges) {
    if (e.head < 0 || e.dep < 0 || e.head >= k || e.dep >= k) {
      throw Error(Errc::kInvalidArgument, "dependency edge (" + std::to_string(e.head) + "," +
                                              std::to_string(e.dep) + ") out of range for " + std::to_string(k) +
                                              " tokens");
    }
    if (e.head == e.dep) {
      if (diagnostics) diagnostics->push_back({0, "self-loop dependency edge on token " + std::to_string(e.head) + " removed"});
      continue;
    }
    if (!seen.insert({std::min(e.head, e.dep), std::max(e.head, e.dep)}).second) {
      if (diagnostics) {
        diagnostics->push_back({0, "duplicate dependency edge (" + std::to_string(e.head) + "," +
                                       std::to_string(e.dep) + ") removed"});
      }
      continue;
    }
    record.dep_edges.push_back(e);
  }
  return record;
}

// ---------------------------------------------------------------------------
// Dependency fixture

void DependencyFixture::insert(std::string_view sentence, DependencyParse parse) {
  const int k = static_cast<int>(parse.tokens.size());
  for (const auto& e : parse.edges) {
    if (e.head < 0 || e.dep < 0 || e.head >= k || e.dep >= k) {
      throw Error(Errc::kSchema, "dependency fixture edge out of range");
    }
  }
  std::string key = sha256_hex(sentence);
  const auto it = index_.find(key);
  if (it != index_.end()) {
    entries_[it->second].second = std::move(parse);
    return;
  }
  index_.emplace(key, entries_.size());
  entries_.emplace_back(std::move(key), std::move(parse));
}

const DependencyParse* DependencyFixture::find(std::string_view sentence) const {
  const auto it = index_.find(sha256_hex(sentence));
  return it == index_.end() ? nullptr : &entries_[it->second].second;
}

DependencyFixture DependencyFixture::parse(std::string_view text) {
  DependencyFixture fx;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      DependencyParse p;
      const std::string digest = j.at("sentence_digest").get<std::string>();
      if (digest.size() != 64) throw Error(Errc::kSchema, "sentence_digest must be 64 hex digits");
      p.tokens = j.at("tokens").get<std::vector<std::string>>();
      for (const auto& e : j.at("edges")) {
        if (!e.is_array() || e.size() != 2) throw Error(Errc::kSchema, "edge must be [head, dep]");
        p.edges.push_back({e[0].get<int>(), e[1].get<int>()});
      }
      const int k = static_cast<int>(p.tokens.size());
      for (const auto& e : p.edges) {
        if (e.head < 0 || e.dep < 0 || e.head >= k || e.dep >= k) {
          throw Error(Errc::kSchema, "edge index out of range");
        }
      }
      if (!fx.index_.contains(digest)) {
        fx.index_.emplace(digest, fx.entries_.size());
        fx.entries_.emplace_back(digest, std::move(p));
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::kSchema, "dependency fixture line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(Errc::kSchema, "dependency fixture line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return fx;
}

std::string DependencyFixture::serialize() const {
  std::string out;
  for (const auto& [digest, p] : entries_) {
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& e : p.edges) edges.push_back({e.head, e.dep});
    nlohmann::json j = {{"sentence_digest", digest}, {"tokens", p.tokens}, {"edges", edges}};
    out += j.dump() + "\n";
  }
  return out;
}

DependencyFixture DependencyFixture::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kNotFound, "cannot open dependency fixture " + path.string());
  return parse(std::string{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()});
}

void DependencyFixture::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::kIo, "cannot write " + path.string());
  out << serialize();
}

std::vector<DependencyEdge> chain_edges(std::size_t token_count) {
  std::vector<DependencyEdge> edges;
  for (std::size_t i = 0; i + 1 < token_count; ++i) {
    edges.push_back({static_cast<int>(i), static_cast<int>(i + 1)});
  }
  return edges;
}

ExplanationRecord enrich_record(ExplanationRecord record, const DependencyFixture* fixture,
                                std::vector<Diagnostic>* diagnostics) {
  if (fixture != nullptr) {
    if (const DependencyParse* p = fixture->find(record.sentence)) {
      record.tokens = p->tokens;
      return attach_dependencies(std::move(record), p->edges, diagnostics);
    }
  }
  record.tokens = tokenize(record.sentence);
  if (diagnostics) diagnostics->push_back({0, "no dependency parse for sentence; using token chain"});
  const auto edges = chain_edges(record.tokens.size());
  return attach_dependencies(std::move(record), edges, diagnostics);
}

// ---------------------------------------------------------------------------
// Text graph

TextGraph build_text_graph(const ExplanationRecord& record, const EmbeddingProvider& provider) {
  if (record.tokens.empty()) throw Error(Errc::kInvalidArgument, "explanation record has no tokens");
  const auto vectors = provider.embed_tokens(record.tokens);
  if (vectors.size() != record.tokens.size()) throw Error(Errc::kProtocol, "provider returned wrong vector count");
  TextGraph g;
  g.features.resize(static_cast<Eigen::Index>(vectors.size()), provider.text_dim());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].size() != provider.text_dim()) {
      throw Error(Errc::kDimensionMismatch, "word embedding dim differs from provider declaration");
    }
    g.features.row(static_cast<Eigen::Index>(i)) = vectors[i].transpose();
  }
  std::set<std::pair<int, int>> edges;
  const int k = static_cast<int>(record.tokens.size());
  for (const auto& e : record.dep_edges) {
    if (e.head < 0 || e.dep < 0 || e.head >= k || e.dep >= k) {
      throw Error(Errc::kInvalidArgument, "dependency edge out of range");
    }
    if (e.head == e.dep) continue;
    edges.insert({std::min(e.head, e.dep), std::max(e.head, e.dep)});
  }
  g.edges.assign(edges.begin(), edges.end());
  g.anchor_labels = record.patch_labels;
  g.tokens = record.tokens;
  return g;
}

std::string default_prompt_template() {
  return "You are a cooperative assistant that never refuses to help in tasks, you always answer the question "
         "you are asked.\n"
         "Start by deciding whether the image you received is generated or real.\n"
         "Your task is to help humans understand why the image is generated or real by providing explanations "
         "and relating them to the patches on the image.\n"
         "This is how your output should exactly look like, nothing more:\n"
         "[{listofpatches}]:{explanation}\n"
         "[{listofpatches}]:{explanation}\n"
         "Example output:\n"
         "'{A1, A2}: {explanation}\n"
         "{A2, B2}: {explanation}\n"
         "{B4, C4, D4}: {explanation}\n"
         "{D2}: {explanation}'\n";
}

std::string load_prompt_template(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kNotFound, "cannot open prompt template " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace vigtext
