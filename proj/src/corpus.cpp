// SPDX-License-Identifier: Apache-2.0
#include "lmtc/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "lmtc/container.hpp"
#include "lmtc/error.hpp"
#include "lmtc/parallel.hpp"

namespace lmtc {

using nlohmann::json;

std::string_view split_name(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kDev:
      return "dev";
    case Split::kTest:
      return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "dev") return Split::kDev;
  if (name == "test") return Split::kTest;
  throw Error("unknown split '" + std::string(name) + "'");
}

std::optional<std::size_t> Corpus::label_index(std::string_view label) const {
  auto it = std::lower_bound(label_universe.begin(), label_universe.end(), label);
  if (it == label_universe.end() || *it != label) return std::nullopt;
  return static_cast<std::size_t>(it - label_universe.begin());
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    const bool word = c >= 0x80 || std::isalnum(c);
    if (word) {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

namespace {

Document parse_record(const json& rec) {
  if (!rec.is_object()) throw Error("record is not a JSON object");
  Document doc;
  auto id = rec.find("id");
  if (id == rec.end() || !id->is_string()) throw Error("missing string field 'id'");
  doc.id = id->get<std::string>();
  auto tokens = rec.find("tokens");
  auto text = rec.find("text");
  if (tokens != rec.end()) {
    if (!tokens->is_array()) throw Error("'tokens' must be an array");
    for (const auto& t : *tokens) {
      if (!t.is_string()) throw Error("'tokens' must contain strings");
      doc.tokens.push_back(t.get<std::string>());
    }
  } else if (text != rec.end()) {
    if (!text->is_string()) throw Error("'text' must be a string");
    doc.tokens = tokenize(text->get<std::string>());
  } else {
    throw Error("record needs 'text' or 'tokens'");
  }
  auto labels = rec.find("labels");
  if (labels == rec.end() || !labels->is_array())
    throw Error("missing array field 'labels'");
  for (const auto& l : *labels) {
    if (!l.is_string()) throw Error("'labels' must contain strings");
    doc.gold_labels.push_back(l.get<std::string>());
  }
  std::sort(doc.gold_labels.begin(), doc.gold_labels.end());
  doc.gold_labels.erase(std::unique(doc.gold_labels.begin(), doc.gold_labels.end()),
                        doc.gold_labels.end());
  return doc;
}

}  // namespace

Corpus read_dataset(std::istream& in, const DatasetSchema& schema) {
  Corpus corpus;
  corpus.split = schema.split;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    Document doc;
    try {
      doc = parse_record(json::parse(line));
    } catch (const json::exception& e) {
      throw Error("line " + std::to_string(lineno) + ": malformed record: " + e.what());
    } catch (const Error& e) {
      throw Error("line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!seen.insert(doc.id).second) throw Error("duplicate document id " + doc.id);
    corpus.documents.push_back(std::move(doc));
  }
  if (schema.label_universe) {
    corpus.label_universe = *schema.label_universe;
    std::sort(corpus.label_universe.begin(), corpus.label_universe.end());
    corpus.label_universe.erase(
        std::unique(corpus.label_universe.begin(), corpus.label_universe.end()),
        corpus.label_universe.end());
    for (const auto& d : corpus.documents)
      for (const auto& l : d.gold_labels)
        if (!corpus.label_index(l))
          throw Error("document " + d.id + ": label " + l +
                      " is not in the label universe");
  } else {
    const Corpus* one[] = {&corpus};
    corpus.label_universe = union_label_universe(one);
  }
  return corpus;
}

Corpus load_dataset(const std::filesystem::path& path, const DatasetSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read dataset " + path.string());
  try {
    return read_dataset(in, schema);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

void write_dataset(const Corpus& corpus, std::ostream& out) {
  for (const auto& d : corpus.documents) {
    json rec = json::object();
    rec["id"] = d.id;
    rec["tokens"] = d.tokens;
    rec["labels"] = d.gold_labels;
    out << rec.dump() << '\n';
  }
}

void save_dataset(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  write_dataset(corpus, out);
}

std::vector<std::string> load_label_universe(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read label file " + path.string());
  std::vector<std::string> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) labels.push_back(line);
  }
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  return labels;
}

void save_label_universe(std::span<const std::string> labels,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& l : labels) out << l << '\n';
}

std::vector<std::string> union_label_universe(std::span<const Corpus* const> corpora) {
  std::set<std::string> all;
  for (const Corpus* c : corpora)
    for (const auto& d : c->documents) all.insert(d.gold_labels.begin(), d.gold_labels.end());
  return {all.begin(), all.end()};
}

double SparseVector::norm() const {
  double s = 0.0;
  for (double v : values) s += v * v;
  return std::sqrt(s);
}

void SparseVector::normalize() {
  const double n = norm();
  if (n > 0.0)
    for (double& v : values) v /= n;
}

double sparse_dot(const SparseVector& a, const SparseVector& b) {
  double s = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.indices.size() && j < b.indices.size()) {
    if (a.indices[i] < b.indices[j]) {
      ++i;
    } else if (a.indices[i] > b.indices[j]) {
      ++j;
    } else {
      s += a.values[i++] * b.values[j++];
    }
  }
  return s;
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view term) const {
  auto it = entries.find(std::string(term));
  if (it == entries.end()) return std::nullopt;
  return it->second;
}

std::uint64_t Vocabulary::fingerprint() const {
  std::uint64_t h = fnv1a(std::to_string(ngram_max));
  for (const auto& t : terms) {
    h = fnv1a(t, h);
    h = fnv1a(std::string_view("\n"), h);
  }
  return fnv1a(std::span<const double>(idf), h);
}

Vocabulary build_vocabulary(const Corpus& train, int ngram_max,
                            std::size_t max_features) {
  if (ngram_max < 1) throw Error("ngram_max must be >= 1");
  if (train.documents.empty()) throw Error("cannot build a vocabulary from an empty corpus");
  std::unordered_map<std::string, std::uint32_t> df;
  std::unordered_set<std::string> in_doc;
  for (const auto& d : train.documents) {
    in_doc.clear();
    for_each_ngram(d.tokens, ngram_max, [&](const std::string& g) {
      if (in_doc.insert(g).second) ++df[g];
    });
  }
  std::vector<std::pair<std::string, std::uint32_t>> ranked(df.begin(), df.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (ranked.size() > max_features) ranked.resize(max_features);

  Vocabulary v;
  v.ngram_max = ngram_max;
  v.max_features = max_features;
  const double n = static_cast<double>(train.documents.size());
  for (auto& [term, count] : ranked) {
    v.entries.emplace(term, static_cast<std::uint32_t>(v.terms.size()));
    v.idf.push_back(std::log(n / count) + 1.0);
    v.terms.push_back(std::move(term));
  }
  return v;
}

SparseVector vectorize_tfidf(const Document& doc, const Vocabulary& vocab) {
  std::unordered_map<std::uint32_t, std::uint32_t> counts;
  for_each_ngram(doc.tokens, vocab.ngram_max, [&](const std::string& g) {
    auto it = vocab.entries.find(g);
    if (it != vocab.entries.end()) ++counts[it->second];
  });
  SparseVector v;
  v.indices.reserve(counts.size());
  for (const auto& [idx, c] : counts) v.indices.push_back(idx);
  std::sort(v.indices.begin(), v.indices.end());
  v.values.reserve(v.indices.size());
  for (auto idx : v.indices) v.values.push_back(counts[idx] * vocab.idf[idx]);
  v.normalize();
  return v;
}

std::vector<SparseVector> vectorize_corpus(const Corpus& corpus,
                                           const Vocabulary& vocab,
                                           unsigned threads) {
  std::vector<SparseVector> out(corpus.documents.size());
  parallel_for(out.size(), threads,
               [&](std::size_t i) { out[i] = vectorize_tfidf(corpus.documents[i], vocab); });
  return out;
}

void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path) {
  Container c("vocab");
  c.header()["ngram_max"] = vocab.ngram_max;
  c.header()["max_features"] = vocab.max_features;
  c.header()["size"] = vocab.size();
  c.header()["fingerprint"] = hex64(vocab.fingerprint());
  std::string joined;
  for (const auto& t : vocab.terms) {
    joined += t;
    joined.push_back('\n');
  }
  c.add_bytes("terms", joined);
  c.add_f64("idf", {vocab.idf.size()}, vocab.idf);
  c.save(path);
}

Vocabulary load_vocabulary(const std::filesystem::path& path) {
  Container c = Container::load(path, "vocab");
  Vocabulary v;
  v.ngram_max = c.header().at("ngram_max").get<int>();
  v.max_features = c.header().at("max_features").get<std::size_t>();
  std::istringstream terms(c.bytes("terms"));
  std::string t;
  while (std::getline(terms, t)) {
    v.entries.emplace(t, static_cast<std::uint32_t>(v.terms.size()));
    v.terms.push_back(t);
  }
  v.idf = c.real("idf");
  if (v.idf.size() != v.terms.size()) throw Error(path.string() + ": vocabulary is corrupt");
  return v;
}

std::span<const double> EmbeddingTable::find(std::string_view word) const {
  auto it = index.find(std::string(word));
  if (it == index.end()) return {};
  return row(it->second);
}

EmbeddingTable read_embeddings(std::istream& in) {
  EmbeddingTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string word;
    if (!(ss >> word)) continue;
    std::vector<double> row;
    std::string tok;
    while (ss >> tok) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw Error("invalid number '" + tok + "' at line " + std::to_string(lineno));
      }
    }
    if (t.dim == 0) {
      if (row.empty()) throw Error("no vector values at line " + std::to_string(lineno));
      t.dim = row.size();
    } else if (row.size() != t.dim) {
      throw Error("dimension mismatch at line " + std::to_string(lineno));
    }
    if (t.index.contains(word)) continue;  // first occurrence wins
    t.index.emplace(word, t.words.size());
    t.words.push_back(word);
    t.data.insert(t.data.end(), row.begin(), row.end());
  }
  if (t.words.empty()) throw Error("no embeddings");
  return t;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read embeddings " + path.string());
  try {
    return read_embeddings(in);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

Document shuffle_tokens(const Document& doc, std::uint64_t seed) {
  Document out = doc;
  std::mt19937_64 rng(seed);
  std::shuffle(out.tokens.begin(), out.tokens.end(), rng);
  return out;
}

}  // namespace lmtc
