// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dataset ingestion, tokenization, n-gram TF-IDF features and word
// embedding tables.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lmtc {

enum class Split { kTrain, kDev, kTest };

std::string_view split_name(Split split);
Split parse_split(std::string_view name);

struct Document {
  std::string id;
  std::vector<std::string> tokens;
  // Sorted, unique.
  std::vector<std::string> gold_labels;

  bool operator==(const Document&) const = default;
};

struct Corpus {
  Split split = Split::kTrain;
  std::vector<Document> documents;
  // Sorted, unique. Shared by every split of one dataset.
  std::vector<std::string> label_universe;

  std::size_t doc_count() const { return documents.size(); }
  // Position of `label` in label_universe.
  std::optional<std::size_t> label_index(std::string_view label) const;

  bool operator==(const Corpus&) const = default;
};

struct DatasetSchema {
  Split split = Split::kTrain;
  // When set, every gold label must belong to it and it becomes the
  // corpus universe. Otherwise the universe is the union of gold labels.
  std::optional<std::vector<std::string>> label_universe;
};

// Lowercases ASCII letters and splits on whitespace and ASCII punctuation.
// Digits and non-ASCII bytes stay inside tokens.
std::vector<std::string> tokenize(std::string_view text);

Corpus load_dataset(const std::filesystem::path& path,
                    const DatasetSchema& schema = {});
Corpus read_dataset(std::istream& in, const DatasetSchema& schema = {});
// Writes the canonical line-delimited JSON form (tokens, not text).
void save_dataset(const Corpus& corpus, const std::filesystem::path& path);
void write_dataset(const Corpus& corpus, std::ostream& out);

std::vector<std::string> load_label_universe(const std::filesystem::path& path);
void save_label_universe(std::span<const std::string> labels,
                         const std::filesystem::path& path);
// Sorted union of the gold labels of all corpora.
std::vector<std::string> union_label_universe(
    std::span<const Corpus* const> corpora);

struct SparseVector {
  std::vector<std::uint32_t> indices;  // strictly increasing
  std::vector<double> values;

  std::size_t nnz() const { return indices.size(); }
  bool empty() const { return indices.empty(); }
  double norm() const;
  void normalize();

  bool operator==(const SparseVector&) const = default;
};

double sparse_dot(const SparseVector& a, const SparseVector& b);

struct Vocabulary {
  std::unordered_map<std::string, std::uint32_t> entries;
  std::vector<std::string> terms;  // terms[entries[t]] == t
  std::vector<double> idf;
  int ngram_max = 1;
  std::size_t max_features = 0;

  std::size_t size() const { return terms.size(); }
  std::optional<std::uint32_t> find(std::string_view term) const;
  // Content hash of terms and idf, used to pair models with vocabularies.
  std::uint64_t fingerprint() const;
};

// Calls fn(ngram) for every n-gram of orders 1..ngram_max, tokens joined by
// a single space.
template <typename Fn>
void for_each_ngram(std::span<const std::string> tokens, int ngram_max, Fn&& fn) {
  std::string gram;
  for (std::size_t start = 0; start < tokens.size(); ++start) {
    gram.clear();
    for (int n = 1; n <= ngram_max && start + n <= tokens.size(); ++n) {
      if (n > 1) gram.push_back(' ');
      gram.append(tokens[start + n - 1]);
      fn(static_cast<const std::string&>(gram));
    }
  }
}

// Keeps the max_features n-grams with the highest document frequency (ties
// broken lexicographically); idf = ln(N / df) + 1.
Vocabulary build_vocabulary(const Corpus& train, int ngram_max,
                            std::size_t max_features);

// count(t) * idf(t), L2-normalized. Out-of-vocabulary n-grams are dropped;
// a document with no known n-gram maps to the zero vector.
SparseVector vectorize_tfidf(const Document& doc, const Vocabulary& vocab);
std::vector<SparseVector> vectorize_corpus(const Corpus& corpus,
                                           const Vocabulary& vocab,
                                           unsigned threads = 1);

void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path);
Vocabulary load_vocabulary(const std::filesystem::path& path);

enum class OovPolicy { kSkip, kZero };

struct EmbeddingTable {
  std::size_t dim = 0;
  std::vector<std::string> words;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<double> data;  // words.size() x dim, row-major
  OovPolicy oov_policy = OovPolicy::kSkip;

  std::size_t size() const { return words.size(); }
  // Empty span for unknown words.
  std::span<const double> find(std::string_view word) const;
  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * dim, dim};
  }
};

EmbeddingTable load_embeddings(const std::filesystem::path& path);
EmbeddingTable read_embeddings(std::istream& in);

// Seeded uniform permutation of the tokens; labels untouched.
Document shuffle_tokens(const Document& doc, std::uint64_t seed);

}  // namespace lmtc
