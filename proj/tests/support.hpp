// SPDX-License-Identifier: Apache-2.0
#pragma once

// Synthetic fixtures and independent reference implementations shared by
// the unit tests and the acceptance runner. Oracles deliberately avoid the
// library code paths they check.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "lmtc/corpus.hpp"
#include "lmtc/hierarchy.hpp"
#include "lmtc/neural/model.hpp"
#include "lmtc/plt.hpp"

namespace lmtc::testing {

// ---- fixtures

Document make_doc(std::string id, std::string_view text, std::vector<std::string> labels);

// Random tree over n nodes named t000..; t000 is the root and every other
// node picks a parent among the earlier ones.
LabelGraph random_tree(std::size_t n, std::mt19937_64& rng);

// Every label owns `tokens_per_label` private tokens; each document carries
// 1..max_labels labels and the tokens of its labels plus shared noise.
Corpus separable_corpus(std::size_t docs, std::size_t labels, std::uint64_t seed,
                        Split split = Split::kTrain, std::size_t max_labels = 2,
                        std::size_t tokens_per_label = 3);

std::string label_id(std::size_t i);

// Gaussian vectors with unit-variance entries scaled by 1/sqrt(dim).
EmbeddingTable random_embeddings(const std::vector<std::string>& words, std::size_t dim,
                                 std::uint64_t seed);

// Labels are described by pairs of concept words; documents contain the
// concept words of their labels plus noise. Held-out labels reuse concept
// words of trained labels in new pairs and never occur in train or dev.
// Word vectors have unit-variance entries.
struct ZeroShotTask {
  Corpus train, dev, test;  // test gold sets hold exactly one unseen label
  LabelGraph graph;
  EmbeddingTable emb;
  std::vector<std::string> unseen;
};
ZeroShotTask zero_shot_task(std::uint64_t seed, std::size_t dim);

// Tiny model with random weights for gradient and identity checks.
neural::Model tiny_model(neural::Variant v, std::uint64_t seed, bool empty_adjacency = false,
                         neural::EncoderKind encoder = neural::EncoderKind::kBiGru);

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

void write_file(const std::filesystem::path& p, const std::string& text);

// Small on-disk dataset for command-line runs: canonical splits, label
// universe, a two-level hierarchy with descriptors, and word embeddings.
// The test split mixes seen labels with held-out ones.
struct CliFixture {
  std::filesystem::path train, dev, test, labels, hierarchy, descriptors, embeddings;
};
CliFixture write_cli_fixture(const std::filesystem::path& dir, std::uint64_t seed = 1);
std::string read_file(const std::filesystem::path& p);

// ---- oracles

// GAP on a tree: union of the unique paths of every gold pair, each found by
// climbing parent pointers to the lowest common ancestor.
struct TreeGap {
  std::size_t closure = 0;
  double gap = 1.0;
};
TreeGap tree_gap_oracle(const LabelGraph& tree, const std::vector<std::uint32_t>& gold);

struct BruteMetrics {
  double p = 0, r = 0, rp = 0, ndcg = 0;
};
// Direct evaluation of the metric definitions with explicit gain vectors.
BruteMetrics brute_metrics(const std::vector<std::string>& ranked,
                           const std::vector<std::string>& gold, std::size_t k);

// Expected nDCG@k of a uniformly random ranking of n labels with g gold.
double random_ndcg_expectation(std::size_t n, std::size_t g, std::size_t k);

// Path-product score of every label by recursive descent, with dot products
// evaluated through a hash map of the document's features.
std::vector<double> plt_path_oracle(const plt::PlTree& tree, const SparseVector& doc);

}  // namespace lmtc::testing
