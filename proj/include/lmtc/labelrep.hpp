// SPDX-License-Identifier: Apache-2.0
#pragma once

// Frozen per-label input vectors for the zero-shot networks: descriptor
// centroids, node2vec graph embeddings, and their concatenation.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lmtc/corpus.hpp"
#include "lmtc/hierarchy.hpp"

namespace lmtc::labelrep {

enum class VectorKind { kCentroid, kNode2Vec, kConcat };

struct LabelVectors {
  VectorKind kind = VectorKind::kCentroid;
  std::vector<std::string> labels;  // row order
  std::size_t dim = 0;
  std::vector<double> matrix;  // labels.size() x dim, row-major
  bool frozen = true;
  std::vector<std::string> zero_rows;  // labels whose descriptor was all OOV
  std::vector<std::string> warnings;

  std::size_t rows() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return {matrix.data() + i * dim, dim};
  }
  std::uint64_t checksum() const;
  // Rows reordered to `order`; throws if a label is missing.
  LabelVectors select(std::span<const std::string> order) const;
};

// One row per graph node, in graph order. u_l is the mean embedding of the
// descriptor tokens; OOV tokens are skipped or count as zero vectors
// according to emb.oov_policy.
LabelVectors centroid_label_vectors(const LabelGraph& graph, const EmbeddingTable& emb);

struct WalkConfig {
  double p = 1.0;
  double q = 1.0;
  std::size_t walk_len = 40;
  std::size_t walks_per_node = 10;
  std::size_t window = 5;
  std::size_t negatives = 5;
  std::size_t dim = 100;
  std::size_t epochs = 1;
  double learning_rate = 0.025;
  std::uint64_t seed = 1;

  void validate() const;
};

// Unnormalized second-order transition weights out of `cur` having arrived
// from `prev`: 1/p back to prev, 1 to common neighbors of prev, 1/q to the
// rest. Without a previous node every neighbor weighs 1.
std::vector<std::pair<std::uint32_t, double>> transition_weights(
    const LabelGraph& graph, std::optional<std::uint32_t> prev, std::uint32_t cur,
    double p, double q);

using Walk = std::vector<std::uint32_t>;

// walks_per_node walks per start node, rounds outermost. Each walk draws
// from its own seed stream, so walks can be produced in parallel.
std::vector<Walk> node2vec_walks(const LabelGraph& graph, const WalkConfig& config,
                                 unsigned threads = 1);

struct SkipGramResult {
  LabelVectors vectors;
  std::vector<double> epoch_loss;  // mean SGNS loss per epoch
};

// Skip-gram with negative sampling over node windows; single-threaded and
// deterministic for a given config.seed.
SkipGramResult train_skipgram(const LabelGraph& graph, std::span<const Walk> walks,
                              const WalkConfig& config);

enum class ComposeMode { kCentroid, kGraph, kConcat };

LabelVectors compose_label_inputs(ComposeMode mode, const LabelVectors& centroid,
                                  const LabelVectors* walked);

// "label v1 ... vdim" rows, round-trip precision.
void save_label_vectors(const LabelVectors& v, const std::filesystem::path& path);
LabelVectors load_label_vectors(const std::filesystem::path& path, VectorKind kind);

}  // namespace lmtc::labelrep
