// SPDX-License-Identifier: Apache-2.0
#pragma once

// Probabilistic label trees: label partitioning by balanced spherical
// k-means, per-node one-vs-rest logistic classifiers, and beam-search
// inference with multiplicative path probabilities.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lmtc/corpus.hpp"
#include "lmtc/logistic.hpp"

namespace lmtc::plt {

struct PltConfig {
  std::size_t k = 2;     // branching factor
  std::size_t m = 100;   // max labels per leaf
  std::size_t beam = 10;
  double l2 = 1.0;
  double weight_prune_eps = 0.01;
  int kmeans_max_iter = 50;
  double solver_tolerance = 1e-4;

  void validate() const;
};

// Bias applied to classifiers of nodes that saw no training documents.
inline constexpr float kAlwaysNegativeBias = -30.0f;

// Sparse weights for the targets of one node, CSR by target.
struct NodeClassifier {
  std::vector<std::uint32_t> offsets{0};  // size targets + 1
  std::vector<std::uint32_t> indices;
  std::vector<float> weights;
  std::vector<float> bias;

  std::size_t targets() const { return bias.size(); }
  std::span<const std::uint32_t> target_indices(std::size_t t) const {
    return std::span(indices).subspan(offsets[t], offsets[t + 1] - offsets[t]);
  }
  std::span<const float> target_weights(std::size_t t) const {
    return std::span(weights).subspan(offsets[t], offsets[t + 1] - offsets[t]);
  }
  bool operator==(const NodeClassifier&) const = default;
};

struct PltNode {
  std::uint32_t id = 0;
  std::vector<std::uint32_t> labels;    // sorted label indices
  std::vector<std::uint32_t> children;  // node ids, empty at leaves
  // Targets are the children at internal nodes and the labels at leaves.
  NodeClassifier classifier;

  bool is_leaf() const { return children.empty(); }
  bool operator==(const PltNode&) const = default;
};

struct PlTree {
  std::uint32_t root = 0;
  std::vector<PltNode> nodes;  // index == id, breadth-first order
  PltConfig config;
  std::size_t feature_dim = 0;
  std::vector<std::string> label_names;  // label index -> id
  bool trained = false;
  std::uint64_t vocab_fingerprint = 0;

  std::size_t depth() const;
  std::size_t leaf_count() const;
};

struct LabelVector {
  std::uint32_t label = 0;
  SparseVector vector;
};

// Mean of the features of each label's positive training documents,
// L2-normalized. Labels with no training document are omitted.
std::vector<LabelVector> label_feature_vectors(const Corpus& train,
                                               std::span<const SparseVector> features);

// Spherical k-means with exact balance: group sizes differ by at most one.
// Returns the group of each input vector. Throws if vectors.size() < k.
std::vector<std::uint32_t> balanced_kmeans(std::span<const SparseVector> vectors,
                                           std::size_t k, std::uint64_t seed,
                                           int max_iter = 50);

PlTree build_tree(std::span<const LabelVector> label_vectors, const PltConfig& config,
                  std::uint64_t seed, std::size_t feature_dim,
                  std::vector<std::string> label_names = {});

struct TrainStats {
  std::size_t classifiers = 0;
  std::size_t nonzero_weights = 0;
  std::size_t pruned_weights = 0;
  std::vector<std::string> warnings;
};

// Trains every node's one-vs-rest logistic classifiers. Nodes are
// independent and are trained on up to `threads` workers; the result does
// not depend on the thread count.
TrainStats train_node_classifiers(PlTree& tree, const Corpus& train,
                                  std::span<const SparseVector> features,
                                  unsigned threads = 1);

using Ranking = std::vector<std::pair<std::uint32_t, double>>;

// Beam search; `beam` of 0 uses tree.config.beam. Ties broken by label index.
Ranking predict(const PlTree& tree, const SparseVector& doc, std::size_t top_k,
                std::size_t beam = 0);

// Path-product score of every label by full traversal.
std::vector<double> score_all_labels(const PlTree& tree, const SparseVector& doc);

void save_model(const PlTree& tree, const std::filesystem::path& path);
PlTree load_model(const std::filesystem::path& path);

}  // namespace lmtc::plt
