// SPDX-License-Identifier: Apache-2.0
#pragma once

// Label hierarchy graph, graph-aware annotation proximity (GAP), label
// density and frequency buckets.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lmtc/corpus.hpp"

namespace lmtc {

inline constexpr std::string_view kDefaultRootId = "∅";

struct LabelGraph {
  std::vector<std::string> labels;  // sorted; node index = position
  std::uint32_t root = 0;
  std::vector<std::vector<std::uint32_t>> parents;    // sorted
  std::vector<std::vector<std::uint32_t>> children;   // sorted
  std::vector<std::vector<std::uint32_t>> neighbors;  // undirected, sorted
  std::vector<std::vector<std::string>> descriptors;  // tokenized
  std::vector<std::string> warnings;

  std::size_t size() const { return labels.size(); }
  std::optional<std::uint32_t> find(std::string_view label) const;
  std::uint32_t index_of(std::string_view label) const;  // throws if absent
  std::size_t edge_count() const;
};

// Validates and builds a hierarchy. If `root_id` occurs in the edges it is
// the root; otherwise a root node with that id is created and every
// parentless label is attached to it. Labels that only have descriptors are
// attached to the root with a warning. Throws on self-loops, directed
// cycles, a root with parents, or nodes not connected to the root.
LabelGraph build_label_graph(
    std::span<const std::pair<std::string, std::string>> edges,
    const std::map<std::string, std::string>& descriptors,
    std::string_view root_id = kDefaultRootId);

// "label<TAB>descriptor text" per line.
std::map<std::string, std::string> load_descriptors(const std::filesystem::path& path);

// Edge file: "parent<TAB>child" per line. Descriptor file (optional, empty
// path to skip): "label<TAB>descriptor text" per line.
LabelGraph load_hierarchy(const std::filesystem::path& edge_path,
                          const std::filesystem::path& descriptor_path = {},
                          std::string_view root_id = kDefaultRootId);

// Unweighted undirected distances from `source` (-1 if unreachable).
std::vector<int> bfs_distances(const LabelGraph& g, std::uint32_t source);

// Lexicographically smallest node sequence among the shortest undirected
// paths from `from` to `to`, given distances to `to`.
std::vector<std::uint32_t> smallest_shortest_path(const LabelGraph& g,
                                                  std::uint32_t from,
                                                  std::uint32_t to,
                                                  std::span<const int> dist_to);

struct GapResult {
  std::size_t gold_size = 0;     // |L_d|
  std::size_t closure_size = 0;  // |L_d^+|
  double gap = 1.0;
  std::vector<std::uint32_t> closure;  // sorted node indices of L_d^+
};

// L_d^+ = gold plus, for every unordered gold pair, the nodes of one
// shortest undirected path (the lexicographically smallest one, walking
// from the lower node index). Exact on trees.
GapResult gap_document(const LabelGraph& g, std::span<const std::uint32_t> gold);
GapResult gap_document(const LabelGraph& g, std::span<const std::string> gold);

struct DocumentGap {
  std::string id;
  std::size_t gold_size = 0;
  std::size_t closure_size = 0;
  double gap = 1.0;
};

struct GapReport {
  std::vector<DocumentGap> per_document;  // corpus order, skipped docs absent
  double mean_gap = 0.0;
  double density = 0.0;             // D
  double avg_labels_per_doc = 0.0;  // L_AVG
  std::size_t documents = 0;        // N
  std::size_t skipped_documents = 0;
  std::size_t label_count = 0;      // |L| used by the density
};

// Density uses |L| = corpus.label_universe.size(); documents without gold
// labels count towards N but are excluded from the GAP mean.
GapReport gap_dataset(const LabelGraph& g, const Corpus& corpus,
                      unsigned threads = 1);

struct LabelBuckets {
  std::vector<std::string> frequent;  // n > t_freq
  std::vector<std::string> few;       // 1 <= n <= t_freq
  std::vector<std::string> zero;      // n == 0
  std::size_t t_freq = 0;
  std::size_t t_few = 1;
  std::map<std::string, std::size_t> counts;

  enum class Kind { kFrequent, kFew, kZero };
  Kind kind_of(std::string_view label) const;
};

LabelBuckets bucketize_labels(const Corpus& train, std::size_t t_freq);

}  // namespace lmtc
