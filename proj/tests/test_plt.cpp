// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "lmtc/error.hpp"
#include "lmtc/logistic.hpp"
#include "lmtc/plt.hpp"
#include "support.hpp"

using namespace lmtc;
using namespace lmtc::plt;

namespace {

SparseVector sv(std::vector<std::uint32_t> idx, std::vector<double> val) {
  return {std::move(idx), std::move(val)};
}

struct Trained {
  Corpus corpus;
  Vocabulary vocab;
  std::vector<SparseVector> features;
  PlTree tree;
};

Trained train_on(Corpus corpus, const PltConfig& config, std::uint64_t seed) {
  Trained t;
  t.corpus = std::move(corpus);
  t.vocab = build_vocabulary(t.corpus, 1, 10000);
  t.features = vectorize_corpus(t.corpus, t.vocab);
  const auto lv = label_feature_vectors(t.corpus, t.features);
  t.tree = build_tree(lv, config, seed, t.vocab.size(), t.corpus.label_universe);
  train_node_classifiers(t.tree, t.corpus, t.features);
  return t;
}

std::vector<std::size_t> group_sizes(const std::vector<std::uint32_t>& groups, std::size_t k) {
  std::vector<std::size_t> sizes(k, 0);
  for (auto g : groups) ++sizes.at(g);
  return sizes;
}

}  // namespace

TEST_SUITE("plt") {

TEST_CASE("label feature vectors average then normalize") {
  Corpus c;
  c.label_universe = {"x", "y", "z"};
  c.documents = {{"1", {"a"}, {"x"}}, {"2", {"b"}, {"x", "y"}}};
  const std::vector<SparseVector> f{sv({0}, {1.0}), sv({1}, {1.0})};
  const auto lv = label_feature_vectors(c, f);
  REQUIRE(lv.size() == 2);  // z has no documents
  CHECK(lv[0].label == 0);
  CHECK(lv[0].vector.indices == std::vector<std::uint32_t>{0, 1});
  CHECK(lv[0].vector.values[0] == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(lv[0].vector.values[1] == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(lv[1].label == 1);
  CHECK(lv[1].vector == sv({1}, {1.0}));
}

TEST_CASE("balanced k-means examples") {
  const std::vector<SparseVector> ortho{sv({0}, {1}), sv({1}, {1}), sv({2}, {1}), sv({3}, {1})};
  CHECK(group_sizes(balanced_kmeans(ortho, 2, 1), 2) == std::vector<std::size_t>{2, 2});

  const std::vector<SparseVector> two{sv({0}, {1}), sv({1}, {1})};
  const auto g2 = balanced_kmeans(two, 2, 3);
  CHECK(g2[0] != g2[1]);

  CHECK_THROWS_AS(balanced_kmeans(two, 3, 1), Error);
}

TEST_CASE("balanced k-means recovers two tight blobs") {
  // Two blobs of three vectors around orthogonal directions.
  std::vector<SparseVector> v;
  for (int i = 0; i < 3; ++i) {
    auto a = sv({0, 2}, {1.0, 0.05 * (i + 1)});
    a.normalize();
    auto b = sv({1, 3}, {1.0, 0.05 * (i + 1)});
    b.normalize();
    v.push_back(a);
    v.push_back(b);
  }
  // Brute force: the balanced 3+3 split maximizing within-group similarity.
  double best = -1e9;
  std::vector<int> best_mask;
  for (int mask = 0; mask < 64; ++mask) {
    if (__builtin_popcount(static_cast<unsigned>(mask)) != 3) continue;
    double s = 0.0;
    for (int i = 0; i < 6; ++i)
      for (int j = i + 1; j < 6; ++j)
        if (((mask >> i) & 1) == ((mask >> j) & 1)) s += sparse_dot(v[i], v[j]);
    if (s > best + 1e-12) {
      best = s;
      best_mask.clear();
      for (int i = 0; i < 6; ++i) best_mask.push_back((mask >> i) & 1);
    }
  }
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto g = balanced_kmeans(v, 2, seed);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j)
        CHECK((g[i] == g[j]) == (best_mask[i] == best_mask[j]));
  }
}

TEST_CASE("balanced k-means sizes differ by at most one") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 40;
    const std::size_t k = 2 + rng() % std::min<std::size_t>(n - 1, 7);
    std::vector<SparseVector> v;
    for (std::size_t i = 0; i < n; ++i) {
      SparseVector s;
      for (std::uint32_t f = 0; f < 12; ++f)
        if (u(rng) < 0.3) {
          s.indices.push_back(f);
          s.values.push_back(u(rng));
        }
      s.normalize();
      v.push_back(s);
    }
    const auto sizes = group_sizes(balanced_kmeans(v, k, rng()), k);
    const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
    CHECK(*hi - *lo <= 1);
  }
}

TEST_CASE("tree shapes") {
  std::vector<LabelVector> eight;
  for (std::uint32_t l = 0; l < 8; ++l) eight.push_back({l, sv({l}, {1.0})});
  PltConfig cfg;
  cfg.k = 2;
  cfg.m = 2;
  auto t = build_tree(eight, cfg, 1, 8);
  CHECK(t.nodes.size() == 7);
  CHECK(t.leaf_count() == 4);
  for (const auto& n : t.nodes)
    if (n.is_leaf()) CHECK(n.labels.size() == 2);

  cfg.m = 8;
  std::vector<LabelVector> three(eight.begin(), eight.begin() + 3);
  t = build_tree(three, cfg, 1, 8);
  CHECK(t.nodes.size() == 1);
  CHECK(t.nodes[0].is_leaf());

  std::vector<LabelVector> sixteen;
  for (std::uint32_t l = 0; l < 16; ++l) sixteen.push_back({l, sv({l % 4, 4 + l}, {1.0, 0.1})});
  for (auto& lv : sixteen) lv.vector.normalize();
  cfg.k = 4;
  cfg.m = 4;
  t = build_tree(sixteen, cfg, 2, 20);
  CHECK(t.nodes.size() == 5);
  CHECK(t.depth() == 1);
  for (auto c : t.nodes[0].children) CHECK(t.nodes[c].labels.size() == 4);
}

TEST_CASE("children partition their parent's labels") {
  const auto data = train_on(testing::separable_corpus(200, 30, 8), PltConfig{3, 4}, 5);
  std::set<std::uint32_t> leaves;
  for (const auto& n : data.tree.nodes) {
    if (n.is_leaf()) {
      for (auto l : n.labels) CHECK(leaves.insert(l).second);
      continue;
    }
    std::vector<std::uint32_t> merged;
    for (auto c : n.children)
      merged.insert(merged.end(), data.tree.nodes[c].labels.begin(), data.tree.nodes[c].labels.end());
    std::sort(merged.begin(), merged.end());
    CHECK(merged == n.labels);
  }
  CHECK(leaves.size() == data.tree.nodes[0].labels.size());
}

TEST_CASE("leaf classifiers separate a linearly separable toy set") {
  Corpus c;
  c.label_universe = {"p", "q"};
  for (int i = 0; i < 40; ++i) {
    c.documents.push_back({"p" + std::to_string(i), {"alpha", "w" + std::to_string(i % 5)}, {"p"}});
    c.documents.push_back({"q" + std::to_string(i), {"beta", "w" + std::to_string(i % 5)}, {"q"}});
  }
  PltConfig cfg;
  cfg.m = 2;
  cfg.l2 = 0.1;
  const auto t = train_on(c, cfg, 1);
  REQUIRE(t.tree.nodes.size() == 1);
  std::size_t correct = 0, total = 0;
  for (std::size_t d = 0; d < c.documents.size(); ++d) {
    const auto scores = score_all_labels(t.tree, t.features[d]);
    for (std::size_t l = 0; l < 2; ++l) {
      const bool gold = c.documents[d].gold_labels[0] == c.label_universe[l];
      correct += (scores[l] > 0.5) == gold;
      ++total;
    }
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(total) >= 0.99);
}

TEST_CASE("weight pruning") {
  const auto corpus = testing::separable_corpus(100, 6, 12);
  PltConfig cfg;
  cfg.m = 2;
  cfg.weight_prune_eps = 0.0;
  auto vocab = build_vocabulary(corpus, 1, 1000);
  auto feats = vectorize_corpus(corpus, vocab);
  auto tree = build_tree(label_feature_vectors(corpus, feats), cfg, 1, vocab.size(),
                         corpus.label_universe);
  auto stats = train_node_classifiers(tree, corpus, feats);
  CHECK(stats.pruned_weights == 0);

  cfg.weight_prune_eps = 0.5;
  tree = build_tree(label_feature_vectors(corpus, feats), cfg, 1, vocab.size(),
                    corpus.label_universe);
  stats = train_node_classifiers(tree, corpus, feats);
  CHECK(stats.pruned_weights > 0);
  for (const auto& n : tree.nodes)
    for (float w : n.classifier.weights) CHECK(std::abs(w) >= 0.5f);
}

TEST_CASE("node training sets exclude documents outside the subtree") {
  // Labels a,b share a leaf; c,d another. A c-only document must not be a
  // negative for the a/b leaf, so removing it leaves that leaf unchanged.
  Corpus c;
  c.label_universe = {"a", "b", "c", "d"};
  for (int i = 0; i < 10; ++i) {
    c.documents.push_back({"a" + std::to_string(i), {"ab", "ab2", "ta", "x" + std::to_string(i)}, {"a"}});
    c.documents.push_back({"b" + std::to_string(i), {"ab", "ab2", "tb", "x" + std::to_string(i)}, {"b"}});
    c.documents.push_back({"c" + std::to_string(i), {"cd", "tc", "ta"}, {"c"}});
    c.documents.push_back({"d" + std::to_string(i), {"cd", "td"}, {"d"}});
  }
  PltConfig cfg;
  cfg.k = 2;
  cfg.m = 2;
  const auto vocab = build_vocabulary(c, 1, 100);
  const auto feats = vectorize_corpus(c, vocab);
  auto tree = build_tree(label_feature_vectors(c, feats), cfg, 3, vocab.size(), c.label_universe);
  auto leaf_of = [&](const PlTree& t, std::uint32_t label) {
    for (const auto& n : t.nodes)
      if (n.is_leaf() && std::count(n.labels.begin(), n.labels.end(), label)) return n.id;
    return 0u;
  };
  const auto leaf = leaf_of(tree, 0);
  REQUIRE(tree.nodes[leaf].labels == std::vector<std::uint32_t>{0, 1});
  auto full = tree;
  train_node_classifiers(full, c, feats);

  Corpus reduced = c;
  std::vector<SparseVector> reduced_feats;
  reduced.documents.clear();
  for (std::size_t d = 0; d < c.documents.size(); ++d)
    if (c.documents[d].gold_labels[0] != "c") {
      reduced.documents.push_back(c.documents[d]);
      reduced_feats.push_back(feats[d]);
    }
  auto partial = tree;
  train_node_classifiers(partial, reduced, reduced_feats);
  CHECK(partial.nodes[leaf].classifier == full.nodes[leaf].classifier);
  CHECK_FALSE(partial.nodes[0].classifier == full.nodes[0].classifier);
}

TEST_CASE("nodes without documents get an always-negative classifier") {
  Corpus c;
  c.label_universe = {"a", "b"};
  c.documents = {{"1", {"x"}, {"a"}}, {"2", {"y"}, {"b"}}};
  std::vector<LabelVector> lv{{0, sv({0}, {1})}, {1, sv({1}, {1})}};
  PltConfig cfg;
  cfg.m = 1;
  auto tree = build_tree(lv, cfg, 1, 2, c.label_universe);
  Corpus only_a = c;
  only_a.documents.resize(1);
  const std::vector<SparseVector> f{sv({0}, {1})};
  const auto stats = train_node_classifiers(tree, only_a, f);
  CHECK_FALSE(stats.warnings.empty());
  bool found = false;
  for (const auto& n : tree.nodes)
    if (n.is_leaf() && n.labels == std::vector<std::uint32_t>{1}) {
      found = true;
      CHECK(n.classifier.bias[0] == kAlwaysNegativeBias);
    }
  CHECK(found);
}

TEST_CASE("single-leaf tree ranks like flat one-vs-rest") {
  const auto corpus = testing::separable_corpus(120, 5, 2);
  PltConfig cfg;
  cfg.m = 10;
  const auto t = train_on(corpus, cfg, 1);
  REQUIRE(t.tree.nodes.size() == 1);
  std::vector<std::int8_t> y(corpus.doc_count());
  std::vector<const SparseVector*> rows;
  for (const auto& f : t.features) rows.push_back(&f);
  LogisticConfig lc;
  lc.l2 = cfg.l2;
  lc.tolerance = cfg.solver_tolerance;
  for (std::size_t l = 0; l < 5; ++l) {
    for (std::size_t d = 0; d < corpus.doc_count(); ++d)
      y[d] = std::count(corpus.documents[d].gold_labels.begin(),
                        corpus.documents[d].gold_labels.end(), corpus.label_universe[l])
                 ? 1
                 : -1;
    const auto flat = train_logistic(rows, y, t.vocab.size(), lc);
    for (std::size_t d = 0; d < 5; ++d) {
      double z = flat.bias;
      for (std::size_t i = 0; i < t.features[d].nnz(); ++i)
        z += flat.weights[t.features[d].indices[i]] * t.features[d].values[i];
      const auto all = score_all_labels(t.tree, t.features[d]);
      // Stored weights are float32 and pruned at 0.01.
      CHECK(all[l] == doctest::Approx(sigmoid(z)).epsilon(0.05));
    }
  }
}

TEST_CASE("zero document ranks by bias alone") {
  const auto t = train_on(testing::separable_corpus(100, 12, 6), PltConfig{2, 3}, 4);
  const SparseVector zero;
  const auto r1 = predict(t.tree, zero, 12, 100);
  const auto r2 = predict(t.tree, zero, 12, 100);
  CHECK(r1 == r2);
  const auto oracle = testing::plt_path_oracle(t.tree, zero);
  for (const auto& [l, s] : r1) CHECK(s == doctest::Approx(oracle[l]).epsilon(1e-12));
}

TEST_CASE("exhaustive beam equals full traversal") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t labels = 4 + rng() % 30;
    PltConfig cfg{2 + rng() % 3, 1 + rng() % 4};
    const auto t = train_on(testing::separable_corpus(150, labels, rng()), cfg, rng());
    for (std::size_t d = 0; d < 10; ++d) {
      const auto ranked = predict(t.tree, t.features[d], labels, t.tree.nodes.size());
      const auto oracle = testing::plt_path_oracle(t.tree, t.features[d]);
      const auto all = score_all_labels(t.tree, t.features[d]);
      CHECK(ranked.size() == t.tree.nodes[0].labels.size());
      for (const auto& [l, s] : ranked) {
        CHECK(std::abs(s - oracle[l]) <= 1e-9);
        CHECK(s == all[l]);
        CHECK(s > 0.0);
        CHECK(s < 1.0);
      }
      for (std::size_t i = 1; i < ranked.size(); ++i)
        CHECK((ranked[i - 1].second > ranked[i].second ||
               (ranked[i - 1].second == ranked[i].second && ranked[i - 1].first < ranked[i].first)));
    }
  }
}

TEST_CASE("wider beams never lose the exhaustive top-1 more often") {
  std::mt19937_64 rng(2);
  std::vector<std::size_t> hits(4, 0);
  const std::size_t beams[] = {1, 2, 4, 1000};
  for (int trial = 0; trial < 5; ++trial) {
    const auto t = train_on(testing::separable_corpus(150, 24, rng(), Split::kTrain, 3), PltConfig{2, 2},
                            rng());
    for (std::size_t d = 0; d < 40; ++d) {
      const auto best = predict(t.tree, t.features[d], 1, 1000).front().first;
      for (std::size_t b = 0; b < 4; ++b)
        hits[b] += predict(t.tree, t.features[d], 1, beams[b]).front().first == best;
    }
  }
  for (std::size_t b = 1; b < 4; ++b) CHECK(hits[b] >= hits[b - 1]);
  CHECK(hits[3] == 200);
}

TEST_CASE("training is deterministic and thread-count independent") {
  const auto corpus = testing::separable_corpus(150, 20, 9);
  const auto vocab = build_vocabulary(corpus, 2, 500);
  const auto feats = vectorize_corpus(corpus, vocab);
  const auto lv = label_feature_vectors(corpus, feats);
  PltConfig cfg{2, 3};
  auto a = build_tree(lv, cfg, 7, vocab.size(), corpus.label_universe);
  auto b = build_tree(lv, cfg, 7, vocab.size(), corpus.label_universe);
  train_node_classifiers(a, corpus, feats, 1);
  train_node_classifiers(b, corpus, feats, 3);
  CHECK(a.nodes == b.nodes);
}

TEST_CASE("untrained trees refuse to predict") {
  std::vector<LabelVector> lv{{0, sv({0}, {1})}};
  const auto t = build_tree(lv, PltConfig{}, 1, 1);
  CHECK_THROWS_WITH_AS(predict(t, SparseVector{}, 1), "PLT is not trained", Error);
  PltConfig bad;
  bad.k = 1;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("model files round-trip") {
  testing::TempDir dir("plt");
  auto t = train_on(testing::separable_corpus(80, 10, 1), PltConfig{2, 3}, 2);
  t.tree.vocab_fingerprint = t.vocab.fingerprint();
  save_model(t.tree, dir / "m.bin");
  const auto back = load_model(dir / "m.bin");
  CHECK(back.nodes == t.tree.nodes);
  CHECK(back.label_names == t.tree.label_names);
  CHECK(back.vocab_fingerprint == t.tree.vocab_fingerprint);
  CHECK(back.feature_dim == t.tree.feature_dim);
  CHECK(predict(back, t.features[0], 5) == predict(t.tree, t.features[0], 5));
}

}  // TEST_SUITE
