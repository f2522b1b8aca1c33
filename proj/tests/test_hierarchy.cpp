// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <random>
#include <set>

#include "doctest.h"
#include "lmtc/error.hpp"
#include "lmtc/hierarchy.hpp"
#include "support.hpp"

using namespace lmtc;
using doctest::Contains;
using Edges = std::vector<std::pair<std::string, std::string>>;

namespace {

std::string root() { return std::string(kDefaultRootId); }

LabelGraph small_graph() {
  return build_label_graph(Edges{{root(), "A"}, {root(), "B"}, {"A", "A1"}}, {});
}

// Random gold subset of the tree's nodes of size 1..max.
std::vector<std::uint32_t> random_gold(const LabelGraph& g, std::size_t max,
                                       std::mt19937_64& rng) {
  std::vector<std::uint32_t> all(g.size());
  for (std::uint32_t i = 0; i < all.size(); ++i) all[i] = i;
  std::shuffle(all.begin(), all.end(), rng);
  std::uniform_int_distribution<std::size_t> pick(1, std::min(max, all.size()));
  all.resize(pick(rng));
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

TEST_SUITE("hierarchy") {

TEST_CASE("edges build parent and child sets") {
  const auto g = small_graph();
  CHECK(g.size() == 4);
  const auto a1 = g.index_of("A1");
  REQUIRE(g.parents[a1].size() == 1);
  CHECK(g.labels[g.parents[a1][0]] == "A");
  CHECK(g.labels[g.root] == root());
  CHECK(g.parents[g.root].empty());
  CHECK(g.edge_count() == 3);
}

TEST_CASE("cycles, self-loops and rooted parents are rejected") {
  CHECK_THROWS_WITH_AS(build_label_graph(Edges{{"A", "B"}, {"B", "A"}}, {}), Contains("cycle"),
                       Error);
  CHECK_THROWS_WITH_AS(build_label_graph(Edges{{"A", "A"}}, {}), Contains("self-loop"), Error);
  CHECK_THROWS_AS(build_label_graph(Edges{{"r", "A"}, {"A", "r"}}, {}, "r"), Error);
}

TEST_CASE("labels may have several parents") {
  const auto g = build_label_graph(Edges{{"A", "X"}, {"B", "X"}}, {});
  const auto x = g.index_of("X");
  std::vector<std::string> ps;
  for (auto p : g.parents[x]) ps.push_back(g.labels[p]);
  CHECK(ps == std::vector<std::string>{"A", "B"});
  // A and B had no parents and hang off the implicit root.
  CHECK(g.parents[g.index_of("A")] == std::vector<std::uint32_t>{g.root});
}

TEST_CASE("descriptor-only labels attach to the root with a warning") {
  const auto g = build_label_graph(Edges{{root(), "A"}}, {{"A", "alpha"}, {"Z", "zed thing"}});
  const auto z = g.index_of("Z");
  CHECK(g.parents[z] == std::vector<std::uint32_t>{g.root});
  CHECK(g.descriptors[z] == std::vector<std::string>{"zed", "thing"});
  REQUIRE(g.warnings.size() == 1);
  CHECK(g.warnings[0].find("Z") != std::string::npos);
}

TEST_CASE("disconnected components are rejected") {
  // With an explicit root present in the edges, a separate tree is orphaned.
  CHECK_THROWS_WITH_AS(build_label_graph(Edges{{"r", "A"}, {"X", "Y"}}, {}, "r"),
                       Contains("disconnected"), Error);
}

TEST_CASE("hierarchy files load") {
  testing::TempDir dir("hier");
  testing::write_file(dir / "edges.tsv", "root\tA\nroot\tB\n\nA\tA1\n");
  testing::write_file(dir / "desc.tsv", "A\tAgriculture policy\nA1\tFarm subsidies\n");
  const auto g = load_hierarchy(dir / "edges.tsv", dir / "desc.tsv", "root");
  CHECK(g.size() == 4);
  CHECK(g.descriptors[g.index_of("A")] == std::vector<std::string>{"agriculture", "policy"});
  testing::write_file(dir / "bad.tsv", "justone\n");
  CHECK_THROWS_WITH_AS(load_hierarchy(dir / "bad.tsv"), Contains("line 1"), Error);
}

TEST_CASE("gap_document examples") {
  const auto g = small_graph();
  auto gap = gap_document(g, std::vector<std::string>{"A", "A1"});
  CHECK(gap.closure_size == 2);
  CHECK(gap.gap == 1.0);

  gap = gap_document(g, std::vector<std::string>{"A1", "B"});
  CHECK(gap.closure_size == 4);
  CHECK(gap.gap == 0.5);
  std::set<std::string> closure;
  for (auto v : gap.closure) closure.insert(g.labels[v]);
  CHECK(closure == std::set<std::string>{"A1", "A", root(), "B"});

  gap = gap_document(g, std::vector<std::string>{"B"});
  CHECK(gap.gap == 1.0);
  CHECK(gap.closure_size == 1);

  CHECK_THROWS_WITH_AS(gap_document(g, std::vector<std::string>{"A", "nope"}),
                       Contains("nope"), Error);
  CHECK_THROWS_AS(gap_document(g, std::vector<std::string>{}), Error);
}

TEST_CASE("star example") {
  // Two leaves under one hub: the hub completes the subgraph.
  const auto g = build_label_graph(Edges{{"hub", "x"}, {"hub", "y"}, {"hub", "z"}}, {}, "hub");
  const auto gap = gap_document(g, std::vector<std::string>{"x", "y"});
  CHECK(gap.closure_size == 3);
  CHECK(gap.gap == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("DAG path choice is the lexicographically smallest shortest path") {
  // a and b both connect s to t; the smaller node index wins.
  const auto g = build_label_graph(Edges{{"s", "a"}, {"s", "b"}, {"a", "t"}, {"b", "t"}}, {}, "s");
  const auto gap = gap_document(g, std::vector<std::string>{"s", "t"});
  std::set<std::string> closure;
  for (auto v : gap.closure) closure.insert(g.labels[v]);
  CHECK(closure == std::set<std::string>{"s", "a", "t"});
}

TEST_CASE("gap_document matches the path-union oracle on random trees") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const auto tree = testing::random_tree(2 + rng() % 60, rng);
    const auto gold = random_gold(tree, 8, rng);
    const auto got = gap_document(tree, gold);
    const auto want = testing::tree_gap_oracle(tree, gold);
    CHECK(got.closure_size == want.closure);
    CHECK(got.gap == want.gap);
    CHECK(got.gap > 0.0);
    CHECK(got.gap <= 1.0);
  }
}

TEST_CASE("ancestor-closed gold sets have gap 1 on trees") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto tree = testing::random_tree(2 + rng() % 80, rng);
    std::set<std::uint32_t> gold;
    for (int i = 0; i < 3; ++i) {
      std::uint32_t v = static_cast<std::uint32_t>(rng() % tree.size());
      for (;;) {
        gold.insert(v);
        if (tree.parents[v].empty()) break;
        v = tree.parents[v][0];
      }
    }
    const std::vector<std::uint32_t> g(gold.begin(), gold.end());
    CHECK(gap_document(tree, g).gap == 1.0);
  }
}

TEST_CASE("gap_dataset aggregates") {
  const auto g = small_graph();
  Corpus c;
  c.label_universe = {"A", "A1", "B", root()};
  std::sort(c.label_universe.begin(), c.label_universe.end());
  c.documents = {testing::make_doc("1", "x", {"A"}), testing::make_doc("2", "y", {"A1", "B", "A"})};
  auto r = gap_dataset(g, c);
  // gap 1.0 and 3/4
  CHECK(r.mean_gap == doctest::Approx(0.875));
  CHECK(r.density == doctest::Approx(0.5));
  CHECK(r.avg_labels_per_doc == doctest::Approx(2.0));

  c.documents = {testing::make_doc("1", "x", {"A", "A1"}), testing::make_doc("2", "y", {"A1", "B"})};
  r = gap_dataset(g, c);
  CHECK(r.mean_gap == doctest::Approx(0.75));

  c.documents.push_back(testing::make_doc("3", "z", {}));
  r = gap_dataset(g, c, 2);
  CHECK(r.skipped_documents == 1);
  CHECK(r.documents == 3);
  CHECK(r.per_document.size() == 2);
  CHECK(r.mean_gap == doctest::Approx(0.75));

  CHECK_THROWS_AS(gap_dataset(g, Corpus{}), Error);
}

TEST_CASE("density is invariant under document order") {
  std::mt19937_64 rng(8);
  const auto tree = testing::random_tree(40, rng);
  Corpus c;
  c.label_universe = tree.labels;
  for (int i = 0; i < 30; ++i) {
    std::vector<std::string> labels;
    for (auto v : random_gold(tree, 5, rng)) labels.push_back(tree.labels[v]);
    c.documents.push_back({"d" + std::to_string(i), {"t"}, labels});
  }
  const auto a = gap_dataset(tree, c);
  std::shuffle(c.documents.begin(), c.documents.end(), rng);
  const auto b = gap_dataset(tree, c, 3);
  CHECK(a.density == doctest::Approx(b.density).epsilon(1e-12));
  CHECK(a.mean_gap == doctest::Approx(b.mean_gap).epsilon(1e-12));
}

TEST_CASE("bucketize_labels thresholds") {
  Corpus train;
  train.label_universe = {"a", "b", "c"};
  for (int i = 0; i < 60; ++i)
    train.documents.push_back({"d" + std::to_string(i), {"t"}, i < 10 ? std::vector<std::string>{"a", "b"}
                                                                      : std::vector<std::string>{"a"}});
  auto b = bucketize_labels(train, 50);
  CHECK(b.frequent == std::vector<std::string>{"a"});
  CHECK(b.few == std::vector<std::string>{"b"});
  CHECK(b.zero == std::vector<std::string>{"c"});
  CHECK(b.counts.at("a") == 60);
  CHECK(b.kind_of("c") == LabelBuckets::Kind::kZero);

  // Exactly t_freq documents stays few-shot.
  Corpus fifty;
  fifty.label_universe = {"b"};
  for (int i = 0; i < 50; ++i) fifty.documents.push_back({"d" + std::to_string(i), {"t"}, {"b"}});
  CHECK(bucketize_labels(fifty, 50).few == std::vector<std::string>{"b"});

  // A single training document also counts as few-shot.
  Corpus one;
  one.label_universe = {"x", "y"};
  one.documents = {{"d", {"t"}, {"x"}}};
  b = bucketize_labels(one, 50);
  CHECK(b.few == std::vector<std::string>{"x"});
  CHECK(b.frequent.size() + b.few.size() + b.zero.size() == 2);

  Corpus none;
  none.label_universe = {"p", "q"};
  b = bucketize_labels(none, 50);
  CHECK(b.frequent.empty());
  CHECK(b.few.empty());
  CHECK(b.zero == std::vector<std::string>{"p", "q"});
  CHECK_THROWS_AS(bucketize_labels(none, 0), Error);
}

}  // TEST_SUITE
