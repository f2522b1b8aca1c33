// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "lmtc/error.hpp"
#include "lmtc/eval.hpp"
#include "support.hpp"

using namespace lmtc;
using namespace lmtc::eval;
using S = std::vector<std::string>;

namespace {

RankedPrediction pred(std::string id, const S& labels) {
  RankedPrediction p{std::move(id), {}};
  double s = 1.0;
  for (const auto& l : labels) p.ranking.emplace_back(l, s -= 0.01);
  return p;
}

// Random universe slice, ranking and sorted gold set.
struct Instance {
  S ranked, gold;
  std::size_t k;
};

Instance random_instance(std::mt19937_64& rng) {
  const std::size_t n = 2 + rng() % 30;
  S labels;
  for (std::size_t i = 0; i < n; ++i) labels.push_back("l" + std::to_string(i));
  std::shuffle(labels.begin(), labels.end(), rng);
  Instance in;
  in.ranked.assign(labels.begin(), labels.begin() + static_cast<long>(rng() % (n + 1)));
  std::shuffle(labels.begin(), labels.end(), rng);
  in.gold.assign(labels.begin(), labels.begin() + static_cast<long>(1 + rng() % n));
  std::sort(in.gold.begin(), in.gold.end());
  in.k = 1 + rng() % 12;
  return in;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("R-Precision examples") {
  CHECK(rp_at_k(S{"a", "b", "c", "d", "e"}, S{"a", "b"}, 5) == 1.0);
  CHECK(rp_at_k(S{"a", "x", "b", "y", "c"}, S{"a", "b", "c", "d", "e", "f"}, 5) == 0.6);
  CHECK(rp_at_k(S{"b", "a", "c"}, S{"a"}, 5) == 1.0);
  CHECK(rp_at_k(S{"b", "a", "c"}, S{"a"}, 1) == 0.0);
  CHECK(rp_at_k(S{"x", "y", "a"}, S{"a", "b"}, 3) == 0.5);
}

TEST_CASE("nDCG examples") {
  CHECK(ndcg_at_k(S{"a", "x", "b"}, S{"a", "b"}, 3) ==
        doctest::Approx(1.5 / (1.0 + 1.0 / std::log2(3.0))).epsilon(1e-12));
  CHECK(ndcg_at_k(S{"a", "x", "b"}, S{"a", "b"}, 3) == doctest::Approx(0.9197).epsilon(1e-4));
  CHECK(ndcg_at_k(S{"b", "a", "z"}, S{"a", "b"}, 3) == 1.0);
  CHECK(ndcg_at_k(S{"x", "y"}, S{"a"}, 2) == 0.0);
}

TEST_CASE("precision and recall examples") {
  auto [p, r] = precision_recall_at_k(S{"a", "b", "c", "d", "e"}, S{"a", "b"}, 5);
  CHECK(p == 0.4);
  CHECK(r == 1.0);
  std::tie(p, r) = precision_recall_at_k(S{"x", "y"}, S{"a"}, 2);
  CHECK(p == 0.0);
  CHECK(r == 0.0);
  std::tie(p, r) = precision_recall_at_k(S{"b", "a", "c"}, S{"a", "b"}, 2);
  CHECK(p == 1.0);
  CHECK(r == 1.0);
  CHECK_THROWS_AS(precision_recall_at_k(S{"a"}, S{}, 1), Error);
  CHECK_THROWS_AS(ndcg_at_k(S{"a"}, S{"a"}, 0), Error);
}

TEST_CASE("metrics match the brute-force evaluator") {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 300; ++i) {
    const auto in = random_instance(rng);
    const auto want = testing::brute_metrics(in.ranked, in.gold, in.k);
    const auto [p, r] = precision_recall_at_k(in.ranked, in.gold, in.k);
    CHECK(std::abs(p - want.p) <= 1e-9);
    CHECK(std::abs(r - want.r) <= 1e-9);
    CHECK(std::abs(rp_at_k(in.ranked, in.gold, in.k) - want.rp) <= 1e-9);
    CHECK(std::abs(ndcg_at_k(in.ranked, in.gold, in.k) - want.ndcg) <= 1e-9);
  }
}

TEST_CASE("metric properties") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 300; ++i) {
    auto in = random_instance(rng);
    const double rp = rp_at_k(in.ranked, in.gold, in.k);
    const double p = precision_recall_at_k(in.ranked, in.gold, in.k).first;
    CHECK(rp >= p - 1e-15);
    if (in.gold.size() >= in.k) CHECK(rp == doctest::Approx(p));
    for (double v : {rp, p, ndcg_at_k(in.ranked, in.gold, in.k)}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    // Shuffling below K leaves nDCG unchanged.
    if (in.ranked.size() > in.k + 1) {
      const double before = ndcg_at_k(in.ranked, in.gold, in.k);
      std::shuffle(in.ranked.begin() + static_cast<long>(in.k), in.ranked.end(), rng);
      CHECK(ndcg_at_k(in.ranked, in.gold, in.k) == before);
    }
  }
  // Swapping a gold label below a non-gold one strictly lowers nDCG.
  const S gold{"g"};
  CHECK(ndcg_at_k(S{"x", "g"}, gold, 2) < ndcg_at_k(S{"g", "x"}, gold, 2));
}

TEST_CASE("bucket reports") {
  Corpus gold;
  gold.label_universe = {"a", "b", "c", "d"};
  gold.documents = {{"1", {"t"}, {"a", "c"}}, {"2", {"t"}, {"b"}}, {"3", {"t"}, {}}};
  const std::vector<RankedPrediction> preds{pred("1", {"c", "b", "a"}), pred("2", {"a", "b"}),
                                            pred("3", {"a"})};
  LabelBuckets buckets;
  buckets.frequent = {"a", "b"};
  buckets.few = {"c"};
  buckets.zero = {"d"};
  const auto r = evaluate(preds, gold, &buckets, 1);
  CHECK(r.overall.documents == 2);
  CHECK(r.overall.skipped == 1);
  CHECK(r.overall.mean.rp == 0.5);
  REQUIRE(r.buckets.size() == 3);
  // Frequent, restricted: doc 1 ranking [b, a], gold [a] -> 0; doc 2 [a, b], gold [b] -> 0.
  CHECK(r.buckets[0].documents == 2);
  CHECK(r.buckets[0].mean.rp == 0.0);
  // Few: only doc 1 has a few-shot gold label.
  CHECK(r.buckets[1].documents == 1);
  CHECK(r.buckets[1].skipped == 2);
  CHECK(r.buckets[1].mean.rp == 1.0);
  CHECK(r.buckets[2].documents == 0);
  CHECK(r.l_avg == 1.0);

  const auto f = evaluate(preds, gold, &buckets, 1, BucketProtocol::kFiltered);
  // Filtered keeps c at rank 1 for doc 1, so the frequent gold a misses.
  CHECK(f.buckets[0].mean.rp == 0.0);
  CHECK(f.buckets[1].mean.rp == 1.0);
}

TEST_CASE("a bucket covering every label reproduces the overall report") {
  std::mt19937_64 rng(2);
  Corpus gold;
  std::vector<RankedPrediction> preds;
  for (int d = 0; d < 40; ++d) {
    const auto in = random_instance(rng);
    gold.documents.push_back({"d" + std::to_string(d), {"t"}, in.gold});
    preds.push_back(pred("d" + std::to_string(d), in.ranked));
  }
  S all;
  for (int i = 0; i < 40; ++i) all.push_back("l" + std::to_string(i));
  std::sort(all.begin(), all.end());
  const std::vector<std::pair<std::string, S>> groups{{"all", all}};
  const auto r = evaluate_groups(preds, gold, groups, 5, BucketProtocol::kRestricted, 3);
  CHECK(r.buckets[0].mean.p == r.overall.mean.p);
  CHECK(r.buckets[0].mean.ndcg == r.overall.mean.ndcg);
  CHECK(r.buckets[0].documents == r.overall.documents);

  // Means are independent of document order.
  auto shuffled = preds;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const auto again = evaluate_groups(shuffled, gold, groups, 5);
  CHECK(again.overall.mean.rp == doctest::Approx(r.overall.mean.rp).epsilon(1e-14));
}

TEST_CASE("report matches a brute-force recomputation") {
  std::mt19937_64 rng(12);
  Corpus gold;
  std::vector<RankedPrediction> preds;
  for (int d = 0; d < 25; ++d) {
    const auto in = random_instance(rng);
    gold.documents.push_back({"d" + std::to_string(d), {"t"}, in.gold});
    preds.push_back(pred("d" + std::to_string(d), in.ranked));
  }
  const S few{"l0", "l1", "l2", "l3", "l4"};
  const std::vector<std::pair<std::string, S>> groups{{"few", few}};
  const auto r = evaluate_groups(preds, gold, groups, 3);
  double sum = 0.0;
  std::size_t used = 0;
  for (int d = 0; d < 25; ++d) {
    S g, ranked;
    for (const auto& l : gold.documents[d].gold_labels)
      if (std::count(few.begin(), few.end(), l)) g.push_back(l);
    for (const auto& l : preds[d].labels())
      if (std::count(few.begin(), few.end(), l)) ranked.push_back(l);
    if (g.empty()) continue;
    sum += testing::brute_metrics(ranked, g, 3).ndcg;
    ++used;
  }
  CHECK(r.buckets[0].documents == used);
  CHECK(r.buckets[0].mean.ndcg == doctest::Approx(sum / static_cast<double>(used)).epsilon(1e-12));
}

TEST_CASE("prediction coverage errors") {
  Corpus gold;
  gold.documents = {{"1", {"t"}, {"a"}}};
  const std::vector<RankedPrediction> unknown{pred("1", {"a"}), pred("9", {"a"})};
  CHECK_THROWS_WITH_AS(evaluate(unknown, gold, nullptr, 1), "prediction for unknown document id 9",
                       Error);
  CHECK_THROWS_WITH_AS(evaluate(std::vector<RankedPrediction>{}, gold, nullptr, 1),
                       "no prediction for document id 1", Error);
  const std::vector<RankedPrediction> dup{pred("1", {"a"}), pred("1", {"a"})};
  CHECK_THROWS_AS(evaluate(dup, gold, nullptr, 1), Error);
}

TEST_CASE("report formats") {
  Corpus gold;
  gold.documents = {{"1", {"t"}, {"a", "b", "c", "d", "e"}}, {"2", {"t"}, {"a", "b", "c", "d", "f", "g"}}};
  const std::vector<RankedPrediction> preds{pred("1", {"a", "b"}), pred("2", {"c", "z"})};
  LabelBuckets b;
  b.frequent = {"a", "b", "c"};
  b.few = {"d", "e", "f", "g"};
  const auto r = evaluate(preds, gold, &b, 5);
  const auto j = report_json(r);
  CHECK(j["K"] == 5);
  CHECK(j["overall"].contains("RP@5"));
  CHECK(j["overall"].contains("nDCG@5"));
  CHECK(j["buckets"].size() == 3);
  const std::vector<std::pair<std::string, MetricsReport>> rows{{"PLT", r}};
  const auto table = report_table("Demo", rows);
  CHECK(table.find("Demo (L_AVG=5.50, K=5)") == 0);
  CHECK(table.find("RP@5") != std::string::npos);
  CHECK(table.find("nDCG@5") != std::string::npos);
  CHECK(table.find("All Labels") != std::string::npos);
  CHECK(table.find("Frequent") != std::string::npos);
  CHECK(report_table("Demo", rows) == table);
}

TEST_CASE("prediction dumps round-trip") {
  const std::vector<RankedPrediction> preds{pred("a\"b", {"x", "y"}), pred("c", {})};
  std::stringstream buf;
  write_predictions(buf, preds);
  const auto back = read_predictions(buf);
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == "a\"b");
  CHECK(back[0].ranking == preds[0].ranking);
  CHECK(back[1].ranking.empty());
  std::istringstream dup(R"({"id":"d","ranking":[["a",0.5],["a",0.4]]})");
  CHECK_THROWS_WITH_AS(read_predictions(dup), doctest::Contains("duplicate label"), Error);
  std::istringstream bad("{\"id\":1}\n");
  CHECK_THROWS_WITH_AS(read_predictions(bad), doctest::Contains("line 1"), Error);
}

}  // TEST_SUITE
