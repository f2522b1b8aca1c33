// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include <unistd.h>

#include "lmtc/error.hpp"
#include "lmtc/labelrep.hpp"

namespace lmtc::testing {

Document make_doc(std::string id, std::string_view text, std::vector<std::string> labels) {
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  return {std::move(id), tokenize(text), std::move(labels)};
}

LabelGraph random_tree(std::size_t n, std::mt19937_64& rng) {
  auto name = [](std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "t%03zu", i);
    return std::string(buf);
  };
  std::vector<std::pair<std::string, std::string>> edges;
  for (std::size_t i = 1; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    edges.emplace_back(name(pick(rng)), name(i));
  }
  return build_label_graph(edges, {}, name(0));
}

std::string label_id(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "L%03zu", i);
  return buf;
}

Corpus separable_corpus(std::size_t docs, std::size_t labels, std::uint64_t seed, Split split,
                        std::size_t max_labels, std::size_t tokens_per_label) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_label(0, labels - 1);
  std::uniform_int_distribution<std::size_t> pick_count(1, max_labels);
  std::uniform_int_distribution<int> pick_noise(0, 49);
  Corpus c;
  c.split = split;
  for (std::size_t l = 0; l < labels; ++l) c.label_universe.push_back(label_id(l));
  for (std::size_t d = 0; d < docs; ++d) {
    std::set<std::size_t> chosen;
    const std::size_t n = pick_count(rng);
    while (chosen.size() < n) chosen.insert(pick_label(rng));
    Document doc;
    doc.id = std::string(split_name(split)) + "-" + std::to_string(d);
    for (auto l : chosen) {
      doc.gold_labels.push_back(label_id(l));
      for (std::size_t t = 0; t < tokens_per_label; ++t)
        doc.tokens.push_back("w" + std::to_string(l) + "x" + std::to_string(t));
    }
    for (int i = 0; i < 3; ++i) doc.tokens.push_back("noise" + std::to_string(pick_noise(rng)));
    std::shuffle(doc.tokens.begin(), doc.tokens.end(), rng);
    c.documents.push_back(std::move(doc));
  }
  return c;
}

EmbeddingTable random_embeddings(const std::vector<std::string>& words, std::size_t dim,
                                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  EmbeddingTable t;
  t.dim = dim;
  for (const auto& w : words) {
    t.index.emplace(w, t.words.size());
    t.words.push_back(w);
    for (std::size_t i = 0; i < dim; ++i) t.data.push_back(g(rng));
  }
  return t;
}

ZeroShotTask zero_shot_task(std::uint64_t seed, std::size_t dim) {
  constexpr std::size_t kWords = 80, kTrained = 40, kUnseen = 4, kNoise = 20;
  std::mt19937_64 rng(seed);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < kWords; ++i)
    for (std::size_t j = i + 1; j < kWords; ++j) pairs.emplace_back(i, j);
  // Reshuffle until every word of a held-out pair also occurs in training.
  for (;;) {
    std::shuffle(pairs.begin(), pairs.end(), rng);
    std::set<std::size_t> trained_words;
    for (std::size_t i = 0; i < kTrained; ++i) {
      trained_words.insert(pairs[i].first);
      trained_words.insert(pairs[i].second);
    }
    bool ok = true;
    for (std::size_t i = kTrained; i < kTrained + kUnseen; ++i)
      ok = ok && trained_words.contains(pairs[i].first) &&
           trained_words.contains(pairs[i].second);
    if (ok) break;
  }
  auto word = [](std::size_t i) { return "concept" + std::to_string(i); };
  ZeroShotTask task;
  std::map<std::string, std::string> descriptors;
  std::vector<std::string> labels;
  for (std::size_t l = 0; l < kTrained + kUnseen; ++l) {
    labels.push_back(label_id(l));
    descriptors[label_id(l)] = word(pairs[l].first) + " " + word(pairs[l].second);
    if (l >= kTrained) task.unseen.push_back(label_id(l));
  }
  task.graph = build_label_graph({}, descriptors);

  std::vector<std::string> vocab;
  for (std::size_t i = 0; i < kWords; ++i) vocab.push_back(word(i));
  for (std::size_t i = 0; i < kNoise; ++i) vocab.push_back("noise" + std::to_string(i));
  // Unit-variance entries, the scale of typical pretrained vectors.
  task.emb = random_embeddings(vocab, dim, seed ^ 0x5eedULL);
  for (double& x : task.emb.data) x *= std::sqrt(static_cast<double>(dim));

  std::uniform_int_distribution<std::size_t> pick_trained(0, kTrained - 1);
  std::uniform_int_distribution<std::size_t> pick_unseen(kTrained, kTrained + kUnseen - 1);
  std::uniform_int_distribution<std::size_t> pick_noise(0, kNoise - 1);
  std::uniform_int_distribution<int> coin(1, 2);
  auto make = [&](Split split, std::size_t n, bool zero_shot) {
    Corpus c;
    c.split = split;
    c.label_universe = labels;
    std::sort(c.label_universe.begin(), c.label_universe.end());
    for (std::size_t d = 0; d < n; ++d) {
      std::set<std::size_t> chosen;
      if (zero_shot) {
        chosen.insert(pick_unseen(rng));
      } else {
        const int count = coin(rng);
        while (chosen.size() < static_cast<std::size_t>(count)) chosen.insert(pick_trained(rng));
      }
      Document doc;
      doc.id = std::string(split_name(split)) + std::to_string(d);
      for (auto l : chosen) {
        doc.gold_labels.push_back(label_id(l));
        doc.tokens.push_back(word(pairs[l].first));
        doc.tokens.push_back(word(pairs[l].second));
      }
      for (int i = 0; i < 3; ++i) doc.tokens.push_back("noise" + std::to_string(pick_noise(rng)));
      std::shuffle(doc.tokens.begin(), doc.tokens.end(), rng);
      std::sort(doc.gold_labels.begin(), doc.gold_labels.end());
      c.documents.push_back(std::move(doc));
    }
    return c;
  };
  task.train = make(Split::kTrain, 600, false);
  task.dev = make(Split::kDev, 100, false);
  task.test = make(Split::kTest, 100, true);
  return task;
}

neural::Model tiny_model(neural::Variant v, std::uint64_t seed, bool empty_adjacency,
                         neural::EncoderKind encoder) {
  using namespace neural;
  constexpr std::size_t kDim = 6;
  // Four scored labels under a small hierarchy with an extra inner node.
  const std::vector<std::pair<std::string, std::string>> edges{
      {"root", "A"}, {"root", "B"}, {"A", "a1"}, {"A", "a2"}, {"B", "b1"}};
  const std::map<std::string, std::string> desc{{"A", "alpha beta"}, {"B", "gamma"},
                                                {"a1", "alpha delta"}, {"a2", "beta eps"},
                                                {"b1", "gamma zeta"}};
  const LabelGraph graph = build_label_graph(edges, desc, "root");
  const std::vector<std::string> words{"alpha", "beta", "gamma", "delta", "eps", "zeta", "eta"};
  const EmbeddingTable emb = random_embeddings(words, kDim, seed + 1);
  const std::vector<std::string> outputs{"a1", "a2", "b1", "B"};

  ModelConfig cfg;
  cfg.variant = v;
  cfg.encoder = encoder;
  cfg.hidden = encoder == EncoderKind::kBiGru ? kDim / 2 : kDim;
  cfg.dropout = 0.0;
  cfg.label_hidden = 5;
  cfg.trainable_embeddings = true;

  LabelContext ctx;
  if (is_zero_shot(v)) {
    const auto centroid = labelrep::centroid_label_vectors(graph, emb);
    labelrep::LabelVectors walked;
    walked.kind = labelrep::VectorKind::kNode2Vec;
    walked.labels = graph.labels;
    walked.dim = 4;
    std::mt19937_64 rng(seed + 2);
    std::normal_distribution<double> g(0.0, 0.5);
    for (std::size_t i = 0; i < graph.size() * walked.dim; ++i) walked.matrix.push_back(g(rng));
    const auto inputs = labelrep::compose_label_inputs(encoder_input_mode(v), centroid, &walked);
    ctx = make_label_context(v, outputs, &centroid, &inputs, &graph);
    if (empty_adjacency) {
      // Same nodes as the hierarchy-free variants: one per output label.
      ctx = make_label_context(Variant::kDC, outputs, &centroid, &inputs, nullptr);
    }
  } else {
    ctx = make_label_context(v, outputs, nullptr, nullptr, nullptr);
  }
  Model m(cfg, {"<unk>", "alpha", "beta", "delta", "eta", "gamma"}, emb, std::move(ctx), seed);
  // Nonzero biases so their gradients are exercised.
  std::mt19937_64 rng(seed + 3);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (auto& p : m.params)
    if (p.value.cols == 1)
      for (double& x : p.value.data) x = u(rng);
  return m;
}

TempDir::TempDir(const std::string& tag) {
  static std::uint64_t counter = 0;
  path_ = std::filesystem::temp_directory_path() /
          ("lmtc-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error("cannot write " + p.string());
  f << text;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw Error("cannot read " + p.string());
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

CliFixture write_cli_fixture(const std::filesystem::path& dir, std::uint64_t seed) {
  auto task = zero_shot_task(seed, 8);
  CliFixture f{dir / "train.jsonl", dir / "dev.jsonl",        dir / "test.jsonl",
               dir / "labels.txt",  dir / "hierarchy.tsv",    dir / "descriptors.tsv",
               dir / "embeddings.txt"};
  task.train.documents.resize(200);
  Corpus test = task.test;
  test.documents.resize(25);
  for (std::size_t i = 50; i < 75; ++i) {
    Document d = task.dev.documents[i];
    d.id = "test-seen" + std::to_string(i);
    test.documents.push_back(std::move(d));
  }
  task.dev.documents.resize(50);
  save_dataset(task.train, f.train);
  save_dataset(task.dev, f.dev);
  save_dataset(test, f.test);
  save_label_universe(task.train.label_universe, f.labels);

  std::string edges, desc;
  for (int g = 0; g < 4; ++g) {
    edges += "root\tG" + std::to_string(g) + "\n";
    desc += "G" + std::to_string(g) + "\tconcept" + std::to_string(g) + "\n";
  }
  for (std::size_t l = 0; l < task.train.label_universe.size(); ++l) {
    const auto& id = task.train.label_universe[l];
    edges += "G" + std::to_string(l % 4) + "\t" + id + "\n";
    const auto& tokens = task.graph.descriptors[task.graph.index_of(id)];
    desc += id + "\t" + tokens[0] + " " + tokens[1] + "\n";
  }
  write_file(f.hierarchy, edges);
  write_file(f.descriptors, desc);

  std::string emb;
  char buf[40];
  for (std::size_t w = 0; w < task.emb.size(); ++w) {
    emb += task.emb.words[w];
    for (double x : task.emb.row(w)) {
      std::snprintf(buf, sizeof buf, " %.17g", x);
      emb += buf;
    }
    emb += "\n";
  }
  write_file(f.embeddings, emb);
  return f;
}

// ---- oracles

TreeGap tree_gap_oracle(const LabelGraph& tree, const std::vector<std::uint32_t>& gold) {
  auto parent = [&](std::uint32_t v) -> long {
    return tree.parents[v].empty() ? -1 : static_cast<long>(tree.parents[v][0]);
  };
  auto ancestors = [&](std::uint32_t v) {
    std::vector<std::uint32_t> chain{v};
    for (long p = parent(v); p >= 0; p = parent(static_cast<std::uint32_t>(p)))
      chain.push_back(static_cast<std::uint32_t>(p));
    return chain;
  };
  std::set<std::uint32_t> closure(gold.begin(), gold.end());
  for (std::size_t i = 0; i < gold.size(); ++i) {
    for (std::size_t j = i + 1; j < gold.size(); ++j) {
      const auto a = ancestors(gold[i]);
      const auto b = ancestors(gold[j]);
      const std::set<std::uint32_t> bset(b.begin(), b.end());
      std::uint32_t lca = a.back();
      for (auto x : a)
        if (bset.contains(x)) {
          lca = x;
          break;
        }
      for (auto x : a) {
        closure.insert(x);
        if (x == lca) break;
      }
      for (auto x : b) {
        closure.insert(x);
        if (x == lca) break;
      }
    }
  }
  return {closure.size(), static_cast<double>(gold.size()) / static_cast<double>(closure.size())};
}

BruteMetrics brute_metrics(const std::vector<std::string>& ranked,
                           const std::vector<std::string>& gold, std::size_t k) {
  const std::set<std::string> g(gold.begin(), gold.end());
  std::vector<int> gains(k, 0);
  for (std::size_t i = 0; i < k && i < ranked.size(); ++i) gains[i] = g.count(ranked[i]) ? 1 : 0;
  std::vector<int> ideal(k, 0);
  for (std::size_t i = 0; i < k && i < g.size(); ++i) ideal[i] = 1;
  auto dcg = [](const std::vector<int>& v) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
      s += v[i] * std::log(2.0) / std::log(static_cast<double>(i + 2));
    return s;
  };
  const double hits = std::accumulate(gains.begin(), gains.end(), 0.0);
  const std::size_t rp_den = g.size() < k ? g.size() : k;
  BruteMetrics m;
  m.p = hits / static_cast<double>(k);
  m.r = hits / static_cast<double>(g.size());
  m.rp = hits / static_cast<double>(rp_den);
  m.ndcg = dcg(gains) / dcg(ideal);
  return m;
}

double random_ndcg_expectation(std::size_t n, std::size_t g, std::size_t k) {
  double expected_dcg = 0.0, ideal = 0.0;
  for (std::size_t r = 1; r <= std::min(k, n); ++r)
    expected_dcg += (static_cast<double>(g) / static_cast<double>(n)) / std::log2(r + 1.0);
  for (std::size_t r = 1; r <= std::min(k, g); ++r) ideal += 1.0 / std::log2(r + 1.0);
  return expected_dcg / ideal;
}

std::vector<double> plt_path_oracle(const plt::PlTree& tree, const SparseVector& doc) {
  std::unordered_map<std::uint32_t, double> x;
  for (std::size_t i = 0; i < doc.indices.size(); ++i) x[doc.indices[i]] = doc.values[i];
  auto prob = [&](const plt::NodeClassifier& c, std::size_t t) {
    double z = c.bias[t];
    const auto idx = c.target_indices(t);
    const auto w = c.target_weights(t);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto it = x.find(idx[i]);
      if (it != x.end()) z += static_cast<double>(w[i]) * it->second;
    }
    return 1.0 / (1.0 + std::exp(-z));
  };
  std::vector<double> scores(tree.label_names.size(), 0.0);
  std::function<void(std::uint32_t, double)> visit = [&](std::uint32_t id, double path) {
    const auto& node = tree.nodes[id];
    if (node.is_leaf()) {
      for (std::size_t t = 0; t < node.labels.size(); ++t)
        scores[node.labels[t]] = path * prob(node.classifier, t);
      return;
    }
    for (std::size_t t = 0; t < node.children.size(); ++t)
      visit(node.children[t], path * prob(node.classifier, t));
  };
  visit(tree.root, 1.0);
  return scores;
}

}  // namespace lmtc::testing
