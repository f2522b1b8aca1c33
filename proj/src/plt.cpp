// SPDX-License-Identifier: Apache-2.0
#include "lmtc/plt.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "lmtc/container.hpp"
#include "lmtc/error.hpp"
#include "lmtc/parallel.hpp"
#include "lmtc/random.hpp"
#include "lmtc/simd/kernels.hpp"

namespace lmtc::plt {

void PltConfig::validate() const {
  if (k < 2) throw Error("PLT branching factor k must be >= 2");
  if (m < 1) throw Error("PLT leaf size m must be >= 1");
  if (beam < 1) throw Error("PLT beam must be >= 1");
  if (!(l2 > 0.0)) throw Error("PLT l2 must be > 0");
  if (!(weight_prune_eps >= 0.0)) throw Error("PLT weight_prune_eps must be >= 0");
}

std::size_t PlTree::depth() const {
  std::vector<std::size_t> d(nodes.size(), 0);
  std::size_t best = 0;
  for (const auto& n : nodes)
    for (auto c : n.children) {
      d[c] = d[n.id] + 1;
      best = std::max(best, d[c]);
    }
  return best;
}

std::size_t PlTree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const PltNode& n) { return n.is_leaf(); }));
}

namespace {

// Sum of sparse vectors through a dense accumulator; returns nonzeros.
class Accumulator {
 public:
  explicit Accumulator(std::size_t dim) : dense_(dim, 0.0), touched_(dim, 0) {}

  void add(const SparseVector& v, double scale = 1.0) {
    for (std::size_t i = 0; i < v.indices.size(); ++i) {
      const auto j = v.indices[i];
      if (!touched_[j]) {
        touched_[j] = 1;
        used_.push_back(j);
      }
      dense_[j] += scale * v.values[i];
    }
  }

  SparseVector take(double scale = 1.0) {
    std::sort(used_.begin(), used_.end());
    SparseVector out;
    for (auto j : used_) {
      if (dense_[j] != 0.0) {
        out.indices.push_back(j);
        out.values.push_back(dense_[j] * scale);
      }
      dense_[j] = 0.0;
      touched_[j] = 0;
    }
    used_.clear();
    return out;
  }

 private:
  std::vector<double> dense_;
  std::vector<std::uint8_t> touched_;
  std::vector<std::uint32_t> used_;
};

std::size_t dim_of(std::span<const SparseVector> vs) {
  std::size_t d = 0;
  for (const auto& v : vs)
    if (!v.indices.empty()) d = std::max<std::size_t>(d, v.indices.back() + 1);
  return d;
}

// sims[i * k + c] = cosine of vector i with centroid c.
void similarities(std::span<const SparseVector> vectors,
                  std::span<const SparseVector> centroids, std::vector<double>& dense,
                  std::vector<double>& sims) {
  const std::size_t k = centroids.size();
  sims.assign(vectors.size() * k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    const auto& cen = centroids[c];
    for (std::size_t i = 0; i < cen.indices.size(); ++i) dense[cen.indices[i]] = cen.values[i];
    for (std::size_t v = 0; v < vectors.size(); ++v)
      sims[v * k + c] = simd::gather_dot(vectors[v].indices,
                                         std::span<const double>(vectors[v].values), dense);
    for (auto j : cen.indices) dense[j] = 0.0;
  }
}

std::vector<std::uint32_t> kmeanspp_seeds(std::span<const SparseVector> vectors,
                                          std::size_t k, std::mt19937_64& rng) {
  const std::size_t n = vectors.size();
  std::vector<std::uint32_t> seeds;
  std::vector<double> best_sim(n, -1.0);
  std::vector<std::uint8_t> chosen(n, 0);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  seeds.push_back(static_cast<std::uint32_t>(pick(rng)));
  chosen[seeds.back()] = 1;
  while (seeds.size() < k) {
    const auto& last = vectors[seeds.back()];
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      best_sim[i] = std::max(best_sim[i], sparse_dot(vectors[i], last));
      if (!chosen[i]) total += std::max(0.0, 1.0 - best_sim[i]);
    }
    std::size_t next = n;
    if (total > 1e-12) {
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (std::size_t i = 0; i < n; ++i) {
        if (chosen[i]) continue;
        const double w = std::max(0.0, 1.0 - best_sim[i]);
        if (w <= 0.0) continue;
        next = i;
        if (u < w) break;
        u -= w;
      }
    }
    if (next == n) {  // all remaining points coincide with a seed
      std::vector<std::uint32_t> rest;
      for (std::size_t i = 0; i < n; ++i)
        if (!chosen[i]) rest.push_back(static_cast<std::uint32_t>(i));
      next = rest[std::uniform_int_distribution<std::size_t>(0, rest.size() - 1)(rng)];
    }
    chosen[next] = 1;
    seeds.push_back(static_cast<std::uint32_t>(next));
  }
  return seeds;
}

// Assigns points in decreasing order of margin (best minus second best
// similarity) to the most similar group that still has room. Exactly
// n % k groups end with ceil(n/k) members, the rest with floor(n/k).
std::vector<std::uint32_t> balanced_assign(std::span<const double> sims, std::size_t n,
                                           std::size_t k) {
  std::vector<double> margin(n);
  std::vector<std::vector<std::uint32_t>> prefs(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& p = prefs[i];
    p.resize(k);
    std::iota(p.begin(), p.end(), 0u);
    const double* s = sims.data() + i * k;
    std::stable_sort(p.begin(), p.end(), [&](auto a, auto b) { return s[a] > s[b]; });
    margin[i] = k > 1 ? s[p[0]] - s[p[1]] : 0.0;
  }
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return margin[a] > margin[b]; });

  const std::size_t base = n / k, extra = n % k;
  std::vector<std::size_t> size(k, 0);
  std::size_t big = 0;
  std::vector<std::uint32_t> assign(n, 0);
  for (auto i : order) {
    for (auto c : prefs[i]) {
      if (size[c] < base || (size[c] == base && big < extra)) {
        if (size[c] == base) ++big;
        ++size[c];
        assign[i] = c;
        break;
      }
    }
  }
  return assign;
}

}  // namespace

std::vector<LabelVector> label_feature_vectors(const Corpus& train,
                                               std::span<const SparseVector> features) {
  if (features.size() != train.documents.size())
    throw Error("label_feature_vectors: one feature vector per document required");
  const std::size_t L = train.label_universe.size();
  std::vector<std::vector<std::uint32_t>> docs_of(L);
  for (std::size_t d = 0; d < train.documents.size(); ++d)
    for (const auto& l : train.documents[d].gold_labels) {
      auto li = train.label_index(l);
      if (!li) throw Error("label " + l + " is not in the corpus label universe");
      docs_of[*li].push_back(static_cast<std::uint32_t>(d));
    }
  Accumulator acc(dim_of(features));
  std::vector<LabelVector> out;
  for (std::size_t l = 0; l < L; ++l) {
    if (docs_of[l].empty()) continue;
    for (auto d : docs_of[l]) acc.add(features[d]);
    LabelVector lv{static_cast<std::uint32_t>(l), acc.take(1.0 / docs_of[l].size())};
    lv.vector.normalize();
    out.push_back(std::move(lv));
  }
  return out;
}

std::vector<std::uint32_t> balanced_kmeans(std::span<const SparseVector> vectors,
                                           std::size_t k, std::uint64_t seed,
                                           int max_iter) {
  const std::size_t n = vectors.size();
  if (k < 1) throw Error("balanced_kmeans: k must be >= 1");
  if (n < k)
    throw Error("balanced_kmeans: " + std::to_string(n) + " vectors cannot form " +
                std::to_string(k) + " groups");
  if (k == 1) return std::vector<std::uint32_t>(n, 0);

  std::mt19937_64 rng(seed);
  std::vector<SparseVector> centroids;
  for (auto s : kmeanspp_seeds(vectors, k, rng)) centroids.push_back(vectors[s]);

  std::vector<double> dense(std::max<std::size_t>(dim_of(vectors), 1), 0.0);
  Accumulator acc(dense.size());
  std::vector<double> sims;
  std::vector<std::uint32_t> assign;
  for (int it = 0; it < max_iter; ++it) {
    similarities(vectors, centroids, dense, sims);
    auto next = balanced_assign(sims, n, k);
    if (next == assign) break;
    assign = std::move(next);
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t i = 0; i < n; ++i)
        if (assign[i] == c) acc.add(vectors[i]);
      centroids[c] = acc.take();
      centroids[c].normalize();
    }
  }
  return assign;
}

PlTree build_tree(std::span<const LabelVector> label_vectors, const PltConfig& config,
                  std::uint64_t seed, std::size_t feature_dim,
                  std::vector<std::string> label_names) {
  config.validate();
  if (label_vectors.empty()) throw Error("build_tree: no label vectors");
  PlTree tree;
  tree.config = config;
  tree.feature_dim = feature_dim;
  tree.label_names = std::move(label_names);

  // Positions into label_vectors, per node.
  std::vector<std::vector<std::uint32_t>> members;
  std::vector<std::uint32_t> all(label_vectors.size());
  std::iota(all.begin(), all.end(), 0u);
  tree.nodes.push_back({});
  members.push_back(all);

  for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
    auto mem = members[id];
    std::sort(mem.begin(), mem.end(),
              [&](auto a, auto b) { return label_vectors[a].label < label_vectors[b].label; });
    tree.nodes[id].id = static_cast<std::uint32_t>(id);
    for (auto p : mem) tree.nodes[id].labels.push_back(label_vectors[p].label);
    if (mem.size() <= config.m) continue;

    const std::size_t k = std::min(config.k, mem.size());
    std::vector<SparseVector> vs;
    vs.reserve(mem.size());
    for (auto p : mem) vs.push_back(label_vectors[p].vector);
    const auto groups = balanced_kmeans(vs, k, derive_seed(seed, id), config.kmeans_max_iter);
    std::vector<std::vector<std::uint32_t>> parts(k);
    for (std::size_t i = 0; i < mem.size(); ++i) parts[groups[i]].push_back(mem[i]);
    for (auto& part : parts) {
      if (part.empty()) continue;
      const auto child = static_cast<std::uint32_t>(tree.nodes.size());
      tree.nodes[id].children.push_back(child);
      tree.nodes.push_back({});
      members.push_back(std::move(part));
    }
  }
  return tree;
}

TrainStats train_node_classifiers(PlTree& tree, const Corpus& train,
                                  std::span<const SparseVector> features,
                                  unsigned threads) {
  if (features.size() != train.documents.size())
    throw Error("train_node_classifiers: one feature vector per document required");
  const std::size_t L = std::max(tree.label_names.size(), train.label_universe.size());

  // Gold label indices per document, and documents per label.
  std::vector<std::vector<std::uint32_t>> gold(train.documents.size());
  std::vector<std::vector<std::uint32_t>> docs_of(L);
  for (std::size_t d = 0; d < train.documents.size(); ++d) {
    for (const auto& l : train.documents[d].gold_labels) {
      auto li = train.label_index(l);
      if (!li) throw Error("label " + l + " is not in the corpus label universe");
      if (*li >= L) continue;
      gold[d].push_back(static_cast<std::uint32_t>(*li));
      docs_of[*li].push_back(static_cast<std::uint32_t>(d));
    }
  }
  std::vector<std::vector<std::string>> node_warnings(tree.nodes.size());
  std::vector<std::size_t> pruned(tree.nodes.size(), 0);
  LogisticConfig lcfg;
  lcfg.l2 = tree.config.l2;
  lcfg.tolerance = tree.config.solver_tolerance;

  parallel_for(tree.nodes.size(), threads, [&](std::size_t id) {
    PltNode& node = tree.nodes[id];
    std::vector<std::uint32_t> docs;
    for (auto l : node.labels) docs.insert(docs.end(), docs_of[l].begin(), docs_of[l].end());
    std::sort(docs.begin(), docs.end());
    docs.erase(std::unique(docs.begin(), docs.end()), docs.end());

    // Target membership: label -> target position.
    std::vector<std::vector<std::uint32_t>> target_labels;
    if (node.is_leaf()) {
      for (auto l : node.labels) target_labels.push_back({l});
    } else {
      for (auto c : node.children) target_labels.push_back(tree.nodes[c].labels);
    }
    NodeClassifier cls;
    if (docs.empty()) {
      node_warnings[id].push_back("node " + std::to_string(id) +
                                  " has no training documents; classifiers default to negative");
      for (std::size_t t = 0; t < target_labels.size(); ++t) {
        cls.offsets.push_back(0);
        cls.bias.push_back(kAlwaysNegativeBias);
      }
      node.classifier = std::move(cls);
      return;
    }

    // Compact feature space of this node's documents.
    std::vector<std::uint32_t> local_to_global;
    for (auto d : docs)
      local_to_global.insert(local_to_global.end(), features[d].indices.begin(),
                             features[d].indices.end());
    std::sort(local_to_global.begin(), local_to_global.end());
    local_to_global.erase(std::unique(local_to_global.begin(), local_to_global.end()),
                          local_to_global.end());
    std::vector<SparseVector> rows(docs.size());
    for (std::size_t i = 0; i < docs.size(); ++i) {
      const auto& f = features[docs[i]];
      rows[i].values = f.values;
      rows[i].indices.reserve(f.indices.size());
      for (auto j : f.indices)
        rows[i].indices.push_back(static_cast<std::uint32_t>(
            std::lower_bound(local_to_global.begin(), local_to_global.end(), j) -
            local_to_global.begin()));
    }
    std::vector<const SparseVector*> row_ptrs(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) row_ptrs[i] = &rows[i];

    std::vector<std::int8_t> y(docs.size());
    for (const auto& members : target_labels) {
      for (std::size_t i = 0; i < docs.size(); ++i) {
        const auto& g = gold[docs[i]];
        const bool pos = std::any_of(g.begin(), g.end(), [&](auto l) {
          return std::binary_search(members.begin(), members.end(), l);
        });
        y[i] = pos ? 1 : -1;
      }
      const auto model = train_logistic(row_ptrs, y, local_to_global.size(), lcfg);
      for (std::size_t j = 0; j < model.weights.size(); ++j) {
        const double w = model.weights[j];
        if (std::abs(w) < tree.config.weight_prune_eps) {
          ++pruned[id];
          continue;
        }
        cls.indices.push_back(local_to_global[j]);
        cls.weights.push_back(static_cast<float>(w));
      }
      cls.offsets.push_back(static_cast<std::uint32_t>(cls.indices.size()));
      cls.bias.push_back(static_cast<float>(model.bias));
    }
    node.classifier = std::move(cls);
  });

  TrainStats stats;
  for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
    stats.classifiers += tree.nodes[id].classifier.targets();
    stats.nonzero_weights += tree.nodes[id].classifier.weights.size();
    stats.pruned_weights += pruned[id];
    for (auto& w : node_warnings[id]) stats.warnings.push_back(std::move(w));
  }
  tree.trained = true;
  return stats;
}

namespace {

class DenseDoc {
 public:
  DenseDoc(const SparseVector& doc, std::size_t dim) : dense_(dim, 0.0) {
    for (std::size_t i = 0; i < doc.indices.size(); ++i)
      if (doc.indices[i] < dim) dense_[doc.indices[i]] = doc.values[i];
  }
  double score(const NodeClassifier& c, std::size_t t) const {
    return sigmoid(simd::gather_dot(c.target_indices(t), c.target_weights(t), dense_) +
                   static_cast<double>(c.bias[t]));
  }

 private:
  std::vector<double> dense_;
};

void check_trained(const PlTree& tree) {
  if (!tree.trained) throw Error("PLT is not trained");
  if (tree.nodes.empty()) throw Error("PLT has no nodes");
}

}  // namespace

Ranking predict(const PlTree& tree, const SparseVector& doc, std::size_t top_k,
                std::size_t beam) {
  check_trained(tree);
  if (beam == 0) beam = tree.config.beam;
  const DenseDoc x(doc, tree.feature_dim);
  std::vector<std::pair<std::uint32_t, double>> frontier{{tree.root, 1.0}};
  Ranking candidates;
  while (!frontier.empty()) {
    std::vector<std::pair<std::uint32_t, double>> next;
    for (const auto& [id, s] : frontier) {
      const PltNode& node = tree.nodes[id];
      if (node.is_leaf()) {
        for (std::size_t t = 0; t < node.labels.size(); ++t)
          candidates.emplace_back(node.labels[t], s * x.score(node.classifier, t));
      } else {
        for (std::size_t t = 0; t < node.children.size(); ++t)
          next.emplace_back(node.children[t], s * x.score(node.classifier, t));
      }
    }
    std::sort(next.begin(), next.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    if (next.size() > beam) next.resize(beam);
    frontier = std::move(next);
  }
  std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (candidates.size() > top_k) candidates.resize(top_k);
  return candidates;
}

std::vector<double> score_all_labels(const PlTree& tree, const SparseVector& doc) {
  check_trained(tree);
  const DenseDoc x(doc, tree.feature_dim);
  std::size_t L = tree.label_names.size();
  for (const auto& n : tree.nodes)
    for (auto l : n.labels) L = std::max<std::size_t>(L, l + 1);
  std::vector<double> scores(L, 0.0);
  std::vector<std::pair<std::uint32_t, double>> stack{{tree.root, 1.0}};
  while (!stack.empty()) {
    const auto [id, s] = stack.back();
    stack.pop_back();
    const PltNode& node = tree.nodes[id];
    if (node.is_leaf()) {
      for (std::size_t t = 0; t < node.labels.size(); ++t)
        scores[node.labels[t]] = s * x.score(node.classifier, t);
    } else {
      for (std::size_t t = 0; t < node.children.size(); ++t)
        stack.emplace_back(node.children[t], s * x.score(node.classifier, t));
    }
  }
  return scores;
}

void save_model(const PlTree& tree, const std::filesystem::path& path) {
  check_trained(tree);
  Container c("plt");
  auto& h = c.header();
  h["k"] = tree.config.k;
  h["m"] = tree.config.m;
  h["beam"] = tree.config.beam;
  h["l2"] = tree.config.l2;
  h["weight_prune_eps"] = tree.config.weight_prune_eps;
  h["feature_dim"] = tree.feature_dim;
  h["root"] = tree.root;
  h["node_count"] = tree.nodes.size();
  h["label_count"] = tree.label_names.size();
  h["vocab_fingerprint"] = hex64(tree.vocab_fingerprint);
  std::string names;
  for (const auto& l : tree.label_names) names += l + '\n';
  c.add_bytes("labels", names);
  for (const auto& n : tree.nodes) {
    const std::string p = "node." + std::to_string(n.id) + ".";
    c.add_u32(p + "labels", {n.labels.size()}, n.labels);
    c.add_u32(p + "children", {n.children.size()}, n.children);
    c.add_u32(p + "offsets", {n.classifier.offsets.size()}, n.classifier.offsets);
    c.add_u32(p + "indices", {n.classifier.indices.size()}, n.classifier.indices);
    c.add_f32(p + "weights", {n.classifier.weights.size()},
              std::span<const float>(n.classifier.weights));
    c.add_f32(p + "bias", {n.classifier.bias.size()}, std::span<const float>(n.classifier.bias));
  }
  c.save(path);
}

PlTree load_model(const std::filesystem::path& path) {
  const Container c = Container::load(path, "plt");
  const auto& h = c.header();
  PlTree t;
  try {
    t.config.k = h.at("k").get<std::size_t>();
    t.config.m = h.at("m").get<std::size_t>();
    t.config.beam = h.at("beam").get<std::size_t>();
    t.config.l2 = h.at("l2").get<double>();
    t.config.weight_prune_eps = h.at("weight_prune_eps").get<double>();
    t.feature_dim = h.at("feature_dim").get<std::size_t>();
    t.root = h.at("root").get<std::uint32_t>();
    t.vocab_fingerprint = std::stoull(h.at("vocab_fingerprint").get<std::string>(), nullptr, 16);
    const auto count = h.at("node_count").get<std::size_t>();
    std::istringstream names(c.bytes("labels"));
    for (std::string l; std::getline(names, l);) t.label_names.push_back(l);
    for (std::size_t id = 0; id < count; ++id) {
      const std::string p = "node." + std::to_string(id) + ".";
      PltNode n;
      n.id = static_cast<std::uint32_t>(id);
      n.labels = c.u32(p + "labels");
      n.children = c.u32(p + "children");
      n.classifier.offsets = c.u32(p + "offsets");
      n.classifier.indices = c.u32(p + "indices");
      n.classifier.weights = c.f32(p + "weights");
      n.classifier.bias = c.f32(p + "bias");
      const std::size_t targets = n.is_leaf() ? n.labels.size() : n.children.size();
      if (n.classifier.bias.size() != targets ||
          n.classifier.offsets.size() != targets + 1 ||
          n.classifier.offsets.back() != n.classifier.indices.size() ||
          n.classifier.indices.size() != n.classifier.weights.size())
        throw Error("node " + std::to_string(id) + " is inconsistent");
      for (auto ch : n.children)
        if (ch >= count) throw Error("node " + std::to_string(id) + " has an invalid child");
      t.nodes.push_back(std::move(n));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": bad PLT header: " + e.what());
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
  t.trained = true;
  return t;
}

}  // namespace lmtc::plt
