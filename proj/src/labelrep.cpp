// SPDX-License-Identifier: Apache-2.0
#include "lmtc/labelrep.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <unordered_map>

#include "lmtc/container.hpp"
#include "lmtc/error.hpp"
#include "lmtc/logistic.hpp"
#include "lmtc/parallel.hpp"
#include "lmtc/random.hpp"
#include "lmtc/simd/kernels.hpp"

namespace lmtc::labelrep {

std::uint64_t LabelVectors::checksum() const {
  std::uint64_t h = fnv1a(std::to_string(dim));
  for (const auto& l : labels) h = fnv1a(l + "\n", h);
  return fnv1a(std::span<const double>(matrix), h);
}

LabelVectors LabelVectors::select(std::span<const std::string> order) const {
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < labels.size(); ++i) pos.emplace(labels[i], i);
  LabelVectors out;
  out.kind = kind;
  out.dim = dim;
  out.frozen = frozen;
  out.matrix.reserve(order.size() * dim);
  for (const auto& l : order) {
    auto it = pos.find(l);
    if (it == pos.end()) throw Error("no label vector for " + l);
    out.labels.push_back(l);
    auto r = row(it->second);
    out.matrix.insert(out.matrix.end(), r.begin(), r.end());
    if (std::find(zero_rows.begin(), zero_rows.end(), l) != zero_rows.end())
      out.zero_rows.push_back(l);
  }
  return out;
}

LabelVectors centroid_label_vectors(const LabelGraph& graph, const EmbeddingTable& emb) {
  LabelVectors out;
  out.kind = VectorKind::kCentroid;
  out.dim = emb.dim;
  out.labels = graph.labels;
  out.matrix.assign(graph.size() * emb.dim, 0.0);
  for (std::size_t l = 0; l < graph.size(); ++l) {
    std::span<double> row(out.matrix.data() + l * emb.dim, emb.dim);
    std::size_t count = 0, found = 0;
    for (const auto& tok : graph.descriptors[l]) {
      auto e = emb.find(tok);
      if (!e.empty()) {
        simd::axpy(1.0, e, row);
        ++found;
        ++count;
      } else if (emb.oov_policy == OovPolicy::kZero) {
        ++count;
      }
    }
    if (found == 0) {
      out.zero_rows.push_back(graph.labels[l]);
      out.warnings.push_back("label " + graph.labels[l] +
                             (graph.descriptors[l].empty()
                                  ? " has no descriptor; zero centroid"
                                  : " has an out-of-vocabulary descriptor; zero centroid"));
      continue;
    }
    for (double& v : row) v /= static_cast<double>(count);
  }
  return out;
}

void WalkConfig::validate() const {
  if (!(p > 0.0) || !(q > 0.0)) throw Error("node2vec p and q must be > 0");
  if (walk_len < 2) throw Error("walk_len must be >= 2");
  if (walks_per_node < 1 || window < 1 || negatives < 1 || epochs < 1)
    throw Error("walks_per_node, window, negatives and epochs must be >= 1");
  if (dim < 2) throw Error("embedding dim must be >= 2");
}

std::vector<std::pair<std::uint32_t, double>> transition_weights(
    const LabelGraph& graph, std::optional<std::uint32_t> prev, std::uint32_t cur,
    double p, double q) {
  std::vector<std::pair<std::uint32_t, double>> out;
  const auto& nb = graph.neighbors[cur];
  out.reserve(nb.size());
  for (auto x : nb) {
    double w = 1.0;
    if (prev) {
      if (x == *prev) {
        w = 1.0 / p;
      } else {
        const auto& pn = graph.neighbors[*prev];
        w = std::binary_search(pn.begin(), pn.end(), x) ? 1.0 : 1.0 / q;
      }
    }
    out.emplace_back(x, w);
  }
  return out;
}

std::vector<Walk> node2vec_walks(const LabelGraph& graph, const WalkConfig& config,
                                 unsigned threads) {
  config.validate();
  const std::size_t n = graph.size();
  std::vector<Walk> walks(n * config.walks_per_node);
  parallel_for(walks.size(), threads, [&](std::size_t w) {
    const auto start = static_cast<std::uint32_t>(w % n);
    std::mt19937_64 rng(derive_seed(config.seed, w));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Walk walk{start};
    std::optional<std::uint32_t> prev;
    while (walk.size() < config.walk_len) {
      const auto cur = walk.back();
      const auto weights = transition_weights(graph, prev, cur, config.p, config.q);
      if (weights.empty()) break;
      double total = 0.0;
      for (const auto& [_, x] : weights) total += x;
      double u = unif(rng) * total;
      std::uint32_t next = weights.back().first;
      for (const auto& [node, x] : weights) {
        if (u < x) {
          next = node;
          break;
        }
        u -= x;
      }
      prev = cur;
      walk.push_back(next);
    }
    walks[w] = std::move(walk);
  });
  return walks;
}

SkipGramResult train_skipgram(const LabelGraph& graph, std::span<const Walk> walks,
                              const WalkConfig& config) {
  config.validate();
  if (walks.empty()) throw Error("train_skipgram: no walks");
  const std::size_t n = graph.size(), dim = config.dim;
  std::mt19937_64 rng(derive_seed(config.seed, "skipgram"));

  std::vector<double> in(n * dim), out(n * dim, 0.0);
  {
    std::uniform_real_distribution<double> init(-0.5 / dim, 0.5 / dim);
    for (double& v : in) v = init(rng);
  }
  // Unigram^0.75 negative sampling distribution.
  std::vector<double> freq(n, 0.0);
  std::size_t positions = 0;
  for (const auto& w : walks) {
    for (auto v : w) {
      if (v >= n) throw Error("walk references unknown node");
      freq[v] += 1.0;
    }
    positions += w.size();
  }
  std::vector<double> cdf(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) cdf[i] = (acc += std::pow(freq[i], 0.75));
  std::uniform_real_distribution<double> unif(0.0, acc);
  auto draw = [&] {
    const double u = unif(rng);
    return static_cast<std::uint32_t>(
        std::min<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin(), n - 1));
  };

  SkipGramResult res;
  std::vector<double> grad(dim);
  const double total_steps = static_cast<double>(positions * config.epochs);
  double step = 0.0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double loss = 0.0;
    std::size_t pairs = 0;
    for (const auto& walk : walks) {
      for (std::size_t i = 0; i < walk.size(); ++i, step += 1.0) {
        const double lr =
            config.learning_rate * std::max(1e-4, 1.0 - step / total_steps);
        const auto center = walk[i];
        std::span<double> vc(in.data() + center * dim, dim);
        const std::size_t lo = i >= config.window ? i - config.window : 0;
        const std::size_t hi = std::min(walk.size() - 1, i + config.window);
        for (std::size_t j = lo; j <= hi; ++j) {
          if (j == i) continue;
          std::fill(grad.begin(), grad.end(), 0.0);
          const auto ctx = walk[j];
          for (std::size_t s = 0; s <= config.negatives; ++s) {
            std::uint32_t target = ctx;
            double label = 1.0;
            if (s > 0) {
              target = draw();
              if (target == ctx) continue;
              label = 0.0;
            }
            std::span<double> vo(out.data() + target * dim, dim);
            const double z = simd::dot(vc, vo);
            loss += label > 0.0 ? softplus(-z) : softplus(z);
            const double g = lr * (label - sigmoid(z));
            simd::axpy(g, vo, grad);
            simd::axpy(g, vc, vo);
          }
          simd::axpy(1.0, grad, vc);
          ++pairs;
        }
      }
    }
    res.epoch_loss.push_back(pairs ? loss / static_cast<double>(pairs) : 0.0);
  }
  res.vectors.kind = VectorKind::kNode2Vec;
  res.vectors.dim = dim;
  res.vectors.labels = graph.labels;
  res.vectors.matrix = std::move(in);
  return res;
}

LabelVectors compose_label_inputs(ComposeMode mode, const LabelVectors& centroid,
                                  const LabelVectors* walked) {
  if (mode == ComposeMode::kCentroid) return centroid;
  if (walked == nullptr) throw Error("node2vec vectors required");
  if (walked->labels != centroid.labels)
    throw Error("label-order mismatch between centroid and node2vec vectors");
  if (mode == ComposeMode::kGraph) return *walked;
  LabelVectors out;
  out.kind = VectorKind::kConcat;
  out.labels = centroid.labels;
  out.dim = centroid.dim + walked->dim;
  out.zero_rows = centroid.zero_rows;
  out.matrix.reserve(out.rows() * out.dim);
  for (std::size_t l = 0; l < out.rows(); ++l) {
    auto u = centroid.row(l);
    auto g = walked->row(l);
    out.matrix.insert(out.matrix.end(), u.begin(), u.end());
    out.matrix.insert(out.matrix.end(), g.begin(), g.end());
  }
  return out;
}

void save_label_vectors(const LabelVectors& v, const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error("cannot write " + path.string());
  for (std::size_t l = 0; l < v.rows(); ++l) {
    std::fputs(v.labels[l].c_str(), f);
    for (double x : v.row(l)) std::fprintf(f, " %.17g", x);
    std::fputc('\n', f);
  }
  if (std::fclose(f) != 0) throw Error("write failed: " + path.string());
}

LabelVectors load_label_vectors(const std::filesystem::path& path, VectorKind kind) {
  const EmbeddingTable t = load_embeddings(path);
  LabelVectors v;
  v.kind = kind;
  v.dim = t.dim;
  v.labels = t.words;
  v.matrix = t.data;
  return v;
}

}  // namespace lmtc::labelrep
