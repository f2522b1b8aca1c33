// SPDX-License-Identifier: Apache-2.0
#include "lmtc/hierarchy.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <set>

#include "lmtc/error.hpp"
#include "lmtc/parallel.hpp"

namespace lmtc {

std::optional<std::uint32_t> LabelGraph::find(std::string_view label) const {
  auto it = std::lower_bound(labels.begin(), labels.end(), label);
  if (it == labels.end() || *it != label) return std::nullopt;
  return static_cast<std::uint32_t>(it - labels.begin());
}

std::uint32_t LabelGraph::index_of(std::string_view label) const {
  if (auto i = find(label)) return *i;
  throw Error("label " + std::string(label) + " is not in the hierarchy");
}

std::size_t LabelGraph::edge_count() const {
  std::size_t n = 0;
  for (const auto& c : children) n += c.size();
  return n;
}

namespace {

void sort_unique(std::vector<std::uint32_t>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

// Returns one directed cycle as a label path, or empty.
std::vector<std::uint32_t> find_cycle(const LabelGraph& g) {
  const std::size_t n = g.size();
  std::vector<std::uint8_t> color(n, 0);  // 0 new, 1 on stack, 2 done
  std::vector<std::uint32_t> parent(n, 0);
  for (std::uint32_t s = 0; s < n; ++s) {
    if (color[s]) continue;
    std::vector<std::pair<std::uint32_t, std::size_t>> stack{{s, 0}};
    color[s] = 1;
    while (!stack.empty()) {
      auto& [v, next] = stack.back();
      if (next < g.children[v].size()) {
        const std::uint32_t w = g.children[v][next++];
        if (color[w] == 1) {
          std::vector<std::uint32_t> cycle{w};
          for (std::uint32_t x = v; x != w; x = parent[x]) cycle.push_back(x);
          cycle.push_back(w);
          std::reverse(cycle.begin(), cycle.end());
          return cycle;
        }
        if (color[w] == 0) {
          color[w] = 1;
          parent[w] = v;
          stack.emplace_back(w, 0);
        }
      } else {
        color[v] = 2;
        stack.pop_back();
      }
    }
  }
  return {};
}

std::vector<std::string> split_tab_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot read " + p.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

}  // namespace

LabelGraph build_label_graph(
    std::span<const std::pair<std::string, std::string>> edges,
    const std::map<std::string, std::string>& descriptors,
    std::string_view root_id) {
  std::set<std::string> edge_labels;
  for (const auto& [p, c] : edges) {
    if (p == c) throw Error("self-loop on label " + p);
    edge_labels.insert(p);
    edge_labels.insert(c);
  }
  const bool explicit_root = edge_labels.contains(std::string(root_id));

  std::set<std::string> all = edge_labels;
  all.insert(std::string(root_id));
  for (const auto& [l, _] : descriptors) all.insert(l);

  LabelGraph g;
  g.labels.assign(all.begin(), all.end());
  const std::size_t n = g.labels.size();
  g.parents.resize(n);
  g.children.resize(n);
  g.descriptors.resize(n);
  g.root = g.index_of(root_id);

  for (const auto& [p, c] : edges) {
    const auto pi = g.index_of(p), ci = g.index_of(c);
    g.children[pi].push_back(ci);
    g.parents[ci].push_back(pi);
  }
  for (std::uint32_t v = 0; v < n; ++v) {
    if (v == g.root) continue;
    const bool in_edges = edge_labels.contains(g.labels[v]);
    if (!in_edges) {
      g.warnings.push_back("label " + g.labels[v] +
                           " has a descriptor but no edges; attached to the root");
    }
    if (g.parents[v].empty() && (!explicit_root || !in_edges)) {
      g.children[g.root].push_back(v);
      g.parents[v].push_back(g.root);
    }
  }
  for (std::uint32_t v = 0; v < n; ++v) {
    sort_unique(g.parents[v]);
    sort_unique(g.children[v]);
  }
  if (!g.parents[g.root].empty())
    throw Error("root " + std::string(root_id) + " has parent " +
                g.labels[g.parents[g.root].front()]);

  if (auto cycle = find_cycle(g); !cycle.empty()) {
    std::string msg = "cycle in label hierarchy: ";
    for (std::size_t i = 0; i < cycle.size(); ++i)
      msg += (i ? " -> " : "") + g.labels[cycle[i]];
    throw Error(msg);
  }

  g.neighbors.resize(n);
  for (std::uint32_t v = 0; v < n; ++v) {
    auto& nb = g.neighbors[v];
    nb = g.parents[v];
    nb.insert(nb.end(), g.children[v].begin(), g.children[v].end());
    sort_unique(nb);
  }

  const auto dist = bfs_distances(g, g.root);
  for (std::uint32_t v = 0; v < n; ++v)
    if (dist[v] < 0)
      throw Error("label hierarchy is disconnected: " + g.labels[v] +
                  " is not connected to the root");

  for (const auto& [l, text] : descriptors) g.descriptors[g.index_of(l)] = tokenize(text);
  return g;
}

std::map<std::string, std::string> load_descriptors(const std::filesystem::path& path) {
  std::map<std::string, std::string> descriptors;
  std::size_t lineno = 0;
  for (const auto& line : split_tab_lines(path)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw Error(path.string() + ": line " + std::to_string(lineno) +
                  ": expected label<TAB>descriptor");
    descriptors[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return descriptors;
}

LabelGraph load_hierarchy(const std::filesystem::path& edge_path,
                          const std::filesystem::path& descriptor_path,
                          std::string_view root_id) {
  std::vector<std::pair<std::string, std::string>> edges;
  std::size_t lineno = 0;
  for (const auto& line : split_tab_lines(edge_path)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
      throw Error(edge_path.string() + ": line " + std::to_string(lineno) +
                  ": expected parent<TAB>child");
    edges.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  std::map<std::string, std::string> descriptors;
  if (!descriptor_path.empty()) descriptors = load_descriptors(descriptor_path);
  return build_label_graph(edges, descriptors, root_id);
}

std::vector<int> bfs_distances(const LabelGraph& g, std::uint32_t source) {
  std::vector<int> dist(g.size(), -1);
  std::deque<std::uint32_t> queue{source};
  dist[source] = 0;
  while (!queue.empty()) {
    const auto v = queue.front();
    queue.pop_front();
    for (auto w : g.neighbors[v]) {
      if (dist[w] < 0) {
        dist[w] = dist[v] + 1;
        queue.push_back(w);
      }
    }
  }
  return dist;
}

std::vector<std::uint32_t> smallest_shortest_path(const LabelGraph& g,
                                                  std::uint32_t from,
                                                  std::uint32_t to,
                                                  std::span<const int> dist_to) {
  if (dist_to[from] < 0) throw Error("no path between " + g.labels[from] + " and " + g.labels[to]);
  std::vector<std::uint32_t> path{from};
  std::uint32_t cur = from;
  while (cur != to) {
    for (auto w : g.neighbors[cur]) {
      if (dist_to[w] == dist_to[cur] - 1) {
        cur = w;
        break;
      }
    }
    path.push_back(cur);
  }
  return path;
}

GapResult gap_document(const LabelGraph& g, std::span<const std::uint32_t> gold_in) {
  std::vector<std::uint32_t> gold(gold_in.begin(), gold_in.end());
  sort_unique(gold);
  if (gold.empty()) throw Error("gap_document needs at least one gold label");
  for (auto v : gold)
    if (v >= g.size()) throw Error("gold label index out of range");

  std::vector<std::uint8_t> in_closure(g.size(), 0);
  for (auto v : gold) in_closure[v] = 1;
  // gold is sorted, so for pair (i < j) we walk from gold[i] towards gold[j]
  // using distances to gold[j].
  for (std::size_t j = 1; j < gold.size(); ++j) {
    const auto dist = bfs_distances(g, gold[j]);
    for (std::size_t i = 0; i < j; ++i)
      for (auto v : smallest_shortest_path(g, gold[i], gold[j], dist)) in_closure[v] = 1;
  }
  GapResult r;
  r.gold_size = gold.size();
  for (std::uint32_t v = 0; v < g.size(); ++v)
    if (in_closure[v]) r.closure.push_back(v);
  r.closure_size = r.closure.size();
  r.gap = static_cast<double>(r.gold_size) / static_cast<double>(r.closure_size);
  return r;
}

GapResult gap_document(const LabelGraph& g, std::span<const std::string> gold) {
  std::vector<std::uint32_t> idx;
  idx.reserve(gold.size());
  for (const auto& l : gold) {
    auto i = g.find(l);
    if (!i) throw Error("gold label " + l + " is not in the hierarchy");
    idx.push_back(*i);
  }
  return gap_document(g, std::span<const std::uint32_t>(idx));
}

GapReport gap_dataset(const LabelGraph& g, const Corpus& corpus, unsigned threads) {
  if (corpus.documents.empty()) throw Error("gap_dataset: empty corpus");
  const std::size_t n = corpus.documents.size();
  std::vector<std::optional<GapResult>> results(n);
  parallel_for(n, threads, [&](std::size_t i) {
    const auto& d = corpus.documents[i];
    if (d.gold_labels.empty()) return;
    try {
      results[i] = gap_document(g, std::span<const std::string>(d.gold_labels));
    } catch (const Error& e) {
      throw Error("document " + d.id + ": " + e.what());
    }
  });

  GapReport rep;
  rep.documents = n;
  rep.label_count = corpus.label_universe.size();
  double gap_sum = 0.0, label_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& d = corpus.documents[i];
    label_sum += static_cast<double>(d.gold_labels.size());
    if (!results[i]) {
      ++rep.skipped_documents;
      continue;
    }
    rep.per_document.push_back(
        {d.id, results[i]->gold_size, results[i]->closure_size, results[i]->gap});
    gap_sum += results[i]->gap;
  }
  if (!rep.per_document.empty()) rep.mean_gap = gap_sum / rep.per_document.size();
  rep.avg_labels_per_doc = label_sum / static_cast<double>(n);
  if (rep.label_count > 0) {
    double dens = 0.0;
    for (const auto& d : corpus.documents)
      dens += static_cast<double>(d.gold_labels.size()) / static_cast<double>(rep.label_count);
    rep.density = dens / static_cast<double>(n);
  }
  return rep;
}

LabelBuckets::Kind LabelBuckets::kind_of(std::string_view label) const {
  auto it = counts.find(std::string(label));
  const std::size_t n = it == counts.end() ? 0 : it->second;
  if (n > t_freq) return Kind::kFrequent;
  if (n >= t_few) return Kind::kFew;
  return Kind::kZero;
}

LabelBuckets bucketize_labels(const Corpus& train, std::size_t t_freq) {
  if (t_freq < 1) throw Error("t_freq must be >= 1");
  LabelBuckets b;
  b.t_freq = t_freq;
  for (const auto& l : train.label_universe) b.counts[l] = 0;
  for (const auto& d : train.documents)
    for (const auto& l : d.gold_labels) ++b.counts[l];
  for (const auto& [l, n] : b.counts) {
    if (n > t_freq) b.frequent.push_back(l);
    else if (n >= b.t_few) b.few.push_back(l);
    else b.zero.push_back(l);
  }
  return b;
}

}  // namespace lmtc
