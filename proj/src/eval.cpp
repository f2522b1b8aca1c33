// SPDX-License-Identifier: Apache-2.0
#include "lmtc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include "lmtc/error.hpp"
#include "lmtc/parallel.hpp"

namespace lmtc::eval {

std::vector<std::string> RankedPrediction::labels() const {
  std::vector<std::string> out;
  out.reserve(ranking.size());
  for (const auto& [l, _] : ranking) out.push_back(l);
  return out;
}

namespace {

void check_args(std::span<const std::string> gold, std::size_t k) {
  if (gold.empty()) throw Error("empty gold set");
  if (k == 0) throw Error("K must be >= 1");
}

bool is_gold(std::span<const std::string> gold, const std::string& l) {
  return std::binary_search(gold.begin(), gold.end(), l);
}

std::size_t hits_at(std::span<const std::string> ranked, std::span<const std::string> gold,
                    std::size_t k) {
  std::size_t h = 0;
  for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) h += is_gold(gold, ranked[i]);
  return h;
}

}  // namespace

std::pair<double, double> precision_recall_at_k(std::span<const std::string> ranked,
                                                std::span<const std::string> gold,
                                                std::size_t k) {
  check_args(gold, k);
  const double h = static_cast<double>(hits_at(ranked, gold, k));
  return {h / static_cast<double>(k), h / static_cast<double>(gold.size())};
}

double rp_at_k(std::span<const std::string> ranked, std::span<const std::string> gold,
               std::size_t k) {
  check_args(gold, k);
  const std::size_t kk = std::min(k, gold.size());
  return static_cast<double>(hits_at(ranked, gold, k)) / static_cast<double>(kk);
}

double ndcg_at_k(std::span<const std::string> ranked, std::span<const std::string> gold,
                 std::size_t k) {
  check_args(gold, k);
  double dcg = 0.0, ideal = 0.0;
  for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i)
    if (is_gold(gold, ranked[i])) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  for (std::size_t i = 0; i < std::min(k, gold.size()); ++i)
    ideal += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return dcg / ideal;
}

std::string_view protocol_name(BucketProtocol p) {
  return p == BucketProtocol::kRestricted ? "restricted" : "filtered";
}

BucketProtocol parse_protocol(std::string_view name) {
  if (name == "restricted") return BucketProtocol::kRestricted;
  if (name == "filtered") return BucketProtocol::kFiltered;
  throw Error("unknown bucket protocol '" + std::string(name) +
              "' (expected restricted or filtered)");
}

namespace {

struct DocScore {
  bool used = false;
  MetricValues v;
};

DocScore score(std::span<const std::string> ranked, std::span<const std::string> gold,
               std::size_t k) {
  if (gold.empty()) return {};
  DocScore s{true, {}};
  std::tie(s.v.p, s.v.r) = precision_recall_at_k(ranked, gold, k);
  s.v.rp = rp_at_k(ranked, gold, k);
  s.v.ndcg = ndcg_at_k(ranked, gold, k);
  return s;
}

GroupReport reduce(std::string name, std::span<const DocScore> scores, std::size_t labels) {
  GroupReport g;
  g.name = std::move(name);
  g.labels = labels;
  for (const auto& s : scores) {
    if (!s.used) {
      ++g.skipped;
      continue;
    }
    ++g.documents;
    g.mean.p += s.v.p;
    g.mean.r += s.v.r;
    g.mean.rp += s.v.rp;
    g.mean.ndcg += s.v.ndcg;
  }
  if (g.documents) {
    const double n = static_cast<double>(g.documents);
    g.mean.p /= n;
    g.mean.r /= n;
    g.mean.rp /= n;
    g.mean.ndcg /= n;
  }
  return g;
}

}  // namespace

MetricsReport evaluate_groups(
    std::span<const RankedPrediction> preds, const Corpus& gold,
    std::span<const std::pair<std::string, std::vector<std::string>>> groups, std::size_t k,
    BucketProtocol protocol, unsigned threads) {
  if (k == 0) throw Error("K must be >= 1");
  std::unordered_map<std::string_view, std::size_t> doc_pos;
  for (std::size_t i = 0; i < gold.documents.size(); ++i)
    doc_pos.emplace(gold.documents[i].id, i);
  std::vector<const RankedPrediction*> by_doc(gold.documents.size(), nullptr);
  for (const auto& p : preds) {
    auto it = doc_pos.find(p.id);
    if (it == doc_pos.end()) throw Error("prediction for unknown document id " + p.id);
    if (by_doc[it->second]) throw Error("duplicate prediction for document id " + p.id);
    by_doc[it->second] = &p;
  }
  for (std::size_t i = 0; i < by_doc.size(); ++i)
    if (!by_doc[i]) throw Error("no prediction for document id " + gold.documents[i].id);

  const std::size_t n = gold.documents.size();
  std::vector<DocScore> overall(n);
  std::vector<std::vector<DocScore>> per_group(groups.size(), std::vector<DocScore>(n));
  parallel_for(n, threads, [&](std::size_t i) {
    const auto ranked = by_doc[i]->labels();
    const auto& g = gold.documents[i].gold_labels;
    overall[i] = score(ranked, g, k);
    for (std::size_t b = 0; b < groups.size(); ++b) {
      const auto& set = groups[b].second;
      auto in_set = [&](const std::string& l) {
        return std::binary_search(set.begin(), set.end(), l);
      };
      std::vector<std::string> gold_b;
      std::copy_if(g.begin(), g.end(), std::back_inserter(gold_b), in_set);
      if (protocol == BucketProtocol::kRestricted) {
        std::vector<std::string> ranked_b;
        std::copy_if(ranked.begin(), ranked.end(), std::back_inserter(ranked_b), in_set);
        per_group[b][i] = score(ranked_b, gold_b, k);
      } else {
        per_group[b][i] = score(ranked, gold_b, k);
      }
    }
  });

  MetricsReport r;
  r.k = k;
  r.protocol = protocol;
  r.documents = n;
  std::size_t total = 0;
  for (const auto& d : gold.documents) total += d.gold_labels.size();
  r.l_avg = n ? static_cast<double>(total) / static_cast<double>(n) : 0.0;
  r.overall = reduce("all", overall, 0);
  for (std::size_t b = 0; b < groups.size(); ++b)
    r.buckets.push_back(reduce(groups[b].first, per_group[b], groups[b].second.size()));
  return r;
}

MetricsReport evaluate(std::span<const RankedPrediction> preds, const Corpus& gold,
                       const LabelBuckets* buckets, std::size_t k, BucketProtocol protocol,
                       unsigned threads) {
  std::vector<std::pair<std::string, std::vector<std::string>>> groups;
  if (buckets) {
    auto sorted = [](std::vector<std::string> v) {
      std::sort(v.begin(), v.end());
      return v;
    };
    groups.emplace_back("frequent", sorted(buckets->frequent));
    groups.emplace_back("few", sorted(buckets->few));
    groups.emplace_back("zero", sorted(buckets->zero));
  }
  return evaluate_groups(preds, gold, groups, k, protocol, threads);
}

namespace {

nlohmann::json group_json(const GroupReport& g, std::size_t k) {
  const std::string ks = std::to_string(k);
  nlohmann::json j;
  j["name"] = g.name;
  j["documents"] = g.documents;
  j["skipped_documents"] = g.skipped;
  j["labels"] = g.labels;
  j["P@" + ks] = g.mean.p;
  j["R@" + ks] = g.mean.r;
  j["RP@" + ks] = g.mean.rp;
  j["nDCG@" + ks] = g.mean.ndcg;
  return j;
}

}  // namespace

nlohmann::json report_json(const MetricsReport& r) {
  nlohmann::json j;
  j["K"] = r.k;
  j["L_AVG"] = r.l_avg;
  j["documents"] = r.documents;
  j["bucket_protocol"] = std::string(protocol_name(r.protocol));
  j["overall"] = group_json(r.overall, r.k);
  nlohmann::json b = nlohmann::json::array();
  for (const auto& g : r.buckets) b.push_back(group_json(g, r.k));
  j["buckets"] = b;
  return j;
}

std::string report_table(const std::string& title,
                         std::span<const std::pair<std::string, MetricsReport>> rows) {
  if (rows.empty()) return title + "\n";
  const MetricsReport& first = rows.front().second;
  std::vector<std::string> groups{"All Labels"};
  for (const auto& g : first.buckets) {
    std::string n = g.name;
    if (!n.empty()) n[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(n[0])));
    groups.push_back(n);
  }
  std::size_t name_w = 6;
  for (const auto& [name, _] : rows) name_w = std::max(name_w, name.size());
  const std::string ks = std::to_string(first.k);
  const std::string rp = "RP@" + ks, nd = "nDCG@" + ks;
  const std::size_t col_w = std::max<std::size_t>(7, nd.size() + 1);
  const std::size_t group_w = 2 * col_w;

  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };
  auto lpad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.insert(0, w - s.size(), ' ');
    return s;
  };
  auto pct = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
    return std::string(buf);
  };

  std::string out;
  char head[96];
  std::snprintf(head, sizeof head, " (L_AVG=%.2f, K=%zu)", first.l_avg, first.k);
  out += title + head + "\n";
  std::string line1 = pad("", name_w), line2 = pad("Method", name_w);
  for (const auto& g : groups) {
    line1 += " | " + pad(g, group_w);
    line2 += " | " + lpad(rp, col_w) + lpad(nd, col_w);
  }
  out += line1 + "\n" + line2 + "\n";
  out += std::string(line2.size(), '-') + "\n";
  for (const auto& [name, r] : rows) {
    std::string line = pad(name, name_w);
    auto cell = [&](const GroupReport& g) {
      if (g.documents == 0) return " | " + lpad("-", col_w) + lpad("-", col_w);
      return " | " + lpad(pct(g.mean.rp), col_w) + lpad(pct(g.mean.ndcg), col_w);
    };
    line += cell(r.overall);
    for (const auto& g : r.buckets) line += cell(g);
    out += line + "\n";
  }
  return out;
}

void write_predictions(std::ostream& out, std::span<const RankedPrediction> preds) {
  for (const auto& p : preds) {
    nlohmann::json j;
    j["id"] = p.id;
    nlohmann::json r = nlohmann::json::array();
    for (const auto& [l, s] : p.ranking) r.push_back(nlohmann::json::array({l, s}));
    j["ranking"] = r;
    out << j.dump() << '\n';
  }
}

std::vector<RankedPrediction> read_predictions(std::istream& in) {
  std::vector<RankedPrediction> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    RankedPrediction p;
    try {
      const auto j = nlohmann::json::parse(line);
      p.id = j.at("id").get<std::string>();
      std::unordered_set<std::string> seen;
      for (const auto& e : j.at("ranking")) {
        if (!e.is_array() || e.size() != 2) throw Error("ranking entries must be [label, score]");
        auto label = e[0].get<std::string>();
        if (!seen.insert(label).second) throw Error("duplicate label " + label + " in ranking");
        p.ranking.emplace_back(std::move(label), e[1].get<double>());
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error("predictions line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error("predictions line " + std::to_string(line_no) + ": " + e.what());
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<RankedPrediction> load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  return read_predictions(in);
}

}  // namespace lmtc::eval
