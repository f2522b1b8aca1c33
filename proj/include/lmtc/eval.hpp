// SPDX-License-Identifier: Apache-2.0
#pragma once

// Ranking metrics over top-K predictions and per-frequency-bucket reports.
// Gold sets are sorted, duplicate-free label lists; rankings are ordered
// best first and must not repeat a label.

#include <cstddef>
#include <filesystem>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lmtc/corpus.hpp"
#include "lmtc/hierarchy.hpp"

namespace lmtc::eval {

struct RankedPrediction {
  std::string id;
  std::vector<std::pair<std::string, double>> ranking;

  std::vector<std::string> labels() const;
};

// Each throws on an empty gold set or K = 0. Missing ranks count as misses.
std::pair<double, double> precision_recall_at_k(std::span<const std::string> ranked,
                                                std::span<const std::string> gold,
                                                std::size_t k);
// Hits in the top K divided by min(K, |gold|).
double rp_at_k(std::span<const std::string> ranked, std::span<const std::string> gold,
               std::size_t k);
// Binary gains, discount 1/log2(rank + 1), normalized by the ideal DCG at K.
double ndcg_at_k(std::span<const std::string> ranked, std::span<const std::string> gold,
                 std::size_t k);

struct MetricValues {
  double p = 0.0;
  double r = 0.0;
  double rp = 0.0;
  double ndcg = 0.0;
};

struct GroupReport {
  std::string name;
  MetricValues mean;
  std::size_t documents = 0;  // documents averaged
  std::size_t skipped = 0;    // documents with an empty (restricted) gold set
  std::size_t labels = 0;     // size of the group's label set (0 = unrestricted)
};

// restricted: ranking and gold are both reduced to the bucket's labels.
// filtered: the full ranking is kept and only the gold set is reduced.
enum class BucketProtocol { kRestricted, kFiltered };

std::string_view protocol_name(BucketProtocol p);
BucketProtocol parse_protocol(std::string_view name);

struct MetricsReport {
  std::size_t k = 0;
  double l_avg = 0.0;
  std::size_t documents = 0;
  BucketProtocol protocol = BucketProtocol::kRestricted;
  GroupReport overall;
  std::vector<GroupReport> buckets;  // frequent, few, zero
};

// `preds` must cover every gold document exactly once (matched by id).
// Throws on unknown or missing document ids.
MetricsReport evaluate(std::span<const RankedPrediction> preds, const Corpus& gold,
                       const LabelBuckets* buckets, std::size_t k,
                       BucketProtocol protocol = BucketProtocol::kRestricted,
                       unsigned threads = 1);

// Same, with an explicit list of named label groups (each sorted).
MetricsReport evaluate_groups(
    std::span<const RankedPrediction> preds, const Corpus& gold,
    std::span<const std::pair<std::string, std::vector<std::string>>> groups, std::size_t k,
    BucketProtocol protocol = BucketProtocol::kRestricted, unsigned threads = 1);

nlohmann::json report_json(const MetricsReport& r);

// Aligned plain-text table: one row per method, column pairs RP@K / nDCG@K
// per label group.
std::string report_table(const std::string& title,
                         std::span<const std::pair<std::string, MetricsReport>> rows);

// Prediction dump: one {"id": ..., "ranking": [[label, score], ...]} per line.
void write_predictions(std::ostream& out, std::span<const RankedPrediction> preds);
std::vector<RankedPrediction> read_predictions(std::istream& in);
std::vector<RankedPrediction> load_predictions(const std::filesystem::path& path);

}  // namespace lmtc::eval
