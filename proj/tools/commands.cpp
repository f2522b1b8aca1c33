// SPDX-License-Identifier: Apache-2.0
#include "commands.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "CLI11.hpp"
#include "json.hpp"
#include "lmtc/adapters.hpp"
#include "lmtc/container.hpp"
#include "lmtc/corpus.hpp"
#include "lmtc/error.hpp"
#include "lmtc/eval.hpp"
#include "lmtc/hierarchy.hpp"
#include "lmtc/labelrep.hpp"
#include "lmtc/neural/train.hpp"
#include "lmtc/parallel.hpp"
#include "lmtc/plt.hpp"
#include "lmtc/version.hpp"

namespace lmtc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

unsigned default_threads() {
  if (const char* env = std::getenv("LMTC_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
    throw Error(std::string("LMTC_THREADS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
  if (!f) throw Error("write failed: " + path.string());
}

std::string read_bytes(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot read " + path.string());
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

std::uint64_t path_fingerprint(const fs::path& path) {
  if (!fs::is_directory(path)) return fnv1a(read_bytes(path));
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(path))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::uint64_t h = fnv1a(std::string_view("dir"));
  for (const auto& f : files) {
    h = fnv1a(fs::relative(f, path).generic_string() + "\n", h);
    h = fnv1a(read_bytes(f), h);
  }
  return h;
}

// Run record written next to every artifact. Output locations are left out
// so that repeated runs into different directories agree byte for byte.
void write_manifest(const fs::path& path, const std::string& command, const json& config,
                    std::optional<std::uint64_t> seed, unsigned threads,
                    const std::map<std::string, fs::path>& inputs,
                    const std::map<std::string, fs::path>& outputs) {
  json m;
  m["command"] = command;
  m["version"] = std::string(kVersion);
  m["config"] = config;
  m["config_hash"] = hex64(fnv1a(config.dump()));
  m["seed"] = seed ? json(*seed) : json(nullptr);
  m["threads"] = threads;
  json in = json::object();
  for (const auto& [name, p] : inputs)
    if (!p.empty()) in[name] = {{"path", p.string()}, {"fnv1a", hex64(path_fingerprint(p))}};
  m["inputs"] = in;
  json out = json::object();
  for (const auto& [name, p] : outputs) out[name] = hex64(path_fingerprint(p));
  m["outputs"] = out;
  write_text(path, m.dump(2) + "\n");
}

std::optional<std::vector<std::string>> read_universe(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return load_label_universe(path);
}

// Loads splits that share one label universe: the given label file, or the
// union of the gold labels of all of them.
std::vector<Corpus> load_splits(const std::vector<std::pair<std::string, Split>>& paths,
                                const std::string& labels_path) {
  std::vector<Corpus> out;
  auto universe = read_universe(labels_path);
  for (const auto& [p, split] : paths) out.push_back(load_dataset(p, {split, universe}));
  if (!universe) {
    std::vector<const Corpus*> ptrs;
    for (const auto& c : out) ptrs.push_back(&c);
    std::vector<std::string> all;
    for (const auto* c : ptrs)
      all.insert(all.end(), c->label_universe.begin(), c->label_universe.end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    for (auto& c : out) c.label_universe = all;
  }
  return out;
}

void report_warnings(std::ostream& err, std::span<const std::string> warnings,
                     std::string_view what) {
  constexpr std::size_t kShown = 5;
  for (std::size_t i = 0; i < std::min(kShown, warnings.size()); ++i)
    err << "warning: " << warnings[i] << "\n";
  if (warnings.size() > kShown)
    err << "warning: " << warnings.size() - kShown << " more " << what << " warnings\n";
}

// ---------------------------------------------------------------- options

struct Common {
  std::string config;
  std::string out;
  std::optional<unsigned> threads;
  unsigned resolved_threads() const { return threads ? *threads : default_threads(); }
};

struct IngestOpts {
  std::string format, input, split = "train";
};

struct AnalyzeOpts {
  std::string data, train, labels, hierarchy, descriptors, root{kDefaultRootId};
  std::size_t t_freq = 50;
};

struct PltOpts {
  std::string train, labels;
  std::optional<std::uint64_t> seed;
  int ngram = 1;
  std::size_t max_features = 200000;
  plt::PltConfig cfg;
};

struct LwanOpts {
  std::string variant, train, dev, labels, embeddings, hierarchy, descriptors, node2vec;
  std::string root{kDefaultRootId}, encoder = "bigru", oov = "skip";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> layers, hidden, label_hidden, batch_size, epochs, patience;
  std::optional<double> dropout, word_dropout, lr;
  bool trainable_embeddings = false;
};

struct Node2VecOpts {
  std::string hierarchy, descriptors, root{kDefaultRootId};
  std::optional<std::uint64_t> seed;
  labelrep::WalkConfig cfg;
};

struct PredictOpts {
  std::string model, data, vocab;
  std::size_t top_k = 10;
  std::size_t beam = 0;
};

struct EvalOpts {
  std::string predictions, gold, train, labels, protocol = "restricted", name = "model",
                                                   title = "results";
  std::vector<std::size_t> k{5};
  std::size_t t_freq = 50;
};

std::uint64_t require_seed(const std::optional<std::uint64_t>& s) {
  if (!s) throw Error("--seed is required");
  return *s;
}

// ---------------------------------------------------------------- commands

int cmd_ingest(const Common& c, const IngestOpts& o, std::ostream& out) {
  const Split split = parse_split(o.split);
  const Corpus corpus = ingest_source(o.format, o.input, split);
  const fs::path dir = c.out;
  fs::create_directories(dir);
  const fs::path data = dir / (std::string(split_name(split)) + ".jsonl");
  save_dataset(corpus, data);
  const fs::path labels = dir / "labels.txt";
  std::vector<std::string> universe = corpus.label_universe;
  if (fs::exists(labels)) {
    const auto prev = load_label_universe(labels);
    universe.insert(universe.end(), prev.begin(), prev.end());
    std::sort(universe.begin(), universe.end());
    universe.erase(std::unique(universe.begin(), universe.end()), universe.end());
  }
  save_label_universe(universe, labels);
  out << "ingested " << corpus.doc_count() << " " << split_name(split) << " documents with "
      << corpus.label_universe.size() << " labels from " << o.format << "\n";
  const json cfg = {{"format", o.format}, {"input", o.input}, {"split", o.split}};
  write_manifest(dir / ("manifest.ingest." + std::string(split_name(split)) + ".json"),
                 "ingest", cfg, std::nullopt, c.resolved_threads(), {{"input", o.input}},
                 {{data.filename().string(), data}});
  return 0;
}

LabelGraph load_graph(const std::string& hierarchy, const std::string& descriptors,
                      const std::string& root) {
  if (!hierarchy.empty()) {
    if (!fs::exists(hierarchy)) throw Error("hierarchy file not found: " + hierarchy);
    return load_hierarchy(hierarchy, descriptors, root);
  }
  if (descriptors.empty()) throw Error("a hierarchy or descriptor file is required");
  const auto desc = load_descriptors(descriptors);
  return build_label_graph({}, desc, root);
}

int cmd_analyze(const Common& c, const AnalyzeOpts& o, std::ostream& out, std::ostream& err) {
  if (o.hierarchy.empty()) throw Error("--hierarchy is required");
  if (!fs::exists(o.hierarchy)) throw Error("hierarchy file not found: " + o.hierarchy);
  const unsigned threads = c.resolved_threads();
  const std::string train_path = o.train.empty() ? o.data : o.train;
  auto splits = load_splits({{o.data, Split::kTest}, {train_path, Split::kTrain}}, o.labels);
  const Corpus& data = splits[0];
  const Corpus& train = splits[1];
  const LabelGraph graph = load_hierarchy(o.hierarchy, o.descriptors, o.root);
  report_warnings(err, graph.warnings, "hierarchy");
  const GapReport gap = gap_dataset(graph, data, threads);
  const LabelBuckets buckets = bucketize_labels(train, o.t_freq);

  json r;
  r["gap"] = {{"mean_gap", gap.mean_gap},
              {"density", gap.density},
              {"L_AVG", gap.avg_labels_per_doc},
              {"documents", gap.documents},
              {"skipped_documents", gap.skipped_documents},
              {"label_count", gap.label_count}};
  r["hierarchy"] = {{"nodes", graph.size()}, {"edges", graph.edge_count()},
                    {"root", graph.labels[graph.root]}, {"warnings", graph.warnings.size()}};
  r["buckets"] = {{"t_freq", buckets.t_freq},
                  {"frequent", buckets.frequent.size()},
                  {"few", buckets.few.size()},
                  {"zero", buckets.zero.size()},
                  {"total", buckets.frequent.size() + buckets.few.size() + buckets.zero.size()}};
  r["mean_gap"] = gap.mean_gap;
  r["density"] = gap.density;
  r["avg_labels_per_doc"] = gap.avg_labels_per_doc;
  r["bucket_sizes"] = {{"frequent", buckets.frequent.size()},
                       {"few", buckets.few.size()},
                       {"zero", buckets.zero.size()}};
  r["per_label_counts"] = buckets.counts;
  const fs::path dir = c.out;
  const fs::path report = dir / "analysis.json";
  write_text(report, r.dump(2) + "\n");
  out << "GAP " << gap.mean_gap << ", density " << gap.density << ", L_AVG "
      << gap.avg_labels_per_doc << " over " << gap.documents << " documents\n";
  const json cfg = {{"data", o.data},         {"train", train_path},
                    {"labels", o.labels},     {"hierarchy", o.hierarchy},
                    {"descriptors", o.descriptors}, {"root", o.root},
                    {"t_freq", o.t_freq}};
  write_manifest(dir / "manifest.json", "analyze", cfg, std::nullopt, threads,
                 {{"data", o.data}, {"train", train_path}, {"labels", o.labels},
                  {"hierarchy", o.hierarchy}, {"descriptors", o.descriptors}},
                 {{"analysis.json", report}});
  return 0;
}

int cmd_train_plt(const Common& c, const PltOpts& o, std::ostream& out, std::ostream& err) {
  const std::uint64_t seed = require_seed(o.seed);
  const unsigned threads = c.resolved_threads();
  o.cfg.validate();
  if (o.ngram < 1) throw Error("--ngram must be >= 1");
  auto splits = load_splits({{o.train, Split::kTrain}}, o.labels);
  const Corpus& train = splits[0];
  const Vocabulary vocab = build_vocabulary(train, o.ngram, o.max_features);
  const auto features = vectorize_corpus(train, vocab, threads);
  const auto label_vecs = plt::label_feature_vectors(train, features);
  plt::PlTree tree = plt::build_tree(label_vecs, o.cfg, seed, vocab.size(), train.label_universe);
  tree.vocab_fingerprint = vocab.fingerprint();
  const plt::TrainStats stats = plt::train_node_classifiers(tree, train, features, threads);
  report_warnings(err, stats.warnings, "training");

  const fs::path dir = c.out;
  fs::create_directories(dir);
  const fs::path model = dir / "model.bin", vocab_path = dir / "vocab.bin";
  plt::save_model(tree, model);
  save_vocabulary(vocab, vocab_path);
  const json log = {{"nodes", tree.nodes.size()},
                    {"depth", tree.depth()},
                    {"leaves", tree.leaf_count()},
                    {"labels", label_vecs.size()},
                    {"features", vocab.size()},
                    {"classifiers", stats.classifiers},
                    {"nonzero_weights", stats.nonzero_weights},
                    {"pruned_weights", stats.pruned_weights},
                    {"warnings", stats.warnings}};
  const fs::path log_path = dir / "train_log.json";
  write_text(log_path, log.dump(2) + "\n");
  out << "trained PLT: " << tree.nodes.size() << " nodes, depth " << tree.depth() << ", "
      << stats.nonzero_weights << " weights\n";
  const json cfg = {{"train", o.train},       {"labels", o.labels},
                    {"ngram", o.ngram},       {"max_features", o.max_features},
                    {"k", o.cfg.k},           {"m", o.cfg.m},
                    {"beam", o.cfg.beam},     {"l2", o.cfg.l2},
                    {"prune_eps", o.cfg.weight_prune_eps},
                    {"kmeans_iter", o.cfg.kmeans_max_iter},
                    {"tolerance", o.cfg.solver_tolerance}};
  write_manifest(dir / "manifest.json", "train plt", cfg, seed, threads,
                 {{"train", o.train}, {"labels", o.labels}},
                 {{"model.bin", model}, {"vocab.bin", vocab_path}, {"train_log.json", log_path}});
  return 0;
}

int cmd_train_lwan(const Common& c, const LwanOpts& o, std::ostream& out, std::ostream& err) {
  using namespace neural;
  const std::uint64_t seed = require_seed(o.seed);
  const Variant variant = parse_variant(o.variant);
  const std::string vname(variant_name(variant));
  // Configuration checks come before any expensive loading.
  if (uses_graph(variant) && o.hierarchy.empty())
    throw Error("variant " + vname + " requires --hierarchy");
  if (is_zero_shot(variant) && o.descriptors.empty())
    throw Error("variant " + vname + " requires --descriptors");
  if (uses_node2vec(variant) && o.node2vec.empty())
    throw Error("variant " + vname + " requires --node2vec");
  if (o.embeddings.empty()) throw Error("--embeddings is required");
  if (o.encoder != "bigru" && o.encoder != "linear")
    throw Error("unknown encoder '" + o.encoder + "' (expected bigru or linear)");
  if (o.oov != "skip" && o.oov != "zero")
    throw Error("unknown oov policy '" + o.oov + "' (expected skip or zero)");

  TrainConfig cfg = default_train_config(variant);
  cfg.seed = seed;
  cfg.model.encoder = o.encoder == "bigru" ? EncoderKind::kBiGru : EncoderKind::kLinear;
  if (o.layers) cfg.model.layers = *o.layers;
  if (o.hidden) cfg.model.hidden = *o.hidden;
  if (o.label_hidden) cfg.model.label_hidden = *o.label_hidden;
  if (o.dropout) cfg.model.dropout = *o.dropout;
  if (o.word_dropout) cfg.model.word_dropout = *o.word_dropout;
  cfg.model.trainable_embeddings = o.trainable_embeddings;
  if (o.batch_size) cfg.batch_size = *o.batch_size;
  if (o.epochs) cfg.max_epochs = *o.epochs;
  if (o.patience) cfg.patience = *o.patience;
  if (o.lr) cfg.adam.learning_rate = *o.lr;
  cfg.validate();

  std::vector<std::pair<std::string, Split>> paths{{o.train, Split::kTrain}};
  if (!o.dev.empty()) paths.emplace_back(o.dev, Split::kDev);
  auto splits = load_splits(paths, o.labels);
  const Corpus& train_set = splits[0];
  const Corpus dev_set = o.dev.empty() ? Corpus{Split::kDev, {}, train_set.label_universe}
                                       : splits[1];

  EmbeddingTable emb = load_embeddings(o.embeddings);
  emb.oov_policy = o.oov == "zero" ? OovPolicy::kZero : OovPolicy::kSkip;

  LabelContext ctx;
  std::optional<LabelGraph> graph;
  if (is_zero_shot(variant)) {
    graph = load_graph(o.hierarchy, o.descriptors, o.root);
    report_warnings(err, graph->warnings, "hierarchy");
    const auto centroid = labelrep::centroid_label_vectors(*graph, emb);
    report_warnings(err, centroid.warnings, "label vector");
    std::optional<labelrep::LabelVectors> walked;
    if (uses_node2vec(variant))
      walked = labelrep::load_label_vectors(o.node2vec, labelrep::VectorKind::kNode2Vec)
                   .select(graph->labels);
    const auto inputs = labelrep::compose_label_inputs(encoder_input_mode(variant), centroid,
                                                       walked ? &*walked : nullptr);
    ctx = make_label_context(variant, train_set.label_universe, &centroid, &inputs, &*graph);
  } else {
    ctx = make_label_context(variant, train_set.label_universe, nullptr, nullptr, nullptr);
  }

  const Corpus* corpora[] = {&train_set, &dev_set};
  Model model(cfg.model, build_token_vocab(emb, corpora), emb, std::move(ctx), seed);
  const TrainResult res = train(cfg, std::move(model), train_set, dev_set, [&](const EpochLog& e) {
    out << "epoch " << e.epoch << " train_loss " << e.train_loss << " dev_loss " << e.dev_loss
        << "\n";
  });

  const fs::path dir = c.out;
  fs::create_directories(dir);
  const fs::path model_path = dir / "model.bin";
  save_checkpoint(res.model, model_path);
  json epochs = json::array();
  for (const auto& e : res.log)
    epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"dev_loss", e.dev_loss}});
  const json log = {{"variant", vname},
                    {"epochs", epochs},
                    {"best_epoch", res.best_epoch},
                    {"stopped_epoch", res.stopped_epoch},
                    {"loss_labels", res.loss_labels.size()},
                    {"output_labels", res.model.labels.size()},
                    {"label_checksum", hex64(res.label_checksum)}};
  const fs::path log_path = dir / "train_log.json";
  write_text(log_path, log.dump(2) + "\n");
  out << "best epoch " << res.best_epoch << ", stopped after epoch " << res.stopped_epoch << "\n";

  const json jcfg = {{"variant", vname},
                     {"train", o.train},
                     {"dev", o.dev},
                     {"labels", o.labels},
                     {"embeddings", o.embeddings},
                     {"hierarchy", o.hierarchy},
                     {"descriptors", o.descriptors},
                     {"node2vec", o.node2vec},
                     {"root", o.root},
                     {"oov", o.oov},
                     {"encoder", o.encoder},
                     {"layers", cfg.model.layers},
                     {"hidden", cfg.model.hidden},
                     {"label_hidden", cfg.model.label_hidden},
                     {"dropout", cfg.model.dropout},
                     {"word_dropout", cfg.model.word_dropout},
                     {"trainable_embeddings", cfg.model.trainable_embeddings},
                     {"batch_size", cfg.batch_size},
                     {"epochs", cfg.max_epochs},
                     {"patience", cfg.patience},
                     {"lr", cfg.adam.learning_rate}};
  write_manifest(dir / "manifest.json", "train lwan", jcfg, seed, c.resolved_threads(),
                 {{"train", o.train},
                  {"dev", o.dev},
                  {"labels", o.labels},
                  {"embeddings", o.embeddings},
                  {"hierarchy", o.hierarchy},
                  {"descriptors", o.descriptors},
                  {"node2vec", o.node2vec}},
                 {{"model.bin", model_path}, {"train_log.json", log_path}});
  return 0;
}

int cmd_embed(const Common& c, Node2VecOpts o, std::ostream& out, std::ostream& err) {
  o.cfg.seed = require_seed(o.seed);
  const unsigned threads = c.resolved_threads();
  o.cfg.validate();
  if (o.hierarchy.empty()) throw Error("--hierarchy is required");
  if (!fs::exists(o.hierarchy)) throw Error("hierarchy file not found: " + o.hierarchy);
  const LabelGraph graph = load_hierarchy(o.hierarchy, o.descriptors, o.root);
  report_warnings(err, graph.warnings, "hierarchy");
  const auto walks = labelrep::node2vec_walks(graph, o.cfg, threads);
  const auto res = labelrep::train_skipgram(graph, walks, o.cfg);

  const fs::path dir = c.out;
  fs::create_directories(dir);
  const fs::path vec = dir / "node2vec.txt";
  labelrep::save_label_vectors(res.vectors, vec);
  const json log = {{"walks", walks.size()}, {"nodes", graph.size()}, {"epoch_loss", res.epoch_loss}};
  const fs::path log_path = dir / "embed_log.json";
  write_text(log_path, log.dump(2) + "\n");
  out << "embedded " << graph.size() << " labels from " << walks.size() << " walks\n";
  const json cfg = {{"hierarchy", o.hierarchy}, {"descriptors", o.descriptors},
                    {"root", o.root},           {"p", o.cfg.p},
                    {"q", o.cfg.q},             {"walk_len", o.cfg.walk_len},
                    {"walks", o.cfg.walks_per_node}, {"window", o.cfg.window},
                    {"negatives", o.cfg.negatives}, {"dim", o.cfg.dim},
                    {"epochs", o.cfg.epochs},   {"lr", o.cfg.learning_rate}};
  write_manifest(dir / "manifest.json", "embed node2vec", cfg, o.cfg.seed, threads,
                 {{"hierarchy", o.hierarchy}, {"descriptors", o.descriptors}},
                 {{"node2vec.txt", vec}, {"embed_log.json", log_path}});
  return 0;
}

int cmd_predict(const Common& c, const PredictOpts& o, std::ostream& out, std::ostream& err) {
  if (o.top_k == 0) throw Error("--top-k must be >= 1");
  const unsigned threads = c.resolved_threads();
  const std::string kind = Container::load(o.model).kind();
  const Corpus data = load_dataset(o.data, {Split::kTest, std::nullopt});
  std::vector<eval::RankedPrediction> preds(data.documents.size());
  std::string vocab_path;
  std::size_t empty_docs = 0;

  if (kind == "plt") {
    const plt::PlTree tree = plt::load_model(o.model);
    vocab_path = o.vocab.empty() ? (fs::path(o.model).parent_path() / "vocab.bin").string()
                                 : o.vocab;
    const Vocabulary vocab = load_vocabulary(vocab_path);
    if (vocab.fingerprint() != tree.vocab_fingerprint)
      throw Error("model/vocabulary version mismatch: model expects vocabulary " +
                  hex64(tree.vocab_fingerprint) + ", " + vocab_path + " is " +
                  hex64(vocab.fingerprint()));
    parallel_for(preds.size(), threads, [&](std::size_t i) {
      const auto& doc = data.documents[i];
      const auto ranking = plt::predict(tree, vectorize_tfidf(doc, vocab), o.top_k, o.beam);
      preds[i].id = doc.id;
      for (const auto& [label, score] : ranking)
        preds[i].ranking.emplace_back(tree.label_names[label], score);
    });
  } else if (kind == "lwan") {
    const neural::Model model = neural::load_checkpoint(o.model);
    neural::LabelEncoding enc;
    if (neural::has_label_encoder(model.config.variant))
      enc = neural::label_encoder_forward(model);
    parallel_for(preds.size(), threads, [&](std::size_t i) {
      const auto& doc = data.documents[i];
      preds[i].id = doc.id;
      if (doc.tokens.empty()) return;
      for (const auto& [row, p] : neural::predict(model, doc.tokens, o.top_k, &enc))
        preds[i].ranking.emplace_back(model.labels.output_labels[row], p);
    });
  } else {
    throw Error("unsupported model kind '" + kind + "' in " + o.model);
  }
  for (const auto& d : data.documents) empty_docs += d.tokens.empty();
  if (empty_docs) err << "warning: " << empty_docs << " documents have no tokens\n";

  const fs::path dir = c.out;
  fs::create_directories(dir);
  const fs::path pred_path = dir / "predictions.jsonl";
  std::ostringstream s;
  eval::write_predictions(s, preds);
  write_text(pred_path, s.str());
  out << "wrote " << preds.size() << " predictions\n";
  const json cfg = {{"model", o.model}, {"data", o.data}, {"vocab", vocab_path},
                    {"top_k", o.top_k}, {"beam", o.beam}};
  write_manifest(dir / "manifest.json", "predict", cfg, std::nullopt, threads,
                 {{"model", o.model}, {"data", o.data}, {"vocab", vocab_path}},
                 {{"predictions.jsonl", pred_path}});
  return 0;
}

int cmd_evaluate(const Common& c, const EvalOpts& o, std::ostream& out) {
  const unsigned threads = c.resolved_threads();
  const auto protocol = eval::parse_protocol(o.protocol);
  if (o.k.empty()) throw Error("--k needs at least one value");
  std::vector<std::pair<std::string, Split>> paths{{o.gold, Split::kTest}};
  if (!o.train.empty()) paths.emplace_back(o.train, Split::kTrain);
  const auto splits = load_splits(paths, o.labels);
  const Corpus& gold = splits[0];
  std::optional<LabelBuckets> buckets;
  if (!o.train.empty()) buckets = bucketize_labels(splits[1], o.t_freq);
  const auto preds = eval::load_predictions(o.predictions);

  json reports = json::array();
  std::string tables;
  for (std::size_t k : o.k) {
    const auto r = eval::evaluate(preds, gold, buckets ? &*buckets : nullptr, k, protocol, threads);
    reports.push_back(eval::report_json(r));
    const std::pair<std::string, eval::MetricsReport> row{o.name, r};
    tables += eval::report_table(o.title, std::span(&row, 1)) + "\n";
  }
  const fs::path dir = c.out;
  fs::create_directories(dir);
  const fs::path json_path = dir / "metrics.json", txt_path = dir / "metrics.txt";
  write_text(json_path, json{{"reports", reports}}.dump(2) + "\n");
  write_text(txt_path, tables);
  out << tables;
  const json cfg = {{"predictions", o.predictions}, {"gold", o.gold},   {"train", o.train},
                    {"labels", o.labels},           {"k", o.k},         {"t_freq", o.t_freq},
                    {"protocol", o.protocol},       {"name", o.name},   {"title", o.title}};
  write_manifest(dir / "manifest.json", "evaluate", cfg, std::nullopt, threads,
                 {{"predictions", o.predictions}, {"gold", o.gold}, {"train", o.train},
                  {"labels", o.labels}},
                 {{"metrics.json", json_path}, {"metrics.txt", txt_path}});
  return 0;
}

// ---------------------------------------------------------------- config file

std::string unquote(std::string v) {
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front())
    return v.substr(1, v.size() - 2);
  return v;
}

bool on_command_line(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
    return a == flag || a.rfind(flag + "=", 0) == 0;
  });
}

// Turns config entries into extra arguments for options not given on the
// command line. Keys of the shared [data] and [run] sections and top-level
// keys apply when the command has such an option; keys of the command's own
// section must exist.
std::vector<std::string> config_arguments(const std::string& path, const CLI::App& sub,
                                          const std::string& own_section,
                                          const std::vector<std::string>& args) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(path, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error("config " + path + ": " + e.what());
  }
  std::vector<std::string> extra;
  auto apply = [&](const std::string& key, const std::string& raw, bool strict) {
    const std::string flag = "--" + key;
    const CLI::Option* opt = sub.get_option_no_throw(flag);
    if (!opt) {
      if (strict) throw Error("config " + path + ": unknown key '" + key + "' in [" +
                              own_section + "]");
      return;
    }
    if (on_command_line(args, flag)) return;
    const std::string value = unquote(raw);
    if (opt->get_expected_min() == 0) {
      if (value == "true" || value == "1" || value == "yes") extra.push_back(flag);
      return;
    }
    extra.push_back(flag);
    if (opt->get_expected_max() > 1) {
      std::string item;
      std::istringstream s(value);
      while (std::getline(s, item, ',')) extra.push_back(item);
    } else {
      extra.push_back(value);
    }
  };
  for (const auto& [key, node] : tree) {
    if (node.empty()) {
      apply(key, node.data(), false);
      continue;
    }
    const bool own = key == own_section;
    if (!own && key != "data" && key != "run") continue;
    for (const auto& [k, v] : node) apply(k, v.data(), own);
  }
  return extra;
}

std::string config_path_from(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return {};
}

void add_common(CLI::App* sub, Common& c, bool needs_out = true) {
  sub->add_option("--config", c.config, "INI/TOML-style config file; flags override it");
  auto* out = sub->add_option("--out", c.out, "output directory");
  if (needs_out) out->required();
  sub->add_option("--threads", c.threads, "worker threads (default: LMTC_THREADS or 1)")
      ->check(CLI::PositiveNumber);
}

}  // namespace

int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Large-scale multi-label text classification toolkit", "lmtc"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  Common common;
  IngestOpts ingest;
  AnalyzeOpts analyze;
  PltOpts plt_opts;
  LwanOpts lwan;
  Node2VecOpts n2v;
  PredictOpts predict;
  EvalOpts evaluate;

  auto* s_ingest = app.add_subcommand("ingest", "convert a source dump into canonical JSONL");
  add_common(s_ingest, common);
  s_ingest->add_option("--format", ingest.format, "source format")->required();
  s_ingest->add_option("--input", ingest.input, "source file or directory")->required();
  s_ingest->add_option("--split", ingest.split, "train, dev or test");

  auto* s_analyze = app.add_subcommand("analyze", "GAP, density and label bucket report");
  add_common(s_analyze, common);
  s_analyze->add_option("--data", analyze.data, "dataset to analyze")->required();
  s_analyze->add_option("--train", analyze.train, "training split for buckets (default --data)");
  s_analyze->add_option("--labels", analyze.labels, "label universe file");
  s_analyze->add_option("--hierarchy", analyze.hierarchy, "parent<TAB>child edge file");
  s_analyze->add_option("--descriptors", analyze.descriptors, "label<TAB>descriptor file");
  s_analyze->add_option("--root", analyze.root, "root label id");
  s_analyze->add_option("--t-freq", analyze.t_freq, "frequent-label threshold");

  auto* s_train = app.add_subcommand("train", "train a model");
  s_train->require_subcommand(1);
  auto* s_plt = s_train->add_subcommand("plt", "probabilistic label tree");
  add_common(s_plt, common);
  s_plt->add_option("--train", plt_opts.train, "training split")->required();
  s_plt->add_option("--labels", plt_opts.labels, "label universe file");
  s_plt->add_option("--seed", plt_opts.seed, "random seed (required)");
  s_plt->add_option("--ngram", plt_opts.ngram, "maximum n-gram order");
  s_plt->add_option("--max-features", plt_opts.max_features, "vocabulary size cap");
  s_plt->add_option("--k", plt_opts.cfg.k, "branching factor");
  s_plt->add_option("--m", plt_opts.cfg.m, "maximum labels per leaf");
  s_plt->add_option("--beam", plt_opts.cfg.beam, "default beam width");
  s_plt->add_option("--l2", plt_opts.cfg.l2, "L2 regularization");
  s_plt->add_option("--prune-eps", plt_opts.cfg.weight_prune_eps, "weight pruning threshold");
  s_plt->add_option("--kmeans-iter", plt_opts.cfg.kmeans_max_iter, "k-means iteration cap");
  s_plt->add_option("--tolerance", plt_opts.cfg.solver_tolerance, "solver tolerance");

  auto* s_lwan = s_train->add_subcommand("lwan", "label-wise attention network");
  add_common(s_lwan, common);
  s_lwan->add_option("--variant", lwan.variant, "base, C, DC, DN, DNC, GC or GNC")->required();
  s_lwan->add_option("--train", lwan.train, "training split")->required();
  s_lwan->add_option("--dev", lwan.dev, "development split for early stopping");
  s_lwan->add_option("--labels", lwan.labels, "label universe file");
  s_lwan->add_option("--embeddings", lwan.embeddings, "word embeddings (text format)");
  s_lwan->add_option("--hierarchy", lwan.hierarchy, "parent<TAB>child edge file");
  s_lwan->add_option("--descriptors", lwan.descriptors, "label<TAB>descriptor file");
  s_lwan->add_option("--node2vec", lwan.node2vec, "label vectors from embed node2vec");
  s_lwan->add_option("--root", lwan.root, "root label id");
  s_lwan->add_option("--oov", lwan.oov, "descriptor OOV policy: skip or zero");
  s_lwan->add_option("--seed", lwan.seed, "random seed (required)");
  s_lwan->add_option("--encoder", lwan.encoder, "bigru or linear");
  s_lwan->add_option("--layers", lwan.layers, "encoder layers");
  s_lwan->add_option("--hidden", lwan.hidden, "hidden units per direction");
  s_lwan->add_option("--label-hidden", lwan.label_hidden, "label encoder width");
  s_lwan->add_option("--dropout", lwan.dropout, "dropout rate");
  s_lwan->add_option("--word-dropout", lwan.word_dropout, "word dropout rate");
  s_lwan->add_flag("--trainable-embeddings", lwan.trainable_embeddings, "update word embeddings");
  s_lwan->add_option("--batch-size", lwan.batch_size, "documents per batch");
  s_lwan->add_option("--epochs", lwan.epochs, "maximum epochs");
  s_lwan->add_option("--patience", lwan.patience, "early stopping patience");
  s_lwan->add_option("--lr", lwan.lr, "Adam learning rate");

  auto* s_embed = app.add_subcommand("embed", "label graph embeddings");
  s_embed->require_subcommand(1);
  auto* s_n2v = s_embed->add_subcommand("node2vec", "node2vec over the label hierarchy");
  add_common(s_n2v, common);
  s_n2v->add_option("--hierarchy", n2v.hierarchy, "parent<TAB>child edge file")->required();
  s_n2v->add_option("--descriptors", n2v.descriptors, "label<TAB>descriptor file");
  s_n2v->add_option("--root", n2v.root, "root label id");
  s_n2v->add_option("--seed", n2v.seed, "random seed (required)");
  s_n2v->add_option("--p", n2v.cfg.p, "return parameter");
  s_n2v->add_option("--q", n2v.cfg.q, "in-out parameter");
  s_n2v->add_option("--walk-len", n2v.cfg.walk_len, "walk length");
  s_n2v->add_option("--walks", n2v.cfg.walks_per_node, "walks per node");
  s_n2v->add_option("--window", n2v.cfg.window, "skip-gram window");
  s_n2v->add_option("--negatives", n2v.cfg.negatives, "negative samples");
  s_n2v->add_option("--dim", n2v.cfg.dim, "vector dimension");
  s_n2v->add_option("--epochs", n2v.cfg.epochs, "skip-gram epochs");
  s_n2v->add_option("--lr", n2v.cfg.learning_rate, "initial learning rate");

  auto* s_predict = app.add_subcommand("predict", "rank labels for a dataset");
  add_common(s_predict, common);
  s_predict->add_option("--model", predict.model, "model.bin from train")->required();
  s_predict->add_option("--data", predict.data, "dataset to score")->required();
  s_predict->add_option("--vocab", predict.vocab, "PLT vocabulary (default: next to the model)");
  s_predict->add_option("--top-k", predict.top_k, "labels per document");
  s_predict->add_option("--beam", predict.beam, "PLT beam width (0: model default)");

  auto* s_eval = app.add_subcommand("evaluate", "ranking metrics report");
  add_common(s_eval, common);
  s_eval->add_option("--predictions", evaluate.predictions, "prediction dump")->required();
  s_eval->add_option("--gold", evaluate.gold, "gold dataset")->required();
  s_eval->add_option("--train", evaluate.train, "training split for frequency buckets");
  s_eval->add_option("--labels", evaluate.labels, "label universe file");
  s_eval->add_option("--t-freq", evaluate.t_freq, "frequent-label threshold");
  s_eval->add_option("--k", evaluate.k, "cutoffs")->delimiter(',');
  s_eval->add_option("--protocol", evaluate.protocol, "bucket protocol: restricted or filtered");
  s_eval->add_option("--name", evaluate.name, "method name for the table");
  s_eval->add_option("--title", evaluate.title, "table title");

  try {
    // Resolve the target subcommand up front so config keys can be checked
    // against its options.
    const std::string config = config_path_from(args);
    if (!config.empty()) {
      std::vector<std::string> words;
      for (const auto& a : args) {
        if (a.rfind("-", 0) == 0) break;
        words.push_back(a);
      }
      const CLI::App* sub = nullptr;
      std::string section;
      if (!words.empty()) {
        if (words[0] == "train" && words.size() > 1) {
          sub = s_train->get_subcommand_no_throw(words[1]);
          section = words[1];
        } else if (words[0] == "embed" && words.size() > 1) {
          sub = s_embed->get_subcommand_no_throw(words[1]);
          section = words[1];
        } else {
          sub = app.get_subcommand_no_throw(words[0]);
          section = words[0];
        }
      }
      if (!sub) throw Error("--config needs a subcommand");
      const auto extra = config_arguments(config, *sub, section, args);
      args.insert(args.end(), extra.begin(), extra.end());
    }
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (s_ingest->parsed()) return cmd_ingest(common, ingest, out);
    if (s_analyze->parsed()) return cmd_analyze(common, analyze, out, err);
    if (s_plt->parsed()) return cmd_train_plt(common, plt_opts, out, err);
    if (s_lwan->parsed()) return cmd_train_lwan(common, lwan, out, err);
    if (s_n2v->parsed()) return cmd_embed(common, n2v, out, err);
    if (s_predict->parsed()) return cmd_predict(common, predict, out, err);
    if (s_eval->parsed()) return cmd_evaluate(common, evaluate, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  err << "error: no command\n";
  return 2;
}

}  // namespace lmtc::cli
