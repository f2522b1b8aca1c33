// SPDX-License-Identifier: Apache-2.0
#include "lmtc/neural/train.hpp"

#include "lmtc/container.hpp"
#include "lmtc/error.hpp"

namespace lmtc::neural {

namespace {

std::string join_lines(std::span<const std::string> items) {
  std::string s;
  for (const auto& x : items) {
    s += x;
    s += '\n';
  }
  return s;
}

std::vector<std::string> split_lines(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < s.size()) {
    const auto nl = s.find('\n', start);
    if (nl == std::string::npos) throw Error("checkpoint: unterminated string list");
    out.push_back(s.substr(start, nl - start));
    start = nl + 1;
  }
  return out;
}

void add_adjacency(Container& c, const std::string& name,
                   const std::vector<std::vector<std::uint32_t>>& adj) {
  std::vector<std::uint32_t> offsets{0}, indices;
  for (const auto& a : adj) {
    indices.insert(indices.end(), a.begin(), a.end());
    offsets.push_back(static_cast<std::uint32_t>(indices.size()));
  }
  c.add_u32(name + ".offsets", {offsets.size()}, offsets);
  c.add_u32(name + ".indices", {indices.size()}, indices);
}

std::vector<std::vector<std::uint32_t>> read_adjacency(const Container& c,
                                                       const std::string& name) {
  const auto offsets = c.u32(name + ".offsets");
  const auto indices = c.u32(name + ".indices");
  if (offsets.empty() || offsets.back() != indices.size())
    throw Error("checkpoint: malformed " + name);
  std::vector<std::vector<std::uint32_t>> adj(offsets.size() - 1);
  for (std::size_t i = 0; i + 1 < offsets.size(); ++i)
    adj[i].assign(indices.begin() + offsets[i], indices.begin() + offsets[i + 1]);
  return adj;
}

Matrix read_matrix(const Container& c, const std::string& name) {
  const Section& s = c.section(name);
  if (s.shape.size() != 2) throw Error("checkpoint: " + name + " is not a matrix");
  Matrix m(s.shape[0], s.shape[1]);
  m.data = c.real(name);
  if (m.data.size() != m.rows * m.cols) throw Error("checkpoint: bad size for " + name);
  return m;
}

}  // namespace

void save_checkpoint(const Model& m, const std::filesystem::path& path) {
  Container c("lwan");
  auto& h = c.header();
  const ModelConfig& cfg = m.config;
  h["variant"] = std::string(variant_name(cfg.variant));
  h["encoder"] = cfg.encoder == EncoderKind::kBiGru ? "bigru" : "linear";
  h["layers"] = cfg.layers;
  h["hidden"] = cfg.hidden;
  h["dropout"] = cfg.dropout;
  h["word_dropout"] = cfg.word_dropout;
  h["label_hidden"] = cfg.label_hidden;
  h["trainable_embeddings"] = cfg.trainable_embeddings;
  h["label_checksum"] = hex64(m.labels.checksum());
  nlohmann::json names = nlohmann::json::array();
  for (const auto& p : m.params) {
    names.push_back(p.name);
    c.add_f32("param." + p.name, {p.value.rows, p.value.cols}, p.value.data);
  }
  h["params"] = names;
  c.add_bytes("vocab", join_lines(m.vocab));
  const LabelContext& l = m.labels;
  c.add_bytes("labels.output", join_lines(l.output_labels));
  c.add_f64("labels.attention", {l.attention.rows, l.attention.cols}, l.attention.data);
  c.add_f64("labels.node_inputs", {l.node_inputs.rows, l.node_inputs.cols},
            l.node_inputs.data);
  c.add_u32("labels.output_node", {l.output_node.size()}, l.output_node);
  add_adjacency(c, "labels.parents", l.parents);
  add_adjacency(c, "labels.children", l.children);
  c.save(path);
}

Model load_checkpoint(const std::filesystem::path& path) {
  const Container c = Container::load(path, "lwan");
  const auto& h = c.header();
  Model m;
  try {
    m.config.variant = parse_variant(h.at("variant").get<std::string>());
    const auto enc = h.at("encoder").get<std::string>();
    if (enc != "bigru" && enc != "linear") throw Error("unknown encoder " + enc);
    m.config.encoder = enc == "bigru" ? EncoderKind::kBiGru : EncoderKind::kLinear;
    m.config.layers = h.at("layers").get<std::size_t>();
    m.config.hidden = h.at("hidden").get<std::size_t>();
    m.config.dropout = h.at("dropout").get<double>();
    m.config.word_dropout = h.at("word_dropout").get<double>();
    m.config.label_hidden = h.at("label_hidden").get<std::size_t>();
    m.config.trainable_embeddings = h.at("trainable_embeddings").get<bool>();
    for (const auto& n : h.at("params")) {
      const auto name = n.get<std::string>();
      m.params.push_back({name, read_matrix(c, "param." + name),
                          name != "embedding" || m.config.trainable_embeddings});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("checkpoint " + path.string() + ": bad header: " + e.what());
  }
  m.config.validate();
  m.vocab = split_lines(c.bytes("vocab"));
  LabelContext& l = m.labels;
  l.output_labels = split_lines(c.bytes("labels.output"));
  l.attention = read_matrix(c, "labels.attention");
  l.node_inputs = read_matrix(c, "labels.node_inputs");
  l.output_node = c.u32("labels.output_node");
  l.parents = read_adjacency(c, "labels.parents");
  l.children = read_adjacency(c, "labels.children");
  if (hex64(l.checksum()) != h.value("label_checksum", std::string()))
    throw Error("checkpoint " + path.string() + ": label context checksum mismatch");
  m.rebuild_index();
  return m;
}

}  // namespace lmtc::neural
