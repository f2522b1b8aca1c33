// SPDX-License-Identifier: Apache-2.0
#include "lmtc/neural/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "lmtc/container.hpp"
#include "lmtc/error.hpp"
#include "lmtc/logistic.hpp"
#include "lmtc/random.hpp"
#include "lmtc/simd/kernels.hpp"

namespace lmtc::neural {

namespace {

struct VariantInfo {
  Variant v;
  std::string_view name;
};
constexpr VariantInfo kVariants[] = {
    {Variant::kBase, "base"}, {Variant::kC, "C"},   {Variant::kDC, "DC"},
    {Variant::kDN, "DN"},     {Variant::kDNC, "DNC"}, {Variant::kGC, "GC"},
    {Variant::kGNC, "GNC"},
};

Matrix to_matrix(const labelrep::LabelVectors& v) {
  Matrix m(v.rows(), v.dim);
  m.data = v.matrix;
  return m;
}

std::string gru_name(std::size_t layer, bool reverse, std::string_view part) {
  return "enc.l" + std::to_string(layer) + (reverse ? ".bw." : ".fw.") + std::string(part);
}

}  // namespace

std::string_view variant_name(Variant v) {
  for (const auto& i : kVariants)
    if (i.v == v) return i.name;
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (const auto& i : kVariants) {
    if (i.name.size() != name.size()) continue;
    if (std::equal(name.begin(), name.end(), i.name.begin(), [](char a, char b) {
          return std::tolower(static_cast<unsigned char>(a)) ==
                 std::tolower(static_cast<unsigned char>(b));
        }))
      return i.v;
  }
  throw Error("unknown variant '" + std::string(name) +
              "' (expected base, C, DC, DN, DNC, GC or GNC)");
}

bool is_zero_shot(Variant v) { return v != Variant::kBase; }
bool has_label_encoder(Variant v) { return v != Variant::kBase && v != Variant::kC; }
bool uses_graph(Variant v) { return v == Variant::kGC || v == Variant::kGNC; }
bool uses_node2vec(Variant v) {
  return v == Variant::kDN || v == Variant::kDNC || v == Variant::kGNC;
}

labelrep::ComposeMode encoder_input_mode(Variant v) {
  switch (v) {
    case Variant::kDN: return labelrep::ComposeMode::kGraph;
    case Variant::kDNC:
    case Variant::kGNC: return labelrep::ComposeMode::kConcat;
    default: return labelrep::ComposeMode::kCentroid;
  }
}

std::size_t ModelConfig::width() const {
  return encoder == EncoderKind::kBiGru ? 2 * hidden : hidden;
}

void ModelConfig::validate() const {
  if (hidden == 0) throw Error("hidden units must be >= 1");
  if (encoder == EncoderKind::kBiGru && (layers < 1 || layers > 2))
    throw Error("encoder layers must be 1 or 2");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("dropout must be in [0,1)");
  if (!(word_dropout >= 0.0 && word_dropout < 1.0))
    throw Error("word dropout must be in [0,1)");
}

ModelConfig default_model_config(Variant v) {
  ModelConfig c;
  c.variant = v;
  c.layers = 1;
  if (v == Variant::kBase) {
    c.hidden = 300;
    c.dropout = 0.4;
  } else {
    c.hidden = 100;
    c.dropout = 0.1;
    c.word_dropout = (v == Variant::kC || v == Variant::kGNC) ? 0.02 : 0.0;
  }
  return c;
}

std::uint64_t LabelContext::checksum() const {
  std::uint64_t h = fnv1a(std::string_view("labels"));
  for (const auto& l : output_labels) h = fnv1a(l + "\n", h);
  h = fnv1a(std::span<const double>(attention.data), h);
  h = fnv1a(std::span<const double>(node_inputs.data), h);
  for (auto n : output_node) h = fnv1a(std::to_string(n) + ",", h);
  for (std::size_t i = 0; i < parents.size(); ++i) {
    for (auto p : parents[i]) h = fnv1a("p" + std::to_string(p), h);
    for (auto c : children[i]) h = fnv1a("c" + std::to_string(c), h);
    h = fnv1a(std::string_view(";"), h);
  }
  return h;
}

LabelContext make_label_context(Variant v, std::span<const std::string> output_labels,
                                const labelrep::LabelVectors* centroid,
                                const labelrep::LabelVectors* encoder_inputs,
                                const LabelGraph* graph) {
  LabelContext ctx;
  ctx.output_labels.assign(output_labels.begin(), output_labels.end());
  if (ctx.output_labels.empty()) throw Error("no output labels");
  if (!is_zero_shot(v)) return ctx;
  if (centroid == nullptr) throw Error("variant " + std::string(variant_name(v)) +
                                       " needs centroid label vectors");
  ctx.attention = to_matrix(centroid->select(output_labels));
  if (!has_label_encoder(v)) return ctx;
  if (encoder_inputs == nullptr)
    throw Error("variant " + std::string(variant_name(v)) + " needs label-encoder inputs");
  if (uses_graph(v)) {
    if (graph == nullptr)
      throw Error("variant " + std::string(variant_name(v)) + " needs a label hierarchy");
    ctx.node_inputs = to_matrix(encoder_inputs->select(graph->labels));
    for (const auto& l : ctx.output_labels) {
      auto idx = graph->find(l);
      if (!idx) throw Error("label " + l + " is not in the hierarchy");
      ctx.output_node.push_back(*idx);
    }
    ctx.parents = graph->parents;
    ctx.children = graph->children;
  } else {
    ctx.node_inputs = to_matrix(encoder_inputs->select(output_labels));
    ctx.output_node.resize(ctx.output_labels.size());
    std::iota(ctx.output_node.begin(), ctx.output_node.end(), 0U);
    ctx.parents.assign(ctx.output_labels.size(), {});
    ctx.children.assign(ctx.output_labels.size(), {});
  }
  return ctx;
}

void Gradients::zero() {
  for (auto& m : g) m.zero();
}

Model::Model(const ModelConfig& cfg, std::vector<std::string> vocabulary,
             const EmbeddingTable& emb, LabelContext ctx, std::uint64_t seed)
    : config(cfg), vocab(std::move(vocabulary)), labels(std::move(ctx)) {
  config.validate();
  if (vocab.empty() || vocab[0] != kUnknownToken)
    throw Error("token vocabulary must start with <unk>");
  if (emb.dim == 0) throw Error("embeddings have zero dimension");
  const Variant v = config.variant;
  const std::size_t width = config.width(), L = labels.size();

  enum class Init { kGlorot, kZero };
  auto add = [&](std::string name, std::size_t r, std::size_t c, Init init,
                 bool trainable = true) {
    Param p{std::move(name), Matrix(r, c), trainable};
    if (init == Init::kGlorot) {
      std::mt19937_64 rng(derive_seed(seed, p.name));
      glorot_uniform(p.value, rng);
    }
    params.push_back(std::move(p));
  };

  {
    Param e{"embedding", Matrix(vocab.size(), emb.dim), config.trainable_embeddings};
    for (std::size_t i = 1; i < vocab.size(); ++i) {
      auto row = emb.find(vocab[i]);
      if (!row.empty()) std::copy(row.begin(), row.end(), e.value.row(i).begin());
    }
    params.push_back(std::move(e));
  }

  if (config.encoder == EncoderKind::kLinear) {
    add("enc.proj", width, emb.dim, Init::kGlorot);
    add("enc.bias", width, 1, Init::kZero);
  } else {
    const std::size_t H = config.hidden;
    for (std::size_t l = 0; l < config.layers; ++l) {
      const std::size_t in = l == 0 ? emb.dim : 2 * H;
      for (bool rev : {false, true}) {
        add(gru_name(l, rev, "wx"), 3 * H, in, Init::kGlorot);
        add(gru_name(l, rev, "wh"), 3 * H, H, Init::kGlorot);
        add(gru_name(l, rev, "bx"), 3 * H, 1, Init::kZero);
        add(gru_name(l, rev, "bh"), 3 * H, 1, Init::kZero);
      }
    }
  }

  if (v == Variant::kBase) {
    add("att.u", L, width, Init::kGlorot);
    add("dec.w", L, width, Init::kGlorot);
    add("dec.b", L, 1, Init::kZero);
  } else {
    const std::size_t d_att = labels.attention.cols;
    if (labels.attention.rows != L) throw Error("label context has no attention vectors");
    if (v == Variant::kC && d_att != width)
      throw Error("variant C needs encoder width " + std::to_string(width) +
                  " to equal the label vector dimension " + std::to_string(d_att));
    add("att.w", d_att, width, Init::kGlorot);
    add("att.b", d_att, 1, Init::kZero);
  }

  if (has_label_encoder(v)) {
    const std::size_t d_in = labels.node_inputs.cols;
    if (d_in == 0) throw Error("label context has no label-encoder inputs");
    const std::size_t hl = config.label_hidden ? config.label_hidden : d_in;
    const bool graph = uses_graph(v);
    add("gcn1.ws", hl, d_in, Init::kGlorot);
    if (graph) {
      add("gcn1.wp", hl, d_in, Init::kGlorot);
      add("gcn1.wc", hl, d_in, Init::kGlorot);
    }
    add("gcn1.b", hl, 1, Init::kZero);
    add("gcn2.ws", hl, hl, Init::kGlorot);
    if (graph) {
      add("gcn2.wp", hl, hl, Init::kGlorot);
      add("gcn2.wc", hl, hl, Init::kGlorot);
    }
    add("gcn2.b", hl, 1, Init::kZero);
    add("out.w", d_in + hl, width, Init::kGlorot);
    add("out.b", d_in + hl, 1, Init::kZero);
  }
  rebuild_index();
}

void Model::rebuild_index() {
  token_index_.clear();
  for (std::size_t i = 0; i < vocab.size(); ++i)
    token_index_.emplace(vocab[i], static_cast<std::uint32_t>(i));
}

std::size_t Model::param_index(std::string_view name) const {
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].name == name) return i;
  throw Error("model has no parameter " + std::string(name));
}

bool Model::has_param(std::string_view name) const {
  return std::any_of(params.begin(), params.end(),
                     [&](const Param& p) { return p.name == name; });
}

const Matrix& Model::value(std::string_view name) const {
  return params[param_index(name)].value;
}

Gradients Model::make_gradients() const {
  Gradients g;
  for (const auto& p : params) g.g.emplace_back(p.value.rows, p.value.cols);
  return g;
}

std::vector<std::uint32_t> Model::token_ids(std::span<const std::string> tokens) const {
  std::vector<std::uint32_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) {
    auto it = token_index_.find(t);
    ids.push_back(it == token_index_.end() ? 0U : it->second);
  }
  return ids;
}

std::vector<std::string> build_token_vocab(const EmbeddingTable& emb,
                                           std::span<const Corpus* const> corpora) {
  std::set<std::string> seen;
  for (const Corpus* c : corpora)
    for (const auto& d : c->documents)
      for (const auto& t : d.tokens)
        if (emb.index.contains(t)) seen.insert(t);
  std::vector<std::string> out{std::string(kUnknownToken)};
  out.insert(out.end(), seen.begin(), seen.end());
  return out;
}

namespace {

GruWeights gru_weights(const Model& m, std::size_t layer, bool rev) {
  return {&m.value(gru_name(layer, rev, "wx")), &m.value(gru_name(layer, rev, "wh")),
          &m.value(gru_name(layer, rev, "bx")), &m.value(gru_name(layer, rev, "bh"))};
}

GruGrads gru_grads(const Model& m, Gradients& g, std::size_t layer, bool rev) {
  return {&g.g[m.param_index(gru_name(layer, rev, "wx"))],
          &g.g[m.param_index(gru_name(layer, rev, "wh"))],
          &g.g[m.param_index(gru_name(layer, rev, "bx"))],
          &g.g[m.param_index(gru_name(layer, rev, "bh"))]};
}

std::vector<double> dropout_mask(std::size_t n, double rate, std::mt19937_64& rng) {
  std::vector<double> mask(n, 1.0);
  if (rate <= 0.0) return mask;
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  for (double& x : mask) x = keep(rng) ? scale : 0.0;
  return mask;
}

}  // namespace

Matrix encode_tokens(const Model& m, std::span<const std::uint32_t> tokens,
                     ForwardTrace* trace, Noise noise) {
  ForwardTrace local;
  ForwardTrace& tr = trace ? *trace : local;
  const std::size_t T = tokens.size();
  if (T == 0) throw Error("empty document");
  const Matrix& E = m.value("embedding");
  tr.tokens.assign(tokens.begin(), tokens.end());
  tr.x = Matrix(T, E.cols);
  for (std::size_t t = 0; t < T; ++t) {
    if (tokens[t] >= E.rows) throw Error("token id out of range");
    auto src = E.row(tokens[t]);
    std::copy(src.begin(), src.end(), tr.x.row(t).begin());
  }
  tr.x_mask.clear();
  tr.h_mask.clear();
  if (noise.rng) {
    tr.x_mask = dropout_mask(tr.x.size(), m.config.dropout, *noise.rng);
    if (m.config.word_dropout > 0.0) {
      std::bernoulli_distribution drop(m.config.word_dropout);
      for (std::size_t t = 0; t < T; ++t)
        if (drop(*noise.rng))
          std::fill_n(tr.x_mask.begin() + t * E.cols, E.cols, 0.0);
    }
    for (std::size_t i = 0; i < tr.x.size(); ++i) tr.x.data[i] *= tr.x_mask[i];
  }

  Matrix h;
  tr.layer_in.clear();
  tr.cache_fw.clear();
  tr.cache_bw.clear();
  if (m.config.encoder == EncoderKind::kLinear) {
    const Matrix& P = m.value("enc.proj");
    const Matrix& b = m.value("enc.bias");
    h = Matrix(T, P.rows);
    for (std::size_t t = 0; t < T; ++t) {
      gemv(P, tr.x.row(t), h.row(t));
      simd::axpy(1.0, b.data, h.row(t));
    }
    tr.layer_in.push_back(tr.x);
  } else {
    const std::size_t H = m.config.hidden;
    Matrix in = tr.x;
    tr.cache_fw.resize(m.config.layers);
    tr.cache_bw.resize(m.config.layers);
    for (std::size_t l = 0; l < m.config.layers; ++l) {
      Matrix fw = gru_forward(in, gru_weights(m, l, false), false, tr.cache_fw[l]);
      Matrix bw = gru_forward(in, gru_weights(m, l, true), true, tr.cache_bw[l]);
      Matrix out(T, 2 * H);
      for (std::size_t t = 0; t < T; ++t) {
        std::copy(fw.row(t).begin(), fw.row(t).end(), out.row(t).begin());
        std::copy(bw.row(t).begin(), bw.row(t).end(), out.row(t).begin() + H);
      }
      tr.layer_in.push_back(std::move(in));
      in = std::move(out);
    }
    h = std::move(in);
  }
  if (noise.rng) {
    tr.h_mask = dropout_mask(h.size(), m.config.dropout, *noise.rng);
    for (std::size_t i = 0; i < h.size(); ++i) h.data[i] *= tr.h_mask[i];
  }
  tr.h = h;
  return h;
}

void label_attention(const Matrix& keys, const Matrix& queries,
                     std::span<const std::uint32_t> rows, const Matrix& h, Matrix& a,
                     Matrix& d) {
  const std::size_t T = h.rows;
  if (keys.rows != T) throw Error("attention keys and token states differ in length");
  if (queries.cols != keys.cols)
    throw Error("attention width mismatch: " + std::to_string(queries.cols) + " vs " +
                std::to_string(keys.cols));
  a = Matrix(rows.size(), T);
  d = Matrix(rows.size(), h.cols);
  const double inv_t = 1.0 / static_cast<double>(T);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto q = queries.row(rows[r]);
    auto ar = a.row(r);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < T; ++t) mx = std::max(mx, ar[t] = simd::dot(q, keys.row(t)));
    double sum = 0.0;
    for (std::size_t t = 0; t < T; ++t) sum += (ar[t] = std::exp(ar[t] - mx));
    for (std::size_t t = 0; t < T; ++t) ar[t] /= sum;
    for (std::size_t t = 0; t < T; ++t) simd::axpy(ar[t] * inv_t, h.row(t), d.row(r));
  }
}

namespace {

std::vector<std::uint32_t> all_rows(std::size_t n) {
  std::vector<std::uint32_t> r(n);
  std::iota(r.begin(), r.end(), 0U);
  return r;
}

void finish_probs(ForwardTrace& tr) {
  tr.probs.resize(tr.logits.size());
  for (std::size_t i = 0; i < tr.logits.size(); ++i) tr.probs[i] = sigmoid(tr.logits[i]);
}

}  // namespace

void lwan_forward(const Model& m, const Matrix& h, std::span<const std::uint32_t> rows,
                  ForwardTrace& tr) {
  const Matrix& u = m.value("att.u");
  const Matrix& w = m.value("dec.w");
  const Matrix& b = m.value("dec.b");
  if (u.cols != h.cols) throw Error("attention width mismatch");
  tr.rows.assign(rows.begin(), rows.end());
  label_attention(h, u, rows, h, tr.a, tr.d);
  tr.logits.resize(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    tr.logits[r] = simd::dot(w.row(rows[r]), tr.d.row(r)) + b.data[rows[r]];
  finish_probs(tr);
}

void zeroshot_attention(const Model& m, const Matrix& h,
                        std::span<const std::uint32_t> rows, ForwardTrace& tr) {
  const Matrix& W = m.value("att.w");
  const Matrix& b = m.value("att.b");
  if (W.cols != h.cols) throw Error("projection width mismatch");
  tr.rows.assign(rows.begin(), rows.end());
  tr.v = Matrix(h.rows, W.rows);
  for (std::size_t t = 0; t < h.rows; ++t) {
    auto vt = tr.v.row(t);
    gemv(W, h.row(t), vt);
    for (std::size_t i = 0; i < vt.size(); ++i) vt[i] = std::tanh(vt[i] + b.data[i]);
  }
  label_attention(tr.v, m.labels.attention, rows, h, tr.a, tr.d);
}

namespace {

struct GcnLayer {
  const Matrix* ws;
  const Matrix* wp;  // nullptr without a graph
  const Matrix* wc;
  const Matrix* b;
};

Matrix neighbor_mean(const Matrix& in, std::span<const std::vector<std::uint32_t>> nb) {
  Matrix out(in.rows, in.cols);
  for (std::size_t l = 0; l < nb.size(); ++l) {
    if (nb[l].empty()) continue;
    const double inv = 1.0 / static_cast<double>(nb[l].size());
    for (auto j : nb[l]) simd::axpy(inv, in.row(j), out.row(l));
  }
  return out;
}

void gcn_forward(const LabelContext& ctx, const GcnLayer& w, const Matrix& in, Matrix& mp,
                 Matrix& mc, Matrix& out) {
  const std::size_t n = in.rows;
  mp = neighbor_mean(in, ctx.parents);
  mc = neighbor_mean(in, ctx.children);
  out = Matrix(n, w.ws->rows);
  for (std::size_t l = 0; l < n; ++l) {
    auto o = out.row(l);
    gemv(*w.ws, in.row(l), o);
    if (w.wp && !ctx.parents[l].empty()) gemv(*w.wp, mp.row(l), o, true);
    if (w.wc && !ctx.children[l].empty()) gemv(*w.wc, mc.row(l), o, true);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::tanh(o[i] + w.b->data[i]);
  }
}

GcnLayer gcn_layer(const Model& m, int layer) {
  const std::string p = "gcn" + std::to_string(layer) + ".";
  const bool graph = uses_graph(m.config.variant);
  return {&m.value(p + "ws"), graph ? &m.value(p + "wp") : nullptr,
          graph ? &m.value(p + "wc") : nullptr, &m.value(p + "b")};
}

}  // namespace

LabelEncoding label_encoder_forward(const Model& m) {
  if (!has_label_encoder(m.config.variant))
    throw Error("variant " + std::string(variant_name(m.config.variant)) +
                " has no label encoder");
  const LabelContext& ctx = m.labels;
  if (ctx.parents.size() != ctx.nodes() || ctx.children.size() != ctx.nodes())
    throw Error("label encoder adjacency does not match its inputs");
  LabelEncoding enc;
  gcn_forward(ctx, gcn_layer(m, 1), ctx.node_inputs, enc.mp0, enc.mc0, enc.u1);
  gcn_forward(ctx, gcn_layer(m, 2), enc.u1, enc.mp1, enc.mc1, enc.u2);
  const std::size_t d_in = ctx.node_inputs.cols, hl = enc.u2.cols;
  enc.u3 = Matrix(ctx.nodes(), d_in + hl);
  for (std::size_t l = 0; l < ctx.nodes(); ++l) {
    auto dst = enc.u3.row(l);
    std::copy(ctx.node_inputs.row(l).begin(), ctx.node_inputs.row(l).end(), dst.begin());
    std::copy(enc.u2.row(l).begin(), enc.u2.row(l).end(), dst.begin() + d_in);
  }
  return enc;
}

void decode_probs(const Model& m, const LabelEncoding* enc, ForwardTrace& tr) {
  const std::size_t R = tr.rows.size();
  tr.logits.assign(R, 0.0);
  if (m.config.variant == Variant::kC) {
    for (std::size_t r = 0; r < R; ++r)
      tr.logits[r] = simd::dot(m.labels.attention.row(tr.rows[r]), tr.d.row(r));
  } else {
    if (enc == nullptr) throw Error("label encoding required");
    const Matrix& W = m.value("out.w");
    const Matrix& b = m.value("out.b");
    tr.d_o = Matrix(R, W.rows);
    for (std::size_t r = 0; r < R; ++r) {
      auto o = tr.d_o.row(r);
      gemv(W, tr.d.row(r), o);
      for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::tanh(o[i] + b.data[i]);
      tr.logits[r] = simd::dot(enc->u3.row(m.labels.output_node[tr.rows[r]]), o);
    }
  }
  finish_probs(tr);
}

ForwardTrace forward(const Model& m, std::span<const std::uint32_t> tokens,
                     const LabelEncoding* enc, std::span<const std::uint32_t> rows,
                     Noise noise) {
  ForwardTrace tr;
  std::vector<std::uint32_t> every;
  if (rows.empty()) {
    every = all_rows(m.labels.size());
    rows = every;
  }
  const Matrix h = encode_tokens(m, tokens, &tr, noise);
  if (m.config.variant == Variant::kBase) {
    lwan_forward(m, h, rows, tr);
  } else {
    zeroshot_attention(m, h, rows, tr);
    decode_probs(m, enc, tr);
  }
  return tr;
}

double bce_loss(std::span<const double> p, std::span<const double> gold) {
  if (p.size() != gold.size() || p.empty()) throw Error("bce_loss: size mismatch");
  constexpr double kTiny = 1e-15;
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p[i], kTiny, 1.0 - kTiny);
    s -= gold[i] * std::log(q) + (1.0 - gold[i]) * std::log1p(-q);
  }
  return s / static_cast<double>(p.size());
}

double bce_with_logits(std::span<const double> z, std::span<const double> gold,
                       std::span<double> dz) {
  if (z.size() != gold.size() || z.empty()) throw Error("bce_with_logits: size mismatch");
  const double inv = 1.0 / static_cast<double>(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    s += softplus(z[i]) - gold[i] * z[i];
    if (!dz.empty()) dz[i] = (sigmoid(z[i]) - gold[i]) * inv;
  }
  return s * inv;
}

namespace {

// Backward through one graph-convolution layer; din may be null.
void gcn_backward(const LabelContext& ctx, const GcnLayer& w, const Matrix& in,
                  const Matrix& mp, const Matrix& mc, const Matrix& out, const Matrix& dout,
                  Matrix& gws, Matrix* gwp, Matrix* gwc, Matrix& gb, Matrix* din) {
  std::vector<double> dpre(out.cols), tmp(in.cols);
  for (std::size_t l = 0; l < out.rows; ++l) {
    for (std::size_t i = 0; i < out.cols; ++i)
      dpre[i] = dout(l, i) * (1.0 - out(l, i) * out(l, i));
    outer_acc(dpre, in.row(l), gws);
    simd::axpy(1.0, dpre, gb.data);
    if (din) gemv_t_acc(*w.ws, dpre, din->row(l));
    auto spread = [&](const Matrix* wn, Matrix* gwn, const Matrix& mean,
                      const std::vector<std::uint32_t>& nb) {
      if (!wn || nb.empty()) return;
      outer_acc(dpre, mean.row(l), *gwn);
      if (!din) return;
      std::fill(tmp.begin(), tmp.end(), 0.0);
      gemv_t_acc(*wn, dpre, tmp);
      const double inv = 1.0 / static_cast<double>(nb.size());
      for (auto j : nb) simd::axpy(inv, tmp, din->row(j));
    };
    spread(w.wp, gwp, mp, ctx.parents[l]);
    spread(w.wc, gwc, mc, ctx.children[l]);
  }
}

}  // namespace

void label_encoder_backward(const Model& m, const LabelEncoding& enc, const Matrix& du3,
                            Gradients& g) {
  const LabelContext& ctx = m.labels;
  const std::size_t d_in = ctx.node_inputs.cols, hl = enc.u2.cols;
  Matrix du2(ctx.nodes(), hl);
  for (std::size_t l = 0; l < ctx.nodes(); ++l)
    std::copy_n(du3.row(l).begin() + d_in, hl, du2.row(l).begin());
  const bool graph = uses_graph(m.config.variant);
  auto grad = [&](const std::string& n) { return &g.g[m.param_index(n)]; };
  Matrix du1(ctx.nodes(), hl);
  gcn_backward(ctx, gcn_layer(m, 2), enc.u1, enc.mp1, enc.mc1, enc.u2, du2,
               *grad("gcn2.ws"), graph ? grad("gcn2.wp") : nullptr,
               graph ? grad("gcn2.wc") : nullptr, *grad("gcn2.b"), &du1);
  gcn_backward(ctx, gcn_layer(m, 1), ctx.node_inputs, enc.mp0, enc.mc0, enc.u1, du1,
               *grad("gcn1.ws"), graph ? grad("gcn1.wp") : nullptr,
               graph ? grad("gcn1.wc") : nullptr, *grad("gcn1.b"), nullptr);
}

void backward(const Model& m, const ForwardTrace& tr, std::span<const double> dz,
              const LabelEncoding* enc, Gradients& g, Matrix* du3) {
  const Variant v = m.config.variant;
  const std::size_t R = tr.rows.size(), T = tr.h.rows, width = tr.h.cols;
  if (dz.size() != R) throw Error("backward: gradient size mismatch");
  auto grad = [&](std::string_view n) -> Matrix& { return g.g[m.param_index(n)]; };

  // Decoder.
  Matrix dd(R, width);
  if (v == Variant::kBase) {
    const Matrix& w = m.value("dec.w");
    Matrix& gw = grad("dec.w");
    Matrix& gb = grad("dec.b");
    for (std::size_t r = 0; r < R; ++r) {
      simd::axpy(dz[r], tr.d.row(r), gw.row(tr.rows[r]));
      gb.data[tr.rows[r]] += dz[r];
      simd::axpy(dz[r], w.row(tr.rows[r]), dd.row(r));
    }
  } else if (v == Variant::kC) {
    for (std::size_t r = 0; r < R; ++r)
      simd::axpy(dz[r], m.labels.attention.row(tr.rows[r]), dd.row(r));
  } else {
    if (enc == nullptr || du3 == nullptr) throw Error("label encoding required");
    const Matrix& W = m.value("out.w");
    Matrix& gw = grad("out.w");
    Matrix& gb = grad("out.b");
    std::vector<double> dpre(W.rows);
    for (std::size_t r = 0; r < R; ++r) {
      const auto node = m.labels.output_node[tr.rows[r]];
      auto u3 = enc->u3.row(node);
      auto o = tr.d_o.row(r);
      simd::axpy(dz[r], o, du3->row(node));
      for (std::size_t i = 0; i < dpre.size(); ++i)
        dpre[i] = dz[r] * u3[i] * (1.0 - o[i] * o[i]);
      outer_acc(dpre, tr.d.row(r), gw);
      simd::axpy(1.0, dpre, gb.data);
      gemv_t_acc(W, dpre, dd.row(r));
    }
  }

  // Attention.
  const double inv_t = 1.0 / static_cast<double>(T);
  Matrix dh(T, width);
  const bool base = v == Variant::kBase;
  const Matrix& keys = base ? tr.h : tr.v;
  const Matrix& queries = base ? m.value("att.u") : m.labels.attention;
  Matrix dkeys(T, keys.cols);
  Matrix* gu = base ? &grad("att.u") : nullptr;
  std::vector<double> da(T);
  for (std::size_t r = 0; r < R; ++r) {
    auto a = tr.a.row(r);
    double s = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      da[t] = inv_t * simd::dot(dd.row(r), tr.h.row(t));
      simd::axpy(a[t] * inv_t, dd.row(r), dh.row(t));
      s += a[t] * da[t];
    }
    auto q = queries.row(tr.rows[r]);
    for (std::size_t t = 0; t < T; ++t) {
      const double ds = a[t] * (da[t] - s);
      if (ds == 0.0) continue;
      simd::axpy(ds, q, dkeys.row(t));
      if (gu) simd::axpy(ds, keys.row(t), gu->row(tr.rows[r]));
    }
  }
  if (base) {
    simd::axpy(1.0, dkeys.data, dh.data);
  } else {
    const Matrix& W = m.value("att.w");
    Matrix& gw = grad("att.w");
    Matrix& gb = grad("att.b");
    std::vector<double> dpre(W.rows);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t i = 0; i < dpre.size(); ++i)
        dpre[i] = dkeys(t, i) * (1.0 - tr.v(t, i) * tr.v(t, i));
      outer_acc(dpre, tr.h.row(t), gw);
      simd::axpy(1.0, dpre, gb.data);
      gemv_t_acc(W, dpre, dh.row(t));
    }
  }
  if (!tr.h_mask.empty())
    for (std::size_t i = 0; i < dh.size(); ++i) dh.data[i] *= tr.h_mask[i];

  // Encoder.
  Matrix dx;
  if (m.config.encoder == EncoderKind::kLinear) {
    const Matrix& P = m.value("enc.proj");
    Matrix& gp = grad("enc.proj");
    Matrix& gb = grad("enc.bias");
    dx = Matrix(T, P.cols);
    for (std::size_t t = 0; t < T; ++t) {
      outer_acc(dh.row(t), tr.x.row(t), gp);
      simd::axpy(1.0, dh.row(t), gb.data);
      gemv_t_acc(P, dh.row(t), dx.row(t));
    }
  } else {
    const std::size_t H = m.config.hidden;
    Matrix dout = std::move(dh);
    for (std::size_t l = m.config.layers; l-- > 0;) {
      const Matrix& in = tr.layer_in[l];
      Matrix dfw(T, H), dbw(T, H);
      for (std::size_t t = 0; t < T; ++t) {
        std::copy_n(dout.row(t).begin(), H, dfw.row(t).begin());
        std::copy_n(dout.row(t).begin() + H, H, dbw.row(t).begin());
      }
      Matrix din(T, in.cols);
      gru_backward(in, dfw, gru_weights(m, l, false), tr.cache_fw[l], false,
                   gru_grads(m, g, l, false), din);
      gru_backward(in, dbw, gru_weights(m, l, true), tr.cache_bw[l], true,
                   gru_grads(m, g, l, true), din);
      dout = std::move(din);
    }
    dx = std::move(dout);
  }
  const std::size_t ei = m.param_index("embedding");
  if (m.params[ei].trainable) {
    if (!tr.x_mask.empty())
      for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] *= tr.x_mask[i];
    for (std::size_t t = 0; t < T; ++t)
      simd::axpy(1.0, dx.row(t), g.g[ei].row(tr.tokens[t]));
  }
}

}  // namespace lmtc::neural
