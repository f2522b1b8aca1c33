// SPDX-License-Identifier: Apache-2.0
#pragma once

// Label-wise attention networks over a token encoder.
//
// Variants:
//   base  trainable attention vector and linear decoder per label
//   C     frozen descriptor centroids u_l for attention and decoding
//   DC    C attention, then a two-layer label encoder on u_l
//   DN    as DC with node2vec vectors g_l as label-encoder input
//   DNC   as DC with [u_l ; g_l] as label-encoder input
//   GC    as DC with parent/child graph convolutions
//   GNC   as GC with [u_l ; g_l] as label-encoder input
//
// Zero-shot variants always attend with the centroids; the composed input
// only feeds the label encoder. All arithmetic is in double precision.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lmtc/corpus.hpp"
#include "lmtc/hierarchy.hpp"
#include "lmtc/labelrep.hpp"
#include "lmtc/neural/encoder.hpp"
#include "lmtc/neural/tensor.hpp"

namespace lmtc::neural {

enum class Variant { kBase, kC, kDC, kDN, kDNC, kGC, kGNC };

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);
bool is_zero_shot(Variant v);
bool has_label_encoder(Variant v);
bool uses_graph(Variant v);
bool uses_node2vec(Variant v);
labelrep::ComposeMode encoder_input_mode(Variant v);

enum class EncoderKind { kBiGru, kLinear };

struct ModelConfig {
  Variant variant = Variant::kC;
  EncoderKind encoder = EncoderKind::kBiGru;
  std::size_t layers = 1;
  std::size_t hidden = 100;  // per direction for the BiGRU
  double dropout = 0.1;
  double word_dropout = 0.0;
  std::size_t label_hidden = 0;  // label-encoder width; 0 means input width
  bool trainable_embeddings = false;

  std::size_t width() const;  // encoder output width
  void validate() const;
};

// Label side of a model: which labels are scored and with which frozen
// vectors. Label-encoder nodes are all graph labels for GC/GNC and the
// output labels otherwise.
struct LabelContext {
  std::vector<std::string> output_labels;
  Matrix attention;                       // output x d_att, frozen (zero-shot)
  Matrix node_inputs;                     // nodes x d_in, frozen (label encoder)
  std::vector<std::uint32_t> output_node; // output label -> node row
  std::vector<std::vector<std::uint32_t>> parents;   // per node
  std::vector<std::vector<std::uint32_t>> children;  // per node

  std::size_t size() const { return output_labels.size(); }
  std::size_t nodes() const { return node_inputs.rows; }
  std::uint64_t checksum() const;
};

// `centroid` and `encoder_inputs` must have a row for every label they are
// asked about; `graph` is required for GC/GNC.
LabelContext make_label_context(Variant v, std::span<const std::string> output_labels,
                                const labelrep::LabelVectors* centroid,
                                const labelrep::LabelVectors* encoder_inputs,
                                const LabelGraph* graph);

struct Param {
  std::string name;
  Matrix value;
  bool trainable = true;
};

struct Gradients {
  std::vector<Matrix> g;  // aligned with Model::params
  void zero();
};

class Model {
 public:
  Model() = default;
  // Embedding rows come from `emb` (zero for <unk> and missing words).
  // Every parameter draws from its own stream derived from `seed` and its
  // name, so variants sharing a parameter initialize it identically.
  Model(const ModelConfig& config, std::vector<std::string> vocab,
        const EmbeddingTable& emb, LabelContext labels, std::uint64_t seed);

  ModelConfig config;
  std::vector<std::string> vocab;  // index 0 is <unk>
  LabelContext labels;
  std::vector<Param> params;

  std::size_t param_index(std::string_view name) const;
  bool has_param(std::string_view name) const;
  const Matrix& value(std::string_view name) const;
  Gradients make_gradients() const;
  std::vector<std::uint32_t> token_ids(std::span<const std::string> tokens) const;
  void rebuild_index();

 private:
  std::unordered_map<std::string, std::uint32_t> token_index_;
};

inline constexpr std::string_view kUnknownToken = "<unk>";

// <unk> followed by the sorted embedding words occurring in the corpora.
std::vector<std::string> build_token_vocab(const EmbeddingTable& emb,
                                           std::span<const Corpus* const> corpora);

struct LabelEncoding {
  Matrix mp0, mc0, pre1, u1, mp1, mc1, u2;
  Matrix u3;  // nodes x (d_in + label width)
};

struct ForwardTrace {
  std::vector<std::uint32_t> tokens;
  std::vector<double> x_mask;  // T x emb dim, dropout scale per entry (empty: none)
  std::vector<double> h_mask;  // T x width
  Matrix x;                    // T x emb dim after dropout
  std::vector<Matrix> layer_in;
  std::vector<GruCache> cache_fw, cache_bw;
  Matrix h;                    // T x width after dropout
  Matrix v;                    // zero-shot attention keys
  std::vector<std::uint32_t> rows;  // scored output labels
  Matrix a;                    // rows x T
  Matrix d;                    // rows x width
  Matrix d_o;                  // rows x label width (label-encoder variants)
  std::vector<double> logits;
  std::vector<double> probs;
};

// Dropout configuration for one forward pass; nullptr rng means eval mode.
struct Noise {
  std::mt19937_64* rng = nullptr;
};

// H for one document. Throws "empty document" when there are no tokens.
Matrix encode_tokens(const Model& m, std::span<const std::uint32_t> tokens,
                     ForwardTrace* trace = nullptr, Noise noise = {});

// Softmax attention of `queries` over `keys`, then d_l = (1/T) sum a_lt h_t.
void label_attention(const Matrix& keys, const Matrix& queries,
                     std::span<const std::uint32_t> rows, const Matrix& h, Matrix& a,
                     Matrix& d);

// Base model head. Fills trace a, d, logits, probs for `rows`.
void lwan_forward(const Model& m, const Matrix& h, std::span<const std::uint32_t> rows,
                  ForwardTrace& trace);

// Zero-shot attention: v_t = tanh(W h_t + b) against the frozen vectors.
void zeroshot_attention(const Model& m, const Matrix& h,
                        std::span<const std::uint32_t> rows, ForwardTrace& trace);

LabelEncoding label_encoder_forward(const Model& m);

// Fills logits and probs for the zero-shot variants from trace.d.
void decode_probs(const Model& m, const LabelEncoding* enc, ForwardTrace& trace);

// Full forward pass over the given output rows (all labels when empty).
ForwardTrace forward(const Model& m, std::span<const std::uint32_t> tokens,
                     const LabelEncoding* enc, std::span<const std::uint32_t> rows = {},
                     Noise noise = {});

// Mean binary cross-entropy of probabilities against a 0/1 mask.
double bce_loss(std::span<const double> p, std::span<const double> gold);
// Same loss from logits, computed in log space; writes dL/dz when dz is
// non-empty.
double bce_with_logits(std::span<const double> z, std::span<const double> gold,
                       std::span<double> dz = {});

// Accumulates parameter gradients of a loss with dL/dlogits = dz into g,
// and dL/dU3 into du3 for label-encoder variants.
void backward(const Model& m, const ForwardTrace& trace, std::span<const double> dz,
              const LabelEncoding* enc, Gradients& g, Matrix* du3);
void label_encoder_backward(const Model& m, const LabelEncoding& enc, const Matrix& du3,
                            Gradients& g);

// Default hyperparameters for a variant.
ModelConfig default_model_config(Variant v);

}  // namespace lmtc::neural
