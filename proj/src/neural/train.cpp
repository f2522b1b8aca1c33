// SPDX-License-Identifier: Apache-2.0
#include "lmtc/neural/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_map>

#include "lmtc/error.hpp"
#include "lmtc/random.hpp"

namespace lmtc::neural {

void TrainConfig::validate() const {
  model.validate();
  if (batch_size == 0) throw Error("batch size must be >= 1");
  if (max_epochs == 0) throw Error("max epochs must be >= 1");
  if (!(adam.learning_rate > 0.0)) throw Error("learning rate must be > 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    throw Error("Adam betas must be in [0,1)");
}

TrainConfig default_train_config(Variant v) {
  TrainConfig c;
  c.model = default_model_config(v);
  c.batch_size = 16;
  return c;
}

namespace {

struct Example {
  std::vector<std::uint32_t> tokens;
  std::vector<double> gold;  // aligned with the loss rows
};

std::vector<Example> make_examples(const Model& m, const Corpus& corpus,
                                   std::span<const std::uint32_t> rows) {
  std::unordered_map<std::string_view, std::size_t> pos;
  for (std::size_t r = 0; r < rows.size(); ++r)
    pos.emplace(m.labels.output_labels[rows[r]], r);
  std::vector<Example> out;
  out.reserve(corpus.documents.size());
  for (const auto& d : corpus.documents) {
    if (d.tokens.empty()) continue;
    Example e{m.token_ids(d.tokens), std::vector<double>(rows.size(), 0.0)};
    for (const auto& l : d.gold_labels) {
      auto it = pos.find(l);
      if (it != pos.end()) e.gold[it->second] = 1.0;
    }
    out.push_back(std::move(e));
  }
  return out;
}

double mean_loss(const Model& m, std::span<const Example> examples,
                 std::span<const std::uint32_t> rows) {
  if (examples.empty()) return 0.0;
  LabelEncoding enc;
  if (has_label_encoder(m.config.variant)) enc = label_encoder_forward(m);
  double total = 0.0;
  for (const auto& e : examples) {
    const ForwardTrace tr = forward(m, e.tokens, &enc, rows);
    total += bce_with_logits(tr.logits, e.gold);
  }
  return total / static_cast<double>(examples.size());
}

class Adam {
 public:
  Adam(const Model& m, const AdamConfig& c) : c_(c) {
    for (const auto& p : m.params) {
      m1_.emplace_back(p.trainable ? p.value.size() : 0, 0.0);
      m2_.emplace_back(p.trainable ? p.value.size() : 0, 0.0);
    }
  }

  void step(Model& m, const Gradients& g) {
    ++t_;
    const double bc1 = 1.0 - std::pow(c_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(c_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < m.params.size(); ++i) {
      if (!m.params[i].trainable) continue;
      auto& w = m.params[i].value.data;
      const auto& gi = g.g[i].data;
      auto& a = m1_[i];
      auto& b = m2_[i];
      for (std::size_t j = 0; j < w.size(); ++j) {
        a[j] = c_.beta1 * a[j] + (1.0 - c_.beta1) * gi[j];
        b[j] = c_.beta2 * b[j] + (1.0 - c_.beta2) * gi[j] * gi[j];
        w[j] -= c_.learning_rate * (a[j] / bc1) / (std::sqrt(b[j] / bc2) + c_.eps);
      }
    }
  }

 private:
  AdamConfig c_;
  std::vector<std::vector<double>> m1_, m2_;
  std::size_t t_ = 0;
};

}  // namespace

std::vector<std::uint32_t> loss_rows(const Model& m, const Corpus& train) {
  const auto& out = m.labels.output_labels;
  std::vector<std::uint32_t> rows;
  if (!is_zero_shot(m.config.variant)) {
    rows.resize(out.size());
    std::iota(rows.begin(), rows.end(), 0U);
    return rows;
  }
  std::unordered_map<std::string_view, bool> seen;
  for (const auto& d : train.documents)
    for (const auto& l : d.gold_labels) seen[l] = true;
  for (std::size_t r = 0; r < out.size(); ++r)
    if (seen.contains(out[r])) rows.push_back(static_cast<std::uint32_t>(r));
  return rows;
}

double evaluate_loss(const Model& m, const Corpus& corpus,
                     std::span<const std::uint32_t> rows) {
  const auto examples = make_examples(m, corpus, rows);
  return mean_loss(m, examples, rows);
}

TrainResult train(const TrainConfig& config, Model model, const Corpus& train_set,
                  const Corpus& dev_set, const std::function<void(const EpochLog&)>& on_epoch) {
  config.validate();
  TrainResult res;
  res.label_checksum = model.labels.checksum();
  res.loss_labels = loss_rows(model, train_set);
  const auto& rows = res.loss_labels;
  if (rows.empty()) throw Error("no output label has a training document");
  const auto train_ex = make_examples(model, train_set, rows);
  const auto dev_ex = make_examples(model, dev_set, rows);
  if (train_ex.empty()) throw Error("no non-empty training documents");

  const bool label_enc = has_label_encoder(model.config.variant);
  Adam adam(model, config.adam);
  Gradients g = model.make_gradients();
  std::vector<Param> best = model.params;
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(train_ex.size());
  std::vector<double> dz(rows.size());

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(derive_seed(config.seed, "epoch" + std::to_string(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_no) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      g.zero();
      LabelEncoding enc;
      Matrix du3;
      if (label_enc) {
        enc = label_encoder_forward(model);
        du3 = Matrix(enc.u3.rows, enc.u3.cols);
      }
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const Example& ex = train_ex[order[i]];
        std::mt19937_64 rng(derive_seed(config.seed, (epoch << 32) ^ order[i]));
        const ForwardTrace tr = forward(model, ex.tokens, &enc, rows, Noise{&rng});
        batch_loss += bce_with_logits(tr.logits, ex.gold, dz);
        for (double& x : dz) x *= scale;
        backward(model, tr, dz, label_enc ? &enc : nullptr, g, label_enc ? &du3 : nullptr);
      }
      if (!std::isfinite(batch_loss))
        throw Error("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                    ", batch " + std::to_string(batch_no + 1));
      if (label_enc) label_encoder_backward(model, enc, du3, g);
      adam.step(model, g);
      epoch_loss += batch_loss;
    }
    EpochLog log{epoch, epoch_loss / static_cast<double>(train_ex.size()), 0.0};
    log.dev_loss = dev_ex.empty() ? mean_loss(model, train_ex, rows)
                                  : mean_loss(model, dev_ex, rows);
    if (!std::isfinite(log.dev_loss))
      throw Error("training diverged: non-finite dev loss at epoch " + std::to_string(epoch));
    res.log.push_back(log);
    res.stopped_epoch = epoch;
    if (on_epoch) on_epoch(log);
    if (log.dev_loss < best_loss) {
      best_loss = log.dev_loss;
      best = model.params;
      res.best_epoch = epoch;
    } else if (epoch - res.best_epoch >= config.patience) {
      break;
    }
  }
  model.params = std::move(best);
  if (model.labels.checksum() != res.label_checksum)
    throw Error("frozen label vectors changed during training");
  res.model = std::move(model);
  return res;
}

LabelScores predict(const Model& m, std::span<const std::string> tokens, std::size_t top_k,
                    const LabelEncoding* enc) {
  LabelEncoding local;
  if (enc == nullptr && has_label_encoder(m.config.variant)) {
    local = label_encoder_forward(m);
    enc = &local;
  }
  const auto ids = m.token_ids(tokens);
  const ForwardTrace tr = forward(m, ids, enc);
  std::vector<std::uint32_t> idx(tr.logits.size());
  std::iota(idx.begin(), idx.end(), 0U);
  auto better = [&](std::uint32_t a, std::uint32_t b) {
    return tr.logits[a] != tr.logits[b] ? tr.logits[a] > tr.logits[b] : a < b;
  };
  const std::size_t k = top_k == 0 ? idx.size() : std::min(top_k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    better);
  LabelScores out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.emplace_back(idx[i], tr.probs[idx[i]]);
  return out;
}

GradCheckReport grad_check(Model& m, std::span<const std::uint32_t> tokens,
                           std::span<const double> gold, double epsilon,
                           std::size_t samples_per_group, std::uint64_t seed) {
  if (gold.size() != m.labels.size()) throw Error("grad_check: gold size mismatch");
  const bool label_enc = has_label_encoder(m.config.variant);
  auto loss = [&] {
    LabelEncoding enc;
    if (label_enc) enc = label_encoder_forward(m);
    const ForwardTrace tr = forward(m, tokens, &enc);
    return bce_with_logits(tr.logits, gold);
  };

  Gradients g = m.make_gradients();
  {
    LabelEncoding enc;
    Matrix du3;
    if (label_enc) {
      enc = label_encoder_forward(m);
      du3 = Matrix(enc.u3.rows, enc.u3.cols);
    }
    const ForwardTrace tr = forward(m, tokens, &enc);
    std::vector<double> dz(tr.logits.size());
    bce_with_logits(tr.logits, gold, dz);
    backward(m, tr, dz, label_enc ? &enc : nullptr, g, label_enc ? &du3 : nullptr);
    if (label_enc) label_encoder_backward(m, enc, du3, g);
  }

  GradCheckReport report;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    Param& p = m.params[i];
    if (!p.trainable) continue;
    const std::size_t n = p.value.size();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), 0);
    if (n > samples_per_group) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(samples_per_group);
      std::sort(coords.begin(), coords.end());
    }
    GradCheckGroup group{p.name, coords.size(), 0.0};
    for (auto c : coords) {
      const double saved = p.value.data[c];
      p.value.data[c] = saved + epsilon;
      const double lp = loss();
      p.value.data[c] = saved - epsilon;
      const double lm = loss();
      p.value.data[c] = saved;
      const double numeric = (lp - lm) / (2.0 * epsilon);
      const double analytic = g.g[i].data[c];
      const double rel = std::abs(analytic - numeric) /
                         std::max(std::abs(analytic) + std::abs(numeric), 1e-6);
      group.max_rel_error = std::max(group.max_rel_error, rel);
    }
    report.max_rel_error = std::max(report.max_rel_error, group.max_rel_error);
    report.groups.push_back(std::move(group));
  }
  return report;
}

}  // namespace lmtc::neural
