// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "lmtc/corpus.hpp"
#include "lmtc/neural/model.hpp"

namespace lmtc::neural {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  ModelConfig model;
  AdamConfig adam;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 20;
  std::size_t patience = 3;
  std::uint64_t seed = 1;

  void validate() const;
};

TrainConfig default_train_config(Variant v);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double dev_loss = 0.0;
};

struct TrainResult {
  Model model;  // parameters of the best dev epoch
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  std::size_t stopped_epoch = 0;
  std::vector<std::uint32_t> loss_labels;  // output rows that receive gradient
  std::uint64_t label_checksum = 0;
};

// Output rows whose label has at least one training document. Zero-shot
// variants train on these only; the base model trains on every label.
std::vector<std::uint32_t> loss_rows(const Model& m, const Corpus& train);

// Mean per-document loss over `rows` in eval mode.
double evaluate_loss(const Model& m, const Corpus& corpus,
                     std::span<const std::uint32_t> rows);

// Adam with early stopping on dev loss; the returned model holds the best
// epoch's parameters. `model` supplies the initial parameters. Throws on a
// non-finite loss. The frozen label context is verified unchanged.
TrainResult train(const TrainConfig& config, Model model, const Corpus& train_set,
                  const Corpus& dev_set,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

using LabelScores = std::vector<std::pair<std::uint32_t, double>>;

// Top-k output rows by probability, ties broken by row. k = 0 keeps all.
LabelScores predict(const Model& m, std::span<const std::string> tokens, std::size_t top_k,
                    const LabelEncoding* enc = nullptr);

struct GradCheckGroup {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  double max_rel_error = 0.0;
};

// Central finite differences against the analytic gradient of the loss of
// one document over all output labels, in eval mode. Up to
// `samples_per_group` coordinates per trainable parameter are checked.
// rel = |a - n| / max(|a| + |n|, 1e-6).
GradCheckReport grad_check(Model& m, std::span<const std::uint32_t> tokens,
                           std::span<const double> gold, double epsilon = 1e-5,
                           std::size_t samples_per_group = 24, std::uint64_t seed = 7);

// Checkpoint container of kind "lwan": float32 parameter sections, the
// vocabulary and the frozen label context.
void save_checkpoint(const Model& m, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace lmtc::neural
