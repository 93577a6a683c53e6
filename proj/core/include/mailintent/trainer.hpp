#pragma once

// Tokenized datasets and the minibatch loop shared by every single-phase
// trainer: shuffled epochs over one or more weighted sources, Adadelta
// updates, and dev-best model selection.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mailintent/corpus.hpp"
#include "mailintent/diffkit.hpp"
#include "mailintent/encoder.hpp"
#include "mailintent/network.hpp"

namespace mailintent {

struct PreparedExample {
  std::string id;
  encoder::TokenSequence tokens;
  std::vector<double> target;
  int label = 0;
};

using PreparedSet = std::vector<PreparedExample>;

PreparedSet prepare(std::span<const Example> examples, const encoder::Vocabulary& vocab,
                    const encoder::EncoderConfig& config);

/// Vocabulary over the clean and weak texts of one or more datasets; dev and
/// test tokens map to OOV.
encoder::Vocabulary training_vocabulary(std::span<const Dataset* const> datasets);
encoder::Vocabulary training_vocabulary(const Dataset& dataset);

/// A dataset tokenized against one vocabulary.
struct PreparedData {
  encoder::Vocabulary vocab;
  encoder::EncoderConfig encoder;
  std::size_t num_classes = 2;
  PreparedSet clean;
  PreparedSet weak;
  PreparedSet dev;
  PreparedSet test;
  std::vector<int> weak_truth;
};

/// Builds the vocabulary from `dataset` unless one is given, sets
/// encoder.vocab_size, and tokenizes every split.
PreparedData prepare_dataset(const Dataset& dataset, encoder::EncoderConfig encoder,
                             const encoder::Vocabulary* vocab = nullptr);

NetworkConfig network_config(const PreparedData& data, std::size_t num_heads = 1);

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  /// Stop after this many epochs without a dev improvement; 0 disables.
  std::size_t patience = 0;
  diffkit::AdadeltaConfig optimizer;
  std::uint64_t seed = 1;
  /// Keep every minibatch loss in the result (tests compare trajectories).
  bool record_batch_losses = false;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_accuracy = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  Network model;
  double dev_accuracy = std::numeric_limits<double>::quiet_NaN();
  std::size_t best_epoch = 0;
  std::vector<EpochRecord> log;
  std::vector<double> batch_losses;
};

/// One labeled source for train_supervised. Every example of every source
/// appears once per epoch; a batch's loss is (1/|B|) sum weight_i * loss_i.
struct TrainingSource {
  const PreparedSet* examples = nullptr;
  std::size_t head = 0;
  double weight = 1.0;
  /// Row-major L x L corruption matrix; empty means plain cross-entropy.
  std::vector<double> corruption;
};

/// Trains `model` in place and returns the dev-best snapshot (the final one
/// when `dev` is empty). Throws InputError when every source is empty.
TrainResult train_supervised(Network model, std::span<const TrainingSource> sources, const PreparedSet& dev,
                             const TrainConfig& config, std::size_t dev_head = 0);

/// Fraction of examples whose argmax target equals the prediction of
/// `head`. NaN for an empty set.
double accuracy(const Network& model, const PreparedSet& examples, std::size_t head = 0);

std::vector<std::vector<double>> predict_all(const Network& model, const PreparedSet& examples,
                                             std::size_t head = 0);

}  // namespace mailintent
