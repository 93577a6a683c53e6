#include "mailintent/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mailintent/error.hpp"

namespace mailintent {

PreparedSet prepare(std::span<const Example> examples, const encoder::Vocabulary& vocab,
                    const encoder::EncoderConfig& config) {
  PreparedSet out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    PreparedExample p;
    p.id = ex.id;
    p.tokens = encoder::tokenize(ex.text, vocab, config.max_len, config.truncation);
    // The recurrent encoder has no representation for an empty body.
    if (config.kind == encoder::EncoderKind::BiLSTM && p.tokens.true_length == 0) continue;
    p.target = ex.target;
    p.label = ex.label();
    out.push_back(std::move(p));
  }
  return out;
}

encoder::Vocabulary training_vocabulary(std::span<const Dataset* const> datasets) {
  std::vector<std::string> texts;
  for (const Dataset* d : datasets) {
    for (const auto& ex : d->clean) texts.push_back(ex.text);
    for (const auto& ex : d->weak) texts.push_back(ex.text);
  }
  return encoder::Vocabulary::build(texts);
}

encoder::Vocabulary training_vocabulary(const Dataset& dataset) {
  const Dataset* one[] = {&dataset};
  return training_vocabulary(one);
}

PreparedData prepare_dataset(const Dataset& dataset, encoder::EncoderConfig enc, const encoder::Vocabulary* vocab) {
  PreparedData data;
  data.vocab = vocab ? *vocab : training_vocabulary(dataset);
  enc.vocab_size = data.vocab.size();
  data.encoder = enc;
  data.num_classes = dataset.num_classes;
  data.clean = prepare(dataset.clean, data.vocab, enc);
  data.dev = prepare(dataset.dev, data.vocab, enc);
  data.test = prepare(dataset.test, data.vocab, enc);
  if (enc.kind == encoder::EncoderKind::BiLSTM && !dataset.weak_truth.empty()) {
    for (std::size_t i = 0; i < dataset.weak.size(); ++i) {
      auto one = prepare(std::span<const Example>(&dataset.weak[i], 1), data.vocab, enc);
      if (one.empty()) continue;
      data.weak.push_back(std::move(one.front()));
      data.weak_truth.push_back(dataset.weak_truth[i]);
    }
  } else {
    data.weak = prepare(dataset.weak, data.vocab, enc);
    data.weak_truth = dataset.weak_truth;
  }
  return data;
}

NetworkConfig network_config(const PreparedData& data, std::size_t num_heads) {
  NetworkConfig cfg;
  cfg.encoder = data.encoder;
  cfg.num_classes = data.num_classes;
  cfg.num_heads = num_heads;
  return cfg;
}

double accuracy(const Network& model, const PreparedSet& examples, std::size_t head) {
  if (examples.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t hits = 0;
  for (const auto& ex : examples) hits += model.predict(ex.tokens, head) == ex.label;
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

std::vector<std::vector<double>> predict_all(const Network& model, const PreparedSet& examples, std::size_t head) {
  std::vector<std::vector<double>> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(model.predict_proba(ex.tokens, head));
  return out;
}

TrainResult train_supervised(Network model, std::span<const TrainingSource> sources, const PreparedSet& dev,
                             const TrainConfig& config, std::size_t dev_head) {
  struct Item {
    std::size_t source;
    std::size_t index;
  };
  std::vector<Item> items;
  for (std::size_t s = 0; s < sources.size(); ++s) {
    if (!sources[s].examples) continue;
    for (std::size_t i = 0; i < sources[s].examples->size(); ++i) items.push_back({s, i});
  }
  if (items.empty()) throw InputError("no training examples");
  if (config.batch_size == 0) throw ValidationError("batch size must be positive");

  diffkit::Adadelta optimizer(model.params(), config.optimizer);
  std::mt19937_64 rng(config.seed);
  TrainResult result{model, std::numeric_limits<double>::quiet_NaN(), 0, {}, {}};
  double best = -1.0;
  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(items.begin(), items.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < items.size(); start += config.batch_size) {
      const std::size_t end = std::min(items.size(), start + config.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const auto& src = sources[items[k].source];
        const auto& ex = (*src.examples)[items[k].index];
        batch_loss += src.weight * model.accumulate(ex.tokens, src.head, ex.target, src.weight * inv, src.corruption);
      }
      batch_loss *= inv;
      optimizer.step(model.params());
      epoch_loss += batch_loss * static_cast<double>(end - start);
      if (config.record_batch_losses) result.batch_losses.push_back(batch_loss);
    }
    EpochRecord rec{epoch, epoch_loss / static_cast<double>(items.size()), accuracy(model, dev, dev_head)};
    result.log.push_back(rec);
    if (dev.empty()) {
      result.model = model;
      result.best_epoch = epoch;
      continue;
    }
    if (rec.dev_accuracy > best) {
      best = rec.dev_accuracy;
      result.model = model;
      result.dev_accuracy = best;
      result.best_epoch = epoch;
      stale = 0;
    } else if (config.patience > 0 && ++stale >= config.patience) {
      break;
    }
  }
  return result;
}

}  // namespace mailintent
