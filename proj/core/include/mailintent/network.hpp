#pragma once

// An encoder with one or more softmax heads over a single parameter store.
// Every trainer builds on this; the dual-headed model is the two-head case.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mailintent/diffkit.hpp"
#include "mailintent/encoder.hpp"

namespace mailintent {

struct NetworkConfig {
  encoder::EncoderConfig encoder;
  std::size_t num_classes = 2;
  std::size_t num_heads = 1;
};

class Network {
 public:
  /// The encoder is initialized from one RNG stream and the heads from
  /// another, both derived from `seed`; networks that differ only in head
  /// count therefore share encoder and first-head initialization.
  Network(NetworkConfig config, std::uint64_t seed);

  const NetworkConfig& config() const noexcept { return config_; }
  diffkit::ParamStore& params() noexcept { return params_; }
  const diffkit::ParamStore& params() const noexcept { return params_; }
  const encoder::EncoderLayout& encoder_layout() const noexcept { return encoder_; }
  const encoder::HeadLayout& head(std::size_t i) const { return heads_.at(i); }
  std::size_t num_heads() const noexcept { return heads_.size(); }
  std::size_t num_classes() const noexcept { return config_.num_classes; }

  std::vector<double> features(const encoder::TokenSequence& seq) const;
  std::vector<double> logits(const encoder::TokenSequence& seq, std::size_t head = 0) const;
  std::vector<double> predict_proba(const encoder::TokenSequence& seq, std::size_t head = 0) const;
  /// Argmax with ties broken toward the lowest class index.
  int predict(const encoder::TokenSequence& seq, std::size_t head = 0) const;

  /// Forward and backward for one example through `head`. The loss is
  /// cross-entropy against `target`, or the corrected loss through the
  /// row-major L x L matrix `corruption` when it is non-empty. Gradients are
  /// scaled by `scale` and accumulated. Returns the unscaled loss.
  double accumulate(const encoder::TokenSequence& seq, std::size_t head, std::span<const double> target,
                    double scale, std::span<const double> corruption = {});

  /// Loss of one example without touching gradients.
  double loss(const encoder::TokenSequence& seq, std::size_t head, std::span<const double> target,
              std::span<const double> corruption = {}) const;

 private:
  NetworkConfig config_;
  diffkit::ParamStore params_;
  encoder::EncoderLayout encoder_;
  std::vector<encoder::HeadLayout> heads_;
};

/// Lowest index among maxima.
int argmax(std::span<const double> values);

}  // namespace mailintent
