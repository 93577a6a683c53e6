#include "mailintent/network.hpp"

#include <random>
#include <string>

#include "mailintent/error.hpp"

namespace mailintent {

namespace {

constexpr std::uint64_t kHeadStream = 0x9e3779b97f4a7c15ULL;

}  // namespace

Network::Network(NetworkConfig config, std::uint64_t seed) : config_(std::move(config)) {
  if (config_.num_heads == 0) throw ShapeError("network needs at least one head");
  encoder_ = encoder::add_encoder(params_, config_.encoder);
  for (std::size_t h = 0; h < config_.num_heads; ++h) {
    heads_.push_back(
        encoder::add_head(params_, "head" + std::to_string(h), encoder_.output_dim(), config_.num_classes));
  }
  std::mt19937_64 enc_rng(seed);
  encoder::init_encoder(params_, encoder_, enc_rng);
  std::mt19937_64 head_rng(seed ^ kHeadStream);
  for (const auto& head : heads_) encoder::init_head(params_, head, head_rng);
}

std::vector<double> Network::features(const encoder::TokenSequence& seq) const {
  return encoder::encode(seq, params_, encoder_);
}

std::vector<double> Network::logits(const encoder::TokenSequence& seq, std::size_t head) const {
  return encoder::head_logits(features(seq), params_, heads_.at(head));
}

std::vector<double> Network::predict_proba(const encoder::TokenSequence& seq, std::size_t head) const {
  return diffkit::softmax(logits(seq, head));
}

int Network::predict(const encoder::TokenSequence& seq, std::size_t head) const {
  return argmax(logits(seq, head));
}

double Network::accumulate(const encoder::TokenSequence& seq, std::size_t head, std::span<const double> target,
                           double scale, std::span<const double> corruption) {
  if (target.size() != config_.num_classes) throw ShapeError("target width does not match class count");
  encoder::EncoderCache cache;
  const auto feature = encoder::encode(seq, params_, encoder_, &cache);
  const auto& layout = heads_.at(head);
  const auto z = encoder::head_logits(feature, params_, layout);
  auto lg = corruption.empty() ? diffkit::cross_entropy_logits(z, target)
                               : diffkit::corrected_cross_entropy(z, target, corruption);
  for (auto& g : lg.d_logits) g *= scale;
  std::vector<double> d_feature(feature.size(), 0.0);
  encoder::head_backward(feature, lg.d_logits, params_, layout, d_feature);
  encoder::encode_backward(seq, params_, encoder_, cache, d_feature);
  return lg.loss;
}

double Network::loss(const encoder::TokenSequence& seq, std::size_t head, std::span<const double> target,
                     std::span<const double> corruption) const {
  const auto z = logits(seq, head);
  return corruption.empty() ? diffkit::cross_entropy_logits(z, target).loss
                            : diffkit::corrected_cross_entropy(z, target, corruption).loss;
}

int argmax(std::span<const double> values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

}  // namespace mailintent
