#pragma once

// Tokenization, vocabulary, the AvgEmb and BiLSTM encoders and the softmax
// classification heads. Layers keep their parameters in a
// diffkit::ParamStore and address them by index, so a copied store is a
// complete model snapshot.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mailintent/diffkit.hpp"

namespace mailintent::encoder {

inline constexpr int kPad = 0;
inline constexpr int kOov = 1;

class Vocabulary {
 public:
  Vocabulary();

  /// Adds tokens in first-occurrence order.
  static Vocabulary build(std::span<const std::string> texts, std::size_t min_count = 1);

  int id(std::string_view token) const;
  const std::string& token(int id) const { return tokens_[static_cast<std::size_t>(id)]; }
  bool contains(std::string_view token) const;
  std::size_t size() const noexcept { return tokens_.size(); }
  int add(std::string token);

  /// One token per line; line n (0-based) holds id n + 2.
  void save(std::ostream& out) const;
  static Vocabulary load(std::istream& in);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

enum class Truncation { Head, Tail };

struct TokenSequence {
  std::vector<int> ids;
  std::size_t true_length = 0;
};

/// Lowercases ASCII letters and splits on whitespace and punctuation
/// (ASCII plus the common Unicode space and punctuation blocks).
std::vector<std::string> split_tokens(std::string_view text);

/// Pads or truncates to exactly max_len ids.
TokenSequence tokenize(std::string_view text, const Vocabulary& vocab, std::size_t max_len,
                       Truncation truncation = Truncation::Head);

enum class EncoderKind { AvgEmb, BiLSTM };

std::string_view encoder_kind_name(EncoderKind kind);
EncoderKind parse_encoder_kind(std::string_view text);

struct EncoderConfig {
  EncoderKind kind = EncoderKind::AvgEmb;
  std::size_t vocab_size = 2;
  std::size_t embed_dim = 50;
  /// BiLSTM hidden size; also the width of the fully connected layer.
  std::size_t hidden = 64;
  std::size_t max_len = 128;
  Truncation truncation = Truncation::Head;
};

/// Parameter handles of one encoder inside a store.
struct EncoderLayout {
  EncoderConfig config;
  std::size_t embedding = 0;
  // BiLSTM only: gate weights are 4h x (d + h) in (input, forget, cell,
  // output) order, acting on [x_t; h_{t-1}].
  std::size_t forward_weight = 0, forward_bias = 0;
  std::size_t backward_weight = 0, backward_bias = 0;
  std::size_t fc_weight = 0, fc_bias = 0;

  std::size_t output_dim() const {
    return config.kind == EncoderKind::AvgEmb ? config.embed_dim : config.hidden;
  }
};

EncoderLayout add_encoder(diffkit::ParamStore& store, const EncoderConfig& config);
void init_encoder(diffkit::ParamStore& store, const EncoderLayout& layout, std::mt19937_64& rng);

/// Per-sequence activations kept for the backward pass.
struct EncoderCache {
  // One LSTM direction: per step, the input [x; h_prev], activated gates,
  // and cell states before and after.
  struct Direction {
    std::vector<double> inputs;
    std::vector<double> gates;
    std::vector<double> cells;
    std::vector<double> prev_cells;
    std::vector<double> final_hidden;
  };
  Direction forward;
  Direction backward;
  std::vector<double> concat;
  std::vector<double> feature;
};

/// Mean of the embeddings of the first true_length tokens; the zero vector
/// for an empty sequence.
std::vector<double> avg_encode(const TokenSequence& seq, const diffkit::ParamStore& store,
                               const EncoderLayout& layout);

/// tanh(W_fc [h_fwd; h_bwd] + b_fc). Throws InputError on an empty sequence.
std::vector<double> bilstm_encode(const TokenSequence& seq, const diffkit::ParamStore& store,
                                  const EncoderLayout& layout, EncoderCache* cache = nullptr);

/// Dispatches on the layout's kind. `cache` may be null when no backward pass
/// follows.
std::vector<double> encode(const TokenSequence& seq, const diffkit::ParamStore& store,
                           const EncoderLayout& layout, EncoderCache* cache = nullptr);

/// Accumulates parameter gradients given dLoss/dFeature.
void encode_backward(const TokenSequence& seq, diffkit::ParamStore& store, const EncoderLayout& layout,
                     const EncoderCache& cache, std::span<const double> d_feature);

// ---------------------------------------------------------------------------
// Heads

struct HeadLayout {
  std::size_t weight = 0;  // classes x in_dim
  std::size_t bias = 0;
  std::size_t in_dim = 0;
  std::size_t classes = 0;
};

HeadLayout add_head(diffkit::ParamStore& store, const std::string& name, std::size_t in_dim,
                    std::size_t classes);
void init_head(diffkit::ParamStore& store, const HeadLayout& head, std::mt19937_64& rng);

std::vector<double> head_logits(std::span<const double> feature, const diffkit::ParamStore& store,
                                const HeadLayout& head);

/// Softmax over the head's logits. Throws ShapeError on a feature of the
/// wrong width.
std::vector<double> classify(std::span<const double> feature, const diffkit::ParamStore& store,
                             const HeadLayout& head);

/// Accumulates head gradients and adds dLoss/dFeature into d_feature.
void head_backward(std::span<const double> feature, std::span<const double> d_logits,
                   diffkit::ParamStore& store, const HeadLayout& head, std::span<double> d_feature);

// ---------------------------------------------------------------------------
// Pretrained vectors

/// Overwrites embedding rows of in-vocabulary tokens from a text file of
/// "token v1 ... vd" lines. Returns the number of rows replaced. Throws
/// ValidationError when a vector's width differs from the table's.
std::size_t load_pretrained_embeddings(std::istream& in, const Vocabulary& vocab, diffkit::ParamStore& store,
                                       const EncoderLayout& layout);
std::size_t load_pretrained_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                                       diffkit::ParamStore& store, const EncoderLayout& layout);

}  // namespace mailintent::encoder
