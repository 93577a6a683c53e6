#include "mailintent/encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "mailintent/error.hpp"

namespace mailintent::encoder {

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<oov>");
}

int Vocabulary::add(std::string token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  ids_.emplace(token, id);
  tokens_.push_back(std::move(token));
  return id;
}

int Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kOov : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it != ids_.end() && it->second > kOov;
}

Vocabulary Vocabulary::build(std::span<const std::string> texts, std::size_t min_count) {
  std::vector<std::string> order;
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& text : texts) {
    for (auto& tok : split_tokens(text)) {
      auto [it, fresh] = counts.try_emplace(tok, 0);
      if (fresh) order.push_back(tok);
      ++it->second;
    }
  }
  Vocabulary vocab;
  for (auto& tok : order) {
    if (counts[tok] >= min_count) vocab.add(std::move(tok));
  }
  return vocab;
}

void Vocabulary::save(std::ostream& out) const {
  for (std::size_t i = 2; i < tokens_.size(); ++i) out << tokens_[i] << '\n';
}

Vocabulary Vocabulary::load(std::istream& in) {
  Vocabulary vocab;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw ParseError("empty vocabulary entry", lineno);
    if (vocab.ids_.count(line)) throw ParseError("duplicate vocabulary entry '" + line + "'", lineno);
    vocab.add(line);
  }
  return vocab;
}

namespace {

// Decodes one UTF-8 code point starting at text[i]; advances i. Invalid
// bytes decode as themselves.
char32_t next_code_point(std::string_view text, std::size_t& i, std::size_t& width) {
  const auto b0 = static_cast<unsigned char>(text[i]);
  std::size_t n = 1;
  char32_t cp = b0;
  if (b0 >= 0xF0 && b0 < 0xF8) {
    n = 4;
    cp = b0 & 0x07;
  } else if (b0 >= 0xE0) {
    n = 3;
    cp = b0 & 0x0F;
  } else if (b0 >= 0xC0) {
    n = 2;
    cp = b0 & 0x1F;
  }
  if (n > 1 && i + n <= text.size()) {
    bool ok = true;
    for (std::size_t k = 1; k < n; ++k) {
      const auto b = static_cast<unsigned char>(text[i + k]);
      if ((b & 0xC0) != 0x80) {
        ok = false;
        break;
      }
      cp = (cp << 6) | (b & 0x3F);
    }
    if (!ok) {
      n = 1;
      cp = b0;
    }
  } else {
    n = 1;
    cp = b0;
  }
  width = n;
  i += n;
  return cp;
}

bool is_separator(char32_t cp) {
  if (cp < 0x80) {
    const auto c = static_cast<unsigned char>(cp);
    return std::isspace(c) || std::ispunct(c);
  }
  if (cp == 0x85 || cp == 0xA0 || cp == 0x1680 || cp == 0x3000) return true;
  if (cp >= 0x2000 && cp <= 0x206F) return true;  // spaces and general punctuation
  if (cp >= 0xA1 && cp <= 0xBF && cp != 0xAA && cp != 0xB5 && cp != 0xBA) return true;
  if (cp == 0xD7 || cp == 0xF7) return true;
  if (cp >= 0x3001 && cp <= 0x3003) return true;
  if (cp >= 0xFF01 && cp <= 0xFF0F) return true;
  return false;
}

}  // namespace

std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t start = i;
    std::size_t width = 1;
    const char32_t cp = next_code_point(text, i, width);
    if (is_separator(cp)) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
      continue;
    }
    if (cp < 0x80) {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(cp))));
    } else {
      current.append(text.substr(start, width));
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab, std::size_t max_len,
                       Truncation truncation) {
  const auto tokens = split_tokens(text);
  TokenSequence seq;
  seq.ids.assign(max_len, kPad);
  seq.true_length = std::min(tokens.size(), max_len);
  const std::size_t offset =
      truncation == Truncation::Tail && tokens.size() > max_len ? tokens.size() - max_len : 0;
  for (std::size_t k = 0; k < seq.true_length; ++k) seq.ids[k] = vocab.id(tokens[offset + k]);
  return seq;
}

std::string_view encoder_kind_name(EncoderKind kind) {
  return kind == EncoderKind::AvgEmb ? "avgemb" : "bilstm";
}

EncoderKind parse_encoder_kind(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "avgemb" || lower == "avg") return EncoderKind::AvgEmb;
  if (lower == "bilstm" || lower == "lstm") return EncoderKind::BiLSTM;
  throw ValidationError("unknown encoder kind '" + std::string(text) + "'");
}

EncoderLayout add_encoder(diffkit::ParamStore& store, const EncoderConfig& config) {
  if (config.vocab_size < 2 || config.embed_dim == 0) throw ShapeError("encoder needs vocab >= 2 and d >= 1");
  EncoderLayout layout;
  layout.config = config;
  layout.embedding = store.add("embedding", {config.vocab_size, config.embed_dim}, true);
  if (config.kind == EncoderKind::BiLSTM) {
    if (config.hidden == 0) throw ShapeError("BiLSTM needs hidden >= 1");
    const std::size_t h = config.hidden;
    const std::size_t in = config.embed_dim + h;
    layout.forward_weight = store.add("lstm_fwd_w", {4 * h, in});
    layout.forward_bias = store.add("lstm_fwd_b", {4 * h});
    layout.backward_weight = store.add("lstm_bwd_w", {4 * h, in});
    layout.backward_bias = store.add("lstm_bwd_b", {4 * h});
    layout.fc_weight = store.add("fc_w", {h, 2 * h});
    layout.fc_bias = store.add("fc_b", {h});
  }
  return layout;
}

namespace {

void fill_uniform(std::vector<double>& v, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& x : v) x = dist(rng);
}

}  // namespace

void init_encoder(diffkit::ParamStore& store, const EncoderLayout& layout, std::mt19937_64& rng) {
  auto& emb = store[layout.embedding];
  std::normal_distribution<double> normal(0.0, 0.1);
  for (auto& x : emb.values) x = normal(rng);
  std::fill_n(emb.values.begin(), layout.config.embed_dim, 0.0);  // PAD row
  if (layout.config.kind != EncoderKind::BiLSTM) return;
  const std::size_t h = layout.config.hidden;
  const double bound = 1.0 / std::sqrt(static_cast<double>(h));
  for (auto idx : {layout.forward_weight, layout.backward_weight}) fill_uniform(store[idx].values, bound, rng);
  for (auto idx : {layout.forward_bias, layout.backward_bias}) {
    auto& b = store[idx].values;
    std::fill(b.begin(), b.end(), 0.0);
    std::fill_n(b.begin() + static_cast<std::ptrdiff_t>(h), h, 1.0);  // forget gate
  }
  fill_uniform(store[layout.fc_weight].values, std::sqrt(6.0 / (3.0 * static_cast<double>(h))), rng);
  std::fill(store[layout.fc_bias].values.begin(), store[layout.fc_bias].values.end(), 0.0);
}

std::vector<double> avg_encode(const TokenSequence& seq, const diffkit::ParamStore& store,
                               const EncoderLayout& layout) {
  const auto& emb = store[layout.embedding];
  const std::size_t d = emb.row_width();
  std::vector<double> out(d, 0.0);
  if (seq.true_length == 0) return out;
  for (std::size_t k = 0; k < seq.true_length; ++k) {
    const auto row = emb.row(static_cast<std::size_t>(seq.ids[k]));
    for (std::size_t j = 0; j < d; ++j) out[j] += row[j];
  }
  const double inv = 1.0 / static_cast<double>(seq.true_length);
  for (auto& x : out) x *= inv;
  return out;
}

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Runs one LSTM direction over `order` and fills `dir`. Returns the final
// hidden state.
void run_direction(const TokenSequence& seq, const diffkit::ParamStore& store, const EncoderLayout& layout,
                   std::size_t weight, std::size_t bias, bool reverse, EncoderCache::Direction& dir) {
  const auto& emb = store[layout.embedding];
  const auto& W = store[weight].values;
  const auto& b = store[bias].values;
  const std::size_t d = layout.config.embed_dim;
  const std::size_t h = layout.config.hidden;
  const std::size_t in = d + h;
  const std::size_t T = seq.true_length;
  dir.inputs.assign(T * in, 0.0);
  dir.gates.assign(T * 4 * h, 0.0);
  dir.cells.assign(T * h, 0.0);
  dir.prev_cells.assign(T * h, 0.0);
  std::vector<double> hidden(h, 0.0);
  std::vector<double> cell(h, 0.0);
  std::vector<double> a(4 * h);
  for (std::size_t step = 0; step < T; ++step) {
    const std::size_t pos = reverse ? T - 1 - step : step;
    double* z = dir.inputs.data() + step * in;
    const auto x = emb.row(static_cast<std::size_t>(seq.ids[pos]));
    std::copy(x.begin(), x.end(), z);
    std::copy(hidden.begin(), hidden.end(), z + d);
    for (std::size_t r = 0; r < 4 * h; ++r) {
      const double* w = W.data() + r * in;
      double s = b[r];
      for (std::size_t c = 0; c < in; ++c) s += w[c] * z[c];
      a[r] = s;
    }
    double* g = dir.gates.data() + step * 4 * h;
    std::copy(cell.begin(), cell.end(), dir.prev_cells.begin() + static_cast<std::ptrdiff_t>(step * h));
    for (std::size_t j = 0; j < h; ++j) {
      const double ig = sigmoid(a[j]);
      const double fg = sigmoid(a[h + j]);
      const double cg = std::tanh(a[2 * h + j]);
      const double og = sigmoid(a[3 * h + j]);
      g[j] = ig;
      g[h + j] = fg;
      g[2 * h + j] = cg;
      g[3 * h + j] = og;
      cell[j] = fg * cell[j] + ig * cg;
      hidden[j] = og * std::tanh(cell[j]);
    }
    std::copy(cell.begin(), cell.end(), dir.cells.begin() + static_cast<std::ptrdiff_t>(step * h));
  }
  dir.final_hidden = hidden;
}

void backprop_direction(const TokenSequence& seq, diffkit::ParamStore& store, const EncoderLayout& layout,
                        std::size_t weight, std::size_t bias, bool reverse, const EncoderCache::Direction& dir,
                        std::span<const double> d_final) {
  auto& emb = store[layout.embedding];
  auto& Wt = store[weight];
  auto& bt = store[bias];
  const std::size_t d = layout.config.embed_dim;
  const std::size_t h = layout.config.hidden;
  const std::size_t in = d + h;
  const std::size_t T = seq.true_length;
  std::vector<double> dh(d_final.begin(), d_final.end());
  std::vector<double> dc(h, 0.0);
  std::vector<double> da(4 * h);
  std::vector<double> dz(in);
  for (std::size_t s = T; s-- > 0;) {
    const double* g = dir.gates.data() + s * 4 * h;
    const double* c = dir.cells.data() + s * h;
    const double* cp = dir.prev_cells.data() + s * h;
    const double* z = dir.inputs.data() + s * in;
    for (std::size_t j = 0; j < h; ++j) {
      const double ig = g[j], fg = g[h + j], cg = g[2 * h + j], og = g[3 * h + j];
      const double tc = std::tanh(c[j]);
      const double d_o = dh[j] * tc;
      const double dcj = dc[j] + dh[j] * og * (1.0 - tc * tc);
      da[j] = dcj * cg * ig * (1.0 - ig);
      da[h + j] = dcj * cp[j] * fg * (1.0 - fg);
      da[2 * h + j] = dcj * ig * (1.0 - cg * cg);
      da[3 * h + j] = d_o * og * (1.0 - og);
      dc[j] = dcj * fg;
    }
    std::fill(dz.begin(), dz.end(), 0.0);
    for (std::size_t r = 0; r < 4 * h; ++r) {
      const double dar = da[r];
      if (dar == 0.0) continue;
      bt.grad[r] += dar;
      double* gw = Wt.grad.data() + r * in;
      const double* w = Wt.values.data() + r * in;
      for (std::size_t k = 0; k < in; ++k) {
        gw[k] += dar * z[k];
        dz[k] += dar * w[k];
      }
    }
    const std::size_t pos = reverse ? T - 1 - s : s;
    auto grow = emb.grad_row(static_cast<std::size_t>(seq.ids[pos]));
    for (std::size_t k = 0; k < d; ++k) grow[k] += dz[k];
    std::copy(dz.begin() + static_cast<std::ptrdiff_t>(d), dz.end(), dh.begin());
  }
}

}  // namespace

std::vector<double> bilstm_encode(const TokenSequence& seq, const diffkit::ParamStore& store,
                                  const EncoderLayout& layout, EncoderCache* cache) {
  if (layout.config.kind != EncoderKind::BiLSTM) throw ShapeError("layout is not a BiLSTM encoder");
  if (seq.true_length == 0) throw InputError("BiLSTM encoder needs at least one token");
  EncoderCache local;
  EncoderCache& c = cache ? *cache : local;
  run_direction(seq, store, layout, layout.forward_weight, layout.forward_bias, false, c.forward);
  run_direction(seq, store, layout, layout.backward_weight, layout.backward_bias, true, c.backward);
  const std::size_t h = layout.config.hidden;
  c.concat.assign(2 * h, 0.0);
  std::copy(c.forward.final_hidden.begin(), c.forward.final_hidden.end(), c.concat.begin());
  std::copy(c.backward.final_hidden.begin(), c.backward.final_hidden.end(),
            c.concat.begin() + static_cast<std::ptrdiff_t>(h));
  const auto& W = store[layout.fc_weight].values;
  const auto& b = store[layout.fc_bias].values;
  c.feature.assign(h, 0.0);
  for (std::size_t r = 0; r < h; ++r) {
    double s = b[r];
    const double* w = W.data() + r * 2 * h;
    for (std::size_t k = 0; k < 2 * h; ++k) s += w[k] * c.concat[k];
    c.feature[r] = std::tanh(s);
  }
  return c.feature;
}

std::vector<double> encode(const TokenSequence& seq, const diffkit::ParamStore& store, const EncoderLayout& layout,
                           EncoderCache* cache) {
  if (layout.config.kind == EncoderKind::AvgEmb) {
    auto f = avg_encode(seq, store, layout);
    if (cache) cache->feature = f;
    return f;
  }
  return bilstm_encode(seq, store, layout, cache);
}

void encode_backward(const TokenSequence& seq, diffkit::ParamStore& store, const EncoderLayout& layout,
                     const EncoderCache& cache, std::span<const double> d_feature) {
  if (d_feature.size() != layout.output_dim()) throw ShapeError("feature gradient width mismatch");
  if (layout.config.kind == EncoderKind::AvgEmb) {
    if (seq.true_length == 0) return;
    auto& emb = store[layout.embedding];
    const double inv = 1.0 / static_cast<double>(seq.true_length);
    for (std::size_t k = 0; k < seq.true_length; ++k) {
      auto g = emb.grad_row(static_cast<std::size_t>(seq.ids[k]));
      for (std::size_t j = 0; j < g.size(); ++j) g[j] += inv * d_feature[j];
    }
    return;
  }
  const std::size_t h = layout.config.hidden;
  auto& Wt = store[layout.fc_weight];
  auto& bt = store[layout.fc_bias];
  std::vector<double> dconcat(2 * h, 0.0);
  for (std::size_t r = 0; r < h; ++r) {
    const double du = d_feature[r] * (1.0 - cache.feature[r] * cache.feature[r]);
    bt.grad[r] += du;
    double* gw = Wt.grad.data() + r * 2 * h;
    const double* w = Wt.values.data() + r * 2 * h;
    for (std::size_t k = 0; k < 2 * h; ++k) {
      gw[k] += du * cache.concat[k];
      dconcat[k] += du * w[k];
    }
  }
  backprop_direction(seq, store, layout, layout.forward_weight, layout.forward_bias, false, cache.forward,
                     std::span<const double>(dconcat.data(), h));
  backprop_direction(seq, store, layout, layout.backward_weight, layout.backward_bias, true, cache.backward,
                     std::span<const double>(dconcat.data() + h, h));
}

HeadLayout add_head(diffkit::ParamStore& store, const std::string& name, std::size_t in_dim,
                    std::size_t classes) {
  if (in_dim == 0 || classes < 2) throw ShapeError("head needs in_dim >= 1 and at least two classes");
  HeadLayout head;
  head.weight = store.add(name + "_w", {classes, in_dim});
  head.bias = store.add(name + "_b", {classes});
  head.in_dim = in_dim;
  head.classes = classes;
  return head;
}

void init_head(diffkit::ParamStore& store, const HeadLayout& head, std::mt19937_64& rng) {
  fill_uniform(store[head.weight].values,
               std::sqrt(6.0 / static_cast<double>(head.in_dim + head.classes)), rng);
  auto& b = store[head.bias].values;
  std::fill(b.begin(), b.end(), 0.0);
}

std::vector<double> head_logits(std::span<const double> feature, const diffkit::ParamStore& store,
                                const HeadLayout& head) {
  if (feature.size() != head.in_dim) {
    throw ShapeError("feature width " + std::to_string(feature.size()) + " does not match head input " +
                     std::to_string(head.in_dim));
  }
  const auto& W = store[head.weight].values;
  const auto& b = store[head.bias].values;
  std::vector<double> z(head.classes);
  for (std::size_t r = 0; r < head.classes; ++r) {
    double s = b[r];
    const double* w = W.data() + r * head.in_dim;
    for (std::size_t k = 0; k < head.in_dim; ++k) s += w[k] * feature[k];
    z[r] = s;
  }
  return z;
}

std::vector<double> classify(std::span<const double> feature, const diffkit::ParamStore& store,
                             const HeadLayout& head) {
  return diffkit::softmax(head_logits(feature, store, head));
}

void head_backward(std::span<const double> feature, std::span<const double> d_logits, diffkit::ParamStore& store,
                   const HeadLayout& head, std::span<double> d_feature) {
  if (feature.size() != head.in_dim || d_feature.size() != head.in_dim || d_logits.size() != head.classes) {
    throw ShapeError("head backward shape mismatch");
  }
  auto& Wt = store[head.weight];
  auto& bt = store[head.bias];
  for (std::size_t r = 0; r < head.classes; ++r) {
    const double dz = d_logits[r];
    bt.grad[r] += dz;
    double* gw = Wt.grad.data() + r * head.in_dim;
    const double* w = Wt.values.data() + r * head.in_dim;
    for (std::size_t k = 0; k < head.in_dim; ++k) {
      gw[k] += dz * feature[k];
      d_feature[k] += dz * w[k];
    }
  }
}

std::size_t load_pretrained_embeddings(std::istream& in, const Vocabulary& vocab, diffkit::ParamStore& store,
                                       const EncoderLayout& layout) {
  auto& emb = store[layout.embedding];
  const std::size_t d = emb.row_width();
  std::size_t replaced = 0;
  std::string line;
  std::size_t lineno = 0;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) continue;
    values.clear();
    double v = 0.0;
    while (fields >> v) values.push_back(v);
    if (!fields.eof()) throw ParseError("non-numeric embedding component", lineno);
    if (values.size() != d) {
      throw ValidationError("embedding for '" + token + "' has " + std::to_string(values.size()) +
                            " components, table width is " + std::to_string(d));
    }
    if (!vocab.contains(token)) continue;
    auto row = emb.row(static_cast<std::size_t>(vocab.id(token)));
    std::copy(values.begin(), values.end(), row.begin());
    ++replaced;
  }
  return replaced;
}

std::size_t load_pretrained_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                                       diffkit::ParamStore& store, const EncoderLayout& layout) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open embedding file " + path.string());
  return load_pretrained_embeddings(in, vocab, store, layout);
}

}  // namespace mailintent::encoder
