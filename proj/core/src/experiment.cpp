#include "mailintent/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <future>
#include <istream>
#include <mutex>
#include <sstream>
#include <thread>

#include <openssl/evp.h>

#include "mailintent/dataset_io.hpp"
#include "mailintent/error.hpp"
#include "mailintent/weaklabel.hpp"

namespace mailintent::experiment {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto comma = s.find(',', start);
    if (comma == std::string_view::npos) comma = s.size();
    auto item = trim(s.substr(start, comma - start));
    if (!item.empty()) out.push_back(std::move(item));
    start = comma + 1;
  }
  return out;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  throw ValidationError("invalid value '" + std::string(value) + "' for " + std::string(key));
}

double to_double(std::string_view key, std::string_view text) {
  double v = 0.0;
  const auto t = trim(text);
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty()) bad_value(key, text);
  return v;
}

std::uint64_t to_uint(std::string_view key, std::string_view text) {
  std::uint64_t v = 0;
  const auto t = trim(text);
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty()) bad_value(key, text);
  return v;
}

bool to_bool(std::string_view key, std::string_view text) {
  const auto t = trim(text);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  bad_value(key, text);
}

std::string num(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string num(std::uint64_t v) { return std::to_string(v); }

std::string flag(bool v) { return v ? "true" : "false"; }

std::vector<double> to_doubles(std::string_view key, std::string_view text) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) {
    // start:stop:step expands inclusively.
    if (std::count(item.begin(), item.end(), ':') == 2) {
      const auto a = item.find(':'), b = item.rfind(':');
      const double start = to_double(key, item.substr(0, a));
      const double stop = to_double(key, item.substr(a + 1, b - a - 1));
      const double step = to_double(key, item.substr(b + 1));
      if (!(step > 0.0) || stop < start) bad_value(key, item);
      const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9));
      for (std::size_t k = 0; k <= n; ++k) out.push_back(start + static_cast<double>(k) * step);
      continue;
    }
    out.push_back(to_double(key, item));
  }
  return out;
}

std::string from_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + num(v[i]);
  return s;
}

std::vector<std::uint64_t> to_seeds(std::string_view key, std::string_view text) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(text)) {
    const auto dash = item.find('-');
    if (dash != std::string::npos && dash > 0) {
      const auto a = to_uint(key, item.substr(0, dash)), b = to_uint(key, item.substr(dash + 1));
      if (b < a) bad_value(key, item);
      for (auto s = a; s <= b; ++s) out.push_back(s);
      continue;
    }
    out.push_back(to_uint(key, item));
  }
  return out;
}

std::string from_seeds(const std::vector<std::uint64_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string path_text(const std::optional<std::filesystem::path>& p) { return p ? p->string() : ""; }

std::optional<std::filesystem::path> to_path(std::string_view text) {
  auto t = trim(text);
  if (t.empty()) return std::nullopt;
  return std::filesystem::path(t);
}

// Corpus paths are edited one field at a time; messages decides presence.
std::filesystem::path& messages_of(std::optional<CorpusPaths>& c) {
  if (!c) c.emplace();
  return c->messages;
}

void settle(std::optional<CorpusPaths>& c) {
  if (c && c->messages.empty() && !c->calendar && !c->gold) c.reset();
}

struct Key {
  std::string name;
  const char* help;
  std::function<std::string(const ExperimentSpec&)> get;
  std::function<void(ExperimentSpec&, std::string_view)> set;
};

#define MI_DOUBLE(NAME, FIELD, HELP)                                                   \
  Key{NAME, HELP, [](const ExperimentSpec& s) { return num(static_cast<double>(s.FIELD)); }, \
      [](ExperimentSpec& s, std::string_view v) { s.FIELD = to_double(NAME, v); }}
#define MI_SIZE(NAME, FIELD, HELP)                                                               \
  Key{NAME, HELP, [](const ExperimentSpec& s) { return num(static_cast<std::uint64_t>(s.FIELD)); }, \
      [](ExperimentSpec& s, std::string_view v) { s.FIELD = static_cast<std::size_t>(to_uint(NAME, v)); }}
#define MI_BOOL(NAME, FIELD, HELP)                                            \
  Key{NAME, HELP, [](const ExperimentSpec& s) { return flag(s.FIELD); }, \
      [](ExperimentSpec& s, std::string_view v) { s.FIELD = to_bool(NAME, v); }}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    std::vector<Key> k;
    k.push_back({"intent", "RI, SM or PA",
                 [](const ExperimentSpec& s) { return std::string(intent_code(s.intent)); },
                 [](ExperimentSpec& s, std::string_view v) { s.intent = parse_intent(trim(v)); }});
    k.push_back({"encoder", "avgemb or bilstm",
                 [](const ExperimentSpec& s) { return std::string(encoder::encoder_kind_name(s.encoder.kind)); },
                 [](ExperimentSpec& s, std::string_view v) { s.encoder.kind = encoder::parse_encoder_kind(trim(v)); }});
    k.push_back(MI_SIZE("embed_dim", encoder.embed_dim, "embedding width"));
    k.push_back(MI_SIZE("hidden", encoder.hidden, "BiLSTM hidden size per direction and feature width"));
    k.push_back(MI_SIZE("max_len", encoder.max_len, "tokens kept per message"));
    k.push_back({"truncation", "head or tail",
                 [](const ExperimentSpec& s) {
                   return std::string(s.encoder.truncation == encoder::Truncation::Head ? "head" : "tail");
                 },
                 [](ExperimentSpec& s, std::string_view v) {
                   const auto t = trim(v);
                   if (t == "head") s.encoder.truncation = encoder::Truncation::Head;
                   else if (t == "tail") s.encoder.truncation = encoder::Truncation::Tail;
                   else bad_value("truncation", v);
                 }});
    k.push_back({"methods", "comma list of clean, weak, clean+weak, preweak, iwt, glc, hydra, or all",
                 [](const ExperimentSpec& s) {
                   std::string out;
                   for (std::size_t i = 0; i < s.methods.size(); ++i) out += (i ? "," : "") + s.methods[i].name();
                   return out;
                 },
                 [](ExperimentSpec& s, std::string_view v) {
                   s.methods.clear();
                   for (const auto& item : split_list(v)) {
                     if (item == "all") {
                       for (const auto& m : baselines::Method::all()) s.methods.push_back(m);
                     } else {
                       s.methods.push_back(baselines::Method::parse(item));
                     }
                   }
                 }});
    k.push_back({"clean_ratios", "comma list in (0, 1]; start:stop:step ranges allowed",
                 [](const ExperimentSpec& s) { return from_doubles(s.clean_ratios); },
                 [](ExperimentSpec& s, std::string_view v) { s.clean_ratios = to_doubles("clean_ratios", v); }});
    k.push_back({"seeds", "comma list; a-b ranges allowed",
                 [](const ExperimentSpec& s) { return from_seeds(s.seeds); },
                 [](ExperimentSpec& s, std::string_view v) { s.seeds = to_seeds("seeds", v); }});
    k.push_back({"weak_fractions", "shares of weak_size, comma list in [0, 1]",
                 [](const ExperimentSpec& s) { return from_doubles(s.weak_fractions); },
                 [](ExperimentSpec& s, std::string_view v) { s.weak_fractions = to_doubles("weak_fractions", v); }});
    k.push_back(MI_SIZE("weak_size", weak_size, "weak examples at weak fraction 1"));
    k.push_back(MI_SIZE("dev_size", dev_size, "dev examples"));
    k.push_back(MI_SIZE("test_size", test_size, "test examples"));
    k.push_back({"clean_size", "clean examples at clean ratio 1; empty takes the remaining gold pool",
                 [](const ExperimentSpec& s) {
                   return s.clean_size ? num(static_cast<std::uint64_t>(*s.clean_size)) : std::string();
                 },
                 [](ExperimentSpec& s, std::string_view v) {
                   if (trim(v).empty()) s.clean_size.reset();
                   else s.clean_size = static_cast<std::size_t>(to_uint("clean_size", v));
                 }});
    k.push_back(MI_BOOL("natural_eval_prevalence", natural_eval_prevalence,
                        "draw dev and test at the gold pool's prevalence instead of balanced"));
    k.push_back({"corpus.messages", "messages JSONL; empty generates a synthetic corpus per seed",
                 [](const ExperimentSpec& s) { return s.corpus ? s.corpus->messages.string() : std::string(); },
                 [](ExperimentSpec& s, std::string_view v) {
                   messages_of(s.corpus) = trim(v);
                   settle(s.corpus);
                 }});
    k.push_back({"corpus.calendar", "calendar JSONL",
                 [](const ExperimentSpec& s) { return s.corpus ? path_text(s.corpus->calendar) : std::string(); },
                 [](ExperimentSpec& s, std::string_view v) {
                   messages_of(s.corpus);
                   s.corpus->calendar = to_path(v);
                   settle(s.corpus);
                 }});
    k.push_back({"corpus.gold", "gold JSONL",
                 [](const ExperimentSpec& s) { return s.corpus ? path_text(s.corpus->gold) : std::string(); },
                 [](ExperimentSpec& s, std::string_view v) {
                   messages_of(s.corpus);
                   s.corpus->gold = to_path(v);
                   settle(s.corpus);
                 }});
    k.push_back({"dataset", "prebuilt dataset directory; overrides corpus, ratios and weak fractions",
                 [](const ExperimentSpec& s) { return path_text(s.dataset); },
                 [](ExperimentSpec& s, std::string_view v) { s.dataset = to_path(v); }});
    k.push_back(MI_BOOL("synthetic.calibrate", calibrate, "solve interaction noise for the published audit rates"));
    k.push_back(MI_DOUBLE("synthetic.commitment_fraction", synthetic.commitment_fraction,
                          "share of flagged-request threads"));
    k.push_back(MI_DOUBLE("synthetic.chatter_rate", synthetic.chatter_rate, "P(unrelated reply) on request threads"));
    k.push_back(MI_DOUBLE("synthetic.prior.RI", synthetic.priors[0], "request-information prior"));
    k.push_back(MI_DOUBLE("synthetic.prior.SM", synthetic.priors[1], "schedule-meeting prior"));
    k.push_back(MI_DOUBLE("synthetic.prior.PA", synthetic.priors[2], "promise-action prior"));
    static const char* codes[] = {"RI", "SM", "PA"};
    for (std::size_t i = 0; i < 3; ++i) {
      const std::string fp_name = std::string("synthetic.noise.") + codes[i] + ".false_positive";
      const std::string fn_name = std::string("synthetic.noise.") + codes[i] + ".false_negative";
      k.push_back({fp_name, "interaction false-positive rate when not calibrating",
                   [i](const ExperimentSpec& s) { return num(s.synthetic.noise[i].false_positive_rate); },
                   [i, fp_name](ExperimentSpec& s, std::string_view v) {
                     s.synthetic.noise[i].false_positive_rate = to_double(fp_name, v);
                   }});
      k.push_back({fn_name, "interaction false-negative rate when not calibrating",
                   [i](const ExperimentSpec& s) { return num(s.synthetic.noise[i].false_negative_rate); },
                   [i, fn_name](ExperimentSpec& s, std::string_view v) {
                     s.synthetic.noise[i].false_negative_rate = to_double(fn_name, v);
                   }});
    }
    k.push_back(MI_SIZE("synthetic.background_vocab", synthetic.background_vocab, "background word types"));
    k.push_back(MI_SIZE("synthetic.cue_vocab", synthetic.cue_vocab, "cue word types per intent"));
    k.push_back(MI_SIZE("synthetic.min_body_tokens", synthetic.min_body_tokens, "shortest body"));
    k.push_back(MI_SIZE("synthetic.max_body_tokens", synthetic.max_body_tokens, "longest body"));
    k.push_back(MI_SIZE("synthetic.min_cues", synthetic.min_cues, "fewest cues in a message with the intent"));
    k.push_back(MI_SIZE("synthetic.max_cues", synthetic.max_cues, "most cues in a message with the intent"));
    k.push_back(MI_DOUBLE("synthetic.cue_skew", synthetic.cue_skew, "Zipf exponent of cue draws"));
    k.push_back(MI_DOUBLE("synthetic.cue_leak", synthetic.cue_leak, "P(cue in a message without the intent)"));
    k.push_back(MI_DOUBLE("synthetic.topic_rate", synthetic.topic_rate, "P(interaction-topic words in a message)"));
    k.push_back(MI_DOUBLE("synthetic.topic_lift", synthetic.topic_lift,
                          "false-positive multiplier on topical messages"));
    k.push_back(MI_SIZE("synthetic.topic_vocab", synthetic.topic_vocab, "topic word types per intent"));
    k.push_back({"synthetic.domain", "domain name salting the domain-specific vocabulary",
                 [](const ExperimentSpec& s) { return s.synthetic.domain; },
                 [](ExperimentSpec& s, std::string_view v) { s.synthetic.domain = trim(v); }});
    k.push_back(MI_DOUBLE("synthetic.domain_cue_fraction", synthetic.domain_cue_fraction,
                          "P(cue drawn from the domain bank)"));
    k.push_back(MI_DOUBLE("synthetic.domain_background_fraction", synthetic.domain_background_fraction,
                          "share of domain-specific background words"));
    k.push_back(MI_SIZE("train.epochs", method.train.epochs, "epochs of every supervised phase"));
    k.push_back(MI_SIZE("train.batch_size", method.train.batch_size, "minibatch size"));
    k.push_back(MI_SIZE("train.patience", method.train.patience, "epochs without dev gain before stopping; 0 disables"));
    k.push_back(MI_DOUBLE("optimizer.rho", method.train.optimizer.rho, "Adadelta decay of the supervised phases"));
    k.push_back(MI_DOUBLE("optimizer.epsilon", method.train.optimizer.epsilon,
                          "Adadelta epsilon of the supervised phases"));
    k.push_back(MI_DOUBLE("optimizer.learning_rate", method.train.optimizer.learning_rate,
                          "Adadelta step scale of the supervised phases"));
    k.push_back({"pretrain_epochs", "weak-phase epochs of preweak; empty uses train.epochs",
                 [](const ExperimentSpec& s) {
                   return s.method.pretrain_epochs ? num(static_cast<std::uint64_t>(*s.method.pretrain_epochs))
                                                   : std::string();
                 },
                 [](ExperimentSpec& s, std::string_view v) {
                   if (trim(v).empty()) s.method.pretrain_epochs.reset();
                   else s.method.pretrain_epochs = static_cast<std::size_t>(to_uint("pretrain_epochs", v));
                 }});
    k.push_back(MI_DOUBLE("iwt.clean_weight", method.iwt.clean_weight, "instance weight of clean examples"));
    k.push_back(MI_DOUBLE("iwt.weak_weight", method.iwt.weak_weight, "instance weight of weak examples"));
    k.push_back(MI_DOUBLE("iwt.alpha", method.iwt.alpha, "weak-loss multiplier"));
    k.push_back(MI_BOOL("hard_labels", method.hard_labels, "one-hot corrected labels"));
    k.push_back(MI_DOUBLE("hydra.alpha", method.hydra.alpha, "weak-loss weight when no grid is given"));
    k.push_back({"hydra.alpha_grid", "dev-selected weak-loss weights; empty uses hydra.alpha",
                 [](const ExperimentSpec& s) { return from_doubles(s.method.alpha_grid); },
                 [](ExperimentSpec& s, std::string_view v) { s.method.alpha_grid = to_doubles("hydra.alpha_grid", v); }});
    k.push_back({"hydra.lambda_schedule", "increasing selection thresholds; start:stop:step ranges allowed",
                 [](const ExperimentSpec& s) { return from_doubles(s.method.hydra.lambda_schedule); },
                 [](ExperimentSpec& s, std::string_view v) {
                   s.method.hydra.lambda_schedule = to_doubles("hydra.lambda_schedule", v);
                 }});
    k.push_back(MI_SIZE("hydra.epochs_per_stage", method.hydra.epochs_per_stage, "epochs per threshold"));
    k.push_back(MI_SIZE("hydra.warmup_epochs", method.hydra.warmup_epochs, "clean-only epochs before selection"));
    k.push_back(MI_BOOL("hydra.warmup_both_heads", method.hydra.warmup_both_heads,
                        "warmup batches also train the weak head"));
    k.push_back(MI_BOOL("hydra.stop_when_all_selected", method.hydra.stop_when_all_selected,
                        "end the schedule once every weak example is admitted"));
    k.push_back(MI_SIZE("hydra.batch_half", method.hydra.batch_half, "clean and weak examples per batch, each"));
    k.push_back(MI_SIZE("hydra.patience", method.hydra.patience, "stages without dev gain before stopping; 0 disables"));
    k.push_back(MI_DOUBLE("hydra.optimizer.rho", method.hydra.optimizer.rho, "Adadelta decay of the dual-headed model"));
    k.push_back(MI_DOUBLE("hydra.optimizer.epsilon", method.hydra.optimizer.epsilon,
                          "Adadelta epsilon of the dual-headed model"));
    k.push_back(MI_DOUBLE("hydra.optimizer.learning_rate", method.hydra.optimizer.learning_rate,
                          "Adadelta step scale of the dual-headed model"));
    k.push_back(MI_BOOL("hydra.label_correction", method.hydra_label_correction, "correct weak labels first"));
    k.push_back(MI_BOOL("hydra.self_paced", method.hydra_self_paced, "self-paced weak selection"));
    k.push_back({"transfer.source_domain", "synthetic source domain name; equal to synthetic.domain means one corpus",
                 [](const ExperimentSpec& s) { return s.transfer_source_domain; },
                 [](ExperimentSpec& s, std::string_view v) { s.transfer_source_domain = trim(v); }});
    k.push_back({"transfer.source.messages", "source-domain messages JSONL",
                 [](const ExperimentSpec& s) {
                   return s.transfer_source_corpus ? s.transfer_source_corpus->messages.string() : std::string();
                 },
                 [](ExperimentSpec& s, std::string_view v) {
                   messages_of(s.transfer_source_corpus) = trim(v);
                   settle(s.transfer_source_corpus);
                 }});
    k.push_back({"transfer.source.calendar", "source-domain calendar JSONL",
                 [](const ExperimentSpec& s) {
                   return s.transfer_source_corpus ? path_text(s.transfer_source_corpus->calendar) : std::string();
                 },
                 [](ExperimentSpec& s, std::string_view v) {
                   messages_of(s.transfer_source_corpus);
                   s.transfer_source_corpus->calendar = to_path(v);
                   settle(s.transfer_source_corpus);
                 }});
    k.push_back({"transfer.source.gold", "source-domain gold JSONL",
                 [](const ExperimentSpec& s) {
                   return s.transfer_source_corpus ? path_text(s.transfer_source_corpus->gold) : std::string();
                 },
                 [](ExperimentSpec& s, std::string_view v) {
                   messages_of(s.transfer_source_corpus);
                   s.transfer_source_corpus->gold = to_path(v);
                   settle(s.transfer_source_corpus);
                 }});
    k.push_back(MI_SIZE("transfer.clean_size", transfer_clean_size, "target clean examples"));
    k.push_back(MI_SIZE("transfer.tiny_clean_size", transfer_tiny_clean_size, "target clean examples, tiny setting"));
    k.push_back(MI_SIZE("jobs", jobs, "worker threads"));
    return k;
  }();
  return table;
}

#undef MI_DOUBLE
#undef MI_SIZE
#undef MI_BOOL

}  // namespace

// ---------------------------------------------------------------------------
// Config files

ConfigMap parse_config(std::istream& in) {
  ConfigMap out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", lineno);
    auto key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw ParseError("empty key", lineno);
    out[key] = trim(std::string_view(t).substr(eq + 1));
  }
  return out;
}

ConfigMap load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read config " + path.string());
  return parse_config(in);
}

std::string format_config(const ConfigMap& config) {
  std::string out;
  for (const auto& [k, v] : config) out += k + " = " + v + "\n";
  return out;
}

ConfigMap merge(ConfigMap base, const ConfigMap& top) {
  for (const auto& [k, v] : top) base[k] = v;
  return base;
}

// ---------------------------------------------------------------------------
// Spec

void ExperimentSpec::validate() const {
  if (methods.empty()) throw ValidationError("no methods requested");
  if (seeds.empty()) throw ValidationError("no seeds requested");
  if (clean_ratios.empty()) throw ValidationError("no clean ratios requested");
  if (weak_fractions.empty()) throw ValidationError("no weak fractions requested");
  for (double r : clean_ratios) {
    if (!(r > 0.0 && r <= 1.0)) throw ValidationError("clean ratio " + num(r) + " outside (0, 1]");
  }
  for (double f : weak_fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw ValidationError("weak fraction " + num(f) + " outside [0, 1]");
  }
  if (jobs == 0) throw ValidationError("jobs must be positive");
  if (encoder.embed_dim == 0 || encoder.max_len == 0) throw ValidationError("encoder sizes must be positive");
  if (transfer_tiny_clean_size == 0 || transfer_tiny_clean_size > transfer_clean_size) {
    throw ValidationError("transfer tiny clean size must lie in [1, transfer.clean_size]");
  }
  method.hydra.validate();
  synthetic.validate();
}

ExperimentSpec spec_from_config(const ConfigMap& config) {
  ExperimentSpec spec;
  const auto& table = keys();
  for (const auto& [k, v] : config) {
    auto it = std::find_if(table.begin(), table.end(), [&](const Key& key) { return k == key.name; });
    if (it == table.end()) throw ValidationError("unknown config key '" + k + "'");
    try {
      it->set(spec, v);
    } catch (const ValidationError&) {
      throw;
    } catch (const std::exception& e) {
      throw ValidationError(k + ": " + e.what());
    }
  }
  return spec;
}

ConfigMap to_config(const ExperimentSpec& spec) {
  ConfigMap out;
  for (const auto& key : keys()) out[key.name] = key.get(spec);
  return out;
}

std::vector<std::pair<std::string, std::string>> config_keys() {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& key : keys()) out.emplace_back(key.name, key.help);
  return out;
}

ExperimentSpec benchmark_spec() {
  ExperimentSpec s;
  s.intent = Intent::ScheduleMeeting;
  s.encoder.kind = encoder::EncoderKind::AvgEmb;
  s.encoder.embed_dim = 32;
  s.encoder.hidden = 32;
  s.methods = baselines::Method::all();
  s.clean_ratios = {0.1};
  s.seeds = {1, 2, 3, 4, 5};
  s.weak_size = 1800;
  s.dev_size = 300;
  s.test_size = 1000;
  s.synthetic.cue_vocab = 40;
  s.synthetic.cue_skew = 1.0;
  s.synthetic.topic_rate = 0.4;
  s.synthetic.topic_lift = 2.5;
  s.method.train.epochs = 30;
  s.method.train.optimizer.epsilon = 1e-4;
  s.method.hydra.optimizer.epsilon = 1e-4;
  s.method.hydra.patience = 0;
  s.method.alpha_grid = {0.1, 1.0, 10.0};
  return s;
}

ExperimentSpec transfer_benchmark_spec() {
  auto s = benchmark_spec();
  s.synthetic.domain = "target";
  s.transfer_source_domain = "source";
  s.synthetic.domain_cue_fraction = 0.5;
  s.synthetic.domain_background_fraction = 0.5;
  s.transfer_clean_size = 200;
  s.transfer_tiny_clean_size = 20;
  return s;
}

std::vector<std::size_t> weak_counts(std::size_t total, std::span<const double> fractions) {
  std::vector<std::size_t> out;
  for (double f : fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw ValidationError("weak fraction outside [0, 1]");
    out.push_back(static_cast<std::size_t>(std::llround(f * static_cast<double>(total))));
  }
  return out;
}

namespace {

std::size_t clean_count_for(const ExperimentSpec& spec, double ratio) {
  if (ratio >= 1.0) {
    if (!spec.clean_size) throw ValidationError("clean ratio 1 needs clean_size");
    return *spec.clean_size;
  }
  return static_cast<std::size_t>(
      std::llround(ratio * static_cast<double>(spec.weak_size) / (1.0 - ratio)));
}


}  // namespace

synthetic::SyntheticSpec synthetic_for_sizes(const ExperimentSpec& spec, std::uint64_t seed, const std::string& domain,
                                         const synthetic::SplitSizes& sizes) {
  auto s = spec.synthetic;
  s.seed = seed;
  s.domain = domain;
  if (spec.calibrate) {
    synthetic::PerIntent<synthetic::AuditTarget> targets{
        synthetic::published_audit(Intent::RequestInformation), synthetic::published_audit(Intent::ScheduleMeeting),
        synthetic::published_audit(Intent::PromiseAction)};
    s = synthetic::calibrate(s, targets);
  }
  return synthetic::sized_for(s, spec.intent, sizes);
}

synthetic::SyntheticSpec synthetic_for_seed(const ExperimentSpec& spec, std::uint64_t seed,
                                            const std::string& domain) {
  std::size_t clean = 0;
  for (double r : spec.clean_ratios) clean = std::max(clean, clean_count_for(spec, r));
  const bool any_weak = std::any_of(spec.clean_ratios.begin(), spec.clean_ratios.end(), [](double r) { return r < 1.0; });
  return synthetic_for_sizes(spec, seed, domain, {clean, any_weak ? spec.weak_size : 0, spec.dev_size, spec.test_size});
}

std::vector<Cell> expand_cells(const ExperimentSpec& spec) {
  std::vector<Cell> out;
  const std::vector<double> ratios = spec.dataset ? std::vector<double>{0.0} : spec.clean_ratios;
  const std::vector<double> fractions = spec.dataset ? std::vector<double>{1.0} : spec.weak_fractions;
  for (auto seed : spec.seeds) {
    for (double r : ratios) {
      for (double f : fractions) {
        for (const auto& m : spec.methods) out.push_back({m, r, f, seed});
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Execution

namespace {

struct Source {
  Corpus corpus;
  WeakLabelMap labels;
  GoldMap truth;
  bool has_truth = false;
};

Source load_source(const CorpusPaths& paths, Intent intent) {
  Source s;
  s.corpus = load_corpus(paths);
  s.labels = weaklabel::to_label_map(weaklabel::label_intent(s.corpus, intent));
  return s;
}

Source synthetic_source(const synthetic::SyntheticSpec& spec, Intent intent) {
  auto syn = synthetic::generate_synthetic(spec);
  Source s;
  s.corpus = std::move(syn.corpus);
  s.truth = std::move(syn.truth);
  s.has_truth = true;
  s.labels = weaklabel::to_label_map(weaklabel::label_intent(s.corpus, intent));
  return s;
}

Dataset carve(const Source& src, const ExperimentSpec& spec, std::size_t clean, std::size_t weak,
              std::uint64_t seed) {
  DatasetOptions opt;
  opt.intent = spec.intent;
  opt.clean_size = clean;
  opt.weak_size = weak;
  opt.dev_size = spec.dev_size;
  opt.test_size = spec.test_size;
  opt.seed = seed;
  opt.natural_eval_prevalence = spec.natural_eval_prevalence;
  return build_dataset(src.corpus, src.labels, opt, src.has_truth ? &src.truth : nullptr);
}

/// Computes a value once per key across threads; failures are shared too.
template <typename K, typename V>
class OnceCache {
 public:
  template <typename F>
  std::shared_ptr<const V> get(const K& key, F&& make) {
    std::promise<std::shared_ptr<const V>> promise;
    std::shared_future<std::shared_ptr<const V>> future;
    bool owner = false;
    {
      std::lock_guard lock(mutex_);
      auto it = map_.find(key);
      if (it == map_.end()) {
        future = promise.get_future().share();
        map_.emplace(key, future);
        owner = true;
      } else {
        future = it->second;
      }
    }
    if (owner) {
      try {
        promise.set_value(std::make_shared<const V>(make()));
      } catch (...) {
        promise.set_exception(std::current_exception());
      }
    }
    return future.get();
  }

 private:
  std::mutex mutex_;
  std::map<K, std::shared_future<std::shared_ptr<const V>>> map_;
};

/// Runs fn(i) for i in [0, n) on up to `jobs` threads.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(std::max<std::size_t>(jobs, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

report::Record base_record(const ExperimentSpec& spec, const std::string& method, std::uint64_t seed) {
  report::Record r;
  r.method = method;
  r.encoder = std::string(encoder::encoder_kind_name(spec.encoder.kind));
  r.intent = std::string(intent_code(spec.intent));
  r.seed = seed;
  return r;
}

void fill_metrics(report::Record& r, const baselines::RunResult& result) {
  r.dev_accuracy = result.metrics.dev_accuracy;
  r.test_accuracy = result.metrics.test_accuracy;
  r.alpha = result.metrics.alpha;
}

std::vector<std::filesystem::path> input_paths(const ExperimentSpec& spec, std::string_view kind) {
  std::vector<std::filesystem::path> out;
  auto add = [&](const std::optional<CorpusPaths>& c) {
    if (!c) return;
    out.push_back(c->messages);
    if (c->calendar) out.push_back(*c->calendar);
    if (c->gold) out.push_back(*c->gold);
  };
  if (spec.dataset) {
    for (const char* f : {"clean.jsonl", "weak.jsonl", "dev.jsonl", "test.jsonl", "meta.json"}) {
      out.push_back(*spec.dataset / f);
    }
  } else {
    add(spec.corpus);
  }
  if (kind == "transfer") add(spec.transfer_source_corpus);
  return out;
}

SweepResult finish(std::vector<report::Record> records, const ExperimentSpec& spec, std::string_view kind,
                   const RunOptions& options) {
  SweepResult out;
  out.records = std::move(records);
  for (const auto& r : out.records) out.failed += r.ok ? 0 : 1;
  out.table = report::aggregate(out.records);
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    {
      std::ofstream rec(options.out_dir / "records.jsonl", std::ios::binary);
      if (!rec) throw InputError("cannot write " + (options.out_dir / "records.jsonl").string());
      report::write_records(rec, out.records);
    }
    {
      std::ofstream man(options.out_dir / "manifest.json", std::ios::binary);
      if (!man) throw InputError("cannot write " + (options.out_dir / "manifest.json").string());
      man << make_manifest(spec, kind, options.extra_inputs).dump(2) << '\n';
    }
    report::emit_report(out.records, options.out_dir);
  }
  return out;
}

std::size_t weak_count_for(const ExperimentSpec& spec, double ratio, double fraction) {
  return ratio >= 1.0 ? 0 : weak_counts(spec.weak_size, std::span(&fraction, 1))[0];
}

}  // namespace

Dataset make_dataset(const ExperimentSpec& spec, double clean_ratio, double weak_fraction, std::uint64_t seed) {
  if (spec.dataset) return load_dataset(*spec.dataset);
  const auto src = spec.corpus ? load_source(*spec.corpus, spec.intent)
                               : synthetic_source(synthetic_for_seed(spec, seed, spec.synthetic.domain), spec.intent);
  return carve(src, spec, clean_count_for(spec, clean_ratio), weak_count_for(spec, clean_ratio, weak_fraction), seed);
}

SweepResult run_sweep(const ExperimentSpec& spec, const RunOptions& options) {
  spec.validate();
  const auto cells = expand_cells(spec);
  std::vector<report::Record> records(cells.size());
  std::mutex report_mutex;

  std::optional<Dataset> fixed;
  std::shared_ptr<const Source> shared;
  if (spec.dataset) {
    fixed = load_dataset(*spec.dataset);
  } else if (spec.corpus) {
    shared = std::make_shared<const Source>(load_source(*spec.corpus, spec.intent));
  }

  OnceCache<std::uint64_t, Source> sources;
  OnceCache<std::tuple<std::uint64_t, double, double>, PreparedData> prepared;

  parallel_for(cells.size(), spec.jobs, [&](std::size_t i) {
    const auto& cell = cells[i];
    auto rec = base_record(spec, cell.method.name(), cell.seed);
    rec.clean_ratio = fixed ? fixed->clean_ratio() : cell.clean_ratio;
    try {
      auto data = prepared.get({cell.seed, cell.clean_ratio, cell.weak_fraction}, [&] {
        if (fixed) return prepare_dataset(*fixed, spec.encoder);
        auto src = shared ? shared : sources.get(cell.seed, [&] {
          return synthetic_source(synthetic_for_seed(spec, cell.seed, spec.synthetic.domain), spec.intent);
        });
        return prepare_dataset(carve(*src, spec, clean_count_for(spec, cell.clean_ratio),
                                     weak_count_for(spec, cell.clean_ratio, cell.weak_fraction), cell.seed),
                               spec.encoder);
      });
      rec.clean_count = data->clean.size();
      rec.weak_count = data->weak.size();
      fill_metrics(rec, baselines::train_method(cell.method, *data, spec.method, cell.seed));
    } catch (const std::exception& e) {
      rec.ok = false;
      rec.error = e.what();
      if (!fixed) rec.weak_count = weak_count_for(spec, cell.clean_ratio, cell.weak_fraction);
    }
    std::lock_guard lock(report_mutex);
    records[i] = rec;
    if (options.on_record) options.on_record(rec);
  });
  return finish(std::move(records), spec, "sweep", options);
}

// ---------------------------------------------------------------------------
// Transfer

SweepResult run_transfer(const ExperimentSpec& spec, const RunOptions& options) {
  spec.validate();
  if (spec.dataset) throw ValidationError("transfer runs need corpora, not a prebuilt dataset");
  if (spec.corpus.has_value() != spec.transfer_source_corpus.has_value()) {
    throw ValidationError("transfer needs both target and source corpora, or neither for synthetic domains");
  }
  const bool same_synthetic = !spec.corpus && spec.transfer_source_domain == spec.synthetic.domain;
  const synthetic::SplitSizes sizes{spec.transfer_clean_size, spec.weak_size, spec.dev_size, spec.test_size};

  std::shared_ptr<const Source> file_target, file_source;
  if (spec.corpus) {
    file_target = std::make_shared<const Source>(load_source(*spec.corpus, spec.intent));
    file_source = std::make_shared<const Source>(load_source(*spec.transfer_source_corpus, spec.intent));
  }

  static constexpr const char* variants[] = {kTransferCombined, kTransferCombinedTiny, kTransferTargetOnly,
                                             kTransferTargetOnlyTiny, kTransferZeroShot};
  constexpr std::size_t kVariants = std::size(variants);

  struct SeedData {
    Dataset target, target_tiny, source;
  };
  OnceCache<std::uint64_t, SeedData> cache;
  auto seed_data = [&](std::uint64_t seed) {
    return cache.get(seed, [&] {
      std::shared_ptr<const Source> a = file_target, b = file_source;
      if (!a) {
        a = std::make_shared<const Source>(
            synthetic_source(synthetic_for_sizes(spec, seed, spec.synthetic.domain, sizes), spec.intent));
        b = same_synthetic ? a
                           : std::make_shared<const Source>(synthetic_source(
                                 synthetic_for_sizes(spec, seed ^ 0x5851f42d4c957f2dULL, spec.transfer_source_domain, sizes),
                                 spec.intent));
      }
      SeedData d;
      d.target = carve(*a, spec, spec.transfer_clean_size, 0, seed);
      d.target_tiny = carve(*a, spec, spec.transfer_tiny_clean_size, 0, seed);
      d.source = carve(*b, spec, spec.transfer_clean_size, spec.weak_size, seed);
      if (d.target.num_classes != d.source.num_classes) {
        throw ValidationError("source and target domains disagree on the label space");
      }
      return d;
    });
  };

  const std::size_t n = spec.seeds.size() * kVariants;
  std::vector<report::Record> records(n);
  std::mutex report_mutex;
  parallel_for(n, spec.jobs, [&](std::size_t i) {
    const auto seed = spec.seeds[i / kVariants];
    const std::string variant = variants[i % kVariants];
    const bool hydra = variant != kTransferTargetOnly && variant != kTransferTargetOnlyTiny;
    auto rec = base_record(spec, hydra ? "hydra" : "clean", seed);
    rec.variant = variant;
    try {
      auto d = seed_data(seed);
      Dataset ds;
      ds.num_classes = d->target.num_classes;
      ds.test = d->target.test;
      if (variant == kTransferZeroShot) {
        ds.clean = d->source.clean;
        ds.dev = d->source.dev;
      } else {
        ds.clean = (variant == kTransferCombinedTiny || variant == kTransferTargetOnlyTiny) ? d->target_tiny.clean
                                                                                           : d->target.clean;
        ds.dev = d->target.dev;
      }
      if (hydra) {
        ds.weak = d->source.weak;
        ds.weak_truth = d->source.weak_truth;
      }
      const auto data = prepare_dataset(ds, spec.encoder);
      rec.clean_count = data.clean.size();
      rec.weak_count = data.weak.size();
      rec.clean_ratio = static_cast<double>(rec.clean_count) / static_cast<double>(rec.clean_count + rec.weak_count);
      const auto method = hydra ? baselines::Method::hydra() : baselines::Method::of(baselines::BaselineKind::Clean);
      fill_metrics(rec, baselines::train_method(method, data, spec.method, seed));
    } catch (const std::exception& e) {
      rec.ok = false;
      rec.error = e.what();
    }
    std::lock_guard lock(report_mutex);
    records[i] = rec;
    if (options.on_record) options.on_record(rec);
  });
  return finish(std::move(records), spec, "transfer", options);
}

// ---------------------------------------------------------------------------
// Manifests

std::string sha1_hex(std::string_view content) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(content.data(), content.size(), digest, &len, EVP_sha1(), nullptr) != 1) {
    throw Error("SHA-1 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string git_blob_sha1(std::string_view content) {
  std::string data = "blob " + std::to_string(content.size());
  data.push_back('\0');
  data.append(content);
  return sha1_hex(data);
}

std::string git_blob_sha1(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string content = buf.str();
  return git_blob_sha1(std::string_view(content));
}

nlohmann::json make_manifest(const ExperimentSpec& spec, std::string_view kind,
                             std::span<const std::filesystem::path> extra_inputs) {
  const auto config = format_config(to_config(spec));
  nlohmann::json inputs = nlohmann::json::object();
  auto paths = input_paths(spec, kind);
  paths.insert(paths.end(), extra_inputs.begin(), extra_inputs.end());
  for (const auto& p : paths) inputs[p.string()] = git_blob_sha1(p);
  return {{"kind", kind},
          {"config", config},
          {"config_sha1", sha1_hex(config)},
          {"inputs", inputs},
          {"seeds", spec.seeds}};
}

ExperimentSpec spec_from_manifest(const nlohmann::json& manifest) {
  std::istringstream in(manifest.at("config").get<std::string>());
  return spec_from_config(parse_config(in));
}

}  // namespace mailintent::experiment
