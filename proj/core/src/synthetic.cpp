#include "mailintent/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mailintent/error.hpp"

namespace mailintent::synthetic {

namespace {

constexpr std::array<Intent, 3> kIntents{Intent::RequestInformation, Intent::ScheduleMeeting,
                                         Intent::PromiseAction};

// Function words shared by every domain; they carry no intent signal.
constexpr std::array<std::string_view, 48> kFunctionWords{
    "the",  "to",    "and",   "of",    "a",     "in",    "for",  "is",    "on",    "that",
    "we",   "you",   "it",    "with",  "this",  "be",    "are",  "as",    "at",    "will",
    "have", "from",  "our",   "can",   "please", "thanks", "team", "week", "today", "just",
    "also", "about", "would", "could", "let",   "me",    "know", "if",    "all",   "some",
    "next", "more",  "when",  "there", "here",  "them",  "get",  "up"};

constexpr std::array<std::string_view, 10> kAttachmentReplyWords{
    "attached", "find", "enclosed", "version", "draft", "file", "latest", "copy", "sending", "here"};
constexpr std::array<std::string_view, 8> kConfirmationWords{
    "confirmed", "accepted", "booked", "see", "then", "works", "invite", "calendar"};
constexpr std::array<std::string_view, 8> kChatterWords{
    "great", "noted", "thanks", "cool", "sounds", "good", "cheers", "ok"};

constexpr std::string_view kConsonants = "bcdfghjklmnprstvwz";
constexpr std::string_view kVowels = "aeiou";

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string pseudo_word(std::uint64_t h) {
  std::string w;
  const int syllables = 2 + static_cast<int>(h % 3);
  h = splitmix(h);
  for (int s = 0; s < syllables; ++s) {
    w.push_back(kConsonants[h % kConsonants.size()]);
    h /= kConsonants.size();
    w.push_back(kVowels[h % kVowels.size()]);
    h /= kVowels.size();
    if (h % 4 == 0) w.push_back(kConsonants[(h / 4) % kConsonants.size()]);
    h = splitmix(h);
  }
  return w;
}

// Deterministic word banks. `taken` keeps banks disjoint within a corpus.
class BankBuilder {
 public:
  BankBuilder() {
    for (auto w : kFunctionWords) taken_.insert(std::string(w));
    for (auto w : kAttachmentReplyWords) taken_.insert(std::string(w));
    for (auto w : kConfirmationWords) taken_.insert(std::string(w));
    for (auto w : kChatterWords) taken_.insert(std::string(w));
  }

  std::vector<std::string> make(std::string_view salt, std::size_t size) {
    std::vector<std::string> bank;
    bank.reserve(size);
    const std::uint64_t base = fnv1a(salt);
    for (std::size_t i = 0, attempt = 0; bank.size() < size; ++attempt) {
      auto w = pseudo_word(splitmix(base ^ splitmix(attempt)));
      if (taken_.insert(w).second) {
        bank.push_back(std::move(w));
        ++i;
      }
    }
    return bank;
  }

 private:
  std::unordered_set<std::string> taken_;
};

class ZipfSampler {
 public:
  ZipfSampler(std::size_t n, double exponent) {
    std::vector<double> w(n);
    for (std::size_t k = 0; k < n; ++k) w[k] = 1.0 / std::pow(static_cast<double>(k + 1), exponent);
    dist_ = std::discrete_distribution<std::size_t>(w.begin(), w.end());
  }
  template <typename Rng>
  std::size_t operator()(Rng& rng) {
    return dist_(rng);
  }

 private:
  std::discrete_distribution<std::size_t> dist_;
};

struct Vocabulary {
  std::vector<std::string> background;
  PerIntent<std::vector<std::string>> shared_cues;
  PerIntent<std::vector<std::string>> domain_cues;
  PerIntent<std::vector<std::string>> topics;
};

Vocabulary build_vocabulary(const SyntheticSpec& spec) {
  // Shared banks are built first and with domain-free salts, so two domains
  // agree on them word for word.
  BankBuilder builder;
  Vocabulary v;
  const std::size_t fixed = std::min(kFunctionWords.size(), spec.background_vocab);
  const auto domain_bg = static_cast<std::size_t>(
      std::llround(spec.domain_background_fraction * static_cast<double>(spec.background_vocab - fixed)));
  const std::size_t shared_bg = spec.background_vocab - fixed - domain_bg;
  for (std::size_t i = 0; i < fixed; ++i) v.background.emplace_back(kFunctionWords[i]);
  auto shared = builder.make("background", shared_bg);
  v.background.insert(v.background.end(), shared.begin(), shared.end());
  for (auto intent : kIntents) {
    v.shared_cues[slot(intent)] = builder.make("cue-" + std::string(intent_code(intent)), spec.cue_vocab);
  }
  for (auto intent : kIntents) {
    v.topics[slot(intent)] = builder.make("topic-" + std::string(intent_code(intent)), spec.topic_vocab);
  }
  auto own = builder.make(spec.domain + "/background", domain_bg);
  v.background.insert(v.background.end(), own.begin(), own.end());
  if (spec.domain_cue_fraction > 0.0) {
    for (auto intent : kIntents) {
      v.domain_cues[slot(intent)] =
          builder.make(spec.domain + "/cue-" + std::string(intent_code(intent)), spec.cue_vocab);
    }
  }
  return v;
}

double topical_false_positive_rate(const SyntheticSpec& spec, Intent intent) {
  const double fp = spec.noise[slot(intent)].false_positive_rate;
  return std::min(1.0, fp * spec.topic_lift);
}

// Keeps the mean false-positive rate at the configured value.
double plain_false_positive_rate(const SyntheticSpec& spec, Intent intent) {
  const double fp = spec.noise[slot(intent)].false_positive_rate;
  const double r = spec.topic_rate;
  if (r >= 1.0) return fp;
  return std::max(0.0, (fp - r * topical_false_positive_rate(spec, intent)) / (1.0 - r));
}

class Generator {
 public:
  explicit Generator(const SyntheticSpec& spec)
      : spec_(spec),
        vocab_(build_vocabulary(spec)),
        rng_(spec.seed),
        background_(vocab_.background.size(), 1.0),
        cues_(spec.cue_vocab, spec.cue_skew) {}

  SyntheticCorpus run() {
    for (std::size_t t = 0; t < spec_.num_threads; ++t) {
      const bool annotated = t < spec_.num_annotated_threads;
      if (bernoulli(spec_.commitment_fraction)) {
        commitment_thread(t, annotated);
      } else {
        request_thread(t, annotated);
      }
    }
    SyntheticCorpus out{Corpus(std::move(messages_), std::move(calendar_), std::move(gold_)),
                        std::move(truth_)};
    return out;
  }

 private:
  bool bernoulli(double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < p; }

  std::size_t uniform(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }

  std::string person() { return "u" + std::to_string(uniform(0, 199)) + "@" + spec_.domain + ".example"; }

  std::vector<std::string> recipients(const std::string& sender, std::size_t min_count = 1) {
    std::vector<std::string> out;
    const std::size_t n = uniform(min_count, 3);
    while (out.size() < n) {
      auto p = person();
      if (p != sender && std::find(out.begin(), out.end(), p) == out.end()) out.push_back(std::move(p));
    }
    return out;
  }

  std::string subject() {
    for (;;) {
      std::string s;
      for (int i = 0; i < 3; ++i) {
        if (i) s.push_back(' ');
        s += vocab_.background[uniform(0, vocab_.background.size() - 1)];
      }
      if (subjects_.insert(s).second) return s;
    }
  }

  const std::string& cue(Intent intent) {
    const auto& bank = (spec_.domain_cue_fraction > 0.0 && bernoulli(spec_.domain_cue_fraction))
                           ? vocab_.domain_cues[slot(intent)]
                           : vocab_.shared_cues[slot(intent)];
    return bank[cues_(rng_)];
  }

  std::vector<std::string> background_tokens(std::size_t n) {
    std::vector<std::string> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(vocab_.background[background_(rng_)]);
    return out;
  }

  void insert_at_random(std::vector<std::string>& tokens, const std::string& word) {
    const std::size_t pos = uniform(0, tokens.size());
    tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(pos), word);
  }

  static std::string join(const std::vector<std::string>& tokens) {
    std::string out;
    for (const auto& t : tokens) {
      if (!out.empty()) out.push_back(' ');
      out += t;
    }
    return out;
  }

  // Body of a candidate message: background plus cues for the intents it
  // holds, and an occasional leaked cue for those it does not.
  std::vector<std::string> candidate_tokens(std::initializer_list<std::pair<Intent, bool>> intents) {
    auto tokens = background_tokens(uniform(spec_.min_body_tokens, spec_.max_body_tokens));
    for (auto [intent, present] : intents) {
      if (present) {
        const std::size_t k = uniform(spec_.min_cues, spec_.max_cues);
        for (std::size_t i = 0; i < k; ++i) insert_at_random(tokens, cue(intent));
      } else if (bernoulli(spec_.cue_leak)) {
        insert_at_random(tokens, cue(intent));
      }
    }
    return tokens;
  }

  template <std::size_t N>
  std::string reply_body(const std::array<std::string_view, N>& bank) {
    auto tokens = background_tokens(uniform(spec_.min_body_tokens / 2 + 1, spec_.max_body_tokens / 2 + 1));
    const std::size_t k = uniform(2, 4);
    for (std::size_t i = 0; i < k; ++i) insert_at_random(tokens, std::string(bank[uniform(0, N - 1)]));
    return join(tokens);
  }

  // Topic words make an interaction likelier without implying the intent.
  bool add_topic(std::vector<std::string>& tokens, Intent intent) {
    if (spec_.topic_rate <= 0.0 || !bernoulli(spec_.topic_rate)) return false;
    const auto& bank = vocab_.topics[slot(intent)];
    const std::size_t k = uniform(1, 2);
    for (std::size_t i = 0; i < k; ++i) insert_at_random(tokens, bank[uniform(0, bank.size() - 1)]);
    return true;
  }

  std::int64_t step() { return static_cast<std::int64_t>(uniform(60, 3600)); }

  void record_truth(const std::string& id, bool ri, bool sm, bool pa) {
    truth_[{id, Intent::RequestInformation}] = ri;
    truth_[{id, Intent::ScheduleMeeting}] = sm;
    truth_[{id, Intent::PromiseAction}] = pa;
  }

  EmailMessage reply_to(const EmailMessage& parent, std::string id, std::int64_t ts, std::size_t responder = 0) {
    EmailMessage m;
    m.id = std::move(id);
    m.thread_id = parent.thread_id;
    m.sender = parent.recipients[responder % parent.recipients.size()];
    m.recipients = {parent.sender};
    m.subject = "RE: " + parent.subject;
    m.timestamp = ts;
    m.in_reply_to = parent.id;
    return m;
  }

  std::string thread_key(std::size_t t) const {
    auto s = std::to_string(t);
    return std::string(s.size() < 7 ? 7 - s.size() : 0, '0') + s;
  }

  std::int64_t thread_start(std::size_t t) {
    return 1'500'000'000 + static_cast<std::int64_t>(t) * 20'000 + static_cast<std::int64_t>(uniform(0, 5000));
  }

  const InteractionNoise& noise(Intent intent) const { return spec_.noise[slot(intent)]; }

  bool signal(Intent intent, bool present, bool topical) {
    const auto& n = noise(intent);
    if (present) return bernoulli(1.0 - n.false_negative_rate);
    return bernoulli(topical ? topical_false_positive_rate(spec_, intent)
                             : plain_false_positive_rate(spec_, intent));
  }

  void request_thread(std::size_t t, bool annotated) {
    const auto key = thread_key(t);
    const bool ri = bernoulli(spec_.priors[slot(Intent::RequestInformation)]);
    const bool sm = bernoulli(spec_.priors[slot(Intent::ScheduleMeeting)]);

    EmailMessage root;
    root.id = "m" + key + "-0";
    root.thread_id = "t" + key;
    root.sender = person();
    // The first recipient is the only invitee; the others answer everything
    // else, so no reply but the confirmation joins the calendar entry.
    root.recipients = recipients(root.sender, 2);
    root.subject = subject();
    auto tokens = candidate_tokens({{Intent::RequestInformation, ri}, {Intent::ScheduleMeeting, sm}});
    const bool ri_topic = add_topic(tokens, Intent::RequestInformation);
    const bool sm_topic = add_topic(tokens, Intent::ScheduleMeeting);
    root.body = join(tokens);
    root.timestamp = thread_start(t);
    record_truth(root.id, ri, sm, false);
    if (annotated) {
      gold_[{root.id, Intent::RequestInformation}] = ri;
      gold_[{root.id, Intent::ScheduleMeeting}] = sm;
    }

    const bool ri_signal = signal(Intent::RequestInformation, ri, ri_topic);
    const bool sm_signal = signal(Intent::ScheduleMeeting, sm, sm_topic);
    const bool chatter = bernoulli(spec_.chatter_rate);

    std::int64_t ts = root.timestamp;
    int next = 1;
    std::vector<EmailMessage> replies;

    // The confirmation must be the first reply so that only the root
    // precedes it under the subject join.
    if (sm_signal) {
      CalendarEntry entry;
      entry.subject = root.subject;
      entry.start_time = root.timestamp + 86'400;
      entry.location = "room " + std::to_string(uniform(1, 40));
      entry.attendees = {root.recipients.front()};
      entry.organizer = root.sender;
      calendar_.push_back(std::move(entry));

      auto c = reply_to(root, "m" + key + "-" + std::to_string(next++), ts += step());
      c.body = reply_body(kConfirmationWords);
      replies.push_back(std::move(c));
    }
    if (ri_signal) {
      auto a = reply_to(root, "m" + key + "-" + std::to_string(next++), ts += step(),
                        uniform(1, root.recipients.size() - 1));
      a.body = reply_body(kAttachmentReplyWords);
      const bool other = bernoulli(0.2);
      a.attachments.push_back({"doc_" + key + (other ? ".zip" : ".pdf"),
                               other ? AttachmentKind::Other : AttachmentKind::Document});
      if (bernoulli(0.3)) a.attachments.push_back({"signature.png", AttachmentKind::Signature});
      replies.push_back(std::move(a));
    }
    if (chatter) {
      auto c = reply_to(root, "m" + key + "-" + std::to_string(next++), ts += step(),
                        uniform(1, root.recipients.size() - 1));
      c.body = reply_body(kChatterWords);
      if (bernoulli(0.5)) {
        static constexpr std::array<AttachmentKind, 3> trivial{AttachmentKind::Image, AttachmentKind::Signature,
                                                               AttachmentKind::Contact};
        const auto kind = trivial[uniform(0, 2)];
        c.attachments.push_back({std::string("trivial.") + std::string(attachment_kind_name(kind)), kind});
      }
      replies.push_back(std::move(c));
    }

    messages_.push_back(std::move(root));
    for (auto& r : replies) {
      record_truth(r.id, false, false, false);
      messages_.push_back(std::move(r));
    }
  }

  void commitment_thread(std::size_t t, bool annotated) {
    const auto key = thread_key(t);
    const bool pa = bernoulli(spec_.priors[slot(Intent::PromiseAction)]);

    EmailMessage request;
    request.id = "m" + key + "-0";
    request.thread_id = "t" + key;
    request.sender = person();
    request.recipients = recipients(request.sender);
    request.subject = subject();
    request.body = join(background_tokens(uniform(spec_.min_body_tokens, spec_.max_body_tokens)));
    request.timestamp = thread_start(t);
    auto reply = reply_to(request, "m" + key + "-1", request.timestamp + step());
    auto tokens = candidate_tokens({{Intent::PromiseAction, pa}});
    const bool pa_topic = add_topic(tokens, Intent::PromiseAction);
    reply.body = join(tokens);
    request.follow_up_flag = signal(Intent::PromiseAction, pa, pa_topic);

    record_truth(request.id, false, false, false);
    record_truth(reply.id, false, false, pa);
    if (annotated) gold_[{reply.id, Intent::PromiseAction}] = pa;

    messages_.push_back(std::move(request));
    messages_.push_back(std::move(reply));
  }

  const SyntheticSpec& spec_;
  Vocabulary vocab_;
  std::mt19937_64 rng_;
  ZipfSampler background_;
  ZipfSampler cues_;
  std::unordered_set<std::string> subjects_;

  std::vector<EmailMessage> messages_;
  std::vector<CalendarEntry> calendar_;
  GoldMap gold_;
  GoldMap truth_;
};

bool in_unit(double x) { return x >= 0.0 && x <= 1.0; }

double trigger_rate(double prior, const InteractionNoise& n) {
  return prior * (1.0 - n.false_negative_rate) + (1.0 - prior) * n.false_positive_rate;
}

}  // namespace

void SyntheticSpec::validate() const {
  auto check = [](double x, const std::string& what) {
    if (!in_unit(x)) throw ValidationError(what + " must lie in [0,1], got " + std::to_string(x));
  };
  check(commitment_fraction, "commitment_fraction");
  check(chatter_rate, "chatter_rate");
  check(cue_leak, "cue_leak");
  check(domain_cue_fraction, "domain_cue_fraction");
  check(domain_background_fraction, "domain_background_fraction");
  check(topic_rate, "topic_rate");
  if (!(topic_lift >= 1.0) || topic_lift * topic_rate > 1.0 + 1e-12) {
    throw ValidationError("topic_lift must be at least 1 and at most 1 / topic_rate");
  }
  if (topic_rate > 0.0 && topic_vocab == 0) throw ValidationError("topic_vocab must be positive");
  for (auto intent : kIntents) {
    const auto code = std::string(intent_code(intent));
    check(priors[slot(intent)], "prior " + code);
    check(noise[slot(intent)].false_positive_rate, "false_positive_rate " + code);
    check(noise[slot(intent)].false_negative_rate, "false_negative_rate " + code);
  }
  if (num_annotated_threads > num_threads) {
    throw ValidationError("num_annotated_threads exceeds num_threads");
  }
  if (min_body_tokens > max_body_tokens || min_cues > max_cues) {
    throw ValidationError("min exceeds max in body or cue range");
  }
  if (background_vocab == 0 || cue_vocab == 0) throw ValidationError("vocabulary sizes must be positive");
}

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  return Generator(spec).run();
}

AuditTarget published_audit(Intent intent) {
  switch (intent) {
    case Intent::RequestInformation: return {0.36, 0.99};
    case Intent::ScheduleMeeting: return {0.46, 0.96};
    case Intent::PromiseAction: return {0.31, 0.95};
  }
  return {};
}

PerIntent<AuditTarget> expected_audit(const SyntheticSpec& spec) {
  const double k = spec.commitment_fraction, q = spec.chatter_rate;
  const auto& pr = spec.priors;
  const auto& nz = spec.noise;
  const double s_ri = trigger_rate(pr[0], nz[0]);
  const double s_sm = trigger_rate(pr[1], nz[1]);
  const double s_pa = trigger_rate(pr[2], nz[2]);

  auto target = [](double tp, double pos, double disc_pos, double disc) {
    return AuditTarget{pos > 0 ? tp / pos : 1.0, disc > 0 ? 1.0 - disc_pos / disc : 1.0};
  };

  PerIntent<AuditTarget> out;
  out[0] = target((1 - k) * pr[0] * (1 - nz[0].false_negative_rate), (1 - k) * s_ri,
                  (1 - k) * pr[0] * nz[0].false_negative_rate, (1 - k) * (1 + s_sm + q) + 2 * k);
  out[1] = target((1 - k) * pr[1] * (1 - nz[1].false_negative_rate), (1 - k) * s_sm,
                  (1 - k) * pr[1] * nz[1].false_negative_rate, (1 - k) * (1 + s_ri + q) + 2 * k);
  out[2] = target(k * pr[2] * (1 - nz[2].false_negative_rate), k * s_pa, k * pr[2] * nz[2].false_negative_rate,
                  (1 - k) * (1 + s_ri + s_sm + q) + k * (2 - s_pa));
  return out;
}

SyntheticSpec calibrate(SyntheticSpec spec, const PerIntent<AuditTarget>& targets) {
  const double k = spec.commitment_fraction, q = spec.chatter_rate;
  auto& nz = spec.noise;
  const auto& pr = spec.priors;
  for (auto intent : kIntents) {
    const auto& t = targets[slot(intent)];
    if (!(t.positive_precision > 0.0 && t.positive_precision <= 1.0 && in_unit(t.negative_precision))) {
      throw ValidationError("audit targets must lie in (0,1]");
    }
  }

  auto fp_from_precision = [](double prior, double fn, double precision) {
    return prior * (1 - fn) * (1 - precision) / (precision * (1 - prior));
  };

  // The discarded pool of each rule contains the other rules' signal
  // replies, so the three solves are coupled; a few fixed-point sweeps
  // settle them.
  for (int iter = 0; iter < 200; ++iter) {
    const double s_ri = trigger_rate(pr[0], nz[0]);
    const double s_sm = trigger_rate(pr[1], nz[1]);

    auto solve_request = [&](std::size_t i, double other_rate) {
      const auto& t = targets[i];
      const double disc = (1 - k) * (1 + other_rate + q) + 2 * k;
      const double fn = (1 - t.negative_precision) * disc / ((1 - k) * pr[i]);
      nz[i].false_negative_rate = fn;
      nz[i].false_positive_rate = fp_from_precision(pr[i], fn, t.positive_precision);
    };
    solve_request(0, s_sm);
    solve_request(1, s_ri);

    const auto& t = targets[2];
    const double a = (1 - k) * (1 + trigger_rate(pr[0], nz[0]) + trigger_rate(pr[1], nz[1]) + q) + k;
    const double p = t.positive_precision, qn = 1 - t.negative_precision;
    const double fn = qn * (a + k - k * pr[2] / p) / (k * pr[2] * (1 - qn / p));
    nz[2].false_negative_rate = fn;
    nz[2].false_positive_rate = fp_from_precision(pr[2], fn, p);
  }

  for (auto intent : kIntents) {
    const auto& n = nz[slot(intent)];
    if (!in_unit(n.false_negative_rate) || !in_unit(n.false_positive_rate) ||
        !std::isfinite(n.false_negative_rate) || !std::isfinite(n.false_positive_rate)) {
      throw ValidationError("audit target for " + std::string(intent_code(intent)) +
                            " is unreachable with these priors and thread mix");
    }
  }
  return spec;
}

SyntheticSpec sized_for(SyntheticSpec spec, Intent intent, const SplitSizes& sizes, double margin) {
  const double k = spec.commitment_fraction;
  const double frac = intent == Intent::PromiseAction ? k : 1.0 - k;
  const double prior = spec.priors[slot(intent)];
  const double pos_need = static_cast<double>((sizes.clean + 1) / 2 + (sizes.dev + 1) / 2 + (sizes.test + 1) / 2);
  const double neg_need = static_cast<double>(sizes.clean / 2 + sizes.dev / 2 + sizes.test / 2);
  if (prior <= 0.0 || prior >= 1.0 || frac <= 0.0) throw ValidationError("cannot size a corpus for this intent");

  const double annotated = margin * std::max(pos_need / (frac * prior), neg_need / (frac * (1 - prior)));
  const double rate = frac * trigger_rate(prior, spec.noise[slot(intent)]);
  if (sizes.weak > 0 && rate <= 0.0) throw ValidationError("labeling function never fires under this spec");
  const double weak_threads = sizes.weak == 0 ? 0.0 : margin * (static_cast<double>(sizes.weak) / 2.0) / rate;

  spec.num_annotated_threads = static_cast<std::size_t>(std::ceil(annotated)) + 8;
  spec.num_threads = spec.num_annotated_threads + static_cast<std::size_t>(std::ceil(weak_threads)) + 8;
  return spec;
}

}  // namespace mailintent::synthetic
