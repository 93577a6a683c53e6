#pragma once

// Random mail corpora and brute-force oracles shared by the unit and
// acceptance tests. The oracles deliberately avoid the library's indexes:
// they scan every pair or triple directly.

#include <algorithm>
#include <cctype>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "mailintent/corpus.hpp"
#include "mailintent/trainer.hpp"
#include "mailintent/weaklabel.hpp"

namespace mailintent::fixtures {

struct RandomCorpusOptions {
  std::size_t messages = 50;
  std::size_t calendar_entries = 5;
  double reply_rate = 0.6;
  double attachment_rate = 0.4;
  double flag_rate = 0.3;
  std::size_t users = 6;
};

inline Corpus random_corpus(const RandomCorpusOptions& opt, std::uint64_t seed) {
  static const std::vector<std::string> subjects{"sync on accounts", "Budget review", "q3 plan", "offsite",
                                                 "hiring loop"};
  static const std::vector<std::string> prefixes{"", "RE: ", "Re: re: ", "FW: ", "  fwd:RE: "};
  std::mt19937_64 rng(seed);
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  auto coin = [&](double p) { return std::bernoulli_distribution(p)(rng); };
  auto user = [&] { return "u" + std::to_string(pick(opt.users)); };

  std::vector<EmailMessage> msgs;
  for (std::size_t i = 0; i < opt.messages; ++i) {
    EmailMessage m;
    m.id = "m" + std::to_string(i);
    m.timestamp = static_cast<std::int64_t>(10 * i + pick(5));
    m.sender = user();
    m.recipients = {user(), user()};
    m.subject = prefixes[pick(prefixes.size())] + subjects[pick(subjects.size())];
    m.body = "body " + std::to_string(i);
    if (!msgs.empty() && coin(opt.reply_rate)) {
      const auto& parent = msgs[pick(msgs.size())];
      m.in_reply_to = parent.id;
      m.thread_id = parent.thread_id;
    } else {
      m.thread_id = "t" + std::to_string(i);
    }
    if (coin(opt.attachment_rate)) {
      const auto kind = static_cast<AttachmentKind>(pick(5));
      m.attachments.push_back({"file" + std::to_string(i), kind});
    }
    m.follow_up_flag = coin(opt.flag_rate);
    msgs.push_back(std::move(m));
  }
  std::vector<CalendarEntry> cal;
  for (std::size_t k = 0; k < opt.calendar_entries; ++k) {
    CalendarEntry e;
    e.subject = prefixes[pick(2)] + subjects[pick(subjects.size())];
    e.start_time = static_cast<std::int64_t>(pick(10 * opt.messages));
    e.organizer = user();
    e.attendees = {user()};
    if (coin(0.5)) e.attendees.push_back(user());
    cal.push_back(std::move(e));
  }
  return Corpus(std::move(msgs), std::move(cal));
}

/// Thread partition by union-find over reply links, as sorted id sets.
inline std::set<std::set<std::string>> union_find_threads(const std::vector<EmailMessage>& msgs) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < msgs.size(); ++i) index[msgs[i].id] = i;
  std::vector<std::size_t> parent(msgs.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < msgs.size(); ++i) {
    if (msgs[i].in_reply_to) parent[find(i)] = find(index.at(*msgs[i].in_reply_to));
  }
  std::map<std::size_t, std::set<std::string>> groups;
  for (std::size_t i = 0; i < msgs.size(); ++i) groups[find(i)].insert(msgs[i].id);
  std::set<std::set<std::string>> out;
  for (auto& [root, ids] : groups) out.insert(ids);
  return out;
}

inline std::string fold_subject(const std::string& s) {
  std::string t;
  for (char c : s) t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  bool changed = true;
  while (changed) {
    changed = false;
    while (!t.empty() && std::isspace(static_cast<unsigned char>(t.front()))) t.erase(0, 1), changed = true;
    while (!t.empty() && std::isspace(static_cast<unsigned char>(t.back()))) t.pop_back(), changed = true;
    for (const char* p : {"re:", "fw:", "fwd:"}) {
      if (t.rfind(p, 0) == 0) {
        t.erase(0, std::string(p).size());
        changed = true;
      }
    }
  }
  return t;
}

inline bool content_attachment(const Attachment& a) {
  return a.kind != AttachmentKind::Image && a.kind != AttachmentKind::Signature &&
         a.kind != AttachmentKind::Contact;
}

/// Positive ids for request-information: every (a, b) pair where a replies
/// to b with a content attachment.
inline std::set<std::string> oracle_request_information(const Corpus& c) {
  std::set<std::string> out;
  for (const auto& b : c.messages()) {
    for (const auto& a : c.messages()) {
      if (a.in_reply_to != b.id) continue;
      if (std::any_of(a.attachments.begin(), a.attachments.end(), content_attachment)) out.insert(b.id);
    }
  }
  return out;
}

/// Positive ids for schedule-meeting: a message followed strictly later by
/// a same-subject message whose sender attends or organizes a same-subject
/// calendar entry.
inline std::set<std::string> oracle_schedule_meeting(const Corpus& c) {
  std::set<std::string> out;
  for (const auto& a : c.messages()) {
    for (const auto& conf : c.messages()) {
      if (conf.timestamp <= a.timestamp || fold_subject(conf.subject) != fold_subject(a.subject)) continue;
      for (const auto& e : c.calendar()) {
        if (fold_subject(e.subject) != fold_subject(conf.subject)) continue;
        const bool attends = e.organizer == conf.sender ||
                             std::find(e.attendees.begin(), e.attendees.end(), conf.sender) != e.attendees.end();
        if (attends) out.insert(a.id);
      }
    }
  }
  return out;
}

/// Positive ids for promise-action: replies to a flagged message.
inline std::set<std::string> oracle_promise_action(const Corpus& c) {
  std::set<std::string> out;
  for (const auto& b : c.messages()) {
    if (!b.follow_up_flag) continue;
    for (const auto& a : c.messages()) {
      if (a.in_reply_to == b.id) out.insert(a.id);
    }
  }
  return out;
}

inline std::set<std::string> oracle_positives(const Corpus& c, Intent intent) {
  switch (intent) {
    case Intent::RequestInformation: return oracle_request_information(c);
    case Intent::ScheduleMeeting: return oracle_schedule_meeting(c);
    case Intent::PromiseAction: return oracle_promise_action(c);
  }
  return {};
}

inline std::set<std::string> positives(const std::vector<weaklabel::WeakLabelAssignment>& labels) {
  std::set<std::string> out;
  for (const auto& a : labels) {
    if (a.positive) out.insert(a.message_id);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Small labeled datasets

struct ToyOptions {
  std::size_t clean = 40;
  std::size_t weak = 200;
  std::size_t dev = 40;
  std::size_t test = 100;
  /// P(a weak label is flipped).
  double weak_flip = 0.2;
  /// P(a message carries no cue word at all).
  double cue_drop = 0.0;
};

/// Binary task: positives carry a "yes" cue word, negatives a "no" cue word,
/// both among random filler. Weak labels are gold flipped at weak_flip.
inline Dataset toy_dataset(const ToyOptions& opt, std::uint64_t seed) {
  static const std::vector<std::string> yes{"please", "send", "share", "forward"};
  static const std::vector<std::string> no{"thanks", "fyi", "lunch", "cheers"};
  std::mt19937_64 rng(seed);
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  auto coin = [&](double p) { return std::bernoulli_distribution(p)(rng); };
  std::size_t counter = 0;
  auto make = [&](int label, Source source, int target) {
    std::string text;
    for (std::size_t i = 0, n = 3 + pick(5); i < n; ++i) text += "w" + std::to_string(pick(30)) + " ";
    if (!coin(opt.cue_drop)) text += (label ? yes : no)[pick(4)] + " ";
    text += "w" + std::to_string(pick(30));
    return Example{"x" + std::to_string(counter++), text, one_hot(target, 2), source};
  };
  Dataset ds;
  auto gold = [&](std::vector<Example>& split, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) split.push_back(make(static_cast<int>(i % 2), Source::Clean, static_cast<int>(i % 2)));
  };
  gold(ds.clean, opt.clean);
  for (std::size_t i = 0; i < opt.weak; ++i) {
    const int truth = static_cast<int>(i % 2);
    ds.weak.push_back(make(truth, Source::Weak, coin(opt.weak_flip) ? 1 - truth : truth));
    ds.weak_truth.push_back(truth);
  }
  gold(ds.dev, opt.dev);
  gold(ds.test, opt.test);
  return ds;
}

inline encoder::EncoderConfig toy_encoder() {
  encoder::EncoderConfig e;
  e.kind = encoder::EncoderKind::AvgEmb;
  e.embed_dim = 8;
  e.hidden = 8;
  e.max_len = 16;
  return e;
}

inline PreparedData toy_data(const ToyOptions& opt, std::uint64_t seed) {
  return prepare_dataset(toy_dataset(opt, seed), toy_encoder());
}

}  // namespace mailintent::fixtures
