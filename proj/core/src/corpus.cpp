#include "mailintent/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "mailintent/error.hpp"

namespace mailintent {

using nlohmann::json;

std::string_view intent_code(Intent intent) {
  switch (intent) {
    case Intent::RequestInformation: return "RI";
    case Intent::ScheduleMeeting: return "SM";
    case Intent::PromiseAction: return "PA";
  }
  return "?";
}

Intent parse_intent(std::string_view text) {
  if (text == "RI" || text == "ri" || text == "request_information") return Intent::RequestInformation;
  if (text == "SM" || text == "sm" || text == "schedule_meeting") return Intent::ScheduleMeeting;
  if (text == "PA" || text == "pa" || text == "promise_action") return Intent::PromiseAction;
  throw ValidationError("unknown intent '" + std::string(text) + "'");
}

std::string_view attachment_kind_name(AttachmentKind kind) {
  switch (kind) {
    case AttachmentKind::Document: return "document";
    case AttachmentKind::Image: return "image";
    case AttachmentKind::Signature: return "signature";
    case AttachmentKind::Contact: return "contact";
    case AttachmentKind::Other: return "other";
  }
  return "other";
}

AttachmentKind parse_attachment_kind(std::string_view text) {
  if (text == "document") return AttachmentKind::Document;
  if (text == "image") return AttachmentKind::Image;
  if (text == "signature") return AttachmentKind::Signature;
  if (text == "contact") return AttachmentKind::Contact;
  if (text == "other") return AttachmentKind::Other;
  throw ValidationError("unknown attachment kind '" + std::string(text) + "'");
}

std::string_view source_name(Source source) {
  switch (source) {
    case Source::Clean: return "clean";
    case Source::Weak: return "weak";
    case Source::Corrected: return "corrected";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Corpus

namespace {

struct DisjointSets {
  std::vector<std::size_t> parent;
  explicit DisjointSets(std::size_t n) : parent(n) {
    std::iota(parent.begin(), parent.end(), std::size_t{0});
  }
  std::size_t root(std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void join(std::size_t a, std::size_t b) {
    a = root(a);
    b = root(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

bool earlier(const EmailMessage& a, const EmailMessage& b) {
  if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
  return a.id < b.id;
}

}  // namespace

Corpus::Corpus(std::vector<EmailMessage> messages, std::vector<CalendarEntry> calendar,
               std::optional<GoldMap> gold)
    : calendar_(std::move(calendar)), gold_(std::move(gold)) {
  std::unordered_map<std::string, std::size_t> by_id;
  by_id.reserve(messages.size());
  for (std::size_t i = 0; i < messages.size(); ++i) {
    if (!by_id.emplace(messages[i].id, i).second) {
      throw IntegrityError("duplicate message id '" + messages[i].id + "'");
    }
  }

  DisjointSets sets(messages.size());
  for (std::size_t i = 0; i < messages.size(); ++i) {
    const auto& msg = messages[i];
    if (!msg.in_reply_to) continue;
    auto it = by_id.find(*msg.in_reply_to);
    if (it == by_id.end()) {
      throw IntegrityError("message '" + msg.id + "' replies to unknown message '" +
                           *msg.in_reply_to + "'");
    }
    const auto& parent = messages[it->second];
    if (parent.timestamp >= msg.timestamp) {
      throw IntegrityError("message '" + msg.id + "' does not follow its parent '" +
                           parent.id + "' in time");
    }
    if (parent.thread_id != msg.thread_id) {
      throw IntegrityError("message '" + msg.id + "' replies across threads ('" +
                           msg.thread_id + "' vs '" + parent.thread_id + "')");
    }
    sets.join(i, it->second);
  }

  // Group into components, order members and components by (timestamp, id).
  std::unordered_map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < messages.size(); ++i) groups[sets.root(i)].push_back(i);
  std::vector<std::vector<std::size_t>> components;
  components.reserve(groups.size());
  for (auto& [root, members] : groups) {
    std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      return earlier(messages[a], messages[b]);
    });
    components.push_back(std::move(members));
  }
  std::sort(components.begin(), components.end(), [&](const auto& a, const auto& b) {
    return earlier(messages[a.front()], messages[b.front()]);
  });

  messages_.reserve(messages.size());
  thread_of_.reserve(messages.size());
  threads_.reserve(components.size());
  for (const auto& members : components) {
    Thread thread;
    thread.id = messages[members.front()].thread_id;
    for (std::size_t old_index : members) {
      thread.members.push_back(messages_.size());
      thread_of_.push_back(threads_.size());
      messages_.push_back(std::move(messages[old_index]));
    }
    threads_.push_back(std::move(thread));
  }
  for (std::size_t i = 0; i < messages_.size(); ++i) index_.emplace(messages_[i].id, i);

  if (gold_) {
    for (const auto& [key, label] : *gold_) {
      if (!index_.contains(key.first)) {
        throw IntegrityError("gold label for unknown message '" + key.first + "'");
      }
    }
  }
}

std::optional<std::size_t> Corpus::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const EmailMessage& Corpus::at(std::string_view id) const {
  auto idx = find(id);
  if (!idx) throw IntegrityError("unknown message '" + std::string(id) + "'");
  return messages_[*idx];
}

// ---------------------------------------------------------------------------
// Line-delimited records

namespace {

template <typename Fn>
void for_each_record(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed record: ") + e.what(), line_no);
    }
    if (!record.is_object()) throw ParseError("record is not an object", line_no);
    try {
      fn(record);
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad field: ") + e.what(), line_no);
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
}

template <typename T>
T required(const json& record, const char* key) {
  auto it = record.find(key);
  if (it == record.end()) throw ValidationError(std::string("missing key '") + key + "'");
  return it->get<T>();
}

}  // namespace

std::vector<EmailMessage> read_messages(std::istream& in) {
  std::vector<EmailMessage> out;
  for_each_record(in, [&](const json& r) {
    EmailMessage m;
    m.id = required<std::string>(r, "id");
    m.thread_id = required<std::string>(r, "thread_id");
    m.sender = required<std::string>(r, "sender");
    m.recipients = required<std::vector<std::string>>(r, "recipients");
    m.subject = required<std::string>(r, "subject");
    m.body = required<std::string>(r, "body");
    m.timestamp = required<std::int64_t>(r, "timestamp");
    if (auto it = r.find("in_reply_to"); it != r.end() && !it->is_null()) {
      m.in_reply_to = it->get<std::string>();
    }
    if (auto it = r.find("attachments"); it != r.end()) {
      for (const auto& a : *it) {
        m.attachments.push_back({required<std::string>(a, "filename"),
                                 parse_attachment_kind(required<std::string>(a, "kind"))});
      }
    }
    if (auto it = r.find("follow_up_flag"); it != r.end()) m.follow_up_flag = it->get<bool>();
    out.push_back(std::move(m));
  });
  return out;
}

std::vector<CalendarEntry> read_calendar(std::istream& in) {
  std::vector<CalendarEntry> out;
  for_each_record(in, [&](const json& r) {
    CalendarEntry e;
    e.subject = required<std::string>(r, "subject");
    e.start_time = required<std::int64_t>(r, "start_time");
    e.location = required<std::string>(r, "location");
    e.attendees = required<std::vector<std::string>>(r, "attendees");
    e.organizer = required<std::string>(r, "organizer");
    if (e.attendees.empty()) throw ValidationError("calendar entry without attendees");
    out.push_back(std::move(e));
  });
  return out;
}

GoldMap read_gold(std::istream& in) {
  GoldMap out;
  for_each_record(in, [&](const json& r) {
    auto id = required<std::string>(r, "message_id");
    auto intent = parse_intent(required<std::string>(r, "intent"));
    auto label = required<int>(r, "label");
    if (label != 0 && label != 1) throw ValidationError("gold label must be 0 or 1");
    out[{std::move(id), intent}] = label == 1;
  });
  return out;
}

void write_messages(std::ostream& out, const std::vector<EmailMessage>& messages) {
  for (const auto& m : messages) {
    json r;
    r["id"] = m.id;
    r["thread_id"] = m.thread_id;
    r["sender"] = m.sender;
    r["recipients"] = m.recipients;
    r["subject"] = m.subject;
    r["body"] = m.body;
    r["timestamp"] = m.timestamp;
    r["in_reply_to"] = m.in_reply_to ? json(*m.in_reply_to) : json(nullptr);
    json atts = json::array();
    for (const auto& a : m.attachments) {
      atts.push_back({{"filename", a.filename}, {"kind", attachment_kind_name(a.kind)}});
    }
    r["attachments"] = std::move(atts);
    r["follow_up_flag"] = m.follow_up_flag;
    out << r.dump() << '\n';
  }
}

void write_calendar(std::ostream& out, const std::vector<CalendarEntry>& calendar) {
  for (const auto& e : calendar) {
    json r;
    r["subject"] = e.subject;
    r["start_time"] = e.start_time;
    r["location"] = e.location;
    r["attendees"] = e.attendees;
    r["organizer"] = e.organizer;
    out << r.dump() << '\n';
  }
}

void write_gold(std::ostream& out, const GoldMap& gold) {
  for (const auto& [key, label] : gold) {
    json r;
    r["message_id"] = key.first;
    r["intent"] = intent_code(key.second);
    r["label"] = label ? 1 : 0;
    out << r.dump() << '\n';
  }
}

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  return out;
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& messages_path) {
  return load_corpus(CorpusPaths{messages_path, std::nullopt, std::nullopt});
}

Corpus load_corpus(const CorpusPaths& paths) {
  auto in = open_input(paths.messages);
  auto messages = read_messages(in);
  std::vector<CalendarEntry> calendar;
  if (paths.calendar) {
    auto cal_in = open_input(*paths.calendar);
    calendar = read_calendar(cal_in);
  }
  std::optional<GoldMap> gold;
  if (paths.gold) {
    auto gold_in = open_input(*paths.gold);
    gold = read_gold(gold_in);
  }
  return Corpus(std::move(messages), std::move(calendar), std::move(gold));
}

CorpusPaths save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  CorpusPaths paths{dir / "messages.jsonl", dir / "calendar.jsonl", std::nullopt};
  {
    auto out = open_output(paths.messages);
    write_messages(out, corpus.messages());
  }
  {
    auto out = open_output(*paths.calendar);
    write_calendar(out, corpus.calendar());
  }
  if (corpus.gold()) {
    paths.gold = dir / "gold.jsonl";
    auto out = open_output(*paths.gold);
    write_gold(out, *corpus.gold());
  }
  return paths;
}

// ---------------------------------------------------------------------------
// Splits

int Example::label() const {
  if (target.empty()) return -1;
  return static_cast<int>(std::max_element(target.begin(), target.end()) - target.begin());
}

std::vector<double> one_hot(int label, std::size_t num_classes) {
  if (label < 0 || static_cast<std::size_t>(label) >= num_classes) {
    throw ShapeError("label " + std::to_string(label) + " outside [0, " +
                     std::to_string(num_classes) + ")");
  }
  std::vector<double> v(num_classes, 0.0);
  v[static_cast<std::size_t>(label)] = 1.0;
  return v;
}

double Dataset::clean_ratio() const {
  const auto total = clean.size() + weak.size();
  return total == 0 ? 0.0 : static_cast<double>(clean.size()) / static_cast<double>(total);
}

namespace {

Example make_example(const EmailMessage& msg, bool positive, Source source) {
  return Example{msg.id, msg.body, one_hot(positive ? 1 : 0, 2), source};
}

// Takes `count` items from the front of `pool` starting at `cursor`.
std::vector<std::size_t> take(const std::vector<std::size_t>& pool, std::size_t& cursor,
                              std::size_t count) {
  std::vector<std::size_t> out(pool.begin() + static_cast<std::ptrdiff_t>(cursor),
                               pool.begin() + static_cast<std::ptrdiff_t>(cursor + count));
  cursor += count;
  return out;
}

}  // namespace

Dataset build_dataset(const Corpus& corpus, const WeakLabelMap& weak_labels,
                      const DatasetOptions& options, const GoldMap* truth) {
  if (options.clean_ratio && (*options.clean_ratio <= 0.0 || *options.clean_ratio > 1.0)) {
    throw ValidationError("clean_ratio must lie in (0, 1]");
  }
  if (!corpus.gold()) throw InputError("corpus carries no gold labels");

  // Pools. Messages are visited in corpus order so the result depends only on
  // the corpus content and the seed.
  std::vector<std::size_t> gold_pos, gold_neg, weak_pos, weak_neg;
  std::vector<bool> annotated_thread(corpus.threads().size(), false);
  for (const auto& [key, label] : *corpus.gold()) {
    annotated_thread[corpus.thread_of(*corpus.find(key.first))] = true;
  }
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& msg = corpus.messages()[i];
    if (annotated_thread[corpus.thread_of(i)]) {
      auto it = corpus.gold()->find({msg.id, options.intent});
      if (it != corpus.gold()->end()) (it->second ? gold_pos : gold_neg).push_back(i);
      continue;
    }
    auto wl = weak_labels.find(msg.id);
    if (wl == weak_labels.end()) continue;
    (wl->second ? weak_pos : weak_neg).push_back(i);
  }

  std::mt19937_64 rng(options.seed);
  std::shuffle(gold_pos.begin(), gold_pos.end(), rng);
  std::shuffle(gold_neg.begin(), gold_neg.end(), rng);
  std::shuffle(weak_pos.begin(), weak_pos.end(), rng);
  std::shuffle(weak_neg.begin(), weak_neg.end(), rng);

  const std::size_t max_weak = 2 * std::min(weak_pos.size(), weak_neg.size());

  // Evaluation splits come first.
  std::size_t pos_cursor = 0, neg_cursor = 0;
  auto carve_eval = [&](std::size_t size, const char* name) {
    std::vector<std::size_t> pos, neg;
    if (options.natural_eval_prevalence) {
      // Proportional draw from what remains of the gold pool.
      const std::size_t remain_pos = gold_pos.size() - pos_cursor;
      const std::size_t remain_neg = gold_neg.size() - neg_cursor;
      const std::size_t remain = remain_pos + remain_neg;
      if (size > remain) throw SizingError(std::string("not enough gold examples for ") + name, remain);
      std::size_t npos = remain == 0 ? 0
                                     : static_cast<std::size_t>(std::llround(
                                           static_cast<double>(size) * static_cast<double>(remain_pos) /
                                           static_cast<double>(remain)));
      npos = std::min(npos, remain_pos);
      std::size_t nneg = size - npos;
      if (nneg > remain_neg) {
        nneg = remain_neg;
        npos = size - nneg;
      }
      pos = take(gold_pos, pos_cursor, npos);
      neg = take(gold_neg, neg_cursor, nneg);
    } else {
      const std::size_t npos = (size + 1) / 2, nneg = size / 2;
      const std::size_t feasible =
          2 * std::min(gold_pos.size() - pos_cursor, gold_neg.size() - neg_cursor);
      if (npos > gold_pos.size() - pos_cursor || nneg > gold_neg.size() - neg_cursor) {
        throw SizingError(std::string("not enough balanced gold examples for ") + name, feasible);
      }
      pos = take(gold_pos, pos_cursor, npos);
      neg = take(gold_neg, neg_cursor, nneg);
    }
    std::vector<Example> out;
    for (auto i : pos) out.push_back(make_example(corpus.messages()[i], true, Source::Clean));
    for (auto i : neg) out.push_back(make_example(corpus.messages()[i], false, Source::Clean));
    return out;
  };

  Dataset ds;
  ds.num_classes = 2;
  ds.test = carve_eval(options.test_size, "test");
  ds.dev = carve_eval(options.dev_size, "dev");

  const std::size_t max_clean =
      2 * std::min(gold_pos.size() - pos_cursor, gold_neg.size() - neg_cursor) +
      (gold_pos.size() - pos_cursor > gold_neg.size() - neg_cursor ? 1 : 0);

  // Resolve sizes.
  std::size_t clean_n = 0, weak_n = 0;
  const auto ratio = options.clean_ratio;
  if (ratio && *ratio >= 1.0) {
    weak_n = 0;
    clean_n = options.clean_size.value_or(max_clean);
  } else if (ratio && options.weak_size) {
    weak_n = *options.weak_size;
    clean_n = static_cast<std::size_t>(
        std::llround(*ratio * static_cast<double>(weak_n) / (1.0 - *ratio)));
  } else if (ratio && options.clean_size) {
    clean_n = *options.clean_size;
    weak_n = static_cast<std::size_t>(
        std::llround(static_cast<double>(clean_n) * (1.0 - *ratio) / *ratio));
  } else if (ratio) {
    weak_n = max_weak;
    clean_n = static_cast<std::size_t>(
        std::llround(*ratio * static_cast<double>(weak_n) / (1.0 - *ratio)));
  } else {
    clean_n = options.clean_size.value_or(max_clean);
    weak_n = options.weak_size.value_or(max_weak);
  }

  if (weak_n > max_weak) {
    throw SizingError("not enough balanced weak examples for " + std::to_string(weak_n), max_weak);
  }
  if ((clean_n + 1) / 2 > gold_pos.size() - pos_cursor || clean_n / 2 > gold_neg.size() - neg_cursor) {
    throw SizingError("not enough balanced gold examples for " + std::to_string(clean_n) + " clean",
                      max_clean);
  }

  for (auto i : take(gold_pos, pos_cursor, (clean_n + 1) / 2)) {
    ds.clean.push_back(make_example(corpus.messages()[i], true, Source::Clean));
  }
  for (auto i : take(gold_neg, neg_cursor, clean_n / 2)) {
    ds.clean.push_back(make_example(corpus.messages()[i], false, Source::Clean));
  }

  std::size_t wp = 0, wn = 0;
  for (auto i : take(weak_pos, wp, (weak_n + 1) / 2)) {
    ds.weak.push_back(make_example(corpus.messages()[i], true, Source::Weak));
  }
  for (auto i : take(weak_neg, wn, weak_n / 2)) {
    ds.weak.push_back(make_example(corpus.messages()[i], false, Source::Weak));
  }
  ds.weak_truth.assign(ds.weak.size(), -1);
  if (truth) {
    for (std::size_t j = 0; j < ds.weak.size(); ++j) {
      auto it = truth->find({ds.weak[j].id, options.intent});
      if (it != truth->end()) ds.weak_truth[j] = it->second ? 1 : 0;
    }
  }
  return ds;
}

}  // namespace mailintent
