#include "mailintent/weaklabel.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <ostream>
#include <random>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "mailintent/error.hpp"

namespace mailintent::weaklabel {

bool is_trivial_attachment(const Attachment& attachment) {
  switch (attachment.kind) {
    case AttachmentKind::Image:
    case AttachmentKind::Signature:
    case AttachmentKind::Contact:
      return true;
    case AttachmentKind::Document:
    case AttachmentKind::Other:
      return false;
  }
  return false;
}

std::string normalize_subject(std::string_view subject) {
  std::string s;
  s.reserve(subject.size());
  for (char c : subject) s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));

  auto trim = [](std::string& t) {
    auto first = t.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) {
      t.clear();
      return;
    }
    auto last = t.find_last_not_of(" \t\r\n");
    t = t.substr(first, last - first + 1);
  };

  trim(s);
  for (bool stripped = true; stripped;) {
    stripped = false;
    for (std::string_view prefix : {"re:", "fw:", "fwd:"}) {
      if (s.starts_with(prefix)) {
        s.erase(0, prefix.size());
        trim(s);
        stripped = true;
      }
    }
  }
  return s;
}

namespace {

std::vector<WeakLabelAssignment> all_discarded(const Corpus& corpus, Intent intent) {
  std::vector<WeakLabelAssignment> out;
  out.reserve(corpus.size());
  for (const auto& msg : corpus.messages()) {
    out.push_back({msg.id, intent, false, std::string(kDiscarded)});
  }
  return out;
}

void mark(WeakLabelAssignment& a, std::string_view rule) {
  a.positive = true;
  a.provenance = std::string(rule);
}

}  // namespace

std::vector<WeakLabelAssignment> label_request_information(const Corpus& corpus) {
  auto out = all_discarded(corpus, Intent::RequestInformation);
  for (const auto& msg : corpus.messages()) {
    if (!msg.in_reply_to) continue;
    const bool carries_content = std::any_of(msg.attachments.begin(), msg.attachments.end(),
                                             [](const Attachment& a) { return !is_trivial_attachment(a); });
    if (carries_content) mark(out[*corpus.find(*msg.in_reply_to)], kReplyWithAttachment);
  }
  return out;
}

std::vector<WeakLabelAssignment> label_schedule_meeting(const Corpus& corpus) {
  auto out = all_discarded(corpus, Intent::ScheduleMeeting);

  // normalized subject -> people tied to a calendar entry with that subject
  std::unordered_map<std::string, std::unordered_set<std::string>> entries;
  for (const auto& e : corpus.calendar()) {
    auto& people = entries[normalize_subject(e.subject)];
    people.insert(e.organizer);
    people.insert(e.attendees.begin(), e.attendees.end());
  }
  if (entries.empty()) return out;

  std::vector<std::string> normalized(corpus.size());
  std::unordered_map<std::string, std::int64_t> latest_confirmation;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& msg = corpus.messages()[i];
    normalized[i] = normalize_subject(msg.subject);
    auto it = entries.find(normalized[i]);
    if (it == entries.end() || !it->second.contains(msg.sender)) continue;
    auto [slot, inserted] = latest_confirmation.emplace(normalized[i], msg.timestamp);
    if (!inserted) slot->second = std::max(slot->second, msg.timestamp);
  }
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto it = latest_confirmation.find(normalized[i]);
    if (it != latest_confirmation.end() && corpus.messages()[i].timestamp < it->second) {
      mark(out[i], kConfirmedSchedule);
    }
  }
  return out;
}

std::vector<WeakLabelAssignment> label_promise_action(const Corpus& corpus) {
  auto out = all_discarded(corpus, Intent::PromiseAction);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& msg = corpus.messages()[i];
    if (msg.in_reply_to && corpus.at(*msg.in_reply_to).follow_up_flag) mark(out[i], kUrgencyReply);
  }
  return out;
}

std::vector<WeakLabelAssignment> label_intent(const Corpus& corpus, Intent intent) {
  switch (intent) {
    case Intent::RequestInformation: return label_request_information(corpus);
    case Intent::ScheduleMeeting: return label_schedule_meeting(corpus);
    case Intent::PromiseAction: return label_promise_action(corpus);
  }
  return {};
}

WeakLabelMap to_label_map(std::span<const WeakLabelAssignment> assignments) {
  WeakLabelMap out;
  out.reserve(assignments.size());
  for (const auto& a : assignments) out[a.message_id] = a.positive;
  return out;
}

QualityReport evaluate_labeling(std::span<const WeakLabelAssignment> assignments,
                                const GoldMap& gold) {
  QualityReport report;
  if (!assignments.empty()) report.intent = assignments.front().intent;
  for (const auto& a : assignments) {
    auto it = gold.find({a.message_id, a.intent});
    if (it == gold.end()) {
      throw CoverageError("no gold label for message '" + a.message_id + "' intent " +
                          std::string(intent_code(a.intent)));
    }
    const bool truth = it->second;
    auto& c = report.counts;
    if (a.positive) {
      (truth ? c.true_positive : c.false_positive) += 1;
    } else {
      (truth ? c.false_negative : c.true_negative) += 1;
    }
  }
  const auto total = report.counts.total();
  report.accuracy = total == 0 ? 0.0
                               : static_cast<double>(report.counts.true_positive +
                                                     report.counts.true_negative) /
                                     static_cast<double>(total);
  return report;
}

std::vector<WeakLabelAssignment> sample_balanced(std::span<const WeakLabelAssignment> assignments,
                                                 std::size_t per_class, std::uint64_t seed) {
  std::vector<const WeakLabelAssignment*> pos, neg;
  for (const auto& a : assignments) (a.positive ? pos : neg).push_back(&a);
  if (pos.size() < per_class || neg.size() < per_class) {
    throw SizingError("not enough assignments for a balanced audit sample",
                      std::min(pos.size(), neg.size()));
  }
  std::mt19937_64 rng(seed);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);
  std::vector<WeakLabelAssignment> out;
  out.reserve(2 * per_class);
  for (std::size_t i = 0; i < per_class; ++i) out.push_back(*pos[i]);
  for (std::size_t i = 0; i < per_class; ++i) out.push_back(*neg[i]);
  return out;
}

void write_weak_labels(std::ostream& out, std::span<const WeakLabelAssignment> assignments) {
  for (const auto& a : assignments) {
    nlohmann::json r;
    r["message_id"] = a.message_id;
    r["intent"] = intent_code(a.intent);
    r["label"] = a.positive ? 1 : 0;
    r["provenance"] = a.provenance;
    out << r.dump() << '\n';
  }
}

std::vector<WeakLabelAssignment> read_weak_labels(std::istream& in) {
  std::vector<WeakLabelAssignment> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto r = nlohmann::json::parse(line);
      out.push_back({r.at("message_id").get<std::string>(),
                     parse_intent(r.at("intent").get<std::string>()), r.at("label").get<int>() == 1,
                     r.value("provenance", std::string(kDiscarded))});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), line_no);
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return out;
}

nlohmann::json to_json(const QualityReport& report) {
  const auto& c = report.counts;
  return {{"intent", intent_code(report.intent)},
          {"true_positive", c.true_positive},
          {"false_positive", c.false_positive},
          {"false_negative", c.false_negative},
          {"true_negative", c.true_negative},
          {"accuracy", report.accuracy}};
}

}  // namespace mailintent::weaklabel
