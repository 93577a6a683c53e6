#pragma once

// Interaction-derived weak labeling functions and the labeling-quality audit.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mailintent/corpus.hpp"

namespace mailintent::weaklabel {

inline constexpr std::string_view kReplyWithAttachment = "reply_with_attachment";
inline constexpr std::string_view kConfirmedSchedule = "confirmed_schedule";
inline constexpr std::string_view kUrgencyReply = "urgency_reply";
inline constexpr std::string_view kDiscarded = "discarded";

struct WeakLabelAssignment {
  std::string message_id;
  Intent intent = Intent::RequestInformation;
  bool positive = false;
  /// Rule that fired, or "discarded".
  std::string provenance;

  friend bool operator==(const WeakLabelAssignment&, const WeakLabelAssignment&) = default;
};

/// Images, signatures and contact cards. Everything else, including
/// AttachmentKind::Other, counts as content.
bool is_trivial_attachment(const Attachment& attachment);

/// Case-folds, trims, and strips leading "re:", "fw:", "fwd:" prefixes
/// repeatedly.
std::string normalize_subject(std::string_view subject);

/// b is positive iff some message replies to b carrying a non-trivial
/// attachment. One assignment per message, in corpus order.
std::vector<WeakLabelAssignment> label_request_information(const Corpus& corpus);

/// a is positive iff a later calendar-linked confirmation shares a's
/// normalized subject. A confirmation is a message whose normalized subject
/// equals a calendar entry's and whose sender attends or organizes it.
std::vector<WeakLabelAssignment> label_schedule_meeting(const Corpus& corpus);

/// a is positive iff it replies to a message carrying a follow-up flag.
std::vector<WeakLabelAssignment> label_promise_action(const Corpus& corpus);

/// Dispatches to the rule for `intent`.
std::vector<WeakLabelAssignment> label_intent(const Corpus& corpus, Intent intent);

WeakLabelMap to_label_map(std::span<const WeakLabelAssignment> assignments);

// ---------------------------------------------------------------------------
// Audit

struct ConfusionCounts {
  std::int64_t true_positive = 0;   // weak positive, gold positive
  std::int64_t false_positive = 0;  // weak positive, gold negative
  std::int64_t false_negative = 0;  // weak negative, gold positive
  std::int64_t true_negative = 0;   // weak negative, gold negative

  std::int64_t total() const {
    return true_positive + false_positive + false_negative + true_negative;
  }
};

struct QualityReport {
  Intent intent = Intent::RequestInformation;
  ConfusionCounts counts;
  double accuracy = 0.0;
};

/// Confusion counts over every assignment passed in. Throws CoverageError
/// when gold lacks an evaluated id.
QualityReport evaluate_labeling(std::span<const WeakLabelAssignment> assignments,
                                const GoldMap& gold);

/// Uniformly samples `per_class` positives and `per_class` discarded
/// assignments, the way the human audit was drawn.
std::vector<WeakLabelAssignment> sample_balanced(std::span<const WeakLabelAssignment> assignments,
                                                 std::size_t per_class, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Files

void write_weak_labels(std::ostream& out, std::span<const WeakLabelAssignment> assignments);
std::vector<WeakLabelAssignment> read_weak_labels(std::istream& in);

nlohmann::json to_json(const QualityReport& report);

}  // namespace mailintent::weaklabel
