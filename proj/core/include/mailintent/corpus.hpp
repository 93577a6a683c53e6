#pragma once

// Email data model, thread reconstruction, corpus ingestion and the
// labeled-split construction used by every trainer.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace mailintent {

enum class Intent { RequestInformation, ScheduleMeeting, PromiseAction };

/// "RI", "SM", "PA".
std::string_view intent_code(Intent intent);
/// Accepts the short codes and the long snake_case names.
Intent parse_intent(std::string_view text);

enum class AttachmentKind { Document, Image, Signature, Contact, Other };

std::string_view attachment_kind_name(AttachmentKind kind);
AttachmentKind parse_attachment_kind(std::string_view text);

struct Attachment {
  std::string filename;
  AttachmentKind kind = AttachmentKind::Other;

  friend bool operator==(const Attachment&, const Attachment&) = default;
};

struct EmailMessage {
  std::string id;
  std::string thread_id;
  std::string sender;
  std::vector<std::string> recipients;
  std::string subject;
  std::string body;
  std::int64_t timestamp = 0;
  std::optional<std::string> in_reply_to;
  std::vector<Attachment> attachments;
  bool follow_up_flag = false;

  friend bool operator==(const EmailMessage&, const EmailMessage&) = default;
};

struct CalendarEntry {
  std::string subject;
  std::int64_t start_time = 0;
  std::string location;
  std::vector<std::string> attendees;
  std::string organizer;

  friend bool operator==(const CalendarEntry&, const CalendarEntry&) = default;
};

/// (message id, intent) -> gold label.
using GoldMap = std::map<std::pair<std::string, Intent>, bool>;

/// A connected component of the reply graph, members ordered by
/// (timestamp, id).
struct Thread {
  std::string id;
  std::vector<std::size_t> members;
};

/// Immutable once built. Messages are kept in (thread, timestamp) order.
class Corpus {
 public:
  Corpus() = default;
  /// Validates references and reconstructs threads. Throws IntegrityError on
  /// duplicate ids, dangling in_reply_to, or a reply that does not strictly
  /// follow its parent in time and thread.
  Corpus(std::vector<EmailMessage> messages, std::vector<CalendarEntry> calendar,
         std::optional<GoldMap> gold = std::nullopt);

  const std::vector<EmailMessage>& messages() const noexcept { return messages_; }
  const std::vector<CalendarEntry>& calendar() const noexcept { return calendar_; }
  const std::optional<GoldMap>& gold() const noexcept { return gold_; }
  const std::vector<Thread>& threads() const noexcept { return threads_; }

  std::optional<std::size_t> find(std::string_view id) const;
  const EmailMessage& at(std::string_view id) const;
  /// Index of the thread containing message `index`.
  std::size_t thread_of(std::size_t index) const { return thread_of_[index]; }

  std::size_t size() const noexcept { return messages_.size(); }
  bool empty() const noexcept { return messages_.empty(); }

 private:
  std::vector<EmailMessage> messages_;
  std::vector<CalendarEntry> calendar_;
  std::optional<GoldMap> gold_;
  std::vector<Thread> threads_;
  std::vector<std::size_t> thread_of_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct CorpusPaths {
  std::filesystem::path messages;
  std::optional<std::filesystem::path> calendar;
  std::optional<std::filesystem::path> gold;
};

Corpus load_corpus(const std::filesystem::path& messages_path);
Corpus load_corpus(const CorpusPaths& paths);

std::vector<EmailMessage> read_messages(std::istream& in);
std::vector<CalendarEntry> read_calendar(std::istream& in);
GoldMap read_gold(std::istream& in);

void write_messages(std::ostream& out, const std::vector<EmailMessage>& messages);
void write_calendar(std::ostream& out, const std::vector<CalendarEntry>& calendar);
void write_gold(std::ostream& out, const GoldMap& gold);

/// Writes messages/calendar/gold files next to each other under `dir`.
CorpusPaths save_corpus(const Corpus& corpus, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Labeled splits

enum class Source { Clean, Weak, Corrected };

std::string_view source_name(Source source);

struct Example {
  std::string id;
  std::string text;
  /// Distribution over the L classes; hard labels are one-hot.
  std::vector<double> target;
  Source source = Source::Clean;

  /// Argmax of target, lowest index on ties.
  int label() const;
};

std::vector<double> one_hot(int label, std::size_t num_classes);

struct Dataset {
  std::vector<Example> clean;
  std::vector<Example> weak;
  std::vector<Example> dev;
  std::vector<Example> test;
  std::size_t num_classes = 2;
  /// Gold label per weak example (-1 when unknown). Evaluation only; no
  /// trainer reads it.
  std::vector<int> weak_truth;

  double clean_ratio() const;
};

struct DatasetOptions {
  Intent intent = Intent::RequestInformation;
  std::optional<double> clean_ratio;
  std::optional<std::size_t> clean_size;
  std::optional<std::size_t> weak_size;
  std::size_t dev_size = 0;
  std::size_t test_size = 0;
  std::uint64_t seed = 0;
  /// Draw dev/test at the gold pool's natural prevalence instead of
  /// balancing them.
  bool natural_eval_prevalence = false;
};

/// Weak labels as consumed by build_dataset: message id -> positive?
using WeakLabelMap = std::unordered_map<std::string, bool>;

/// Builds balanced, pairwise-disjoint clean/weak/dev/test splits. The gold
/// pool is every gold-covered message for the intent; the weak pool is every
/// message of a thread that holds no gold-covered message. Test is carved
/// first, then dev, then clean, so changing the clean size never perturbs the
/// evaluation splits and smaller clean sets are prefixes of larger ones.
Dataset build_dataset(const Corpus& corpus, const WeakLabelMap& weak_labels,
                      const DatasetOptions& options,
                      const GoldMap* truth = nullptr);

}  // namespace mailintent
