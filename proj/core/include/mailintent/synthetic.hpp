#pragma once

// Synthetic email corpora with planted intents and controllable interaction
// noise. Content and interactions are generated separately: message bodies
// carry intent cue tokens, while the reply/calendar/flag signals that the
// weak labeling functions read are flipped at the configured rates.

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>

#include "mailintent/corpus.hpp"

namespace mailintent::synthetic {

struct InteractionNoise {
  /// P(signal present | intent absent).
  double false_positive_rate = 0.0;
  /// P(signal absent | intent present).
  double false_negative_rate = 0.0;
};

/// Indexed by Intent.
template <typename T>
using PerIntent = std::array<T, 3>;

inline std::size_t slot(Intent intent) { return static_cast<std::size_t>(intent); }

struct SyntheticSpec {
  std::size_t num_threads = 1000;
  /// The first num_annotated_threads threads get gold labels on their
  /// candidate message and are kept out of the weak pool.
  std::size_t num_annotated_threads = 0;

  /// Share of threads built as a flagged-request/commitment-reply pair (the
  /// PA candidates). The rest are request threads (RI/SM candidates).
  double commitment_fraction = 0.5;
  /// P(a request thread also gets an unrelated chatter reply).
  double chatter_rate = 0.4;

  /// RI and SM priors apply to request roots, PA to commitment replies.
  PerIntent<double> priors{0.25, 0.3, 0.4};
  PerIntent<InteractionNoise> noise{};

  std::size_t background_vocab = 800;
  std::size_t cue_vocab = 200;
  std::size_t min_body_tokens = 12;
  std::size_t max_body_tokens = 30;
  std::size_t min_cues = 1;
  std::size_t max_cues = 3;
  /// Zipf exponent of cue draws; larger concentrates mass on few cues.
  double cue_skew = 0.8;
  /// P(a message without the intent still carries one of its cues).
  double cue_leak = 0.05;

  /// P(a candidate carries words of an intent's interaction topic). Topic
  /// words say nothing about the intent but raise the chance that the
  /// interaction fires without it: the false-positive rate becomes
  /// topic_lift times the base rate on topical messages and is lowered on
  /// the rest so its mean is unchanged.
  double topic_rate = 0.0;
  double topic_lift = 1.0;
  std::size_t topic_vocab = 20;

  /// Domain name salts the domain-specific vocabulary.
  std::string domain = "shared";
  /// P(a cue comes from the domain-specific bank instead of the shared one).
  double domain_cue_fraction = 0.0;
  /// Share of background vocabulary that is domain specific.
  double domain_background_fraction = 0.0;

  std::uint64_t seed = 1;

  /// Throws ValidationError for rates or priors outside [0,1] and
  /// inconsistent sizes.
  void validate() const;
};

struct SyntheticCorpus {
  /// Gold covers the candidate message of every annotated thread.
  Corpus corpus;
  /// Gold for every message and every intent; audits and oracles only.
  GoldMap truth;
};

/// Pure function of the spec: equal specs produce identical corpora.
SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

/// Precision and negative predictive value of one labeling function over all
/// messages: the two rows of the human audit table.
struct AuditTarget {
  double positive_precision = 1.0;
  double negative_precision = 1.0;

  /// Balanced-sample accuracy.
  double accuracy() const { return 0.5 * (positive_precision + negative_precision); }
};

/// Rates reported by the human audit: RI 36/99, SM 46/96, PA 31/95.
AuditTarget published_audit(Intent intent);

/// Solves for interaction noise rates so that, in expectation, each labeling
/// function hits its target precision and negative predictive value under
/// the spec's thread mix and priors. Throws ValidationError when a target is
/// unreachable.
SyntheticSpec calibrate(SyntheticSpec spec, const PerIntent<AuditTarget>& targets);

/// Expected (precision, negative precision) of each labeling function under
/// the spec.
PerIntent<AuditTarget> expected_audit(const SyntheticSpec& spec);

struct SplitSizes {
  std::size_t clean = 0;
  std::size_t weak = 0;
  std::size_t dev = 0;
  std::size_t test = 0;
};

/// Sets num_threads and num_annotated_threads so that build_dataset can
/// carve `sizes` for `intent` with a safety margin.
SyntheticSpec sized_for(SyntheticSpec spec, Intent intent, const SplitSizes& sizes,
                        double margin = 1.25);

}  // namespace mailintent::synthetic
