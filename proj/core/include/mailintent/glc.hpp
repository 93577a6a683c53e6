#pragma once

// Gold loss correction: fit a model on weak labels, estimate how weak labels
// corrupt true ones from its predictions on the clean set, retrain with the
// corrected loss on the weak half, and relabel the weak set.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mailintent/corpus.hpp"
#include "mailintent/trainer.hpp"

namespace mailintent::glc {

/// Row l, column r approximates p(weak = r | true = l).
class CorruptionMatrix {
 public:
  CorruptionMatrix() = default;
  explicit CorruptionMatrix(std::size_t classes);  // identity
  CorruptionMatrix(std::size_t classes, std::vector<double> entries);

  static CorruptionMatrix identity(std::size_t classes) { return CorruptionMatrix(classes); }

  std::size_t classes() const noexcept { return classes_; }
  double operator()(std::size_t row, std::size_t col) const { return entries_[row * classes_ + col]; }
  const std::vector<double>& entries() const noexcept { return entries_; }

  /// Throws ValidationError unless entries are finite, in [0,1], rows sum to
  /// one within 1e-6 and the matrix is non-singular.
  void validate() const;

  /// Entries clamped to [1e-6, 1], rows renormalized.
  CorruptionMatrix clamped() const;

  double max_abs_difference(const CorruptionMatrix& other) const;

 private:
  std::size_t classes_ = 0;
  std::vector<double> entries_;
};

nlohmann::json to_json(const CorruptionMatrix& c);
CorruptionMatrix corruption_from_json(const nlohmann::json& j);

/// Row l is the mean predicted distribution over clean examples of true
/// class l. A class with no examples gets the identity row and a message in
/// `warnings`. Rows are renormalized.
CorruptionMatrix estimate_corruption_matrix(std::span<const std::vector<double>> predicted,
                                            std::span<const int> labels, std::size_t classes,
                                            std::vector<std::string>* warnings = nullptr);
CorruptionMatrix estimate_corruption_matrix(const Network& weak_model, const PreparedSet& clean,
                                            std::vector<std::string>* warnings = nullptr);

/// Cross-entropy on the weak labels only, dev-selected. Throws InputError on
/// an empty weak set.
TrainResult train_weak_model(const PreparedData& data, const TrainConfig& config);

/// Plain cross-entropy on clean examples plus the corrected loss on weak
/// examples. `c` is validated, then clamped.
TrainResult train_corrected_model(const PreparedData& data, const CorruptionMatrix& c, const TrainConfig& config);

/// Each weak input paired with the model's distribution (or its one-hot
/// argmax in hard mode).
PreparedSet correct_labels(const Network& corrected_model, const PreparedSet& weak, bool hard = false);

struct GlcConfig {
  TrainConfig weak_model;
  TrainConfig corrected_model;
  bool hard_labels = false;
};

struct GlcResult {
  CorruptionMatrix corruption;
  TrainResult weak_model;
  TrainResult corrected_model;
  PreparedSet corrected_weak;
  std::vector<std::string> warnings;
};

GlcResult run_glc(const PreparedData& data, const GlcConfig& config);

/// Fraction of examples whose argmax target matches `truth` (entries < 0
/// skipped). NaN when nothing is comparable.
double label_agreement(const PreparedSet& examples, std::span<const int> truth);

/// Mirrors the weak-label file with a probability list per record.
void write_corrected_labels(std::ostream& out, Intent intent, const PreparedSet& corrected);

}  // namespace mailintent::glc
