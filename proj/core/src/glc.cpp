#include "mailintent/glc.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "mailintent/error.hpp"

namespace mailintent::glc {

namespace {

constexpr double kFloor = 1e-6;

void normalize_rows(std::vector<double>& e, std::size_t n) {
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += e[r * n + c];
    if (s <= 0.0) continue;
    for (std::size_t c = 0; c < n; ++c) e[r * n + c] /= s;
  }
}

bool singular(std::vector<double> a, std::size_t n) {
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r * n + col]) > std::abs(a[pivot * n + col])) pivot = r;
    }
    if (std::abs(a[pivot * n + col]) < 1e-12) return true;
    for (std::size_t c = 0; c < n; ++c) std::swap(a[col * n + c], a[pivot * n + c]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r * n + col] / a[col * n + col];
      for (std::size_t c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
    }
  }
  return false;
}

}  // namespace

CorruptionMatrix::CorruptionMatrix(std::size_t classes) : classes_(classes), entries_(classes * classes, 0.0) {
  for (std::size_t i = 0; i < classes; ++i) entries_[i * classes + i] = 1.0;
}

CorruptionMatrix::CorruptionMatrix(std::size_t classes, std::vector<double> entries)
    : classes_(classes), entries_(std::move(entries)) {
  if (entries_.size() != classes * classes) throw ShapeError("corruption matrix needs L*L entries");
}

void CorruptionMatrix::validate() const {
  if (classes_ < 2) throw ValidationError("corruption matrix needs at least two classes");
  for (std::size_t r = 0; r < classes_; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < classes_; ++c) {
      const double v = (*this)(r, c);
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
        throw ValidationError("corruption entry (" + std::to_string(r) + "," + std::to_string(c) +
                              ") outside [0,1]");
      }
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-6) throw ValidationError("corruption row " + std::to_string(r) + " does not sum to 1");
  }
  if (singular(entries_, classes_)) throw ValidationError("corruption matrix is singular");
}

CorruptionMatrix CorruptionMatrix::clamped() const {
  auto e = entries_;
  for (auto& v : e) v = std::clamp(v, kFloor, 1.0);
  normalize_rows(e, classes_);
  return CorruptionMatrix(classes_, std::move(e));
}

double CorruptionMatrix::max_abs_difference(const CorruptionMatrix& other) const {
  if (other.classes_ != classes_) throw ShapeError("corruption matrices differ in size");
  double m = 0.0;
  for (std::size_t i = 0; i < entries_.size(); ++i) m = std::max(m, std::abs(entries_[i] - other.entries_[i]));
  return m;
}

nlohmann::json to_json(const CorruptionMatrix& c) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < c.classes(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t k = 0; k < c.classes(); ++k) row.push_back(c(r, k));
    rows.push_back(std::move(row));
  }
  return {{"classes", c.classes()}, {"rows", rows}};
}

CorruptionMatrix corruption_from_json(const nlohmann::json& j) {
  const auto n = j.at("classes").get<std::size_t>();
  std::vector<double> e;
  const auto& rows = j.at("rows");
  if (rows.size() != n) throw ShapeError("corruption record row count mismatch");
  for (const auto& row : rows) {
    if (row.size() != n) throw ShapeError("corruption record column count mismatch");
    for (const auto& v : row) e.push_back(v.get<double>());
  }
  return CorruptionMatrix(n, std::move(e));
}

CorruptionMatrix estimate_corruption_matrix(std::span<const std::vector<double>> predicted,
                                            std::span<const int> labels, std::size_t classes,
                                            std::vector<std::string>* warnings) {
  if (predicted.size() != labels.size()) throw ShapeError("predictions and labels differ in length");
  std::vector<double> sums(classes * classes, 0.0);
  std::vector<std::size_t> counts(classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto l = static_cast<std::size_t>(labels[i]);
    if (labels[i] < 0 || l >= classes) throw ShapeError("label outside class range");
    if (predicted[i].size() != classes) throw ShapeError("prediction width does not match class count");
    ++counts[l];
    for (std::size_t r = 0; r < classes; ++r) sums[l * classes + r] += predicted[i][r];
  }
  for (std::size_t l = 0; l < classes; ++l) {
    if (counts[l] == 0) {
      for (std::size_t r = 0; r < classes; ++r) sums[l * classes + r] = r == l ? 1.0 : 0.0;
      if (warnings) warnings->push_back("no clean examples of class " + std::to_string(l) + "; using identity row");
      continue;
    }
    for (std::size_t r = 0; r < classes; ++r) sums[l * classes + r] /= static_cast<double>(counts[l]);
  }
  normalize_rows(sums, classes);
  return CorruptionMatrix(classes, std::move(sums));
}

CorruptionMatrix estimate_corruption_matrix(const Network& weak_model, const PreparedSet& clean,
                                            std::vector<std::string>* warnings) {
  const auto predicted = predict_all(weak_model, clean);
  std::vector<int> labels;
  labels.reserve(clean.size());
  for (const auto& ex : clean) labels.push_back(ex.label);
  return estimate_corruption_matrix(predicted, labels, weak_model.num_classes(), warnings);
}

TrainResult train_weak_model(const PreparedData& data, const TrainConfig& config) {
  if (data.weak.empty()) throw InputError("weak model needs a non-empty weak set");
  const TrainingSource source{&data.weak, 0, 1.0, {}};
  return train_supervised(Network(network_config(data), config.seed), std::span(&source, 1), data.dev, config);
}

TrainResult train_corrected_model(const PreparedData& data, const CorruptionMatrix& c, const TrainConfig& config) {
  if (c.classes() != data.num_classes) throw ShapeError("corruption matrix does not match class count");
  c.validate();
  const auto used = c.clamped();
  const TrainingSource sources[] = {{&data.clean, 0, 1.0, {}}, {&data.weak, 0, 1.0, used.entries()}};
  return train_supervised(Network(network_config(data), config.seed), sources, data.dev, config);
}

PreparedSet correct_labels(const Network& corrected_model, const PreparedSet& weak, bool hard) {
  PreparedSet out = weak;
  for (auto& ex : out) {
    auto p = corrected_model.predict_proba(ex.tokens);
    ex.label = argmax(p);
    ex.target = hard ? one_hot(ex.label, p.size()) : std::move(p);
  }
  return out;
}

GlcResult run_glc(const PreparedData& data, const GlcConfig& config) {
  GlcResult result{CorruptionMatrix(data.num_classes), train_weak_model(data, config.weak_model),
                   {Network({}, 0), std::numeric_limits<double>::quiet_NaN(), 0, {}, {}},
                   {}, {}};
  result.corruption = estimate_corruption_matrix(result.weak_model.model, data.clean, &result.warnings);
  result.corrected_model = train_corrected_model(data, result.corruption, config.corrected_model);
  result.corrected_weak = correct_labels(result.corrected_model.model, data.weak, config.hard_labels);
  return result;
}

double label_agreement(const PreparedSet& examples, std::span<const int> truth) {
  if (truth.size() != examples.size()) throw ShapeError("truth does not align with examples");
  std::size_t n = 0, hits = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (truth[i] < 0) continue;
    ++n;
    hits += examples[i].label == truth[i];
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : static_cast<double>(hits) / static_cast<double>(n);
}

void write_corrected_labels(std::ostream& out, Intent intent, const PreparedSet& corrected) {
  for (const auto& ex : corrected) {
    nlohmann::json rec{{"message_id", ex.id},
                       {"intent", std::string(intent_code(intent))},
                       {"label", ex.label == 1},
                       {"probabilities", ex.target}};
    out << rec.dump() << '\n';
  }
}

}  // namespace mailintent::glc
