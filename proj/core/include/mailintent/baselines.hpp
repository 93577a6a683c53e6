#pragma once

// The comparison trainers, the dual-headed method, and repeated-seed runs
// over them.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mailintent/glc.hpp"
#include "mailintent/hydra.hpp"
#include "mailintent/trainer.hpp"

namespace mailintent::baselines {

enum class BaselineKind { Clean, Weak, CleanPlusWeak, PreWeak, IWT, GLC };

inline constexpr std::array<BaselineKind, 6> kAllBaselines = {
    BaselineKind::Clean, BaselineKind::Weak, BaselineKind::CleanPlusWeak,
    BaselineKind::PreWeak, BaselineKind::IWT, BaselineKind::GLC};

std::string_view baseline_name(BaselineKind kind);

/// A baseline kind or the dual-headed self-paced model.
class Method {
 public:
  static Method hydra() { return Method(std::nullopt); }
  static Method of(BaselineKind kind) { return Method(kind); }
  /// Accepts the names printed by name(), case-insensitively.
  static Method parse(std::string_view text);
  static std::vector<Method> all();

  bool is_hydra() const noexcept { return !kind_; }
  BaselineKind kind() const { return kind_.value(); }
  std::string name() const;

  bool operator==(const Method&) const = default;

 private:
  explicit Method(std::optional<BaselineKind> kind) : kind_(kind) {}
  std::optional<BaselineKind> kind_;
};

struct IWTConfig {
  double clean_weight = 10.0;  // u
  double weak_weight = 1.0;    // v
  double alpha = 1.0;
};

struct MethodConfig {
  /// Every supervised phase: weak model, corrected model, and the baselines.
  TrainConfig train;
  /// Weak-phase epochs for PreWeak; unset means train.epochs.
  std::optional<std::size_t> pretrain_epochs;
  IWTConfig iwt;
  /// Corrected labels as one-hot argmax instead of distributions.
  bool hard_labels = false;
  hydra::HydraConfig hydra;
  /// Dev-selected alpha grid for the dual-headed model; empty keeps
  /// hydra.alpha.
  std::vector<double> alpha_grid;
  /// Ablations of the dual-headed model.
  bool hydra_label_correction = true;
  bool hydra_self_paced = true;
};

struct RunMetrics {
  std::string method;
  std::string encoder;
  double clean_ratio = 0.0;
  std::uint64_t seed = 0;
  double dev_accuracy = 0.0;
  double test_accuracy = 0.0;
  /// Weak-loss weight used (dual-headed and IWT runs).
  std::optional<double> alpha;
  std::optional<glc::CorruptionMatrix> corruption;
};

nlohmann::json to_json(const RunMetrics& m);

struct RunResult {
  Network model;
  RunMetrics metrics;
  std::vector<std::string> warnings;
  /// Stage log of the dual-headed model.
  std::vector<hydra::StageRecord> stages;
};

/// Trains one method with `seed` and evaluates it on dev and test. Throws
/// InputError when the method needs a split that is empty.
RunResult train_method(const Method& method, const PreparedData& data, const MethodConfig& config,
                       std::uint64_t seed);

RunResult train_baseline(BaselineKind kind, const PreparedData& data, const MethodConfig& config,
                         std::uint64_t seed);

struct RepeatedMetrics {
  std::vector<RunMetrics> runs;
  double mean_dev_accuracy = 0.0;
  double mean_test_accuracy = 0.0;
};

/// One run per seed on the same data, plus arithmetic means.
RepeatedMetrics run_repeated(const Method& method, const PreparedData& data, const MethodConfig& config,
                             std::span<const std::uint64_t> seeds);

/// The self-paced ablation: every weak example admitted at every stage,
/// keeping the stage count and epochs.
std::vector<double> saturated_schedule(std::size_t stages);

}  // namespace mailintent::baselines
