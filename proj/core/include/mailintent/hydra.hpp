#pragma once

// The dual-headed model: one encoder, a clean head and a weak head, trained
// jointly with self-paced selection of weak examples.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mailintent/diffkit.hpp"
#include "mailintent/network.hpp"
#include "mailintent/trainer.hpp"

namespace mailintent::hydra {

inline constexpr std::size_t kCleanHead = 0;
inline constexpr std::size_t kWeakHead = 1;

/// 0.1, 0.2, ..., 3.0
std::vector<double> default_lambda_schedule();

struct HydraConfig {
  double alpha = 1.0;
  std::vector<double> lambda_schedule = default_lambda_schedule();
  std::size_t epochs_per_stage = 10;
  std::size_t warmup_epochs = 5;
  /// During warmup the clean batches also train the weak head, so the first
  /// selection ranks weak examples by fit to a clean-trained weak head
  /// rather than an untrained one.
  bool warmup_both_heads = true;
  /// End the schedule after the first stage that admits every weak example.
  bool stop_when_all_selected = true;
  /// m: each batch holds m clean and m selected weak examples.
  std::size_t batch_half = 16;
  /// Stop after this many stages without a dev improvement; 0 disables.
  std::size_t patience = 3;
  diffkit::AdadeltaConfig optimizer;
  std::uint64_t seed = 1;

  /// Throws ValidationError for alpha <= 0, a schedule that is empty or not
  /// strictly increasing, or m = 0.
  void validate() const;
};

struct DualLoss {
  double total = 0.0;
  double clean = 0.0;
  double weak = 0.0;
};

/// mean clean cross-entropy through the clean head plus alpha times mean
/// weak cross-entropy through the weak head. Accumulates gradients when
/// `with_grad` is set. Either batch may be empty (its term is then zero).
DualLoss dual_loss(Network& model, std::span<const PreparedExample* const> clean,
                   std::span<const PreparedExample* const> weak, double alpha, bool with_grad);

/// v_j = 1 iff alpha * loss_j < lambda, the minimizer of
/// sum_j v_j (alpha * loss_j - lambda).
std::vector<std::uint8_t> select_weak(std::span<const double> losses, double lambda, double alpha);

/// The v-dependent part of the self-paced objective:
/// sum_j v_j (alpha * loss_j - lambda).
double selection_objective(std::span<const double> losses, std::span<const std::uint8_t> v, double lambda,
                           double alpha);

/// Full self-paced objective on a training set: mean clean loss plus
/// (1/N) sum_j v_j (alpha * weak loss_j - lambda).
double self_paced_objective(const Network& model, const PreparedSet& clean, const PreparedSet& weak,
                            std::span<const std::uint8_t> v, double lambda, double alpha);

/// Weak-head loss of each weak example against its (corrected) target.
std::vector<double> weak_losses(const Network& model, const PreparedSet& weak);

struct StageRecord {
  /// 0 for warmup.
  std::size_t stage = 0;
  double lambda = std::numeric_limits<double>::quiet_NaN();
  std::size_t selected = 0;
  double train_loss = 0.0;
  double dev_accuracy = std::numeric_limits<double>::quiet_NaN();
};

nlohmann::json to_json(const StageRecord& record);

struct HydraResult {
  Network model;
  double dev_accuracy = std::numeric_limits<double>::quiet_NaN();
  double alpha = 1.0;
  std::vector<StageRecord> log;
  std::vector<std::uint8_t> final_selection;
  std::vector<std::string> warnings;
};

/// Warmup on clean only, then alternate between selecting weak examples at
/// the current lambda and descending on batches of m clean (drawn with
/// replacement) plus m selected weak. Returns the dev-best parameters.
/// `weak` carries the targets used by both the weak loss and the selection,
/// normally the corrected labels. Throws InputError on an empty clean set.
HydraResult train_self_paced(const PreparedData& data, const PreparedSet& weak, const HydraConfig& config);

/// Runs train_self_paced once per alpha and keeps the best dev accuracy
/// (earliest alpha on ties).
HydraResult train_with_alpha_grid(const PreparedData& data, const PreparedSet& weak, HydraConfig config,
                                  std::span<const double> alphas);

struct Prediction {
  int label = 0;
  std::vector<double> distribution;
};

/// Clean-head prediction; the weak head is unused at inference.
Prediction predict(const Network& model, const encoder::TokenSequence& seq);

}  // namespace mailintent::hydra
