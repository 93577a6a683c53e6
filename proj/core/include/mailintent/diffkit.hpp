#pragma once

// Parameter storage, loss primitives, Adadelta, finite-difference gradient
// checking and checkpoints. Layers do their own backward passes; nothing
// here builds a graph.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace mailintent::diffkit {

struct ParamTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;
  std::vector<double> grad;
  /// Rows (first dimension) whose gradient may be non-zero since the last
  /// step. Only tracked for tensors marked row_sparse.
  bool row_sparse = false;
  std::vector<std::uint8_t> touched_rows;

  ParamTensor() = default;
  ParamTensor(std::string name, std::vector<std::size_t> shape, bool row_sparse = false);

  std::size_t size() const noexcept { return values.size(); }
  std::size_t rows() const noexcept { return shape.empty() ? 1 : shape.front(); }
  std::size_t row_width() const noexcept { return rows() == 0 ? 0 : size() / rows(); }

  std::span<double> row(std::size_t r) { return {values.data() + r * row_width(), row_width()}; }
  std::span<const double> row(std::size_t r) const {
    return {values.data() + r * row_width(), row_width()};
  }
  /// Gradient row; marks it touched.
  std::span<double> grad_row(std::size_t r);

  void zero_grad();
};

/// Ordered collection of named tensors. Index handles stay valid across
/// copies, so a copied store is a snapshot of the model.
class ParamStore {
 public:
  std::size_t add(std::string name, std::vector<std::size_t> shape, bool row_sparse = false);

  ParamTensor& operator[](std::size_t i) { return tensors_[i]; }
  const ParamTensor& operator[](std::size_t i) const { return tensors_[i]; }
  std::size_t size() const noexcept { return tensors_.size(); }
  std::size_t find(const std::string& name) const;

  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  void zero_grad();
  std::size_t num_values() const;
  bool all_finite() const;
  /// Copies values only; shapes must match.
  void assign_values(const ParamStore& other);

 private:
  std::vector<ParamTensor> tensors_;
};

// ---------------------------------------------------------------------------
// Losses

/// Numerically stable softmax (max-shifted).
std::vector<double> softmax(std::span<const double> logits);
void softmax_into(std::span<const double> logits, std::span<double> out);

struct LossGrad {
  double loss = 0.0;
  /// Gradient with respect to the logits that produced `predicted`.
  std::vector<double> d_logits;
};

/// -sum target_l log predicted_l. `predicted` must come from a softmax and
/// both arguments must sum to one within 1e-6 (ValidationError otherwise).
/// The gradient with respect to the logits is predicted - target.
LossGrad cross_entropy(std::span<const double> predicted, std::span<const double> target);

/// Same loss computed from logits through log-sum-exp; finite for large
/// logits.
LossGrad cross_entropy_logits(std::span<const double> logits, std::span<const double> target);

/// Loss-corrected cross-entropy -sum_r target_r log (C^T p)_r with
/// p = softmax(logits). `corruption` is row-major L x L.
LossGrad corrected_cross_entropy(std::span<const double> logits, std::span<const double> target,
                                 std::span<const double> corruption);

// ---------------------------------------------------------------------------
// Optimizers

struct AdadeltaConfig {
  double rho = 0.95;
  double epsilon = 1e-6;
  double learning_rate = 1.0;
};

/// Running averages for every tensor of a store. Row-sparse tensors are
/// updated lazily: an untouched row's averages decay by rho^k the next time
/// it is touched, which reproduces the dense recurrence exactly in real
/// arithmetic because an untouched row receives a zero update.
class Adadelta {
 public:
  explicit Adadelta(const ParamStore& params, AdadeltaConfig config = {});

  /// Applies one update from the accumulated gradients, then clears them.
  void step(ParamStore& params);

  const AdadeltaConfig& config() const noexcept { return config_; }
  const std::vector<double>& squared_grad(std::size_t tensor) const { return sq_grad_[tensor]; }
  const std::vector<double>& squared_update(std::size_t tensor) const { return sq_update_[tensor]; }
  std::int64_t steps() const noexcept { return step_; }

 private:
  void update_range(ParamTensor& t, std::size_t idx, std::size_t begin, std::size_t end, double decay_pow);

  AdadeltaConfig config_;
  std::vector<std::vector<double>> sq_grad_;
  std::vector<std::vector<double>> sq_update_;
  std::vector<std::vector<std::int64_t>> last_step_;
  std::int64_t step_ = 0;
};

/// Plain gradient descent; clears gradients.
void sgd_step(ParamStore& params, double learning_rate);

// ---------------------------------------------------------------------------
// Gradient checking

/// Evaluates the loss at the store's current values. When `with_grad` is set
/// it must also accumulate the analytic gradient into the store (gradients
/// are zeroed by the caller).
using LossFunction = std::function<double(ParamStore&, bool with_grad)>;

struct GradCheckReport {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::size_t checked = 0;
  std::string worst_tensor;
  std::size_t worst_index = 0;

  bool passed(double tolerance) const { return max_relative_error < tolerance; }
};

struct GradCheckOptions {
  double step = 1e-5;
  /// Denominator floor: |a - n| / max(|a|, |n|, floor).
  double floor = 1e-3;
  /// Check at most this many coordinates per tensor (0 = all), spread evenly.
  std::size_t max_per_tensor = 0;
};

/// Compares the analytic gradient against central differences.
GradCheckReport grad_check(const LossFunction& loss, ParamStore& params, GradCheckOptions options = {});

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout: magic "MIPS", u32 version, u64 tensor count, then per
/// tensor: u64 name length, name bytes, u64 rank, u64 dims..., f64 values in
/// row-major order. Little-endian.
void save_checkpoint(std::ostream& out, const ParamStore& params);
void save_checkpoint(const std::filesystem::path& path, const ParamStore& params);
ParamStore load_checkpoint(std::istream& in);
ParamStore load_checkpoint(const std::filesystem::path& path);

}  // namespace mailintent::diffkit
