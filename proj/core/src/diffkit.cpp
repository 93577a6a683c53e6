#include "mailintent/diffkit.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>

#include "mailintent/error.hpp"

namespace mailintent::diffkit {

ParamTensor::ParamTensor(std::string n, std::vector<std::size_t> s, bool sparse)
    : name(std::move(n)), shape(std::move(s)), row_sparse(sparse) {
  const std::size_t count =
      std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  values.assign(count, 0.0);
  grad.assign(count, 0.0);
  if (row_sparse) touched_rows.assign(rows(), 0);
}

std::span<double> ParamTensor::grad_row(std::size_t r) {
  if (row_sparse) touched_rows[r] = 1;
  return {grad.data() + r * row_width(), row_width()};
}

void ParamTensor::zero_grad() {
  if (row_sparse) {
    const std::size_t w = row_width();
    for (std::size_t r = 0; r < touched_rows.size(); ++r) {
      if (!touched_rows[r]) continue;
      std::fill_n(grad.begin() + static_cast<std::ptrdiff_t>(r * w), w, 0.0);
      touched_rows[r] = 0;
    }
  } else {
    std::fill(grad.begin(), grad.end(), 0.0);
  }
}

std::size_t ParamStore::add(std::string name, std::vector<std::size_t> shape, bool row_sparse) {
  tensors_.emplace_back(std::move(name), std::move(shape), row_sparse);
  return tensors_.size() - 1;
}

std::size_t ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].name == name) return i;
  }
  throw ShapeError("no parameter tensor named '" + name + "'");
}

void ParamStore::zero_grad() {
  for (auto& t : tensors_) t.zero_grad();
}

std::size_t ParamStore::num_values() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

bool ParamStore::all_finite() const {
  for (const auto& t : tensors_) {
    for (double v : t.values) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

void ParamStore::assign_values(const ParamStore& other) {
  if (other.tensors_.size() != tensors_.size()) throw ShapeError("parameter stores differ in layout");
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (other.tensors_[i].shape != tensors_[i].shape) {
      throw ShapeError("shape mismatch for '" + tensors_[i].name + "'");
    }
    tensors_[i].values = other.tensors_[i].values;
  }
}

// ---------------------------------------------------------------------------
// Losses

void softmax_into(std::span<const double> logits, std::span<double> out) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    total += out[i];
  }
  for (auto& v : out) v /= total;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (!logits.empty()) softmax_into(logits, out);
  return out;
}

namespace {

void check_distribution(std::span<const double> p, const char* what) {
  double total = 0.0;
  for (double v : p) {
    if (v < -1e-12 || !std::isfinite(v)) throw ValidationError(std::string(what) + " has a negative or non-finite entry");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw ValidationError(std::string(what) + " sums to " + std::to_string(total) + ", not 1");
  }
}

}  // namespace

LossGrad cross_entropy(std::span<const double> predicted, std::span<const double> target) {
  if (predicted.size() != target.size()) throw ShapeError("cross_entropy: class count mismatch");
  check_distribution(predicted, "predicted distribution");
  check_distribution(target, "target distribution");
  LossGrad out;
  out.d_logits.resize(predicted.size());
  for (std::size_t l = 0; l < predicted.size(); ++l) {
    if (target[l] > 0.0) out.loss -= target[l] * std::log(predicted[l]);
    out.d_logits[l] = predicted[l] - target[l];
  }
  return out;
}

LossGrad cross_entropy_logits(std::span<const double> logits, std::span<const double> target) {
  if (logits.size() != target.size()) throw ShapeError("cross_entropy: class count mismatch");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - mx);
  const double log_norm = mx + std::log(total);
  LossGrad out;
  out.d_logits.resize(logits.size());
  double target_mass = 0.0;
  for (std::size_t l = 0; l < logits.size(); ++l) {
    const double log_p = logits[l] - log_norm;
    if (target[l] != 0.0) out.loss -= target[l] * log_p;
    target_mass += target[l];
    out.d_logits[l] = std::exp(log_p);
  }
  // d/dz of -sum t log softmax(z) = (sum t) p - t
  for (std::size_t l = 0; l < logits.size(); ++l) out.d_logits[l] = target_mass * out.d_logits[l] - target[l];
  return out;
}

LossGrad corrected_cross_entropy(std::span<const double> logits, std::span<const double> target,
                                 std::span<const double> corruption) {
  const std::size_t L = logits.size();
  if (target.size() != L || corruption.size() != L * L) throw ShapeError("corrected_cross_entropy: shape mismatch");
  const auto p = softmax(logits);
  // q = C^T p, q_r = sum_l p_l C_lr
  std::vector<double> q(L, 0.0);
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t r = 0; r < L; ++r) q[r] += p[l] * corruption[l * L + r];
  }
  LossGrad out;
  std::vector<double> dq(L, 0.0);
  for (std::size_t r = 0; r < L; ++r) {
    if (target[r] == 0.0) continue;
    out.loss -= target[r] * std::log(q[r]);
    dq[r] = -target[r] / q[r];
  }
  // dp_l = sum_r C_lr dq_r; then through the softmax Jacobian.
  std::vector<double> dp(L, 0.0);
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t r = 0; r < L; ++r) dp[l] += corruption[l * L + r] * dq[r];
  }
  double inner = 0.0;
  for (std::size_t l = 0; l < L; ++l) inner += p[l] * dp[l];
  out.d_logits.resize(L);
  for (std::size_t l = 0; l < L; ++l) out.d_logits[l] = p[l] * (dp[l] - inner);
  return out;
}

// ---------------------------------------------------------------------------
// Optimizers

Adadelta::Adadelta(const ParamStore& params, AdadeltaConfig config) : config_(config) {
  for (const auto& t : params) {
    sq_grad_.emplace_back(t.size(), 0.0);
    sq_update_.emplace_back(t.size(), 0.0);
    last_step_.emplace_back(t.row_sparse ? t.rows() : 0, 0);
  }
}

void Adadelta::update_range(ParamTensor& t, std::size_t idx, std::size_t begin, std::size_t end,
                            double decay_pow) {
  const double rho = config_.rho, eps = config_.epsilon, lr = config_.learning_rate;
  auto& eg = sq_grad_[idx];
  auto& ex = sq_update_[idx];
  for (std::size_t i = begin; i < end; ++i) {
    const double g = t.grad[i];
    eg[i] = decay_pow * eg[i];
    ex[i] = decay_pow * ex[i];
    eg[i] = rho * eg[i] + (1.0 - rho) * g * g;
    const double dx = -std::sqrt(ex[i] + eps) / std::sqrt(eg[i] + eps) * g;
    ex[i] = rho * ex[i] + (1.0 - rho) * dx * dx;
    t.values[i] += lr * dx;
    t.grad[i] = 0.0;
  }
}

void Adadelta::step(ParamStore& params) {
  if (params.size() != sq_grad_.size()) throw ShapeError("optimizer state does not match parameters");
  ++step_;
  for (std::size_t idx = 0; idx < params.size(); ++idx) {
    auto& t = params[idx];
    if (!t.row_sparse) {
      update_range(t, idx, 0, t.size(), 1.0);
      continue;
    }
    const std::size_t w = t.row_width();
    auto& last = last_step_[idx];
    for (std::size_t r = 0; r < t.rows(); ++r) {
      if (!t.touched_rows[r]) continue;
      const auto idle = step_ - 1 - last[r];
      const double decay = idle == 0 ? 1.0 : std::pow(config_.rho, static_cast<double>(idle));
      update_range(t, idx, r * w, (r + 1) * w, decay);
      last[r] = step_;
      t.touched_rows[r] = 0;
    }
  }
}

void sgd_step(ParamStore& params, double learning_rate) {
  for (auto& t : params) {
    for (std::size_t i = 0; i < t.size(); ++i) t.values[i] -= learning_rate * t.grad[i];
    t.zero_grad();
  }
}

// ---------------------------------------------------------------------------
// Gradient checking

GradCheckReport grad_check(const LossFunction& loss, ParamStore& params, GradCheckOptions options) {
  params.zero_grad();
  loss(params, true);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& t : params) analytic.push_back(t.grad);
  params.zero_grad();

  GradCheckReport report;
  for (std::size_t ti = 0; ti < params.size(); ++ti) {
    auto& t = params[ti];
    const std::size_t n = t.size();
    const std::size_t stride =
        options.max_per_tensor == 0 || n <= options.max_per_tensor ? 1 : n / options.max_per_tensor;
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = t.values[i];
      t.values[i] = saved + options.step;
      const double up = loss(params, false);
      t.values[i] = saved - options.step;
      const double down = loss(params, false);
      t.values[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[ti][i];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), options.floor});
      ++report.checked;
      report.max_absolute_error = std::max(report.max_absolute_error, abs_err);
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_tensor = t.name;
        report.worst_index = i;
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[4] = {'M', 'I', 'P', 'S'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian hosts");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw ParseError("truncated checkpoint", 0);
  return v;
}

}  // namespace

void save_checkpoint(std::ostream& out, const ParamStore& params) {
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, params.size());
  for (const auto& t : params) {
    put<std::uint64_t>(out, t.name.size());
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint64_t>(out, t.shape.size());
    for (auto d : t.shape) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.values.data()),
              static_cast<std::streamsize>(t.values.size() * sizeof(double)));
  }
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  save_checkpoint(out, params);
}

ParamStore load_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw ParseError("not a checkpoint file", 0);
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  }
  ParamStore store;
  const auto count = get<std::uint64_t>(in);
  for (std::uint64_t k = 0; k < count; ++k) {
    std::string name(get<std::uint64_t>(in), '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(name.size()))) throw ParseError("truncated checkpoint", 0);
    std::vector<std::size_t> shape(get<std::uint64_t>(in));
    for (auto& d : shape) d = get<std::uint64_t>(in);
    auto& t = store[store.add(std::move(name), std::move(shape))];
    if (!in.read(reinterpret_cast<char*>(t.values.data()),
                 static_cast<std::streamsize>(t.values.size() * sizeof(double)))) {
      throw ParseError("truncated checkpoint", 0);
    }
  }
  return store;
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  return load_checkpoint(in);
}

}  // namespace mailintent::diffkit
