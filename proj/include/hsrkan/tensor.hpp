#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hsrkan/errors.hpp"

namespace hsrkan {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {
struct TensorStorage {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a gradient reaches this tensor
  bool requires_grad = false;
};
}  // namespace detail

/// Dense row-major float64 array with an optional gradient buffer.
///
/// Copies share storage (handle semantics), so a tensor recorded on a tape
/// and the handle held by the caller observe the same gradient. Use clone()
/// for an independent copy.
class Tensor {
 public:
  Tensor() : s_(std::make_shared<detail::TensorStorage>()) {}

  explicit Tensor(Shape shape, double fill = 0.0) : Tensor() {
    for (auto e : shape)
      if (e == 0) throw ShapeError("tensor extents must be positive, got " + hsrkan::to_string(shape));
    s_->value.assign(numel(shape), fill);
    s_->shape = std::move(shape);
  }

  Tensor(Shape shape, std::vector<double> values) : Tensor() {
    for (auto e : shape)
      if (e == 0) throw ShapeError("tensor extents must be positive, got " + hsrkan::to_string(shape));
    if (numel(shape) != values.size())
      throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                       hsrkan::to_string(shape));
    s_->shape = std::move(shape);
    s_->value = std::move(values);
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }
  static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

  const Shape& shape() const { return s_->shape; }
  std::size_t dim(std::size_t axis) const { return s_->shape.at(axis); }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t size() const { return s_->value.size(); }
  bool empty() const { return s_->value.empty(); }

  std::span<const double> values() const { return s_->value; }
  std::span<double> mutable_values() { return s_->value; }
  const double* data() const { return s_->value.data(); }
  double* data() { return s_->value.data(); }
  double operator[](std::size_t i) const { return s_->value[i]; }

  double item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + hsrkan::to_string(shape()));
    return s_->value[0];
  }

  bool requires_grad() const { return s_->requires_grad; }
  Tensor& set_requires_grad(bool on = true) {
    s_->requires_grad = on;
    return *this;
  }

  bool has_grad() const { return !s_->grad.empty(); }
  std::span<const double> grad() const { return s_->grad; }
  // Allocates a zero gradient on first use. Const because the gradient
  // belongs to the shared storage, not to the handle.
  std::span<double> grad_buffer() const {
    if (s_->grad.empty()) s_->grad.assign(s_->value.size(), 0.0);
    return s_->grad;
  }
  void zero_grad() const { s_->grad.clear(); }

  bool all_finite() const {
    for (double v : s_->value)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

  Tensor clone() const {
    Tensor t(shape(), s_->value);
    t.s_->requires_grad = s_->requires_grad;
    return t;
  }

  // Independent copy of the values that does not track gradients.
  Tensor detached() const { return Tensor(shape(), s_->value); }

 private:
  std::shared_ptr<detail::TensorStorage> s_;
};

struct TapeEntry {
  std::string op;
  std::vector<Tensor> inputs;
  std::vector<Tensor> outputs;
  std::function<void()> backward;
};

/// Ordered record of executed differentiable ops.
///
/// Ops record themselves onto the tape installed by the innermost live
/// TapeGuard. backward() walks the record once in reverse execution order;
/// a tape is single-use until reset().
class Tape {
 public:
  void record(std::string op, std::vector<Tensor> inputs, std::vector<Tensor> outputs, std::function<void()> fn) {
    if (consumed_) throw AutogradError("recording onto a consumed tape; call reset() first");
    entries_.push_back({std::move(op), std::move(inputs), std::move(outputs), std::move(fn)});
  }

  void backward(Tensor loss) {
    if (consumed_) throw AutogradError("backward() called twice on the same tape without reset()");
    if (loss.size() != 1) throw AutogradError("backward() needs a scalar loss, got shape " + to_string(loss.shape()));
    if (!loss.requires_grad()) throw AutogradError("loss is disconnected from every parameter");
    consumed_ = true;
    loss.grad_buffer()[0] += 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      bool reached = false;
      for (const auto& out : it->outputs) reached = reached || out.has_grad();
      if (reached) it->backward();
    }
  }

  void reset() {
    entries_.clear();
    consumed_ = false;
  }

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }
  const std::vector<TapeEntry>& entries() const { return entries_; }

  // Name of the first op (in execution order) whose output is non-finite.
  std::optional<std::string> first_non_finite() const {
    for (std::size_t i = 0; i < entries_.size(); ++i)
      for (const auto& out : entries_[i].outputs)
        if (!out.all_finite()) return entries_[i].op + " (tape entry " + std::to_string(i) + ")";
    return std::nullopt;
  }

 private:
  std::vector<TapeEntry> entries_;
  bool consumed_ = false;
};

namespace detail {
inline Tape*& active_tape_slot() {
  thread_local Tape* tape = nullptr;
  return tape;
}
}  // namespace detail

inline Tape* active_tape() { return detail::active_tape_slot(); }

// Installs a tape for the current thread for the guard's lifetime.
class TapeGuard {
 public:
  explicit TapeGuard(Tape& tape) : previous_(detail::active_tape_slot()) { detail::active_tape_slot() = &tape; }
  ~TapeGuard() { detail::active_tape_slot() = previous_; }
  TapeGuard(const TapeGuard&) = delete;
  TapeGuard& operator=(const TapeGuard&) = delete;

 private:
  Tape* previous_;
};

// Suspends recording, e.g. for evaluation passes inside a training step.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::active_tape_slot()) { detail::active_tape_slot() = nullptr; }
  ~NoGradGuard() { detail::active_tape_slot() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape* previous_;
};

namespace detail {
inline bool wants_grad(std::initializer_list<const Tensor*> inputs) {
  if (active_tape() == nullptr) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

// Marks outputs as differentiable and appends the op to the active tape.
inline void record(std::string op, std::vector<Tensor> inputs, std::vector<Tensor> outputs, std::function<void()> fn) {
  for (auto& out : outputs) out.set_requires_grad(true);
  active_tape()->record(std::move(op), std::move(inputs), std::move(outputs), std::move(fn));
}
}  // namespace detail

}  // namespace hsrkan
