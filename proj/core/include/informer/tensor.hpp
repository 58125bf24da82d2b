// SPDX-License-Identifier: Apache-2.0
//
// Dense double-precision tensors and a define-by-run differentiation tape.
//
// A Tensor is a shared handle to immutable values plus an optional gradient
// buffer. Operations executed while a Tape is active on the current thread
// (see TapeScope) and touching at least one tensor that requires gradients
// are recorded; Tape::backward replays them in reverse.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace informer {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  // A leaf tensor that requires gradients.
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  // Negative axes count from the end.
  std::size_t dim(int axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  double item() const;
  double operator[](std::size_t i) const { return values()[i]; }

  // In-place access for initializers and optimizers. Never use on a tensor
  // whose value was saved by a recorded operation before backward runs.
  std::span<double> mutable_values();

  bool requires_grad() const;
  void set_requires_grad(bool on);

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();  // allocates a zero buffer on first use
  void zero_grad();

  // Fresh leaf with copied values and no gradient tracking.
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> impl_;
};

// Ordered record of differentiable operations.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  // Stores the closure that propagates output.grad into the inputs' grads.
  void record(Tensor output, BackwardFn fn);

  // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. Consumes the
  // tape: a second call without a new forward pass throws TapeError.
  void backward(const Tensor& loss);

  // Drops every entry and the intermediates they keep alive.
  void clear();

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }

 private:
  struct Entry {
    Tensor output;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
  bool consumed_ = false;
};

// Activates a tape on the current thread for the lifetime of the scope.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Suspends recording on the current thread for the lifetime of the scope.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

// True when a tape is active and any of the tensors requires gradients.
bool should_record(std::initializer_list<const Tensor*> inputs);

// Accumulates `delta` into t's gradient buffer when t requires gradients.
void accumulate_grad(const Tensor& t, std::span<const double> delta);

// Seeded generator. Identical seed and call sequence give identical samples.
class RngState {
 public:
  explicit RngState(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }
  static constexpr const char* kAlgorithm = "mt19937_64";

  double uniform(double lo, double hi);
  double normal(double mean, double stddev);
  std::size_t index(std::size_t n);  // uniform in [0, n)

  std::string serialize() const;
  static RngState deserialize(std::uint64_t seed, const std::string& state);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace informer
