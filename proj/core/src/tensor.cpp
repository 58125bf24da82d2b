// SPDX-License-Identifier: Apache-2.0
#include "informer/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "informer/error.hpp"

namespace informer {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, std::vector<double> values) : impl_(std::make_shared<Storage>()) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive: " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("shape " + shape_str(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t(std::move(shape), std::move(values));
  t.set_requires_grad(true);
  return t;
}

const Shape& Tensor::shape() const {
  if (!impl_) throw ShapeError("use of undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::dim(int axis) const {
  const auto r = static_cast<int>(rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw ShapeError("axis out of range");
  return shape()[static_cast<std::size_t>(a)];
}

std::size_t Tensor::numel() const { return impl_ ? impl_->values.size() : 0; }

std::span<const double> Tensor::values() const {
  if (!impl_) throw ShapeError("use of undefined tensor");
  return impl_->values;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return impl_->values[0];
}

std::span<double> Tensor::mutable_values() {
  if (!impl_) throw ShapeError("use of undefined tensor");
  return impl_->values;
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!impl_) throw ShapeError("use of undefined tensor");
  impl_->requires_grad = on;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!impl_) throw ShapeError("use of undefined tensor");
  return impl_->grad;
}

std::span<double> Tensor::mutable_grad() {
  if (!impl_) throw ShapeError("use of undefined tensor");
  if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  std::vector<double> copy(values().begin(), values().end());
  return Tensor(shape(), std::move(copy));
}

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradGuard::NoGradGuard() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradGuard::~NoGradGuard() { g_active_tape = previous_; }

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (!g_active_tape) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t && t->requires_grad(); });
}

void accumulate_grad(const Tensor& t, std::span<const double> delta) {
  if (!t.requires_grad()) return;
  Tensor handle = t;  // shares storage
  auto g = handle.mutable_grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

void Tape::record(Tensor output, BackwardFn fn) {
  if (consumed_) {
    // A new forward pass after backward starts a fresh record.
    entries_.clear();
    consumed_ = false;
  }
  output.set_requires_grad(true);
  entries_.push_back({std::move(output), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw TapeError("backward called twice without a new forward pass");
  if (entries_.empty()) throw TapeError("backward on an empty tape");
  if (loss.numel() != 1) throw TapeError("backward requires a scalar loss");
  Tensor seed = loss;
  seed.mutable_grad()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output.has_grad()) it->fn();
  }
  entries_.clear();
  consumed_ = true;
}

void Tape::clear() {
  entries_.clear();
  consumed_ = false;
}

RngState::RngState(std::uint64_t seed) : seed_(seed), engine_(seed) {}

double RngState::uniform(double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  return dist(engine_);
}

double RngState::normal(double mean, double stddev) {
  std::normal_distribution<double> dist(mean, stddev);
  return dist(engine_);
}

std::size_t RngState::index(std::size_t n) {
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(engine_);
}

std::string RngState::serialize() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

RngState RngState::deserialize(std::uint64_t seed, const std::string& state) {
  RngState rng(seed);
  std::istringstream is(state);
  is >> rng.engine_;
  if (!is) throw FormatError("corrupt RNG state");
  return rng;
}

}  // namespace informer
