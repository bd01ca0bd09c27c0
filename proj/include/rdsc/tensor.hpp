#pragma once

// Dense float64 tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a cheap handle onto shared storage. Operations executed while a
// Tape is active (see TapeScope) and that touch at least one tensor with
// requires_grad() are recorded; Tape::backward() replays the record in reverse.
// Without an active tape every operation is a plain forward computation, which
// is what inference uses.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rdsc/errors.hpp"

namespace rdsc {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient flows in
  bool requires_grad = false;
  std::optional<std::size_t> tape_id;

  std::vector<double>& ensure_grad();
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev, bool requires_grad = false);
  static Tensor uniform(Shape shape, std::mt19937_64& rng, double bound, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  // Negative indices count from the back.
  std::size_t dim(int i) const;
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  std::span<double> mutable_data() { return impl_->data; }
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool has_grad() const { return !impl_->grad.empty(); }
  // Zeros of the right shape when no gradient has reached this tensor.
  std::vector<double> grad() const;
  std::span<double> mutable_grad() { return impl_->ensure_grad(); }
  void zero_grad();
  std::optional<std::size_t> tape_id() const { return impl_->tape_id; }

  // Fresh storage, no gradient link.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Computation record. One per thread may be active at a time.
class Tape {
 public:
  using BackwardFn = std::function<void(TensorImpl& out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  static Tape* active();

  void record(const Tensor& out, BackwardFn fn);
  // Propagates d(loss)/d(x) into every recorded tensor reachable from `loss`.
  // Throws ShapeError for a non-scalar loss.
  void backward(const Tensor& loss);
  void reset();
  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    std::shared_ptr<TensorImpl> out;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
};

class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
  ~TapeScope();

 private:
  Tape* previous_;
};

// Suspends recording for the current thread.
class NoGradScope {
 public:
  NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;
  ~NoGradScope();

 private:
  Tape* previous_;
};

// Builds an op result. If a tape is active and any input requires a gradient the
// result is recorded with `fn`; otherwise `fn` is dropped. Used by modules that
// define fused kernels with hand-written backward passes.
Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<Tensor> inputs,
                   Tape::BackwardFn fn);
Tensor make_result(Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs,
                   Tape::BackwardFn fn);

// Convenience: backward on the active tape.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Element-wise arithmetic. Binary operands broadcast numpy-style (shapes are
// right-aligned, each dimension equal or 1).

enum class BinaryOp { add, sub, mul, div };
enum class UnaryOp { neg, exp, log, tanh, sigmoid, relu, sqrt, square };

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b);
Tensor elementwise(BinaryOp op, const Tensor& a, double b);
Tensor elementwise(UnaryOp op, const Tensor& a);

Shape broadcast_shape(const Shape& a, const Shape& b);

inline Tensor add(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::add, a, b); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::sub, a, b); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::mul, a, b); }
inline Tensor div(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::div, a, b); }
inline Tensor neg(const Tensor& a) { return elementwise(UnaryOp::neg, a); }
inline Tensor exp(const Tensor& a) { return elementwise(UnaryOp::exp, a); }
inline Tensor log(const Tensor& a) { return elementwise(UnaryOp::log, a); }
inline Tensor tanh(const Tensor& a) { return elementwise(UnaryOp::tanh, a); }
inline Tensor sigmoid(const Tensor& a) { return elementwise(UnaryOp::sigmoid, a); }
inline Tensor relu(const Tensor& a) { return elementwise(UnaryOp::relu, a); }
inline Tensor sqrt(const Tensor& a) { return elementwise(UnaryOp::sqrt, a); }
inline Tensor square(const Tensor& a) { return elementwise(UnaryOp::square, a); }

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator+(const Tensor& a, double b) { return elementwise(BinaryOp::add, a, b); }
inline Tensor operator-(const Tensor& a, double b) { return elementwise(BinaryOp::sub, a, b); }
inline Tensor operator*(const Tensor& a, double b) { return elementwise(BinaryOp::mul, a, b); }
inline Tensor operator/(const Tensor& a, double b) { return elementwise(BinaryOp::div, a, b); }
inline Tensor operator*(double a, const Tensor& b) { return elementwise(BinaryOp::mul, b, a); }

// ---------------------------------------------------------------------------
// Linear algebra and shape manipulation.

// a: (..., m, k). b: (k, n), or (..., k, n) with batch dims equal to a's.
Tensor matmul(const Tensor& a, const Tensor& b);
// Swaps the last two axes.
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes);
Tensor narrow(const Tensor& a, int axis, std::size_t start, std::size_t length);
Tensor concat(const std::vector<Tensor>& parts, int axis);

// ---------------------------------------------------------------------------
// Reductions and normalizations.

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_axis(const Tensor& a, int axis);  // keeps the reduced axis with size 1
Tensor logsumexp(const Tensor& a);          // over all elements, scalar result
Tensor softmax(const Tensor& x, int axis);
Tensor log_softmax(const Tensor& x, int axis);
// Normalizes over the last axis: gain * (x - mean) / sqrt(var + eps) + bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-9);

// ---------------------------------------------------------------------------
// Indexing.

// Output shape is `index_shape` + [table.dim(-1)]; row i is table[indices[i]].
Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> indices,
                        const Shape& index_shape);
Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> indices);
// For x of shape (..., V) picks x[..., indices[r]] per leading row r.
Tensor pick_last(const Tensor& x, std::span<const std::size_t> indices);

// ---------------------------------------------------------------------------
// Gradient checking.

enum class Stencil { three_point, five_point };

// Denominator floor for the relative error below. Coordinates whose true
// gradient vanishes are then compared on absolute error (< floor * tol).
inline constexpr double kGradCheckFloor = 1e-5;

// Max over coordinates of |analytic - numeric| / max(|analytic| + |numeric|, floor),
// numeric being a central difference with step h. `f` must return a scalar.
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double h = 1e-5, Stencil stencil = Stencil::three_point);

// Same check against several leaf tensors that `f` closes over (parameters).
double finite_diff_check_params(const std::function<Tensor()>& f, std::vector<Tensor> params,
                                double h = 1e-5, Stencil stencil = Stencil::three_point);

// ---------------------------------------------------------------------------
// Adam.

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;
};

AdamState adam_init(const std::vector<Tensor>& params, AdamConfig config = {});
// Applies one bias-corrected Adam update using each parameter's current grad.
void adam_step(std::vector<Tensor>& params, AdamState& state);

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config = {});
  void step() { adam_step(params_, state_); }
  void zero_grad();
  const AdamState& state() const { return state_; }
  AdamState& state() { return state_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  AdamState state_;
};

}  // namespace rdsc
