#include "rdsc/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace rdsc {

namespace {

thread_local Tape* g_active_tape = nullptr;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

// exp() above this overflows a double.
constexpr double kExpMax = 709.0;

std::size_t norm_axis(int axis, std::size_t rank, const char* op) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    std::ostringstream os;
    os << op << ": invalid axis " << axis << " for rank " << rank;
    throw ShapeError(os.str());
  }
  return static_cast<std::size_t>(a);
}

// Splits a shape around `axis` into (outer, n, inner) extents.
struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// Per-output-dimension strides of each operand; 0 on broadcast dimensions.
struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> sa, sb;
};

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
  BroadcastPlan p;
  p.out = broadcast_shape(a, b);
  const std::size_t r = p.out.size();
  p.sa.assign(r, 0);
  p.sb.assign(r, 0);
  const auto sta = strides_of(a);
  const auto stb = strides_of(b);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t oa = r - a.size();
    const std::size_t ob = r - b.size();
    if (i >= oa && a[i - oa] != 1) p.sa[i] = sta[i - oa];
    if (i >= ob && b[i - ob] != 1) p.sb[i] = stb[i - ob];
  }
  return p;
}

// Calls fn(out_index, a_index, b_index) for every output element.
template <typename Fn>
void for_each_broadcast(const BroadcastPlan& p, Fn&& fn) {
  const std::size_t r = p.out.size();
  const std::size_t total = shape_numel(p.out);
  if (total == 0) return;
  if (r == 0) {
    fn(0, 0, 0);
    return;
  }
  std::vector<std::size_t> idx(r, 0);
  std::size_t ia = 0, ib = 0;
  const std::size_t last = r - 1;
  const std::size_t n_last = p.out[last];
  for (std::size_t o = 0; o < total; o += n_last) {
    std::size_t a = ia, b = ib;
    for (std::size_t j = 0; j < n_last; ++j) {
      fn(o + j, a, b);
      a += p.sa[last];
      b += p.sb[last];
    }
    // advance the multi-index over all but the last dimension
    for (std::size_t d = last; d-- > 0;) {
      ++idx[d];
      ia += p.sa[d];
      ib += p.sb[d];
      if (idx[d] < p.out[d]) break;
      ia -= p.sa[d] * p.out[d];
      ib -= p.sb[d] * p.out[d];
      idx[d] = 0;
    }
  }
}

double checked_exp(double x) {
  if (x > kExpMax) {
    std::ostringstream os;
    os << "exp: argument " << x << " overflows";
    throw DomainError(os.str());
  }
  return std::exp(x);
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": undefined tensor");
}

}  // namespace

// ---------------------------------------------------------------------------

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::vector<double>& TensorImpl::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    std::ostringstream os;
    os << "Tensor::from: shape " << shape_str(shape) << " needs " << shape_numel(shape)
       << " values, got " << data.size();
    throw ShapeError(os.str());
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

Tensor Tensor::randn(Shape shape, std::mt19937_64& rng, double stddev, bool requires_grad) {
  std::normal_distribution<double> nd(0.0, stddev);
  std::vector<double> d(shape_numel(shape));
  for (auto& v : d) v = nd(rng);
  return from(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::uniform(Shape shape, std::mt19937_64& rng, double bound, bool requires_grad) {
  std::uniform_real_distribution<double> ud(-bound, bound);
  std::vector<double> d(shape_numel(shape));
  for (auto& v : d) v = ud(rng);
  return from(std::move(shape), std::move(d), requires_grad);
}

std::size_t Tensor::dim(int i) const { return shape()[norm_axis(i, rank(), "dim")]; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) throw IndexError("at: index rank does not match tensor rank");
  const auto st = strides_of(shape());
  std::size_t off = 0, d = 0;
  for (std::size_t i : index) {
    if (i >= shape()[d]) throw IndexError("at: index out of range");
    off += i * st[d++];
  }
  return impl_->data[off];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

std::vector<double> Tensor::grad() const {
  if (impl_->grad.empty()) return std::vector<double>(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.clear(); }

Tensor Tensor::detach() const { return from(shape(), impl_->data, false); }

// ---------------------------------------------------------------------------

Tape::~Tape() {
  reset();
  if (g_active_tape == this) g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

void Tape::record(const Tensor& out, BackwardFn fn) {
  out.impl()->tape_id = entries_.size();
  entries_.push_back({out.impl(), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  require_defined(loss, "backward");
  if (loss.numel() != 1) throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  auto& impl = *loss.impl();
  if (!impl.requires_grad) return;
  impl.ensure_grad()[0] += 1.0;
  if (!impl.tape_id) return;  // leaf: nothing upstream
  const std::size_t id = *impl.tape_id;
  if (id >= entries_.size() || entries_[id].out.get() != &impl)
    throw Error("backward: loss was not recorded on this tape");
  for (std::size_t i = id + 1; i-- > 0;) {
    auto& e = entries_[i];
    if (!e.out->grad.empty()) e.fn(*e.out);
  }
}

void Tape::reset() {
  for (auto& e : entries_) e.out->tape_id.reset();
  entries_.clear();
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

Tensor make_result(Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs,
                   Tape::BackwardFn fn) {
  Tensor out = Tensor::from(std::move(shape), std::move(data));
  Tape* tape = Tape::active();
  if (!tape) return out;
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.defined() && t.requires_grad(); });
  if (!needs) return out;
  out.impl()->requires_grad = true;
  tape->record(out, std::move(fn));
  return out;
}

Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<Tensor> inputs,
                   Tape::BackwardFn fn) {
  return make_result(std::move(shape), std::move(data), std::vector<Tensor>(inputs), std::move(fn));
}

void backward(const Tensor& loss) {
  Tape* tape = Tape::active();
  if (!tape) throw Error("backward: no active tape");
  tape->backward(loss);
}

// ---------------------------------------------------------------------------
// Element-wise

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1)
      throw ShapeError("cannot broadcast shapes " + shape_str(a) + " and " + shape_str(b));
    out[i] = std::max(da, db);
    if (da == 0 || db == 0) out[i] = 0;
  }
  return out;
}

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b) {
  require_defined(a, "elementwise");
  require_defined(b, "elementwise");
  const auto plan = plan_broadcast(a.shape(), b.shape());
  const auto& A = a.impl()->data;
  const auto& B = b.impl()->data;
  std::vector<double> out(shape_numel(plan.out));
  const bool same = a.shape() == b.shape();

  if (op == BinaryOp::div) {
    for (double v : B)
      if (v == 0.0) throw DomainError("div: division by zero");
  }
  auto fwd = [&](std::size_t o, std::size_t i, std::size_t j) {
    switch (op) {
      case BinaryOp::add: out[o] = A[i] + B[j]; break;
      case BinaryOp::sub: out[o] = A[i] - B[j]; break;
      case BinaryOp::mul: out[o] = A[i] * B[j]; break;
      case BinaryOp::div: out[o] = A[i] / B[j]; break;
    }
  };
  if (same) {
    for (std::size_t i = 0; i < out.size(); ++i) fwd(i, i, i);
  } else {
    for_each_broadcast(plan, fwd);
  }

  auto ai = a.impl(), bi = b.impl();
  return make_result(plan.out, std::move(out), {a, b}, [ai, bi, op, plan, same](TensorImpl& o) {
    const auto& g = o.grad;
    const auto& A = ai->data;
    const auto& B = bi->data;
    double* ga = ai->requires_grad ? ai->ensure_grad().data() : nullptr;
    double* gb = bi->requires_grad ? bi->ensure_grad().data() : nullptr;
    auto bwd = [&](std::size_t k, std::size_t i, std::size_t j) {
      const double gk = g[k];
      switch (op) {
        case BinaryOp::add:
          if (ga) ga[i] += gk;
          if (gb) gb[j] += gk;
          break;
        case BinaryOp::sub:
          if (ga) ga[i] += gk;
          if (gb) gb[j] -= gk;
          break;
        case BinaryOp::mul:
          if (ga) ga[i] += gk * B[j];
          if (gb) gb[j] += gk * A[i];
          break;
        case BinaryOp::div:
          if (ga) ga[i] += gk / B[j];
          if (gb) gb[j] -= gk * A[i] / (B[j] * B[j]);
          break;
      }
    };
    if (same) {
      for (std::size_t k = 0; k < g.size(); ++k) bwd(k, k, k);
    } else {
      for_each_broadcast(plan, bwd);
    }
  });
}

Tensor elementwise(BinaryOp op, const Tensor& a, double b) {
  require_defined(a, "elementwise");
  if (op == BinaryOp::div && b == 0.0) throw DomainError("div: division by zero");
  const auto& A = a.impl()->data;
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < A.size(); ++i) {
    switch (op) {
      case BinaryOp::add: out[i] = A[i] + b; break;
      case BinaryOp::sub: out[i] = A[i] - b; break;
      case BinaryOp::mul: out[i] = A[i] * b; break;
      case BinaryOp::div: out[i] = A[i] / b; break;
    }
  }
  auto ai = a.impl();
  return make_result(a.shape(), std::move(out), {a}, [ai, op, b](TensorImpl& o) {
    auto& ga = ai->ensure_grad();
    const double scale = op == BinaryOp::mul ? b : op == BinaryOp::div ? 1.0 / b : 1.0;
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i] * scale;
  });
}

Tensor elementwise(UnaryOp op, const Tensor& a) {
  require_defined(a, "elementwise");
  const auto& A = a.impl()->data;
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < A.size(); ++i) {
    const double x = A[i];
    switch (op) {
      case UnaryOp::neg: out[i] = -x; break;
      case UnaryOp::exp: out[i] = checked_exp(x); break;
      case UnaryOp::log:
        if (!(x > 0.0)) {
          std::ostringstream os;
          os << "log: non-positive argument " << x;
          throw DomainError(os.str());
        }
        out[i] = std::log(x);
        break;
      case UnaryOp::tanh: out[i] = std::tanh(x); break;
      case UnaryOp::sigmoid: out[i] = stable_sigmoid(x); break;
      case UnaryOp::relu: out[i] = x > 0.0 ? x : 0.0; break;
      case UnaryOp::sqrt:
        if (x < 0.0) {
          std::ostringstream os;
          os << "sqrt: negative argument " << x;
          throw DomainError(os.str());
        }
        out[i] = std::sqrt(x);
        break;
      case UnaryOp::square: out[i] = x * x; break;
    }
  }
  auto ai = a.impl();
  // Backward reads the forward output (o.data) for exp/tanh/sigmoid/sqrt.
  return make_result(a.shape(), std::move(out), {a}, [ai, op](TensorImpl& o) {
    auto& ga = ai->ensure_grad();
    const auto& X = ai->data;
    const auto& Y = o.data;
    const auto& g = o.grad;
    for (std::size_t i = 0; i < ga.size(); ++i) {
      double d = 0.0;
      switch (op) {
        case UnaryOp::neg: d = -1.0; break;
        case UnaryOp::exp: d = Y[i]; break;
        case UnaryOp::log: d = 1.0 / X[i]; break;
        case UnaryOp::tanh: d = 1.0 - Y[i] * Y[i]; break;
        case UnaryOp::sigmoid: d = Y[i] * (1.0 - Y[i]); break;
        case UnaryOp::relu: d = X[i] > 0.0 ? 1.0 : 0.0; break;
        case UnaryOp::sqrt: d = Y[i] > 0.0 ? 0.5 / Y[i] : 0.0; break;
        case UnaryOp::square: d = 2.0 * X[i]; break;
      }
      ga[i] += g[i] * d;
    }
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  auto mismatch = [&] {
    return ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  };
  if (a.rank() < 2 || b.rank() < 2) throw mismatch();
  const std::size_t m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
  if (b.dim(-2) != k) throw mismatch();

  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  out_shape.push_back(n);
  std::vector<double> out(shape_numel(out_shape));
  const auto& A = a.impl()->data;
  const auto& B = b.impl()->data;

  if (b.rank() == 2) {
    const std::size_t rows = a.numel() / k;
    MatMap(out.data(), rows, n).noalias() = ConstMatMap(A.data(), rows, k) * ConstMatMap(B.data(), k, n);
    auto ai = a.impl(), bi = b.impl();
    return make_result(std::move(out_shape), std::move(out), {a, b}, [ai, bi, rows, k, n](TensorImpl& o) {
      ConstMatMap G(o.grad.data(), rows, n);
      if (ai->requires_grad)
        MatMap(ai->ensure_grad().data(), rows, k).noalias() += G * ConstMatMap(bi->data.data(), k, n).transpose();
      if (bi->requires_grad)
        MatMap(bi->ensure_grad().data(), k, n).noalias() += ConstMatMap(ai->data.data(), rows, k).transpose() * G;
    });
  }

  if (a.rank() != b.rank() || !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin()))
    throw mismatch();
  const std::size_t batch = a.numel() / (m * k);
  for (std::size_t t = 0; t < batch; ++t)
    MatMap(out.data() + t * m * n, m, n).noalias() =
        ConstMatMap(A.data() + t * m * k, m, k) * ConstMatMap(B.data() + t * k * n, k, n);
  auto ai = a.impl(), bi = b.impl();
  return make_result(std::move(out_shape), std::move(out), {a, b}, [ai, bi, batch, m, k, n](TensorImpl& o) {
    double* ga = ai->requires_grad ? ai->ensure_grad().data() : nullptr;
    double* gb = bi->requires_grad ? bi->ensure_grad().data() : nullptr;
    for (std::size_t t = 0; t < batch; ++t) {
      ConstMatMap G(o.grad.data() + t * m * n, m, n);
      if (ga)
        MatMap(ga + t * m * k, m, k).noalias() += G * ConstMatMap(bi->data.data() + t * k * n, k, n).transpose();
      if (gb)
        MatMap(gb + t * k * n, k, n).noalias() += ConstMatMap(ai->data.data() + t * m * k, m, k).transpose() * G;
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_defined(a, "transpose");
  if (a.rank() < 2) throw ShapeError("transpose: rank < 2 for shape " + shape_str(a.shape()));
  std::vector<std::size_t> axes(a.rank());
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[a.rank() - 1], axes[a.rank() - 2]);
  return permute(a, axes);
}

Tensor reshape(const Tensor& a, Shape shape) {
  require_defined(a, "reshape");
  if (shape_numel(shape) != a.numel())
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  auto ai = a.impl();
  return make_result(std::move(shape), ai->data, {a}, [ai](TensorImpl& o) {
    auto& ga = ai->ensure_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i];
  });
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes) {
  require_defined(a, "permute");
  const std::size_t r = a.rank();
  if (axes.size() != r) throw ShapeError("permute: axes do not match rank of " + shape_str(a.shape()));
  std::vector<bool> seen(r, false);
  for (std::size_t ax : axes) {
    if (ax >= r || seen[ax]) throw ShapeError("permute: invalid axis permutation");
    seen[ax] = true;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = a.shape()[axes[i]];
  const auto in_strides = strides_of(a.shape());
  // source stride for each output dimension
  std::vector<std::size_t> src(r);
  for (std::size_t i = 0; i < r; ++i) src[i] = in_strides[axes[i]];

  const std::size_t total = a.numel();
  std::vector<std::size_t> offsets(total);
  {
    std::vector<std::size_t> idx(r, 0);
    std::size_t off = 0;
    for (std::size_t o = 0; o < total; ++o) {
      offsets[o] = off;
      for (std::size_t d = r; d-- > 0;) {
        ++idx[d];
        off += src[d];
        if (idx[d] < out_shape[d]) break;
        off -= src[d] * out_shape[d];
        idx[d] = 0;
      }
    }
  }
  const auto& A = a.impl()->data;
  std::vector<double> out(total);
  for (std::size_t o = 0; o < total; ++o) out[o] = A[offsets[o]];
  auto ai = a.impl();
  return make_result(std::move(out_shape), std::move(out), {a},
                     [ai, offsets = std::move(offsets)](TensorImpl& o) {
                       auto& ga = ai->ensure_grad();
                       for (std::size_t i = 0; i < offsets.size(); ++i) ga[offsets[i]] += o.grad[i];
                     });
}

Tensor narrow(const Tensor& a, int axis, std::size_t start, std::size_t length) {
  require_defined(a, "narrow");
  const std::size_t ax = norm_axis(axis, a.rank(), "narrow");
  if (start + length > a.shape()[ax])
    throw IndexError("narrow: range exceeds axis size in " + shape_str(a.shape()));
  const auto sp = split_at(a.shape(), ax);
  Shape out_shape = a.shape();
  out_shape[ax] = length;
  std::vector<double> out(sp.outer * length * sp.inner);
  const auto& A = a.impl()->data;
  const std::size_t block = length * sp.inner;
  for (std::size_t o = 0; o < sp.outer; ++o)
    std::copy_n(A.begin() + (o * sp.n + start) * sp.inner, block, out.begin() + o * block);
  auto ai = a.impl();
  return make_result(std::move(out_shape), std::move(out), {a}, [ai, sp, start, block](TensorImpl& o) {
    auto& ga = ai->ensure_grad();
    for (std::size_t r = 0; r < sp.outer; ++r) {
      double* dst = ga.data() + (r * sp.n + start) * sp.inner;
      const double* src = o.grad.data() + r * block;
      for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
    }
  });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  for (const auto& p : parts) require_defined(p, "concat");
  const std::size_t ax = norm_axis(axis, parts[0].rank(), "concat");
  Shape out_shape = parts[0].shape();
  out_shape[ax] = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != out_shape.size()) throw ShapeError("concat: rank mismatch");
    const std::size_t len = s[ax];
    s[ax] = 0;
    Shape ref = out_shape;
    ref[ax] = 0;
    if (s != ref)
      throw ShapeError("concat: shape " + shape_str(p.shape()) + " incompatible with " + shape_str(parts[0].shape()));
    out_shape[ax] += len;
  }
  const auto sp = split_at(out_shape, ax);
  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::size_t> starts;
  std::size_t start = 0;
  for (const auto& p : parts) {
    starts.push_back(start);
    const std::size_t len = p.shape()[ax];
    const auto& P = p.impl()->data;
    for (std::size_t o = 0; o < sp.outer; ++o)
      std::copy_n(P.begin() + o * len * sp.inner, len * sp.inner, out.begin() + (o * sp.n + start) * sp.inner);
    start += len;
  }
  std::vector<std::shared_ptr<TensorImpl>> impls;
  for (const auto& p : parts) impls.push_back(p.impl());
  return make_result(std::move(out_shape), std::move(out), parts, [impls, starts, sp, ax](TensorImpl& o) {
    for (std::size_t q = 0; q < impls.size(); ++q) {
      auto& pi = impls[q];
      if (!pi->requires_grad) continue;
      const std::size_t len = pi->shape[ax];
      auto& gp = pi->ensure_grad();
      for (std::size_t r = 0; r < sp.outer; ++r) {
        const double* src = o.grad.data() + (r * sp.n + starts[q]) * sp.inner;
        double* dst = gp.data() + r * len * sp.inner;
        for (std::size_t i = 0; i < len * sp.inner; ++i) dst[i] += src[i];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  const auto& A = a.impl()->data;
  const double s = std::accumulate(A.begin(), A.end(), 0.0);
  auto ai = a.impl();
  return make_result({}, {s}, {a}, [ai](TensorImpl& o) {
    auto& ga = ai->ensure_grad();
    for (auto& v : ga) v += o.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  require_defined(a, "mean");
  if (a.numel() == 0) throw ShapeError("mean: empty tensor");
  return sum(a) / static_cast<double>(a.numel());
}

Tensor sum_axis(const Tensor& a, int axis) {
  require_defined(a, "sum_axis");
  const std::size_t ax = norm_axis(axis, a.rank(), "sum_axis");
  const auto sp = split_at(a.shape(), ax);
  Shape out_shape = a.shape();
  out_shape[ax] = 1;
  std::vector<double> out(sp.outer * sp.inner, 0.0);
  const auto& A = a.impl()->data;
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t j = 0; j < sp.n; ++j)
      for (std::size_t i = 0; i < sp.inner; ++i) out[o * sp.inner + i] += A[(o * sp.n + j) * sp.inner + i];
  auto ai = a.impl();
  return make_result(std::move(out_shape), std::move(out), {a}, [ai, sp](TensorImpl& o) {
    auto& ga = ai->ensure_grad();
    for (std::size_t r = 0; r < sp.outer; ++r)
      for (std::size_t j = 0; j < sp.n; ++j)
        for (std::size_t i = 0; i < sp.inner; ++i) ga[(r * sp.n + j) * sp.inner + i] += o.grad[r * sp.inner + i];
  });
}

Tensor logsumexp(const Tensor& a) {
  require_defined(a, "logsumexp");
  if (a.numel() == 0) throw ShapeError("logsumexp: empty tensor");
  const auto& A = a.impl()->data;
  const double mx = *std::max_element(A.begin(), A.end());
  double s = 0.0;
  for (double v : A) s += std::exp(v - mx);
  const double y = mx + std::log(s);
  auto ai = a.impl();
  return make_result({}, {y}, {a}, [ai, y](TensorImpl& o) {
    auto& ga = ai->ensure_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[0] * std::exp(ai->data[i] - y);
  });
}

Tensor softmax(const Tensor& x, int axis) {
  require_defined(x, "softmax");
  const std::size_t ax = norm_axis(axis, x.rank(), "softmax");
  const auto sp = split_at(x.shape(), ax);
  const auto& X = x.impl()->data;
  std::vector<double> out(X.size());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.n * sp.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < sp.n; ++j) mx = std::max(mx, X[base + j * sp.inner]);
      double s = 0.0;
      for (std::size_t j = 0; j < sp.n; ++j) {
        const double e = std::exp(X[base + j * sp.inner] - mx);
        out[base + j * sp.inner] = e;
        s += e;
      }
      for (std::size_t j = 0; j < sp.n; ++j) out[base + j * sp.inner] /= s;
    }
  }
  auto xi = x.impl();
  return make_result(x.shape(), std::move(out), {x}, [xi, sp](TensorImpl& o) {
    auto& gx = xi->ensure_grad();
    const auto& Y = o.data;
    const auto& G = o.grad;
    for (std::size_t r = 0; r < sp.outer; ++r) {
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const std::size_t base = r * sp.n * sp.inner + i;
        double dot = 0.0;
        for (std::size_t j = 0; j < sp.n; ++j) dot += G[base + j * sp.inner] * Y[base + j * sp.inner];
        for (std::size_t j = 0; j < sp.n; ++j) {
          const std::size_t q = base + j * sp.inner;
          gx[q] += Y[q] * (G[q] - dot);
        }
      }
    }
  });
}

Tensor log_softmax(const Tensor& x, int axis) {
  require_defined(x, "log_softmax");
  const std::size_t ax = norm_axis(axis, x.rank(), "log_softmax");
  const auto sp = split_at(x.shape(), ax);
  const auto& X = x.impl()->data;
  std::vector<double> out(X.size());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.n * sp.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < sp.n; ++j) mx = std::max(mx, X[base + j * sp.inner]);
      double s = 0.0;
      for (std::size_t j = 0; j < sp.n; ++j) s += std::exp(X[base + j * sp.inner] - mx);
      const double lse = mx + std::log(s);
      for (std::size_t j = 0; j < sp.n; ++j) out[base + j * sp.inner] = X[base + j * sp.inner] - lse;
    }
  }
  auto xi = x.impl();
  return make_result(x.shape(), std::move(out), {x}, [xi, sp](TensorImpl& o) {
    auto& gx = xi->ensure_grad();
    const auto& Y = o.data;
    const auto& G = o.grad;
    for (std::size_t r = 0; r < sp.outer; ++r) {
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const std::size_t base = r * sp.n * sp.inner + i;
        double gs = 0.0;
        for (std::size_t j = 0; j < sp.n; ++j) gs += G[base + j * sp.inner];
        for (std::size_t j = 0; j < sp.n; ++j) {
          const std::size_t q = base + j * sp.inner;
          gx[q] += G[q] - std::exp(Y[q]) * gs;
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_defined(x, "layer_norm");
  const std::size_t n = x.dim(-1);
  if (gain.numel() != n || bias.numel() != n)
    throw ShapeError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " + shape_str(bias.shape()) +
                     " do not match last axis of " + shape_str(x.shape()));
  const std::size_t rows = x.numel() / n;
  const auto& X = x.impl()->data;
  const auto& Gn = gain.impl()->data;
  const auto& Bs = bias.impl()->data;
  std::vector<double> out(X.size());
  std::vector<double> xhat(X.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = X.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xr[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (xr[j] - mu) * inv;
      xhat[r * n + j] = h;
      out[r * n + j] = Gn[j] * h + Bs[j];
    }
  }
  auto xi = x.impl(), gi = gain.impl(), bi = bias.impl();
  return make_result(x.shape(), std::move(out), {x, gain, bias},
                     [xi, gi, bi, n, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](TensorImpl& o) {
                       const auto& G = o.grad;
                       const auto& Gn = gi->data;
                       double* gx = xi->requires_grad ? xi->ensure_grad().data() : nullptr;
                       double* gg = gi->requires_grad ? gi->ensure_grad().data() : nullptr;
                       double* gb = bi->requires_grad ? bi->ensure_grad().data() : nullptr;
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* g = G.data() + r * n;
                         const double* h = xhat.data() + r * n;
                         double m1 = 0.0, m2 = 0.0;
                         for (std::size_t j = 0; j < n; ++j) {
                           const double dh = g[j] * Gn[j];
                           m1 += dh;
                           m2 += dh * h[j];
                           if (gg) gg[j] += g[j] * h[j];
                           if (gb) gb[j] += g[j];
                         }
                         if (!gx) continue;
                         m1 /= static_cast<double>(n);
                         m2 /= static_cast<double>(n);
                         for (std::size_t j = 0; j < n; ++j)
                           gx[r * n + j] += inv_std[r] * (g[j] * Gn[j] - m1 - h[j] * m2);
                       }
                     });
}

// ---------------------------------------------------------------------------
// Indexing

Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> indices, const Shape& index_shape) {
  require_defined(table, "embedding_lookup");
  if (table.rank() != 2) throw ShapeError("embedding_lookup: table must be 2-D, got " + shape_str(table.shape()));
  if (shape_numel(index_shape) != indices.size())
    throw ShapeError("embedding_lookup: index shape " + shape_str(index_shape) + " does not match index count");
  const std::size_t rows = table.dim(0), d = table.dim(1);
  for (std::size_t i : indices) {
    if (i >= rows) {
      std::ostringstream os;
      os << "embedding_lookup: index " << i << " out of range for table with " << rows << " rows";
      throw IndexError(os.str());
    }
  }
  const auto& T = table.impl()->data;
  std::vector<double> out(indices.size() * d);
  for (std::size_t r = 0; r < indices.size(); ++r) std::copy_n(T.begin() + indices[r] * d, d, out.begin() + r * d);
  Shape out_shape = index_shape;
  out_shape.push_back(d);
  auto ti = table.impl();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return make_result(std::move(out_shape), std::move(out), {table}, [ti, idx = std::move(idx), d](TensorImpl& o) {
    auto& gt = ti->ensure_grad();
    for (std::size_t r = 0; r < idx.size(); ++r) {
      double* dst = gt.data() + idx[r] * d;
      const double* src = o.grad.data() + r * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    }
  });
}

Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> indices) {
  return embedding_lookup(table, indices, Shape{indices.size()});
}

Tensor pick_last(const Tensor& x, std::span<const std::size_t> indices) {
  require_defined(x, "pick_last");
  const std::size_t v = x.dim(-1);
  const std::size_t rows = x.numel() / v;
  if (indices.size() != rows)
    throw ShapeError("pick_last: expected " + std::to_string(rows) + " indices for " + shape_str(x.shape()));
  const auto& X = x.impl()->data;
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (indices[r] >= v) throw IndexError("pick_last: index out of range");
    out[r] = X[r * v + indices[r]];
  }
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  auto xi = x.impl();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return make_result(std::move(out_shape), std::move(out), {x}, [xi, idx = std::move(idx), v](TensorImpl& o) {
    auto& gx = xi->ensure_grad();
    for (std::size_t r = 0; r < idx.size(); ++r) gx[r * v + idx[r]] += o.grad[r];
  });
}

// ---------------------------------------------------------------------------
// Gradient checking

namespace {

double numeric_derivative(const std::function<double()>& eval, double& coord, double h, Stencil stencil) {
  const double x0 = coord;
  auto at = [&](double dx) {
    coord = x0 + dx;
    const double v = eval();
    coord = x0;
    return v;
  };
  if (stencil == Stencil::three_point) return (at(h) - at(-h)) / (2.0 * h);
  const double near = at(h) - at(-h);
  const double far = at(2 * h) - at(-2 * h);
  return (8.0 * near - far) / (12.0 * h);
}

double rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), kGradCheckFloor);
}

}  // namespace

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h, Stencil stencil) {
  Tensor xv = x.detach();
  xv.set_requires_grad(true);
  std::vector<double> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor y = f(xv);
    tape.backward(y);
    analytic = xv.grad();
  }
  NoGradScope ng;
  auto& data = xv.impl()->data;
  double worst = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double num = numeric_derivative([&] { return f(xv).item(); }, data[i], h, stencil);
    worst = std::max(worst, rel_err(analytic[i], num));
  }
  return worst;
}

double finite_diff_check_params(const std::function<Tensor()>& f, std::vector<Tensor> params, double h,
                                Stencil stencil) {
  for (auto& p : params) p.zero_grad();
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor y = f();
    tape.backward(y);
    for (auto& p : params) analytic.push_back(p.grad());
  }
  for (auto& p : params) p.zero_grad();
  NoGradScope ng;
  double worst = 0.0;
  for (std::size_t q = 0; q < params.size(); ++q) {
    auto& data = params[q].impl()->data;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double num = numeric_derivative([&] { return f().item(); }, data[i], h, stencil);
      worst = std::max(worst, rel_err(analytic[q][i], num));
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Adam

AdamState adam_init(const std::vector<Tensor>& params, AdamConfig config) {
  AdamState s;
  s.config = config;
  for (const auto& p : params) {
    s.m.emplace_back(p.numel(), 0.0);
    s.v.emplace_back(p.numel(), 0.0);
  }
  return s;
}

void adam_step(std::vector<Tensor>& params, AdamState& state) {
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw ShapeError("adam_step: optimizer state holds " + std::to_string(state.m.size()) + " buffers for " +
                     std::to_string(params.size()) + " parameters");
  for (std::size_t q = 0; q < params.size(); ++q)
    if (state.m[q].size() != params[q].numel() || state.v[q].size() != params[q].numel())
      throw ShapeError("adam_step: state buffer " + std::to_string(q) + " does not match parameter shape " +
                       shape_str(params[q].shape()));
  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t q = 0; q < params.size(); ++q) {
    auto& impl = *params[q].impl();
    const bool has_grad = !impl.grad.empty();
    auto& m = state.m[q];
    auto& v = state.v[q];
    for (std::size_t i = 0; i < impl.data.size(); ++i) {
      const double g = has_grad ? impl.grad[i] : 0.0;
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double mh = m[i] / bc1;
      const double vh = v[i] / bc2;
      impl.data[i] -= c.lr * mh / (std::sqrt(vh) + c.eps);
    }
  }
}

Adam::Adam(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)), state_(adam_init(params_, config)) {}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace rdsc
