#pragma once

// Dense tensors with reverse-mode automatic differentiation on an explicit
// tape, plus the Adam optimizer and a finite-difference gradient checker.
// Training runs in float; gradient checks instantiate the same code in double.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace dbgfqn {

using Shape = std::vector<int>;

inline long numel(const Shape& s) {
  long n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct GradError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateMaskError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename T>
class Tape;

template <typename T>
struct TensorStorage {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool tracked = false;  // produced by a recorded op on some tape
};

template <typename T>
class Tensor {
 public:
  using Storage = TensorStorage<T>;
  using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MapM = Eigen::Map<MatRM>;
  using CMapM = Eigen::Map<const MatRM>;

  Tensor() = default;

  static Tensor zeros(Shape shape) {
    Tensor t;
    t.s_ = std::make_shared<Storage>();
    t.s_->shape = std::move(shape);
    t.s_->values.assign(numel(t.s_->shape), T(0));
    return t;
  }
  static Tensor full(Shape shape, T v) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.s_->values.begin(), t.s_->values.end(), v);
    return t;
  }
  static Tensor from(Shape shape, std::vector<T> values) {
    if (numel(shape) != static_cast<long>(values.size()))
      throw DimensionError("tensor data length " + std::to_string(values.size()) +
                           " does not match shape " + shape_str(shape));
    Tensor t;
    t.s_ = std::make_shared<Storage>();
    t.s_->shape = std::move(shape);
    t.s_->values = std::move(values);
    return t;
  }
  static Tensor scalar(T v) { return from({1}, {v}); }

  bool defined() const { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  long size() const { return static_cast<long>(s_->values.size()); }
  int dim(int i) const { return s_->shape[i]; }
  int rank() const { return static_cast<int>(s_->shape.size()); }

  std::vector<T>& values() { return s_->values; }
  const std::vector<T>& values() const { return s_->values; }
  T item() const {
    if (size() != 1) throw DimensionError("item() on non-scalar tensor " + shape_str(shape()));
    return s_->values[0];
  }

  bool requires_grad() const { return s_->requires_grad; }
  Tensor& set_requires_grad(bool f) {
    s_->requires_grad = f;
    return *this;
  }
  bool tracked() const { return s_->tracked || s_->requires_grad; }
  void mark_tracked() { s_->tracked = true; }

  bool has_grad() const { return !s_->grad.empty(); }
  std::vector<T>& grad() {
    if (s_->grad.empty()) throw GradError("gradient not populated");
    return s_->grad;
  }
  const std::vector<T>& grad() const {
    if (s_->grad.empty()) throw GradError("gradient not populated");
    return s_->grad;
  }
  std::vector<T>& ensure_grad() {
    if (s_->grad.empty()) s_->grad.assign(s_->values.size(), T(0));
    return s_->grad;
  }
  void zero_grad() {
    if (!s_->grad.empty()) std::fill(s_->grad.begin(), s_->grad.end(), T(0));
  }
  void drop_grad() { s_->grad.clear(); }

  // 2-d Eigen views; tensors of other ranks pass explicit extents.
  MapM mat() {
    check2d();
    return MapM(s_->values.data(), s_->shape[0], s_->shape[1]);
  }
  CMapM mat() const {
    check2d();
    return CMapM(s_->values.data(), s_->shape[0], s_->shape[1]);
  }
  MapM grad_mat() {
    check2d();
    ensure_grad();
    return MapM(s_->grad.data(), s_->shape[0], s_->shape[1]);
  }

  bool same_storage(const Tensor& o) const { return s_ == o.s_; }

 private:
  void check2d() const {
    if (s_->shape.size() != 2) throw DimensionError("expected rank-2 tensor, got " + shape_str(shape()));
  }
  std::shared_ptr<Storage> s_;
};

// ---------------------------------------------------------------------------
// Tape

template <typename T>
class Tape {
 public:
  Tape() { stack().push_back(this); }
  ~Tape() { stack().pop_back(); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() {
    if (stack().empty() || suppressed() > 0) return nullptr;
    return stack().back();
  }

  void record(Tensor<T> output, std::function<void()> backward) {
    output.mark_tracked();
    ops_.push_back({std::move(output), std::move(backward)});
  }

  size_t node_count() const { return ops_.size(); }

  void backward(Tensor<T>& loss) {
    if (consumed_) throw TapeError("tape already consumed by a previous backward pass");
    if (loss.size() != 1) throw TapeError("backward requires a scalar loss, got " + shape_str(loss.shape()));
    consumed_ = true;
    loss.ensure_grad()[0] += T(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
      if (it->output.has_grad()) it->backward();
    }
  }

  static int& suppressed() {
    static thread_local int n = 0;
    return n;
  }

 private:
  struct Node {
    Tensor<T> output;
    std::function<void()> backward;
  };
  static std::vector<Tape*>& stack() {
    static thread_local std::vector<Tape*> s;
    return s;
  }
  std::vector<Node> ops_;
  bool consumed_ = false;
};

// Temporarily disables recording (target-network forwards, TD targets).
template <typename T>
struct NoGrad {
  NoGrad() { ++Tape<T>::suppressed(); }
  ~NoGrad() { --Tape<T>::suppressed(); }
};

template <typename T>
void backward(Tensor<T>& loss) {
  Tape<T>* t = Tape<T>::active();
  if (!t) throw TapeError("backward called with no active tape");
  t->backward(loss);
}

namespace detail {

template <typename T>
inline void debug_check_finite(const Tensor<T>& t, const char* op) {
#ifndef NDEBUG
  for (T v : t.values()) {
    if (!std::isfinite(static_cast<double>(v)))
      throw std::runtime_error(std::string("non-finite value produced by ") + op);
  }
#else
  (void)t;
  (void)op;
#endif
}

template <typename T, typename Backward>
inline void maybe_record(bool any_tracked, Tensor<T> out, Backward&& b) {
  Tape<T>* tape = Tape<T>::active();
  if (tape && any_tracked) tape->record(std::move(out), std::forward<Backward>(b));
}

template <typename T>
inline void axpy(std::vector<T>& dst, const std::vector<T>& src) {
  for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitive operations

template <typename T>
Tensor<T> matmul(Tensor<T> a, Tensor<T> b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out = Tensor<T>::zeros({a.dim(0), b.dim(1)});
  out.mat().noalias() = a.mat() * b.mat();
  detail::debug_check_finite(out, "matmul");
  detail::maybe_record<T>(a.tracked() || b.tracked(), out, [a, b, out]() mutable {
    auto g = out.grad_mat();
    if (a.tracked()) a.grad_mat().noalias() += g * b.mat().transpose();
    if (b.tracked()) b.grad_mat().noalias() += a.mat().transpose() * g;
  });
  return out;
}

// a * b^T without materializing the transpose.
template <typename T>
Tensor<T> matmul_nt(Tensor<T> a, Tensor<T> b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
    throw DimensionError("matmul_nt shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out = Tensor<T>::zeros({a.dim(0), b.dim(0)});
  out.mat().noalias() = a.mat() * b.mat().transpose();
  detail::debug_check_finite(out, "matmul_nt");
  detail::maybe_record<T>(a.tracked() || b.tracked(), out, [a, b, out]() mutable {
    auto g = out.grad_mat();
    if (a.tracked()) a.grad_mat().noalias() += g * b.mat();
    if (b.tracked()) b.grad_mat().noalias() += g.transpose() * a.mat();
  });
  return out;
}

template <typename T>
Tensor<T> add(Tensor<T> a, Tensor<T> b) {
  if (a.shape() != b.shape())
    throw DimensionError("add shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  for (long i = 0; i < a.size(); ++i) out.values()[i] = a.values()[i] + b.values()[i];
  detail::maybe_record<T>(a.tracked() || b.tracked(), out, [a, b, out]() mutable {
    const auto& g = out.grad();
    if (a.tracked()) detail::axpy(a.ensure_grad(), g);
    if (b.tracked()) detail::axpy(b.ensure_grad(), g);
  });
  return out;
}

template <typename T>
Tensor<T> sub(Tensor<T> a, Tensor<T> b) {
  if (a.shape() != b.shape())
    throw DimensionError("sub shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  for (long i = 0; i < a.size(); ++i) out.values()[i] = a.values()[i] - b.values()[i];
  detail::maybe_record<T>(a.tracked() || b.tracked(), out, [a, b, out]() mutable {
    const auto& g = out.grad();
    if (a.tracked()) detail::axpy(a.ensure_grad(), g);
    if (b.tracked()) {
      auto& bg = b.ensure_grad();
      for (size_t i = 0; i < bg.size(); ++i) bg[i] -= g[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> mul(Tensor<T> a, Tensor<T> b) {
  if (a.shape() != b.shape())
    throw DimensionError("mul shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  for (long i = 0; i < a.size(); ++i) out.values()[i] = a.values()[i] * b.values()[i];
  detail::maybe_record<T>(a.tracked() || b.tracked(), out, [a, b, out]() mutable {
    const auto& g = out.grad();
    if (a.tracked()) {
      auto& ag = a.ensure_grad();
      for (size_t i = 0; i < ag.size(); ++i) ag[i] += g[i] * b.values()[i];
    }
    if (b.tracked()) {
      auto& bg = b.ensure_grad();
      for (size_t i = 0; i < bg.size(); ++i) bg[i] += g[i] * a.values()[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> scale(Tensor<T> a, T c) {
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  for (long i = 0; i < a.size(); ++i) out.values()[i] = a.values()[i] * c;
  detail::maybe_record<T>(a.tracked(), out, [a, c, out]() mutable {
    const auto& g = out.grad();
    auto& ag = a.ensure_grad();
    for (size_t i = 0; i < ag.size(); ++i) ag[i] += g[i] * c;
  });
  return out;
}

// Adds a length-C bias to every row of an R x C matrix.
template <typename T>
Tensor<T> add_bias(Tensor<T> x, Tensor<T> bias) {
  if (x.rank() != 2 || bias.rank() != 1 || bias.dim(0) != x.dim(1))
    throw DimensionError("add_bias shape mismatch: " + shape_str(x.shape()) + " vs " + shape_str(bias.shape()));
  const int rows = x.dim(0), cols = x.dim(1);
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out.values()[r * cols + c] = x.values()[r * cols + c] + bias.values()[c];
  detail::maybe_record<T>(x.tracked() || bias.tracked(), out, [x, bias, out, rows, cols]() mutable {
    const auto& g = out.grad();
    if (x.tracked()) detail::axpy(x.ensure_grad(), g);
    if (bias.tracked()) {
      auto& bg = bias.ensure_grad();
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) bg[c] += g[r * cols + c];
    }
  });
  return out;
}

enum class Activation { Sigmoid, Tanh, Relu };

template <typename T>
Tensor<T> pointwise(Tensor<T> x, Activation kind) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto& ov = out.values();
  const auto& xv = x.values();
  switch (kind) {
    case Activation::Sigmoid:
      for (long i = 0; i < x.size(); ++i) ov[i] = T(1) / (T(1) + std::exp(-xv[i]));
      break;
    case Activation::Tanh:
      for (long i = 0; i < x.size(); ++i) ov[i] = std::tanh(xv[i]);
      break;
    case Activation::Relu:
      for (long i = 0; i < x.size(); ++i) ov[i] = xv[i] > T(0) ? xv[i] : T(0);
      break;
  }
  detail::debug_check_finite(out, "pointwise");
  detail::maybe_record<T>(x.tracked(), out, [x, out, kind]() mutable {
    const auto& g = out.grad();
    const auto& ov = out.values();
    auto& xg = x.ensure_grad();
    switch (kind) {
      case Activation::Sigmoid:
        for (size_t i = 0; i < xg.size(); ++i) xg[i] += g[i] * ov[i] * (T(1) - ov[i]);
        break;
      case Activation::Tanh:
        for (size_t i = 0; i < xg.size(); ++i) xg[i] += g[i] * (T(1) - ov[i] * ov[i]);
        break;
      case Activation::Relu:
        for (size_t i = 0; i < xg.size(); ++i) xg[i] += ov[i] > T(0) ? g[i] : T(0);
        break;
    }
  });
  return out;
}

template <typename T>
Tensor<T> sigmoid(Tensor<T> x) {
  return pointwise(std::move(x), Activation::Sigmoid);
}
template <typename T>
Tensor<T> tanh_op(Tensor<T> x) {
  return pointwise(std::move(x), Activation::Tanh);
}
template <typename T>
Tensor<T> relu(Tensor<T> x) {
  return pointwise(std::move(x), Activation::Relu);
}

// Softmax over the last dimension. A mask of the same shape (values 0/1)
// excludes entries from the normalization; masked entries come out 0.
template <typename T>
Tensor<T> softmax_last_dim(Tensor<T> x, const Tensor<T>* mask = nullptr) {
  if (mask && mask->shape() != x.shape())
    throw DimensionError("softmax mask shape " + shape_str(mask->shape()) + " does not match input " +
                         shape_str(x.shape()));
  const int cols = x.dim(x.rank() - 1);
  const long slices = x.size() / cols;
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const auto& xv = x.values();
  auto& ov = out.values();
  for (long s = 0; s < slices; ++s) {
    const long base = s * cols;
    T mx = -std::numeric_limits<T>::infinity();
    int live = 0;
    for (int c = 0; c < cols; ++c) {
      if (mask && mask->values()[base + c] == T(0)) continue;
      live++;
      mx = std::max(mx, xv[base + c]);
    }
    if (live == 0) throw DegenerateMaskError("softmax slice with zero unmasked entries");
    T denom = T(0);
    for (int c = 0; c < cols; ++c) {
      if (mask && mask->values()[base + c] == T(0)) {
        ov[base + c] = T(0);
        continue;
      }
      ov[base + c] = std::exp(xv[base + c] - mx);
      denom += ov[base + c];
    }
    for (int c = 0; c < cols; ++c) ov[base + c] /= denom;
  }
  detail::debug_check_finite(out, "softmax_last_dim");
  detail::maybe_record<T>(x.tracked(), out, [x, out, cols, slices]() mutable {
    const auto& g = out.grad();
    const auto& ov = out.values();
    auto& xg = x.ensure_grad();
    for (long s = 0; s < slices; ++s) {
      const long base = s * cols;
      T dot = T(0);
      for (int c = 0; c < cols; ++c) dot += g[base + c] * ov[base + c];
      for (int c = 0; c < cols; ++c) xg[base + c] += ov[base + c] * (g[base + c] - dot);
    }
  });
  return out;
}

// Per-slice normalization over the last dimension followed by a learned
// affine transform.
template <typename T>
Tensor<T> layer_norm(Tensor<T> x, Tensor<T> gain, Tensor<T> bias, T eps = T(1e-5)) {
  const int cols = x.dim(x.rank() - 1);
  if (gain.size() != cols || bias.size() != cols)
    throw DimensionError("layer_norm gain/bias must have width " + std::to_string(cols));
  const long slices = x.size() / cols;
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  std::vector<T> inv_std(slices), means(slices);
  const auto& xv = x.values();
  auto& ov = out.values();
  for (long s = 0; s < slices; ++s) {
    const long base = s * cols;
    T mean = T(0);
    for (int c = 0; c < cols; ++c) mean += xv[base + c];
    mean /= T(cols);
    T var = T(0);
    for (int c = 0; c < cols; ++c) {
      T d = xv[base + c] - mean;
      var += d * d;
    }
    var /= T(cols);
    const T istd = T(1) / std::sqrt(var + eps);
    means[s] = mean;
    inv_std[s] = istd;
    for (int c = 0; c < cols; ++c)
      ov[base + c] = (xv[base + c] - mean) * istd * gain.values()[c] + bias.values()[c];
  }
  detail::debug_check_finite(out, "layer_norm");
  detail::maybe_record<T>(x.tracked() || gain.tracked() || bias.tracked(), out,
                          [x, gain, bias, out, cols, slices, means, inv_std]() mutable {
                            const auto& g = out.grad();
                            const auto& xv = x.values();
                            for (long s = 0; s < slices; ++s) {
                              const long base = s * cols;
                              const T istd = inv_std[s];
                              // xhat = (x - mean) * istd
                              T sum_gy = T(0), sum_gyx = T(0);
                              for (int c = 0; c < cols; ++c) {
                                const T xhat = (xv[base + c] - means[s]) * istd;
                                const T gy = g[base + c] * gain.values()[c];
                                sum_gy += gy;
                                sum_gyx += gy * xhat;
                              }
                              if (x.tracked()) {
                                auto& xg = x.ensure_grad();
                                for (int c = 0; c < cols; ++c) {
                                  const T xhat = (xv[base + c] - means[s]) * istd;
                                  const T gy = g[base + c] * gain.values()[c];
                                  xg[base + c] +=
                                      istd * (gy - sum_gy / T(cols) - xhat * sum_gyx / T(cols));
                                }
                              }
                              if (gain.tracked()) {
                                auto& gg = gain.ensure_grad();
                                for (int c = 0; c < cols; ++c)
                                  gg[c] += g[base + c] * (xv[base + c] - means[s]) * istd;
                              }
                              if (bias.tracked()) {
                                auto& bg = bias.ensure_grad();
                                for (int c = 0; c < cols; ++c) bg[c] += g[base + c];
                              }
                            }
                          });
  return out;
}

// Elementwise Huber penalty: 0.5 x^2 for |x| <= delta, else delta(|x| - delta/2).
template <typename T>
Tensor<T> huber(Tensor<T> x, T delta) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  for (long i = 0; i < x.size(); ++i) {
    const T v = x.values()[i];
    out.values()[i] = std::abs(v) <= delta ? T(0.5) * v * v : delta * (std::abs(v) - T(0.5) * delta);
  }
  detail::maybe_record<T>(x.tracked(), out, [x, out, delta]() mutable {
    const auto& g = out.grad();
    auto& xg = x.ensure_grad();
    for (long i = 0; i < x.size(); ++i)
      xg[i] += g[i] * std::clamp(x.values()[i], -delta, delta);
  });
  return out;
}

template <typename T>
Tensor<T> sum(Tensor<T> x) {
  T total = std::accumulate(x.values().begin(), x.values().end(), T(0));
  Tensor<T> out = Tensor<T>::scalar(total);
  detail::maybe_record<T>(x.tracked(), out, [x, out]() mutable {
    const T g = out.grad()[0];
    auto& xg = x.ensure_grad();
    for (auto& v : xg) v += g;
  });
  return out;
}

// Concatenates along the last (column) dimension.
template <typename T>
Tensor<T> concat_cols(Tensor<T> a, Tensor<T> b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0))
    throw DimensionError("concat_cols row mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int rows = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  Tensor<T> out = Tensor<T>::zeros({rows, ca + cb});
  for (int r = 0; r < rows; ++r) {
    std::copy_n(&a.values()[r * ca], ca, &out.values()[r * (ca + cb)]);
    std::copy_n(&b.values()[r * cb], cb, &out.values()[r * (ca + cb) + ca]);
  }
  detail::maybe_record<T>(a.tracked() || b.tracked(), out, [a, b, out, rows, ca, cb]() mutable {
    const auto& g = out.grad();
    if (a.tracked()) {
      auto& ag = a.ensure_grad();
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < ca; ++c) ag[r * ca + c] += g[r * (ca + cb) + c];
    }
    if (b.tracked()) {
      auto& bg = b.ensure_grad();
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cb; ++c) bg[r * cb + c] += g[r * (ca + cb) + ca + c];
    }
  });
  return out;
}

// Copies a rectangular block [r0, r0+rows) x [c0, c0+cols).
template <typename T>
Tensor<T> block(Tensor<T> x, int r0, int rows, int c0, int cols) {
  if (x.rank() != 2 || r0 + rows > x.dim(0) || c0 + cols > x.dim(1))
    throw DimensionError("block out of range on " + shape_str(x.shape()));
  const int xc = x.dim(1);
  Tensor<T> out = Tensor<T>::zeros({rows, cols});
  for (int r = 0; r < rows; ++r)
    std::copy_n(&x.values()[(r0 + r) * xc + c0], cols, &out.values()[r * cols]);
  detail::maybe_record<T>(x.tracked(), out, [x, out, r0, rows, c0, cols, xc]() mutable {
    const auto& g = out.grad();
    auto& xg = x.ensure_grad();
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) xg[(r0 + r) * xc + c0 + c] += g[r * cols + c];
  });
  return out;
}

// Selects rows by index (duplicates allowed); backward scatter-adds.
template <typename T>
Tensor<T> gather_rows(Tensor<T> x, std::vector<int> idx) {
  if (x.rank() != 2) throw DimensionError("gather_rows expects rank-2 input");
  const int cols = x.dim(1);
  Tensor<T> out = Tensor<T>::zeros({static_cast<int>(idx.size()), cols});
  for (size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= x.dim(0)) throw DimensionError("gather_rows index out of range");
    std::copy_n(&x.values()[idx[r] * cols], cols, &out.values()[r * cols]);
  }
  detail::maybe_record<T>(x.tracked(), out, [x, out, idx = std::move(idx), cols]() mutable {
    const auto& g = out.grad();
    auto& xg = x.ensure_grad();
    for (size_t r = 0; r < idx.size(); ++r)
      for (int c = 0; c < cols; ++c) xg[idx[r] * cols + c] += g[r * cols + c];
  });
  return out;
}

// Stacks rank-2 tensors with identical column counts along rows.
template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows of empty list");
  const int cols = parts[0].dim(1);
  int rows = 0;
  bool tracked = false;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(1) != cols) throw DimensionError("concat_rows column mismatch");
    rows += p.dim(0);
    tracked = tracked || p.tracked();
  }
  Tensor<T> out = Tensor<T>::zeros({rows, cols});
  int r = 0;
  for (const auto& p : parts) {
    std::copy_n(p.values().data(), p.size(), &out.values()[r * cols]);
    r += p.dim(0);
  }
  std::vector<Tensor<T>> held = parts;  // non-const copy for the backward closure
  detail::maybe_record<T>(tracked, out, [parts = std::move(held), out, cols]() mutable {
    const auto& g = out.grad();
    int r = 0;
    for (auto& p : parts) {
      if (p.tracked()) {
        auto& pg = p.ensure_grad();
        for (long i = 0; i < p.size(); ++i) pg[i] += g[r * cols + i];
      }
      r += p.dim(0);
    }
  });
  return out;
}

// out[r] = x[r, idx[r]]; column-vector result of shape {R, 1}.
template <typename T>
Tensor<T> select_columns(Tensor<T> x, std::vector<int> idx) {
  if (x.rank() != 2 || static_cast<int>(idx.size()) != x.dim(0))
    throw DimensionError("select_columns needs one index per row");
  const int cols = x.dim(1);
  Tensor<T> out = Tensor<T>::zeros({x.dim(0), 1});
  for (size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= cols) throw DimensionError("select_columns index out of range");
    out.values()[r] = x.values()[r * cols + idx[r]];
  }
  detail::maybe_record<T>(x.tracked(), out, [x, out, idx = std::move(idx), cols]() mutable {
    const auto& g = out.grad();
    auto& xg = x.ensure_grad();
    for (size_t r = 0; r < idx.size(); ++r) xg[r * cols + idx[r]] += g[r];
  });
  return out;
}

// Fused multi-head scaled-dot-product attention with a strict causal mask,
// applied independently to each of `batch` sequences of length `seq`.
// q, k, v are (batch*seq) x d matrices of already-projected values; the head
// outputs are concatenated back to (batch*seq) x d.
template <typename T>
Tensor<T> multihead_causal_attention(Tensor<T> q, Tensor<T> k, Tensor<T> v, int batch, int seq, int heads) {
  if (q.shape() != k.shape() || q.shape() != v.shape())
    throw DimensionError("attention q/k/v shape mismatch");
  const int d = q.dim(1);
  if (q.dim(0) != batch * seq || d % heads != 0)
    throw DimensionError("attention meta mismatch for " + shape_str(q.shape()));
  const int hd = d / heads;
  const T inv_scale = T(1) / std::sqrt(static_cast<T>(hd));

  Tensor<T> out = Tensor<T>::zeros(q.shape());
  // Attention weights are kept for the backward pass: batch x heads x seq x seq,
  // lower-triangular rows.
  auto weights = std::make_shared<std::vector<T>>(static_cast<size_t>(batch) * heads * seq * seq, T(0));

  const auto& qv = q.values();
  const auto& kv = k.values();
  const auto& vv = v.values();
  auto& ov = out.values();
  for (int b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      const int co = h * hd;
      T* w = weights->data() + (static_cast<size_t>(b) * heads + h) * seq * seq;
      for (int t = 0; t < seq; ++t) {
        const T* qrow = &qv[(b * seq + t) * d + co];
        T mx = -std::numeric_limits<T>::infinity();
        for (int s = 0; s <= t; ++s) {
          const T* krow = &kv[(b * seq + s) * d + co];
          T dot = T(0);
          for (int c = 0; c < hd; ++c) dot += qrow[c] * krow[c];
          w[t * seq + s] = dot * inv_scale;
          mx = std::max(mx, w[t * seq + s]);
        }
        T denom = T(0);
        for (int s = 0; s <= t; ++s) {
          w[t * seq + s] = std::exp(w[t * seq + s] - mx);
          denom += w[t * seq + s];
        }
        T* orow = &ov[(b * seq + t) * d + co];
        for (int s = 0; s <= t; ++s) {
          const T a = w[t * seq + s] / denom;
          w[t * seq + s] = a;
          const T* vrow = &vv[(b * seq + s) * d + co];
          for (int c = 0; c < hd; ++c) orow[c] += a * vrow[c];
        }
      }
    }
  }
  detail::debug_check_finite(out, "multihead_causal_attention");
  detail::maybe_record<T>(
      q.tracked() || k.tracked() || v.tracked(), out,
      [q, k, v, out, weights, batch, seq, heads, hd, d, inv_scale]() mutable {
        const auto& g = out.grad();
        const auto& qv = q.values();
        const auto& kv = k.values();
        const auto& vv = v.values();
        auto& qg = q.ensure_grad();
        auto& kg = k.ensure_grad();
        auto& vg = v.ensure_grad();
        std::vector<T> dattn(seq);
        for (int b = 0; b < batch; ++b) {
          for (int h = 0; h < heads; ++h) {
            const int co = h * hd;
            const T* w = weights->data() + (static_cast<size_t>(b) * heads + h) * seq * seq;
            for (int t = 0; t < seq; ++t) {
              const T* grow = &g[(b * seq + t) * d + co];
              // d(attn weights) before softmax backward
              T dot = T(0);
              for (int s = 0; s <= t; ++s) {
                const T* vrow = &vv[(b * seq + s) * d + co];
                T dv = T(0);
                for (int c = 0; c < hd; ++c) dv += grow[c] * vrow[c];
                dattn[s] = dv;
                dot += dv * w[t * seq + s];
              }
              const T* qrow = &qv[(b * seq + t) * d + co];
              T* qgrow = &qg[(b * seq + t) * d + co];
              for (int s = 0; s <= t; ++s) {
                const T a = w[t * seq + s];
                // dV accumulation
                T* vgrow = &vg[(b * seq + s) * d + co];
                for (int c = 0; c < hd; ++c) vgrow[c] += a * grow[c];
                // softmax + scale backward into q/k
                const T dscore = a * (dattn[s] - dot) * inv_scale;
                const T* krow = &kv[(b * seq + s) * d + co];
                T* kgrow = &kg[(b * seq + s) * d + co];
                for (int c = 0; c < hd; ++c) {
                  qgrow[c] += dscore * krow[c];
                  kgrow[c] += dscore * qrow[c];
                }
              }
            }
          }
        }
      });
  return out;
}

// ---------------------------------------------------------------------------
// Adam

template <typename T>
struct AdamState {
  T lr = T(3e-4);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  long step = 0;
  std::vector<std::vector<T>> m, v;

  void init(const std::vector<Tensor<T>>& params) {
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(p.size(), T(0));
      v.emplace_back(p.size(), T(0));
    }
    step = 0;
  }
};

template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state) {
  if (state.m.size() != params.size()) throw GradError("adam state not initialized for parameter set");
  for (const auto& p : params)
    if (!p.has_grad()) throw GradError("adam_step on parameter with uninitialized gradient");
  state.step += 1;
  const T bc1 = T(1) - std::pow(state.beta1, static_cast<T>(state.step));
  const T bc2 = T(1) - std::pow(state.beta2, static_cast<T>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& g = p.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    auto& w = p.values();
    for (size_t j = 0; j < w.size(); ++j) {
      m[j] = state.beta1 * m[j] + (T(1) - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (T(1) - state.beta2) * g[j] * g[j];
      const T mhat = m[j] / bc1;
      const T vhat = v[j] / bc2;
      w[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
    p.zero_grad();
  }
}

// Scales all gradients so that their global L2 norm is at most max_norm.
template <typename T>
T clip_grad_norm(std::vector<Tensor<T>>& params, T max_norm) {
  T sq = T(0);
  for (auto& p : params) {
    if (!p.has_grad()) continue;
    for (T g : p.grad()) sq += g * g;
  }
  const T norm = std::sqrt(sq);
  if (norm > max_norm && norm > T(0)) {
    const T s = max_norm / norm;
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (T& g : p.grad()) g *= s;
    }
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient verification

// f must be scalar-valued. Returns the max over all input coordinates of
// |analytic - central difference| / max(|analytic|, |numeric|, 1e-8).
template <typename T>
T grad_check(const std::function<Tensor<T>(std::vector<Tensor<T>>&)>& f, std::vector<Tensor<T>>& inputs,
             T step = T(1e-5)) {
  for (auto& in : inputs) in.set_requires_grad(true).drop_grad();
  T analytic_loss;
  {
    Tape<T> tape;
    Tensor<T> loss = f(inputs);
    if (loss.size() != 1) throw GradError("grad_check requires a scalar-valued function");
    analytic_loss = loss.item();
    (void)analytic_loss;
    tape.backward(loss);
  }
  T max_rel = T(0);
  for (auto& in : inputs) {
    std::vector<T> analytic = in.has_grad() ? in.grad() : std::vector<T>(in.size(), T(0));
    for (long j = 0; j < in.size(); ++j) {
      const T saved = in.values()[j];
      in.values()[j] = saved + step;
      const T up = f(inputs).item();
      in.values()[j] = saved - step;
      const T down = f(inputs).item();
      in.values()[j] = saved;
      const T numeric = (up - down) / (T(2) * step);
      const T denom = std::max({std::abs(analytic[j]), std::abs(numeric), T(1e-8)});
      max_rel = std::max(max_rel, std::abs(analytic[j] - numeric) / denom);
    }
    in.drop_grad();
  }
  return max_rel;
}

}  // namespace dbgfqn
