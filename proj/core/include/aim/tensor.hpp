#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "aim/common.hpp"
#include "aim/rng.hpp"

namespace aim {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // allocated lazily, same length as data when present
  bool requires_grad = false;
  std::string name;
  std::function<void()> backward_fn;  // set only for taped (non-leaf) nodes

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
};

}  // namespace detail

// Reverse-mode autodiff scope control. Ops executed while grads are disabled
// never touch the tape, regardless of input flags.
bool grad_enabled();
struct NoGrad {
  NoGrad();
  ~NoGrad();

 private:
  bool prev_;
};

// Handle over a shared node. Copying a Tensor aliases the same storage.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<detail::Node<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, T value, bool requires_grad = false);
  static Tensor from(const Shape& shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);
  static Tensor randn(const Shape& shape, Rng& rng, T stddev = T(1), bool requires_grad = false);
  static Tensor rand_uniform(const Shape& shape, Rng& rng, T lo, T hi, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int64_t dim(int axis) const { return node_->shape[static_cast<size_t>(axis)]; }
  int64_t numel() const { return node_->numel(); }

  std::vector<T>& data() { return node_->data; }
  const std::vector<T>& data() const { return node_->data; }
  std::vector<T>& grad();
  const std::vector<T>& grad() const;
  bool has_grad() const { return node_ && !node_->grad.empty(); }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool flag);
  const std::string& name() const { return node_->name; }
  Tensor& set_name(const std::string& name);

  T item() const;
  void zero_grad();
  Tensor detach() const;  // deep copy of values, no grad, no tape link

  std::shared_ptr<detail::Node<T>> node() const { return node_; }

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

// --- primitives -------------------------------------------------------------
// Elementwise binaries accept equal shapes, or a right operand whose shape is
// a trailing suffix of the left one (broadcast over the leading axes).
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> neg(const Tensor<T>& x);
template <typename T> Tensor<T> scale(const Tensor<T>& x, T c);
template <typename T> Tensor<T> exp(const Tensor<T>& x);
template <typename T> Tensor<T> log(const Tensor<T>& x);
template <typename T> Tensor<T> silu(const Tensor<T>& x);
template <typename T> Tensor<T> swish(const Tensor<T>& x);  // alias of silu
template <typename T> Tensor<T> softplus(const Tensor<T>& x);
template <typename T> Tensor<T> softmax_last(const Tensor<T>& x);
template <typename T> Tensor<T> layer_norm(const Tensor<T>& x);  // last axis, no affine, eps 1e-5
template <typename T> Tensor<T> rms_norm(const Tensor<T>& x);    // last axis, eps 1e-5
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);  // [m,k]x[k,n]
template <typename T> Tensor<T> transpose(const Tensor<T>& x);                   // 2-D
// x: [L, C] time-major, w: [C, K]; causal left pad of K-1 zeros, no bias.
template <typename T> Tensor<T> causal_conv1d(const Tensor<T>& x, const Tensor<T>& w);
template <typename T> Tensor<T> embedding(const Tensor<T>& table, const std::vector<int64_t>& ids);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);
template <typename T> Tensor<T> slice(const Tensor<T>& x, int axis, int64_t start, int64_t len);
template <typename T> Tensor<T> reshape(const Tensor<T>& x, const Shape& shape);
template <typename T> Tensor<T> sum(const Tensor<T>& x);   // scalar
template <typename T> Tensor<T> mean(const Tensor<T>& x);  // scalar
// logits: [rows, classes]; mean negative log-likelihood of targets.
template <typename T> Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int64_t>& targets);

template <typename T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }

enum class Prim {
  kMatmul,
  kAdd,
  kMul,
  kNeg,
  kExp,
  kLog,
  kSilu,
  kSwish,
  kSoftplus,
  kSoftmaxLast,
  kLayerNorm,
  kRmsNorm,
  kConv1dCausal,
  kEmbedding,
  kConcat,
  kSlice,
};

struct PrimArgs {
  int axis = 0;
  int64_t start = 0;
  int64_t len = -1;
  std::vector<int64_t> ids;  // for kEmbedding
};

const char* prim_name(Prim op);

template <typename T>
Tensor<T> apply_primitive(Prim op, const std::vector<Tensor<T>>& inputs, const PrimArgs& args = {});

// Seeds d(loss)/d(loss)=1, walks the tape in reverse creation order, then
// clears it. Leaf gradients accumulate until zero_grad.
template <typename T> void backward(const Tensor<T>& loss);
template <typename T> size_t tape_size();
template <typename T> void clear_tape();

// Max over coordinates of |analytic - central_difference| / max(1, |analytic|).
double gradient_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                      Tensor<double> x, double eps);

namespace detail {

// Custom-op hook: register `out = fn(inputs...)` on the tape. The closure must
// read out->grad and accumulate into each input's grad (ensure_grad first).
// No-op when grads are disabled or no input requires grad.
template <typename T>
void attach_backward(Tensor<T>& out, const std::vector<Tensor<T>>& inputs,
                     std::function<void()> fn);

template <typename T>
void finite_check(const char* op, const std::vector<T>& values);

}  // namespace detail

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace aim
