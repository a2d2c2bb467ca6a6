#include "aim/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace aim {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) {
    check(e > 0, "shape extents must be positive, got " + shape_str(s));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace {

thread_local bool g_grad_enabled = true;

template <typename T>
std::vector<std::shared_ptr<detail::Node<T>>>& tape() {
  static thread_local std::vector<std::shared_ptr<detail::Node<T>>> entries;
  return entries;
}

template <typename T>
Tensor<T> make_leaf(Shape shape, std::vector<T> values, bool requires_grad) {
  auto n = std::make_shared<detail::Node<T>>();
  check(shape_numel(shape) == static_cast<int64_t>(values.size()),
        "tensor: data length does not match shape " + shape_str(shape));
  n->shape = std::move(shape);
  n->data = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor<T>(std::move(n));
}

// Right operand must equal the left shape or a trailing suffix of it.
template <typename T>
void check_binary(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  bool ok = bs.size() <= as.size();
  if (ok) {
    for (size_t i = 0; i < bs.size(); ++i) {
      if (bs[bs.size() - 1 - i] != as[as.size() - 1 - i]) ok = false;
    }
  }
  check(ok, std::string(op) + ": shapes " + shape_str(as) + " vs " + shape_str(bs) +
                " do not conform");
}

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }
NoGrad::NoGrad() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGrad::~NoGrad() { g_grad_enabled = prev_; }

namespace detail {

template <typename T>
void attach_backward(Tensor<T>& out, const std::vector<Tensor<T>>& inputs,
                     std::function<void()> fn) {
  if (!g_grad_enabled) return;
  bool any = false;
  for (const auto& in : inputs) {
    if (in.defined() && in.requires_grad()) any = true;
  }
  if (!any) return;
  auto node = out.node();
  node->requires_grad = true;
  node->backward_fn = std::move(fn);
  tape<T>().push_back(node);
}

template <typename T>
void finite_check(const char* op, const std::vector<T>& values) {
  for (const T v : values) {
    if (!std::isfinite(static_cast<double>(v))) {
      throw Error(std::string(op) + ": produced a non-finite value");
    }
  }
}

template void attach_backward<float>(Tensor<float>&, const std::vector<Tensor<float>>&,
                                     std::function<void()>);
template void attach_backward<double>(Tensor<double>&, const std::vector<Tensor<double>>&,
                                      std::function<void()>);
template void finite_check<float>(const char*, const std::vector<float>&);
template void finite_check<double>(const char*, const std::vector<double>&);

}  // namespace detail

// --- Tensor methods ---------------------------------------------------------

template <typename T>
Tensor<T> Tensor<T>::zeros(const Shape& shape, bool requires_grad) {
  return make_leaf<T>(shape, std::vector<T>(static_cast<size_t>(shape_numel(shape)), T(0)),
                      requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(const Shape& shape, T value, bool requires_grad) {
  return make_leaf<T>(shape, std::vector<T>(static_cast<size_t>(shape_numel(shape)), value),
                      requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from(const Shape& shape, std::vector<T> values, bool requires_grad) {
  return make_leaf<T>(shape, std::move(values), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return make_leaf<T>({1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::randn(const Shape& shape, Rng& rng, T stddev, bool requires_grad) {
  std::vector<T> values(static_cast<size_t>(shape_numel(shape)));
  for (auto& v : values) v = static_cast<T>(rng.normal()) * stddev;
  return make_leaf<T>(shape, std::move(values), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::rand_uniform(const Shape& shape, Rng& rng, T lo, T hi, bool requires_grad) {
  std::vector<T> values(static_cast<size_t>(shape_numel(shape)));
  for (auto& v : values) v = lo + (hi - lo) * static_cast<T>(rng.uniform());
  return make_leaf<T>(shape, std::move(values), requires_grad);
}

template <typename T>
std::vector<T>& Tensor<T>::grad() {
  check(node_ != nullptr, "grad: tensor is undefined");
  node_->ensure_grad();
  return node_->grad;
}

template <typename T>
const std::vector<T>& Tensor<T>::grad() const {
  check(node_ != nullptr && !node_->grad.empty(), "grad: no gradient present");
  return node_->grad;
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool flag) {
  node_->requires_grad = flag;
  return *this;
}

template <typename T>
Tensor<T>& Tensor<T>::set_name(const std::string& name) {
  node_->name = name;
  return *this;
}

template <typename T>
T Tensor<T>::item() const {
  check(node_ != nullptr && node_->numel() == 1, "item: tensor is not a scalar");
  return node_->data[0];
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (node_ && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return make_leaf<T>(node_->shape, node_->data, false);
}

// --- primitives -------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check_binary(a, b, "add");
  const auto& ad = a.data();
  const auto& bd = b.data();
  const size_t inner = bd.size();
  std::vector<T> out(ad.size());
  for (size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] + bd[i % inner];
  auto r = make_leaf<T>(a.shape(), std::move(out), false);
  detail::finite_check("add", r.data());
  auto an = a.node(), bn = b.node();
  auto* rn = r.node().get();
  detail::attach_backward(r, {a, b}, [an, bn, rn] {
    if (rn->grad.empty()) return;
    const auto& g = rn->grad;
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) an->grad[i] += g[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      const size_t inner2 = bn->data.size();
      for (size_t i = 0; i < g.size(); ++i) bn->grad[i % inner2] += g[i];
    }
  });
  return r;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  check_binary(a, b, "sub");
  const auto& ad = a.data();
  const auto& bd = b.data();
  const size_t inner = bd.size();
  std::vector<T> out(ad.size());
  for (size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] - bd[i % inner];
  auto r = make_leaf<T>(a.shape(), std::move(out), false);
  detail::finite_check("sub", r.data());
  auto an = a.node(), bn = b.node();
  auto* rn = r.node().get();
  detail::attach_backward(r, {a, b}, [an, bn, rn] {
    if (rn->grad.empty()) return;
    const auto& g = rn->grad;
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) an->grad[i] += g[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      const size_t inner2 = bn->data.size();
      for (size_t i = 0; i < g.size(); ++i) bn->grad[i % inner2] -= g[i];
    }
  });
  return r;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check_binary(a, b, "mul");
  const auto& ad = a.data();
  const auto& bd = b.data();
  const size_t inner = bd.size();
  std::vector<T> out(ad.size());
  for (size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] * bd[i % inner];
  auto r = make_leaf<T>(a.shape(), std::move(out), false);
  detail::finite_check("mul", r.data());
  auto an = a.node(), bn = b.node();
  auto* rn = r.node().get();
  detail::attach_backward(r, {a, b}, [an, bn, rn] {
    if (rn->grad.empty()) return;
    const auto& g = rn->grad;
    const size_t inner2 = bn->data.size();
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) an->grad[i] += g[i] * bn->data[i % inner2];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) bn->grad[i % inner2] += g[i] * an->data[i];
    }
  });
  return r;
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
  return scale(x, T(-1));
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
  const auto& xd = x.data();
  std::vector<T> out(xd.size());
  for (size_t i = 0; i < xd.size(); ++i) out[i] = c * xd[i];
  auto r = make_leaf<T>(x.shape(), std::move(out), false);
  detail::finite_check("scale", r.data());
  auto xn = x.node();
  auto* rn = r.node().get();
  detail::attach_backward(r, {x}, [xn, rn, c] {
    if (rn->grad.empty() || !xn->requires_grad) return;
    xn->ensure_grad();
    for (size_t i = 0; i < rn->grad.size(); ++i) xn->grad[i] += c * rn->grad[i];
  });
  return r;
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  const auto& xd = x.data();
  std::vector<T> out(xd.size());
  for (size_t i = 0; i < xd.size(); ++i) out[i] = std::exp(xd[i]);
  auto r = make_leaf<T>(x.shape(), std::move(out), false);
  detail::finite_check("exp", r.data());
  auto xn = x.node();
  auto* rn = r.node().get();
  detail::attach_backward(r, {x}, [xn, rn] {
    if (rn->grad.empty() || !xn->requires_grad) return;
    xn->ensure_grad();
    for (size_t i = 0; i < rn->grad.size(); ++i) xn->grad[i] += rn->grad[i] * rn->data[i];
  });
  return r;
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  const auto& xd = x.data();
  std::vector<T> out(xd.size());
  for (size_t i = 0; i < xd.size(); ++i) out[i] = std::log(xd[i]);
  auto r = make_leaf<T>(x.shape(), std::move(out), false);
  detail::finite_check("log", r.data());
  auto xn = x.node();
  auto* rn = r.node().get();
  detail::attach_backward(r, {x}, [xn, rn] {
    if (rn->grad.empty() || !xn->requires_grad) return;
    xn->ensure_grad();
    for (size_t i = 0; i < rn->grad.size(); ++i) xn->grad[i] += rn->grad[i] / xn->data[i];
  });
  return r;
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  const auto& xd = x.data();
  std::vector<T> out(xd.size());
  for (size_t i = 0; i < xd.size(); ++i) out[i] = xd[i] * sigmoid(xd[i]);
  auto r = make_leaf<T>(x.shape(), std::move(out), false);
  detail::finite_check("silu", r.data());
  auto xn = x.node();
  auto* rn = r.node().get();
  detail::attach_backward(r, {x}, [xn, rn] {
    if (rn->grad.empty() || !xn->requires_grad) return;
    xn->ensure_grad();
    for (size_t i = 0; i < rn->grad.size(); ++i) {
      const T s = sigmoid(xn->data[i]);
      xn->grad[i] += rn->grad[i] * s * (T(1) + xn->data[i] * (T(1) - s));
    }
  });
  return r;
}

template <typename T>
Tensor<T> swish(const Tensor<T>& x) {
  return silu(x);
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
  const auto& xd = x.data();
  std::vector<T> out(xd.size());
  for (size_t i = 0; i < xd.size(); ++i) {
    const T v = xd[i];
    out[i] = std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v)));
  }
  auto r = make_leaf<T>(x.shape(), std::move(out), false);
  detail::finite_check("softplus", r.data());
  auto xn = x.node();
  auto* rn = r.node().get();
  detail::attach_backward(r, {x}, [xn, rn] {
    if (rn->grad.empty() || !xn->requires_grad) return;
    xn->ensure_grad();
    for (size_t i = 0; i < rn->grad.size(); ++i) {
      xn->grad[i] += rn->grad[i] * sigmoid(xn->data[i]);
    }
  });
  return r;
}

template <typename T>
Tensor<T> softmax_last(const Tensor<T>& x) {
  check(x.rank() >= 1, "softmax: rank must be >= 1");
  const int64_t cols = x.dim(x.rank() - 1);
  const int64_t rows = x.numel() / cols;
  const auto& xd = x.data();
  std::vector<T> out(xd.size());
  for (int64_t row = 0; row < rows; ++row) {
    const T* src = xd.data() + row * cols;
    T* dst = out.data() + row * cols;
    T m = src[0];
    for (int64_t j = 1; j < cols; ++j) m = std::max(m, src[j]);
    T s = T(0);
    for (int64_t j = 0; j < cols; ++j) {
      dst[j] = std::exp(src[j] - m);
      s += dst[j];
    }
    for (int64_t j = 0; j < cols; ++j) dst[j] /= s;
  }
  auto r = make_leaf<T>(x.shape(), std::move(out), false);
  detail::finite_check("softmax", r.data());
  auto xn = x.node();
  auto* rn = r.node().get();
  detail::attach_backward(r, {x}, [xn, rn, rows, cols] {
    if (rn->grad.empty() || !xn->requires_grad) return;
    xn->ensure_grad();
    for (int64_t row = 0; row < rows; ++row) {
      const T* y = rn->data.data() + row * cols;
      const T* g = rn->grad.data() + row * cols;
      T* dx = xn->grad.data() + row * cols;
      T dot = T(0);
      for (int64_t j = 0; j < cols; ++j) dot += g[j] * y[j];
      for (int64_t j = 0; j < cols; ++j) dx[j] += y[j] * (g[j] - dot);
    }
  });
  return r;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x) {
  check(x.rank() >= 1, "layer_norm: rank must be >= 1");
  const int64_t cols = x.dim(x.rank() - 1);
  const int64_t rows = x.numel() / cols;
  const T eps = T(1e-5);
  const auto& xd = x.data();
  std::vector<T> out(xd.size());
  std::vector<T> inv_std(static_cast<size_t>(rows));
  for (int64_t row = 0; row < rows; ++row) {
    const T* src = xd.data() + row * cols;
    T* dst = out.data() + row * cols;
    T mu = T(0);
    for (int64_t j = 0; j < cols; ++j) mu += src[j];
    mu /= T(cols);
    T var = T(0);
    for (int64_t j = 0; j < cols; ++j) {
      const T c = src[j] - mu;
      var += c * c;
    }
    var /= T(cols);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(row)] = is;
    for (int64_t j = 0; j < cols; ++j) dst[j] = (src[j] - mu) * is;
  }
  auto r = make_leaf<T>(x.shape(), std::move(out), false);
  detail::finite_check("layer_norm", r.data());
  auto xn = x.node();
  auto* rn = r.node().get();
  detail::attach_backward(r, {x}, [xn, rn, rows, cols, inv_std] {
    if (rn->grad.empty() || !xn->requires_grad) return;
    xn->ensure_grad();
    for (int64_t row = 0; row < rows; ++row) {
      const T* y = rn->data.data() + row * cols;
      const T* g = rn->grad.data() + row * cols;
      T* dx = xn->grad.data() + row * cols;
      const T is = inv_std[static_cast<size_t>(row)];
      T mg = T(0), mgy = T(0);
      for (int64_t j = 0; j < cols; ++j) {
        mg += g[j];
        mgy += g[j] * y[j];
      }
      mg /= T(cols);
      mgy /= T(cols);
      for (int64_t j = 0; j < cols; ++j) dx[j] += (g[j] - mg - y[j] * mgy) * is;
    }
  });
  return r;
}

template <typename T>
Tensor<T> rms_norm(const Tensor<T>& x) {
  check(x.rank() >= 1, "rms_norm: rank must be >= 1");
  const int64_t cols = x.dim(x.rank() - 1);
  const int64_t rows = x.numel() / cols;
  const T eps = T(1e-5);
  const auto& xd = x.data();
  std::vector<T> out(xd.size());
  std::vector<T> inv_rms(static_cast<size_t>(rows));
  for (int64_t row = 0; row < rows; ++row) {
    const T* src = xd.data() + row * cols;
    T* dst = out.data() + row * cols;
    T ms = T(0);
    for (int64_t j = 0; j < cols; ++j) ms += src[j] * src[j];
    ms = ms / T(cols) + eps;
    const T ir = T(1) / std::sqrt(ms);
    inv_rms[static_cast<size_t>(row)] = ir;
    for (int64_t j = 0; j < cols; ++j) dst[j] = src[j] * ir;
  }
  auto r = make_leaf<T>(x.shape(), std::move(out), false);
  detail::finite_check("rms_norm", r.data());
  auto xn = x.node();
  auto* rn = r.node().get();
  detail::attach_backward(r, {x}, [xn, rn, rows, cols, inv_rms] {
    if (rn->grad.empty() || !xn->requires_grad) return;
    xn->ensure_grad();
    for (int64_t row = 0; row < rows; ++row) {
      const T* xr = xn->data.data() + row * cols;
      const T* g = rn->grad.data() + row * cols;
      T* dx = xn->grad.data() + row * cols;
      const T ir = inv_rms[static_cast<size_t>(row)];
      T dot = T(0);
      for (int64_t j = 0; j < cols; ++j) dot += g[j] * xr[j];
      const T coef = dot * ir * ir * ir / T(cols);
      for (int64_t j = 0; j < cols; ++j) dx[j] += g[j] * ir - xr[j] * coef;
    }
  });
  return r;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
        "matmul: shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()) +
            " do not conform");
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const auto& ad = a.data();
  const auto& bd = b.data();
  std::vector<T> out(static_cast<size_t>(m * n), T(0));
  parallel_for(m, [&](int64_t i) {
    T* dst = out.data() + i * n;
    const T* arow = ad.data() + i * k;
    for (int64_t kk = 0; kk < k; ++kk) {
      const T av = arow[kk];
      const T* brow = bd.data() + kk * n;
      for (int64_t j = 0; j < n; ++j) dst[j] += av * brow[j];
    }
  });
  auto r = make_leaf<T>({m, n}, std::move(out), false);
  detail::finite_check("matmul", r.data());
  auto an = a.node(), bn = b.node();
  auto* rn = r.node().get();
  detail::attach_backward(r, {a, b}, [an, bn, rn, m, k, n] {
    if (rn->grad.empty()) return;
    const auto& g = rn->grad;
    if (an->requires_grad) {
      an->ensure_grad();
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
          const T gv = g[static_cast<size_t>(i * n + j)];
          const T* brow = bn->data.data() + j;
          T* da = an->grad.data() + i * k;
          for (int64_t kk = 0; kk < k; ++kk) da[kk] += gv * brow[kk * n];
        }
      }
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (int64_t i = 0; i < m; ++i) {
        const T* arow = an->data.data() + i * k;
        const T* grow = g.data() + i * n;
        for (int64_t kk = 0; kk < k; ++kk) {
          const T av = arow[kk];
          T* db = bn->grad.data() + kk * n;
          for (int64_t j = 0; j < n; ++j) db[j] += av * grow[j];
        }
      }
    }
  });
  return r;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  check(x.rank() == 2, "transpose: rank must be 2");
  const int64_t m = x.dim(0), n = x.dim(1);
  const auto& xd = x.data();
  std::vector<T> out(xd.size());
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out[static_cast<size_t>(j * m + i)] = xd[static_cast<size_t>(i * n + j)];
  auto r = make_leaf<T>({n, m}, std::move(out), false);
  auto xn = x.node();
  auto* rn = r.node().get();
  detail::attach_backward(r, {x}, [xn, rn, m, n] {
    if (rn->grad.empty() || !xn->requires_grad) return;
    xn->ensure_grad();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j)
        xn->grad[static_cast<size_t>(i * n + j)] += rn->grad[static_cast<size_t>(j * m + i)];
  });
  return r;
}

template <typename T>
Tensor<T> causal_conv1d(const Tensor<T>& x, const Tensor<T>& w) {
  check(x.rank() == 2 && w.rank() == 2 && x.dim(1) == w.dim(0),
        "causal_conv1d: shapes " + shape_str(x.shape()) + " vs " + shape_str(w.shape()) +
            " do not conform (want x [L,C], w [C,K])");
  const int64_t L = x.dim(0), C = x.dim(1), K = w.dim(1);
  const auto& xd = x.data();
  const auto& wd = w.data();
  std::vector<T> out(xd.size());
  for (int64_t t = 0; t < L; ++t) {
    T* dst = out.data() + t * C;
    for (int64_t c = 0; c < C; ++c) {
      T acc = T(0);
      const T* wrow = wd.data() + c * K;
      for (int64_t k = 0; k < K; ++k) {
        const int64_t s = t - (K - 1) + k;
        if (s >= 0) acc += wrow[k] * xd[static_cast<size_t>(s * C + c)];
      }
      dst[c] = acc;
    }
  }
  auto r = make_leaf<T>(x.shape(), std::move(out), false);
  detail::finite_check("causal_conv1d", r.data());
  auto xn = x.node(), wn = w.node();
  auto* rn = r.node().get();
  detail::attach_backward(r, {x, w}, [xn, wn, rn, L, C, K] {
    if (rn->grad.empty()) return;
    const auto& g = rn->grad;
    if (xn->requires_grad) {
      xn->ensure_grad();
      for (int64_t t = 0; t < L; ++t) {
        for (int64_t c = 0; c < C; ++c) {
          const T gv = g[static_cast<size_t>(t * C + c)];
          const T* wrow = wn->data.data() + c * K;
          for (int64_t k = 0; k < K; ++k) {
            const int64_t s = t - (K - 1) + k;
            if (s >= 0) xn->grad[static_cast<size_t>(s * C + c)] += gv * wrow[k];
          }
        }
      }
    }
    if (wn->requires_grad) {
      wn->ensure_grad();
      for (int64_t t = 0; t < L; ++t) {
        for (int64_t c = 0; c < C; ++c) {
          const T gv = g[static_cast<size_t>(t * C + c)];
          T* dw = wn->grad.data() + c * K;
          for (int64_t k = 0; k < K; ++k) {
            const int64_t s = t - (K - 1) + k;
            if (s >= 0) dw[k] += gv * xn->data[static_cast<size_t>(s * C + c)];
          }
        }
      }
    }
  });
  return r;
}

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, const std::vector<int64_t>& ids) {
  check(table.rank() == 2, "embedding: table must be 2-D");
  const int64_t V = table.dim(0), d = table.dim(1);
  for (int64_t id : ids) {
    check(id >= 0 && id < V,
          "embedding: index " + std::to_string(id) + " out of range [0," + std::to_string(V) + ")");
  }
  const int64_t n = static_cast<int64_t>(ids.size());
  const auto& td = table.data();
  std::vector<T> out(static_cast<size_t>(n * d));
  for (int64_t i = 0; i < n; ++i) {
    std::copy(td.begin() + ids[static_cast<size_t>(i)] * d,
              td.begin() + (ids[static_cast<size_t>(i)] + 1) * d, out.begin() + i * d);
  }
  auto r = make_leaf<T>({n, d}, std::move(out), false);
  auto tn = table.node();
  auto* rn = r.node().get();
  detail::attach_backward(r, {table}, [tn, rn, ids, n, d] {
    if (rn->grad.empty() || !tn->requires_grad) return;
    tn->ensure_grad();
    for (int64_t i = 0; i < n; ++i) {
      const T* g = rn->grad.data() + i * d;
      T* dst = tn->grad.data() + ids[static_cast<size_t>(i)] * d;
      for (int64_t j = 0; j < d; ++j) dst[j] += g[j];
    }
  });
  return r;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  check(!parts.empty(), "concat: needs at least one input");
  const int rank = parts[0].rank();
  check(axis >= 0 && axis < rank, "concat: axis out of range");
  Shape out_shape = parts[0].shape();
  int64_t axis_total = 0;
  for (const auto& p : parts) {
    check(p.rank() == rank, "concat: rank mismatch");
    for (int i = 0; i < rank; ++i) {
      check(i == axis || p.dim(i) == out_shape[static_cast<size_t>(i)],
            "concat: shape mismatch at " + shape_str(p.shape()));
    }
    axis_total += p.dim(axis);
  }
  out_shape[static_cast<size_t>(axis)] = axis_total;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= out_shape[static_cast<size_t>(i)];
  for (int i = axis + 1; i < rank; ++i) inner *= out_shape[static_cast<size_t>(i)];
  std::vector<T> out(static_cast<size_t>(shape_numel(out_shape)));
  const int64_t out_row = axis_total * inner;
  int64_t offset = 0;
  std::vector<int64_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const int64_t chunk = p.dim(axis) * inner;
    const auto& pd = p.data();
    for (int64_t o = 0; o < outer; ++o) {
      std::copy(pd.begin() + o * chunk, pd.begin() + (o + 1) * chunk,
                out.begin() + o * out_row + offset);
    }
    offset += chunk;
  }
  auto r = make_leaf<T>(out_shape, std::move(out), false);
  std::vector<std::shared_ptr<detail::Node<T>>> pnodes;
  for (const auto& p : parts) pnodes.push_back(p.node());
  auto* rn = r.node().get();
  detail::attach_backward(r, parts, [pnodes, rn, offsets, outer, out_row, inner] {
    if (rn->grad.empty()) return;
    for (size_t pi = 0; pi < pnodes.size(); ++pi) {
      auto& pn = pnodes[pi];
      if (!pn->requires_grad) continue;
      pn->ensure_grad();
      const int64_t chunk = pn->numel() / outer;
      (void)inner;
      for (int64_t o = 0; o < outer; ++o) {
        const T* g = rn->grad.data() + o * out_row + offsets[pi];
        T* dst = pn->grad.data() + o * chunk;
        for (int64_t j = 0; j < chunk; ++j) dst[j] += g[j];
      }
    }
  });
  return r;
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, int64_t start, int64_t len) {
  check(axis >= 0 && axis < x.rank(), "slice: axis out of range");
  check(start >= 0 && len >= 1 && start + len <= x.dim(axis),
        "slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
            ") out of bounds for extent " + std::to_string(x.dim(axis)));
  Shape out_shape = x.shape();
  out_shape[static_cast<size_t>(axis)] = len;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const int64_t in_row = x.dim(axis) * inner;
  const int64_t out_chunk = len * inner;
  const auto& xd = x.data();
  std::vector<T> out(static_cast<size_t>(outer * out_chunk));
  for (int64_t o = 0; o < outer; ++o) {
    std::copy(xd.begin() + o * in_row + start * inner,
              xd.begin() + o * in_row + (start + len) * inner, out.begin() + o * out_chunk);
  }
  auto r = make_leaf<T>(out_shape, std::move(out), false);
  auto xn = x.node();
  auto* rn = r.node().get();
  detail::attach_backward(r, {x}, [xn, rn, outer, in_row, inner, start, out_chunk] {
    if (rn->grad.empty() || !xn->requires_grad) return;
    xn->ensure_grad();
    for (int64_t o = 0; o < outer; ++o) {
      const T* g = rn->grad.data() + o * out_chunk;
      T* dst = xn->grad.data() + o * in_row + start * inner;
      for (int64_t j = 0; j < out_chunk; ++j) dst[j] += g[j];
    }
  });
  return r;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& shape) {
  check(shape_numel(shape) == x.numel(),
        "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  auto r = make_leaf<T>(shape, x.data(), false);
  auto xn = x.node();
  auto* rn = r.node().get();
  detail::attach_backward(r, {x}, [xn, rn] {
    if (rn->grad.empty() || !xn->requires_grad) return;
    xn->ensure_grad();
    for (size_t i = 0; i < rn->grad.size(); ++i) xn->grad[i] += rn->grad[i];
  });
  return r;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  const auto& xd = x.data();
  T acc = T(0);
  for (const T v : xd) acc += v;
  auto r = Tensor<T>::scalar(acc);
  detail::finite_check("sum", r.data());
  auto xn = x.node();
  auto* rn = r.node().get();
  detail::attach_backward(r, {x}, [xn, rn] {
    if (rn->grad.empty() || !xn->requires_grad) return;
    xn->ensure_grad();
    const T g = rn->grad[0];
    for (auto& dv : xn->grad) dv += g;
  });
  return r;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  const auto& xd = x.data();
  T acc = T(0);
  for (const T v : xd) acc += v;
  const T inv = T(1) / T(x.numel());
  auto r = Tensor<T>::scalar(acc * inv);
  detail::finite_check("mean", r.data());
  auto xn = x.node();
  auto* rn = r.node().get();
  detail::attach_backward(r, {x}, [xn, rn, inv] {
    if (rn->grad.empty() || !xn->requires_grad) return;
    xn->ensure_grad();
    const T g = rn->grad[0] * inv;
    for (auto& dv : xn->grad) dv += g;
  });
  return r;
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int64_t>& targets) {
  check(logits.rank() == 2, "cross_entropy: logits must be 2-D");
  const int64_t rows = logits.dim(0), cols = logits.dim(1);
  check(static_cast<int64_t>(targets.size()) == rows,
        "cross_entropy: got " + std::to_string(targets.size()) + " targets for " +
            std::to_string(rows) + " rows");
  for (int64_t t : targets) check(t >= 0 && t < cols, "cross_entropy: target out of range");
  const auto& xd = logits.data();
  std::vector<T> probs(xd.size());
  T loss = T(0);
  for (int64_t row = 0; row < rows; ++row) {
    const T* src = xd.data() + row * cols;
    T* p = probs.data() + row * cols;
    T m = src[0];
    for (int64_t j = 1; j < cols; ++j) m = std::max(m, src[j]);
    T s = T(0);
    for (int64_t j = 0; j < cols; ++j) {
      p[j] = std::exp(src[j] - m);
      s += p[j];
    }
    for (int64_t j = 0; j < cols; ++j) p[j] /= s;
    loss += m + std::log(s) - src[targets[static_cast<size_t>(row)]];
  }
  loss /= T(rows);
  auto r = Tensor<T>::scalar(loss);
  detail::finite_check("cross_entropy", r.data());
  auto xn = logits.node();
  auto* rn = r.node().get();
  detail::attach_backward(r, {logits}, [xn, rn, probs, targets, rows, cols] {
    if (rn->grad.empty() || !xn->requires_grad) return;
    xn->ensure_grad();
    const T g = rn->grad[0] / T(rows);
    for (int64_t row = 0; row < rows; ++row) {
      const T* p = probs.data() + row * cols;
      T* dx = xn->grad.data() + row * cols;
      const int64_t tgt = targets[static_cast<size_t>(row)];
      for (int64_t j = 0; j < cols; ++j) dx[j] += g * (p[j] - (j == tgt ? T(1) : T(0)));
    }
  });
  return r;
}

// --- dispatch ---------------------------------------------------------------

const char* prim_name(Prim op) {
  switch (op) {
    case Prim::kMatmul: return "matmul";
    case Prim::kAdd: return "add";
    case Prim::kMul: return "mul";
    case Prim::kNeg: return "neg";
    case Prim::kExp: return "exp";
    case Prim::kLog: return "log";
    case Prim::kSilu: return "silu";
    case Prim::kSwish: return "swish";
    case Prim::kSoftplus: return "softplus";
    case Prim::kSoftmaxLast: return "softmax-last";
    case Prim::kLayerNorm: return "layer-norm";
    case Prim::kRmsNorm: return "rms-norm";
    case Prim::kConv1dCausal: return "conv1d-causal";
    case Prim::kEmbedding: return "embedding";
    case Prim::kConcat: return "concat";
    case Prim::kSlice: return "slice";
  }
  return "?";
}

template <typename T>
Tensor<T> apply_primitive(Prim op, const std::vector<Tensor<T>>& inputs, const PrimArgs& args) {
  auto want = [&](size_t n) {
    check(inputs.size() == n, std::string(prim_name(op)) + ": expected " + std::to_string(n) +
                                  " inputs, got " + std::to_string(inputs.size()));
  };
  switch (op) {
    case Prim::kMatmul: want(2); return matmul(inputs[0], inputs[1]);
    case Prim::kAdd: want(2); return add(inputs[0], inputs[1]);
    case Prim::kMul: want(2); return mul(inputs[0], inputs[1]);
    case Prim::kNeg: want(1); return neg(inputs[0]);
    case Prim::kExp: want(1); return exp(inputs[0]);
    case Prim::kLog: want(1); return log(inputs[0]);
    case Prim::kSilu: want(1); return silu(inputs[0]);
    case Prim::kSwish: want(1); return swish(inputs[0]);
    case Prim::kSoftplus: want(1); return softplus(inputs[0]);
    case Prim::kSoftmaxLast: want(1); return softmax_last(inputs[0]);
    case Prim::kLayerNorm: want(1); return layer_norm(inputs[0]);
    case Prim::kRmsNorm: want(1); return rms_norm(inputs[0]);
    case Prim::kConv1dCausal: want(2); return causal_conv1d(inputs[0], inputs[1]);
    case Prim::kEmbedding: want(1); return embedding(inputs[0], args.ids);
    case Prim::kConcat: return concat(inputs, args.axis);
    case Prim::kSlice: want(1); return slice(inputs[0], args.axis, args.start, args.len);
  }
  throw Error("apply_primitive: unknown op");
}

// --- tape -------------------------------------------------------------------

template <typename T>
void backward(const Tensor<T>& loss) {
  check(loss.defined() && loss.numel() == 1, "backward: loss must be a defined scalar");
  auto& entries = tape<T>();
  check(!entries.empty(), "backward: tape is empty (re-run the forward pass)");
  auto ln = loss.node();
  check(static_cast<bool>(ln->backward_fn), "backward: loss is not attached to the tape");
  ln->ensure_grad();
  ln->grad[0] = T(1);
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
    auto& node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn();
  }
  for (auto& node : entries) node->backward_fn = nullptr;
  entries.clear();
}

template <typename T>
size_t tape_size() {
  return tape<T>().size();
}

template <typename T>
void clear_tape() {
  auto& entries = tape<T>();
  for (auto& node : entries) node->backward_fn = nullptr;
  entries.clear();
}

double gradient_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                      Tensor<double> x, double eps) {
  check(eps >= 1e-7 && eps <= 1e-3, "gradient_check: eps must lie in [1e-7, 1e-3]");
  clear_tape<double>();
  x.set_requires_grad(true);
  x.zero_grad();
  Tensor<double> loss = f(x);
  check(loss.numel() == 1, "gradient_check: f must return a scalar");
  backward(loss);
  const std::vector<double> analytic = x.grad();
  double max_err = 0.0;
  NoGrad ng;
  for (size_t i = 0; i < x.data().size(); ++i) {
    const double orig = x.data()[i];
    x.data()[i] = orig + eps;
    const double fp = f(x).item();
    x.data()[i] = orig - eps;
    const double fm = f(x).item();
    x.data()[i] = orig;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double a = analytic[i];
    const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

// --- explicit instantiations ------------------------------------------------

#define AIM_INSTANTIATE(T)                                                                   \
  template class Tensor<T>;                                                                  \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> neg(const Tensor<T>&);                                                  \
  template Tensor<T> scale(const Tensor<T>&, T);                                             \
  template Tensor<T> exp(const Tensor<T>&);                                                  \
  template Tensor<T> log(const Tensor<T>&);                                                  \
  template Tensor<T> silu(const Tensor<T>&);                                                 \
  template Tensor<T> swish(const Tensor<T>&);                                                \
  template Tensor<T> softplus(const Tensor<T>&);                                             \
  template Tensor<T> softmax_last(const Tensor<T>&);                                         \
  template Tensor<T> layer_norm(const Tensor<T>&);                                           \
  template Tensor<T> rms_norm(const Tensor<T>&);                                             \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> transpose(const Tensor<T>&);                                            \
  template Tensor<T> causal_conv1d(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> embedding(const Tensor<T>&, const std::vector<int64_t>&);               \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                             \
  template Tensor<T> slice(const Tensor<T>&, int, int64_t, int64_t);                         \
  template Tensor<T> reshape(const Tensor<T>&, const Shape&);                                \
  template Tensor<T> sum(const Tensor<T>&);                                                  \
  template Tensor<T> mean(const Tensor<T>&);                                                 \
  template Tensor<T> cross_entropy(const Tensor<T>&, const std::vector<int64_t>&);           \
  template Tensor<T> apply_primitive(Prim, const std::vector<Tensor<T>>&, const PrimArgs&);  \
  template void backward(const Tensor<T>&);                                                  \
  template size_t tape_size<T>();                                                            \
  template void clear_tape<T>();

AIM_INSTANTIATE(float)
AIM_INSTANTIATE(double)
#undef AIM_INSTANTIATE

}  // namespace aim
