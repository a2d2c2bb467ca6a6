#include "aim/ssm.hpp"

#include <cmath>

namespace aim {

namespace {

// (exp(z)-1)/z with the cancellation guard pinned at |z| < 1e-6.
template <typename T>
T phi_factor(T z) {
  if (std::abs(z) < T(1e-6)) return T(1) + z / T(2) + z * z / T(6);
  return std::expm1(z) / z;
}

// d/dz of phi_factor; the exact form (e^z(z-1)+1)/z^2 cancels badly near 0.
double phi_prime(double z) {
  if (std::abs(z) < 1e-3) return 0.5 + z / 3.0 + z * z / 8.0;
  return (std::exp(z) * (z - 1.0) + 1.0) / (z * z);
}

template <typename T>
void check_zoh_shapes(const Tensor<T>& delta, const Tensor<T>& A, const Tensor<T>& Bt) {
  check(delta.rank() == 2 && A.rank() == 2 && Bt.rank() == 2,
        "zoh_discretize: want delta [L,C], A [C,N], Bt [L,N]");
  check(delta.dim(1) == A.dim(0) && Bt.dim(0) == delta.dim(0) && Bt.dim(1) == A.dim(1),
        "zoh_discretize: shapes " + shape_str(delta.shape()) + ", " + shape_str(A.shape()) +
            ", " + shape_str(Bt.shape()) + " do not conform");
}

template <typename T>
void check_scan_shapes(const Discretized<T>& d, const Tensor<T>& ct, const Tensor<T>& x,
                       const Tensor<T>& h0, const char* op) {
  check(d.abar.rank() == 3 && d.bbar.rank() == 3 && d.abar.shape() == d.bbar.shape(),
        std::string(op) + ": abar/bbar must share shape [L,C,N]");
  const int64_t L = d.abar.dim(0), C = d.abar.dim(1), N = d.abar.dim(2);
  check(ct.rank() == 2 && ct.dim(0) == L && ct.dim(1) == N,
        std::string(op) + ": ct must be [L,N], got " + shape_str(ct.shape()));
  check(x.rank() == 2 && x.dim(0) == L && x.dim(1) == C,
        std::string(op) + ": x must be [L,C], got " + shape_str(x.shape()));
  check(h0.rank() == 2 && h0.dim(0) == C && h0.dim(1) == N,
        std::string(op) + ": h0 must be [C,N], got " + shape_str(h0.shape()));
}

// Shared adjoint for both scan forms: walks time backwards, carrying
// gh = dL/dh_t, given the forward's post-update states h_hist [L,C,N].
template <typename T>
void attach_scan_backward(Tensor<T>& y, const Discretized<T>& d, const Tensor<T>& ct,
                          const Tensor<T>& x, const Tensor<T>& h0, std::vector<T> h_hist) {
  auto an = d.abar.node(), bn = d.bbar.node(), cn = ct.node(), xn = x.node(), hn = h0.node();
  auto* yn = y.node().get();
  const int64_t L = x.dim(0), C = x.dim(1), N = d.abar.dim(2);
  detail::attach_backward(
      y, {d.abar, d.bbar, ct, x, h0}, [an, bn, cn, xn, hn, yn, L, C, N, h_hist = std::move(h_hist)] {
        if (yn->grad.empty()) return;
        const auto& gy = yn->grad;
        if (an->requires_grad) an->ensure_grad();
        if (bn->requires_grad) bn->ensure_grad();
        if (cn->requires_grad) cn->ensure_grad();
        if (xn->requires_grad) xn->ensure_grad();
        if (hn->requires_grad) hn->ensure_grad();
        std::vector<T> gh(static_cast<size_t>(C * N), T(0));
        for (int64_t t = L - 1; t >= 0; --t) {
          for (int64_t c = 0; c < C; ++c) {
            const T gyv = gy[static_cast<size_t>(t * C + c)];
            const size_t base = static_cast<size_t>((t * C + c) * N);
            for (int64_t n = 0; n < N; ++n) {
              gh[static_cast<size_t>(c * N + n)] += gyv * cn->data[static_cast<size_t>(t * N + n)];
              if (cn->requires_grad) {
                cn->grad[static_cast<size_t>(t * N + n)] += gyv * h_hist[base + static_cast<size_t>(n)];
              }
            }
          }
          for (int64_t c = 0; c < C; ++c) {
            const T xv = xn->data[static_cast<size_t>(t * C + c)];
            T dxacc = T(0);
            for (int64_t n = 0; n < N; ++n) {
              const size_t idx = static_cast<size_t>((t * C + c) * N + n);
              const size_t sidx = static_cast<size_t>(c * N + n);
              const T g = gh[sidx];
              const T hprev = t > 0 ? h_hist[idx - static_cast<size_t>(C * N)]
                                    : hn->data[sidx];
              if (an->requires_grad) an->grad[idx] += g * hprev;
              if (bn->requires_grad) bn->grad[idx] += g * xv;
              dxacc += g * bn->data[idx];
              gh[sidx] = g * an->data[idx];
            }
            if (xn->requires_grad) xn->grad[static_cast<size_t>(t * C + c)] += dxacc;
          }
        }
        if (hn->requires_grad) {
          for (size_t i = 0; i < gh.size(); ++i) hn->grad[i] += gh[i];
        }
      });
}

}  // namespace

template <typename T>
Discretized<T> zoh_discretize(const Tensor<T>& delta, const Tensor<T>& A, const Tensor<T>& Bt,
                              BbarMethod method) {
  check_zoh_shapes(delta, A, Bt);
  const bool euler = method == BbarMethod::kEulerB;
  const int64_t L = delta.dim(0), C = delta.dim(1), N = A.dim(1);
  const auto& dd = delta.data();
  for (const T v : dd) check(v > T(0), "zoh_discretize: delta must be positive");
  const auto& ad = A.data();
  const auto& btd = Bt.data();
  std::vector<T> abar(static_cast<size_t>(L * C * N));
  std::vector<T> bbar(static_cast<size_t>(L * C * N));
  for (int64_t t = 0; t < L; ++t) {
    for (int64_t c = 0; c < C; ++c) {
      const T dv = dd[static_cast<size_t>(t * C + c)];
      const size_t base = static_cast<size_t>((t * C + c) * N);
      for (int64_t n = 0; n < N; ++n) {
        const T z = dv * ad[static_cast<size_t>(c * N + n)];
        abar[base + static_cast<size_t>(n)] = std::exp(z);
        bbar[base + static_cast<size_t>(n)] =
            (euler ? T(1) : phi_factor(z)) * dv * btd[static_cast<size_t>(t * N + n)];
      }
    }
  }
  Discretized<T> out;
  out.abar = Tensor<T>::from({L, C, N}, std::move(abar));
  out.bbar = Tensor<T>::from({L, C, N}, std::move(bbar));
  detail::finite_check("zoh_discretize", out.abar.data());
  detail::finite_check("zoh_discretize", out.bbar.data());

  auto dn = delta.node(), an = A.node(), btn = Bt.node();
  auto* abn = out.abar.node().get();
  detail::attach_backward(out.abar, {delta, A, Bt}, [dn, an, abn, L, C, N] {
    if (abn->grad.empty()) return;
    if (dn->requires_grad) dn->ensure_grad();
    if (an->requires_grad) an->ensure_grad();
    for (int64_t t = 0; t < L; ++t) {
      for (int64_t c = 0; c < C; ++c) {
        const T dv = dn->data[static_cast<size_t>(t * C + c)];
        const size_t base = static_cast<size_t>((t * C + c) * N);
        T dacc = T(0);
        for (int64_t n = 0; n < N; ++n) {
          const T g = abn->grad[base + static_cast<size_t>(n)];
          const T e = abn->data[base + static_cast<size_t>(n)];
          const T av = an->data[static_cast<size_t>(c * N + n)];
          dacc += g * e * av;
          if (an->requires_grad) an->grad[static_cast<size_t>(c * N + n)] += g * e * dv;
        }
        if (dn->requires_grad) dn->grad[static_cast<size_t>(t * C + c)] += dacc;
      }
    }
  });
  auto* bbn = out.bbar.node().get();
  detail::attach_backward(out.bbar, {delta, A, Bt}, [dn, an, btn, bbn, L, C, N, euler] {
    if (bbn->grad.empty()) return;
    if (dn->requires_grad) dn->ensure_grad();
    if (an->requires_grad) an->ensure_grad();
    if (btn->requires_grad) btn->ensure_grad();
    for (int64_t t = 0; t < L; ++t) {
      for (int64_t c = 0; c < C; ++c) {
        const double dv = static_cast<double>(dn->data[static_cast<size_t>(t * C + c)]);
        const size_t base = static_cast<size_t>((t * C + c) * N);
        double dacc = 0.0;
        for (int64_t n = 0; n < N; ++n) {
          const double g = static_cast<double>(bbn->grad[base + static_cast<size_t>(n)]);
          const double av = static_cast<double>(an->data[static_cast<size_t>(c * N + n)]);
          const double bv = static_cast<double>(btn->data[static_cast<size_t>(t * N + n)]);
          const double z = dv * av;
          const double phi = euler ? 1.0 : static_cast<double>(phi_factor(z));
          const double dphi = euler ? 0.0 : phi_prime(z);
          dacc += g * bv * (dphi * av * dv + phi);
          if (an->requires_grad) {
            an->grad[static_cast<size_t>(c * N + n)] += static_cast<T>(g * dphi * dv * dv * bv);
          }
          if (btn->requires_grad) {
            btn->grad[static_cast<size_t>(t * N + n)] += static_cast<T>(g * phi * dv);
          }
        }
        if (dn->requires_grad) dn->grad[static_cast<size_t>(t * C + c)] += static_cast<T>(dacc);
      }
    }
  });
  return out;
}

template <typename T>
ScanResult<T> scan_sequential(const Discretized<T>& d, const Tensor<T>& ct, const Tensor<T>& x,
                              const Tensor<T>& h0) {
  check_scan_shapes(d, ct, x, h0, "scan_sequential");
  const int64_t L = x.dim(0), C = x.dim(1), N = d.abar.dim(2);
  const auto& ad = d.abar.data();
  const auto& bd = d.bbar.data();
  const auto& cd = ct.data();
  const auto& xd = x.data();
  std::vector<T> h(h0.data());
  std::vector<T> h_hist(static_cast<size_t>(L * C * N));
  std::vector<T> y(static_cast<size_t>(L * C));
  for (int64_t t = 0; t < L; ++t) {
    for (int64_t c = 0; c < C; ++c) {
      const T xv = xd[static_cast<size_t>(t * C + c)];
      const size_t base = static_cast<size_t>((t * C + c) * N);
      T acc = T(0);
      for (int64_t n = 0; n < N; ++n) {
        const size_t sidx = static_cast<size_t>(c * N + n);
        h[sidx] = ad[base + static_cast<size_t>(n)] * h[sidx] +
                  bd[base + static_cast<size_t>(n)] * xv;
        acc += cd[static_cast<size_t>(t * N + n)] * h[sidx];
      }
      y[static_cast<size_t>(t * C + c)] = acc;
    }
    std::copy(h.begin(), h.end(), h_hist.begin() + t * C * N);
  }
  ScanResult<T> out;
  out.y = Tensor<T>::from({L, C}, std::move(y));
  out.hT = Tensor<T>::from({C, N}, std::move(h));
  detail::finite_check("scan_sequential", out.y.data());
  detail::finite_check("scan_sequential", out.hT.data());
  attach_scan_backward(out.y, d, ct, x, h0, std::move(h_hist));
  return out;
}

template <typename T>
ScanResult<T> scan_parallel(const Discretized<T>& d, const Tensor<T>& ct, const Tensor<T>& x,
                            const Tensor<T>& h0, int block_size) {
  check_scan_shapes(d, ct, x, h0, "scan_parallel");
  check(block_size >= 1, "scan_parallel: block_size must be >= 1");
  const int64_t L = x.dim(0), C = x.dim(1), N = d.abar.dim(2);
  const int64_t lanes = C * N;
  const int64_t nblocks = (L + block_size - 1) / block_size;
  const auto& ad = d.abar.data();
  const auto& bd = d.bbar.data();
  const auto& cd = ct.data();
  const auto& xd = x.data();
  const auto& h0d = h0.data();
  // Pair (a,b) encodes h -> a*h + b over a time interval.
  std::vector<T> agg_a(static_cast<size_t>(lanes * nblocks));
  std::vector<T> agg_b(static_cast<size_t>(lanes * nblocks));
  auto lane_at = [&](int64_t lane, int64_t t) {
    const int64_t c = lane / N, n = lane % N;
    return static_cast<size_t>((t * C + c) * N + n);
  };
  // up-sweep: per-lane, per-block sequential fold into block aggregates
  parallel_for(lanes, [&](int64_t lane) {
    const int64_t c = lane / N;
    for (int64_t blk = 0; blk < nblocks; ++blk) {
      const int64_t t0 = blk * block_size;
      const int64_t t1 = std::min<int64_t>(L, t0 + block_size);
      T aa = T(1), bb = T(0);
      for (int64_t t = t0; t < t1; ++t) {
        const size_t idx = lane_at(lane, t);
        const T at = ad[idx];
        const T bt = bd[idx] * xd[static_cast<size_t>(t * C + c)];
        aa = at * aa;
        bb = at * bb + bt;
      }
      agg_a[static_cast<size_t>(lane * nblocks + blk)] = aa;
      agg_b[static_cast<size_t>(lane * nblocks + blk)] = bb;
    }
  });
  // exclusive scan of the aggregates (ascending block order)
  std::vector<T> pre_a(static_cast<size_t>(lanes * nblocks));
  std::vector<T> pre_b(static_cast<size_t>(lanes * nblocks));
  parallel_for(lanes, [&](int64_t lane) {
    T aa = T(1), bb = T(0);
    for (int64_t blk = 0; blk < nblocks; ++blk) {
      const size_t idx = static_cast<size_t>(lane * nblocks + blk);
      pre_a[idx] = aa;
      pre_b[idx] = bb;
      const T ga = agg_a[idx], gb = agg_b[idx];
      bb = ga * bb + gb;
      aa = ga * aa;
    }
  });
  // down-sweep: apply block prefixes, materialize h, then reduce to y
  std::vector<T> h_all(static_cast<size_t>(L * C * N));
  parallel_for(lanes, [&](int64_t lane) {
    const int64_t c = lane / N;
    for (int64_t blk = 0; blk < nblocks; ++blk) {
      const int64_t t0 = blk * block_size;
      const int64_t t1 = std::min<int64_t>(L, t0 + block_size);
      T aa = pre_a[static_cast<size_t>(lane * nblocks + blk)];
      T bb = pre_b[static_cast<size_t>(lane * nblocks + blk)];
      for (int64_t t = t0; t < t1; ++t) {
        const size_t idx = lane_at(lane, t);
        const T at = ad[idx];
        const T bt = bd[idx] * xd[static_cast<size_t>(t * C + c)];
        bb = at * bb + bt;
        aa = at * aa;
        h_all[idx] = aa * h0d[static_cast<size_t>(lane)] + bb;
      }
    }
  });
  std::vector<T> y(static_cast<size_t>(L * C));
  for (int64_t t = 0; t < L; ++t) {
    for (int64_t c = 0; c < C; ++c) {
      const size_t base = static_cast<size_t>((t * C + c) * N);
      T acc = T(0);
      for (int64_t n = 0; n < N; ++n) {
        acc += cd[static_cast<size_t>(t * N + n)] * h_all[base + static_cast<size_t>(n)];
      }
      y[static_cast<size_t>(t * C + c)] = acc;
    }
  }
  std::vector<T> hT(static_cast<size_t>(C * N));
  std::copy(h_all.begin() + (L - 1) * C * N, h_all.end(), hT.begin());
  ScanResult<T> out;
  out.y = Tensor<T>::from({L, C}, std::move(y));
  out.hT = Tensor<T>::from({C, N}, std::move(hT));
  detail::finite_check("scan_parallel", out.y.data());
  detail::finite_check("scan_parallel", out.hT.data());
  attach_scan_backward(out.y, d, ct, x, h0, std::move(h_all));
  return out;
}

template <typename T>
StepResult<T> scan_step(const Tensor<T>& abar_t, const Tensor<T>& bbar_t, const Tensor<T>& ct_t,
                        const Tensor<T>& x_t, const Tensor<T>& h) {
  check(abar_t.rank() == 2 && bbar_t.rank() == 2 && abar_t.shape() == bbar_t.shape(),
        "scan_step: abar/bbar must share shape [C,N]");
  const int64_t C = abar_t.dim(0), N = abar_t.dim(1);
  check(ct_t.rank() == 1 && ct_t.dim(0) == N, "scan_step: ct must be [N]");
  check(x_t.rank() == 1 && x_t.dim(0) == C, "scan_step: x must be [C]");
  check(h.rank() == 2 && h.dim(0) == C && h.dim(1) == N, "scan_step: h must be [C,N]");
  if (grad_enabled()) {
    check(!(abar_t.requires_grad() || bbar_t.requires_grad() || ct_t.requires_grad() ||
            x_t.requires_grad() || h.requires_grad()),
          "scan_step: decode-only, no backward; wrap in NoGrad or detach inputs");
  }
  const auto& ad = abar_t.data();
  const auto& bd = bbar_t.data();
  const auto& cd = ct_t.data();
  const auto& xd = x_t.data();
  std::vector<T> hn(h.data());
  std::vector<T> y(static_cast<size_t>(C));
  for (int64_t c = 0; c < C; ++c) {
    const T xv = xd[static_cast<size_t>(c)];
    T acc = T(0);
    for (int64_t n = 0; n < N; ++n) {
      const size_t idx = static_cast<size_t>(c * N + n);
      hn[idx] = ad[idx] * hn[idx] + bd[idx] * xv;
      acc += cd[static_cast<size_t>(n)] * hn[idx];
    }
    y[static_cast<size_t>(c)] = acc;
  }
  StepResult<T> out;
  out.y = Tensor<T>::from({C}, std::move(y));
  out.h = Tensor<T>::from({C, N}, std::move(hn));
  detail::finite_check("scan_step", out.y.data());
  detail::finite_check("scan_step", out.h.data());
  return out;
}

template <typename T>
ScanResult<T> scan_sequential(const SsmParams<T>& p, const Tensor<T>& x, const Tensor<T>& h0) {
  return scan_sequential(zoh_discretize(p.delta, p.A, p.Bt), p.Ct, x, h0);
}

template <typename T>
ScanResult<T> scan_parallel(const SsmParams<T>& p, const Tensor<T>& x, const Tensor<T>& h0,
                            int block_size) {
  return scan_parallel(zoh_discretize(p.delta, p.A, p.Bt), p.Ct, x, h0, block_size);
}

#define AIM_INSTANTIATE_SSM(T)                                                                  \
  template Discretized<T> zoh_discretize(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                         BbarMethod);                                           \
  template ScanResult<T> scan_sequential(const Discretized<T>&, const Tensor<T>&,               \
                                         const Tensor<T>&, const Tensor<T>&);                   \
  template ScanResult<T> scan_parallel(const Discretized<T>&, const Tensor<T>&,                 \
                                       const Tensor<T>&, const Tensor<T>&, int);                \
  template StepResult<T> scan_step(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                   const Tensor<T>&, const Tensor<T>&);                         \
  template ScanResult<T> scan_sequential(const SsmParams<T>&, const Tensor<T>&,                 \
                                         const Tensor<T>&);                                     \
  template ScanResult<T> scan_parallel(const SsmParams<T>&, const Tensor<T>&, const Tensor<T>&, \
                                       int);

AIM_INSTANTIATE_SSM(float)
AIM_INSTANTIATE_SSM(double)
#undef AIM_INSTANTIATE_SSM

}  // namespace aim
