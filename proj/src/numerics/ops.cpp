// SPDX-License-Identifier: Apache-2.0
#include "ram/numerics/ops.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <type_traits>

#include "gemm.hpp"

namespace ram::ops {
namespace {

using detail::gemm;

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

void check_same_tape(const char* op, const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw std::logic_error(std::string(op) + ": operands live on different tapes");
}

inline void debug_finite([[maybe_unused]] const char* op, [[maybe_unused]] const Tensor& t) {
#ifndef NDEBUG
  if (!t.all_finite()) throw NumericError(std::string(op) + ": produced a non-finite value");
#endif
}

// Inner extent of a suffix broadcast of b onto a; throws if b is not a suffix of a.
std::int64_t suffix_inner(const char* op, const Shape& a, const Shape& b) {
  if (b.size() > a.size()) shape_fail(op, a, b);
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (a[a.size() - b.size() + i] != b[i]) shape_fail(op, a, b);
  }
  return shape_numel(b);
}

std::int64_t last_dim(const char* op, const Shape& s) {
  if (s.empty()) throw ShapeError(std::string(op) + ": needs rank >= 1, got " + shape_str(s));
  return s.back();
}

template <class F>
Var unary(const char* name, const Var& a, F f, auto df) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) y[i] = f(x[i]);
  debug_finite(name, y);
  return a.tape().push(std::move(y), {a}, [a, df](BackwardContext& ctx) {
    Tensor* ga = ctx.grad(a);
    if (!ga) return;
    const Tensor& g = ctx.grad_output();
    const Tensor& x = a.value();
    for (std::int64_t i = 0; i < x.numel(); ++i) (*ga)[i] += g[i] * df(x[i]);
  });
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  check_same_tape("matmul", a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sb.size() != 2 || sa.empty() || sa.back() != sb[0]) shape_fail("matmul", sa, sb);
  const std::int64_t k = sb[0], n = sb[1];
  const std::int64_t m = shape_numel(sa) / std::max<std::int64_t>(k, 1);
  Shape so = sa;
  so.back() = n;
  Tensor out(so);
  gemm(m, n, k, a.value().ptr(), k, b.value().ptr(), n, out.ptr(), n, false);
  debug_finite("matmul", out);
  return a.tape().push(std::move(out), {a, b}, [a, b, m, n, k](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    if (Tensor* ga = ctx.grad(a)) {
      std::vector<Real> bt(static_cast<std::size_t>(n * k));
      detail::transpose(k, n, b.value().ptr(), bt.data());
      gemm(m, k, n, g.ptr(), n, bt.data(), k, ga->ptr(), k, true);
    }
    if (Tensor* gb = ctx.grad(b)) {
      std::vector<Real> at(static_cast<std::size_t>(m * k));
      detail::transpose(m, k, a.value().ptr(), at.data());
      gemm(k, n, m, at.data(), m, g.ptr(), n, gb->ptr(), n, true);
    }
  });
}

Var transpose(const Var& a) {
  const Shape& s = a.shape();
  if (s.size() != 2) throw ShapeError("transpose: needs rank 2, got " + shape_str(s));
  Tensor out(Shape{s[1], s[0]});
  detail::transpose(s[0], s[1], a.value().ptr(), out.ptr());
  return a.tape().push(std::move(out), {a}, [a](BackwardContext& ctx) {
    Tensor* ga = ctx.grad(a);
    if (!ga) return;
    const Shape& s = a.shape();
    std::vector<Real> t(static_cast<std::size_t>(s[0] * s[1]));
    detail::transpose(s[1], s[0], ctx.grad_output().ptr(), t.data());
    for (std::size_t i = 0; i < t.size(); ++i) (*ga)[static_cast<std::int64_t>(i)] += t[i];
  });
}

Var add(const Var& a, const Var& b) {
  check_same_tape("add", a, b);
  const std::int64_t inner = suffix_inner("add", a.shape(), b.shape());
  const std::int64_t outer = inner ? a.value().numel() / inner : 0;
  Tensor out = a.value();
  const Real* bp = b.value().ptr();
  for (std::int64_t o = 0; o < outer; ++o) {
    Real* row = out.ptr() + o * inner;
    for (std::int64_t i = 0; i < inner; ++i) row[i] += bp[i];
  }
  debug_finite("add", out);
  return a.tape().push(std::move(out), {a, b}, [a, b, inner, outer](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    if (Tensor* ga = ctx.grad(a)) {
      for (std::int64_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i];
    }
    if (Tensor* gb = ctx.grad(b)) {
      for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t i = 0; i < inner; ++i) (*gb)[i] += g[o * inner + i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_tape("sub", a, b);
  const std::int64_t inner = suffix_inner("sub", a.shape(), b.shape());
  const std::int64_t outer = inner ? a.value().numel() / inner : 0;
  Tensor out = a.value();
  const Real* bp = b.value().ptr();
  for (std::int64_t o = 0; o < outer; ++o) {
    Real* row = out.ptr() + o * inner;
    for (std::int64_t i = 0; i < inner; ++i) row[i] -= bp[i];
  }
  debug_finite("sub", out);
  return a.tape().push(std::move(out), {a, b}, [a, b, inner, outer](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    if (Tensor* ga = ctx.grad(a)) {
      for (std::int64_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i];
    }
    if (Tensor* gb = ctx.grad(b)) {
      for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t i = 0; i < inner; ++i) (*gb)[i] -= g[o * inner + i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_tape("mul", a, b);
  const std::int64_t inner = suffix_inner("mul", a.shape(), b.shape());
  const std::int64_t outer = inner ? a.value().numel() / inner : 0;
  Tensor out = a.value();
  const Real* bp = b.value().ptr();
  for (std::int64_t o = 0; o < outer; ++o) {
    Real* row = out.ptr() + o * inner;
    for (std::int64_t i = 0; i < inner; ++i) row[i] *= bp[i];
  }
  debug_finite("mul", out);
  return a.tape().push(std::move(out), {a, b}, [a, b, inner, outer](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (Tensor* ga = ctx.grad(a)) {
      for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t i = 0; i < inner; ++i) (*ga)[o * inner + i] += g[o * inner + i] * bv[i];
    }
    if (Tensor* gb = ctx.grad(b)) {
      for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t i = 0; i < inner; ++i) (*gb)[i] += g[o * inner + i] * av[o * inner + i];
    }
  });
}

Var scale(const Var& a, Real s) {
  return unary("scale", a, [s](Real x) { return x * s; }, [s](Real) { return s; });
}

Var square(const Var& a) {
  return unary("square", a, [](Real x) { return x * x; }, [](Real x) { return Real(2) * x; });
}

Var exp(const Var& a) {
  return unary("exp", a, [](Real x) { return std::exp(x); }, [](Real x) { return std::exp(x); });
}

Var log(const Var& a) {
  return unary("log", a, [](Real x) { return std::log(x); }, [](Real x) { return Real(1) / x; });
}

Var gelu(const Var& a) {
  constexpr Real kInvSqrt2 = Real(0.70710678118654752440);
  constexpr Real kInvSqrt2Pi = Real(0.39894228040143267794);
  return unary(
      "gelu", a, [](Real x) { return Real(0.5) * x * (Real(1) + std::erf(x * kInvSqrt2)); },
      [](Real x) {
        return Real(0.5) * (Real(1) + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(Real(-0.5) * x * x);
      });
}

Var silu(const Var& a) {
  return unary(
      "silu", a, [](Real x) { return x / (Real(1) + std::exp(-x)); },
      [](Real x) {
        const Real s = Real(1) / (Real(1) + std::exp(-x));
        return s * (Real(1) + x * (Real(1) - s));
      });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, Real eps) {
  check_same_tape("layer_norm", x, gamma);
  check_same_tape("layer_norm", x, beta);
  const std::int64_t d = last_dim("layer_norm", x.shape());
  if (gamma.shape() != Shape{d}) shape_fail("layer_norm", x.shape(), gamma.shape());
  if (beta.shape() != Shape{d}) shape_fail("layer_norm", x.shape(), beta.shape());
  const std::int64_t rows = d ? x.value().numel() / d : 0;
  Tensor out(x.shape());
  auto xhat = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(rows * d));
  auto rstd = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(rows));
  const Real* g = gamma.value().ptr();
  const Real* bt = beta.value().ptr();
  for (std::int64_t r = 0; r < rows; ++r) {
    const Real* xr = x.value().ptr() + r * d;
    Real mu = 0;
    for (std::int64_t i = 0; i < d; ++i) mu += xr[i];
    mu /= Real(d);
    Real var = 0;
    for (std::int64_t i = 0; i < d; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= Real(d);
    const Real rs = Real(1) / std::sqrt(var + eps);
    (*rstd)[static_cast<std::size_t>(r)] = rs;
    Real* xh = xhat->data() + r * d;
    Real* yr = out.ptr() + r * d;
    for (std::int64_t i = 0; i < d; ++i) {
      xh[i] = (xr[i] - mu) * rs;
      yr[i] = xh[i] * g[i] + bt[i];
    }
  }
  debug_finite("layer_norm", out);
  return x.tape().push(std::move(out), {x, gamma, beta}, [x, gamma, beta, xhat, rstd, rows, d](BackwardContext& ctx) {
    const Tensor& gy = ctx.grad_output();
    Tensor* gx = ctx.grad(x);
    Tensor* gg = ctx.grad(gamma);
    Tensor* gb = ctx.grad(beta);
    const Real* g = gamma.value().ptr();
    std::vector<Real> dxh(static_cast<std::size_t>(d));
    for (std::int64_t r = 0; r < rows; ++r) {
      const Real* gyr = gy.ptr() + r * d;
      const Real* xh = xhat->data() + r * d;
      if (gg)
        for (std::int64_t i = 0; i < d; ++i) (*gg)[i] += gyr[i] * xh[i];
      if (gb)
        for (std::int64_t i = 0; i < d; ++i) (*gb)[i] += gyr[i];
      if (!gx) continue;
      Real m1 = 0, m2 = 0;
      for (std::int64_t i = 0; i < d; ++i) {
        dxh[static_cast<std::size_t>(i)] = gyr[i] * g[i];
        m1 += dxh[static_cast<std::size_t>(i)];
        m2 += dxh[static_cast<std::size_t>(i)] * xh[i];
      }
      m1 /= Real(d);
      m2 /= Real(d);
      const Real rs = (*rstd)[static_cast<std::size_t>(r)];
      Real* gxr = gx->ptr() + r * d;
      for (std::int64_t i = 0; i < d; ++i) gxr[i] += rs * (dxh[static_cast<std::size_t>(i)] - m1 - xh[i] * m2);
    }
  });
}

Var softmax(const Var& x) {
  const std::int64_t d = last_dim("softmax", x.shape());
  const std::int64_t rows = d ? x.value().numel() / d : 0;
  Tensor out(x.shape());
  for (std::int64_t r = 0; r < rows; ++r) {
    const Real* xr = x.value().ptr() + r * d;
    Real* yr = out.ptr() + r * d;
    const Real mx = *std::max_element(xr, xr + d);
    Real s = 0;
    for (std::int64_t i = 0; i < d; ++i) s += (yr[i] = std::exp(xr[i] - mx));
    for (std::int64_t i = 0; i < d; ++i) yr[i] /= s;
  }
  debug_finite("softmax", out);
  auto y = std::make_shared<Tensor>(out);
  return x.tape().push(std::move(out), {x}, [x, y, rows, d](BackwardContext& ctx) {
    Tensor* gx = ctx.grad(x);
    if (!gx) return;
    const Tensor& g = ctx.grad_output();
    const Tensor& yv = *y;
    for (std::int64_t r = 0; r < rows; ++r) {
      Real dot = 0;
      for (std::int64_t i = 0; i < d; ++i) dot += g[r * d + i] * yv[r * d + i];
      for (std::int64_t i = 0; i < d; ++i) (*gx)[r * d + i] += yv[r * d + i] * (g[r * d + i] - dot);
    }
  });
}

Var log_softmax(const Var& x) {
  const std::int64_t d = last_dim("log_softmax", x.shape());
  const std::int64_t rows = d ? x.value().numel() / d : 0;
  Tensor out(x.shape());
  auto probs = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(rows * d));
  for (std::int64_t r = 0; r < rows; ++r) {
    const Real* xr = x.value().ptr() + r * d;
    Real* yr = out.ptr() + r * d;
    const Real mx = *std::max_element(xr, xr + d);
    Real s = 0;
    for (std::int64_t i = 0; i < d; ++i) s += std::exp(xr[i] - mx);
    const Real lse = mx + std::log(s);
    for (std::int64_t i = 0; i < d; ++i) {
      yr[i] = xr[i] - lse;
      (*probs)[static_cast<std::size_t>(r * d + i)] = std::exp(yr[i]);
    }
  }
  debug_finite("log_softmax", out);
  return x.tape().push(std::move(out), {x}, [x, probs, rows, d](BackwardContext& ctx) {
    Tensor* gx = ctx.grad(x);
    if (!gx) return;
    const Tensor& g = ctx.grad_output();
    for (std::int64_t r = 0; r < rows; ++r) {
      Real s = 0;
      for (std::int64_t i = 0; i < d; ++i) s += g[r * d + i];
      for (std::int64_t i = 0; i < d; ++i)
        (*gx)[r * d + i] += g[r * d + i] - (*probs)[static_cast<std::size_t>(r * d + i)] * s;
    }
  });
}

Var l2_normalize(const Var& x) {
  const std::int64_t d = last_dim("l2_normalize", x.shape());
  const std::int64_t rows = d ? x.value().numel() / d : 0;
  Tensor out(x.shape());
  auto norms = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) {
    const Real* xr = x.value().ptr() + r * d;
    Real s = 0;
    for (std::int64_t i = 0; i < d; ++i) s += xr[i] * xr[i];
    const Real nrm = std::sqrt(s);
    if (!(nrm > Real(1e-12))) {
      throw NumericError("l2_normalize: row " + std::to_string(r) + " has zero norm");
    }
    (*norms)[static_cast<std::size_t>(r)] = nrm;
    for (std::int64_t i = 0; i < d; ++i) out[r * d + i] = xr[i] / nrm;
  }
  auto y = std::make_shared<Tensor>(out);
  return x.tape().push(std::move(out), {x}, [x, y, norms, rows, d](BackwardContext& ctx) {
    Tensor* gx = ctx.grad(x);
    if (!gx) return;
    const Tensor& g = ctx.grad_output();
    for (std::int64_t r = 0; r < rows; ++r) {
      Real dot = 0;
      for (std::int64_t i = 0; i < d; ++i) dot += g[r * d + i] * (*y)[r * d + i];
      const Real inv = Real(1) / (*norms)[static_cast<std::size_t>(r)];
      for (std::int64_t i = 0; i < d; ++i) (*gx)[r * d + i] += (g[r * d + i] - (*y)[r * d + i] * dot) * inv;
    }
  });
}

namespace {

// out[c * L + j] = x[j * W + c] for one head's dh columns.
void stage_head(const Real* x, std::int64_t L, std::int64_t W, std::int64_t dh, Real* out) {
  for (std::int64_t j = 0; j < L; ++j)
    for (std::int64_t c = 0; c < dh; ++c) out[c * L + j] = x[j * W + c];
}

// y += a * x
inline void axpy(Real a, const Real* __restrict x, Real* __restrict y, std::int64_t n) {
  for (std::int64_t c = 0; c < n; ++c) y[c] = std::fma(a, x[c], y[c]);
}

// s[j] = sum_c a[c] * t[c * L + j], accumulated in ascending c for every j.
void head_scores(const Real* a, const Real* t, std::int64_t L, std::int64_t dh, Real* s) {
  std::fill_n(s, L, Real(0));
  for (std::int64_t c = 0; c < dh; ++c) {
    const Real ac = a[c];
    const Real* tc = t + c * L;
    for (std::int64_t j = 0; j < L; ++j) s[j] = std::fma(ac, tc[j], s[j]);
  }
}

// p[j] = exp(p[j] - shift). The single-precision path is a branch-free
// polynomial so it vectorizes; it stays within about one ulp of std::exp.
void exp_shifted(Real* p, std::int64_t n, Real shift) {
  if constexpr (std::is_same_v<Real, float>) {
    for (std::int64_t j = 0; j < n; ++j) {
      float x = p[j] - shift;
      x = x < -87.0f ? -87.0f : x;
      x = x > 88.0f ? 88.0f : x;
      const float k = std::floor(std::fma(x, 1.44269504088896341f, 0.5f));
      float r = std::fma(k, -0.693359375f, x);
      r = std::fma(k, 2.12194440e-4f, r);
      float y = 1.9875691500e-4f;
      y = std::fma(y, r, 1.3981999507e-3f);
      y = std::fma(y, r, 8.3334519073e-3f);
      y = std::fma(y, r, 4.1665795894e-2f);
      y = std::fma(y, r, 1.6666665459e-1f);
      y = std::fma(y, r, 5.0000001201e-1f);
      y = std::fma(y, r * r, r) + 1.0f;
      p[j] = y * std::bit_cast<float>((static_cast<std::int32_t>(k) + 127) << 23);
    }
  } else {
    for (std::int64_t j = 0; j < n; ++j) p[j] = std::exp(p[j] - shift);
  }
}

}  // namespace

Var attention(const Var& q, const Var& k, const Var& v, std::span<const std::uint8_t> key_mask, int heads) {
  check_same_tape("attention", q, k);
  check_same_tape("attention", q, v);
  const Shape& s = q.shape();
  if (s.size() != 3) throw ShapeError("attention: q must be [B,L,W], got " + shape_str(s));
  if (k.shape() != s) shape_fail("attention", s, k.shape());
  if (v.shape() != s) shape_fail("attention", s, v.shape());
  const std::int64_t B = s[0], L = s[1], W = s[2];
  if (heads <= 0 || W % heads != 0) {
    throw ShapeError("attention: width " + std::to_string(W) + " not divisible by " + std::to_string(heads) +
                     " heads");
  }
  if (static_cast<std::int64_t>(key_mask.size()) != B * L) {
    throw ShapeError("attention: mask holds " + std::to_string(key_mask.size()) + " flags for shape " +
                     shape_str(s));
  }
  const std::int64_t H = heads, dh = W / heads;
  const Real scl = Real(1) / std::sqrt(Real(dh));
  std::vector<std::uint8_t> mask(key_mask.begin(), key_mask.end());
  for (std::int64_t b = 0; b < B; ++b) {
    if (std::none_of(mask.begin() + b * L, mask.begin() + (b + 1) * L, [](std::uint8_t m) { return m != 0; })) {
      throw ShapeError("attention: batch element " + std::to_string(b) + " has no valid key");
    }
  }
  // Probabilities are kept for the backward pass only when one is recorded.
  const bool keep = q.requires_grad() || k.requires_grad() || v.requires_grad();
  auto probs = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(keep ? B * H * L * L : L), Real(0));
  Tensor out(s);
  const Real* qp = q.value().ptr();
  const Real* kp = k.value().ptr();
  const Real* vp = v.value().ptr();
  // Keys are staged head-major as [dh, L] so each score row is a vector sweep over keys.
  std::vector<Real> kt(static_cast<std::size_t>(dh * L));
  for (std::int64_t b = 0; b < B; ++b) {
    const std::uint8_t* mb = mask.data() + b * L;
    for (std::int64_t h = 0; h < H; ++h) {
      Real* P = keep ? probs->data() + ((b * H + h) * L) * L : nullptr;
      stage_head(kp + b * L * W + h * dh, L, W, dh, kt.data());
      for (std::int64_t i = 0; i < L; ++i) {
        if (!mb[i]) continue;
        const Real* qi = qp + (b * L + i) * W + h * dh;
        Real* pi = keep ? P + i * L : probs->data();
        head_scores(qi, kt.data(), L, dh, pi);
        Real mx = -std::numeric_limits<Real>::infinity();
        for (std::int64_t j = 0; j < L; ++j) {
          pi[j] *= scl;
          if (mb[j]) mx = std::max(mx, pi[j]);
        }
        exp_shifted(pi, L, mx);
        Real sum = 0;
        for (std::int64_t j = 0; j < L; ++j) {
          if (!mb[j]) {
            pi[j] = 0;
            continue;
          }
          sum += pi[j];
        }
        const Real inv = Real(1) / sum;
        Real* oi = out.ptr() + (b * L + i) * W + h * dh;
        for (std::int64_t j = 0; j < L; ++j) {
          if (!mb[j]) continue;
          pi[j] *= inv;
          const Real* vj = vp + (b * L + j) * W + h * dh;
          axpy(pi[j], vj, oi, dh);
        }
      }
    }
  }
  debug_finite("attention", out);
  return q.tape().push(std::move(out), {q, k, v}, [q, k, v, probs, mask = std::move(mask), B, L, W, H, dh, scl](
                                                      BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    Tensor* gq = ctx.grad(q);
    Tensor* gk = ctx.grad(k);
    Tensor* gv = ctx.grad(v);
    const Real* qp = q.value().ptr();
    const Real* kp = k.value().ptr();
    const Real* vp = v.value().ptr();
    std::vector<Real> ds(static_cast<std::size_t>(L));
    std::vector<Real> vt(static_cast<std::size_t>(dh * L));
    for (std::int64_t b = 0; b < B; ++b) {
      const std::uint8_t* mb = mask.data() + b * L;
      for (std::int64_t h = 0; h < H; ++h) {
        const Real* P = probs->data() + ((b * H + h) * L) * L;
        stage_head(vp + b * L * W + h * dh, L, W, dh, vt.data());
        for (std::int64_t i = 0; i < L; ++i) {
          if (!mb[i]) continue;
          const Real* gi = g.ptr() + (b * L + i) * W + h * dh;
          const Real* pi = P + i * L;
          head_scores(gi, vt.data(), L, dh, ds.data());
          Real acc = 0;
          for (std::int64_t j = 0; j < L; ++j) {
            if (!mb[j]) continue;
            acc += pi[j] * ds[static_cast<std::size_t>(j)];
            if (gv) {
              Real* gvj = gv->ptr() + (b * L + j) * W + h * dh;
              axpy(pi[j], gi, gvj, dh);
            }
          }
          const Real* qi = qp + (b * L + i) * W + h * dh;
          Real* gqi = gq ? gq->ptr() + (b * L + i) * W + h * dh : nullptr;
          for (std::int64_t j = 0; j < L; ++j) {
            if (!mb[j]) continue;
            const Real dsj = pi[j] * (ds[static_cast<std::size_t>(j)] - acc) * scl;
            const Real* kj = kp + (b * L + j) * W + h * dh;
            if (gqi)
              axpy(dsj, kj, gqi, dh);
            if (gk) {
              Real* gkj = gk->ptr() + (b * L + j) * W + h * dh;
              axpy(dsj, qi, gkj, dh);
            }
          }
        }
      }
    }
  });
}

Var gather_rows(const Var& table, std::span<const std::int64_t> ids) {
  const Shape& s = table.shape();
  if (s.size() != 2) throw ShapeError("gather_rows: table must be rank 2, got " + shape_str(s));
  const std::int64_t V = s[0], D = s[1];
  const auto n = static_cast<std::int64_t>(ids.size());
  Tensor out(Shape{n, D});
  for (std::int64_t r = 0; r < n; ++r) {
    const std::int64_t id = ids[static_cast<std::size_t>(r)];
    if (id < 0 || id >= V) {
      throw std::out_of_range("gather_rows: id " + std::to_string(id) + " outside table of " + std::to_string(V) +
                              " rows");
    }
    std::copy_n(table.value().ptr() + id * D, D, out.ptr() + r * D);
  }
  std::vector<std::int64_t> idv(ids.begin(), ids.end());
  return table.tape().push(std::move(out), {table}, [table, idv = std::move(idv), D](BackwardContext& ctx) {
    Tensor* gt = ctx.grad(table);
    if (!gt) return;
    const Tensor& g = ctx.grad_output();
    for (std::size_t r = 0; r < idv.size(); ++r) {
      Real* dst = gt->ptr() + idv[r] * D;
      const Real* src = g.ptr() + static_cast<std::int64_t>(r) * D;
      for (std::int64_t c = 0; c < D; ++c) dst[c] += src[c];
    }
  });
}

Var slice(const Var& x, int axis, std::int64_t start, std::int64_t length) {
  const Shape& s = x.shape();
  if (axis < 0) axis += static_cast<int>(s.size());
  if (axis < 0 || axis >= static_cast<int>(s.size()) || start < 0 || length < 0 ||
      start + length > s[static_cast<std::size_t>(axis)]) {
    throw ShapeError("slice: axis " + std::to_string(axis) + " range [" + std::to_string(start) + ", +" +
                     std::to_string(length) + ") invalid for " + shape_str(s));
  }
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) inner *= s[i];
  const std::int64_t n = s[static_cast<std::size_t>(axis)];
  Shape so = s;
  so[static_cast<std::size_t>(axis)] = length;
  Tensor out(so);
  for (std::int64_t o = 0; o < outer; ++o)
    std::copy_n(x.value().ptr() + (o * n + start) * inner, length * inner, out.ptr() + o * length * inner);
  return x.tape().push(std::move(out), {x}, [x, outer, inner, n, start, length](BackwardContext& ctx) {
    Tensor* gx = ctx.grad(x);
    if (!gx) return;
    const Tensor& g = ctx.grad_output();
    for (std::int64_t o = 0; o < outer; ++o) {
      Real* dst = gx->ptr() + (o * n + start) * inner;
      const Real* src = g.ptr() + o * length * inner;
      for (std::int64_t i = 0; i < length * inner; ++i) dst[i] += src[i];
    }
  });
}

Var concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& s0 = parts.front().shape();
  if (axis < 0) axis += static_cast<int>(s0.size());
  if (axis < 0 || axis >= static_cast<int>(s0.size())) throw ShapeError("concat: bad axis for " + shape_str(s0));
  const auto ax = static_cast<std::size_t>(axis);
  std::int64_t total = 0;
  for (const Var& p : parts) {
    check_same_tape("concat", parts.front(), p);
    const Shape& sp = p.shape();
    if (sp.size() != s0.size()) shape_fail("concat", s0, sp);
    for (std::size_t i = 0; i < sp.size(); ++i)
      if (i != ax && sp[i] != s0[i]) shape_fail("concat", s0, sp);
    total += sp[ax];
  }
  std::int64_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= s0[i];
  for (std::size_t i = ax + 1; i < s0.size(); ++i) inner *= s0[i];
  Shape so = s0;
  so[ax] = total;
  Tensor out(so);
  std::vector<std::int64_t> offsets;
  std::int64_t off = 0;
  for (const Var& p : parts) {
    const std::int64_t n = p.shape()[ax];
    offsets.push_back(off);
    for (std::int64_t o = 0; o < outer; ++o)
      std::copy_n(p.value().ptr() + o * n * inner, n * inner, out.ptr() + (o * total + off) * inner);
    off += n;
  }
  return parts.front().tape().push(
      std::move(out), parts, [parts, offsets = std::move(offsets), outer, inner, total, ax](BackwardContext& ctx) {
        const Tensor& g = ctx.grad_output();
        for (std::size_t k = 0; k < parts.size(); ++k) {
          Tensor* gp = ctx.grad(parts[k]);
          if (!gp) continue;
          const std::int64_t n = parts[k].shape()[ax];
          for (std::int64_t o = 0; o < outer; ++o) {
            const Real* src = g.ptr() + (o * total + offsets[k]) * inner;
            Real* dst = gp->ptr() + o * n * inner;
            for (std::int64_t i = 0; i < n * inner; ++i) dst[i] += src[i];
          }
        }
      });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().push(std::move(out), {x}, [x](BackwardContext& ctx) {
    Tensor* gx = ctx.grad(x);
    if (!gx) return;
    const Tensor& g = ctx.grad_output();
    for (std::int64_t i = 0; i < g.numel(); ++i) (*gx)[i] += g[i];
  });
}

Var sum(const Var& x) {
  Real s = 0;
  for (Real v : x.value().data()) s += v;
  return x.tape().push(Tensor::scalar(s), {x}, [x](BackwardContext& ctx) {
    Tensor* gx = ctx.grad(x);
    if (!gx) return;
    const Real g = ctx.grad_output().item();
    for (std::int64_t i = 0; i < gx->numel(); ++i) (*gx)[i] += g;
  });
}

Var mean(const Var& x) {
  const std::int64_t n = x.value().numel();
  if (n == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(x), Real(1) / Real(n));
}

Var sum_last(const Var& x) {
  const std::int64_t d = last_dim("sum_last", x.shape());
  const std::int64_t rows = d ? x.value().numel() / d : 0;
  Shape so(x.shape().begin(), x.shape().end() - 1);
  Tensor out(so);
  for (std::int64_t r = 0; r < rows; ++r) {
    Real s = 0;
    for (std::int64_t i = 0; i < d; ++i) s += x.value()[r * d + i];
    out[r] = s;
  }
  return x.tape().push(std::move(out), {x}, [x, rows, d](BackwardContext& ctx) {
    Tensor* gx = ctx.grad(x);
    if (!gx) return;
    const Tensor& g = ctx.grad_output();
    for (std::int64_t r = 0; r < rows; ++r)
      for (std::int64_t i = 0; i < d; ++i) (*gx)[r * d + i] += g[r];
  });
}

Var stop_gradient(const Var& x) { return x.tape().constant(x.value()); }

}  // namespace ram::ops
