// SPDX-License-Identifier: Apache-2.0
#include "gemm.hpp"

#include <algorithm>
#include <cmath>

namespace ram::detail {
namespace {

constexpr std::int64_t kPanel = 64;

// Rows times a full-width column panel; accumulators stay in registers. Every
// kernel applies the same fused multiply-add per element, so the row grouping
// never changes the bits.
template <int R>
inline void rows_panel(const Real* a, std::int64_t lda, std::int64_t k, const Real* b, std::int64_t ldb, Real* c,
                       std::int64_t ldc, bool accumulate) {
  Real acc[R][kPanel];
  for (int r = 0; r < R; ++r)
    for (std::int64_t j = 0; j < kPanel; ++j) acc[r][j] = accumulate ? c[r * ldc + j] : Real(0);
  for (std::int64_t p = 0; p < k; ++p) {
    const Real* brow = b + p * ldb;
    for (int r = 0; r < R; ++r) {
      const Real av = a[r * lda + p];
#pragma GCC ivdep
      for (std::int64_t j = 0; j < kPanel; ++j) acc[r][j] = std::fma(av, brow[j], acc[r][j]);
    }
  }
  for (int r = 0; r < R; ++r)
    for (std::int64_t j = 0; j < kPanel; ++j) c[r * ldc + j] = acc[r][j];
}

inline void row_tail(const Real* a, std::int64_t k, const Real* b, std::int64_t ldb, Real* c, std::int64_t width,
                     bool accumulate) {
  Real acc[kPanel];
  for (std::int64_t j = 0; j < width; ++j) acc[j] = accumulate ? c[j] : Real(0);
  for (std::int64_t p = 0; p < k; ++p) {
    const Real av = a[p];
    const Real* brow = b + p * ldb;
    for (std::int64_t j = 0; j < width; ++j) acc[j] = std::fma(av, brow[j], acc[j]);
  }
  for (std::int64_t j = 0; j < width; ++j) c[j] = acc[j];
}

}  // namespace

void gemm(std::int64_t m, std::int64_t n, std::int64_t k, const Real* a, std::int64_t lda, const Real* b,
          std::int64_t ldb, Real* c, std::int64_t ldc, bool accumulate) {
  const std::int64_t full = n / kPanel * kPanel;
  constexpr std::int64_t kRows = 4;
  const std::int64_t grouped = m / kRows * kRows;
  for (std::int64_t j0 = 0; j0 < full; j0 += kPanel) {
    for (std::int64_t i = 0; i < grouped; i += kRows)
      rows_panel<kRows>(a + i * lda, lda, k, b + j0, ldb, c + i * ldc + j0, ldc, accumulate);
    for (std::int64_t i = grouped; i < m; ++i)
      rows_panel<1>(a + i * lda, lda, k, b + j0, ldb, c + i * ldc + j0, ldc, accumulate);
  }
  if (full < n) {
    for (std::int64_t i = 0; i < m; ++i)
      row_tail(a + i * lda, k, b + full, ldb, c + i * ldc + full, n - full, accumulate);
  }
}

void transpose(std::int64_t rows, std::int64_t cols, const Real* in, Real* out) {
  constexpr std::int64_t kBlock = 32;
  for (std::int64_t r0 = 0; r0 < rows; r0 += kBlock) {
    const std::int64_t r1 = std::min(rows, r0 + kBlock);
    for (std::int64_t c0 = 0; c0 < cols; c0 += kBlock) {
      const std::int64_t c1 = std::min(cols, c0 + kBlock);
      for (std::int64_t r = r0; r < r1; ++r)
        for (std::int64_t c = c0; c < c1; ++c) out[c * rows + r] = in[r * cols + c];
    }
  }
}

}  // namespace ram::detail
