// SPDX-License-Identifier: Apache-2.0
// Row-independent dense matrix multiply.
//
// Every output element is accumulated over k in ascending order by the same
// code path regardless of how many rows are in the call, so a row's result is
// bit-identical whether it is computed alone or inside a larger batch.
#pragma once

#include <cstdint>

#include "ram/numerics/tensor.hpp"

namespace ram::detail {

/// C[M,N] (+)= A[M,K] * B[K,N], all row-major with explicit leading dimensions.
void gemm(std::int64_t m, std::int64_t n, std::int64_t k, const Real* a, std::int64_t lda, const Real* b,
          std::int64_t ldb, Real* c, std::int64_t ldc, bool accumulate);

/// out[cols, rows] = in[rows, cols]^T
void transpose(std::int64_t rows, std::int64_t cols, const Real* in, Real* out);

}  // namespace ram::detail
