// SPDX-License-Identifier: Apache-2.0
// Distribution and retrieval metrics over fixed-dimension feature sets.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace ram {

/// n feature vectors of `dim` values, row-major, in double precision.
struct Features {
  std::int64_t n = 0;
  std::int64_t dim = 0;
  std::vector<double> data;

  Features() = default;
  Features(std::int64_t rows, std::int64_t cols) : n(rows), dim(cols), data(static_cast<std::size_t>(rows * cols)) {}
  double* row(std::int64_t i) { return data.data() + i * dim; }
  const double* row(std::int64_t i) const { return data.data() + i * dim; }
  /// Rows picked by index (repeats allowed).
  Features select(std::span<const std::size_t> idx) const;
};

double euclidean(const double* a, const double* b, std::int64_t dim);

struct GaussianFit {
  std::int64_t dim = 0;
  std::int64_t samples = 0;
  std::vector<double> mean;  // [dim]
  std::vector<double> cov;   // [dim * dim], symmetric
};

inline constexpr double kCovRegularizer = 1e-6;
inline constexpr int kCovRegularizeFactor = 5;

/// Unbiased covariance; kCovRegularizer * I is added when samples < 5 * dim.
GaussianFit fit_gaussian(const Features& f);

/// Symmetric PSD square root by eigendecomposition; negative eigenvalues
/// within -1e-6 are treated as zero, larger ones raise NumericError.
std::vector<double> sqrtm_psd(std::span<const double> m, std::int64_t dim);

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)); the cross term is
/// Tr((S_a^(1/2) S_b S_a^(1/2))^(1/2)). Small negative results clip to 0.
double frechet_distance(const GaussianFit& a, const GaussianFit& b);

inline constexpr int kRPrecisionPool = 32;

struct RPrecision {
  double top1 = 0, top2 = 0, top3 = 0;
  std::int64_t pools = 0;
};

/// Each pool holds one query's matched motion and 31 distinct distractors.
/// With n_pools == 0 every pair serves as a query once; otherwise queries are
/// drawn uniformly. Rank counts distractors strictly closer than the match.
RPrecision r_precision(const Features& script, const Features& motion, std::uint64_t seed, std::int64_t n_pools = 0);

double mm_dist(const Features& script, const Features& motion);

inline constexpr int kDiversityPairs = 300;
inline constexpr int kMultimodalityRepeats = 10;

/// Mean distance over n_pairs disjoint random pairs. Rows are put in
/// canonical (lexicographic) order before pairing, so input order is irrelevant.
double diversity(const Features& f, int n_pairs, std::uint64_t seed);

/// Mean over groups of the mean pairwise distance within each group.
double multimodality(std::span<const Features> groups);

}  // namespace ram
