// SPDX-License-Identifier: Apache-2.0
#include "ram/eval/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "ram/numerics/rng.hpp"
#include "ram/numerics/tensor.hpp"

namespace ram {

namespace {

using Mat = Eigen::MatrixXd;

Mat to_mat(std::span<const double> m, std::int64_t dim) {
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(m.data(), dim, dim);
}

constexpr double kEigenTolerance = 1e-6;

Mat sqrtm_sym(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
  if (es.info() != Eigen::Success) throw NumericError("sqrtm: eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < -kEigenTolerance * std::max(1.0, ev.cwiseAbs().maxCoeff())) {
      throw NumericError("sqrtm: matrix is not positive semidefinite (eigenvalue " + std::to_string(ev[i]) + ")");
    }
    ev[i] = std::sqrt(std::max(0.0, ev[i]));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

Features Features::select(std::span<const std::size_t> idx) const {
  Features out(static_cast<std::int64_t>(idx.size()), dim);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(row(static_cast<std::int64_t>(idx[i])), dim, out.row(static_cast<std::int64_t>(i)));
  }
  return out;
}

double euclidean(const double* a, const double* b, std::int64_t dim) {
  double s = 0;
  for (std::int64_t i = 0; i < dim; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

GaussianFit fit_gaussian(const Features& f) {
  if (f.n < 2 || f.dim < 1) throw std::invalid_argument("fit_gaussian: need at least 2 samples");
  GaussianFit g;
  g.dim = f.dim;
  g.samples = f.n;
  g.mean.assign(static_cast<std::size_t>(f.dim), 0.0);
  for (std::int64_t i = 0; i < f.n; ++i) {
    for (std::int64_t j = 0; j < f.dim; ++j) g.mean[j] += f.row(i)[j];
  }
  for (auto& m : g.mean) m /= static_cast<double>(f.n);
  g.cov.assign(static_cast<std::size_t>(f.dim * f.dim), 0.0);
  std::vector<double> c(static_cast<std::size_t>(f.dim));
  for (std::int64_t i = 0; i < f.n; ++i) {
    for (std::int64_t j = 0; j < f.dim; ++j) c[j] = f.row(i)[j] - g.mean[j];
    for (std::int64_t a = 0; a < f.dim; ++a) {
      for (std::int64_t b = a; b < f.dim; ++b) g.cov[a * f.dim + b] += c[a] * c[b];
    }
  }
  const bool regularize = f.n < kCovRegularizeFactor * f.dim;
  for (std::int64_t a = 0; a < f.dim; ++a) {
    for (std::int64_t b = a; b < f.dim; ++b) {
      double v = g.cov[a * f.dim + b] / static_cast<double>(f.n - 1);
      if (a == b && regularize) v += kCovRegularizer;
      g.cov[a * f.dim + b] = v;
      g.cov[b * f.dim + a] = v;
    }
  }
  return g;
}

std::vector<double> sqrtm_psd(std::span<const double> m, std::int64_t dim) {
  if (static_cast<std::int64_t>(m.size()) != dim * dim) throw ShapeError("sqrtm_psd: matrix size mismatch");
  const Mat r = sqrtm_sym(to_mat(m, dim));
  std::vector<double> out(static_cast<std::size_t>(dim * dim));
  for (std::int64_t i = 0; i < dim; ++i) {
    for (std::int64_t j = 0; j < dim; ++j) out[i * dim + j] = r(i, j);
  }
  return out;
}

double frechet_distance(const GaussianFit& a, const GaussianFit& b) {
  if (a.dim != b.dim) {
    throw ShapeError("frechet_distance: dimension " + std::to_string(a.dim) + " vs " + std::to_string(b.dim));
  }
  const Mat sa = to_mat(a.cov, a.dim), sb = to_mat(b.cov, b.dim);
  const Mat ra = sqrtm_sym(sa);
  const Mat inner = ra * sb * ra;
  const Mat root = sqrtm_sym(inner);
  const double scale = std::max(1e-12, inner.norm());
  if ((root * root - inner).norm() > 1e-5 * scale) throw NumericError("frechet_distance: square root check failed");
  double mean_term = 0;
  for (std::int64_t i = 0; i < a.dim; ++i) mean_term += (a.mean[i] - b.mean[i]) * (a.mean[i] - b.mean[i]);
  const double d = mean_term + sa.trace() + sb.trace() - 2.0 * root.trace();
  return std::max(0.0, d);
}

RPrecision r_precision(const Features& script, const Features& motion, std::uint64_t seed, std::int64_t n_pools) {
  if (script.n != motion.n || script.dim != motion.dim) throw ShapeError("r_precision: pair sets differ in shape");
  if (script.n < kRPrecisionPool) {
    throw std::invalid_argument("r_precision: need at least " + std::to_string(kRPrecisionPool) + " pairs, got " +
                                std::to_string(script.n));
  }
  Rng rng = Rng::stream(seed, "r_precision");
  const std::int64_t N = script.n;
  const std::int64_t pools = n_pools > 0 ? n_pools : N;
  std::vector<std::size_t> others(static_cast<std::size_t>(N));
  std::int64_t hit[3] = {0, 0, 0};
  for (std::int64_t p = 0; p < pools; ++p) {
    const std::int64_t q = n_pools > 0 ? static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(N))) : p;
    // Partial Fisher-Yates over all rows except q.
    std::iota(others.begin(), others.end(), std::size_t{0});
    std::swap(others[static_cast<std::size_t>(q)], others.back());
    const std::size_t avail = static_cast<std::size_t>(N - 1);
    const double match = euclidean(script.row(q), motion.row(q), script.dim);
    int closer = 0;
    for (int k = 0; k < kRPrecisionPool - 1; ++k) {
      const std::size_t j = static_cast<std::size_t>(k) + rng.below(avail - static_cast<std::size_t>(k));
      std::swap(others[static_cast<std::size_t>(k)], others[j]);
      if (euclidean(script.row(q), motion.row(static_cast<std::int64_t>(others[static_cast<std::size_t>(k)])), script.dim) <
          match) {
        ++closer;
      }
    }
    for (int k = 0; k < 3; ++k) hit[k] += closer <= k ? 1 : 0;
  }
  RPrecision r;
  r.pools = pools;
  r.top1 = static_cast<double>(hit[0]) / static_cast<double>(pools);
  r.top2 = static_cast<double>(hit[1]) / static_cast<double>(pools);
  r.top3 = static_cast<double>(hit[2]) / static_cast<double>(pools);
  return r;
}

double mm_dist(const Features& script, const Features& motion) {
  if (script.n != motion.n || script.dim != motion.dim) throw ShapeError("mm_dist: pair sets differ in shape");
  if (script.n < 1) throw std::invalid_argument("mm_dist: need at least one pair");
  double s = 0;
  for (std::int64_t i = 0; i < script.n; ++i) s += euclidean(script.row(i), motion.row(i), script.dim);
  return s / static_cast<double>(script.n);
}

double diversity(const Features& f, int n_pairs, std::uint64_t seed) {
  if (n_pairs < 1 || 2 * static_cast<std::int64_t>(n_pairs) > f.n) {
    throw std::invalid_argument("diversity: " + std::to_string(n_pairs) + " disjoint pairs need " +
                                std::to_string(2 * n_pairs) + " samples, have " + std::to_string(f.n));
  }
  std::vector<std::size_t> order(static_cast<std::size_t>(f.n));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::lexicographical_compare(f.row(static_cast<std::int64_t>(a)), f.row(static_cast<std::int64_t>(a)) + f.dim,
                                        f.row(static_cast<std::int64_t>(b)), f.row(static_cast<std::int64_t>(b)) + f.dim);
  });
  Rng rng = Rng::stream(seed, "diversity");
  for (std::size_t i = 0; i < static_cast<std::size_t>(2 * n_pairs); ++i) {
    const std::size_t j = i + rng.below(order.size() - i);
    std::swap(order[i], order[j]);
  }
  double s = 0;
  for (int p = 0; p < n_pairs; ++p) {
    s += euclidean(f.row(static_cast<std::int64_t>(order[2 * p])), f.row(static_cast<std::int64_t>(order[2 * p + 1])), f.dim);
  }
  return s / n_pairs;
}

double multimodality(std::span<const Features> groups) {
  if (groups.empty()) throw std::invalid_argument("multimodality: no groups");
  double total = 0;
  for (const auto& g : groups) {
    if (g.n < 2) throw std::invalid_argument("multimodality: each group needs at least 2 repeats");
    double s = 0;
    std::int64_t pairs = 0;
    for (std::int64_t i = 0; i < g.n; ++i) {
      for (std::int64_t j = i + 1; j < g.n; ++j, ++pairs) s += euclidean(g.row(i), g.row(j), g.dim);
    }
    total += s / static_cast<double>(pairs);
  }
  return total / static_cast<double>(groups.size());
}

}  // namespace ram
