// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "ram/eval/report.hpp"

using namespace ram;

namespace {

Features random_features(std::int64_t n, std::int64_t dim, std::uint64_t seed, double scale = 1.0, double shift = 0.0) {
  Rng rng(seed);
  Features f(n, dim);
  for (auto& v : f.data) v = shift + scale * rng.normal();
  return f;
}

GaussianFit diagonal(std::vector<double> mean, std::vector<double> var) {
  GaussianFit g;
  g.dim = static_cast<std::int64_t>(mean.size());
  g.samples = 1000;
  g.mean = std::move(mean);
  g.cov.assign(static_cast<std::size_t>(g.dim * g.dim), 0.0);
  for (std::int64_t i = 0; i < g.dim; ++i) g.cov[i * g.dim + i] = var[i];
  return g;
}

// R diag(var) R^T with R a rotation in the (0,1) plane.
GaussianFit rotated(const GaussianFit& g, double angle) {
  GaussianFit out = g;
  const std::int64_t d = g.dim;
  std::vector<double> R(static_cast<std::size_t>(d * d), 0.0);
  for (std::int64_t i = 0; i < d; ++i) R[i * d + i] = 1;
  R[0] = std::cos(angle);
  R[1] = -std::sin(angle);
  R[d] = std::sin(angle);
  R[d + 1] = std::cos(angle);
  for (std::int64_t i = 0; i < d; ++i) {
    double m = 0;
    for (std::int64_t k = 0; k < d; ++k) m += R[i * d + k] * g.mean[k];
    out.mean[i] = m;
    for (std::int64_t j = 0; j < d; ++j) {
      double s = 0;
      for (std::int64_t k = 0; k < d; ++k) s += R[i * d + k] * g.cov[k * d + k] * R[j * d + k];
      out.cov[i * d + j] = s;
    }
  }
  return out;
}

MotionSequence toy_motion(int length, std::uint16_t action, std::uint64_t seed) {
  MotionSequence s;
  s.length = length;
  s.dims = kNumChannels;
  s.fps = 20;
  s.script.tokens = {action};
  s.mask.assign(static_cast<std::size_t>(length), 1);
  s.frames.resize(static_cast<std::size_t>(length) * kNumChannels);
  Rng rng(seed);
  for (auto& v : s.frames) v = static_cast<float>(rng.normal());
  return s;
}

}  // namespace

TEST_CASE("Frechet distance matches the diagonal closed form") {
  const GaussianFit a = diagonal({0.5, -1.0, 2.0, 0.0}, {1.0, 0.25, 4.0, 0.5});
  const GaussianFit b = diagonal({0.0, 1.0, 2.5, -0.3}, {2.0, 1.0, 1.0, 0.1});
  double want = 0;
  for (int i = 0; i < 4; ++i) {
    const double va = a.cov[i * 4 + i], vb = b.cov[i * 4 + i];
    want += (a.mean[i] - b.mean[i]) * (a.mean[i] - b.mean[i]) + va + vb - 2 * std::sqrt(va * vb);
  }
  CHECK(std::abs(frechet_distance(a, b) - want) < 1e-6);
  CHECK(std::abs(frechet_distance(b, a) - want) < 1e-6);
  CHECK(frechet_distance(a, a) < 1e-9);
  // A common rotation leaves the distance unchanged while making both covariances full.
  CHECK(std::abs(frechet_distance(rotated(a, 0.3), rotated(b, 0.3)) - want) < 1e-6);
  CHECK_THROWS_AS(frechet_distance(a, diagonal({0}, {1})), ShapeError);
}

TEST_CASE("PSD square root") {
  const std::vector<double> m = {4, 1, 0, 1, 3, 0.5, 0, 0.5, 2};
  const auto r = sqrtm_psd(m, 3);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += r[i * 3 + k] * r[k * 3 + j];
      CHECK(s == doctest::Approx(m[i * 3 + j]).epsilon(1e-10).scale(1));
      CHECK(r[i * 3 + j] == doctest::Approx(r[j * 3 + i]).epsilon(1e-12));
    }
  }
  CHECK_NOTHROW(sqrtm_psd(std::vector<double>{1, 0, 0, -1e-9}, 2));
  CHECK_THROWS_AS(sqrtm_psd(std::vector<double>{1, 0, 0, -1e-3}, 2), NumericError);
  CHECK_THROWS_AS(sqrtm_psd(std::vector<double>{1, 0, 0}, 2), ShapeError);
}

TEST_CASE("Gaussian fit is unbiased and regularized when samples are few") {
  Features f(4, 2);
  f.data = {1, 0, 3, 0, 1, 2, 3, 2};
  const GaussianFit g = fit_gaussian(f);
  CHECK(g.mean == std::vector<double>{2, 1});
  // Sample variance 4/3 per axis, uncorrelated; 4 < 5 * 2 so the ridge is added.
  CHECK(g.cov[0] == doctest::Approx(4.0 / 3 + kCovRegularizer).epsilon(1e-12));
  CHECK(g.cov[3] == doctest::Approx(4.0 / 3 + kCovRegularizer).epsilon(1e-12));
  CHECK(g.cov[1] == 0);
  const Features many = random_features(20, 2, 3);
  const GaussianFit h = fit_gaussian(many);
  double v = 0;
  for (std::int64_t i = 0; i < 20; ++i) v += (many.row(i)[0] - h.mean[0]) * (many.row(i)[0] - h.mean[0]);
  CHECK(h.cov[0] == doctest::Approx(v / 19).epsilon(1e-12));
  CHECK_THROWS_AS(fit_gaussian(Features(1, 2)), std::invalid_argument);
}

TEST_CASE("FID separates shifted distributions and tracks sample noise") {
  const Features a = random_features(2000, 4, 1), b = random_features(2000, 4, 2), c = random_features(2000, 4, 3, 1.0, 1.0);
  const double same = frechet_distance(fit_gaussian(a), fit_gaussian(b));
  const double shifted = frechet_distance(fit_gaussian(a), fit_gaussian(c));
  CHECK(same < 0.05);
  CHECK(shifted == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("R-precision on random features sits at chance") {
  const Features s = random_features(500, 8, 4), m = random_features(500, 8, 5);
  const std::int64_t pools = 1000;
  const RPrecision r = r_precision(s, m, 7, pools);
  CHECK(r.pools == pools);
  const double got[3] = {r.top1, r.top2, r.top3};
  for (int k = 1; k <= 3; ++k) {
    const double p = k / 32.0;
    CHECK(std::abs(got[k - 1] - p) <= 3 * std::sqrt(p * (1 - p) / pools));
  }
  const RPrecision perfect = r_precision(s, s, 7);
  CHECK(perfect.top1 == 1.0);
  CHECK(perfect.pools == 500);
  CHECK(r_precision(s, m, 7, pools).top1 == r.top1);
  CHECK_THROWS_AS(r_precision(random_features(31, 2, 1), random_features(31, 2, 2), 0), std::invalid_argument);
  CHECK_THROWS_AS(r_precision(s, random_features(500, 7, 1), 0), ShapeError);
}

TEST_CASE("matching distance, diversity and multimodality") {
  Features s(2, 2), m(2, 2);
  s.data = {0, 0, 1, 1};
  m.data = {3, 4, 1, 2};
  CHECK(mm_dist(s, m) == doctest::Approx(3.0));

  const Features f = random_features(100, 3, 8);
  std::vector<std::size_t> perm(100);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::reverse(perm.begin(), perm.end());
  std::swap(perm[3], perm[70]);
  CHECK(diversity(f, 50, 1) == diversity(f.select(perm), 50, 1));
  Features same(10, 2);
  CHECK(diversity(same, 5, 1) == 0);
  CHECK_THROWS_AS(diversity(f, 51, 1), std::invalid_argument);

  Features g1(3, 1), g2(2, 1);
  g1.data = {0, 1, 3};  // pairwise 1, 3, 2 -> mean 2
  g2.data = {5, 9};     // 4
  const std::vector<Features> groups = {g1, g2};
  CHECK(multimodality(groups) == doctest::Approx(3.0));
  CHECK_THROWS_AS(multimodality(std::vector<Features>{Features(1, 1)}), std::invalid_argument);
}

TEST_CASE("bootstrap scoring is deterministic with positive intervals") {
  EvalFeatures f;
  f.script = random_features(64, 4, 1);
  f.gen = random_features(64, 4, 2);
  f.real = random_features(64, 4, 3);
  for (int g = 0; g < 5; ++g) f.mm_groups.push_back(random_features(4, 4, 10 + g));
  EvalOptions o;
  o.diversity_pairs = 30;
  o.bootstrap = 10;
  const EvalReport a = score(f, o), b = score(f, o);
  CHECK(a.fid.value == b.fid.value);
  CHECK(a.fid.ci == b.fid.ci);
  CHECK(a.samples == 64);
  CHECK(a.bootstrap == 10);
  CHECK(a.fid.value == doctest::Approx(frechet_distance(fit_gaussian(f.gen), fit_gaussian(f.real))));
  CHECK(a.mm_dist.value == doctest::Approx(mm_dist(f.script, f.gen)));
  CHECK(a.fid.ci > 0);
  CHECK(a.rp1.ci > 0);
  CHECK(a.multimodality.ci > 0);
  const nlohmann::json j = report_json(a);
  CHECK(j.at("fid").at("value").get<double>() == a.fid.value);
  CHECK(j.at("fid").at("ci95").get<double>() == a.fid.ci);
}

TEST_CASE("evaluator freeze guards its weights") {
  EvaluatorConfig c;
  c.width = 16;
  c.layers = 1;
  c.heads = 2;
  c.embed_dim = 8;
  c.token_dim = 8;
  c.steps = 4;
  c.batch = 8;
  std::vector<MotionSequence> train;
  for (int i = 0; i < 16; ++i) train.push_back(toy_motion(6 + i % 3, static_cast<std::uint16_t>(i % 8), i));
  Evaluator ev(c, kNumChannels);
  CHECK_FALSE(ev.frozen());
  const double loss = train_evaluator(ev, train);
  CHECK(std::isfinite(loss));
  CHECK(ev.frozen());
  CHECK(ev.frozen_hash() == ev.hash());
  const Features mf = ev.motion_features(train);
  CHECK(mf.n == 16);
  CHECK(mf.dim == 8);
  for (std::int64_t i = 0; i < mf.n; ++i) {
    double norm = 0;
    for (std::int64_t k = 0; k < mf.dim; ++k) norm += mf.row(i)[k] * mf.row(i)[k];
    CHECK(norm == doctest::Approx(1.0).epsilon(1e-5));
  }
  const auto sf = ev.script_features(scripts_of(train));
  CHECK(sf.n == 16);

  ev.params().all().front()->value[0] += Real(0.5);
  CHECK_THROWS_AS(ev.check(), EvaluatorChanged);
  CHECK_THROWS_AS(ev.motion_features(train), EvaluatorChanged);
}

TEST_CASE("noise references are shaped like their source") {
  std::vector<MotionSequence> refs = {toy_motion(5, 1, 1), toy_motion(9, 2, 2)};
  const auto n = noise_like(refs, 3);
  REQUIRE(n.size() == 2);
  CHECK(n[1].length == 9);
  CHECK(n[1].script.tokens == refs[1].script.tokens);
  CHECK(n[0].frames != refs[0].frames);
  CHECK(noise_like(refs, 3)[0].frames == n[0].frames);
}
