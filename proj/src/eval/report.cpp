// SPDX-License-Identifier: Apache-2.0
#include "ram/eval/report.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ram/io.hpp"

namespace ram {

namespace {

struct Values {
  double fid, rp1, rp2, rp3, mm, div, mmod;
};

Values compute(const EvalFeatures& f, const EvalOptions& o, std::uint64_t seed) {
  Values v{};
  v.fid = frechet_distance(fit_gaussian(f.gen), fit_gaussian(f.real));
  const RPrecision rp = r_precision(f.script, f.gen, seed);
  v.rp1 = rp.top1;
  v.rp2 = rp.top2;
  v.rp3 = rp.top3;
  v.mm = mm_dist(f.script, f.gen);
  const int pairs = static_cast<int>(std::min<std::int64_t>(o.diversity_pairs, f.gen.n / 2));
  v.div = diversity(f.gen, pairs, seed);
  v.mmod = f.mm_groups.empty() ? 0.0 : multimodality(f.mm_groups);
  return v;
}

MetricCI summarize(double full, const std::vector<double>& reps) {
  MetricCI m;
  m.value = full;
  if (reps.size() < 2) return m;
  double mean = 0;
  for (double r : reps) mean += r;
  mean /= static_cast<double>(reps.size());
  double var = 0;
  for (double r : reps) var += (r - mean) * (r - mean);
  var /= static_cast<double>(reps.size() - 1);
  m.ci = 1.96 * std::sqrt(var) / std::sqrt(static_cast<double>(reps.size()));
  return m;
}

}  // namespace

EvalReport score(const EvalFeatures& f, const EvalOptions& options) {
  if (f.gen.n != f.script.n) throw ShapeError("score: generated and script features are not paired");
  const Values full = compute(f, options, options.seed);
  std::vector<Values> reps;
  for (int r = 0; r < options.bootstrap; ++r) {
    Rng rng = Rng::stream(options.seed, "bootstrap", static_cast<std::uint64_t>(r));
    std::vector<std::size_t> idx(static_cast<std::size_t>(f.gen.n));
    for (auto& i : idx) i = rng.below(static_cast<std::uint64_t>(f.gen.n));
    std::vector<std::size_t> ridx(static_cast<std::size_t>(f.real.n));
    for (auto& i : ridx) i = rng.below(static_cast<std::uint64_t>(f.real.n));
    EvalFeatures b;
    b.gen = f.gen.select(idx);
    b.script = f.script.select(idx);
    b.real = f.real.select(ridx);
    for (std::size_t g = 0; g < f.mm_groups.size(); ++g) {
      b.mm_groups.push_back(f.mm_groups[rng.below(f.mm_groups.size())]);
    }
    reps.push_back(compute(b, options, options.seed + 1 + static_cast<std::uint64_t>(r)));
  }
  auto col = [&](double Values::*m) {
    std::vector<double> out;
    for (const auto& v : reps) out.push_back(v.*m);
    return out;
  };
  EvalReport rep;
  rep.fid = summarize(full.fid, col(&Values::fid));
  rep.rp1 = summarize(full.rp1, col(&Values::rp1));
  rep.rp2 = summarize(full.rp2, col(&Values::rp2));
  rep.rp3 = summarize(full.rp3, col(&Values::rp3));
  rep.mm_dist = summarize(full.mm, col(&Values::mm));
  rep.diversity = summarize(full.div, col(&Values::div));
  rep.multimodality = summarize(full.mmod, col(&Values::mmod));
  rep.samples = f.gen.n;
  rep.bootstrap = options.bootstrap;
  return rep;
}

std::vector<MotionSequence> generate_for(const ModelBundle& model, std::span<const MotionSequence> refs,
                                         const NoiseSchedule& schedule, const GuidanceConfig& cfg,
                                         const EvalOptions& options, std::uint64_t stream) {
  std::vector<SampleRequest> reqs;
  reqs.reserve(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    reqs.push_back({refs[i].script, refs[i].length, Rng::stream(options.seed, "eval-sample", stream * 1000003u + i).next_u64()});
  }
  std::vector<MotionSequence> out;
  const std::size_t chunk = static_cast<std::size_t>(std::max(1, options.sample_batch));
  for (std::size_t s = 0; s < reqs.size(); s += chunk) {
    const auto part = std::span<const SampleRequest>(reqs).subspan(s, std::min(chunk, reqs.size() - s));
    auto gen = sample_many(model, part, schedule, cfg, options.fps);
    for (auto& g : gen) out.push_back(std::move(g));
  }
  return out;
}

std::vector<ActionScript> scripts_of(std::span<const MotionSequence> seqs) {
  std::vector<ActionScript> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) out.push_back(s.script);
  return out;
}

std::vector<MotionSequence> noise_like(std::span<const MotionSequence> refs, std::uint64_t seed) {
  std::vector<MotionSequence> out;
  out.reserve(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    MotionSequence s = refs[i];
    Rng rng = Rng::stream(seed, "noise-reference", i);
    for (int f = 0; f < s.length; ++f) {
      for (int c = 0; c < s.dims; ++c) {
        s.frames[static_cast<std::size_t>(f * s.dims + c)] = s.mask[f] ? static_cast<float>(rng.normal()) : 0.0f;
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

EvalReport evaluate(const ModelBundle& model, const GuidanceConfig& cfg, const NoiseSchedule& schedule,
                    std::span<const MotionSequence> test, const Evaluator& evaluator, const EvalOptions& options) {
  if (!evaluator.frozen()) throw EvaluatorChanged("evaluate: evaluator has not been frozen");
  evaluator.check();
  const std::size_t n = options.n_samples > 0 ? std::min<std::size_t>(test.size(), options.n_samples) : test.size();
  const auto refs = test.first(n);

  EvalFeatures f;
  const auto gen = generate_for(model, refs, schedule, cfg, options, 0);
  f.gen = evaluator.motion_features(gen);
  f.real = evaluator.motion_features(refs);
  const auto scripts = scripts_of(refs);
  f.script = evaluator.script_features(scripts);

  const std::size_t mm = std::min<std::size_t>(refs.size(), static_cast<std::size_t>(std::max(0, options.mm_scripts)));
  if (mm > 0 && options.mm_repeats >= 2) {
    std::vector<MotionSequence> rep_refs;
    for (std::size_t s = 0; s < mm; ++s) {
      for (int r = 0; r < options.mm_repeats; ++r) rep_refs.push_back(refs[s]);
    }
    const auto reps = generate_for(model, rep_refs, schedule, cfg, options, 1);
    const Features all = evaluator.motion_features(reps);
    for (std::size_t s = 0; s < mm; ++s) {
      std::vector<std::size_t> idx;
      for (int r = 0; r < options.mm_repeats; ++r) idx.push_back(s * static_cast<std::size_t>(options.mm_repeats) + r);
      f.mm_groups.push_back(all.select(idx));
    }
  }
  EvalReport rep = score(f, options);
  rep.evaluator_hash = evaluator.hash();
  evaluator.check();
  return rep;
}

nlohmann::json report_json(const EvalReport& r) {
  auto m = [](const MetricCI& c) { return nlohmann::json{{"value", c.value}, {"ci95", c.ci}}; };
  return {{"fid", m(r.fid)},
          {"r_precision_top1", m(r.rp1)},
          {"r_precision_top2", m(r.rp2)},
          {"r_precision_top3", m(r.rp3)},
          {"mm_dist", m(r.mm_dist)},
          {"diversity", m(r.diversity)},
          {"multimodality", m(r.multimodality)},
          {"samples", r.samples},
          {"bootstrap", r.bootstrap},
          {"evaluator_hash", hex64(r.evaluator_hash)}};
}

}  // namespace ram
