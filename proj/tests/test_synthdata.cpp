// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "ram/io.hpp"
#include "ram/numerics/rng.hpp"
#include "ram/synthdata.hpp"

using namespace ram;

namespace {

ActionScript script_of(std::initializer_list<Action> actions) {
  ActionScript s;
  for (Action a : actions) s.tokens.push_back(static_cast<std::uint16_t>(a));
  return s;
}

SynthConfig desk_synth() {
  SynthConfig c;
  c.fps = 6;
  c.min_len = 12;
  c.max_len = 48;
  c.step_hz = 1.0;
  c.wave_hz = 1.2;
  return c;
}

bool all_finite(const MotionSequence& s) {
  for (float v : s.frames) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("script parsing and validation") {
  CHECK(parse_script("walk-fwd,turn-left") == std::vector<std::uint16_t>{0, 2});
  CHECK(parse_script("sit stand  jump") == std::vector<std::uint16_t>{4, 5, 7});
  CHECK(script_to_string(std::vector<std::uint16_t>{6, 1}) == "wave,walk-back");
  CHECK_THROWS_AS(parse_script("walk-sideways"), std::invalid_argument);
  CHECK_THROWS_AS(ActionScript{}.validate(), std::invalid_argument);
  CHECK_THROWS_AS((ActionScript{{0, 1, 2, 3, 4}}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((ActionScript{{8}}.validate()), std::invalid_argument);
}

TEST_CASE("generation is deterministic and seed-dependent") {
  const auto s = script_of({Action::walk_fwd, Action::wave});
  const MotionSequence a = generate(s, 7), b = generate(s, 7), c = generate(s, 8);
  CHECK(a.frames == b.frames);
  CHECK(a.mask == b.mask);
  CHECK(a.frames != c.frames);
}

TEST_CASE("sit lowers the vertical channel by the sit depth") {
  const SynthConfig cfg;
  const MotionSequence m = generate(script_of({Action::sit}), 3, cfg);
  CHECK(m.at(0, kVertical) == 0.0f);
  CHECK(m.at(m.length - 1, kVertical) - m.at(0, kVertical) == doctest::Approx(-cfg.sit_depth).epsilon(1e-6));
  CHECK(m.at(m.length - 1, kBend) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("walk-fwd displacement integrates to k * step_speed") {
  // Single action: the blend weight is one everywhere, so x_k = k * v * jitter, y = 0.
  SynthConfig cfg;
  cfg.speed_jitter = 0.0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const MotionSequence m = generate(script_of({Action::walk_fwd}), seed, cfg);
    for (int k = 1; k < m.length; ++k) {
      CHECK(m.at(k, kRootX) == doctest::Approx(k * step_speed(cfg)).epsilon(1e-5));
      CHECK(std::abs(m.at(k, kRootY)) < 1e-6);
    }
  }
  // With jitter the per-frame speed stays within +-speed_jitter of nominal.
  const SynthConfig jit;
  const MotionSequence m = generate(script_of({Action::walk_fwd}), 5, jit);
  const double k = m.length - 1;
  const double ratio = m.at(m.length - 1, kRootX) / (k * step_speed(jit));
  CHECK(ratio >= 1.0 - jit.speed_jitter - 1e-6);
  CHECK(ratio <= 1.0 + jit.speed_jitter + 1e-6);
}

TEST_CASE("turn-left accumulates the turn angle") {
  SynthConfig cfg;
  cfg.speed_jitter = 0.0;
  const MotionSequence m = generate(script_of({Action::turn_left}), 11, cfg);
  // Heading is recorded before each increment, so the last frame holds (L-1)/L of the turn.
  const double want = cfg.turn_angle * (m.length - 1) / m.length;
  CHECK(m.at(m.length - 1, kHeading) == doctest::Approx(want).epsilon(1e-5));
}

TEST_CASE("root speed is bounded and lengths respect the configured range") {
  for (const SynthConfig& cfg : {SynthConfig{}, desk_synth()}) {
    const double vmax = step_speed(cfg) * (1.0 + cfg.speed_jitter) + 1e-6;
    for (std::size_t i = 0; i < 300; ++i) {
      const MotionSequence m = generate(sample_script(4, i), i, cfg);
      REQUIRE(all_finite(m));
      CHECK(m.length >= cfg.min_len);
      CHECK(m.length <= cfg.max_len);
      CHECK(m.valid_frames() == m.length);
      for (int f = 1; f < m.length; ++f) {
        const double dx = m.at(f, kRootX) - m.at(f - 1, kRootX), dy = m.at(f, kRootY) - m.at(f - 1, kRootY);
        CHECK(std::hypot(dx, dy) <= vmax);
      }
    }
  }
}

TEST_CASE("every short script is realizable") {
  for (int a = 0; a < kNumActions; ++a) {
    for (int b = -1; b < kNumActions; ++b) {
      ActionScript s{{static_cast<std::uint16_t>(a)}};
      if (b >= 0) s.tokens.push_back(static_cast<std::uint16_t>(b));
      CHECK(all_finite(generate(s, static_cast<std::uint64_t>(a * 9 + b + 1))));
      CHECK(all_finite(generate(s, 1, desk_synth())));
    }
  }
}

TEST_CASE("normalization statistics and round trip") {
  const Dataset d = build_dataset(2400, {}, 0);
  REQUIRE(d.train.size() == 2000);
  REQUIRE(d.val.size() == 200);
  REQUIRE(d.test.size() == 200);
  std::array<double, kNumChannels> sum{}, sq{};
  double n = 0;
  for (const auto& s : d.train) {
    for (int f = 0; f < s.length; ++f) {
      for (int c = 0; c < kNumChannels; ++c) {
        sum[c] += s.at(f, c);
        sq[c] += s.at(f, c) * s.at(f, c);
      }
      n += 1;
    }
  }
  for (int c = 0; c < kNumChannels; ++c) {
    REQUIRE_FALSE(d.stats.constant[c]);
    const double mean = sum[c] / n;
    CHECK(std::abs(mean) < 1e-2);
    CHECK(std::sqrt(sq[c] / n - mean * mean) == doctest::Approx(1.0).epsilon(1e-2));
  }
  // Held-out splits use the train statistics.
  const std::size_t i = d.train.size();
  const MotionSequence raw = generate(sample_script(0, i), d.val_origin[0].seed);
  CHECK(normalize(raw, d.stats).frames == d.val[0].frames);
  // Round trip.
  const MotionSequence back = denormalize(d.val[0], d.stats);
  for (std::size_t k = 0; k < raw.frames.size(); ++k) {
    CHECK(std::abs(back.frames[k] - raw.frames[k]) <= 1e-6 * std::max(1.0f, std::abs(raw.frames[k])));
  }
}

TEST_CASE("constant channels are flagged and left unnormalized") {
  std::vector<MotionSequence> seqs;
  for (std::uint64_t s = 0; s < 5; ++s) seqs.push_back(generate(script_of({Action::sit}), s));
  const DatasetStats st = compute_stats(seqs);
  CHECK(st.constant[kArm]);
  CHECK(st.constant[kLimbSin]);
  CHECK_FALSE(st.constant[kVertical]);
  const MotionSequence n = normalize(seqs[0], st);
  for (int f = 0; f < n.length; ++f) CHECK(n.at(f, kArm) == seqs[0].at(f, kArm));
}

TEST_CASE("masked frames are zero after normalization") {
  MotionSequence m = generate(script_of({Action::jump}), 2);
  m.mask[3] = 0;
  const std::vector<MotionSequence> one{generate(script_of({Action::jump, Action::walk_fwd}), 3)};
  const MotionSequence n = normalize(m, compute_stats(one));
  for (int c = 0; c < kNumChannels; ++c) CHECK(n.at(3, c) == 0.0f);
}

TEST_CASE("script lengths are uniform and splits are disjoint") {
  const std::size_t N = 2400;
  std::array<int, kMaxScriptLength + 1> count{};
  for (std::size_t i = 0; i < N; ++i) ++count[sample_script(0, i).tokens.size()];
  const double p = 1.0 / kMaxScriptLength, mean = N * p, sd = std::sqrt(N * p * (1 - p));
  for (int len = 1; len <= kMaxScriptLength; ++len) CHECK(std::abs(count[len] - mean) <= 3 * sd);

  const Dataset d = build_dataset(400, {}, 9);
  std::set<std::pair<std::string, std::uint64_t>> seen;
  auto add = [&](const std::vector<MotionSequence>& seqs, const std::vector<SampleOrigin>& org) {
    for (std::size_t k = 0; k < seqs.size(); ++k) {
      CHECK(seen.insert({script_to_string(seqs[k].script.tokens), org[k].seed}).second);
    }
  };
  add(d.train, d.train_origin);
  add(d.val, d.val_origin);
  add(d.test, d.test_origin);
  CHECK(seen.size() == 400);
}

TEST_CASE("dataset construction rejects degenerate inputs") {
  CHECK_THROWS_AS(build_dataset(9, {}, 0), std::invalid_argument);
  CHECK_THROWS_AS(build_dataset(100, {0, 1, 1}, 0), std::invalid_argument);
  CHECK_THROWS_AS(build_dataset(100, {-1, 1, 1}, 0), std::invalid_argument);
}

TEST_CASE("nearest-centroid classifier separates first actions") {
  // Features: mean level and mean per-frame change of every channel over the
  // first action's opening frames, in raw units.
  for (const SynthConfig& cfg : {SynthConfig{}, desk_synth()}) {
    const int window = std::max(3, cfg.fps * 8 / 10);
    auto features = [&](const MotionSequence& m) {
      std::vector<double> f(2 * kNumChannels, 0.0);
      for (int t = 0; t < window; ++t) {
        for (int c = 0; c < kNumChannels; ++c) {
          f[c] += m.at(t, c) / window;
          f[kNumChannels + c] += (m.at(t + 1, c) - m.at(t, c)) / window;
        }
      }
      return f;
    };
    std::vector<std::vector<double>> centroid(kNumActions, std::vector<double>(2 * kNumChannels, 0.0));
    std::vector<int> n(kNumActions, 0);
    for (std::size_t i = 0; i < 1200; ++i) {
      const ActionScript s = sample_script(21, i);
      const auto f = features(generate(s, 1000 + i, cfg));
      for (std::size_t k = 0; k < f.size(); ++k) centroid[s.tokens[0]][k] += f[k];
      ++n[s.tokens[0]];
    }
    for (int a = 0; a < kNumActions; ++a) {
      for (auto& v : centroid[a]) v /= n[a];
    }
    int correct = 0;
    const int trials = 800;
    for (std::size_t i = 0; i < trials; ++i) {
      const ActionScript s = sample_script(22, i);
      const auto f = features(generate(s, 5000 + i, cfg));
      int best = 0;
      double best_d = 1e300;
      for (int a = 0; a < kNumActions; ++a) {
        double d = 0;
        for (std::size_t k = 0; k < f.size(); ++k) d += (f[k] - centroid[a][k]) * (f[k] - centroid[a][k]);
        if (d < best_d) best_d = d, best = a;
      }
      correct += best == s.tokens[0];
    }
    CHECK(static_cast<double>(correct) / trials > 0.9);
  }
}

TEST_CASE("padded batches") {
  std::vector<MotionSequence> seqs{generate(script_of({Action::sit}), 1), generate(script_of({Action::walk_fwd, Action::jump, Action::wave}), 2)};
  const MotionBatch b = make_batch(seqs);
  CHECK(b.batch == 2);
  CHECK(b.frames == std::max(seqs[0].length, seqs[1].length));
  CHECK(b.tokens == 3);
  const int short_row = seqs[0].length < seqs[1].length ? 0 : 1;
  for (std::int64_t f = seqs[short_row].length; f < b.frames; ++f) {
    CHECK(b.mask[short_row * b.frames + f] == 0);
    for (int c = 0; c < kNumChannels; ++c) CHECK(b.x[(short_row * b.frames + f) * kNumChannels + c] == 0);
  }
  CHECK(b.token_mask == std::vector<std::uint8_t>{1, 0, 0, 1, 1, 1});
  CHECK(b.token_ids == std::vector<std::int64_t>{4, 0, 0, 0, 7, 6});
  const MotionSequence u = unpack(b.x, 1, seqs[1].length, seqs[1].fps, seqs[1].script);
  for (std::size_t k = 0; k < u.frames.size(); ++k) CHECK(u.frames[k] == static_cast<float>(static_cast<Real>(seqs[1].frames[k])));
}

TEST_CASE("motion file round trip and corruption") {
  const MotionSequence m = generate(script_of({Action::turn_right, Action::sit}), 4);
  const auto bytes = encode_motion_file(m);
  CHECK(bytes.size() == 4 + 16 + m.frames.size() * 4 + m.mask.size() + 2 + 2 * m.script.tokens.size());
  const MotionSequence back = decode_motion_file(bytes);
  CHECK(back.frames == m.frames);
  CHECK(back.mask == m.mask);
  CHECK(back.script == m.script);
  CHECK(back.fps == m.fps);
  CHECK(encode_motion_file(back) == bytes);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_motion_file(bad), FormatError);
  CHECK_THROWS_AS(decode_motion_file(std::span(bytes).first(bytes.size() - 1)), FormatError);
  auto huge = bytes;
  huge[8] = 0xff;
  huge[9] = 0xff;
  huge[10] = 0xff;
  CHECK_THROWS_AS(decode_motion_file(huge), FormatError);

  const auto path = std::filesystem::temp_directory_path() / "ram_test_motion.ramm";
  write_motion_file(path, m);
  CHECK(read_file(path) == bytes);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_motion_file(path), IoError);
}
