// SPDX-License-Identifier: Apache-2.0
#include "ram/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "ram/io.hpp"
#include "ram/numerics/rng.hpp"

namespace ram {

namespace {

constexpr const char* kActionNames[kNumActions] = {"walk-fwd", "walk-back", "turn-left", "turn-right",
                                                   "sit",      "stand",     "wave",      "jump"};

double smoothstep(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * (3.0 - 2.0 * u);
}

double uniform_in(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

// Frame-level kinematics of one action before blending.
struct ActionMotion {
  double speed = 0;       // root units per frame along the heading
  double turn = 0;        // heading change per frame
  double gait_amp = 0;
  double gait_rate = 0;   // limb phase advance per frame
};

}  // namespace

const char* action_name(Action a) { return kActionNames[static_cast<int>(a)]; }

std::vector<std::uint16_t> parse_script(const std::string& text) {
  std::string norm = text;
  std::replace(norm.begin(), norm.end(), ',', ' ');
  std::istringstream in(norm);
  std::vector<std::uint16_t> tokens;
  for (std::string word; in >> word;) {
    const auto* it = std::find_if(std::begin(kActionNames), std::end(kActionNames),
                                  [&](const char* n) { return word == n; });
    if (it == std::end(kActionNames)) throw std::invalid_argument("unknown action '" + word + "'");
    tokens.push_back(static_cast<std::uint16_t>(it - std::begin(kActionNames)));
  }
  return tokens;
}

std::string script_to_string(std::span<const std::uint16_t> tokens) {
  std::string out;
  for (std::uint16_t t : tokens) {
    if (!out.empty()) out += ',';
    out += t < kNumActions ? kActionNames[t] : "?";
  }
  return out;
}

void ActionScript::validate() const {
  if (tokens.empty() || static_cast<int>(tokens.size()) > kMaxScriptLength) {
    throw std::invalid_argument("action script needs 1.." + std::to_string(kMaxScriptLength) + " tokens, got " +
                                std::to_string(tokens.size()));
  }
  for (std::uint16_t t : tokens) {
    if (t >= kNumActions) throw std::invalid_argument("action token " + std::to_string(t) + " outside vocabulary");
  }
}

int MotionSequence::valid_frames() const {
  return static_cast<int>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

double step_speed(const SynthConfig& config) { return config.walk_speed / config.fps; }

MotionSequence generate(const ActionScript& script, std::uint64_t seed, const SynthConfig& config) {
  script.validate();
  if (config.fps <= 0 || config.min_len < 2 || config.max_len < config.min_len) {
    throw std::invalid_argument("generate: bad length/fps configuration");
  }
  Rng rng(splitmix64(seed ^ 0x5f0d3a7c1e2b4968ULL));
  const int n = static_cast<int>(script.tokens.size());
  const double fps = config.fps;

  // Durations, jittered then rescaled into [min_len, max_len].
  std::vector<double> raw(static_cast<std::size_t>(n));
  for (auto& d : raw) d = uniform_in(rng, config.action_seconds_min, config.action_seconds_max) * fps;
  const double total_raw = std::accumulate(raw.begin(), raw.end(), 0.0);
  double scale = 1.0;
  if (total_raw < config.min_len) scale = config.min_len / total_raw;
  if (total_raw > config.max_len) scale = config.max_len / total_raw;
  std::vector<int> dur(static_cast<std::size_t>(n));
  int total = 0;
  for (int k = 0; k < n; ++k) {
    dur[k] = std::max(2, static_cast<int>(std::lround(raw[k] * scale)));
    total += dur[k];
  }
  // Absorb rounding drift in the longest action.
  const int target = std::clamp(total, config.min_len, config.max_len);
  auto longest = std::max_element(dur.begin(), dur.end());
  *longest += target - total;
  total = target;

  std::vector<int> start(static_cast<std::size_t>(n) + 1, 0);
  for (int k = 0; k < n; ++k) start[k + 1] = start[k] + dur[k];
  const int min_dur = *std::min_element(dur.begin(), dur.end());
  const double blend = std::clamp(config.blend_seconds * fps, 1.0, min_dur / 2.0);

  const double v = step_speed(config);
  const double gait = 2.0 * std::numbers::pi * config.step_hz / fps;
  const double wave_rate = 2.0 * std::numbers::pi * config.wave_hz / fps;

  std::vector<ActionMotion> motion(static_cast<std::size_t>(n));
  std::vector<double> wave_phase(static_cast<std::size_t>(n));
  std::vector<double> v_start(static_cast<std::size_t>(n)), v_end(static_cast<std::size_t>(n));
  std::vector<double> b_start(static_cast<std::size_t>(n)), b_end(static_cast<std::size_t>(n));
  double level = 0.0, bend = 0.0;
  for (int k = 0; k < n; ++k) {
    const double jitter = 1.0 + config.speed_jitter * (2.0 * rng.uniform() - 1.0);
    const Action a = static_cast<Action>(script.tokens[k]);
    ActionMotion& m = motion[k];
    switch (a) {
      case Action::walk_fwd: m = {v * jitter, 0.0, 1.0, gait * jitter}; break;
      case Action::walk_back: m = {-0.6 * v * jitter, 0.0, 0.7, -0.8 * gait * jitter}; break;
      case Action::turn_left: m = {0.0, config.turn_angle * jitter / dur[k], 0.3, 0.5 * gait}; break;
      case Action::turn_right: m = {0.0, -config.turn_angle * jitter / dur[k], 0.3, 0.5 * gait}; break;
      default: m = {}; break;
    }
    wave_phase[k] = 2.0 * std::numbers::pi * rng.uniform();
    v_start[k] = level;
    b_start[k] = bend;
    if (a == Action::sit) {
      level = -config.sit_depth;
      bend = 1.0;
    } else if (a == Action::stand) {
      level = 0.0;
      bend = 0.0;
    }
    v_end[k] = level;
    b_end[k] = bend;
  }

  MotionSequence seq;
  seq.length = total;
  seq.dims = kNumChannels;
  seq.fps = config.fps;
  seq.script = script;
  seq.frames.assign(static_cast<std::size_t>(total) * kNumChannels, 0.0f);
  seq.mask.assign(static_cast<std::size_t>(total), 1);

  double x = 0.0, y = 0.0, heading = 0.0;
  double phase = 2.0 * std::numbers::pi * rng.uniform();
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int f = 0; f < total; ++f) {
    // Partition-of-unity blend weights with smoothstep ramps centred on boundaries.
    for (int k = 0; k < n; ++k) {
      const double in = k == 0 ? 1.0 : smoothstep((f - start[k] + blend / 2.0) / blend);
      const double out = k == n - 1 ? 1.0 : 1.0 - smoothstep((f - start[k + 1] + blend / 2.0) / blend);
      w[k] = in * out;
    }
    int cur = static_cast<int>(std::upper_bound(start.begin() + 1, start.end() - 1, f) - (start.begin() + 1));
    const double tau = std::clamp(static_cast<double>(f - start[cur]) / std::max(1, dur[cur] - 1), 0.0, 1.0);
    const Action a = static_cast<Action>(script.tokens[cur]);

    double vertical = v_start[cur] + (v_end[cur] - v_start[cur]) * smoothstep(tau);
    double posture = b_start[cur] + (b_end[cur] - b_start[cur]) * smoothstep(tau);
    if (a == Action::jump) {
      const double s = std::sin(std::numbers::pi * tau);
      vertical += config.jump_height * s * s;
      posture += 0.4 * s * s;
    }
    double amp = 0.0, arm = 0.0, speed = 0.0, turn = 0.0, rate = 0.0;
    for (int k = 0; k < n; ++k) {
      amp += w[k] * motion[k].gait_amp;
      speed += w[k] * motion[k].speed;
      turn += w[k] * motion[k].turn;
      rate += w[k] * motion[k].gait_rate;
      if (static_cast<Action>(script.tokens[k]) == Action::wave && w[k] > 0.0) {
        const double local = std::clamp(static_cast<double>(f - start[k]) / std::max(1, dur[k] - 1), 0.0, 1.0);
        arm += w[k] * std::sin(std::numbers::pi * local) *
               (0.7 + 0.3 * std::sin(wave_rate * (f - start[k]) + wave_phase[k]));
      }
    }

    float* row = &seq.frames[static_cast<std::size_t>(f) * kNumChannels];
    row[kRootX] = static_cast<float>(x);
    row[kRootY] = static_cast<float>(y);
    row[kHeading] = static_cast<float>(heading);
    row[kVertical] = static_cast<float>(vertical);
    row[kLimbSin] = static_cast<float>(amp * std::sin(phase));
    row[kLimbCos] = static_cast<float>(amp * std::cos(phase));
    row[kArm] = static_cast<float>(arm);
    row[kBend] = static_cast<float>(posture);

    x += speed * std::cos(heading);
    y += speed * std::sin(heading);
    heading += turn;
    phase += rate;
  }
  return seq;
}

DatasetStats compute_stats(std::span<const MotionSequence> sequences) {
  DatasetStats s;
  std::array<double, kNumChannels> sum{}, sq{};
  double count = 0;
  for (const auto& seq : sequences) {
    for (int f = 0; f < seq.length; ++f) {
      if (!seq.mask[f]) continue;
      for (int c = 0; c < kNumChannels; ++c) sum[c] += seq.at(f, c);
      count += 1;
    }
  }
  if (count == 0) throw std::invalid_argument("compute_stats: no valid frames");
  for (int c = 0; c < kNumChannels; ++c) s.mean[c] = sum[c] / count;
  for (const auto& seq : sequences) {
    for (int f = 0; f < seq.length; ++f) {
      if (!seq.mask[f]) continue;
      for (int c = 0; c < kNumChannels; ++c) {
        const double d = seq.at(f, c) - s.mean[c];
        sq[c] += d * d;
      }
    }
  }
  for (int c = 0; c < kNumChannels; ++c) {
    s.stddev[c] = std::sqrt(sq[c] / count);
    s.constant[c] = s.stddev[c] <= kConstantChannelStd;
  }
  return s;
}

namespace {

MotionSequence affine(const MotionSequence& seq, const DatasetStats& stats, bool forward) {
  if (seq.dims != kNumChannels) throw std::invalid_argument("normalize: expected " + std::to_string(kNumChannels) +
                                                            " channels, got " + std::to_string(seq.dims));
  MotionSequence out = seq;
  for (int f = 0; f < seq.length; ++f) {
    float* row = &out.frames[static_cast<std::size_t>(f) * kNumChannels];
    if (!seq.mask[f]) {
      std::fill_n(row, kNumChannels, 0.0f);
      continue;
    }
    for (int c = 0; c < kNumChannels; ++c) {
      if (stats.constant[c]) continue;
      const double v = row[c];
      row[c] = static_cast<float>(forward ? (v - stats.mean[c]) / stats.stddev[c] : v * stats.stddev[c] + stats.mean[c]);
    }
  }
  return out;
}

}  // namespace

MotionSequence normalize(const MotionSequence& seq, const DatasetStats& stats) { return affine(seq, stats, true); }
MotionSequence denormalize(const MotionSequence& seq, const DatasetStats& stats) { return affine(seq, stats, false); }

ActionScript sample_script(std::uint64_t seed, std::size_t index) {
  Rng rng = Rng::stream(seed, "script", index);
  ActionScript s;
  const int len = 1 + static_cast<int>(rng.below(kMaxScriptLength));
  for (int i = 0; i < len; ++i) s.tokens.push_back(static_cast<std::uint16_t>(rng.below(kNumActions)));
  return s;
}

Dataset build_dataset(int n, SplitRatios ratios, std::uint64_t seed, const SynthConfig& config) {
  if (n < 10) throw std::invalid_argument("build_dataset: need n >= 10, got " + std::to_string(n));
  const double total = ratios.train + ratios.val + ratios.test;
  if (!(ratios.train > 0 && ratios.val >= 0 && ratios.test >= 0) || !(total > 0)) {
    throw std::invalid_argument("build_dataset: degenerate split ratios");
  }
  const int n_train = static_cast<int>(std::lround(n * ratios.train / total));
  const int n_val = static_cast<int>(std::lround(n * ratios.val / total));
  const int n_test = n - n_train - n_val;
  if (n_train < 2 || n_test < 0 || (ratios.test > 0 && n_test == 0) || (ratios.val > 0 && n_val == 0)) {
    throw std::invalid_argument("build_dataset: split ratios leave an empty split");
  }

  std::vector<MotionSequence> raw(static_cast<std::size_t>(n));
  std::vector<SampleOrigin> origin(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    origin[i] = {Rng::stream(seed, "data", static_cast<std::uint64_t>(i)).next_u64(), static_cast<std::size_t>(i)};
    raw[i] = generate(sample_script(seed, static_cast<std::size_t>(i)), origin[i].seed, config);
  }

  Dataset ds;
  ds.config = config;
  ds.stats = compute_stats(std::span<const MotionSequence>(raw.data(), static_cast<std::size_t>(n_train)));
  for (int i = 0; i < n; ++i) {
    auto& dst = i < n_train ? ds.train : (i < n_train + n_val ? ds.val : ds.test);
    auto& org = i < n_train ? ds.train_origin : (i < n_train + n_val ? ds.val_origin : ds.test_origin);
    dst.push_back(normalize(raw[i], ds.stats));
    org.push_back(origin[i]);
  }
  return ds;
}

// ---- Batches -------------------------------------------------------------

MotionBatch make_batch(std::span<const MotionSequence> pool, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("make_batch: empty batch");
  MotionBatch b;
  b.batch = static_cast<std::int64_t>(indices.size());
  b.dims = pool[indices[0]].dims;
  for (std::size_t i : indices) {
    const auto& s = pool[i];
    if (s.dims != b.dims) throw ShapeError("make_batch: mixed channel counts");
    b.frames = std::max<std::int64_t>(b.frames, s.length);
    b.tokens = std::max<std::int64_t>(b.tokens, static_cast<std::int64_t>(s.script.tokens.size()));
  }
  b.x = Tensor({b.batch, b.frames, b.dims});
  b.mask.assign(static_cast<std::size_t>(b.batch * b.frames), 0);
  b.token_ids.assign(static_cast<std::size_t>(b.batch * b.tokens), 0);
  b.token_mask.assign(static_cast<std::size_t>(b.batch * b.tokens), 0);
  for (std::int64_t r = 0; r < b.batch; ++r) {
    const auto& s = pool[indices[r]];
    b.lengths.push_back(s.length);
    for (int f = 0; f < s.length; ++f) {
      const std::size_t row = static_cast<std::size_t>(r * b.frames + f);
      b.mask[row] = s.mask[f];
      if (!s.mask[f]) continue;
      for (std::int64_t c = 0; c < b.dims; ++c) b.x[static_cast<std::int64_t>(row) * b.dims + c] = s.at(f, static_cast<int>(c));
    }
    for (std::size_t k = 0; k < s.script.tokens.size(); ++k) {
      b.token_ids[static_cast<std::size_t>(r * b.tokens) + k] = s.script.tokens[k];
      b.token_mask[static_cast<std::size_t>(r * b.tokens) + k] = 1;
    }
  }
  return b;
}

MotionBatch make_batch(std::span<const MotionSequence> sequences) {
  std::vector<std::size_t> idx(sequences.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return make_batch(sequences, idx);
}

MotionSequence unpack(const Tensor& x, std::int64_t b, int length, int fps, const ActionScript& script) {
  if (x.rank() != 3 || b < 0 || b >= x.dim(0) || length < 0 || length > x.dim(1)) {
    throw ShapeError("unpack: row " + std::to_string(b) + " length " + std::to_string(length) + " of " +
                     shape_str(x.shape()));
  }
  MotionSequence s;
  s.length = length;
  s.dims = static_cast<int>(x.dim(2));
  s.fps = fps;
  s.script = script;
  s.frames.resize(static_cast<std::size_t>(length) * s.dims);
  const Real* src = x.ptr() + b * x.dim(1) * x.dim(2);
  for (std::size_t i = 0; i < s.frames.size(); ++i) s.frames[i] = static_cast<float>(src[i]);
  s.mask.assign(static_cast<std::size_t>(length), 1);
  return s;
}

// ---- Files ---------------------------------------------------------------

std::vector<std::uint8_t> encode_motion_file(const MotionSequence& seq) {
  if (seq.frames.size() != static_cast<std::size_t>(seq.length) * seq.dims || seq.mask.size() != static_cast<std::size_t>(seq.length)) {
    throw std::invalid_argument("encode_motion_file: inconsistent sequence buffers");
  }
  ByteWriter w;
  w.raw("RAMM", 4);
  w.u32(kMotionFileVersion);
  w.u32(static_cast<std::uint32_t>(seq.length));
  w.u32(static_cast<std::uint32_t>(seq.dims));
  w.u32(static_cast<std::uint32_t>(seq.fps));
  for (float v : seq.frames) w.f32(v);
  for (std::uint8_t m : seq.mask) w.u8(m);
  w.u16(static_cast<std::uint16_t>(seq.script.tokens.size()));
  for (std::uint16_t t : seq.script.tokens) w.u16(t);
  return w.take();
}

MotionSequence decode_motion_file(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "motion file");
  r.expect_magic("RAMM");
  const std::uint32_t version = r.u32();
  if (version != kMotionFileVersion) throw FormatError("motion file: unsupported version " + std::to_string(version));
  MotionSequence s;
  s.length = static_cast<int>(r.u32());
  s.dims = static_cast<int>(r.u32());
  s.fps = static_cast<int>(r.u32());
  if (s.dims <= 0 || s.length < 0) throw FormatError("motion file: bad dimensions");
  if (static_cast<std::uint64_t>(s.length) * (static_cast<std::uint64_t>(s.dims) * 4 + 1) > r.remaining()) {
    throw FormatError("motion file: frame data truncated");
  }
  s.frames.resize(static_cast<std::size_t>(s.length) * s.dims);
  for (auto& v : s.frames) v = r.f32();
  s.mask.resize(static_cast<std::size_t>(s.length));
  for (auto& m : s.mask) m = r.u8();
  s.script.tokens.resize(r.u16());
  for (auto& t : s.script.tokens) t = r.u16();
  r.expect_end();
  return s;
}

void write_motion_file(const std::filesystem::path& path, const MotionSequence& seq) {
  write_file_atomic(path, encode_motion_file(seq));
}

MotionSequence read_motion_file(const std::filesystem::path& path) { return decode_motion_file(read_file(path)); }

}  // namespace ram
