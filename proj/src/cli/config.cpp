// SPDX-License-Identifier: Apache-2.0
#include "ram/cli/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>

#include "ram/io.hpp"

extern char** environ;

namespace ram {

void to_json(nlohmann::json& j, const Variant& v) { j = to_string(v); }
void from_json(const nlohmann::json& j, Variant& v) { v = parse_variant(j.get<std::string>()); }

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SplitRatios, train, val, test)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SynthConfig, fps, min_len, max_len, action_seconds_min, action_seconds_max,
                                   blend_seconds, walk_speed, step_hz, turn_angle, sit_depth, jump_height, wave_hz,
                                   speed_jitter)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DataSection, dir, n, split, synth)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ModelConfig, frame_dims, latent_dim, width, encoder_layers, denoiser_layers, heads,
                                   ff_mult, token_dim, vocab, train_steps, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(LossConfig, w_sr, w_latent, beta, tau, cond_dropout, variant)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TrainSection, steps, batch_size, lr, warmup_steps, weight_decay, grad_clip,
                                   checkpoint_every, log_every)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(GuidanceSection, w1, w2, reg_steps, clamp)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(EvaluatorConfig, width, layers, heads, ff_mult, embed_dim, token_dim, tau, steps,
                                   batch, lr, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(EvalOptions, n_samples, mm_scripts, mm_repeats, bootstrap, diversity_pairs,
                                   sample_batch, seed, fps)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(RunConfig, preset, seed, out_dir, schedule, train_steps, inference_steps, data, model,
                                   loss, train, guidance, evaluator, eval)

void RunConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  try {
    (void)parse_schedule_kind(schedule);
    model.validate();
    loss.validate();
    (void)make_guidance().respacing;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  need(train_steps >= 2, "train_steps must be at least 2");
  need(model.train_steps == train_steps, "model.train_steps must equal train_steps");
  need(model.frame_dims == kNumChannels, "model.frame_dims must equal the synthetic channel count");
  need(model.vocab == kNumActions, "model.vocab must equal the action vocabulary size");
  need(data.n >= 10, "data.n must be at least 10");
  need(data.synth.fps > 0 && data.synth.min_len >= 2 && data.synth.max_len >= data.synth.min_len,
       "data.synth lengths are inconsistent");
  need(train.steps >= 0 && train.batch_size >= 2, "train.steps must be >= 0 and train.batch_size >= 2");
  need(train.lr > 0, "train.lr must be positive");
  need(train.checkpoint_every >= 0 && train.log_every >= 1, "train cadences must be positive");
  need(evaluator.width % evaluator.heads == 0, "evaluator.heads must divide evaluator.width");
  need(eval.bootstrap >= 0 && eval.mm_repeats >= 0 && eval.sample_batch >= 1, "eval options out of range");
}

NoiseSchedule RunConfig::make_noise_schedule() const { return make_schedule(schedule, train_steps); }

GuidanceConfig RunConfig::make_guidance() const {
  GuidanceConfig g;
  g.w1 = guidance.w1;
  g.w2 = guidance.w2;
  g.clamp = guidance.clamp;
  g.respacing = make_respacing(train_steps, inference_steps);
  g.reg_steps = parse_reg_steps(guidance.reg_steps, g.respacing);
  g.validate();
  return g;
}

TrainOptions RunConfig::train_options() const {
  TrainOptions o;
  o.batch_size = train.batch_size;
  o.seed = seed;
  o.warmup_steps = train.warmup_steps;
  o.lr = train.lr;
  return o;
}

AdamConfig RunConfig::adam() const {
  AdamConfig a;
  a.lr = train.lr;
  a.weight_decay = train.weight_decay;
  a.grad_clip = train.grad_clip;
  return a;
}

RunConfig desk_preset() {
  RunConfig c;
  c.preset = "desk";
  c.data.synth.fps = 6;
  c.data.synth.min_len = 12;
  c.data.synth.max_len = 48;
  c.data.synth.step_hz = 1.0;
  c.data.synth.wave_hz = 1.2;
  c.model.latent_dim = 64;
  c.model.width = 64;
  c.model.encoder_layers = 2;
  c.model.denoiser_layers = 4;
  c.model.heads = 4;
  c.guidance.w1 = 2.0;
  c.eval.fps = c.data.synth.fps;
  return c;
}

RunConfig paper_preset() {
  RunConfig c;
  c.preset = "paper";
  c.model = ModelConfig{};
  c.data.synth = SynthConfig{};
  c.train.lr = 1e-4;
  c.train.steps = 200000;
  c.eval.fps = c.data.synth.fps;
  return c;
}

RunConfig preset(const std::string& name) {
  if (name == "desk") return desk_preset();
  if (name == "paper") return paper_preset();
  throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  ram::to_json(j, c);
  return j;
}

namespace {

const char* kind_name(const nlohmann::json& v) {
  if (v.is_object()) return "object";
  if (v.is_string()) return "string";
  if (v.is_boolean()) return "boolean";
  if (v.is_number_integer() || v.is_number_unsigned()) return "integer";
  if (v.is_number_float()) return "number";
  return "other";
}

void overlay(nlohmann::json& base, const nlohmann::json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError(path + ": expected an object, got " + kind_name(user));
  for (const auto& [key, value] : user.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown configuration key '" + here + "'");
    nlohmann::json& slot = base[key];
    if (slot.is_object()) {
      overlay(slot, value, here);
      continue;
    }
    const bool slot_int = slot.is_number_integer() || slot.is_number_unsigned();
    const bool ok = (slot.is_string() && value.is_string()) || (slot.is_boolean() && value.is_boolean()) ||
                    (slot_int && (value.is_number_integer() || value.is_number_unsigned())) ||
                    (slot.is_number_float() && value.is_number());
    if (!ok) throw ConfigError(here + ": expected " + kind_name(slot) + ", got " + kind_name(value));
    if (slot_int && value.is_number_integer() && value.get<std::int64_t>() < 0 && slot.is_number_unsigned()) {
      throw ConfigError(here + ": expected a non-negative integer");
    }
    slot = value;
  }
}

}  // namespace

RunConfig from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  const std::string name = j.contains("preset") && j["preset"].is_string() ? j["preset"].get<std::string>() : "desk";
  nlohmann::json merged = to_json(preset(name));
  overlay(merged, j, "");
  RunConfig c;
  try {
    merged.get_to(c);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("configuration: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  c.validate();
  return c;
}

void apply_env_overrides(nlohmann::json& j, const std::map<std::string, std::string>& env) {
  const std::string prefix = kEnvPrefix;
  for (const auto& [name, raw] : env) {
    if (name.rfind(prefix, 0) != 0) continue;
    std::string rest = name.substr(prefix.size());
    std::transform(rest.begin(), rest.end(), rest.begin(), [](unsigned char ch) { return std::tolower(ch); });
    std::vector<std::string> parts;
    for (std::size_t pos = 0;;) {
      const std::size_t next = rest.find("__", pos);
      parts.push_back(rest.substr(pos, next == std::string::npos ? std::string::npos : next - pos));
      if (next == std::string::npos) break;
      pos = next + 2;
    }
    nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    nlohmann::json* node = &j;
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      if (!node->contains(parts[i])) (*node)[parts[i]] = nlohmann::json::object();
      node = &(*node)[parts[i]];
      if (!node->is_object()) throw ConfigError("environment override " + name + " descends into a scalar");
    }
    (*node)[parts.back()] = value;
  }
}

std::map<std::string, std::string> environment() {
  std::map<std::string, std::string> env;
  for (char** e = environ; e && *e; ++e) {
    const std::string kv = *e;
    const std::size_t eq = kv.find('=');
    if (eq != std::string::npos) env[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  return env;
}

RunConfig load_config(const std::string& path, const std::map<std::string, std::string>& env) {
  nlohmann::json j = nlohmann::json::object();
  if (!path.empty()) {
    j = nlohmann::json::parse(read_text_file(path), nullptr, false);
    if (j.is_discarded()) throw ConfigError(path + ": not valid JSON");
  }
  apply_env_overrides(j, env);
  return from_json(j);
}

std::uint64_t config_hash(const RunConfig& c) {
  nlohmann::json j = to_json(c);
  j.erase("out_dir");
  j["data"].erase("dir");
  const std::string s = j.dump();
  return fnv1a(s.data(), s.size());
}

}  // namespace ram
