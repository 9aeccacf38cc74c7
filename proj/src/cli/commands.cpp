// SPDX-License-Identifier: Apache-2.0
#include "ram/cli/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "ram/io.hpp"
#include "ram/numerics/tensor.hpp"

namespace ram {

namespace fs = std::filesystem;

ErrorCategory classify(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return {"usage", 2};
  if (dynamic_cast<const ConfigError*>(&e)) return {"config", 3};
  if (dynamic_cast<const IoError*>(&e)) return {"io", 4};
  if (dynamic_cast<const FormatError*>(&e)) return {"format", 5};
  if (dynamic_cast<const NumericError*>(&e)) return {"numeric", 6};
  if (dynamic_cast<const EvaluatorChanged*>(&e)) return {"evaluator", 7};
  return {"internal", 1};
}

void stamp(nlohmann::json& j, const RunConfig& config) {
  j["config_hash"] = hex64(config_hash(config));
  j["code_version"] = kCodeVersion;
}

// ---- Dataset ----------------------------------------------------------------

namespace {

constexpr std::string_view kDatasetMagic = "RAMD";

nlohmann::json data_identity(const RunConfig& c) {
  nlohmann::json j = to_json(c)["data"];
  j.erase("dir");
  j["seed"] = c.seed;
  return j;
}

std::vector<std::uint8_t> encode_split(std::span<const MotionSequence> seqs) {
  ByteWriter w;
  w.raw(kDatasetMagic.data(), kDatasetMagic.size());
  w.u32(kDatasetFileVersion);
  w.u32(static_cast<std::uint32_t>(seqs.size()));
  for (const auto& s : seqs) {
    const auto blob = encode_motion_file(s);
    w.u32(static_cast<std::uint32_t>(blob.size()));
    w.raw(blob.data(), blob.size());
  }
  return w.take();
}

std::vector<MotionSequence> decode_split(const fs::path& path) {
  const auto bytes = read_file(path);
  ByteReader r(bytes, path.string());
  r.expect_magic(kDatasetMagic);
  const std::uint32_t version = r.u32();
  if (version != kDatasetFileVersion) throw FormatError(path.string() + ": unsupported version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  std::vector<MotionSequence> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t size = r.u32();
    if (size > r.remaining()) throw FormatError(path.string() + ": sequence " + std::to_string(i) + " truncated");
    std::vector<std::uint8_t> blob(size);
    r.raw(blob.data(), size);
    out.push_back(decode_motion_file(blob));
  }
  r.expect_end();
  return out;
}

nlohmann::json stats_json(const DatasetStats& s) {
  nlohmann::json j;
  j["mean"] = s.mean;
  j["stddev"] = s.stddev;
  j["constant"] = s.constant;
  return j;
}

DatasetStats stats_from(const nlohmann::json& j) {
  DatasetStats s;
  try {
    s.mean = j.at("mean").get<std::array<double, kNumChannels>>();
    s.stddev = j.at("stddev").get<std::array<double, kNumChannels>>();
    s.constant = j.at("constant").get<std::array<bool, kNumChannels>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset manifest stats: ") + e.what());
  }
  return s;
}

std::vector<SampleOrigin> origins(std::size_t begin, std::size_t count, std::uint64_t seed) {
  std::vector<SampleOrigin> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back({seed, begin + i});
  return out;
}

}  // namespace

std::uint64_t dataset_key(const RunConfig& config) {
  const std::string s = data_identity(config).dump();
  return fnv1a(s.data(), s.size());
}

void write_dataset(const fs::path& dir, const Dataset& data, const RunConfig& config) {
  write_file_atomic(dir / "train.ramd", encode_split(data.train));
  write_file_atomic(dir / "val.ramd", encode_split(data.val));
  write_file_atomic(dir / "test.ramd", encode_split(data.test));
  nlohmann::json m;
  m["dataset_key"] = hex64(dataset_key(config));
  m["data"] = data_identity(config);
  m["counts"] = {{"train", data.train.size()}, {"val", data.val.size()}, {"test", data.test.size()}};
  m["files"] = {{"train", "train.ramd"}, {"val", "val.ramd"}, {"test", "test.ramd"}};
  m["stats"] = stats_json(data.stats);
  m["units"] = "normalized";
  stamp(m, config);
  write_text_atomic(dir / "manifest.json", m.dump(2) + "\n");
}

Dataset load_dataset(const RunConfig& config) {
  const fs::path dir = config.data.dir;
  const fs::path manifest = dir / "manifest.json";
  if (!fs::exists(manifest)) return build_dataset(config.data.n, config.data.split, config.seed, config.data.synth);
  const auto m = nlohmann::json::parse(read_text_file(manifest), nullptr, false);
  if (m.is_discarded() || !m.is_object()) throw FormatError(manifest.string() + ": not valid JSON");
  const std::string want = hex64(dataset_key(config));
  if (m.value("dataset_key", std::string()) != want) {
    throw ConfigError(manifest.string() + ": dataset was generated with different data settings (key " +
                      m.value("dataset_key", std::string("?")) + ", configuration expects " + want + ")");
  }
  Dataset d;
  d.config = config.data.synth;
  d.stats = stats_from(m.at("stats"));
  auto split_file = [&](const char* tag) {
    const auto files = m.value("files", nlohmann::json::object());
    if (!files.is_object()) throw FormatError(manifest.string() + ": 'files' must be an object");
    return dir / files.value(tag, std::string(tag) + ".ramd");
  };
  d.train = decode_split(split_file("train"));
  d.val = decode_split(split_file("val"));
  d.test = decode_split(split_file("test"));
  d.train_origin = origins(0, d.train.size(), config.seed);
  d.val_origin = origins(d.train.size(), d.val.size(), config.seed);
  d.test_origin = origins(d.train.size() + d.val.size(), d.test.size(), config.seed);
  return d;
}

void cmd_gen_data(const RunConfig& config, std::ostream& out) {
  const Dataset d = build_dataset(config.data.n, config.data.split, config.seed, config.data.synth);
  write_dataset(config.data.dir, d, config);
  out << "wrote " << d.train.size() << "/" << d.val.size() << "/" << d.test.size() << " sequences to "
      << config.data.dir << "\n";
}

// ---- Training ---------------------------------------------------------------

namespace {

fs::path out_path(const RunConfig& c, const std::string& name) { return fs::path(c.out_dir) / name; }

std::string checkpoint_name(std::int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_%08lld.ramc", static_cast<long long>(step));
  return buf;
}

std::vector<std::string> read_log(const fs::path& path, std::int64_t before_step) {
  std::vector<std::string> lines;
  if (!fs::exists(path)) return lines;
  std::istringstream in(read_text_file(path));
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw FormatError(path.string() + ": malformed log line");
    if (j.value("step", std::int64_t{-1}) < before_step) lines.push_back(line);
  }
  return lines;
}

void write_log(const fs::path& path, const std::vector<std::string>& lines) {
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  write_text_atomic(path, text);
}

Evaluator obtain_evaluator(const RunConfig& config, const Dataset& data, std::ostream& out) {
  const fs::path path = out_path(config, "evaluator.ramc");
  if (fs::exists(path)) return load_evaluator(path, config.model.frame_dims);
  Evaluator ev(config.evaluator, config.model.frame_dims);
  out << "training evaluator (" << config.evaluator.steps << " steps)\n";
  const double loss = train_evaluator(ev, data.train);
  out << "evaluator loss " << loss << " hash " << hex64(ev.frozen_hash()) << "\n";
  save_evaluator(path, config, ev);
  return ev;
}

}  // namespace

std::int64_t cmd_train(const RunConfig& config_in, const TrainCommand& cmd, std::ostream& out) {
  RunConfig config = config_in;
  std::unique_ptr<ModelBundle> model;
  Adam opt(config.adam());
  if (cmd.resume) {
    const fs::path from = cmd.resume_from.empty() ? out_path(config, "last.ramc") : fs::path(cmd.resume_from);
    Checkpoint ck = load_checkpoint(from);
    const std::int64_t steps = config.train.steps;
    config = ck.config;
    config.train.steps = steps;
    model = std::move(ck.model);
    opt = std::move(ck.optimizer);
    out << "resuming from " << from.string() << " at step " << opt.steps() << "\n";
  } else {
    model = std::make_unique<ModelBundle>(config.model);
  }
  config.validate();
  out << "parameters: e_m " << model->parameter_count("e_m") << ", e_t " << model->parameter_count("e_t") << ", d "
      << model->parameter_count("d") << ", total " << model->params().count_values() << "\n";
  fs::create_directories(config.out_dir);
  const Dataset data = load_dataset(config);
  nlohmann::json cj = to_json(config);
  stamp(cj, config);
  write_text_atomic(out_path(config, "config.json"), cj.dump(2) + "\n");
  const Evaluator ev = obtain_evaluator(config, data, out);

  const NoiseSchedule schedule = config.make_noise_schedule();
  const TrainOptions options = config.train_options();
  const std::int64_t end = cmd.max_steps >= 0 ? std::min(cmd.max_steps, config.train.steps) : config.train.steps;
  const fs::path log_path = out_path(config, "train_log.jsonl");
  std::vector<std::string> log = read_log(log_path, opt.steps());
  const std::string hash = hex64(config_hash(config));

  auto on_step = [&](std::int64_t step, const LossReport& r) {
    if (step % config.train.log_every != 0 && step + 1 != end) return;
    nlohmann::json j;
    j["step"] = step;
    j["lr"] = options.lr * std::min(1.0, static_cast<double>(step + 1) / std::max(1, options.warmup_steps));
    j["l_rec"] = r.l_rec;
    j["l_gen"] = r.l_gen;
    j["l_sr"] = r.l_sr;
    j["l_latent"] = r.l_latent;
    j["l_contrastive"] = r.l_contrastive;
    j["l_overall"] = r.l_overall;
    j["config_hash"] = hash;
    j["code_version"] = kCodeVersion;
    log.push_back(j.dump());
    out << "step " << step << " loss " << r.l_overall << "\n";
  };

  const std::int64_t every = config.train.checkpoint_every > 0 ? config.train.checkpoint_every : end;
  while (opt.steps() < end) {
    const std::int64_t chunk_end = std::min(end, (opt.steps() / every + 1) * every);
    train(*model, opt, data.train, schedule, config.loss, options, chunk_end, on_step);
    save_checkpoint(out_path(config, checkpoint_name(opt.steps())), config, *model, opt, opt.steps(),
                    ev.frozen_hash());
    save_checkpoint(out_path(config, "last.ramc"), config, *model, opt, opt.steps(), ev.frozen_hash());
    write_log(log_path, log);
  }
  if (!fs::exists(out_path(config, "last.ramc"))) {
    save_checkpoint(out_path(config, "last.ramc"), config, *model, opt, opt.steps(), ev.frozen_hash());
    write_log(log_path, log);
  }
  return opt.steps();
}

// ---- Inference commands -------------------------------------------------------

RunConfig apply_overrides(RunConfig c, const GuidanceOverrides& o) {
  if (o.w1) c.guidance.w1 = *o.w1;
  if (o.w2) c.guidance.w2 = *o.w2;
  if (o.reg_steps) c.guidance.reg_steps = *o.reg_steps;
  if (o.steps) c.inference_steps = *o.steps;
  c.validate();
  return c;
}

MotionSequence cmd_sample(const SampleCommand& cmd, std::ostream& out) {
  if (cmd.out.empty()) throw UsageError("sample: --out is required");
  if (cmd.length < 0) throw UsageError("sample: --length must be positive");
  ActionScript script;
  try {
    script.tokens = parse_script(cmd.script);
    script.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("sample: ") + e.what());
  }
  Checkpoint ck = load_checkpoint(cmd.checkpoint);
  const RunConfig config = apply_overrides(ck.config, cmd.guidance);
  const Dataset data = load_dataset(config);
  const int length = cmd.length > 0 ? cmd.length : generate(script, cmd.seed, config.data.synth).length;
  const MotionSequence norm = sample(*ck.model, script, length, config.make_noise_schedule(), config.make_guidance(),
                                     cmd.seed, config.data.synth.fps);
  MotionSequence raw = denormalize(norm, data.stats);
  write_motion_file(cmd.out, raw);
  out << "wrote " << length << " frames (" << script_to_string(script.tokens) << ") to " << cmd.out << "\n";
  return raw;
}

namespace {

std::string default_evaluator(const std::string& checkpoint, const std::string& given) {
  if (!given.empty()) return given;
  return (fs::path(checkpoint).parent_path() / "evaluator.ramc").string();
}

Evaluator open_evaluator(const std::string& path, const Checkpoint& ck) {
  Evaluator ev = load_evaluator(path, ck.config.model.frame_dims);
  if (ck.evaluator_hash != 0 && ck.evaluator_hash != ev.frozen_hash()) {
    throw EvaluatorChanged("evaluator " + path + " has hash " + hex64(ev.frozen_hash()) + ", checkpoint was trained with " +
                           hex64(ck.evaluator_hash));
  }
  return ev;
}

EvalOptions eval_options(const RunConfig& c) {
  EvalOptions o = c.eval;
  o.fps = c.data.synth.fps;
  return o;
}

nlohmann::json guidance_json(const RunConfig& c) {
  return {{"w1", c.guidance.w1},
          {"w2", c.guidance.w2},
          {"reg_steps", c.guidance.reg_steps},
          {"inference_steps", c.inference_steps}};
}

}  // namespace

nlohmann::json cmd_eval(const EvalCommand& cmd, std::ostream& out) {
  Checkpoint ck = load_checkpoint(cmd.checkpoint);
  RunConfig config = apply_overrides(ck.config, cmd.guidance);
  if (cmd.seed) config.eval.seed = *cmd.seed;
  if (cmd.n_samples) config.eval.n_samples = *cmd.n_samples;
  const Evaluator ev = open_evaluator(default_evaluator(cmd.checkpoint, cmd.evaluator), ck);
  const Dataset data = load_dataset(config);
  const EvalReport rep =
      evaluate(*ck.model, config.make_guidance(), config.make_noise_schedule(), data.test, ev, eval_options(config));
  nlohmann::json j = report_json(rep);
  j["guidance"] = guidance_json(config);
  j["checkpoint_step"] = ck.step;
  stamp(j, config);
  const std::string path = cmd.out.empty() ? out_path(config, "eval.json").string() : cmd.out;
  write_text_atomic(path, j.dump(2) + "\n");
  out << "FID " << rep.fid.value << "  R-P@1 " << rep.rp1.value << "  wrote " << path << "\n";
  return j;
}

// ---- Sweeps -----------------------------------------------------------------

bool sweep_requires_training(const std::string& axis) {
  return axis == "beta-tau" || axis == "loss-weights" || axis == "d_E" || axis == "variant";
}

std::vector<std::pair<std::string, RunConfig>> sweep_settings(const RunConfig& base, const std::string& axis) {
  std::vector<std::pair<std::string, RunConfig>> out;
  auto add = [&](std::string label, RunConfig c) {
    c.validate();
    out.emplace_back(std::move(label), std::move(c));
  };
  auto fmt = [](double v) {
    std::ostringstream s;
    s << v;
    return s.str();
  };
  if (axis == "w1w2") {
    const double grid[][2] = {{0, 0}, {3, 0}, {4, 0}, {5, 0}, {0, 1.5}, {0, 2.5}, {0, 3.5}, {0, 4.5}, {5, 1.5}};
    for (const auto& g : grid) {
      RunConfig c = base;
      c.guidance.w1 = g[0];
      c.guidance.w2 = g[1];
      add("w1=" + fmt(g[0]) + " w2=" + fmt(g[1]), c);
    }
  } else if (axis == "reg-steps") {
    for (const char* s : {"none", "early:2", "early:4", "early:6", "all"}) {
      RunConfig c = base;
      c.guidance.reg_steps = s;
      add(s, c);
    }
  } else if (axis == "beta-tau") {
    const double grid[][2] = {{1, 1}, {0.1, 1}, {0.01, 1}, {0, 1}, {0.01, 2}, {0.01, 0.5}};
    for (const auto& g : grid) {
      RunConfig c = base;
      c.loss.beta = g[0];
      c.loss.tau = g[1];
      add("beta=" + fmt(g[0]) + " tau=" + fmt(g[1]), c);
    }
  } else if (axis == "loss-weights") {
    const double grid[][2] = {{1, 1}, {1, 0.5}, {1, 0.1}, {1, 0}, {0.5, 1}, {0.1, 1}, {0, 1}};
    for (const auto& g : grid) {
      RunConfig c = base;
      c.loss.w_latent = g[0];
      c.loss.w_sr = g[1];
      add("w_latent=" + fmt(g[0]) + " w_sr=" + fmt(g[1]), c);
    }
  } else if (axis == "d_E") {
    const int d = base.model.latent_dim;
    for (int v : {d / 2, 3 * d / 4, d, 3 * d / 2, 2 * d}) {
      RunConfig c = base;
      c.model.latent_dim = v - v % c.model.heads;
      add("d_E=" + std::to_string(c.model.latent_dim), c);
    }
  } else if (axis == "variant") {
    for (const char* v : {"A", "B", "C", "D", "E", "full"}) {
      RunConfig c = base;
      c.loss.variant = parse_variant(v);
      add(v, c);
    }
  } else {
    throw UsageError("sweep: unknown axis '" + axis + "' (expected w1w2, beta-tau, loss-weights, d_E, reg-steps or variant)");
  }
  return out;
}

std::string cmd_sweep(const SweepCommand& cmd, std::ostream& out) {
  Checkpoint ck = load_checkpoint(cmd.checkpoint);
  RunConfig base = ck.config;
  if (cmd.n_samples) base.eval.n_samples = *cmd.n_samples;
  const auto settings = sweep_settings(base, cmd.axis);
  const Evaluator ev = open_evaluator(default_evaluator(cmd.checkpoint, cmd.evaluator), ck);
  const Dataset data = load_dataset(base);
  const bool retrain = sweep_requires_training(cmd.axis);
  const bool timed = cmd.axis == "reg-steps";

  std::ostringstream csv;
  csv << "axis,setting,fid,fid_ci95,rp1,rp1_ci95,rp2,rp2_ci95,rp3,rp3_ci95,mm_dist,mm_dist_ci95,diversity,"
         "diversity_ci95,multimodality,multimodality_ci95,samples";
  if (timed) csv << ",aits_s";
  csv << ",config_hash,code_version\n";
  csv.precision(9);
  for (const auto& [label, cfg_in] : settings) {
    RunConfig cfg = cfg_in;
    std::unique_ptr<ModelBundle> trained;
    const ModelBundle* model = ck.model.get();
    if (retrain) {
      if (cmd.train_steps) cfg.train.steps = *cmd.train_steps;
      trained = std::make_unique<ModelBundle>(cfg.model);
      Adam opt(cfg.adam());
      out << "training " << label << " for " << cfg.train.steps << " steps\n";
      train(*trained, opt, data.train, cfg.make_noise_schedule(), cfg.loss, cfg.train_options(), cfg.train.steps);
      model = trained.get();
    }
    const GuidanceConfig g = cfg.make_guidance();
    const NoiseSchedule s = cfg.make_noise_schedule();
    const EvalReport r = evaluate(*model, g, s, data.test, ev, eval_options(cfg));
    csv << cmd.axis << ",\"" << label << "\"";
    for (const MetricCI* m : {&r.fid, &r.rp1, &r.rp2, &r.rp3, &r.mm_dist, &r.diversity, &r.multimodality}) {
      csv << "," << m->value << "," << m->ci;
    }
    csv << "," << r.samples;
    if (timed) {
      std::vector<SampleRequest> prompts;
      for (std::size_t i = 0; i < std::min<std::size_t>(10, data.test.size()); ++i) {
        prompts.push_back({data.test[i].script, data.test[i].length, cfg.eval.seed + i});
      }
      csv << "," << measure_aits(*model, prompts, s, g, cfg.data.synth.fps).seconds_per_prompt;
    }
    csv << "," << hex64(config_hash(cfg)) << "," << kCodeVersion << "\n";
    out << label << ": FID " << r.fid.value << " R-P@1 " << r.rp1.value << "\n";
  }
  const std::string path = cmd.out.empty() ? out_path(base, "sweep_" + cmd.axis + ".csv").string() : cmd.out;
  write_text_atomic(path, csv.str());
  out << "wrote " << path << "\n";
  return csv.str();
}

nlohmann::json cmd_bench_aits(const BenchCommand& cmd, std::ostream& out) {
  if (cmd.prompts < 1 || cmd.repeats < 1) throw UsageError("bench-aits: --prompts and --repeats must be positive");
  Checkpoint ck = load_checkpoint(cmd.checkpoint);
  const RunConfig config = apply_overrides(ck.config, cmd.guidance);
  const Dataset data = load_dataset(config);
  std::vector<SampleRequest> prompts;
  for (int i = 0; i < cmd.prompts; ++i) {
    const auto& ref = data.test[static_cast<std::size_t>(i) % data.test.size()];
    prompts.push_back({ref.script, ref.length, config.eval.seed + static_cast<std::uint64_t>(i)});
  }
  const GuidanceConfig g = config.make_guidance();
  const RegOverhead r =
      measure_reg_overhead(*ck.model, prompts, config.make_noise_schedule(), g, config.data.synth.fps, cmd.repeats);
  nlohmann::json j;
  j["prompts"] = cmd.prompts;
  j["repeats"] = cmd.repeats;
  j["inference_steps"] = config.inference_steps;
  j["aits_none_s"] = r.aits_none;
  j["aits_all_s"] = r.aits_all;
  j["step_baseline_s"] = r.step_baseline;
  j["step_reg_s"] = r.step_reg;
  j["denoiser_pass_s"] = r.denoiser_pass;
  j["encoder_pass_s"] = r.encoder_pass;
  j["predicted_step_reg_s"] = r.predicted_step_reg;
  j["relative_error"] = r.relative_error;
  stamp(j, config);
  const std::string path = cmd.out.empty() ? out_path(config, "aits.json").string() : cmd.out;
  write_text_atomic(path, j.dump(2) + "\n");
  out << "AITS none " << r.aits_none << " s, all " << r.aits_all << " s, accounting error " << r.relative_error
      << "  wrote " << path << "\n";
  return j;
}

}  // namespace ram
