// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "ram/cli/commands.hpp"
#include "ram/io.hpp"

namespace {

template <class T>
void optional_flag(CLI::App* app, const std::string& name, std::optional<T>& slot, const std::string& help) {
  app->add_option_function<T>(name, [&slot](const T& v) { slot = v; }, help);
}

void guidance_flags(CLI::App* app, ram::GuidanceOverrides& g) {
  optional_flag(app, "--w1", g.w1, "reconstructive guidance weight");
  optional_flag(app, "--w2", g.w2, "classifier-free guidance weight");
  optional_flag(app, "--reg-steps", g.reg_steps, "none, all or early:K");
  optional_flag(app, "--steps", g.steps, "number of inference steps");
}

}  // namespace

int main(int argc, char** argv) {
  // Progress lines appear as they happen even when stdout is a file.
  std::cout << std::unitbuf;
  CLI::App app{"Script-to-motion diffusion with reconstructive guidance, desk scale"};
  app.require_subcommand(1);
  std::string config_path;
  std::string preset_name;
  app.add_option("-c,--config", config_path, "JSON run configuration; RAM_<SECTION>__<KEY> variables override it");
  app.add_option("--preset", preset_name, "desk or paper (used when the file names none)");

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset into data.dir");

  ram::TrainCommand train_cmd;
  auto* train = app.add_subcommand("train", "train the evaluator (once) and the model");
  train->add_flag("--resume", train_cmd.resume, "continue from the last checkpoint in out_dir");
  train->add_option("--from", train_cmd.resume_from, "checkpoint to resume from");
  train->add_option("--max-steps", train_cmd.max_steps, "stop at this step");

  ram::SampleCommand sample_cmd;
  auto* sample = app.add_subcommand("sample", "generate one motion from an action script");
  sample->add_option("checkpoint", sample_cmd.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  sample->add_option("--script", sample_cmd.script, "actions, e.g. walk-fwd,turn-left")->required();
  sample->add_option("--length", sample_cmd.length, "frames; 0 picks the generator's length");
  sample->add_option("--seed", sample_cmd.seed, "sampler seed");
  sample->add_option("-o,--out", sample_cmd.out, "output motion file")->required();
  guidance_flags(sample, sample_cmd.guidance);

  ram::EvalCommand eval_cmd;
  auto* eval = app.add_subcommand("eval", "score a checkpoint on the test split");
  eval->add_option("checkpoint", eval_cmd.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--evaluator", eval_cmd.evaluator, "evaluator file (default: beside the checkpoint)");
  eval->add_option("-o,--out", eval_cmd.out, "report path (default: out_dir/eval.json)");
  optional_flag(eval, "--seed", eval_cmd.seed, "evaluation seed");
  optional_flag(eval, "--samples", eval_cmd.n_samples, "generated samples (0: one per test sequence)");
  guidance_flags(eval, eval_cmd.guidance);

  ram::SweepCommand sweep_cmd;
  auto* sweep = app.add_subcommand("sweep", "ablation sweep along one axis, written as CSV");
  sweep->add_option("checkpoint", sweep_cmd.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--axis", sweep_cmd.axis, "w1w2, beta-tau, loss-weights, d_E, reg-steps or variant")
      ->required()
      ->check(CLI::IsMember({"w1w2", "beta-tau", "loss-weights", "d_E", "reg-steps", "variant"}));
  sweep->add_option("--evaluator", sweep_cmd.evaluator, "evaluator file (default: beside the checkpoint)");
  sweep->add_option("-o,--out", sweep_cmd.out, "CSV path (default: out_dir/sweep_<axis>.csv)");
  optional_flag(sweep, "--train-steps", sweep_cmd.train_steps, "training steps per setting for training-time axes");
  optional_flag(sweep, "--samples", sweep_cmd.n_samples, "generated samples per setting");

  ram::BenchCommand bench_cmd;
  auto* bench = app.add_subcommand("bench-aits", "time inference per prompt with and without REG");
  bench->add_option("checkpoint", bench_cmd.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  bench->add_option("--prompts", bench_cmd.prompts, "prompts from the test split");
  bench->add_option("--repeats", bench_cmd.repeats, "timing repeats (minimum is kept)");
  bench->add_option("-o,--out", bench_cmd.out, "report path (default: out_dir/aits.json)");
  guidance_flags(bench, bench_cmd.guidance);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  }

  try {
    auto load = [&] {
      nlohmann::json j = nlohmann::json::object();
      if (!config_path.empty()) {
        j = nlohmann::json::parse(ram::read_text_file(config_path), nullptr, false);
        if (j.is_discarded()) throw ram::ConfigError(config_path + ": not valid JSON");
      }
      if (!preset_name.empty() && !j.contains("preset")) j["preset"] = preset_name;
      ram::apply_env_overrides(j, ram::environment());
      return ram::from_json(j);
    };
    if (*gen) {
      ram::cmd_gen_data(load(), std::cout);
    } else if (*train) {
      ram::cmd_train(load(), train_cmd, std::cout);
    } else if (*sample) {
      ram::cmd_sample(sample_cmd, std::cout);
    } else if (*eval) {
      ram::cmd_eval(eval_cmd, std::cout);
    } else if (*sweep) {
      ram::cmd_sweep(sweep_cmd, std::cout);
    } else if (*bench) {
      ram::cmd_bench_aits(bench_cmd, std::cout);
    }
  } catch (const std::exception& e) {
    const ram::ErrorCategory c = ram::classify(e);
    std::string detail = e.what();
    for (char& ch : detail) {
      if (ch == '\n') ch = ' ';
    }
    std::cerr << "error: " << c.name << ": " << detail << "\n";
    return c.exit_code;
  }
  return 0;
}
