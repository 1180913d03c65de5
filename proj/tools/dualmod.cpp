// Command-line front end: train / eval / infer / dump-decay / selfcheck.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dualmod/config.hpp"
#include "dualmod/selfcheck.hpp"
#include "dualmod/train.hpp"

namespace {

dualmod::RunConfig load_config_with_overrides(const std::string& config_path, long seed_override,
                                              const std::string& out_override) {
  dualmod::RunConfig cfg =
      config_path.empty() ? dualmod::RunConfig{} : dualmod::load_run_config(config_path);
  if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
  if (!out_override.empty()) cfg.out_dir = out_override;
  return cfg;
}

int cmd_train(const std::string& config_path, long seed, const std::string& out_dir) {
  dualmod::RunConfig cfg = load_config_with_overrides(config_path, seed, out_dir);
  dualmod::TrainResult res = dualmod::train_run(cfg, cfg.out_dir);
  std::cout << "steps: " << res.steps << "\n"
            << "initial training loss: " << dualmod::format_double(res.initial_loss) << "\n"
            << "final training loss:   " << dualmod::format_double(res.final_loss) << "\n"
            << "best validation GAME(0): " << dualmod::format_double(res.best_game0) << "\n"
            << "log:        " << res.log_path << "\n"
            << "best:       " << res.best_checkpoint << "\n"
            << "final:      " << res.final_checkpoint << "\n";
  return 0;
}

int cmd_eval(const std::string& config_path, long seed, const std::string& checkpoint,
             const std::string& out_csv) {
  dualmod::RunConfig cfg = load_config_with_overrides(config_path, seed, "");
  dualmod::EvalRunResult r = dualmod::eval_run(cfg, checkpoint, out_csv);
  std::cout << "images: " << r.report.n_images << "\n";
  for (int l = 0; l < 4; ++l)
    std::cout << "GAME(" << l << "): " << dualmod::format_double(r.report.game[l]) << "\n";
  std::cout << "RMSE: " << dualmod::format_double(r.report.rmse) << "\n"
            << "MAE:  " << dualmod::format_double(r.report.mae) << "\n";
  if (!out_csv.empty()) std::cout << "report: " << out_csv << "\n";
  return 0;
}

int cmd_infer(const std::string& config_path, long seed, const std::string& checkpoint,
              const std::string& rgb, const std::string& thermal, const std::string& out_prefix) {
  dualmod::RunConfig cfg = load_config_with_overrides(config_path, seed, "");
  dualmod::InferResult r = dualmod::infer_run(cfg, checkpoint, rgb, thermal, out_prefix);
  std::cout << "count: " << dualmod::format_double(r.count, "%.17g") << "\n";
  if (r.has_fusion_w) std::cout << "fusion_w: " << dualmod::format_double(r.fusion_w) << "\n";
  if (!out_prefix.empty())
    std::cout << "density: " << out_prefix << ".csv, " << out_prefix << ".pgm (scale in " << out_prefix
              << "_scale.txt)\n";
  return 0;
}

int cmd_dump_decay(const std::string& config_path, long seed, const std::string& checkpoint,
                   const std::string& out_csv, double max_dist, double step) {
  dualmod::RunConfig cfg = load_config_with_overrides(config_path, seed, "");
  dualmod::validate_run_config(cfg);
  dualmod::Model model(cfg.model, cfg.seed);
  if (!checkpoint.empty()) model.load_checkpoint(checkpoint);
  auto [scale, bias] = model.decay_effective();
  auto curves = dualmod::dump_decay_curves(scale, bias, cfg.model.leaky_slope, max_dist, step);
  dualmod::write_decay_csv(out_csv, curves);
  std::cout << "heads: " << scale.size() << "\ncurves: " << out_csv << "\n";
  return 0;
}

int cmd_selfcheck() {
  const auto t0 = std::chrono::steady_clock::now();
  auto results = dualmod::run_selfcheck();
  int failures = 0;
  for (const auto& r : results) {
    std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name;
    if (!r.pass && !r.detail.empty()) std::cout << " — " << r.detail;
    std::cout << "\n";
    if (!r.pass) ++failures;
  }
  const auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << results.size() - failures << "/" << results.size() << " checks passed in "
            << dualmod::format_double(dt, "%.1f") << " s\n";
  if (failures > 0) {
    const dualmod::CheckResult* first = dualmod::first_failure(results);
    std::cerr << "selfcheck failed at: " << first->name << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RGB-T crowd counting with spatially modulated attention and adaptive fusion"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint, out_csv, rgb_path, thermal_path, out_prefix;
  long seed = -1;
  double max_dist = 16.0, step = 0.25;

  CLI::App* train = app.add_subcommand("train", "train a model and write checkpoints");
  train->add_option("--config", config_path, "config file (key = value lines)");
  train->add_option("--seed", seed, "override the config seed");
  train->add_option("--out", out_dir, "override the output directory");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint, write the metric report CSV");
  eval->add_option("--config", config_path, "config file")->required();
  eval->add_option("--checkpoint", checkpoint, "checkpoint to evaluate")->required();
  eval->add_option("--seed", seed, "override the config seed");
  eval->add_option("--out", out_csv, "report CSV path");

  CLI::App* infer = app.add_subcommand("infer", "predict a density map for one RGB-T pair");
  infer->add_option("--config", config_path, "config file")->required();
  infer->add_option("--checkpoint", checkpoint, "checkpoint to use")->required();
  infer->add_option("--rgb", rgb_path, "RGB image (PPM)")->required();
  infer->add_option("--thermal", thermal_path, "thermal image (PGM)")->required();
  infer->add_option("--out", out_prefix, "output prefix for density files");

  CLI::App* dump = app.add_subcommand("dump-decay", "export per-head decay curves as CSV");
  dump->add_option("--config", config_path, "config file")->required();
  dump->add_option("--checkpoint", checkpoint, "checkpoint (optional: fresh init otherwise)");
  dump->add_option("--seed", seed, "override the config seed");
  dump->add_option("--out", out_csv, "curves CSV path")->required();
  dump->add_option("--max-dist", max_dist, "largest sampled distance");
  dump->add_option("--step", step, "distance increment");

  CLI::App* selfcheck = app.add_subcommand("selfcheck", "run the gradient, mask and metric suites");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(config_path, seed, out_dir);
    if (eval->parsed()) return cmd_eval(config_path, seed, checkpoint, out_csv);
    if (infer->parsed()) return cmd_infer(config_path, seed, checkpoint, rgb_path, thermal_path, out_prefix);
    if (dump->parsed()) return cmd_dump_decay(config_path, seed, checkpoint, out_csv, max_dist, step);
    if (selfcheck->parsed()) return cmd_selfcheck();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
