#pragma once

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "dualmod/config.hpp"
#include "dualmod/data.hpp"
#include "dualmod/gradcheck.hpp"
#include "dualmod/loss_metrics.hpp"
#include "dualmod/model.hpp"

namespace dualmod {

// Adam with decoupled weight decay:
//   p -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)
class AdamW {
 public:
  AdamW(OptimConfig cfg, const ParamStore& store) : cfg_(cfg) {
    m_.resize(store.count());
    v_.resize(store.count());
    for (std::size_t i = 0; i < store.count(); ++i) {
      m_[i].assign(store.at(i).size(), 0.0);
      v_[i].assign(store.at(i).size(), 0.0);
    }
  }

  void step(ParamStore& store) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t i = 0; i < store.count(); ++i) {
      Parameter& p = store.at(i);
      const std::vector<double>& g = p.grad();
      std::vector<double>& m = m_[i];
      std::vector<double>& v = v_[i];
      double* pv = p.value().data();
      for (std::size_t j = 0; j < g.size(); ++j) {
        m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
        v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
        const double m_hat = m[j] / bc1;
        const double v_hat = v[j] / bc2;
        pv[j] -= cfg_.lr * (m_hat / (std::sqrt(v_hat) + cfg_.eps) + cfg_.weight_decay * pv[j]);
      }
    }
  }

  int steps_taken() const { return t_; }

 private:
  OptimConfig cfg_;
  int t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Deterministic scene set: counts and brightness drawn from one metadata
// stream, per-scene content from per-scene seeds, ids zero-padded so sorted
// order equals generation order.
inline std::vector<Sample> build_synthetic_set(const SyntheticSpec& spec, std::uint64_t seed, int count,
                                               std::uint64_t stream, const std::string& prefix) {
  std::vector<Sample> out;
  out.reserve(count);
  Rng meta(mix_seed(seed, stream));
  for (int i = 0; i < count; ++i) {
    SceneSpec sc;
    sc.width = spec.width;
    sc.height = spec.height;
    sc.n_people = spec.people_min +
                  static_cast<int>(meta.uniform_int(static_cast<std::uint64_t>(spec.people_max -
                                                                               spec.people_min) + 1));
    sc.rgb_brightness = meta.uniform(spec.brightness_min, spec.brightness_max);
    sc.blob_radius = spec.blob_radius;
    sc.seed = meta.next_u64();
    Sample s = generate_scene(sc);
    char id[32];
    std::snprintf(id, sizeof id, "%s_%04d", prefix.c_str(), i);
    s.id = id;
    out.push_back(std::move(s));
  }
  return out;
}

inline int eval_threads_from_env() {
  const char* env = std::getenv("DUALMOD_THREADS");
  int n = 0;
  if (env) n = std::atoi(env);
  if (n < 1) n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  return std::min(n, 64);
}

// Parallel per-image evaluation; results land at each sample's index, so the
// output order (and every aggregate over it) is independent of thread count.
inline std::vector<ImageEval> evaluate_samples(const Model& model, const std::vector<Sample>& samples,
                                               int threads = 0) {
  if (threads <= 0) threads = eval_threads_from_env();
  threads = std::min<int>(threads, static_cast<int>(samples.size()));
  std::vector<ImageEval> evals(samples.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    NoGradGuard ng;
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= samples.size()) return;
      const Sample& s = samples[i];
      double w = 0.0;
      DensityMap dm = model.infer(s.rgb, s.thermal, &w);
      ImageEval e;
      e.id = s.id;
      e.count_pred = dm.count();
      e.count_gt = static_cast<double>(s.points.size());
      for (int l = 0; l < 4; ++l) e.game[l] = game_level(dm, s.width(), s.height(), s.points, l);
      e.has_fusion_w = model.config().afm_enabled;
      e.fusion_w = e.has_fusion_w ? w : 0.0;
      evals[i] = std::move(e);
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  return evals;
}

inline double mean_training_loss(const Model& model, const std::vector<Sample>& samples) {
  NoGradGuard ng;
  double acc = 0.0;
  const ModelConfig& mc = model.config();
  for (const Sample& s : samples) {
    Model::Output out = model.forward(s.rgb, s.thermal);
    acc += bayesian_loss(out.density, s.points, mc.sigma, mc.downsample_factor(),
                         mc.empty_scene_penalty)[0];
  }
  return acc / static_cast<double>(samples.size());
}

struct TrainResult {
  double initial_loss = 0.0;  // eval-mode mean training loss before updates
  double final_loss = 0.0;    // same after the last update
  double best_game0 = 0.0;
  long steps = 0;
  std::string log_path, best_checkpoint, final_checkpoint;
};

// One training run: Adam with decoupled weight decay, one sample per step in
// fixed order, per-epoch log line `epoch,loss,game0_val,fusion_w_mean`, best
// checkpoint by validation GAME(0). Everything is derived from the config
// seed, so identical configs give byte-identical logs and checkpoints.
inline TrainResult train_run(const RunConfig& cfg, const std::string& out_dir) {
  validate_run_config(cfg);
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  std::vector<Sample> train, val;
  if (cfg.data_source == "synthetic") {
    train = build_synthetic_set(cfg.synthetic, cfg.seed, cfg.synthetic.train_count, 101, "train");
    val = build_synthetic_set(cfg.synthetic, cfg.seed, cfg.synthetic.val_count, 202, "val");
  } else {
    train = load_dataset(cfg.data_path, "train");
    if (fs::is_directory(fs::path(cfg.data_path) / "val" / "rgb")) val = load_dataset(cfg.data_path, "val");
  }
  if (train.empty()) throw ConfigError("training set is empty");
  const bool val_is_train = val.empty();
  const std::vector<Sample>& val_set = val_is_train ? train : val;

  Model model(cfg.model, cfg.seed);
  AdamW opt(cfg.optim, model.params());
  const int f = cfg.model.downsample_factor();

  TrainResult res;
  res.log_path = out_dir + "/train_log.csv";
  res.best_checkpoint = out_dir + "/checkpoint_best.bin";
  res.final_checkpoint = out_dir + "/checkpoint_final.bin";
  std::ofstream log(res.log_path);
  if (!log) throw IoError("cannot open training log: " + res.log_path);
  log << "epoch,loss,game0_val,fusion_w_mean\n";

  auto val_game0 = [&]() { return aggregate_evals(evaluate_samples(model, val_set)).game[0]; };

  res.initial_loss = mean_training_loss(model, train);
  double best = val_game0();
  model.save_checkpoint(res.best_checkpoint);

  Rng aug_rng(mix_seed(cfg.seed, 303));
  long steps = 0;
  bool out_of_steps = false;
  for (int epoch = 1; epoch <= cfg.epochs && !out_of_steps; ++epoch) {
    double loss_acc = 0.0, w_acc = 0.0;
    int n_steps = 0, n_w = 0;
    for (const Sample& base : train) {
      if (cfg.max_steps > 0 && steps >= cfg.max_steps) {
        out_of_steps = true;
        break;
      }
      const Sample& s = base;
      Sample cropped;
      const Sample* use = &s;
      if (cfg.crop > 0) {
        cropped = augment(s, cfg.crop, cfg.flip_prob, aug_rng);
        use = &cropped;
      }
      model.params().zero_grad();
      Model::Output out = model.forward(use->rgb, use->thermal);
      Tensor loss =
          bayesian_loss(out.density, use->points, cfg.model.sigma, f, cfg.model.empty_scene_penalty);
      backward(loss);
      opt.step(model.params());
      loss_acc += loss[0];
      ++n_steps;
      ++steps;
      if (out.fusion_w.defined()) {
        w_acc += out.fusion_w[0];
        ++n_w;
      }
    }
    if (n_steps == 0) break;
    const bool do_val = epoch % cfg.val_every == 0 || epoch == cfg.epochs || out_of_steps;
    std::string g0_field = "na";
    if (do_val) {
      const double g0 = val_game0();
      g0_field = format_double(g0);
      if (g0 < best) {
        best = g0;
        model.save_checkpoint(res.best_checkpoint);
      }
    }
    log << epoch << ',' << format_double(loss_acc / n_steps) << ',' << g0_field << ','
        << (n_w > 0 ? format_double(w_acc / n_w) : std::string("na")) << '\n';
  }
  log.close();

  res.best_game0 = best;
  res.steps = steps;
  model.save_checkpoint(res.final_checkpoint);
  res.final_loss = mean_training_loss(model, train);
  return res;
}

struct EvalRunResult {
  std::vector<ImageEval> evals;
  MetricReport report;
};

inline EvalRunResult eval_run(const RunConfig& cfg, const std::string& checkpoint_path,
                              const std::string& out_csv) {
  validate_run_config(cfg);
  std::vector<Sample> set;
  if (cfg.data_source == "synthetic")
    set = build_synthetic_set(cfg.synthetic, cfg.seed, cfg.synthetic.val_count, 202, "val");
  else
    set = load_dataset(cfg.data_path, cfg.eval_split);
  if (set.empty()) throw ConfigError("evaluation dataset is empty; metrics are undefined");
  Model model(cfg.model, cfg.seed);
  model.load_checkpoint(checkpoint_path);
  EvalRunResult r;
  r.evals = evaluate_samples(model, set);
  r.report = aggregate_evals(r.evals);
  if (!out_csv.empty()) write_report_csv(out_csv, r.evals);
  return r;
}

struct InferResult {
  DensityMap density;
  double count = 0.0;
  double fusion_w = 0.0;
  bool has_fusion_w = false;
};

// Writes <prefix>.csv (the raw density grid), <prefix>.pgm (density scaled to
// 0..255) and <prefix>_scale.txt holding the density value one pixel unit
// stands for.
inline InferResult infer_run(const RunConfig& cfg, const std::string& checkpoint_path,
                             const std::string& rgb_path, const std::string& thermal_path,
                             const std::string& out_prefix) {
  validate_run_config(cfg);
  Model model(cfg.model, cfg.seed);
  model.load_checkpoint(checkpoint_path);
  Tensor rgb = read_pnm(rgb_path);
  Tensor thermal = read_pnm(thermal_path);
  if (rgb.dim(0) != 3) throw IoError("rgb input must be a 3-channel PPM: " + rgb_path);
  if (thermal.dim(0) != 1) throw IoError("thermal input must be a single-channel PGM: " + thermal_path);
  InferResult r;
  double w = 0.0;
  r.density = model.infer(rgb, thermal, &w);
  r.count = r.density.count();
  r.has_fusion_w = cfg.model.afm_enabled;
  r.fusion_w = r.has_fusion_w ? w : 0.0;

  if (!out_prefix.empty()) {
    std::ofstream csv(out_prefix + ".csv");
    if (!csv) throw IoError("cannot open density csv: " + out_prefix + ".csv");
    const std::size_t h = r.density.h(), wd = r.density.w();
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < wd; ++x) {
        if (x) csv << ',';
        csv << format_double(r.density.values[y * wd + x], "%.17g");
      }
      csv << '\n';
    }
    double maxv = 0.0;
    for (std::size_t i = 0; i < r.density.values.size(); ++i)
      maxv = std::max(maxv, r.density.values[i]);
    Tensor scaled(Shape{1, h, wd});
    if (maxv > 0.0)
      for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = r.density.values[i] / maxv;
    write_pgm(out_prefix + ".pgm", scaled);
    std::ofstream side(out_prefix + "_scale.txt");
    side << "density_per_pixel_unit = " << format_double(maxv / 255.0, "%.17g") << '\n';
  }
  return r;
}

inline void write_decay_csv(const std::string& path, const std::vector<DecayCurvePoint>& points) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open decay csv: " + path);
  out << "head,distance,mask_value\n";
  for (const DecayCurvePoint& p : points)
    out << p.head << ',' << format_double(p.distance) << ',' << format_double(p.mask) << '\n';
  if (!out) throw IoError("decay csv write failed: " + path);
}

}  // namespace dualmod
