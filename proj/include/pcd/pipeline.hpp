// Copyright (c) the pcd authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "pcd/calibration.hpp"
#include "pcd/curriculum.hpp"
#include "pcd/distill.hpp"
#include "pcd/io.hpp"
#include "pcd/metrics.hpp"
#include "pcd/net.hpp"
#include "pcd/perturb.hpp"
#include "pcd/rng.hpp"
#include "pcd/svg.hpp"
#include "pcd/svls.hpp"
#include "pcd/synth.hpp"

namespace pcd {

enum class Mode { iid, sd, pcd, pcd_no_bu };

inline Mode mode_from_name(const std::string& s) {
  if (s == "iid") return Mode::iid;
  if (s == "sd") return Mode::sd;
  if (s == "pcd") return Mode::pcd;
  if (s == "pcd_no_bu") return Mode::pcd_no_bu;
  throw std::invalid_argument("unknown mode: " + s);
}

inline const char* mode_name(Mode m) {
  switch (m) {
    case Mode::iid: return "iid";
    case Mode::sd: return "sd";
    case Mode::pcd: return "pcd";
    case Mode::pcd_no_bu: return "pcd_no_bu";
  }
  return "?";
}

struct RunConfig {
  std::string data_dir;
  std::string val_dir;     // optional
  std::string teacher_dir; // required for distillation modes
  std::string out_dir;
  Mode mode = Mode::sd;
  PacingConfig pacing;
  int epochs = 150;  // paper-scale default; desk runs pass fewer
  int batch = 16;
  double tau = 1.0;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  int width = 16;
  double mu_init_override = -1.0;  // >= 0 forces mu_init (1.0 collapses to SD)
  double calib_fraction = 0.2;
  int threads = 2;
};

// rng stream ids, fixed so every mode reproduces the same split and order
namespace streams {
inline constexpr std::uint64_t kSplit = 1;
inline constexpr std::uint64_t kTeacherInit = 10;
inline constexpr std::uint64_t kStudentInit = 11;
inline constexpr std::uint64_t kShuffleBase = 3000;
}  // namespace streams

// ---------------------------------------------------------------------------
// helpers
// ---------------------------------------------------------------------------

/// Results land in per-index slots, so scheduling cannot affect output.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  const int t_n = std::min<int>(threads, static_cast<int>(n));
  pool.reserve(static_cast<std::size_t>(t_n));
  for (int t = 0; t < t_n; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

/// Deterministic 80/20-style split of [0, n): a seeded permutation, first
/// (1 - calib_fraction) indices train, the rest calibrate.
inline void split_indices(std::size_t n, double calib_fraction, std::uint64_t seed,
                          std::vector<std::size_t>& train, std::vector<std::size_t>& calib) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(derive_seed(seed, streams::kSplit));
  rng.shuffle(perm.begin(), perm.end());
  auto n_calib = static_cast<std::size_t>(std::lround(static_cast<double>(n) * calib_fraction));
  if (n_calib >= n) n_calib = n - 1;
  train.assign(perm.begin(), perm.end() - static_cast<std::ptrdiff_t>(n_calib));
  calib.assign(perm.end() - static_cast<std::ptrdiff_t>(n_calib), perm.end());
}

inline EvalResult evaluate_model(const ConvNet& net, const std::vector<Sample>& samples,
                                 std::vector<EvalResult>* per_image = nullptr, int threads = 2) {
  std::vector<EvalResult> results(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    results[i] = evaluate(argmax_labels(forward(net, samples[i].image)), samples[i].labels);
  });
  EvalResult agg = aggregate(results);
  if (per_image) *per_image = std::move(results);
  return agg;
}

inline void write_eval_csv(const std::string& path, const std::vector<EvalResult>& per_image,
                           const EvalResult& agg) {
  std::string out = "image_id,class,dsc,iou,precision\n";
  auto row = [&out](const std::string& id, const std::string& cls, double d, double i, double p) {
    out += id + "," + cls + "," + format_double(d) + "," + format_double(i) + "," +
           format_double(p) + "\n";
  };
  for (std::size_t i = 0; i < per_image.size(); ++i) {
    const auto& r = per_image[i];
    for (std::size_t c = 0; c < r.per_class.size(); ++c)
      if (r.per_class[c].counted)
        row(std::to_string(i), std::to_string(c), r.per_class[c].dsc, r.per_class[c].iou,
            r.per_class[c].precision);
    row(std::to_string(i), "mean", r.mean_dsc, r.mean_iou, r.mean_precision);
  }
  for (std::size_t c = 0; c < agg.per_class.size(); ++c)
    if (agg.per_class[c].counted)
      row("all", std::to_string(c), agg.per_class[c].dsc, agg.per_class[c].iou,
          agg.per_class[c].precision);
  row("all", "mean", agg.mean_dsc, agg.mean_iou, agg.mean_precision);
  detail::write_file_bytes(path, out);
}

inline void write_config_txt(const std::string& path, const KeyValues& kv) {
  save_keyvalues(kv, path);
}

// ---------------------------------------------------------------------------
// shared training engine
//
// Per-image gradients go into index-aligned slots and are reduced in index
// order, so results do not depend on the thread count. Unmasked modes use a
// constant weight of exactly 1.0 through the same arithmetic path, which
// makes the mu=1 curriculum collapse bit-exact against plain SD.
// ---------------------------------------------------------------------------

namespace engine {

struct StudentContext {
  // index-aligned with the train sample list
  std::vector<Tensor> teacher_soft;  // softmax(z_t / tau), for the KL term
  std::vector<Tensor> pu;            // calibrated prediction uncertainty
  std::vector<Tensor> bu;            // annotation boundary uncertainty
};

struct EpochStats {
  std::vector<double> batch_losses;
  double mean_loss = 0.0;
  int skipped_batches = 0;
};

// One image's contribution: masked SD sum plus parameter gradients for an
// upstream already scaled by 1/N_active.
inline double image_backward(const ConvNet& net, const Sample& sample, Mode mode, double tau,
                             const Tensor* teacher_soft, const Tensor* w_joint,
                             double inv_active, Gradients& grads) {
  const std::size_t k = net.weights.back().extent(0);
  ForwardCache cache;
  const Tensor logits = forward(net, sample.image, &cache);
  const std::size_t h = logits.extent(1), w = logits.extent(2);
  const std::size_t plane = h * w;
  const bool use_kl = mode != Mode::iid;

  const Tensor probs = softmax(logits);
  Tensor probs_soft;
  if (use_kl) probs_soft = tau == 1.0 ? probs : scaled_softmax(logits, Temperature{tau});

  Tensor dlogits(logits.shape());
  double sd_sum = 0.0;
  for (std::size_t p = 0; p < plane; ++p) {
    const double wp = w_joint ? (*w_joint)[p] : 1.0;
    const std::size_t true_c = sample.labels.labels()[p];
    double pixel_loss = -std::log(std::max(probs[true_c * plane + p], kProbFloor));
    if (use_kl) {
      double kl = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        const double tc = std::max((*teacher_soft)[c * plane + p], kProbFloor);
        const double sc = std::max(probs_soft[c * plane + p], kProbFloor);
        kl += tc * (std::log(tc) - std::log(sc));
      }
      pixel_loss += std::max(0.0, tau * tau * kl);
    }
    sd_sum += wp * pixel_loss;
    for (std::size_t c = 0; c < k; ++c) {
      double g = probs[c * plane + p] - (c == true_c ? 1.0 : 0.0);
      if (use_kl) g += tau * (probs_soft[c * plane + p] - (*teacher_soft)[c * plane + p]);
      dlogits[c * plane + p] = wp * g * inv_active;
    }
  }
  accumulate_backward(net, cache, dlogits, grads);
  return sd_sum;
}

inline EpochStats run_epoch(ConvNet& net, AdamState& adam,
                            const std::vector<const Sample*>& train,
                            const std::vector<std::size_t>& order, int batch_size, Mode mode,
                            double tau, const StudentContext* ctx,
                            const std::vector<CurriculumMask>* masks, int threads) {
  EpochStats stats;
  const std::size_t n = order.size();
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(n, start + static_cast<std::size_t>(batch_size));
    const std::size_t b_n = end - start;

    // admitted-pixel count is known up front because masks are static per epoch
    std::vector<Tensor> w_joint(b_n);
    std::size_t n_active = 0;
    for (std::size_t b = 0; b < b_n; ++b) {
      const std::size_t j = order[start + b];
      const std::size_t plane = train[j]->labels.size();
      if (masks) {
        const auto& m = (*masks)[j];
        w_joint[b] = Tensor(m.w_pu.shape());
        for (std::size_t i = 0; i < plane; ++i) w_joint[b][i] = m.w_pu[i] * m.w_bu[i];
        n_active += active_count(m);
      } else {
        n_active += plane;
      }
    }
    if (n_active == 0) {
      ++stats.skipped_batches;
      stats.batch_losses.push_back(0.0);
      continue;
    }
    const double inv_active = 1.0 / static_cast<double>(n_active);

    std::vector<Gradients> slots(b_n);
    std::vector<double> sums(b_n, 0.0);
    parallel_for(b_n, threads, [&](std::size_t b) {
      const std::size_t j = order[start + b];
      slots[b] = make_zero_grads(net);
      sums[b] = image_backward(net, *train[j], mode, tau,
                               ctx ? &ctx->teacher_soft[j] : nullptr,
                               masks ? &w_joint[b] : nullptr, inv_active, slots[b]);
    });

    Gradients total = make_zero_grads(net);
    double loss = 0.0;
    for (std::size_t b = 0; b < b_n; ++b) {
      add_grads(total, slots[b]);
      loss += sums[b];
    }
    adam_step(adam, net, total);
    stats.batch_losses.push_back(loss * inv_active);
  }
  for (double l : stats.batch_losses) stats.mean_loss += l;
  if (!stats.batch_losses.empty())
    stats.mean_loss /= static_cast<double>(stats.batch_losses.size());
  return stats;
}

}  // namespace engine

// ---------------------------------------------------------------------------
// teacher training + calibration
// ---------------------------------------------------------------------------

struct TeacherResult {
  CalibrationReport calib;
  EvalResult val;       // empty unless val_dir given
  bool has_val = false;
  std::string ckpt_dir;
};

inline void write_calibration_csv(const std::string& path, const CalibrationReport& r) {
  std::string out = "T,nll_before,nll_after,ece_before,ece_after\n";
  out += format_double(r.t_fitted) + "," + format_double(r.nll_before) + "," +
         format_double(r.nll_after) + "," + format_double(r.ece_before) + "," +
         format_double(r.ece_after) + "\n";
  detail::write_file_bytes(path, out);
}

inline KeyValues base_config_kv(const RunConfig& cfg, const std::string& command) {
  KeyValues kv;
  kv["command"] = command;
  kv["data"] = cfg.data_dir;
  kv["val"] = cfg.val_dir;
  kv["teacher"] = cfg.teacher_dir;
  kv["out"] = cfg.out_dir;
  kv["mode"] = mode_name(cfg.mode);
  kv["epochs"] = std::to_string(cfg.epochs);
  kv["batch"] = std::to_string(cfg.batch);
  kv["lr"] = format_double(cfg.lr);
  kv["tau"] = format_double(cfg.tau);
  kv["seed"] = std::to_string(cfg.seed);
  kv["width"] = std::to_string(cfg.width);
  kv["threads"] = std::to_string(cfg.threads);
  kv["beta"] = format_double(cfg.pacing.beta);
  kv["gamma"] = std::to_string(cfg.pacing.gamma);
  kv["e_interval"] = std::to_string(cfg.pacing.e_interval);
  kv["mu_init_override"] = format_double(cfg.mu_init_override);
  kv["calib_fraction"] = format_double(cfg.calib_fraction);
  return kv;
}

inline TeacherResult train_teacher(const RunConfig& cfg) {
  if (cfg.epochs < 0 || cfg.batch < 1) throw std::invalid_argument("bad epochs/batch");
  Dataset ds = load_dataset(cfg.data_dir);
  const int classes = ds.classes();
  std::vector<std::size_t> train_idx, calib_idx;
  split_indices(ds.count(), cfg.calib_fraction, cfg.seed, train_idx, calib_idx);
  std::vector<const Sample*> train;
  for (std::size_t i : train_idx) train.push_back(&ds.samples[i]);

  ConvNet net = make_segnet(1, classes, cfg.width);
  init_params(net, derive_seed(cfg.seed, streams::kTeacherInit));
  AdamState adam = make_adam(net, cfg.lr);

  std::filesystem::create_directories(cfg.out_dir);
  std::string train_log = "epoch,loss,skipped_batches\n";
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, streams::kShuffleBase + static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order.begin(), order.end());
    const auto stats = engine::run_epoch(net, adam, train, order, cfg.batch, Mode::iid, cfg.tau,
                                         nullptr, nullptr, cfg.threads);
    train_log += std::to_string(epoch) + "," + format_double(stats.mean_loss) + "," +
                 std::to_string(stats.skipped_batches) + "\n";
  }
  detail::write_file_bytes(cfg.out_dir + "/train_log.csv", train_log);

  // fit the temperature on the held-out calibration split
  std::vector<Tensor> calib_logits;
  std::vector<LabelMap> calib_labels;
  calib_logits.resize(calib_idx.size());
  calib_labels.resize(calib_idx.size());
  parallel_for(calib_idx.size(), cfg.threads, [&](std::size_t i) {
    calib_logits[i] = forward(net, ds.samples[calib_idx[i]].image);
    calib_labels[i] = ds.samples[calib_idx[i]].labels;
  });
  TeacherResult result;
  result.calib = fit_temperature(calib_logits, calib_labels);
  write_calibration_csv(cfg.out_dir + "/calibration.csv", result.calib);

  KeyValues extra;
  extra["temperature"] = format_double(result.calib.t_fitted);
  extra["seed"] = std::to_string(cfg.seed);
  extra["epoch"] = std::to_string(cfg.epochs);
  extra["classes"] = std::to_string(classes);
  extra["width"] = std::to_string(cfg.width);
  extra["calib_fraction"] = format_double(cfg.calib_fraction);
  extra["split_seed"] = std::to_string(cfg.seed);
  extra["data_count"] = std::to_string(ds.count());
  result.ckpt_dir = cfg.out_dir + "/teacher.ckpt";
  save_checkpoint(net, result.ckpt_dir, extra);

  if (!cfg.val_dir.empty()) {
    Dataset val = load_dataset(cfg.val_dir);
    std::vector<EvalResult> per_image;
    result.val = evaluate_model(net, val.samples, &per_image, cfg.threads);
    result.has_val = true;
    write_eval_csv(cfg.out_dir + "/eval.csv", per_image, result.val);
  }
  KeyValues cfg_kv = base_config_kv(cfg, "train-teacher");
  cfg_kv["mode"] = "iid";  // teachers always train CE-only
  write_config_txt(cfg.out_dir + "/config.txt", cfg_kv);
  return result;
}

// ---------------------------------------------------------------------------
// student distillation (iid / sd / pcd / pcd_no_bu)
// ---------------------------------------------------------------------------

struct CurriculumLogRow {
  int epoch;
  double mu;
  double active_fraction;
};

struct DistillResult {
  std::vector<double> batch_losses;  // every optimizer-step loss, in order
  std::vector<CurriculumLogRow> curriculum;
  EvalResult val;
  bool has_val = false;
  int skipped_batches = 0;
  std::string ckpt_dir;
};

inline DistillResult distill_student(const RunConfig& cfg) {
  if (cfg.teacher_dir.empty()) throw std::invalid_argument("distillation requires a teacher");
  if (cfg.epochs < 0 || cfg.batch < 1) throw std::invalid_argument("bad epochs/batch");
  Dataset ds = load_dataset(cfg.data_dir);
  const int classes = ds.classes();

  KeyValues teacher_kv;
  ConvNet teacher = load_checkpoint(cfg.teacher_dir, &teacher_kv);
  const double temperature = std::stod(require_key(teacher_kv, "temperature"));
  const double calib_fraction = std::stod(require_key(teacher_kv, "calib_fraction"));
  const auto split_seed =
      static_cast<std::uint64_t>(std::stoull(require_key(teacher_kv, "split_seed")));
  if (std::stoul(require_key(teacher_kv, "data_count")) != ds.count())
    throw std::runtime_error("teacher was trained on a different dataset size");

  // students train on the teacher's training split; the held-out 20% stays
  // reserved for calibration
  std::vector<std::size_t> train_idx, calib_idx;
  split_indices(ds.count(), calib_fraction, split_seed, train_idx, calib_idx);
  std::vector<const Sample*> train;
  for (std::size_t i : train_idx) train.push_back(&ds.samples[i]);
  const std::size_t n_train = train.size();

  const bool is_pcd = cfg.mode == Mode::pcd || cfg.mode == Mode::pcd_no_bu;
  const bool use_teacher = cfg.mode != Mode::iid;

  // static curriculum inputs: the teacher is frozen, so its uncertainty is
  // computed once
  engine::StudentContext ctx;
  if (use_teacher) {
    ctx.teacher_soft.resize(n_train);
    ctx.pu.resize(n_train);
    parallel_for(n_train, cfg.threads, [&](std::size_t j) {
      const Tensor logits = forward(teacher, train[j]->image);
      ctx.teacher_soft[j] = cfg.tau == 1.0 ? softmax(logits)
                                           : scaled_softmax(logits, Temperature{cfg.tau});
      ctx.pu[j] = prediction_uncertainty(scaled_softmax(logits, Temperature{temperature}));
    });
  }
  if (is_pcd) {
    const SvlsKernel kernel = build_kernel(1.0);
    ctx.bu.resize(n_train);
    parallel_for(n_train, cfg.threads, [&](std::size_t j) {
      if (cfg.mode == Mode::pcd) {
        ctx.bu[j] = boundary_uncertainty(train[j]->labels, kernel);
      } else {
        // P-CD w/o BU: the boundary mask never excludes anything
        ctx.bu[j] = Tensor({train[j]->labels.height(), train[j]->labels.width()});
      }
    });
  }

  CurriculumState state;
  if (is_pcd) {
    double mu_init = cfg.mu_init_override;
    if (mu_init < 0.0) {
      std::vector<double> pooled;
      pooled.reserve(n_train * train.front()->labels.size());
      for (std::size_t j = 0; j < n_train; ++j)
        pooled.insert(pooled.end(), ctx.pu[j].values().begin(), ctx.pu[j].values().end());
      mu_init = mu_init_from_beta(std::move(pooled), cfg.pacing.beta);
    }
    state = init_curriculum(cfg.pacing, mu_init);
  }

  ConvNet net = make_segnet(1, classes, cfg.width);
  init_params(net, derive_seed(cfg.seed, streams::kStudentInit));
  AdamState adam = make_adam(net, cfg.lr);

  std::filesystem::create_directories(cfg.out_dir);
  DistillResult result;
  std::string train_log = "epoch,loss,skipped_batches\n";
  std::vector<CurriculumMask> masks(is_pcd ? n_train : 0);
  std::vector<std::size_t> order(n_train);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (is_pcd) {
      state = pace(state, cfg.pacing, epoch);
      std::vector<std::size_t> actives(n_train);
      parallel_for(n_train, cfg.threads, [&](std::size_t j) {
        masks[j] = build_masks(ctx.pu[j], ctx.bu[j], state.mu);
        actives[j] = active_count(masks[j]);
      });
      std::size_t active = 0, total = 0;
      for (std::size_t j = 0; j < n_train; ++j) {
        active += actives[j];
        total += masks[j].w_pu.numel();
      }
      result.curriculum.push_back(
          {epoch, state.mu, static_cast<double>(active) / static_cast<double>(total)});
    }
    Rng rng(derive_seed(cfg.seed, streams::kShuffleBase + static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order.begin(), order.end());
    const auto stats = engine::run_epoch(net, adam, train, order, cfg.batch, cfg.mode, cfg.tau,
                                         use_teacher ? &ctx : nullptr,
                                         is_pcd ? &masks : nullptr, cfg.threads);
    result.batch_losses.insert(result.batch_losses.end(), stats.batch_losses.begin(),
                               stats.batch_losses.end());
    result.skipped_batches += stats.skipped_batches;
    train_log += std::to_string(epoch) + "," + format_double(stats.mean_loss) + "," +
                 std::to_string(stats.skipped_batches) + "\n";
  }
  detail::write_file_bytes(cfg.out_dir + "/train_log.csv", train_log);

  if (is_pcd) {
    std::string cur = "epoch,mu,active_pixel_fraction\n";
    for (const auto& row : result.curriculum)
      cur += std::to_string(row.epoch) + "," + format_double(row.mu) + "," +
             format_double(row.active_fraction) + "\n";
    detail::write_file_bytes(cfg.out_dir + "/curriculum.csv", cur);
  }

  KeyValues extra;
  extra["seed"] = std::to_string(cfg.seed);
  extra["epoch"] = std::to_string(cfg.epochs);
  extra["classes"] = std::to_string(classes);
  extra["width"] = std::to_string(cfg.width);
  extra["mode"] = mode_name(cfg.mode);
  result.ckpt_dir = cfg.out_dir + "/student.ckpt";
  save_checkpoint(net, result.ckpt_dir, extra);

  if (!cfg.val_dir.empty()) {
    Dataset val = load_dataset(cfg.val_dir);
    std::vector<EvalResult> per_image;
    result.val = evaluate_model(net, val.samples, &per_image, cfg.threads);
    result.has_val = true;
    write_eval_csv(cfg.out_dir + "/eval.csv", per_image, result.val);
  }
  write_config_txt(cfg.out_dir + "/config.txt", base_config_kv(cfg, "distill"));
  return result;
}

// ---------------------------------------------------------------------------
// robustness sweep
// ---------------------------------------------------------------------------

struct SweepOptions {
  std::vector<std::string> families;  // empty -> all 15
  std::vector<int> severities = {1, 2, 3, 4, 5};
  std::uint64_t seed = 0;
  int jobs = 1;
  int threads = 2;
};

struct SweepCell {
  std::string model;
  std::string family;  // "clean" for the uncorrupted baseline
  int severity = 0;
  double mean_dsc = 0.0, mean_iou = 0.0, mean_precision = 0.0;
};

inline std::string path_basename(const std::string& path) {
  auto p = std::filesystem::path(path);
  if (p.filename().empty()) p = p.parent_path();
  return p.filename().string();
}

inline void emit_robustness_plots(const std::vector<SweepCell>& cells,
                                  const std::string& plots_dir) {
  std::filesystem::create_directories(plots_dir);
  std::vector<std::string> models, families;
  for (const auto& c : cells) {
    if (c.family == "clean") continue;
    if (std::find(models.begin(), models.end(), c.model) == models.end()) models.push_back(c.model);
    if (std::find(families.begin(), families.end(), c.family) == families.end())
      families.push_back(c.family);
  }
  for (const auto& family : families) {
    std::vector<PlotSeries> series;
    for (const auto& model : models) {
      PlotSeries s;
      s.label = model;
      for (const auto& c : cells)
        if (c.model == model && c.family == family) {
          s.x.push_back(c.severity);
          s.y.push_back(c.mean_dsc);
        }
      if (!s.x.empty()) series.push_back(std::move(s));
    }
    detail::write_file_bytes(plots_dir + "/robustness_" + family + ".svg",
                             render_line_plot(family, "severity", "mean DSC", series));
  }
}

inline std::vector<SweepCell> robustness_sweep(const std::vector<std::string>& ckpt_dirs,
                                               const std::string& val_dir,
                                               const std::string& out_dir,
                                               const SweepOptions& opts,
                                               const SeverityLadder& ladder) {
  Dataset val = load_dataset(val_dir);
  std::vector<std::string> families =
      opts.families.empty()
          ? std::vector<std::string>(corruption_names().begin(), corruption_names().end())
          : opts.families;

  struct Job {
    std::size_t model_i;
    std::string family;  // "clean" for severity 0
    int severity;
  };
  std::vector<Job> jobs;
  for (std::size_t m = 0; m < ckpt_dirs.size(); ++m) {
    jobs.push_back({m, "clean", 0});
    for (const auto& f : families)
      for (int s : opts.severities) jobs.push_back({m, f, s});
  }

  std::vector<ConvNet> nets;
  nets.reserve(ckpt_dirs.size());
  for (const auto& dir : ckpt_dirs) nets.push_back(load_checkpoint(dir));

  std::vector<SweepCell> cells(jobs.size());
  parallel_for(jobs.size(), opts.jobs, [&](std::size_t ji) {
    const Job& job = jobs[ji];
    const ConvNet& net = nets[job.model_i];
    std::vector<EvalResult> results(val.count());
    const int inner_threads = opts.jobs > 1 ? 1 : opts.threads;
    parallel_for(val.count(), inner_threads, [&](std::size_t i) {
      Tensor img = val.samples[i].image;
      if (job.severity > 0) {
        CorruptionSpec spec;
        spec.family = corruption_from_name(job.family);
        spec.severity = job.severity;
        spec.seed = derive_seed(opts.seed, i);
        img = corrupt(img, spec, ladder);
      }
      results[i] = evaluate(argmax_labels(forward(net, img)), val.samples[i].labels);
    });
    const EvalResult agg = aggregate(results);
    cells[ji] = {path_basename(ckpt_dirs[job.model_i]), job.family, job.severity, agg.mean_dsc,
                 agg.mean_iou, agg.mean_precision};
  });

  std::filesystem::create_directories(out_dir);
  std::string csv = "model,family,severity,mean_dsc,mean_iou,mean_precision\n";
  for (const auto& c : cells)
    csv += c.model + "," + c.family + "," + std::to_string(c.severity) + "," +
           format_double(c.mean_dsc) + "," + format_double(c.mean_iou) + "," +
           format_double(c.mean_precision) + "\n";
  detail::write_file_bytes(out_dir + "/robustness.csv", csv);
  emit_robustness_plots(cells, out_dir + "/plots");
  return cells;
}

// ---------------------------------------------------------------------------
// beta x gamma ablation grid
// ---------------------------------------------------------------------------

struct GridCell {
  double beta;
  int gamma;
  double mean_dsc;
};

inline std::vector<GridCell> beta_gamma_grid(const RunConfig& base,
                                             const std::vector<double>& betas,
                                             const std::vector<int>& gammas, int jobs = 1) {
  if (betas.empty() || gammas.empty()) throw std::invalid_argument("empty beta/gamma grid");
  if (base.val_dir.empty()) throw std::invalid_argument("beta/gamma grid needs a validation set");
  std::vector<GridCell> cells(betas.size() * gammas.size());
  parallel_for(cells.size(), jobs, [&](std::size_t i) {
    const double beta = betas[i / gammas.size()];
    const int gamma = gammas[i % gammas.size()];
    RunConfig cfg = base;
    cfg.mode = Mode::pcd;
    cfg.pacing.beta = beta;
    cfg.pacing.gamma = gamma;
    char cell_name[64];
    std::snprintf(cell_name, sizeof(cell_name), "cell_b%g_g%d", beta, gamma);
    cfg.out_dir = base.out_dir + "/" + cell_name;
    if (jobs > 1) cfg.threads = 1;
    const DistillResult r = distill_student(cfg);
    cells[i] = {beta, gamma, r.val.mean_dsc};
  });
  std::filesystem::create_directories(base.out_dir);
  std::string csv = "beta,gamma,mean_dsc\n";
  for (const auto& c : cells)
    csv += format_double(c.beta) + "," + std::to_string(c.gamma) + "," +
           format_double(c.mean_dsc) + "\n";
  detail::write_file_bytes(base.out_dir + "/beta_gamma.csv", csv);
  return cells;
}

// ---------------------------------------------------------------------------
// run comparison report
// ---------------------------------------------------------------------------

inline void write_report(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
  struct Row {
    std::string name, mode;
    double dsc, iou, precision;
  };
  std::vector<Row> rows;
  for (const auto& dir : run_dirs) {
    const KeyValues cfg = load_keyvalues(dir + "/config.txt");
    std::ifstream in(dir + "/eval.csv");
    if (!in) throw std::runtime_error("missing eval.csv in " + dir);
    std::string line;
    Row row{path_basename(dir), cfg.count("mode") ? cfg.at("mode") : "?", 0, 0, 0};
    bool found = false;
    while (std::getline(in, line)) {
      const auto f = split_csv_line(line);
      if (f.size() == 5 && f[0] == "all" && f[1] == "mean") {
        row.dsc = std::stod(f[2]);
        row.iou = std::stod(f[3]);
        row.precision = std::stod(f[4]);
        found = true;
      }
    }
    if (!found) throw std::runtime_error("no aggregate row in " + dir + "/eval.csv");
    rows.push_back(row);
  }

  std::filesystem::create_directories(out_dir);
  std::string csv = "run,mode,dsc,iou,precision\n";
  for (const auto& r : rows)
    csv += r.name + "," + r.mode + "," + format_double(r.dsc) + "," + format_double(r.iou) + "," +
           format_double(r.precision) + "\n";
  detail::write_file_bytes(out_dir + "/report.csv", csv);

  // aligned text table
  std::size_t name_w = 3, mode_w = 4;
  for (const auto& r : rows) {
    name_w = std::max(name_w, r.name.size());
    mode_w = std::max(mode_w, r.mode.size());
  }
  auto pad = [](std::string s, std::size_t w) {
    s.resize(std::max(w, s.size()), ' ');
    return s;
  };
  std::string txt = pad("run", name_w) + "  " + pad("mode", mode_w) + "  dsc       iou       precision\n";
  for (const auto& r : rows) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%-8.4f  %-8.4f  %-8.4f", r.dsc, r.iou, r.precision);
    txt += pad(r.name, name_w) + "  " + pad(r.mode, mode_w) + "  " + buf + "\n";
  }
  detail::write_file_bytes(out_dir + "/report.txt", txt);

  // re-plot any robustness matrices found next to the runs
  for (const auto& dir : run_dirs) {
    const std::string csv_path = dir + "/robustness.csv";
    if (!std::filesystem::exists(csv_path)) continue;
    std::ifstream in(csv_path);
    std::string line;
    std::getline(in, line);  // header
    std::vector<SweepCell> cells;
    while (std::getline(in, line)) {
      const auto f = split_csv_line(line);
      if (f.size() != 6) continue;
      cells.push_back({f[0], f[1], std::stoi(f[2]), std::stod(f[3]), std::stod(f[4]),
                       std::stod(f[5])});
    }
    emit_robustness_plots(cells, out_dir + "/plots");
  }
}

}  // namespace pcd
