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

// Command-line front end for paced-curriculum distillation experiments.
// Every run is non-interactive, derives all randomness from --seed, and
// echoes its fully-resolved configuration.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pcd/pipeline.hpp"

namespace {

void echo_kv(const pcd::KeyValues& kv) {
  for (const auto& [k, v] : kv) std::printf("%s=%s\n", k.c_str(), v.c_str());
}

std::string ladder_source() {
  const char* env = std::getenv("PCD_LADDER_FILE");
  return env && *env ? env : "builtin";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"paced-curriculum distillation for semantic segmentation"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value config file supplying flag defaults");
  app.option_defaults()->always_capture_default();

  // --- gen-data ---
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic segmentation dataset");
  std::string gen_out;
  std::size_t gen_n = 200, gen_offset = 0;
  std::uint64_t gen_seed = 0;
  pcd::SceneSpec scene;
  gen->add_option("--out", gen_out, "output dataset folder")->required();
  gen->add_option("--n", gen_n, "number of images");
  gen->add_option("--seed", gen_seed, "base seed");
  gen->add_option("--offset", gen_offset, "image-index offset into the seed stream");
  gen->add_option("--height", scene.height, "image height");
  gen->add_option("--width", scene.width, "image width");
  gen->add_option("--classes", scene.classes, "class count (background + shapes)");
  gen->add_option("--sigma-img", scene.noise_sigma, "pixel noise standard deviation");
  gen->add_option("--min-shapes", scene.min_shapes, "minimum shapes per image");
  gen->add_option("--max-shapes", scene.max_shapes, "maximum shapes per image");

  // --- train-teacher ---
  auto* teach = app.add_subcommand("train-teacher", "train and calibrate a teacher model");
  pcd::RunConfig tcfg;
  teach->add_option("--data", tcfg.data_dir, "training dataset folder")->required();
  teach->add_option("--val", tcfg.val_dir, "validation dataset folder");
  teach->add_option("--out", tcfg.out_dir, "run output folder")->required();
  teach->add_option("--epochs", tcfg.epochs, "training epochs");
  teach->add_option("--batch", tcfg.batch, "batch size");
  teach->add_option("--lr", tcfg.lr, "Adam learning rate");
  teach->add_option("--seed", tcfg.seed, "run seed");
  teach->add_option("--net-width", tcfg.width, "hidden channel count");
  teach->add_option("--threads", tcfg.threads, "worker threads per batch");
  teach->add_option("--calib-fraction", tcfg.calib_fraction,
                    "held-out fraction for temperature fitting");

  // --- distill ---
  auto* dist = app.add_subcommand("distill", "train a student (iid / sd / pcd / pcd_no_bu)");
  pcd::RunConfig dcfg;
  std::string dist_mode = "sd";
  dist->add_option("--data", dcfg.data_dir, "training dataset folder")->required();
  dist->add_option("--val", dcfg.val_dir, "validation dataset folder");
  dist->add_option("--teacher", dcfg.teacher_dir, "calibrated teacher checkpoint folder")
      ->required();
  dist->add_option("--out", dcfg.out_dir, "run output folder")->required();
  dist->add_option("--mode", dist_mode, "iid | sd | pcd | pcd_no_bu")
      ->check(CLI::IsMember({"iid", "sd", "pcd", "pcd_no_bu"}));
  dist->add_option("--epochs", dcfg.epochs, "training epochs");
  dist->add_option("--batch", dcfg.batch, "batch size");
  dist->add_option("--lr", dcfg.lr, "Adam learning rate");
  dist->add_option("--tau", dcfg.tau, "distillation temperature");
  dist->add_option("--seed", dcfg.seed, "run seed");
  dist->add_option("--beta", dcfg.pacing.beta, "initial admitted-pixel ratio");
  dist->add_option("--gamma", dcfg.pacing.gamma, "curriculum end epoch");
  dist->add_option("--e-interval", dcfg.pacing.e_interval, "epochs between threshold updates");
  dist->add_option("--mu-init", dcfg.mu_init_override,
                   "force the initial threshold (1.0 collapses the curriculum)");
  dist->add_option("--net-width", dcfg.width, "hidden channel count");
  dist->add_option("--threads", dcfg.threads, "worker threads per batch");

  // --- calibrate ---
  auto* cal = app.add_subcommand("calibrate", "refit the temperature of a checkpoint");
  std::string cal_ckpt, cal_data, cal_out;
  bool cal_update = false;
  int cal_threads = 2;
  cal->add_option("--ckpt", cal_ckpt, "checkpoint folder")->required();
  cal->add_option("--data", cal_data, "held-out dataset folder")->required();
  cal->add_option("--out", cal_out, "calibration report CSV path")->required();
  cal->add_flag("--update", cal_update, "write the fitted temperature back to the checkpoint");
  cal->add_option("--threads", cal_threads, "worker threads");

  // --- corrupt ---
  auto* cor = app.add_subcommand("corrupt", "corrupt a dataset folder at one severity");
  std::string cor_data, cor_out, cor_family;
  int cor_severity = 1;
  std::uint64_t cor_seed = 0;
  cor->add_option("--data", cor_data, "input dataset folder")->required();
  cor->add_option("--out", cor_out, "output dataset folder")->required();
  const std::vector<std::string> family_names(pcd::corruption_names().begin(),
                                              pcd::corruption_names().end());
  cor->add_option("--family", cor_family, "corruption family")
      ->required()
      ->check(CLI::IsMember(family_names));
  cor->add_option("--severity", cor_severity, "severity level 1..5")->required();
  cor->add_option("--seed", cor_seed, "corruption seed");

  // --- evaluate ---
  auto* ev = app.add_subcommand("evaluate", "evaluate a checkpoint on a dataset");
  std::string ev_ckpt, ev_data, ev_out;
  int ev_threads = 2;
  ev->add_option("--ckpt", ev_ckpt, "checkpoint folder")->required();
  ev->add_option("--data", ev_data, "dataset folder")->required();
  ev->add_option("--out", ev_out, "eval CSV path")->required();
  ev->add_option("--threads", ev_threads, "worker threads");

  // --- sweep-robustness ---
  auto* rob = app.add_subcommand("sweep-robustness",
                                 "evaluate checkpoints over the corruption matrix");
  std::vector<std::string> rob_ckpts, rob_families;
  std::string rob_data, rob_out;
  pcd::SweepOptions rob_opts;
  rob->add_option("--ckpt", rob_ckpts, "checkpoint folder (repeatable)")->required();
  rob->add_option("--data", rob_data, "clean evaluation dataset folder")->required();
  rob->add_option("--out", rob_out, "sweep output folder")->required();
  rob->add_option("--families", rob_families, "corruption families (default: all 15)")
      ->delimiter(',')
      ->check(CLI::IsMember(family_names));
  rob->add_option("--severities", rob_opts.severities, "severity levels")->delimiter(',');
  rob->add_option("--seed", rob_opts.seed, "corruption seed");
  rob->add_option("--jobs", rob_opts.jobs, "parallel sweep cells");
  rob->add_option("--threads", rob_opts.threads, "worker threads per cell");

  // --- sweep-beta-gamma ---
  auto* grid = app.add_subcommand("sweep-beta-gamma", "P-CD ablation grid over beta x gamma");
  pcd::RunConfig gcfg;
  std::vector<double> grid_betas;
  std::vector<int> grid_gammas;
  int grid_jobs = 1;
  grid->add_option("--data", gcfg.data_dir, "training dataset folder")->required();
  grid->add_option("--val", gcfg.val_dir, "validation dataset folder")->required();
  grid->add_option("--teacher", gcfg.teacher_dir, "calibrated teacher checkpoint folder")
      ->required();
  grid->add_option("--out", gcfg.out_dir, "grid output folder")->required();
  grid->add_option("--betas", grid_betas, "beta values")->delimiter(',')->required();
  grid->add_option("--gammas", grid_gammas, "gamma values")->delimiter(',')->required();
  grid->add_option("--epochs", gcfg.epochs, "training epochs per cell");
  grid->add_option("--batch", gcfg.batch, "batch size");
  grid->add_option("--lr", gcfg.lr, "Adam learning rate");
  grid->add_option("--tau", gcfg.tau, "distillation temperature");
  grid->add_option("--seed", gcfg.seed, "shared run seed");
  grid->add_option("--e-interval", gcfg.pacing.e_interval, "epochs between threshold updates");
  grid->add_option("--net-width", gcfg.width, "hidden channel count");
  grid->add_option("--jobs", grid_jobs, "parallel grid cells");
  grid->add_option("--threads", gcfg.threads, "worker threads per cell");

  // --- report ---
  auto* rep = app.add_subcommand("report", "comparison table + plots from finished runs");
  std::vector<std::string> rep_runs;
  std::string rep_out;
  rep->add_option("--runs", rep_runs, "run folders (repeatable)")->required()->delimiter(',');
  rep->add_option("--out", rep_out, "report output folder")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::RequiredError& e) {
    std::cerr << "error: missing required flag: " << e.what() << "\n";
    return 2;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    const pcd::SeverityLadder ladder = pcd::SeverityLadder::from_env_or_builtin();

    if (gen->parsed()) {
      pcd::KeyValues kv{{"command", "gen-data"}, {"out", gen_out},
                        {"n", std::to_string(gen_n)}, {"seed", std::to_string(gen_seed)},
                        {"offset", std::to_string(gen_offset)},
                        {"height", std::to_string(scene.height)},
                        {"width", std::to_string(scene.width)},
                        {"classes", std::to_string(scene.classes)},
                        {"sigma_img", pcd::format_double(scene.noise_sigma)},
                        {"min_shapes", std::to_string(scene.min_shapes)},
                        {"max_shapes", std::to_string(scene.max_shapes)}};
      echo_kv(kv);
      scene.seed = gen_seed;
      pcd::save_dataset(pcd::generate(scene, gen_n, gen_offset), gen_out, scene, gen_offset);
    } else if (teach->parsed()) {
      echo_kv(pcd::base_config_kv(tcfg, "train-teacher"));
      const auto r = pcd::train_teacher(tcfg);
      std::printf("temperature=%s\n", pcd::format_double(r.calib.t_fitted).c_str());
      if (r.has_val) std::printf("val_mean_dsc=%s\n", pcd::format_double(r.val.mean_dsc).c_str());
    } else if (dist->parsed()) {
      dcfg.mode = pcd::mode_from_name(dist_mode);
      echo_kv(pcd::base_config_kv(dcfg, "distill"));
      const auto r = pcd::distill_student(dcfg);
      if (r.has_val) std::printf("val_mean_dsc=%s\n", pcd::format_double(r.val.mean_dsc).c_str());
    } else if (cal->parsed()) {
      pcd::KeyValues kv{{"command", "calibrate"}, {"ckpt", cal_ckpt}, {"data", cal_data},
                        {"out", cal_out}, {"update", cal_update ? "1" : "0"}};
      echo_kv(kv);
      pcd::KeyValues manifest;
      const pcd::ConvNet net = pcd::load_checkpoint(cal_ckpt, &manifest);
      pcd::Dataset ds = pcd::load_dataset(cal_data);
      std::vector<pcd::Tensor> logits(ds.count());
      std::vector<pcd::LabelMap> labels(ds.count());
      pcd::parallel_for(ds.count(), cal_threads, [&](std::size_t i) {
        logits[i] = pcd::forward(net, ds.samples[i].image);
        labels[i] = ds.samples[i].labels;
      });
      const auto report = pcd::fit_temperature(logits, labels);
      pcd::write_calibration_csv(cal_out, report);
      if (cal_update) {
        manifest["temperature"] = pcd::format_double(report.t_fitted);
        pcd::save_checkpoint(net, cal_ckpt, manifest);
      }
      std::printf("temperature=%s\n", pcd::format_double(report.t_fitted).c_str());
    } else if (cor->parsed()) {
      pcd::KeyValues kv{{"command", "corrupt"}, {"data", cor_data}, {"out", cor_out},
                        {"family", cor_family}, {"severity", std::to_string(cor_severity)},
                        {"seed", std::to_string(cor_seed)}, {"ladder", ladder_source()}};
      echo_kv(kv);
      pcd::CorruptionSpec spec;
      spec.family = pcd::corruption_from_name(cor_family);
      spec.severity = cor_severity;
      spec.seed = cor_seed;
      pcd::corrupt_dataset(cor_data, cor_out, spec, ladder);
    } else if (ev->parsed()) {
      pcd::KeyValues kv{{"command", "evaluate"}, {"ckpt", ev_ckpt}, {"data", ev_data},
                        {"out", ev_out}};
      echo_kv(kv);
      const pcd::ConvNet net = pcd::load_checkpoint(ev_ckpt);
      pcd::Dataset ds = pcd::load_dataset(ev_data);
      std::vector<pcd::EvalResult> per_image;
      const auto agg = pcd::evaluate_model(net, ds.samples, &per_image, ev_threads);
      pcd::write_eval_csv(ev_out, per_image, agg);
      std::printf("mean_dsc=%s\n", pcd::format_double(agg.mean_dsc).c_str());
    } else if (rob->parsed()) {
      rob_opts.families = rob_families;
      pcd::KeyValues kv{{"command", "sweep-robustness"}, {"data", rob_data}, {"out", rob_out},
                        {"seed", std::to_string(rob_opts.seed)},
                        {"jobs", std::to_string(rob_opts.jobs)}, {"ladder", ladder_source()}};
      echo_kv(kv);
      pcd::robustness_sweep(rob_ckpts, rob_data, rob_out, rob_opts, ladder);
    } else if (grid->parsed()) {
      echo_kv(pcd::base_config_kv(gcfg, "sweep-beta-gamma"));
      pcd::beta_gamma_grid(gcfg, grid_betas, grid_gammas, grid_jobs);
    } else if (rep->parsed()) {
      pcd::KeyValues kv{{"command", "report"}, {"out", rep_out}};
      echo_kv(kv);
      pcd::write_report(rep_runs, rep_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
