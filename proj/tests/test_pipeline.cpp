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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "pcd/pipeline.hpp"

using namespace pcd;

namespace {

namespace fs = std::filesystem;

struct Fixture {
  std::string root, train_dir, val_dir, teacher_dir;

  Fixture() {
    root = (fs::temp_directory_path() / "pcd_test_pipeline").string();
    fs::remove_all(root);
    train_dir = root + "/train";
    val_dir = root + "/val";
    SceneSpec spec;
    spec.height = 16;
    spec.width = 16;
    spec.seed = 7;
    save_dataset(generate(spec, 20), train_dir, spec);
    save_dataset(generate(spec, 6, 20), val_dir, spec, 20);

    RunConfig cfg;
    cfg.data_dir = train_dir;
    cfg.val_dir = val_dir;
    cfg.out_dir = root + "/teacher_run";
    cfg.epochs = 3;
    cfg.batch = 4;
    cfg.width = 4;
    cfg.seed = 7;
    const TeacherResult r = train_teacher(cfg);
    teacher_dir = r.ckpt_dir;
  }

  RunConfig student_cfg(Mode mode, const std::string& name) const {
    RunConfig cfg;
    cfg.data_dir = train_dir;
    cfg.val_dir = val_dir;
    cfg.teacher_dir = teacher_dir;
    cfg.out_dir = root + "/" + name;
    cfg.mode = mode;
    cfg.epochs = 4;
    cfg.batch = 4;
    cfg.width = 4;
    cfg.seed = 21;
    cfg.pacing = PacingConfig{0.5, 2, 1};
    return cfg;
  }
};

const Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_CASE("teacher run persists checkpoint, calibration and eval artifacts") {
  const auto& f = fixture();
  REQUIRE(fs::exists(f.teacher_dir + "/manifest.txt"));
  REQUIRE(fs::exists(f.root + "/teacher_run/calibration.csv"));
  REQUIRE(fs::exists(f.root + "/teacher_run/eval.csv"));
  REQUIRE(fs::exists(f.root + "/teacher_run/config.txt"));
  const KeyValues kv = load_keyvalues(f.teacher_dir + "/manifest.txt");
  REQUIRE(std::stod(kv.at("temperature")) > 0.0);

  // fitting cannot worsen the objective on the fitting split
  const std::string csv = detail::read_file_bytes(f.root + "/teacher_run/calibration.csv");
  const auto lines = split_csv_line(csv.substr(csv.find('\n') + 1,
                                               csv.find('\n', csv.find('\n') + 1) -
                                                   csv.find('\n') - 1));
  REQUIRE(std::stod(lines[2]) <= std::stod(lines[1]) + 1e-9);
}

TEST_CASE("zero-epoch teacher equals its initialization") {
  const auto& f = fixture();
  RunConfig cfg;
  cfg.data_dir = f.train_dir;
  cfg.out_dir = f.root + "/teacher_zero";
  cfg.epochs = 0;
  cfg.width = 4;
  cfg.seed = 7;
  train_teacher(cfg);
  const ConvNet trained = load_checkpoint(cfg.out_dir + "/teacher.ckpt");
  ConvNet fresh = make_segnet(1, 3, 4);
  init_params(fresh, derive_seed(7, streams::kTeacherInit));
  for (std::size_t l = 0; l < fresh.layers.size(); ++l)
    for (std::size_t i = 0; i < fresh.weights[l].numel(); ++i)
      REQUIRE(trained.weights[l][i] ==
              Catch::Approx(fresh.weights[l][i]).margin(1e-7));  // f32 file quantization
}

TEST_CASE("training is deterministic and thread-count invariant") {
  const auto& f = fixture();
  RunConfig a = f.student_cfg(Mode::sd, "det_a");
  RunConfig b = f.student_cfg(Mode::sd, "det_b");
  b.threads = 1;
  a.threads = 3;
  const DistillResult ra = distill_student(a);
  const DistillResult rb = distill_student(b);
  REQUIRE(ra.batch_losses.size() == rb.batch_losses.size());
  for (std::size_t i = 0; i < ra.batch_losses.size(); ++i)
    REQUIRE(ra.batch_losses[i] == rb.batch_losses[i]);
  // identical flags give byte-identical CSV artifacts
  REQUIRE(detail::read_file_bytes(a.out_dir + "/train_log.csv") ==
          detail::read_file_bytes(b.out_dir + "/train_log.csv"));
  REQUIRE(detail::read_file_bytes(a.out_dir + "/eval.csv") ==
          detail::read_file_bytes(b.out_dir + "/eval.csv"));
}

TEST_CASE("forcing mu to one reproduces the SD run batch-for-batch") {
  const auto& f = fixture();
  const DistillResult sd = distill_student(f.student_cfg(Mode::sd, "collapse_sd"));
  RunConfig pcd_cfg = f.student_cfg(Mode::pcd, "collapse_pcd");
  pcd_cfg.mu_init_override = 1.0;
  const DistillResult pcd = distill_student(pcd_cfg);
  REQUIRE(sd.batch_losses.size() == pcd.batch_losses.size());
  for (std::size_t i = 0; i < sd.batch_losses.size(); ++i)
    REQUIRE(std::abs(sd.batch_losses[i] - pcd.batch_losses[i]) < 1e-6);
}

TEST_CASE("curriculum log is monotone and saturates at gamma") {
  const auto& f = fixture();
  RunConfig cfg = f.student_cfg(Mode::pcd, "curriculum_log");
  cfg.epochs = 6;
  cfg.pacing = PacingConfig{0.4, 3, 1};
  const DistillResult r = distill_student(cfg);
  REQUIRE(r.curriculum.size() == 6);
  for (std::size_t i = 1; i < r.curriculum.size(); ++i) {
    REQUIRE(r.curriculum[i].mu >= r.curriculum[i - 1].mu);
    REQUIRE(r.curriculum[i].active_fraction >= r.curriculum[i - 1].active_fraction - 1e-12);
  }
  for (const auto& row : r.curriculum)
    if (row.epoch >= cfg.pacing.gamma) REQUIRE(row.mu == 1.0);
  REQUIRE(fs::exists(cfg.out_dir + "/curriculum.csv"));
}

TEST_CASE("pcd_no_bu differs from pcd exactly where BU crosses the threshold") {
  const auto& f = fixture();
  const Dataset ds = load_dataset(f.train_dir);
  const SvlsKernel kernel = build_kernel(1.0);
  const Tensor bu = boundary_uncertainty(ds.samples[0].labels, kernel);
  Tensor pu({16, 16});
  Rng rng(2);
  for (std::size_t i = 0; i < pu.numel(); ++i) pu[i] = rng.uniform() * 0.4;
  const double mu = 0.17;
  const CurriculumMask with_bu = build_masks(pu, bu, mu);
  const CurriculumMask no_bu = build_masks(pu, Tensor({16, 16}), mu);
  for (std::size_t i = 0; i < pu.numel(); ++i) {
    REQUIRE(with_bu.w_pu[i] == no_bu.w_pu[i]);
    if (bu[i] >= mu)
      REQUIRE(with_bu.w_bu[i] == 0.0);
    else
      REQUIRE(with_bu.w_bu[i] == no_bu.w_bu[i]);
  }
}

TEST_CASE("engine losses agree with the loss-map reference path") {
  const auto& f = fixture();
  const Dataset ds = load_dataset(f.train_dir);
  const ConvNet teacher = load_checkpoint(f.teacher_dir);
  ConvNet student = make_segnet(1, 3, 4);
  init_params(student, 99);
  const Sample& s = ds.samples[0];
  const Tensor t_soft = softmax(forward(teacher, s.image));
  CurriculumMask mask{Tensor::full({16, 16}, 1.0), Tensor::full({16, 16}, 1.0)};
  Rng rng(5);
  for (std::size_t i = 0; i < mask.w_pu.numel(); ++i)
    if (rng.uniform() < 0.3) mask.w_pu[i] = 0.0;
  Tensor w_joint(mask.w_pu.shape());
  std::size_t active = 0;
  for (std::size_t i = 0; i < w_joint.numel(); ++i) {
    w_joint[i] = mask.w_pu[i] * mask.w_bu[i];
    if (w_joint[i] != 0.0) ++active;
  }
  Gradients scratch = make_zero_grads(student);
  const double engine_loss = engine::image_backward(student, s, Mode::pcd, 1.0, &t_soft,
                                                    &w_joint, 1.0, scratch) /
                             static_cast<double>(active);
  const LossMaps maps = make_loss_maps(t_soft, softmax(forward(student, s.image)), s.labels,
                                       mask, 1.0);
  REQUIRE(engine_loss == Catch::Approx(pcd_loss(maps.sd, mask)).margin(1e-9));
}

TEST_CASE("modes share the teacher split and data order across runs") {
  std::vector<std::size_t> t1, c1, t2, c2;
  split_indices(20, 0.2, 7, t1, c1);
  split_indices(20, 0.2, 7, t2, c2);
  REQUIRE(t1 == t2);
  REQUIRE(c1 == c2);
  REQUIRE(t1.size() == 16);
  REQUIRE(c1.size() == 4);
  std::vector<std::size_t> other_t, other_c;
  split_indices(20, 0.2, 8, other_t, other_c);
  REQUIRE(other_t != t1);
}

TEST_CASE("report builds a comparison table from finished runs") {
  const auto& f = fixture();
  // reuse two of the runs written above
  const std::string out = f.root + "/report";
  write_report({f.root + "/collapse_sd", f.root + "/collapse_pcd"}, out);
  REQUIRE(fs::exists(out + "/report.csv"));
  REQUIRE(fs::exists(out + "/report.txt"));
  const std::string csv = detail::read_file_bytes(out + "/report.csv");
  REQUIRE(csv.find("collapse_sd,sd,") != std::string::npos);
  REQUIRE(csv.find("collapse_pcd,pcd,") != std::string::npos);
}

TEST_CASE("report re-plots robustness matrices found next to runs") {
  const auto& f = fixture();
  const std::string run = f.root + "/collapse_sd";
  detail::write_file_bytes(run + "/robustness.csv",
                           "model,family,severity,mean_dsc,mean_iou,mean_precision\n"
                           "teacher,clean,0,0.95,0.9,0.94\n"
                           "teacher,gaussian_noise,1,0.9,0.85,0.9\n"
                           "teacher,gaussian_noise,2,0.85,0.8,0.86\n"
                           "teacher,gaussian_noise,3,0.8,0.75,0.81\n");
  const std::string out = f.root + "/report_plots";
  write_report({run}, out);
  const std::string svg =
      detail::read_file_bytes(out + "/plots/robustness_gaussian_noise.svg");
  REQUIRE(svg.find("<svg") != std::string::npos);
  REQUIRE(svg.rfind("</svg>") != std::string::npos);
  REQUIRE(svg.find("teacher") != std::string::npos);
  // identical inputs reproduce identical bytes
  write_report({run}, f.root + "/report_plots2");
  REQUIRE(detail::read_file_bytes(f.root + "/report_plots2/plots/robustness_gaussian_noise.svg") ==
          svg);
}

TEST_CASE("distill without a teacher is rejected") {
  const auto& f = fixture();
  RunConfig cfg = f.student_cfg(Mode::sd, "no_teacher");
  cfg.teacher_dir.clear();
  REQUIRE_THROWS_WITH(distill_student(cfg), Catch::Matchers::ContainsSubstring("teacher"));
}

TEST_CASE("an impossible threshold skips every optimizer step with zero loss") {
  const auto& f = fixture();
  RunConfig cfg = f.student_cfg(Mode::pcd, "all_skipped");
  cfg.epochs = 1;
  cfg.mu_init_override = 1e-11;  // PU > 0 everywhere, so nothing is admitted
  const DistillResult r = distill_student(cfg);
  REQUIRE(r.skipped_batches == static_cast<int>(r.batch_losses.size()));
  for (double l : r.batch_losses) REQUIRE(l == 0.0);
  REQUIRE(r.curriculum.front().active_fraction == 0.0);
  // the student never moved: parameters equal the fresh initialization
  const ConvNet frozen = load_checkpoint(cfg.out_dir + "/student.ckpt");
  ConvNet fresh = make_segnet(1, 3, 4);
  init_params(fresh, derive_seed(cfg.seed, streams::kStudentInit));
  for (std::size_t l = 0; l < fresh.layers.size(); ++l)
    for (std::size_t i = 0; i < fresh.weights[l].numel(); ++i)
      REQUIRE(frozen.weights[l][i] == Catch::Approx(fresh.weights[l][i]).margin(1e-7));
}

TEST_CASE("sweep clean row equals a direct evaluation") {
  const auto& f = fixture();
  SweepOptions opts;
  opts.families = {"gaussian_noise"};
  opts.seed = 3;
  const auto cells = robustness_sweep({f.teacher_dir}, f.val_dir, f.root + "/tiny_sweep", opts,
                                      SeverityLadder::builtin());
  // the job count must not change a single output byte
  SweepOptions par = opts;
  par.jobs = 3;
  robustness_sweep({f.teacher_dir}, f.val_dir, f.root + "/tiny_sweep_par", par,
                   SeverityLadder::builtin());
  REQUIRE(detail::read_file_bytes(f.root + "/tiny_sweep/robustness.csv") ==
          detail::read_file_bytes(f.root + "/tiny_sweep_par/robustness.csv"));
  const ConvNet teacher = load_checkpoint(f.teacher_dir);
  const Dataset val = load_dataset(f.val_dir);
  const EvalResult direct = evaluate_model(teacher, val.samples);
  bool found_clean = false;
  for (const auto& c : cells)
    if (c.family == "clean") {
      found_clean = true;
      REQUIRE(c.severity == 0);
      REQUIRE(c.mean_dsc == direct.mean_dsc);
      REQUIRE(c.mean_iou == direct.mean_iou);
    }
  REQUIRE(found_clean);
  REQUIRE(cells.size() == 1 + 5);  // clean + one family x five severities
  REQUIRE(fs::exists(f.root + "/tiny_sweep/robustness.csv"));
  REQUIRE(fs::exists(f.root + "/tiny_sweep/plots/robustness_gaussian_noise.svg"));
}

TEST_CASE("a beta=1, gamma=interval grid cell lands on the SD result") {
  // medium fixture so both runs actually converge a little
  namespace fsn = std::filesystem;
  const std::string root = (fsn::temp_directory_path() / "pcd_test_grid").string();
  fsn::remove_all(root);
  SceneSpec spec;
  spec.height = 32;
  spec.width = 32;
  spec.seed = 5;
  save_dataset(generate(spec, 60), root + "/train", spec);
  save_dataset(generate(spec, 12, 60), root + "/val", spec, 60);
  RunConfig t;
  t.data_dir = root + "/train";
  t.val_dir = root + "/val";
  t.out_dir = root + "/teacher";
  t.epochs = 10;
  t.width = 8;
  t.seed = 5;
  const TeacherResult teacher = train_teacher(t);

  RunConfig s;
  s.data_dir = t.data_dir;
  s.val_dir = t.val_dir;
  s.teacher_dir = teacher.ckpt_dir;
  s.epochs = 10;
  s.width = 8;
  s.seed = 6;
  s.mode = Mode::sd;
  s.out_dir = root + "/sd";
  const DistillResult sd = distill_student(s);

  RunConfig g = s;
  g.pacing.e_interval = 1;
  g.out_dir = root + "/grid";
  const auto cells = beta_gamma_grid(g, {1.0}, {1}, 1);
  REQUIRE(cells.size() == 1);
  REQUIRE(cells[0].mean_dsc == Catch::Approx(sd.val.mean_dsc).margin(0.01));
  REQUIRE(fs::exists(root + "/grid/beta_gamma.csv"));

  // deterministic rerun reproduces the CSV byte for byte, even when the
  // cells run in parallel with single-threaded training inside
  const std::string first = detail::read_file_bytes(root + "/grid/beta_gamma.csv");
  beta_gamma_grid(g, {1.0}, {1}, 2);
  REQUIRE(detail::read_file_bytes(root + "/grid/beta_gamma.csv") == first);
}
