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

#include "pcd/perturb.hpp"
#include "pcd/rng.hpp"
#include "pcd/synth.hpp"

using namespace pcd;

namespace {

Tensor random_image(std::uint64_t seed, std::size_t h = 32, std::size_t w = 32) {
  SceneSpec spec;
  spec.height = h;
  spec.width = w;
  spec.seed = seed;
  return generate(spec, 1).front().image;
}

double variance(const Tensor& t) {
  double mean = 0.0;
  for (std::size_t i = 0; i < t.numel(); ++i) mean += t[i];
  mean /= static_cast<double>(t.numel());
  double var = 0.0;
  for (std::size_t i = 0; i < t.numel(); ++i) var += (t[i] - mean) * (t[i] - mean);
  return var / static_cast<double>(t.numel());
}

double mse(const Tensor& a, const Tensor& b) {
  double e = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) e += (a[i] - b[i]) * (a[i] - b[i]);
  return e / static_cast<double>(a.numel());
}

}  // namespace

TEST_CASE("gaussian noise ladder carries the published sigma values") {
  const SeverityLadder ladder = SeverityLadder::builtin();
  const double expected[5] = {0.04, 0.06, 0.08, 0.09, 0.10};
  for (int s = 1; s <= 5; ++s) {
    const auto& p = ladder.params("gaussian_noise", s);
    REQUIRE(p.size() == 1);
    REQUIRE(p[0] == expected[s - 1]);
  }
}

TEST_CASE("shipped ladder file parses to the builtin table") {
  const SeverityLadder from_file = SeverityLadder::from_file(PCD_LADDERS_FILE);
  REQUIRE(from_file == SeverityLadder::builtin());
}

TEST_CASE("PCD_LADDER_FILE overrides the builtin table") {
  const auto path =
      (std::filesystem::temp_directory_path() / "pcd_test_ladder_override.txt").string();
  detail::write_file_bytes(path, "gaussian_noise.1=0.5\n");
  setenv("PCD_LADDER_FILE", path.c_str(), 1);
  const SeverityLadder ladder = SeverityLadder::from_env_or_builtin();
  unsetenv("PCD_LADDER_FILE");
  REQUIRE(ladder.params("gaussian_noise", 1)[0] == 0.5);
  REQUIRE_FALSE(ladder == SeverityLadder::builtin());
  REQUIRE(SeverityLadder::from_env_or_builtin() == SeverityLadder::builtin());
}

TEST_CASE("every family and severity keeps range and shape") {
  const SeverityLadder ladder = SeverityLadder::builtin();
  const Tensor img = random_image(3);
  for (const char* family : corruption_names())
    for (int severity = 1; severity <= 5; ++severity) {
      CorruptionSpec spec{corruption_from_name(family), severity, 99};
      const Tensor out = corrupt(img, spec, ladder);
      REQUIRE(out.shape() == img.shape());
      for (std::size_t i = 0; i < out.numel(); ++i) {
        REQUIRE(out[i] >= 0.0);
        REQUIRE(out[i] <= 1.0);
      }
    }
}

TEST_CASE("corruptions are deterministic in the seed") {
  const SeverityLadder ladder = SeverityLadder::builtin();
  const Tensor img = random_image(4);
  for (const char* family : {"gaussian_noise", "glass_blur", "snow", "elastic", "frost"}) {
    CorruptionSpec spec{corruption_from_name(family), 3, 1234};
    const Tensor a = corrupt(img, spec, ladder);
    const Tensor b = corrupt(img, spec, ladder);
    for (std::size_t i = 0; i < a.numel(); ++i) REQUIRE(a[i] == b[i]);
    spec.seed = 1235;
    const Tensor c = corrupt(img, spec, ladder);
    if (std::string(family) != "elastic") {  // elastic on smooth regions can coincide
      bool any_diff = false;
      for (std::size_t i = 0; i < a.numel(); ++i)
        if (a[i] != c[i]) any_diff = true;
      REQUIRE(any_diff);
    }
  }
}

TEST_CASE("unknown family and out-of-range severity are rejected") {
  const SeverityLadder ladder = SeverityLadder::builtin();
  REQUIRE_THROWS_WITH(corruption_from_name("vignette"),
                      Catch::Matchers::ContainsSubstring("unknown corruption family"));
  const Tensor img = random_image(5, 8, 8);
  for (int severity : {0, 6, -1}) {
    CorruptionSpec spec{Corruption::gaussian_noise, severity, 0};
    REQUIRE_THROWS_WITH(corrupt(img, spec, ladder),
                        Catch::Matchers::ContainsSubstring("severity out of range"));
  }
}

TEST_CASE("brightness shifts a mid-gray image by exactly the ladder offset") {
  const SeverityLadder ladder = SeverityLadder::builtin();
  const Tensor img = Tensor::full({1, 8, 8}, 0.5);
  for (int severity = 1; severity <= 5; ++severity) {
    const double offset = ladder.params("brightness", severity)[0];
    CorruptionSpec spec{Corruption::brightness, severity, 0};
    const Tensor out = corrupt(img, spec, ladder);
    double mean = 0.0;
    for (std::size_t i = 0; i < out.numel(); ++i) mean += out[i];
    mean /= static_cast<double>(out.numel());
    REQUIRE(mean == Catch::Approx(0.5 + offset).margin(1e-12));
  }
}

TEST_CASE("blur of a constant image is the identity") {
  const SeverityLadder ladder = SeverityLadder::builtin();
  const Tensor img = Tensor::full({1, 16, 16}, 0.42);
  for (const char* family : {"defocus_blur", "motion_blur", "zoom_blur"}) {
    CorruptionSpec spec{corruption_from_name(family), 3, 7};
    const Tensor out = corrupt(img, spec, ladder);
    for (std::size_t i = 0; i < out.numel(); ++i)
      REQUIRE(out[i] == Catch::Approx(0.42).margin(1e-12));
  }
}

TEST_CASE("noise variance grows with severity on a constant image") {
  const SeverityLadder ladder = SeverityLadder::builtin();
  const Tensor img = Tensor::full({1, 48, 48}, 0.5);
  for (const char* family : {"gaussian_noise", "shot_noise", "impulse_noise"}) {
    double prev = -1.0;
    for (int severity = 1; severity <= 5; ++severity) {
      CorruptionSpec spec{corruption_from_name(family), severity, 31};
      const double v = variance(corrupt(img, spec, ladder));
      REQUIRE(v > prev);
      prev = v;
    }
  }
}

TEST_CASE("blur total variation is non-increasing with severity") {
  const SeverityLadder ladder = SeverityLadder::builtin();
  const Tensor img = random_image(17, 48, 48);
  for (const char* family : {"defocus_blur", "glass_blur", "motion_blur", "zoom_blur"}) {
    double prev = 1e300;
    for (int severity = 1; severity <= 5; ++severity) {
      CorruptionSpec spec{corruption_from_name(family), severity, 55};
      const double tv = imgops::total_variation(corrupt(img, spec, ladder));
      REQUIRE(tv <= prev + 1e-9);
      prev = tv;
    }
  }
}

TEST_CASE("jpeg distortion grows with severity") {
  const SeverityLadder ladder = SeverityLadder::builtin();
  const Tensor img = random_image(23, 48, 48);
  double prev = -1.0;
  for (int severity = 1; severity <= 5; ++severity) {
    CorruptionSpec spec{Corruption::jpeg, severity, 0};
    const double e = mse(img, corrupt(img, spec, ladder));
    REQUIRE(e >= prev);
    prev = e;
  }
}

TEST_CASE("corrupt_dataset mirrors images and copies labels byte-for-byte") {
  namespace fs = std::filesystem;
  const auto base = fs::temp_directory_path() / "pcd_test_perturb";
  const std::string in_dir = (base / "in").string();
  const std::string out1 = (base / "out1").string();
  const std::string out2 = (base / "out2").string();
  SceneSpec spec;
  spec.height = 16;
  spec.width = 16;
  spec.seed = 6;
  save_dataset(generate(spec, 3), in_dir, spec);

  const SeverityLadder ladder = SeverityLadder::builtin();
  CorruptionSpec cspec{Corruption::gaussian_noise, 2, 77};
  corrupt_dataset(in_dir, out1, cspec, ladder);
  corrupt_dataset(in_dir, out2, cspec, ladder);
  for (std::size_t i = 0; i < 3; ++i) {
    REQUIRE(detail::read_file_bytes(out1 + "/" + label_name(i)) ==
            detail::read_file_bytes(in_dir + "/" + label_name(i)));
    REQUIRE(detail::read_file_bytes(out1 + "/" + image_name(i)) ==
            detail::read_file_bytes(out2 + "/" + image_name(i)));
    REQUIRE(detail::read_file_bytes(out1 + "/" + image_name(i)) !=
            detail::read_file_bytes(in_dir + "/" + image_name(i)));
  }
  const KeyValues manifest = load_keyvalues(out1 + "/manifest.txt");
  REQUIRE(manifest.at("corruption") == "gaussian_noise");

  CorruptionSpec bad{Corruption::gaussian_noise, 0, 0};
  REQUIRE_THROWS_WITH(corrupt_dataset(in_dir, out1, bad, ladder),
                      Catch::Matchers::ContainsSubstring("severity out of range"));
}
