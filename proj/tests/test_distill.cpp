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

#include "pcd/distill.hpp"
#include "pcd/rng.hpp"

using namespace pcd;

namespace {

Tensor random_probs(Rng& rng, std::size_t k, std::size_t h, std::size_t w) {
  Tensor z({k, h, w});
  for (std::size_t i = 0; i < z.numel(); ++i) z[i] = rng.normal();
  return softmax(z);
}

CurriculumMask ones_mask(std::size_t h, std::size_t w) {
  return CurriculumMask{Tensor::full({h, w}, 1.0), Tensor::full({h, w}, 1.0)};
}

}  // namespace

TEST_CASE("pixel cross entropy") {
  Tensor p({2, 1, 3});
  LabelMap lm(1, 3, 2);
  // p(true)=1 -> 0
  p.at(0, 0, 0) = 1.0;
  p.at(1, 0, 0) = 0.0;
  lm.set(0, 0, 0);
  // p(true)=exp(-1) -> 1
  p.at(0, 0, 1) = std::exp(-1.0);
  p.at(1, 0, 1) = 1.0 - std::exp(-1.0);
  lm.set(0, 1, 0);
  // uniform K=2 -> ln 2
  p.at(0, 0, 2) = 0.5;
  p.at(1, 0, 2) = 0.5;
  lm.set(0, 2, 1);
  const Tensor ce = pixel_ce(p, lm);
  REQUIRE(ce[0] == Catch::Approx(0.0).margin(1e-11));
  REQUIRE(ce[1] == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(ce[2] == Catch::Approx(std::log(2.0)).margin(1e-12));
}

TEST_CASE("identical distributions have zero KL") {
  Rng rng(5);
  const Tensor p = random_probs(rng, 4, 3, 3);
  const Tensor kl = pixel_kl(p, p, 1.0);
  for (std::size_t i = 0; i < kl.numel(); ++i) REQUIRE(kl[i] == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("near-one-hot teacher against uniform student is close to ln 2") {
  const double delta = 1e-6;
  Tensor t({2, 1, 1}), s({2, 1, 1});
  t[0] = 1.0 - delta;
  t[1] = delta;
  s[0] = 0.5;
  s[1] = 0.5;
  // closed form: log 2 + (1-d) log(1-d) + d log d
  const double expected =
      std::log(2.0) + (1.0 - delta) * std::log(1.0 - delta) + delta * std::log(delta);
  const Tensor kl = pixel_kl(t, s, 1.0);
  REQUIRE(kl[0] == Catch::Approx(expected).margin(1e-12));
  REQUIRE(kl[0] == Catch::Approx(std::log(2.0)).margin(1e-4));
}

TEST_CASE("tau=1 reduces to the plain KL of the given distributions") {
  Rng rng(6);
  const Tensor t = random_probs(rng, 3, 4, 4);
  const Tensor s = random_probs(rng, 3, 4, 4);
  const Tensor kl = pixel_kl(t, s, 1.0);
  const std::size_t plane = 16;
  for (std::size_t p = 0; p < plane; ++p) {
    double direct = 0.0;
    for (std::size_t c = 0; c < 3; ++c)
      direct += t[c * plane + p] * (std::log(t[c * plane + p]) - std::log(s[c * plane + p]));
    REQUIRE(kl[p] == Catch::Approx(direct).margin(1e-9));
  }
}

TEST_CASE("tau softening matches an independent oracle and keeps KL non-negative") {
  Rng rng(7);
  const Tensor t = random_probs(rng, 3, 5, 5);
  const Tensor s = random_probs(rng, 3, 5, 5);
  const double tau = 3.0;
  const Tensor kl = pixel_kl(t, s, tau);
  const std::size_t plane = 25;
  for (std::size_t p = 0; p < plane; ++p) {
    // oracle: soften q_i proportional to p_i^(1/tau), then tau^2 * KL
    double ts[3], ss[3], tz = 0.0, sz = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      ts[c] = std::pow(t[c * plane + p], 1.0 / tau);
      ss[c] = std::pow(s[c * plane + p], 1.0 / tau);
      tz += ts[c];
      sz += ss[c];
    }
    double direct = 0.0;
    for (std::size_t c = 0; c < 3; ++c)
      direct += (ts[c] / tz) * (std::log(ts[c] / tz) - std::log(ss[c] / sz));
    direct *= tau * tau;
    REQUIRE(kl[p] == Catch::Approx(direct).margin(1e-9));
    REQUIRE(kl[p] >= 0.0);
  }
}

TEST_CASE("pcd_loss masked-mean examples") {
  Tensor sd({1, 2});
  sd[0] = 2.0;
  sd[1] = 4.0;
  REQUIRE(pcd_loss(sd, ones_mask(1, 2)) == 3.0);

  CurriculumMask half = ones_mask(1, 2);
  half.w_pu[1] = 0.0;
  REQUIRE(pcd_loss(sd, half) == 2.0);

  CurriculumMask none = ones_mask(1, 2);
  none.w_pu[0] = none.w_pu[1] = 0.0;
  REQUIRE(pcd_loss(sd, none) == 0.0);

  Tensor wrong({2, 2});
  REQUIRE_THROWS_AS(pcd_loss(wrong, half), std::invalid_argument);
}

TEST_CASE("loss maps satisfy sd = ce + kl and the mask identity") {
  Rng rng(9);
  const Tensor t = random_probs(rng, 3, 6, 6);
  const Tensor s = random_probs(rng, 3, 6, 6);
  LabelMap lm(6, 6, 3);
  for (std::size_t y = 0; y < 6; ++y)
    for (std::size_t x = 0; x < 6; ++x) lm.set(y, x, static_cast<int>(rng.below(3)));
  CurriculumMask mask = ones_mask(6, 6);
  for (std::size_t i = 0; i < mask.w_pu.numel(); ++i)
    if (rng.uniform() < 0.4) mask.w_pu[i] = 0.0;
  const LossMaps maps = make_loss_maps(t, s, lm, mask, 1.0);
  std::size_t active = 0;
  for (std::size_t i = 0; i < maps.sd.numel(); ++i) {
    REQUIRE(maps.ce[i] >= 0.0);
    REQUIRE(maps.kl[i] >= 0.0);
    REQUIRE(maps.sd[i] == maps.ce[i] + maps.kl[i]);
    REQUIRE(maps.pcd[i] == mask.w_pu[i] * mask.w_bu[i] * maps.sd[i]);
    if (mask.w_pu[i] * mask.w_bu[i] != 0.0) ++active;
  }
  REQUIRE(maps.active_count == active);
}

TEST_CASE("all-ones masks make pcd_loss equal the plain mean") {
  Rng rng(10);
  const Tensor t = random_probs(rng, 4, 8, 8);
  const Tensor s = random_probs(rng, 4, 8, 8);
  LabelMap lm(8, 8, 4);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) lm.set(y, x, static_cast<int>(rng.below(4)));
  const LossMaps maps = make_loss_maps(t, s, lm, ones_mask(8, 8), 1.0);
  double mean = 0.0;
  for (std::size_t i = 0; i < maps.sd.numel(); ++i) mean += maps.sd[i];
  mean /= static_cast<double>(maps.sd.numel());
  REQUIRE(pcd_loss(maps.sd, ones_mask(8, 8)) == Catch::Approx(mean).margin(1e-9));
}

TEST_CASE("masked pixels contribute exactly nothing to the loss") {
  // finite difference on the student probabilities at a masked pixel
  Rng rng(11);
  const Tensor t = random_probs(rng, 2, 2, 2);
  Tensor s = random_probs(rng, 2, 2, 2);
  LabelMap lm(2, 2, 2);
  CurriculumMask mask = ones_mask(2, 2);
  mask.w_bu[3] = 0.0;  // mask out the last pixel
  const LossMaps before = make_loss_maps(t, s, lm, mask, 1.0);
  const double loss_before = pcd_loss(before.sd, mask);
  // poke the masked pixel's distribution
  const std::size_t plane = 4;
  s[0 * plane + 3] = 0.9;
  s[1 * plane + 3] = 0.1;
  const LossMaps after = make_loss_maps(t, s, lm, mask, 1.0);
  const double loss_after = pcd_loss(after.sd, mask);
  REQUIRE(loss_after == loss_before);
}
