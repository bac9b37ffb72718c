#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "recolor/losses.hpp"
#include "test_util.hpp"

using namespace recolor;
using testutil::random_tensor;

TEST_CASE("reconstruction loss: identity, offset, brute-force oracle") {
  Rng rng(41);
  Tensor a = random_tensor({3, 16, 16}, rng, 0.0f, 1.0f);
  CHECK(reconstruction_loss(a, a) == 0.0);

  Tensor b = a;
  for (int64_t i = 0; i < b.numel(); ++i) b[i] += 0.1f;
  CHECK(reconstruction_loss(b, a) == doctest::Approx(0.01).epsilon(1e-5));

  Tensor x = random_tensor({3, 8, 8}, rng);
  Tensor y = random_tensor({3, 8, 8}, rng);
  double oracle = 0.0;
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < 8; ++r)
      for (int q = 0; q < 8; ++q) {
        double d = static_cast<double>(x.at(c, r, q)) - y.at(c, r, q);
        oracle += d * d;
      }
  oracle /= 3 * 8 * 8;
  CHECK(std::fabs(reconstruction_loss(x, y) - oracle) < 1e-12);

  Tensor wrong({3, 4, 4});
  CHECK_THROWS(reconstruction_loss(wrong, a));
}

TEST_CASE("reconstruction loss gradient matches finite differences") {
  Rng rng(42);
  Tensor recon = random_tensor({3, 4, 4}, rng);
  Tensor orig = random_tensor({3, 4, 4}, rng);
  Tensor g = reconstruction_loss_grad(recon, orig);
  double eps = 1e-3;
  for (int64_t i = 0; i < recon.numel(); i += 5) {
    Tensor rp = recon, rm = recon;
    rp[i] += static_cast<float>(eps);
    rm[i] -= static_cast<float>(eps);
    double num = (reconstruction_loss(rp, orig) - reconstruction_loss(rm, orig)) / (2 * eps);
    CHECK(std::fabs(num - g[i]) < 1e-4);
  }
}

TEST_CASE("gated loss: all-spoof true_rec is exactly zero") {
  Rng rng(43);
  Tensor recons = random_tensor({3, 3, 8, 8}, rng);
  Tensor origs = random_tensor({3, 3, 8, 8}, rng);
  std::vector<Label> labels = {Label::spoof, Label::spoof, Label::spoof};
  CHECK(gated_reconstruction_loss(recons, origs, labels, RecMode::true_rec) == 0.0);
  Tensor g = gated_reconstruction_loss_grad(recons, origs, labels, RecMode::true_rec);
  for (int64_t i = 0; i < g.numel(); ++i) CHECK(g[i] == 0.0f);
}

TEST_CASE("gated loss: all_rec equals the unconditional batch mean") {
  Rng rng(44);
  const int n = 5;
  Tensor recons = random_tensor({n, 3, 8, 8}, rng);
  Tensor origs = random_tensor({n, 3, 8, 8}, rng);
  std::vector<Label> labels = {Label::spoof, Label::bonafide, Label::spoof, Label::bonafide,
                               Label::spoof};
  int64_t per = recons.numel() / n;
  double mean = 0.0;
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int64_t j = 0; j < per; ++j) {
      double d = static_cast<double>(recons[i * per + j]) - origs[i * per + j];
      acc += d * d;
    }
    mean += acc / static_cast<double>(per);
  }
  mean /= n;
  CHECK(std::fabs(gated_reconstruction_loss(recons, origs, labels, RecMode::all_rec) - mean) <
        1e-12);
}

TEST_CASE("gated loss: mixed batch true_rec averages bonafide only") {
  Rng rng(45);
  const int n = 5;
  Tensor recons = random_tensor({n, 3, 4, 4}, rng);
  Tensor origs = random_tensor({n, 3, 4, 4}, rng);
  std::vector<Label> labels = {Label::bonafide, Label::spoof, Label::spoof, Label::bonafide,
                               Label::spoof};
  int64_t per = recons.numel() / n;
  auto mse = [&](int i) {
    double acc = 0.0;
    for (int64_t j = 0; j < per; ++j) {
      double d = static_cast<double>(recons[i * per + j]) - origs[i * per + j];
      acc += d * d;
    }
    return acc / static_cast<double>(per);
  };
  double expect = 0.5 * (mse(0) + mse(3));
  CHECK(std::fabs(gated_reconstruction_loss(recons, origs, labels, RecMode::true_rec) - expect) <
        1e-12);

  // true_rec ignores spoof reconstructions entirely
  Tensor perturbed = recons;
  for (int64_t j = 0; j < per; ++j) {
    perturbed[1 * per + j] += 5.0f;
    perturbed[2 * per + j] -= 3.0f;
    perturbed[4 * per + j] *= -1.0f;
  }
  CHECK(gated_reconstruction_loss(perturbed, origs, labels, RecMode::true_rec) ==
        gated_reconstruction_loss(recons, origs, labels, RecMode::true_rec));

  // nonnegativity and the zero case
  CHECK(gated_reconstruction_loss(recons, origs, labels, RecMode::all_rec) >= 0.0);
  CHECK(gated_reconstruction_loss(origs, origs, labels, RecMode::all_rec) == 0.0);

  std::vector<Label> short_labels = {Label::bonafide};
  CHECK_THROWS(gated_reconstruction_loss(recons, origs, short_labels, RecMode::all_rec));
}

TEST_CASE("gated loss gradient matches finite differences in both modes") {
  Rng rng(46);
  const int n = 4;
  Tensor recons = random_tensor({n, 3, 4, 4}, rng);
  Tensor origs = random_tensor({n, 3, 4, 4}, rng);
  std::vector<Label> labels = {Label::bonafide, Label::spoof, Label::bonafide, Label::spoof};
  for (RecMode mode : {RecMode::true_rec, RecMode::all_rec}) {
    Tensor g = gated_reconstruction_loss_grad(recons, origs, labels, mode);
    double eps = 1e-3;
    for (int64_t i = 0; i < recons.numel(); i += 17) {
      Tensor rp = recons, rm = recons;
      rp[i] += static_cast<float>(eps);
      rm[i] -= static_cast<float>(eps);
      double num = (gated_reconstruction_loss(rp, origs, labels, mode) -
                    gated_reconstruction_loss(rm, origs, labels, mode)) /
                   (2 * eps);
      CHECK(std::fabs(num - g[i]) < 1e-4);
    }
  }
}

TEST_CASE("cross entropy: values and gradient") {
  // equal logits -> log(2)
  Tensor logits({2, 2});
  std::vector<Label> labels = {Label::bonafide, Label::spoof};
  CHECK(cross_entropy(logits, labels) == doctest::Approx(std::log(2.0)));

  Rng rng(47);
  Tensor l = random_tensor({6, 2}, rng, -2.0f, 2.0f);
  std::vector<Label> ls;
  for (int i = 0; i < 6; ++i)
    ls.push_back(i % 2 ? Label::spoof : Label::bonafide);
  Tensor g = cross_entropy_grad(l, ls);
  double eps = 1e-3;
  for (int64_t i = 0; i < l.numel(); ++i) {
    Tensor lp = l, lm = l;
    lp[i] += static_cast<float>(eps);
    lm[i] -= static_cast<float>(eps);
    double num = (cross_entropy(lp, ls) - cross_entropy(lm, ls)) / (2 * eps);
    CHECK(std::fabs(num - g[i]) < 1e-4);
  }

  // a confident correct prediction has near-zero loss
  Tensor conf({1, 2});
  conf.at(0, 0) = 10.0f;
  conf.at(0, 1) = -10.0f;
  CHECK(cross_entropy(conf, {Label::bonafide}) < 1e-6);
  CHECK(cross_entropy(conf, {Label::spoof}) > 10.0);
}
