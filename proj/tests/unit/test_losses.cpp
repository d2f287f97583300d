#include <doctest.h>

#include "oracles.hpp"
#include "refsr/errors.hpp"
#include "refsr/losses.hpp"
#include "synthetic.hpp"

using namespace refsr;
using namespace refsr::testing;

namespace {

struct TexFixture {
  FallbackExtractor ex{0};
  ImageTensor lr = random_image(4, 4, 1);
  ImageTensor ref = random_image(16, 16, 2);
  FeaturePyramid pyr;
  MatchMap match;

  TexFixture() {
    pyr = extract_pyramid(ref, {0, 1, 2}, 2, ex);
    const FeaturePyramid q = extract_pyramid(bicubic_resize(lr, {4, 1}), {0}, 2, ex);
    match = match_features(q.level(0), pyr.level(0), 1, 1);
  }
};

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("losses are nonnegative and vanish at the target") {
    const FallbackExtractor ex(1);
    const ImageTensor a = random_image(8, 8, 3), b = random_image(8, 8, 4);
    CHECK(loss_rec(a, b) > 0.0);
    CHECK(loss_rec(a, a) == 0.0);
    CHECK(loss_per(a, b, ex) > 0.0);
    CHECK(loss_per(a, a, ex) == 0.0);
    const NetworkParams d = init_degrader({4, 4}, 5);
    CHECK(loss_deg(a, random_image(2, 2, 6), d) >= 0.0);
    CHECK(loss_deg(a, degrade_net(a, d), d) < 1e-15);
  }

  TEST_CASE("texture loss ignores a global constant") {
    TexFixture f;
    LossWeights w;
    ImageTensor sr = random_image(16, 16, 7);
    const double base = loss_tex_wavelet(sr, f.pyr, f.match, w, f.ex, {0, 1, 2});
    CHECK(base >= 0.0);
    for (double& v : sr.data) v += 0.3;
    CHECK(std::abs(loss_tex_wavelet(sr, f.pyr, f.match, w, f.ex, {0, 1, 2}) - base) < 1e-6);
    CHECK_THROWS_AS(loss_tex_wavelet(sr, f.pyr, f.match, w, f.ex, {3}), ArgumentError);
  }

  TEST_CASE("default level weights are uniform") {
    LossWeights w;
    CHECK(w.lambda_for(1, 3) == doctest::Approx(1.0 / 3.0));
    w.lambda[2] = 0.5;
    CHECK(w.lambda_for(2, 3) == 0.5);
    w.tex = -1.0;
    CHECK_THROWS_AS(w.validate(), ArgumentError);
  }

  TEST_CASE("total is the weighted sum and rejects non-finite terms") {
    LossWeights w;
    w.rec = 2.0, w.tex = 3.0, w.deg = 0.5, w.per = 0.25, w.adv = 4.0;
    const LossReport r = total_loss({1.0, 2.0, 3.0, 4.0, -1.0}, w);
    CHECK(r.total == doctest::Approx(2.0 + 6.0 + 1.5 + 1.0 - 4.0));
    try {
      total_loss({1.0, NAN, 0.0, 0.0, 0.0}, w);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("tex") != std::string::npos);
    }
  }

  TEST_CASE("frozen degrader is untouched by the deg loss backward pass") {
    const NetworkParams d = init_degrader({4, 4}, 8);
    const NetworkParams before = d;
    BoundParams bd(d, false);
    ag::Var sr = ag::leaf(random_image(8, 8, 9).to_tensor());
    ag::backward(deg_loss(sr, random_image(2, 2, 10).to_tensor(), bd));
    CHECK(d == before);
    CHECK(sr->grad.size() == sr->value.size());
    for (const auto& [name, g] : bd.gradients()) CHECK(g.max() == 0.0);
  }

  TEST_CASE("input gradients of the generator losses match finite differences") {
    const FallbackExtractor ex(2);
    const Tensor x0 = random_image(4, 4, 11).to_tensor();
    const Tensor gt = random_image(4, 4, 12).to_tensor();
    const NetworkParams critic = init_critic({4, 2}, 13);
    auto check = [&](const std::function<ag::Var(const ag::Var&)>& f) {
      ag::Var x = ag::leaf(x0);
      ag::backward(f(x));
      const auto fd = finite_difference([&](const Tensor& t) { return f(ag::constant(t))->value.item(); }, x0, 1e-6);
      CHECK(relative_error(x->grad.storage(), fd) < 1e-4);
    };
    check([&](const ag::Var& x) { return per_loss(x, gt, ex); });
    check([&](const ag::Var& x) { return adv_g_loss(x, BoundParams(critic, false)); });
  }

  TEST_CASE("critic loss terms") {
    const NetworkParams c = init_critic({4, 2}, 14);
    const Tensor gt = random_tensor({2, 8, 8, 3}, 15), sr = random_tensor({2, 8, 8, 3}, 16);
    const CriticLoss l = critic_loss(c, gt, sr, {0.3, 0.9}, 10.0);
    CHECK(l.penalty >= 0.0);
    CHECK(l.total == doctest::Approx(l.data_term + 10.0 * l.penalty));
    const double d_sr = 0.5 * (discriminate(ImageTensor::from_tensor(sr, 0), c) +
                               discriminate(ImageTensor::from_tensor(sr, 1), c));
    const double d_gt = 0.5 * (discriminate(ImageTensor::from_tensor(gt, 0), c) +
                               discriminate(ImageTensor::from_tensor(gt, 1), c));
    CHECK(l.data_term == doctest::Approx(d_sr - d_gt).epsilon(1e-9));
    for (const auto& [name, arr] : c.arrays) CHECK(l.gradients.at(name).same_shape(arr));
    CHECK(gradient_penalty(c, gt) >= 0.0);
  }

  TEST_CASE("interpolation weights are drawn from the supplied generator") {
    const NetworkParams c = init_critic({4, 2}, 17);
    const std::vector<ImageTensor> gt{random_image(8, 8, 18)}, sr{random_image(8, 8, 19)};
    Rng a(3), b(3);
    CHECK(loss_adv_d(gt, sr, c, 10.0, a).total == loss_adv_d(gt, sr, c, 10.0, b).total);
  }

  TEST_CASE("batch tensor validation") {
    CHECK(batch_tensor({random_image(4, 4, 1), random_image(4, 4, 2)}).n() == 2);
    CHECK_THROWS_AS(batch_tensor({random_image(4, 4, 1), random_image(4, 2, 2)}), ArgumentError);
  }
}
