#include <doctest.h>

#include "oracles.hpp"
#include "refsr/errors.hpp"
#include "refsr/losses.hpp"
#include "refsr/networks.hpp"
#include "synthetic.hpp"

using namespace refsr;
using namespace refsr::testing;

TEST_SUITE("networks") {
  TEST_CASE("upscaler has no normalization layers") {
    for (int s : {4, 8, 16}) {
      const NetworkParams p = init_upscaler({s, 8, 3}, 1);
      const auto layers = describe_layers(p);
      CHECK_FALSE(layers.empty());
      int shuffles = 0;
      for (const LayerInfo& l : layers) {
        CHECK(l.name.find("norm") == std::string::npos);
        CHECK(l.name.find("bn") == std::string::npos);
        CHECK(l.kind != "batch_norm");
        shuffles += l.kind == "pixel_shuffle";
      }
      CHECK((1 << shuffles) == s);
      for (const auto& [name, arr] : p.arrays) {
        CHECK(name.find("norm") == std::string::npos);
        CHECK(arr.all_finite());
      }
    }
  }

  TEST_CASE("upscaled features are exactly s times the input") {
    for (int s : {4, 8, 16})
      for (auto [h, w] : {std::pair{2, 2}, std::pair{4, 6}, std::pair{6, 4}}) {
        const Tensor f = upscale_features(random_image(h, w, 2), init_upscaler({s, 4, 1}, 3));
        CHECK(f.h() == s * h);
        CHECK(f.w() == s * w);
        CHECK(f.c() == 4);
      }
  }

  TEST_CASE("fusion and degrader shapes") {
    const NetworkParams fusion = init_fusion({8, 5, 1}, 4);
    ag::Var y = fusion_forward(BoundParams(fusion, false), ag::constant(random_tensor({2, 16, 8, 8}, 5)),
                               ag::constant(random_tensor({2, 16, 8, 5}, 6)));
    CHECK(y->value.shape() == Tensor::Shape{2, 16, 8, 3});
    for (int s : {4, 8, 16}) {
      const NetworkParams d = init_degrader({s, 6}, 7);
      const ImageTensor lr = degrade_net(random_image(2 * s, 3 * s, 8), d);
      CHECK(lr.height == 2);
      CHECK(lr.width == 3);
      CHECK(degrader_config(d).s == s);
    }
    CHECK_THROWS_AS(
        fusion_forward(BoundParams(fusion, false), ag::constant(random_tensor({1, 16, 8, 8}, 5)),
                       ag::constant(random_tensor({1, 8, 8, 5}, 6))),
        ArgumentError);
  }

  TEST_CASE("critic yields one unbounded score per sample") {
    const NetworkParams c = init_critic({4, 3}, 9);
    const ag::Var out = critic_forward(BoundParams(c, false), ag::constant(random_tensor({3, 16, 16, 3}, 10)));
    CHECK(out->value.shape() == Tensor::Shape{3, 1, 1, 1});
    CHECK(std::isfinite(discriminate(random_image(16, 16, 11), c)));
    const auto layers = describe_layers(c);
    CHECK(layers.back().kind == "linear");
  }

  TEST_CASE("configs are recoverable from parameters") {
    const NetworkParams u = init_upscaler({16, 12, 2}, 1);
    CHECK(upscaler_config(u).s == 16);
    CHECK(upscaler_config(u).width == 12);
    CHECK(upscaler_config(u).blocks == 2);
    const NetworkParams f = init_fusion({10, 7, 3}, 1);
    CHECK(fusion_config(f).transfer_channels == 7);
    CHECK(critic_config(init_critic({6, 2}, 1)).stages == 2);
    CHECK_THROWS_AS(require_arch(u, "fusion"), ConfigurationError);
    CHECK_NOTHROW(require_arch(u, u.arch_id));
  }

  TEST_CASE("initialization is seeded") {
    CHECK(init_upscaler({8, 4, 1}, 3) == init_upscaler({8, 4, 1}, 3));
    CHECK_FALSE(init_upscaler({8, 4, 1}, 3) == init_upscaler({8, 4, 1}, 4));
  }

  TEST_CASE("rec loss is differentiable end to end through the upscaler") {
    NetworkParams up = init_upscaler({4, 3, 1}, 12);
    const NetworkParams fusion = init_fusion({3, 2, 1}, 13);
    const Tensor lr = random_image(4, 4, 14).to_tensor();
    const Tensor ft = random_tensor({1, 16, 16, 2}, 15);
    const Tensor gt = random_image(16, 16, 16).to_tensor();
    auto loss = [&](const NetworkParams& p) {
      BoundParams bu(p, true), bf(fusion, false);
      return rec_loss(fusion_forward(bf, upscaler_forward(bu, ag::constant(lr)), ag::constant(ft)), gt);
    };
    BoundParams bu(up, true), bf(fusion, false);
    ag::backward(rec_loss(fusion_forward(bf, upscaler_forward(bu, ag::constant(lr)), ag::constant(ft)), gt));
    const auto grads = bu.gradients();
    for (const std::string name : {"head.weight", "body.bias"}) {
      CAPTURE(name);
      const Tensor x0 = up.array(name);
      const auto fd = finite_difference(
          [&](const Tensor& t) {
            NetworkParams q = up;
            q.array(name) = t;
            return loss(q)->value.item();
          },
          x0, 1e-6);
      CHECK(relative_error(grads.at(name).storage(), fd) < 1e-3);
    }
  }

  TEST_CASE("critic input gradient agrees with the directional derivative") {
    const NetworkParams c = init_critic({4, 2}, 17);
    const Tensor x = random_tensor({2, 8, 8, 3}, 18), v = random_tensor({2, 8, 8, 3}, 19);
    const Tensor g = critic_input_gradient(c, x);
    const Tensor dd = critic_directional_derivative(BoundParams(c, false), x, v)->value;
    for (int n = 0; n < 2; ++n) {
      double s = 0.0;
      const std::size_t per = x.size() / 2;
      for (std::size_t i = 0; i < per; ++i) s += g.data()[n * per + i] * v.data()[n * per + i];
      CHECK(dd.at(n, 0, 0, 0) == doctest::Approx(s).epsilon(1e-10));
    }
  }
}
