#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "oracles.hpp"
#include "refsr/errors.hpp"
#include "refsr/features.hpp"
#include "refsr/rng.hpp"
#include "synthetic.hpp"

using namespace refsr;
using namespace refsr::testing;

TEST_SUITE("features") {
  TEST_CASE("fallback extractor is a pure function of its seed") {
    const FallbackExtractor a(5), b(5), c(6);
    CHECK(a.params() == b.params());
    CHECK_FALSE(a.params() == c.params());
    CHECK(a.id() == b.id());
    CHECK(a.id() != c.id());
    const ImageTensor img = random_image(32, 24, 1);
    const FeaturePyramid pa = extract_pyramid(img, {0, 1, 2, 3}, 3, a);
    const FeaturePyramid pb = extract_pyramid(img, {0, 1, 2, 3}, 3, b);
    for (int l = 0; l <= 3; ++l) CHECK(pa.level(l) == pb.level(l));
  }

  TEST_CASE("stage strides and widths") {
    const FallbackExtractor ex(0);
    const ImageTensor img = random_image(32, 48, 2);
    const auto st = ex.stages(ag::constant(img.to_tensor()), 3);
    REQUIRE(st.size() == 4);
    for (int k = 0; k < 4; ++k) {
      CHECK(st[k]->value.h() == 32 >> k);
      CHECK(st[k]->value.w() == 48 >> k);
      CHECK(st[k]->value.c() == FallbackExtractor::kWidths[k]);
      CHECK(ex.stage_channels(k) == FallbackExtractor::kWidths[k]);
      CHECK(st[k]->value.min() >= 0.0);
    }
  }

  TEST_CASE("level to stage mapping") {
    CHECK(stage_for_level(3, 3) == 0);
    CHECK(stage_for_level(1, 3) == 2);
    CHECK(stage_for_level(2, 4) == 2);
    CHECK(stage_for_level(0, 3) == 3);
    CHECK_THROWS_AS(stage_for_level(0, 4), ArgumentError);
    CHECK_THROWS_AS(stage_for_level(4, 3), ArgumentError);
  }

  TEST_CASE("pyramid level l has stride 2^(L-l)") {
    const FallbackExtractor ex(1);
    const FeaturePyramid p = extract_pyramid(random_image(64, 32, 3), {2, 4}, 4, ex);
    CHECK(p.L == 4);
    CHECK(p.extractor_id == ex.id());
    CHECK(p.level(4).h() == 64);
    CHECK(p.level(2).h() == 16);
    CHECK(p.level(2).w() == 8);
    CHECK_THROWS(p.level(3));
  }

  TEST_CASE("graph extraction matches value extraction and carries gradients") {
    const FallbackExtractor ex(2);
    const ImageTensor img = random_image(16, 16, 4);
    ag::Var x = ag::leaf(img.to_tensor());
    const auto lv = extract_levels(x, {1, 3}, 3, ex);
    const FeaturePyramid p = extract_pyramid(img, {1, 3}, 3, ex);
    CHECK(lv.at(1)->value == p.level(1));
    ag::backward(ag::sum(lv.at(1)));
    CHECK(x->grad.size() == x->value.size());
    double norm = 0.0;
    for (double v : x->grad.storage()) norm += v * v;
    CHECK(norm > 0.0);
  }

  TEST_CASE("perceptual layer adapts to small inputs") {
    const FallbackExtractor ex(3);
    CHECK(ex.has_perceptual_layer());
    CHECK(ex.perceptual(ag::constant(random_image(32, 32, 5).to_tensor()))->value.c() == 128);
    CHECK(ex.perceptual(ag::constant(random_image(4, 4, 6).to_tensor()))->value.h() == 1);
  }

  TEST_CASE("gram is symmetric positive semidefinite and matches the explicit sum") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const int c = 1 + static_cast<int>(seed % 9);
      const Tensor f = random_tensor({1, 1 + static_cast<int>(seed % 4), 2 + static_cast<int>(seed % 3), c}, seed);
      const GramMatrix g = gram(f);
      CHECK(g.n_positions == static_cast<long>(f.h()) * f.w());
      CHECK((g.g - g.g.transpose()).cwiseAbs().maxCoeff() == 0.0);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g.g);
      CHECK(es.eigenvalues().minCoeff() >= -1e-8);
      const auto naive = naive_gram(f);
      for (int i = 0; i < c; ++i)
        for (int j = 0; j < c; ++j) CHECK(g.g(i, j) == doctest::Approx(naive[i][j]).epsilon(1e-12));
    }
    CHECK_THROWS_AS(gram(Tensor({2, 2, 2, 2})), ArgumentError);
  }

  TEST_CASE("missing VGG weights name the expected file") {
    TempDir dir("vgg");
    ExtractorConfig cfg;
    cfg.kind = ExtractorConfig::Kind::Vgg19;
    cfg.weights_path = dir.path() / "vgg19.ckpt";
    try {
      make_extractor(cfg);
      FAIL("expected ConfigurationError");
    } catch (const ConfigurationError& e) {
      CHECK(std::string(e.what()).find("vgg19.ckpt") != std::string::npos);
    }
  }

  TEST_CASE("VGG backbone loads from a narrow weight file") {
    TempDir dir("vgg");
    NetworkParams p;
    p.arch_id = "vgg19";
    int cin = 3;
    Rng rng(7);
    for (const std::string& layer : Vgg19Extractor::layer_names()) {
      const int cout = 4;
      Tensor w({3, 3, cin, cout});
      for (double& v : w.storage()) v = 0.3 * rng.normal();
      p.arrays[layer + ".weight"] = w;
      p.arrays[layer + ".bias"] = Tensor({1, 1, 1, cout});
      cin = cout;
    }
    save_params(p, dir.path() / "vgg.ckpt");
    const auto ex = Vgg19Extractor::load(dir.path() / "vgg.ckpt", file_checksum(dir.path() / "vgg.ckpt"));
    CHECK(ex->stage_channels(0) == 4);
    CHECK(ex->has_perceptual_layer());
    const auto st = ex->stages(ag::constant(random_image(16, 16, 8).to_tensor()), 3);
    CHECK(st[3]->value.h() == 2);
    CHECK_THROWS_AS(Vgg19Extractor::load(dir.path() / "vgg.ckpt", 1234), ConfigurationError);
  }
}
