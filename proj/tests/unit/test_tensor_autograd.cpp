#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "refsr/autograd.hpp"
#include "refsr/errors.hpp"
#include "refsr/wavelet.hpp"
#include "synthetic.hpp"

using namespace refsr;
using namespace refsr::testing;

namespace {

// Scalar probe: sum of the op output weighted by a fixed random tensor.
double weighted(const Tensor& out, const Tensor& wts) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out.data()[i] * wts.data()[i];
  return s;
}

void check_input_gradient(const std::function<ag::Var(const ag::Var&)>& op, const Tensor& x0, std::uint64_t seed) {
  const Tensor probe_shape_out = op(ag::constant(x0))->value;
  const Tensor wts = random_tensor(probe_shape_out.shape(), seed);
  ag::Var x = ag::leaf(x0);
  ag::Var y = op(x);
  ag::backward(ag::sum(ag::mul_const(y, wts)));
  const std::vector<double> analytic(x->grad.storage());
  const auto fd = finite_difference([&](const Tensor& t) { return weighted(op(ag::constant(t))->value, wts); }, x0,
                                    1e-6);
  CHECK(relative_error(analytic, fd) < 1e-6);
}

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("shape, indexing and arithmetic") {
    Tensor t({2, 3, 4, 5}, 1.5);
    CHECK(t.size() == 120);
    CHECK(t.index(1, 2, 3, 4) == 119);
    t.at(1, 0, 0, 0) = -2.0;
    CHECK(t.min() == -2.0);
    CHECK(t.max() == 1.5);
    Tensor u = t;
    u += t;
    u *= 0.5;
    CHECK(u == t);
    CHECK(t.slice_batch(1).at(0, 0, 0, 0) == -2.0);
    const std::vector<Tensor> items{t.slice_batch(0), t.slice_batch(1)};
    CHECK(Tensor::stack(items) == t);
    CHECK(Tensor::scalar(3.0).item() == 3.0);
    CHECK_THROWS(t.item());
  }

  TEST_CASE("non-finite detection") {
    Tensor t({1, 1, 2, 1});
    CHECK(t.all_finite());
    t.at(0, 0, 1, 0) = NAN;
    CHECK_FALSE(t.all_finite());
  }
}

TEST_SUITE("autograd") {
  TEST_CASE("conv2d gradients match finite differences") {
    const Tensor x0 = random_tensor({2, 5, 6, 3}, 1);
    const Tensor w0 = random_tensor({3, 3, 3, 4}, 2);
    const Tensor b0 = random_tensor({1, 1, 1, 4}, 3);
    for (auto mode : {ag::Padding::Zero, ag::Padding::Replicate})
      for (int stride : {1, 2}) {
        CAPTURE(stride);
        check_input_gradient(
            [&](const ag::Var& x) { return ag::conv2d(x, ag::constant(w0), ag::constant(b0), stride, 1, mode); }, x0,
            4);
        check_input_gradient(
            [&](const ag::Var& w) { return ag::conv2d(ag::constant(x0), w, ag::constant(b0), stride, 1, mode); }, w0,
            5);
        check_input_gradient(
            [&](const ag::Var& b) { return ag::conv2d(ag::constant(x0), ag::constant(w0), b, stride, 1, mode); }, b0,
            6);
      }
  }

  TEST_CASE("1x1 convolution equals a per-pixel matrix product") {
    const Tensor x = random_tensor({1, 2, 3, 4}, 7);
    const Tensor w = random_tensor({1, 1, 4, 2}, 8);
    const Tensor y = ag::conv2d(ag::constant(x), ag::constant(w), nullptr, 1, 0, ag::Padding::Zero)->value;
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 3; ++c)
        for (int o = 0; o < 2; ++o) {
          double s = 0.0;
          for (int i = 0; i < 4; ++i) s += x.at(0, r, c, i) * w.at(0, 0, i, o);
          CHECK(y.at(0, r, c, o) == doctest::Approx(s).epsilon(1e-14));
        }
  }

  TEST_CASE("elementwise and pooling ops differentiate correctly") {
    const Tensor x0 = random_tensor({2, 4, 6, 3}, 9);
    const Tensor c = random_tensor({2, 4, 6, 3}, 10);
    check_input_gradient([](const ag::Var& x) { return ag::leaky_relu(x, 0.2); }, x0, 11);
    check_input_gradient([](const ag::Var& x) { return ag::affine(x, -1.5, 0.25); }, x0, 12);
    check_input_gradient([&](const ag::Var& x) { return ag::mul_const(x, c); }, x0, 13);
    check_input_gradient([](const ag::Var& x) { return ag::avg_pool2(x); }, x0, 14);
    check_input_gradient([](const ag::Var& x) { return ag::max_pool2(x); }, x0, 15);
    check_input_gradient([](const ag::Var& x) { return ag::global_avg_pool(x); }, x0, 16);
    check_input_gradient([](const ag::Var& x) { return ag::haar_hh(x); }, x0, 17);
    check_input_gradient([](const ag::Var& x) { return ag::gram(x); }, x0, 18);
    check_input_gradient([](const ag::Var& x) { return ag::rms_per_sample(x); }, x0, 19);
    check_input_gradient([](const ag::Var& x) { return ag::rms_per_channel(x); }, x0, 20);
    check_input_gradient([&](const ag::Var& x) { return ag::mean_abs_diff(x, c); }, x0, 21);
    check_input_gradient([](const ag::Var& x) { return ag::concat_channels(x, ag::scale(x, 2.0)); }, x0, 22);
    check_input_gradient([](const ag::Var& x) { return ag::pixel_shuffle(ag::concat_channels(x, x), 1); }, x0, 23);
  }

  TEST_CASE("pixel shuffle layout") {
    Tensor x({1, 1, 1, 8});
    for (int i = 0; i < 8; ++i) x.at(0, 0, 0, i) = i;
    const Tensor y = ag::pixel_shuffle(ag::constant(x), 2)->value;
    REQUIRE(y.shape() == Tensor::Shape{1, 2, 2, 2});
    for (int ch = 0; ch < 2; ++ch)
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) CHECK(y.at(0, i, j, ch) == ch * 4 + i * 2 + j);
  }

  TEST_CASE("haar_hh op agrees with the image-level HH band") {
    const ImageTensor img = random_image(6, 8, 24);
    const Tensor hh = ag::haar_hh(ag::constant(img.to_tensor()))->value;
    const ImageTensor ref = extract_hh(img);
    CHECK(max_abs_diff(hh, ref.to_tensor()) < 1e-15);
  }

  TEST_CASE("gram op agrees with an explicit triple loop") {
    const Tensor f = random_tensor({1, 3, 5, 4}, 25);
    const Tensor g = ag::gram(ag::constant(f))->value;
    const auto naive = naive_gram(f);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) CHECK(g.at(0, i, j, 0) == doctest::Approx(naive[i][j]).epsilon(1e-12));
  }

  TEST_CASE("gradients accumulate across shared uses") {
    ag::Var x = ag::leaf(Tensor({1, 1, 1, 1}, 3.0));
    ag::backward(ag::sum(ag::add(x, ag::scale(x, 2.0))));
    CHECK(x->grad.item() == doctest::Approx(3.0));
  }

  TEST_CASE("constants record no graph") {
    ag::Var y = ag::relu(ag::constant(random_tensor({1, 2, 2, 1}, 26)));
    CHECK_FALSE(y->requires_grad);
    CHECK(y->parents.empty());
  }

  TEST_CASE("shape errors") {
    const ag::Var x = ag::constant(Tensor({1, 1, 1, 3}));
    CHECK_THROWS_AS(ag::avg_pool2(x), ArgumentError);
    CHECK_THROWS_AS(ag::conv2d(x, ag::constant(Tensor({3, 3, 2, 1})), nullptr, 1, 1, ag::Padding::Zero),
                    ArgumentError);
    CHECK_THROWS_AS(ag::add(x, ag::constant(Tensor({1, 1, 2, 3}))), ArgumentError);
  }
}
