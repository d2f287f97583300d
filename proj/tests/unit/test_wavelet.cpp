#include <doctest.h>

#include "refsr/errors.hpp"
#include "refsr/wavelet.hpp"
#include "synthetic.hpp"

using namespace refsr;
using namespace refsr::testing;

namespace {

double energy(const ImageTensor& img) {
  double e = 0.0;
  for (double v : img.data) e += v * v;
  return e;
}

double dot(const ImageTensor& a, const ImageTensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

ImageTensor combine(const ImageTensor& a, double ka, const ImageTensor& b, double kb) {
  ImageTensor out = a;
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = ka * a.data[i] + kb * b.data[i];
  return out;
}

ImageTensor signed_random(int h, int w, std::uint64_t seed) {
  ImageTensor img = random_image(h, w, seed);
  for (double& v : img.data) v = 2.0 * v - 1.0;
  return img;
}

}  // namespace

TEST_SUITE("wavelet") {
  TEST_CASE("band formulas on a single block") {
    ImageTensor img(2, 2, 1);
    img.at(0, 0, 0) = 1.0;  // a
    img.at(0, 1, 0) = 2.0;  // b
    img.at(1, 0, 0) = 3.0;  // c
    img.at(1, 1, 0) = 5.0;  // d
    const WaveletBands b = haar_forward(img);
    CHECK(b.ll.at(0, 0, 0) == doctest::Approx(5.5));
    CHECK(b.lh.at(0, 0, 0) == doctest::Approx(1.5));
    CHECK(b.hl.at(0, 0, 0) == doctest::Approx(2.5));
    CHECK(b.hh.at(0, 0, 0) == doctest::Approx(0.5));
  }

  TEST_CASE("perfect reconstruction and energy conservation") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const ImageTensor img = random_image(2 * (1 + seed % 5), 2 * (2 + seed % 3), seed);
      const WaveletBands b = haar_forward(img);
      const ImageTensor rec = haar_inverse(b);
      for (std::size_t i = 0; i < img.size(); ++i) CHECK(rec.data[i] == doctest::Approx(img.data[i]).epsilon(1e-12));
      const double e = energy(b.ll) + energy(b.lh) + energy(b.hl) + energy(b.hh);
      CHECK(std::abs(e - energy(img)) / energy(img) < 1e-12);
    }
  }

  TEST_CASE("linearity") {
    const ImageTensor x = random_image(8, 6, 1), y = random_image(8, 6, 2);
    const WaveletBands fx = haar_forward(x), fy = haar_forward(y);
    const WaveletBands fxy = haar_forward(combine(x, 0.7, y, -1.9));
    const auto check_band = [](const ImageTensor& got, const ImageTensor& a, const ImageTensor& b) {
      const ImageTensor want = combine(a, 0.7, b, -1.9);
      for (std::size_t i = 0; i < got.size(); ++i) CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-9));
    };
    check_band(fxy.ll, fx.ll, fy.ll);
    check_band(fxy.lh, fx.lh, fy.lh);
    check_band(fxy.hl, fx.hl, fy.hl);
    check_band(fxy.hh, fx.hh, fy.hh);
  }

  TEST_CASE("adjoint passes the dot-product test") {
    const ImageTensor x = random_image(10, 12, 3);
    const WaveletBands y{signed_random(5, 6, 4), signed_random(5, 6, 5), signed_random(5, 6, 6),
                         signed_random(5, 6, 7)};
    const WaveletBands fx = haar_forward(x);
    const double lhs = dot(fx.ll, y.ll) + dot(fx.lh, y.lh) + dot(fx.hl, y.hl) + dot(fx.hh, y.hh);
    const double rhs = dot(x, haar_adjoint(y));
    CHECK(std::abs(lhs - rhs) < 1e-12);
  }

  TEST_CASE("HH ignores constant offsets and stays in range") {
    const ImageTensor x = random_image(12, 8, 8);
    const ImageTensor hh = extract_hh(x);
    for (double c : {-3.0, 0.25, 17.0}) {
      ImageTensor shifted = x;
      for (double& v : shifted.data) v += c;
      const ImageTensor hs = extract_hh(shifted);
      for (std::size_t i = 0; i < hh.size(); ++i) CHECK(std::abs(hs.data[i] - hh.data[i]) < 1e-12);
    }
    for (double v : hh.data) {
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
    }
    const ImageTensor r = remap_hh(hh);
    CHECK(r.in_unit_range());
    CHECK(r.data[3] == doctest::Approx(hh.data[3] * kHhRemapScale + kHhRemapOffset));
  }

  TEST_CASE("odd sizes are rejected") {
    CHECK_THROWS_AS(haar_forward(random_image(3, 4, 9)), ArgumentError);
    CHECK_THROWS_AS(extract_hh(random_image(4, 5, 9)), ArgumentError);
  }
}
