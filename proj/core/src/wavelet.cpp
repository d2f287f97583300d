#include "refsr/wavelet.hpp"

#include <string>

#include "refsr/errors.hpp"

namespace refsr {

namespace {

void require_even(const ImageTensor& img, const char* what) {
  check_image(img, what);
  if (img.height % 2 != 0 || img.width % 2 != 0)
    throw ArgumentError(std::string(what) + ": dims must be even, got " +
                        std::to_string(img.height) + "x" + std::to_string(img.width));
}

ImageTensor band_like(const ImageTensor& img) {
  ImageTensor b(img.height / 2, img.width / 2, img.channels);
  b.color_space = img.color_space;
  return b;
}

}  // namespace

WaveletBands haar_forward(const ImageTensor& img) {
  require_even(img, "haar_forward");
  WaveletBands out{band_like(img), band_like(img), band_like(img), band_like(img)};
  for (int y = 0; y < img.height / 2; ++y)
    for (int x = 0; x < img.width / 2; ++x)
      for (int c = 0; c < img.channels; ++c) {
        const double a = img.at(2 * y, 2 * x, c);
        const double b = img.at(2 * y, 2 * x + 1, c);
        const double cc = img.at(2 * y + 1, 2 * x, c);
        const double d = img.at(2 * y + 1, 2 * x + 1, c);
        out.ll.at(y, x, c) = 0.5 * (a + b + cc + d);
        out.lh.at(y, x, c) = 0.5 * (-a + b - cc + d);
        out.hl.at(y, x, c) = 0.5 * (-a - b + cc + d);
        out.hh.at(y, x, c) = 0.5 * (a - b - cc + d);
      }
  return out;
}

ImageTensor haar_inverse(const WaveletBands& bands) {
  const ImageTensor& ll = bands.ll;
  for (const ImageTensor* b : {&bands.lh, &bands.hl, &bands.hh})
    if (b->height != ll.height || b->width != ll.width || b->channels != ll.channels)
      throw ArgumentError("haar_inverse: bands differ in shape");
  check_image(ll, "haar_inverse");
  ImageTensor out(ll.height * 2, ll.width * 2, ll.channels);
  out.color_space = ll.color_space;
  for (int y = 0; y < ll.height; ++y)
    for (int x = 0; x < ll.width; ++x)
      for (int c = 0; c < ll.channels; ++c) {
        const double s = ll.at(y, x, c), h = bands.lh.at(y, x, c);
        const double v = bands.hl.at(y, x, c), d = bands.hh.at(y, x, c);
        out.at(2 * y, 2 * x, c) = 0.5 * (s - h - v + d);
        out.at(2 * y, 2 * x + 1, c) = 0.5 * (s + h - v - d);
        out.at(2 * y + 1, 2 * x, c) = 0.5 * (s - h + v - d);
        out.at(2 * y + 1, 2 * x + 1, c) = 0.5 * (s + h + v + d);
      }
  return out;
}

ImageTensor haar_adjoint(const WaveletBands& bands) { return haar_inverse(bands); }

ImageTensor extract_hh(const ImageTensor& img) {
  require_even(img, "extract_hh");
  ImageTensor hh = band_like(img);
  for (int y = 0; y < hh.height; ++y)
    for (int x = 0; x < hh.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        hh.at(y, x, c) = 0.5 * (img.at(2 * y, 2 * x, c) - img.at(2 * y, 2 * x + 1, c) -
                                img.at(2 * y + 1, 2 * x, c) + img.at(2 * y + 1, 2 * x + 1, c));
  return hh;
}

ImageTensor remap_hh(const ImageTensor& hh) {
  ImageTensor out = hh;
  for (double& v : out.data) v = kHhRemapScale * v + kHhRemapOffset;
  return out;
}

}  // namespace refsr
