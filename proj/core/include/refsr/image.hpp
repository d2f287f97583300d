#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "refsr/tensor.hpp"

namespace refsr {

enum class ColorSpace { RGB, LUMA };

/// H x W x C image, channel-last, C in {1, 3}.
///
/// Operations in the imaging module keep values finite and inside [0, 1] by
/// clamping after every resample. A few producers outside this module (wavelet
/// synthesis, training-time network outputs) hand back unclamped images on purpose.
struct ImageTensor {
  int height = 0;
  int width = 0;
  int channels = 0;
  ColorSpace color_space = ColorSpace::RGB;
  std::vector<double> data;

  ImageTensor() = default;
  ImageTensor(int h, int w, int c, double fill = 0.0);

  std::size_t size() const noexcept { return data.size(); }
  std::size_t index(int y, int x, int ch) const noexcept {
    return (static_cast<std::size_t>(y) * width + x) * channels + ch;
  }
  double& at(int y, int x, int ch) noexcept { return data[index(y, x, ch)]; }
  double at(int y, int x, int ch) const noexcept { return data[index(y, x, ch)]; }

  /// Batch-of-one NHWC tensor view (copy).
  Tensor to_tensor() const;
  static ImageTensor from_tensor(const Tensor& t, int batch_index = 0,
                                 ColorSpace cs = ColorSpace::RGB);

  ImageTensor channel(int ch) const;
  void clamp01();
  bool in_unit_range() const;

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;
};

/// Validates the structural invariants (H, W >= 1, C in {1,3}).
void check_image(const ImageTensor& img, const char* what);

/// Positive rational scale factor num/den.
struct Rational {
  std::int64_t num = 1;
  std::int64_t den = 1;
  double value() const noexcept { return static_cast<double>(num) / static_cast<double>(den); }
};

ImageTensor load_image(const std::filesystem::path& path);

/// Writes PNG (8 or 16 bit), JPEG or TIFF depending on extension; values are clamped.
void save_image(const ImageTensor& img, const std::filesystem::path& path, int bit_depth = 8);

/// Keys cubic (a = -0.5) resampling, anti-aliased when shrinking, edge-replicated borders.
/// Output dims are round(H * factor) x round(W * factor).
ImageTensor bicubic_resize(const ImageTensor& img, Rational factor);

/// Fixed HR -> LR operator: bicubic_resize by 1/s. s in {2,4,8,16}; dims must divide by s.
ImageTensor degrade_bicubic(const ImageTensor& hr, int s);

/// Bicubic down by s, then up by s. Same dims as the input.
ImageTensor down_up(const ImageTensor& img, int s);

/// Center crop so that H and W are multiples of s.
ImageTensor crop_aligned(const ImageTensor& img, int s);

/// Crop of the rectangle [y, y+h) x [x, x+w).
ImageTensor crop(const ImageTensor& img, int y, int x, int h, int w);

}  // namespace refsr
