#include "refsr/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <opencv2/imgcodecs.hpp>
#include <string>

#include "refsr/errors.hpp"

namespace refsr {

ImageTensor::ImageTensor(int h, int w, int c, double fill)
    : height(h),
      width(w),
      channels(c),
      color_space(c == 1 ? ColorSpace::LUMA : ColorSpace::RGB),
      data(static_cast<std::size_t>(h) * w * c, fill) {}

Tensor ImageTensor::to_tensor() const { return Tensor({1, height, width, channels}, data); }

ImageTensor ImageTensor::from_tensor(const Tensor& t, int batch_index, ColorSpace cs) {
  Tensor s = t.n() == 1 ? t : t.slice_batch(batch_index);
  ImageTensor img;
  img.height = s.h();
  img.width = s.w();
  img.channels = s.c();
  img.color_space = cs;
  img.data = std::move(s.storage());
  return img;
}

ImageTensor ImageTensor::channel(int ch) const {
  ImageTensor out(height, width, 1);
  for (std::size_t p = 0; p < out.data.size(); ++p) out.data[p] = data[p * channels + ch];
  return out;
}

void ImageTensor::clamp01() {
  for (double& v : data) v = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
}

bool ImageTensor::in_unit_range() const {
  return std::all_of(data.begin(), data.end(),
                     [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; });
}

void check_image(const ImageTensor& img, const char* what) {
  if (img.height < 1 || img.width < 1)
    throw ArgumentError(std::string(what) + ": empty image");
  if (img.channels != 1 && img.channels != 3)
    throw ArgumentError(std::string(what) + ": channel count must be 1 or 3, got " +
                        std::to_string(img.channels));
  if (img.data.size() != static_cast<std::size_t>(img.height) * img.width * img.channels)
    throw ArgumentError(std::string(what) + ": data size does not match dims");
}

namespace {

bool supported_extension(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".tif" || ext == ".tiff";
}

double cubic(double x) {
  // Keys kernel with a = -0.5.
  const double ax = std::abs(x);
  const double ax2 = ax * ax, ax3 = ax2 * ax;
  if (ax <= 1.0) return 1.5 * ax3 - 2.5 * ax2 + 1.0;
  if (ax < 2.0) return -0.5 * ax3 + 2.5 * ax2 - 4.0 * ax + 2.0;
  return 0.0;
}

struct Taps {
  int count = 0;
  std::vector<int> index;     // out_len * count, already clamped
  std::vector<double> weight;  // out_len * count, normalised
};

Taps contributions(int in_len, int out_len, double scale) {
  const bool shrink = scale < 1.0;
  const double kernel_width = shrink ? 4.0 / scale : 4.0;
  Taps t;
  t.count = static_cast<int>(std::ceil(kernel_width)) + 2;
  t.index.resize(static_cast<std::size_t>(out_len) * t.count);
  t.weight.resize(t.index.size());
  for (int j = 0; j < out_len; ++j) {
    // 1-based output coordinate mapped back into input space.
    const double u = (j + 1) / scale + 0.5 * (1.0 - 1.0 / scale);
    const int left = static_cast<int>(std::floor(u - kernel_width / 2.0));
    double total = 0.0;
    for (int p = 0; p < t.count; ++p) {
      const int idx = left + p;
      const double d = u - idx;
      const double w = shrink ? scale * cubic(scale * d) : cubic(d);
      t.index[j * t.count + p] = std::clamp(idx - 1, 0, in_len - 1);
      t.weight[j * t.count + p] = w;
      total += w;
    }
    for (int p = 0; p < t.count; ++p) t.weight[j * t.count + p] /= total;
  }
  return t;
}

ImageTensor resize_rows(const ImageTensor& in, int out_h, double scale) {
  const Taps t = contributions(in.height, out_h, scale);
  ImageTensor out(out_h, in.width, in.channels);
  out.color_space = in.color_space;
  const std::size_t row = static_cast<std::size_t>(in.width) * in.channels;
  for (int y = 0; y < out_h; ++y) {
    double* dst = out.data.data() + y * row;
    for (int p = 0; p < t.count; ++p) {
      const double w = t.weight[y * t.count + p];
      if (w == 0.0) continue;
      const double* src = in.data.data() + t.index[y * t.count + p] * row;
      for (std::size_t i = 0; i < row; ++i) dst[i] += w * src[i];
    }
  }
  return out;
}

ImageTensor resize_cols(const ImageTensor& in, int out_w, double scale) {
  const Taps t = contributions(in.width, out_w, scale);
  ImageTensor out(in.height, out_w, in.channels);
  out.color_space = in.color_space;
  const int C = in.channels;
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < out_w; ++x)
      for (int p = 0; p < t.count; ++p) {
        const double w = t.weight[x * t.count + p];
        if (w == 0.0) continue;
        const int sx = t.index[x * t.count + p];
        for (int c = 0; c < C; ++c) out.at(y, x, c) += w * in.at(y, sx, c);
      }
  return out;
}

void check_scale(int s, const char* what) {
  if (s != 2 && s != 4 && s != 8 && s != 16)
    throw ArgumentError(std::string(what) + ": scale must be one of {2,4,8,16}, got " +
                        std::to_string(s));
}

}  // namespace

ImageTensor load_image(const std::filesystem::path& path) {
  {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw IoError("cannot read image file '" + path.string() + "'");
  }
  if (!supported_extension(path))
    throw FormatError("unsupported image format '" + path.extension().string() + "' for '" +
                      path.string() + "' (expected PNG, JPEG or TIFF)");
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw FormatError("could not decode image '" + path.string() + "'");

  double max_value;
  switch (m.depth()) {
    case CV_8U: max_value = 255.0; break;
    case CV_16U: max_value = 65535.0; break;
    default:
      throw FormatError("unsupported sample depth in '" + path.string() +
                        "' (need 8- or 16-bit integers)");
  }
  const int src_c = m.channels();
  if (src_c != 1 && src_c != 3 && src_c != 4)
    throw FormatError("unsupported channel count " + std::to_string(src_c) + " in '" +
                      path.string() + "'");

  ImageTensor img(m.rows, m.cols, 3);
  img.color_space = ColorSpace::RGB;
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) {
      for (int c = 0; c < 3; ++c) {
        // OpenCV stores BGR(A); grey is replicated.
        const int src = src_c == 1 ? 0 : 2 - c;
        const double v = m.depth() == CV_8U
                             ? m.ptr<std::uint8_t>(y)[x * src_c + src]
                             : m.ptr<std::uint16_t>(y)[x * src_c + src];
        img.at(y, x, c) = v / max_value;
      }
    }
  }
  return img;
}

void save_image(const ImageTensor& img, const std::filesystem::path& path, int bit_depth) {
  check_image(img, "save_image");
  if (!supported_extension(path))
    throw FormatError("unsupported output format '" + path.extension().string() + "'");
  if (bit_depth != 8 && bit_depth != 16) throw ArgumentError("bit depth must be 8 or 16");
  const int type = bit_depth == 8 ? CV_MAKETYPE(CV_8U, img.channels)
                                  : CV_MAKETYPE(CV_16U, img.channels);
  const double max_value = bit_depth == 8 ? 255.0 : 65535.0;
  cv::Mat m(img.height, img.width, type);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        const int dst = img.channels == 1 ? 0 : 2 - c;
        const double v = std::clamp(img.at(y, x, c), 0.0, 1.0) * max_value;
        const long q = std::lround(v);
        if (bit_depth == 8)
          m.ptr<std::uint8_t>(y)[x * img.channels + dst] = static_cast<std::uint8_t>(q);
        else
          m.ptr<std::uint16_t>(y)[x * img.channels + dst] = static_cast<std::uint16_t>(q);
      }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), m)) throw IoError("failed to write image '" + path.string() + "'");
}

ImageTensor bicubic_resize(const ImageTensor& img, Rational factor) {
  check_image(img, "bicubic_resize");
  if (factor.num <= 0 || factor.den <= 0) throw ArgumentError("bicubic_resize: factor must be > 0");
  const double f = factor.value();
  const int out_h = static_cast<int>(std::lround(img.height * f));
  const int out_w = static_cast<int>(std::lround(img.width * f));
  if (out_h < 1 || out_w < 1)
    throw ArgumentError("bicubic_resize: output dimension would be 0 for " +
                        std::to_string(img.height) + "x" + std::to_string(img.width) +
                        " at factor " + std::to_string(factor.num) + "/" + std::to_string(factor.den));
  if (factor.num == factor.den) return img;
  ImageTensor out = resize_cols(resize_rows(img, out_h, f), out_w, f);
  out.clamp01();
  return out;
}

ImageTensor degrade_bicubic(const ImageTensor& hr, int s) {
  check_scale(s, "degrade_bicubic");
  check_image(hr, "degrade_bicubic");
  if (hr.height % s != 0 || hr.width % s != 0)
    throw ArgumentError("degrade_bicubic: " + std::to_string(hr.height) + "x" +
                        std::to_string(hr.width) + " not divisible by " + std::to_string(s) +
                        " (crop with crop_aligned first)");
  return bicubic_resize(hr, {1, s});
}

ImageTensor down_up(const ImageTensor& img, int s) {
  return bicubic_resize(degrade_bicubic(img, s), {s, 1});
}

ImageTensor crop(const ImageTensor& img, int y, int x, int h, int w) {
  if (y < 0 || x < 0 || h < 1 || w < 1 || y + h > img.height || x + w > img.width)
    throw ArgumentError("crop rectangle outside image");
  ImageTensor out(h, w, img.channels);
  out.color_space = img.color_space;
  const std::size_t row = static_cast<std::size_t>(w) * img.channels;
  for (int r = 0; r < h; ++r)
    std::copy_n(img.data.begin() + img.index(y + r, x, 0), row, out.data.begin() + r * row);
  return out;
}

ImageTensor crop_aligned(const ImageTensor& img, int s) {
  check_image(img, "crop_aligned");
  if (s < 1) throw ArgumentError("crop_aligned: s must be positive");
  const int h = img.height / s * s;
  const int w = img.width / s * s;
  if (h == 0 || w == 0)
    throw ArgumentError("crop_aligned: " + std::to_string(img.height) + "x" +
                        std::to_string(img.width) + " has no " + std::to_string(s) +
                        "-aligned crop");
  if (h == img.height && w == img.width) return img;
  return crop(img, (img.height - h) / 2, (img.width - w) / 2, h, w);
}

}  // namespace refsr
