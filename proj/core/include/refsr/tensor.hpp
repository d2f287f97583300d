#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace refsr {

/// Dense 4-D array of doubles in NHWC order (batch, rows, columns, channels).
/// Convolution weights reuse the same container as (kh, kw, c_in, c_out).
class Tensor {
 public:
  using Shape = std::array<int, 4>;

  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(shape, 0.0); }
  static Tensor scalar(double v) { return Tensor({1, 1, 1, 1}, v); }

  const Shape& shape() const noexcept { return shape_; }
  int n() const noexcept { return shape_[0]; }
  int h() const noexcept { return shape_[1]; }
  int w() const noexcept { return shape_[2]; }
  int c() const noexcept { return shape_[3]; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  std::size_t index(int n, int y, int x, int ch) const noexcept {
    return ((static_cast<std::size_t>(n) * shape_[1] + y) * shape_[2] + x) * shape_[3] + ch;
  }
  double& at(int n, int y, int x, int ch) noexcept { return data_[index(n, y, x, ch)]; }
  double at(int n, int y, int x, int ch) const noexcept { return data_[index(n, y, x, ch)]; }

  double item() const;
  void fill(double v);
  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double s);

  /// Sample `n` as a tensor of batch size 1.
  Tensor slice_batch(int n) const;
  static Tensor stack(std::span<const Tensor> items);

  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }
  double min() const;
  double max() const;
  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_{0, 0, 0, 0};
  std::vector<double> data_;
};

std::string shape_string(const Tensor::Shape& s);

/// Largest absolute elementwise difference; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace refsr
