#include "refsr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "refsr/errors.hpp"

namespace refsr {

namespace {
std::size_t element_count(const Tensor::Shape& s) {
  for (int d : s)
    if (d < 0) throw ArgumentError("negative tensor dimension in " + shape_string(s));
  return static_cast<std::size_t>(s[0]) * s[1] * s[2] * s[3];
}
}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(element_count(shape), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != element_count(shape_))
    throw ArgumentError("tensor data size " + std::to_string(data_.size()) +
                        " does not match shape " + shape_string(shape_));
}

double Tensor::item() const {
  if (data_.size() != 1) throw ArgumentError("item() on non-scalar tensor " + shape_string(shape_));
  return data_[0];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
  if (!same_shape(other))
    throw ArgumentError("shape mismatch in +=: " + shape_string(shape_) + " vs " +
                        shape_string(other.shape_));
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Tensor Tensor::slice_batch(int n) const {
  if (n < 0 || n >= shape_[0]) throw ArgumentError("batch index out of range");
  const std::size_t per = static_cast<std::size_t>(shape_[1]) * shape_[2] * shape_[3];
  Tensor out({1, shape_[1], shape_[2], shape_[3]});
  std::memcpy(out.data(), data_.data() + per * n, per * sizeof(double));
  return out;
}

Tensor Tensor::stack(std::span<const Tensor> items) {
  if (items.empty()) throw ArgumentError("stack of zero tensors");
  Shape s = items.front().shape();
  int total = 0;
  for (const Tensor& t : items) {
    if (t.h() != s[1] || t.w() != s[2] || t.c() != s[3])
      throw ArgumentError("stack: inconsistent shapes " + shape_string(s) + " vs " +
                          shape_string(t.shape()));
    total += t.n();
  }
  s[0] = total;
  Tensor out(s);
  std::size_t offset = 0;
  for (const Tensor& t : items) {
    std::copy(t.storage().begin(), t.storage().end(), out.storage().begin() + offset);
    offset += t.size();
  }
  return out;
}

double Tensor::min() const {
  if (data_.empty()) throw ArgumentError("min of empty tensor");
  return *std::min_element(data_.begin(), data_.end());
}

double Tensor::max() const {
  if (data_.empty()) throw ArgumentError("max of empty tensor");
  return *std::max_element(data_.begin(), data_.end());
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string shape_string(const Tensor::Shape& s) {
  return "(" + std::to_string(s[0]) + "," + std::to_string(s[1]) + "," + std::to_string(s[2]) +
         "," + std::to_string(s[3]) + ")";
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw ArgumentError("max_abs_diff shape mismatch " + shape_string(a.shape()) + " vs " +
                        shape_string(b.shape()));
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace refsr
