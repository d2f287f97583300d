#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "refsr/tensor.hpp"

/// Minimal reverse-mode automatic differentiation over NHWC tensors.
///
/// A graph is built eagerly as ops execute. Nodes that do not depend on any
/// trainable leaf record nothing, so inference and frozen sub-networks cost no
/// graph memory. All arithmetic is double precision.
namespace refsr::ag {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;

  void accumulate(const Tensor& g);
  /// Gradient buffer, allocated to zeros if needed.
  Tensor& grad_buffer();
};

/// Leaf that never receives gradients.
Var constant(Tensor value);
/// Leaf that accumulates gradients.
Var leaf(Tensor value, bool requires_grad = true);

/// Backpropagates from a scalar root. Gradients accumulate into leaves.
void backward(const Var& root);

enum class Padding { Zero, Replicate };

/// x: (N,H,W,Ci), w: (k,k,Ci,Co), b: (1,1,1,Co) or nullptr.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad, Padding mode);

Var relu(const Var& x);
Var leaky_relu(const Var& x, double slope);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& x, double s);
/// a*x + b elementwise.
Var affine(const Var& x, double a, double b);
/// Elementwise product with a constant tensor of the same shape.
Var mul_const(const Var& x, const Tensor& m);
Var sub_const(const Var& x, const Tensor& c);

Var avg_pool2(const Var& x);
Var max_pool2(const Var& x);
/// (N,H,W,C*r*r) -> (N,H*r,W*r,C); input channel c*r*r + i*r + j lands at (y*r+i, x*r+j, c).
Var pixel_shuffle(const Var& x, int r);
Var concat_channels(const Var& a, const Var& b);
/// Per-sample spatial mean: (N,H,W,C) -> (N,1,1,C).
Var global_avg_pool(const Var& x);

/// Haar HH sub-band, stride 2: (a - b - c + d) / 2 over each 2x2 block [[a,b],[c,d]].
Var haar_hh(const Var& x);

/// Per-sample Gram matrix with 1/P normalisation: (N,H,W,C) -> (N,C,C,1).
Var gram(const Var& x);

/// Per-sample root-mean-square over all non-batch elements: (N,...) -> (N,1,1,1).
Var rms_per_sample(const Var& x);
/// Per-sample, per-channel RMS over spatial positions: (N,H,W,C) -> (N,1,1,C).
Var rms_per_channel(const Var& x);

/// Mean of |x - target| over all elements.
Var mean_abs_diff(const Var& x, const Tensor& target);
Var mean(const Var& x);
Var sum(const Var& x);

}  // namespace refsr::ag
