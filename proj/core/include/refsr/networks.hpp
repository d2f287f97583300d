#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "refsr/autograd.hpp"
#include "refsr/checkpoint.hpp"
#include "refsr/image.hpp"
#include "refsr/matching.hpp"

namespace refsr {

/// Feature upscaler: head 3x3 conv (3 -> width), `blocks` residual blocks
/// (conv-ReLU-conv plus identity), a body conv with a long skip from the head,
/// then log2(s) sub-pixel stages (conv width -> 4*width, 2x pixel shuffle, conv).
/// No normalization layers.
struct UpscalerConfig {
  int s = 8;
  int width = 64;
  int blocks = 8;
};

/// Fusion head: H_Res = entry conv over [F_SR, F_T] followed by residual blocks;
/// the result is added to F_SR and reconstructed to RGB by one 3x3 conv (H_Rec).
struct FusionConfig {
  int width = 64;
  int transfer_channels = 16;
  int blocks = 4;
};

/// Degrader: log2(s) stages of 6x6 stride-2 convolutions (replicate padding 2),
/// leaky ReLU between stages, the last stage linear to RGB.
struct DegraderConfig {
  int s = 8;
  int width = 32;
};

/// WGAN critic: `stages` stride-2 3x3 convs with widths doubling from `base_width`,
/// leaky ReLU, global average pooling and a linear layer to one unbounded score.
struct CriticConfig {
  int base_width = 32;
  int stages = 5;
};

inline constexpr double kLeakySlope = 0.2;

NetworkParams init_upscaler(const UpscalerConfig& cfg, std::uint64_t seed);
NetworkParams init_fusion(const FusionConfig& cfg, std::uint64_t seed);
NetworkParams init_degrader(const DegraderConfig& cfg, std::uint64_t seed);
NetworkParams init_critic(const CriticConfig& cfg, std::uint64_t seed);

UpscalerConfig upscaler_config(const NetworkParams& p);
FusionConfig fusion_config(const NetworkParams& p);
DegraderConfig degrader_config(const NetworkParams& p);
CriticConfig critic_config(const NetworkParams& p);

/// ConfigurationError unless p.arch_id == arch.
void require_arch(const NetworkParams& p, const std::string& arch);

/// Graph variables for every array of a parameter set.
class BoundParams {
 public:
  BoundParams(const NetworkParams& params, bool trainable);

  const NetworkParams& params() const { return *params_; }
  const ag::Var& operator[](const std::string& name) const;
  /// Accumulated gradients keyed like the arrays (zeros where nothing flowed).
  std::map<std::string, Tensor> gradients() const;

 private:
  const NetworkParams* params_;
  std::map<std::string, ag::Var> vars_;
};

/// (N,h,w,3) -> (N,s*h,s*w,width)
ag::Var upscaler_forward(const BoundParams& net, const ag::Var& lr);
/// Unclamped RGB (N,H,W,3).
ag::Var fusion_forward(const BoundParams& net, const ag::Var& f_sr, const ag::Var& f_t);
/// (N,H,W,3) -> (N,H/s,W/s,3), unclamped.
ag::Var degrader_forward(const BoundParams& net, const ag::Var& hr);
/// (N,H,W,3) -> (N,1,1,1)
ag::Var critic_forward(const BoundParams& net, const ag::Var& img);

/// Per-sample input gradients of the critic, d D(x_n) / d x_n, stacked like x.
Tensor critic_input_gradient(const NetworkParams& critic, const Tensor& x);

/// Directional derivative of the critic at x along v, per sample: (N,1,1,1).
/// The graph depends on the critic parameters in `net` (leaky ReLU slopes are
/// taken from the primal pass and held fixed), so its backward pass yields the
/// parameter gradient of <grad_x D(x), v>.
ag::Var critic_directional_derivative(const BoundParams& net, const Tensor& x, const Tensor& v);

// Value-level entry points. Inputs are single images.

Tensor upscale_features(const ImageTensor& lr, const NetworkParams& params);
/// Clamped RGB result of the fusion head.
ImageTensor fuse_reconstruct(const Tensor& f_sr, const TransferredFeature& f_t, const NetworkParams& params);
/// Raw (unclamped) degrader output.
ImageTensor degrade_net(const ImageTensor& img, const NetworkParams& params);
double discriminate(const ImageTensor& img, const NetworkParams& params);

struct LayerInfo {
  std::string name;
  std::string kind;  // conv, relu, leaky_relu, pixel_shuffle, residual_add, concat, global_avg_pool, linear
};

/// Layer sequence of a network, in execution order.
std::vector<LayerInfo> describe_layers(const NetworkParams& params);

}  // namespace refsr
