#include "refsr/networks.hpp"

#include <bit>
#include <cmath>

#include "refsr/errors.hpp"
#include "refsr/rng.hpp"

namespace refsr {

namespace {

int log2_scale(int s) {
  if (s < 2 || s > 16 || !std::has_single_bit(static_cast<unsigned>(s)))
    throw ConfigurationError("scale " + std::to_string(s) + " is not a power of two in 2..16");
  return std::countr_zero(static_cast<unsigned>(s));
}

void require_positive(int v, const char* what) {
  if (v < 1) throw ConfigurationError(std::string(what) + " must be positive");
}

// Gain for convolutions not followed by a rectifier.
const double kLinearGain = std::sqrt(0.5);

class Initializer {
 public:
  Initializer(NetworkParams& p, std::uint64_t seed) : p_(p), rng_(seed) {}

  void conv(const std::string& name, int k, int cin, int cout, double gain = 1.0, bool bias = true) {
    Tensor w({k, k, cin, cout});
    const double stddev = gain * std::sqrt(2.0 / (static_cast<double>(k) * k * cin));
    for (double& v : w.storage()) v = rng_.normal() * stddev;
    p_.arrays[name + ".weight"] = std::move(w);
    if (bias) p_.arrays[name + ".bias"] = Tensor({1, 1, 1, cout});
  }

 private:
  NetworkParams& p_;
  Rng rng_;
};

ag::Var conv(const BoundParams& net, const std::string& name, const ag::Var& x, int stride = 1,
             ag::Padding mode = ag::Padding::Zero) {
  const ag::Var& w = net[name + ".weight"];
  const int k = w->value.n();
  return ag::conv2d(x, w, net[name + ".bias"], stride, (k - 1) / 2, mode);
}

ag::Var residual_block(const BoundParams& net, const std::string& name, const ag::Var& x) {
  ag::Var h = ag::relu(conv(net, name + ".conv1", x));
  return ag::add(x, conv(net, name + ".conv2", h));
}

std::string block_name(int i) { return "block" + std::to_string(i); }

void require_rgb_batch(const ag::Var& x, const char* what) {
  if (x->value.c() != 3) throw ArgumentError(std::string(what) + ": expected 3-channel input, got " +
                                             shape_string(x->value.shape()));
}

ImageTensor single_image(const Tensor& t, bool clamp) {
  ImageTensor img = ImageTensor::from_tensor(t);
  if (clamp) img.clamp01();
  return img;
}

}  // namespace

void require_arch(const NetworkParams& p, const std::string& arch) {
  if (p.arch_id != arch)
    throw ConfigurationError("expected '" + arch + "' parameters, got '" + p.arch_id + "'");
}

// ---------------------------------------------------------------------------
// Initialisation and configs

NetworkParams init_upscaler(const UpscalerConfig& cfg, std::uint64_t seed) {
  const int stages = log2_scale(cfg.s);
  require_positive(cfg.width, "upscaler width");
  if (cfg.blocks < 0) throw ConfigurationError("upscaler block count must be >= 0");
  NetworkParams p;
  p.arch_id = "upscaler";
  p.config = {{"s", cfg.s}, {"width", cfg.width}, {"blocks", cfg.blocks}};
  Initializer init(p, seed);
  const int w = cfg.width;
  init.conv("head", 3, 3, w, kLinearGain);
  for (int i = 0; i < cfg.blocks; ++i) {
    init.conv(block_name(i) + ".conv1", 3, w, w);
    init.conv(block_name(i) + ".conv2", 3, w, w, 0.1);
  }
  init.conv("body", 3, w, w, kLinearGain);
  for (int k = 0; k < stages; ++k) {
    init.conv("up" + std::to_string(k) + ".expand", 3, w, 4 * w, kLinearGain);
    init.conv("up" + std::to_string(k) + ".conv", 3, w, w, kLinearGain);
  }
  return p;
}

NetworkParams init_fusion(const FusionConfig& cfg, std::uint64_t seed) {
  require_positive(cfg.width, "fusion width");
  require_positive(cfg.transfer_channels, "fusion transfer_channels");
  if (cfg.blocks < 0) throw ConfigurationError("fusion block count must be >= 0");
  NetworkParams p;
  p.arch_id = "fusion";
  p.config = {{"width", cfg.width}, {"transfer_channels", cfg.transfer_channels}, {"blocks", cfg.blocks}};
  Initializer init(p, seed);
  const int w = cfg.width;
  init.conv("entry", 3, w + cfg.transfer_channels, w, kLinearGain);
  for (int i = 0; i < cfg.blocks; ++i) {
    init.conv(block_name(i) + ".conv1", 3, w, w);
    init.conv(block_name(i) + ".conv2", 3, w, w, 0.1);
  }
  init.conv("rec", 3, w, 3, kLinearGain);
  return p;
}

NetworkParams init_degrader(const DegraderConfig& cfg, std::uint64_t seed) {
  const int stages = log2_scale(cfg.s);
  require_positive(cfg.width, "degrader width");
  NetworkParams p;
  p.arch_id = "degrader";
  p.config = {{"s", cfg.s}, {"width", cfg.width}};
  Initializer init(p, seed);
  int cin = 3;
  for (int k = 0; k < stages; ++k) {
    const int cout = k + 1 == stages ? 3 : cfg.width;
    init.conv("stage" + std::to_string(k), 6, cin, cout, k + 1 == stages ? kLinearGain : 1.0);
    cin = cout;
  }
  return p;
}

NetworkParams init_critic(const CriticConfig& cfg, std::uint64_t seed) {
  require_positive(cfg.base_width, "critic base_width");
  require_positive(cfg.stages, "critic stages");
  if (cfg.stages > 10) throw ConfigurationError("critic stages must be <= 10");
  NetworkParams p;
  p.arch_id = "critic";
  p.config = {{"base_width", cfg.base_width}, {"stages", cfg.stages}};
  Initializer init(p, seed);
  int cin = 3;
  for (int k = 0; k < cfg.stages; ++k) {
    const int cout = cfg.base_width << k;
    init.conv("conv" + std::to_string(k), 3, cin, cout);
    cin = cout;
  }
  init.conv("linear", 1, cin, 1, kLinearGain);
  return p;
}

UpscalerConfig upscaler_config(const NetworkParams& p) {
  require_arch(p, "upscaler");
  try {
    return {p.config.at("s").get<int>(), p.config.at("width").get<int>(), p.config.at("blocks").get<int>()};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigurationError(std::string("upscaler config: ") + e.what());
  }
}

FusionConfig fusion_config(const NetworkParams& p) {
  require_arch(p, "fusion");
  try {
    return {p.config.at("width").get<int>(), p.config.at("transfer_channels").get<int>(),
            p.config.at("blocks").get<int>()};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigurationError(std::string("fusion config: ") + e.what());
  }
}

DegraderConfig degrader_config(const NetworkParams& p) {
  require_arch(p, "degrader");
  try {
    return {p.config.at("s").get<int>(), p.config.at("width").get<int>()};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigurationError(std::string("degrader config: ") + e.what());
  }
}

CriticConfig critic_config(const NetworkParams& p) {
  require_arch(p, "critic");
  try {
    return {p.config.at("base_width").get<int>(), p.config.at("stages").get<int>()};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigurationError(std::string("critic config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Binding

BoundParams::BoundParams(const NetworkParams& params, bool trainable) : params_(&params) {
  for (const auto& [name, t] : params.arrays) vars_[name] = trainable ? ag::leaf(t, true) : ag::constant(t);
}

const ag::Var& BoundParams::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end())
    throw ConfigurationError("parameter '" + name + "' missing from '" + params_->arch_id + "' params");
  return it->second;
}

std::map<std::string, Tensor> BoundParams::gradients() const {
  std::map<std::string, Tensor> out;
  for (const auto& [name, v] : vars_) out[name] = v->grad.empty() ? Tensor::zeros(v->value.shape()) : v->grad;
  return out;
}

// ---------------------------------------------------------------------------
// Forward passes

ag::Var upscaler_forward(const BoundParams& net, const ag::Var& lr) {
  const UpscalerConfig cfg = upscaler_config(net.params());
  require_rgb_batch(lr, "upscaler");
  ag::Var head = conv(net, "head", lr);
  ag::Var h = head;
  for (int i = 0; i < cfg.blocks; ++i) h = residual_block(net, block_name(i), h);
  h = ag::add(head, conv(net, "body", h));
  for (int k = 0; k < log2_scale(cfg.s); ++k) {
    const std::string name = "up" + std::to_string(k);
    h = conv(net, name + ".conv", ag::pixel_shuffle(conv(net, name + ".expand", h), 2));
  }
  return h;
}

ag::Var fusion_forward(const BoundParams& net, const ag::Var& f_sr, const ag::Var& f_t) {
  const FusionConfig cfg = fusion_config(net.params());
  const Tensor& a = f_sr->value;
  const Tensor& b = f_t->value;
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
    throw ArgumentError("fusion: spatial mismatch between F_SR " + shape_string(a.shape()) + " and F_T " +
                        shape_string(b.shape()));
  if (a.c() != cfg.width || b.c() != cfg.transfer_channels)
    throw ConfigurationError("fusion: expects " + std::to_string(cfg.width) + "+" +
                             std::to_string(cfg.transfer_channels) + " channels, got " + std::to_string(a.c()) +
                             "+" + std::to_string(b.c()));
  ag::Var h = conv(net, "entry", ag::concat_channels(f_sr, f_t));
  for (int i = 0; i < cfg.blocks; ++i) h = residual_block(net, block_name(i), h);
  return conv(net, "rec", ag::add(h, f_sr));
}

ag::Var degrader_forward(const BoundParams& net, const ag::Var& hr) {
  const DegraderConfig cfg = degrader_config(net.params());
  require_rgb_batch(hr, "degrader");
  if (hr->value.h() % cfg.s != 0 || hr->value.w() % cfg.s != 0)
    throw ArgumentError("degrader: input " + std::to_string(hr->value.h()) + "x" + std::to_string(hr->value.w()) +
                        " not divisible by s=" + std::to_string(cfg.s));
  const int stages = log2_scale(cfg.s);
  ag::Var h = hr;
  for (int k = 0; k < stages; ++k) {
    const std::string name = "stage" + std::to_string(k);
    h = ag::conv2d(h, net[name + ".weight"], net[name + ".bias"], 2, 2, ag::Padding::Replicate);
    if (k + 1 < stages) h = ag::leaky_relu(h, kLeakySlope);
  }
  return h;
}

ag::Var critic_forward(const BoundParams& net, const ag::Var& img) {
  const CriticConfig cfg = critic_config(net.params());
  require_rgb_batch(img, "critic");
  ag::Var h = img;
  for (int k = 0; k < cfg.stages; ++k) h = ag::leaky_relu(conv(net, "conv" + std::to_string(k), h, 2), kLeakySlope);
  return conv(net, "linear", ag::global_avg_pool(h));
}

Tensor critic_input_gradient(const NetworkParams& critic, const Tensor& x) {
  BoundParams net(critic, false);
  ag::Var xv = ag::leaf(x, true);
  ag::backward(ag::sum(critic_forward(net, xv)));
  return xv->grad.empty() ? Tensor::zeros(x.shape()) : xv->grad;
}

ag::Var critic_directional_derivative(const BoundParams& net, const Tensor& x, const Tensor& v) {
  const CriticConfig cfg = critic_config(net.params());
  if (!x.same_shape(v)) throw ArgumentError("critic_directional_derivative: direction shape mismatch");
  if (x.c() != 3) throw ArgumentError("critic: expected 3-channel input");
  Tensor h = x;
  ag::Var t = ag::constant(v);
  for (int k = 0; k < cfg.stages; ++k) {
    const std::string name = "conv" + std::to_string(k);
    const ag::Var& w = net[name + ".weight"];
    // Primal pre-activation, computed outside the graph.
    Tensor pre = ag::conv2d(ag::constant(h), ag::constant(w->value), ag::constant(net[name + ".bias"]->value), 2, 1,
                            ag::Padding::Zero)
                     ->value;
    Tensor slope(pre.shape());
    for (std::size_t i = 0; i < pre.size(); ++i) {
      slope.data()[i] = pre.data()[i] > 0.0 ? 1.0 : kLeakySlope;
      pre.data()[i] *= slope.data()[i];
    }
    h = std::move(pre);
    t = ag::mul_const(ag::conv2d(t, w, nullptr, 2, 1, ag::Padding::Zero), slope);
  }
  return ag::conv2d(ag::global_avg_pool(t), net["linear.weight"], nullptr, 1, 0, ag::Padding::Zero);
}

// ---------------------------------------------------------------------------
// Value-level entry points

Tensor upscale_features(const ImageTensor& lr, const NetworkParams& params) {
  require_arch(params, "upscaler");
  check_image(lr, "upscale_features");
  if (lr.channels != 3) throw ArgumentError("upscale_features: expects an RGB image");
  BoundParams net(params, false);
  return upscaler_forward(net, ag::constant(lr.to_tensor()))->value;
}

ImageTensor fuse_reconstruct(const Tensor& f_sr, const TransferredFeature& f_t, const NetworkParams& params) {
  require_arch(params, "fusion");
  BoundParams net(params, false);
  return single_image(fusion_forward(net, ag::constant(f_sr), ag::constant(f_t.data))->value, true);
}

ImageTensor degrade_net(const ImageTensor& img, const NetworkParams& params) {
  require_arch(params, "degrader");
  check_image(img, "degrade_net");
  if (img.channels != 3) throw ArgumentError("degrade_net: expects an RGB image");
  BoundParams net(params, false);
  return single_image(degrader_forward(net, ag::constant(img.to_tensor()))->value, false);
}

double discriminate(const ImageTensor& img, const NetworkParams& params) {
  require_arch(params, "critic");
  check_image(img, "discriminate");
  if (img.channels != 3) throw ArgumentError("discriminate: expects an RGB image");
  BoundParams net(params, false);
  return critic_forward(net, ag::constant(img.to_tensor()))->value.item();
}

std::vector<LayerInfo> describe_layers(const NetworkParams& params) {
  std::vector<LayerInfo> out;
  auto block = [&](const std::string& name) {
    out.push_back({name + ".conv1", "conv"});
    out.push_back({name + ".relu", "relu"});
    out.push_back({name + ".conv2", "conv"});
    out.push_back({name + ".add", "residual_add"});
  };
  if (params.arch_id == "upscaler") {
    const UpscalerConfig cfg = upscaler_config(params);
    out.push_back({"head", "conv"});
    for (int i = 0; i < cfg.blocks; ++i) block(block_name(i));
    out.push_back({"body", "conv"});
    out.push_back({"body.skip", "residual_add"});
    for (int k = 0; k < log2_scale(cfg.s); ++k) {
      const std::string name = "up" + std::to_string(k);
      out.push_back({name + ".expand", "conv"});
      out.push_back({name + ".shuffle", "pixel_shuffle"});
      out.push_back({name + ".conv", "conv"});
    }
  } else if (params.arch_id == "fusion") {
    const FusionConfig cfg = fusion_config(params);
    out.push_back({"concat", "concat"});
    out.push_back({"entry", "conv"});
    for (int i = 0; i < cfg.blocks; ++i) block(block_name(i));
    out.push_back({"skip", "residual_add"});
    out.push_back({"rec", "conv"});
  } else if (params.arch_id == "degrader") {
    const int stages = log2_scale(degrader_config(params).s);
    for (int k = 0; k < stages; ++k) {
      out.push_back({"stage" + std::to_string(k), "conv"});
      if (k + 1 < stages) out.push_back({"stage" + std::to_string(k) + ".act", "leaky_relu"});
    }
  } else if (params.arch_id == "critic") {
    const CriticConfig cfg = critic_config(params);
    for (int k = 0; k < cfg.stages; ++k) {
      out.push_back({"conv" + std::to_string(k), "conv"});
      out.push_back({"conv" + std::to_string(k) + ".act", "leaky_relu"});
    }
    out.push_back({"pool", "global_avg_pool"});
    out.push_back({"linear", "linear"});
  } else {
    throw ConfigurationError("unknown architecture '" + params.arch_id + "'");
  }
  return out;
}

}  // namespace refsr
