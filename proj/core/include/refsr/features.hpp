#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "refsr/autograd.hpp"
#include "refsr/checkpoint.hpp"
#include "refsr/image.hpp"

namespace refsr {

/// Multi-stage feature extractor. Stage k has spatial stride 2^k relative to its input.
/// Pyramid level l of an L-level pipeline is served by stage L - l.
class FeatureExtractor {
 public:
  static constexpr int kStages = 4;

  virtual ~FeatureExtractor() = default;

  virtual const std::string& id() const = 0;
  virtual int stage_channels(int stage) const = 0;
  /// Outputs of stages 0..last_stage. Extractor parameters never receive gradients,
  /// but gradients flow back to `x` when it requires them.
  virtual std::vector<ag::Var> stages(const ag::Var& x, int last_stage) const = 0;

  /// Layer used by the perceptual loss (VGG conv5_1 after ReLU, or the deepest fallback
  /// stage the input size supports).
  virtual bool has_perceptual_layer() const = 0;
  virtual ag::Var perceptual(const ag::Var& x) const = 0;
};

/// Random-weight extractor fully determined by a seed: 3x3 convolutions with
/// replicate padding and ReLU, widths (16, 32, 64, 128), 2x2 average pooling
/// between stages. Weights are drawn stage by stage in storage order from
/// Rng(seed).normal(), scaled by sqrt(2 / fan_in); biases are zero.
class FallbackExtractor final : public FeatureExtractor {
 public:
  static constexpr std::array<int, kStages> kWidths{16, 32, 64, 128};

  explicit FallbackExtractor(std::uint64_t seed);

  const std::string& id() const override { return id_; }
  int stage_channels(int stage) const override;
  std::vector<ag::Var> stages(const ag::Var& x, int last_stage) const override;
  bool has_perceptual_layer() const override { return true; }
  ag::Var perceptual(const ag::Var& x) const override;

  const NetworkParams& params() const { return params_; }

 private:
  std::string id_;
  NetworkParams params_;
  std::vector<ag::Var> weights_, biases_;
};

/// VGG-19 backbone loaded from a checkpoint bundle section with arch_id "vgg19" and
/// arrays "<layer>.weight" (3,3,Cin,Cout) / "<layer>.bias" (1,1,1,Cout).
/// Stages map to relu1_1, relu2_1, relu3_1, relu4_1; the perceptual layer is relu5_1
/// and is only available when conv4_2..conv5_1 are present in the file.
/// Channel widths are read from the file, so narrow test backbones load too.
class Vgg19Extractor final : public FeatureExtractor {
 public:
  explicit Vgg19Extractor(NetworkParams params);

  /// ConfigurationError naming the expected file when it is missing, or when
  /// `expected_checksum` is given and does not match.
  static std::unique_ptr<Vgg19Extractor> load(const std::filesystem::path& weights,
                                              std::optional<std::uint64_t> expected_checksum);

  const std::string& id() const override { return id_; }
  int stage_channels(int stage) const override;
  std::vector<ag::Var> stages(const ag::Var& x, int last_stage) const override;
  bool has_perceptual_layer() const override { return has_conv5_; }
  ag::Var perceptual(const ag::Var& x) const override;

  static const std::vector<std::string>& layer_names();

 private:
  ag::Var conv_relu(const ag::Var& x, const std::string& layer) const;
  ag::Var normalize(const ag::Var& x) const;

  std::string id_;
  NetworkParams params_;
  std::map<std::string, std::pair<ag::Var, ag::Var>> layers_;
  bool has_conv5_ = false;
};

struct ExtractorConfig {
  enum class Kind { Fallback, Vgg19 };
  Kind kind = Kind::Fallback;
  std::uint64_t seed = 0;
  std::filesystem::path weights_path;
  std::optional<std::uint64_t> expected_checksum;
};

std::unique_ptr<FeatureExtractor> make_extractor(const ExtractorConfig& cfg);

/// Feature maps per pyramid level; level l has stride 2^(L-l) w.r.t. the source image.
struct FeaturePyramid {
  int L = 0;
  std::string extractor_id;
  std::map<int, Tensor> levels;

  const Tensor& level(int l) const;
};

/// Extractor stage serving pyramid level `level` (throws outside 0..kStages-1).
int stage_for_level(int level, int L);

FeaturePyramid extract_pyramid(const ImageTensor& img, const std::set<int>& levels, int L,
                               const FeatureExtractor& extractor);

/// Graph-building variant used by the losses; `x` is an NHWC batch.
std::map<int, ag::Var> extract_levels(const ag::Var& x, const std::set<int>& levels, int L,
                                      const FeatureExtractor& extractor);

struct GramMatrix {
  Eigen::MatrixXd g;
  long n_positions = 0;
};

/// g = (1/N) sum_p f[p,:]^T f[p,:] over the N spatial positions of a batch-1 feature map.
GramMatrix gram(const Tensor& feat);

}  // namespace refsr
