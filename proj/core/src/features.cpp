#include "refsr/features.hpp"

#include <cmath>

#include "refsr/errors.hpp"
#include "refsr/rng.hpp"

namespace refsr {

// ---------------------------------------------------------------------------
// Fallback extractor

FallbackExtractor::FallbackExtractor(std::uint64_t seed)
    : id_("fallback-seed-" + std::to_string(seed)) {
  params_.arch_id = "fallback-extractor";
  params_.config = {{"seed", seed}, {"widths", kWidths}};
  Rng rng(seed);
  int cin = 3;
  for (int s = 0; s < kStages; ++s) {
    const int cout = kWidths[s];
    Tensor w({3, 3, cin, cout});
    const double stddev = std::sqrt(2.0 / (9.0 * cin));
    for (double& v : w.storage()) v = rng.normal() * stddev;
    Tensor b({1, 1, 1, cout});
    const std::string name = "stage" + std::to_string(s);
    params_.arrays[name + ".weight"] = w;
    params_.arrays[name + ".bias"] = b;
    weights_.push_back(ag::constant(std::move(w)));
    biases_.push_back(ag::constant(std::move(b)));
    cin = cout;
  }
}

int FallbackExtractor::stage_channels(int stage) const {
  if (stage < 0 || stage >= kStages) throw ArgumentError("no extractor stage " + std::to_string(stage));
  return kWidths[stage];
}

std::vector<ag::Var> FallbackExtractor::stages(const ag::Var& x, int last_stage) const {
  if (last_stage < 0 || last_stage >= kStages)
    throw ArgumentError("no extractor stage " + std::to_string(last_stage));
  if (x->value.c() != 3) throw ArgumentError("feature extractor expects 3-channel input");
  std::vector<ag::Var> out;
  ag::Var h = x;
  for (int s = 0; s <= last_stage; ++s) {
    if (s > 0) h = ag::avg_pool2(h);
    h = ag::relu(ag::conv2d(h, weights_[s], biases_[s], 1, 1, ag::Padding::Replicate));
    out.push_back(h);
  }
  return out;
}

ag::Var FallbackExtractor::perceptual(const ag::Var& x) const {
  int last = 0;
  while (last + 1 < kStages && (x->value.h() >> (last + 1)) >= 1 && (x->value.w() >> (last + 1)) >= 1) ++last;
  return stages(x, last).back();
}

// ---------------------------------------------------------------------------
// VGG-19

const std::vector<std::string>& Vgg19Extractor::layer_names() {
  static const std::vector<std::string> names{
      "conv1_1", "conv1_2", "conv2_1", "conv2_2", "conv3_1", "conv3_2", "conv3_3",
      "conv3_4", "conv4_1", "conv4_2", "conv4_3", "conv4_4", "conv5_1"};
  return names;
}

Vgg19Extractor::Vgg19Extractor(NetworkParams params) : params_(std::move(params)) {
  if (params_.arch_id != "vgg19")
    throw ConfigurationError("backbone weights have arch_id '" + params_.arch_id +
                             "', expected 'vgg19'");
  int cin = 3;
  for (const std::string& name : layer_names()) {
    auto w = params_.arrays.find(name + ".weight");
    auto b = params_.arrays.find(name + ".bias");
    if (w == params_.arrays.end() || b == params_.arrays.end()) {
      if (name == "conv4_2") break;  // file stops after relu4_1: no perceptual layer
      throw ConfigurationError("backbone weights lack layer '" + name + "'");
    }
    const Tensor& wt = w->second;
    if (wt.n() != 3 || wt.h() != 3 || wt.w() != cin || b->second.size() != static_cast<std::size_t>(wt.c()))
      throw ConfigurationError("backbone layer '" + name + "' has shape " + shape_string(wt.shape()));
    layers_[name] = {ag::constant(wt), ag::constant(b->second)};
    cin = wt.c();
    if (name == "conv5_1") has_conv5_ = true;
  }
  const auto bytes = encode_bundle({params_});
  id_ = "vgg19-" + std::to_string(fnv1a64(bytes.data(), bytes.size()));
}

std::unique_ptr<Vgg19Extractor> Vgg19Extractor::load(
    const std::filesystem::path& weights, std::optional<std::uint64_t> expected_checksum) {
  if (weights.empty() || !std::filesystem::exists(weights))
    throw ConfigurationError("pretrained backbone weights not found: expected weight file '" +
                             weights.string() + "'");
  if (expected_checksum) {
    const std::uint64_t actual = file_checksum(weights);
    if (actual != *expected_checksum)
      throw ConfigurationError("backbone weight file '" + weights.string() + "' checksum " +
                               std::to_string(actual) + " does not match pinned " +
                               std::to_string(*expected_checksum));
  }
  auto sections = load_bundle(weights);
  return std::make_unique<Vgg19Extractor>(find_section(sections, "vgg19"));
}

int Vgg19Extractor::stage_channels(int stage) const {
  static const char* kStageLayer[kStages] = {"conv1_1", "conv2_1", "conv3_1", "conv4_1"};
  if (stage < 0 || stage >= kStages) throw ArgumentError("no extractor stage " + std::to_string(stage));
  return layers_.at(kStageLayer[stage]).first->value.c();
}

ag::Var Vgg19Extractor::conv_relu(const ag::Var& x, const std::string& layer) const {
  const auto& [w, b] = layers_.at(layer);
  return ag::relu(ag::conv2d(x, w, b, 1, 1, ag::Padding::Zero));
}

ag::Var Vgg19Extractor::normalize(const ag::Var& x) const {
  static constexpr double kMean[3] = {0.485, 0.456, 0.406};
  static constexpr double kStd[3] = {0.229, 0.224, 0.225};
  Tensor scale(x->value.shape()), shift(x->value.shape());
  for (std::size_t i = 0; i < scale.size(); ++i) {
    const int c = static_cast<int>(i % 3);
    scale.data()[i] = 1.0 / kStd[c];
    shift.data()[i] = kMean[c] / kStd[c];
  }
  return ag::sub_const(ag::mul_const(x, scale), shift);
}

std::vector<ag::Var> Vgg19Extractor::stages(const ag::Var& x, int last_stage) const {
  if (last_stage < 0 || last_stage >= kStages)
    throw ArgumentError("no extractor stage " + std::to_string(last_stage));
  if (x->value.c() != 3) throw ArgumentError("feature extractor expects 3-channel input");
  std::vector<ag::Var> out;
  ag::Var h = conv_relu(normalize(x), "conv1_1");
  out.push_back(h);
  if (last_stage >= 1) {
    h = conv_relu(ag::max_pool2(conv_relu(h, "conv1_2")), "conv2_1");
    out.push_back(h);
  }
  if (last_stage >= 2) {
    h = conv_relu(ag::max_pool2(conv_relu(h, "conv2_2")), "conv3_1");
    out.push_back(h);
  }
  if (last_stage >= 3) {
    h = conv_relu(conv_relu(conv_relu(h, "conv3_2"), "conv3_3"), "conv3_4");
    h = conv_relu(ag::max_pool2(h), "conv4_1");
    out.push_back(h);
  }
  return out;
}

ag::Var Vgg19Extractor::perceptual(const ag::Var& x) const {
  if (!has_conv5_)
    throw ConfigurationError("backbone '" + id_ + "' has no conv5_1 layer for the perceptual loss");
  ag::Var h = stages(x, kStages - 1).back();
  h = conv_relu(conv_relu(conv_relu(h, "conv4_2"), "conv4_3"), "conv4_4");
  return conv_relu(ag::max_pool2(h), "conv5_1");
}

std::unique_ptr<FeatureExtractor> make_extractor(const ExtractorConfig& cfg) {
  switch (cfg.kind) {
    case ExtractorConfig::Kind::Fallback: return std::make_unique<FallbackExtractor>(cfg.seed);
    case ExtractorConfig::Kind::Vgg19: return Vgg19Extractor::load(cfg.weights_path, cfg.expected_checksum);
  }
  throw ConfigurationError("unknown extractor kind");
}

// ---------------------------------------------------------------------------

const Tensor& FeaturePyramid::level(int l) const {
  auto it = levels.find(l);
  if (it == levels.end()) throw ArgumentError("pyramid has no level " + std::to_string(l));
  return it->second;
}

int stage_for_level(int level, int L) {
  const int stage = L - level;
  if (stage < 0 || stage >= FeatureExtractor::kStages)
    throw ArgumentError("pyramid level " + std::to_string(level) + " is outside 1.." +
                        std::to_string(L) + " or deeper than the extractor (L=" +
                        std::to_string(L) + ")");
  return stage;
}

std::map<int, ag::Var> extract_levels(const ag::Var& x, const std::set<int>& levels, int L,
                                      const FeatureExtractor& extractor) {
  if (levels.empty()) throw ArgumentError("extract_levels: empty level set");
  const int deepest = stage_for_level(*levels.begin(), L);
  for (int l : levels) stage_for_level(l, L);
  const int stride = 1 << deepest;
  if (x->value.h() % stride != 0 || x->value.w() % stride != 0)
    throw ArgumentError("feature extraction: input " + std::to_string(x->value.h()) + "x" +
                        std::to_string(x->value.w()) + " not divisible by " +
                        std::to_string(stride));
  auto outs = extractor.stages(x, deepest);
  std::map<int, ag::Var> result;
  for (int l : levels) result[l] = outs[L - l];
  return result;
}

FeaturePyramid extract_pyramid(const ImageTensor& img, const std::set<int>& levels, int L,
                               const FeatureExtractor& extractor) {
  check_image(img, "extract_pyramid");
  FeaturePyramid pyr;
  pyr.L = L;
  pyr.extractor_id = extractor.id();
  for (auto& [l, v] : extract_levels(ag::constant(img.to_tensor()), levels, L, extractor))
    pyr.levels[l] = v->value;
  return pyr;
}

GramMatrix gram(const Tensor& feat) {
  if (feat.empty() || feat.n() != 1) throw ArgumentError("gram: expects a non-empty batch-1 map");
  const long P = static_cast<long>(feat.h()) * feat.w();
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> f(feat.data(), P, feat.c());
  GramMatrix g;
  g.g = (f.transpose() * f) / static_cast<double>(P);
  g.g.triangularView<Eigen::StrictlyLower>() = g.g.transpose();
  g.n_positions = P;
  return g;
}

}  // namespace refsr
