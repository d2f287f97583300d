#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "refsr/dataset.hpp"
#include "refsr/features.hpp"
#include "refsr/losses.hpp"
#include "refsr/matching.hpp"
#include "refsr/networks.hpp"
#include "refsr/optim.hpp"

namespace refsr {

/// Scale-dependent geometry of the pipeline: s = 2^L, matching at level L-2,
/// transfer at level L.
struct PipelineGeometry {
  int s = 0;
  int L = 0;
  int match_level = 0;
  int transfer_level = 0;
  int scale_gap = 0;
  int match_stage = 0;     // extractor stage serving the matching level
  int transfer_stage = 0;  // extractor stage serving the transfer level
};

/// ArgumentError unless s is a power of two with L >= 2 and L - 2 served by the extractor.
PipelineGeometry pipeline_geometry(int s);

struct TrainConfig {
  int s = 8;
  int L = 3;
  double lr_rate = 1e-4;
  int pretrain_epochs = 2;
  int full_epochs = 20;
  int batch_size = 1;
  std::uint64_t seed = 0;
  LossWeights weights;
  int critic_steps_per_gen = 1;
  /// Generator steps at the start of the full phase that use critic_warmup_ratio critic updates.
  int critic_warmup_steps = 500;
  int critic_warmup_ratio = 5;
  std::set<int> tex_levels;  // empty means {L-2, L-1, L}
  /// Build texture targets from HH-filtered reference features instead of raw ones.
  bool symmetric_texture = false;

  int degrader_epochs = 10;
  double degrader_lr = 1e-4;
  /// Fraction of degrader pairs held out for best-checkpoint selection.
  double degrader_val_fraction = 0.1;

  UpscalerConfig upscaler;
  FusionConfig fusion;  // transfer_channels is taken from the extractor
  DegraderConfig degrader;
  CriticConfig critic;

  std::string extractor = "fallback";  // "fallback" or "vgg19"
  std::uint64_t extractor_seed = 0;
  std::filesystem::path vgg_weights;
  std::optional<std::uint64_t> vgg_checksum;

  int patch_size = 3;
  int match_stride = 1;
  std::size_t max_ref_candidates = 0;
  int workers = 1;

  std::filesystem::path out_dir;          // checkpoints and logs; empty disables file output
  std::filesystem::path match_cache_dir;  // empty disables the on-disk match cache
  /// Extra checkpoint every N steps (0: only at epoch ends).
  int checkpoint_every = 0;
  /// Stop a generator phase (or degrader training) after this many steps in the current
  /// invocation (0: run to completion).
  std::int64_t stop_after_steps = 0;

  std::set<int> texture_levels() const;
  ExtractorConfig extractor_config() const;
  /// ConfigurationError on any inconsistency (s != 2^L, negative epochs, bad weights, ...).
  void validate() const;

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are a ConfigurationError.
  static TrainConfig from_json(const nlohmann::json& j);
  static TrainConfig load(const std::filesystem::path& path);
};

/// Upscaler and fusion head.
struct Generator {
  NetworkParams upscaler;
  NetworkParams fusion;
  friend bool operator==(const Generator&, const Generator&) = default;
};

Generator init_generator(const TrainConfig& cfg, int transfer_channels);
void save_generator(const Generator& gen, const std::filesystem::path& path);
Generator load_generator(const std::filesystem::path& path);

/// Per-triple inputs that do not change during training.
struct PreparedTriple {
  Tensor lr;   // (1, h, w, 3)
  Tensor gt;   // (1, s h, s w, 3)
  Tensor f_t;  // transferred level-L reference features
  std::vector<TextureTarget> tex;
  MatchMap match;
};

/// Matches I_LR^ against I_Ref with reference features at level L-2 and transfers them to
/// level L. With a cache directory, match maps are stored keyed by (triple content,
/// extractor id, matching parameters) and reused.
PreparedTriple prepare_triple(const TrainingTriple& t, const TrainConfig& cfg, const FeatureExtractor& extractor);

MatchMap match_images(const ImageTensor& lr, const ImageTensor& ref, const TrainConfig& cfg,
                      const FeatureExtractor& extractor);

struct StepRecord {
  std::string phase;
  std::int64_t step = 0;  // 1-based within the phase
  int epoch = 0;          // 1-based
  LossReport report;
  double critic_loss = 0.0;  // full phase only
  double wall_time = 0.0;
};

nlohmann::json to_json(const StepRecord& r);

struct DegraderResult {
  NetworkParams params;
  double initial_train_l1 = 0.0;
  double final_train_l1 = 0.0;
  double initial_val_l1 = 0.0;
  double best_val_l1 = 0.0;
  std::vector<StepRecord> log;
};

/// Trains H_D on (hr, lr) pairs with Adam; returns the parameters with the best
/// held-out l1 (evaluated after every epoch and at initialization).
DegraderResult train_degrader(const std::vector<std::pair<ImageTensor, ImageTensor>>& pairs, const TrainConfig& cfg);

struct PhaseResult {
  Generator generator;
  NetworkParams critic;
  std::vector<StepRecord> log;
  std::int64_t steps_done = 0;  // global phase step reached
  bool completed = false;
};

/// Hook invoked after every logged step.
using StepCallback = std::function<void(const StepRecord&)>;

/// Generator pretraining on w_rec * L_rec + w_tex * L_tex. The texture loss is not
/// evaluated at all when w_tex == 0. A checkpoint tagged "pretrain" is written at the
/// end of every epoch when cfg.out_dir is set.
PhaseResult pretrain_generator(const std::vector<TrainingTriple>& triples, const TrainConfig& cfg,
                               const NetworkParams& degrader, const FeatureExtractor& extractor,
                               const std::optional<Generator>& init = std::nullopt,
                               const std::filesystem::path& resume_from = {}, const StepCallback& on_step = {});

/// Adversarial phase with all five terms. Critic updates follow the warm-up schedule;
/// critic_steps_per_gen == 0 disables the critic entirely.
PhaseResult train_full(const std::vector<TrainingTriple>& triples, const TrainConfig& cfg,
                       const NetworkParams& degrader, const FeatureExtractor& extractor, const Generator& init,
                       const std::filesystem::path& resume_from = {}, const StepCallback& on_step = {});

/// Complete Ref-SR forward pass; output is s times the LR size and clamped.
/// ArgumentError when the reference is not divisible by s or too small to match.
ImageTensor super_resolve(const ImageTensor& lr, const ImageTensor& ref, const Generator& gen,
                          const TrainConfig& cfg, const FeatureExtractor& extractor);

/// Smallest reference side accepted by super_resolve.
int minimum_reference_size(const TrainConfig& cfg);

}  // namespace refsr
