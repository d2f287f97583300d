#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "refsr/autograd.hpp"
#include "refsr/features.hpp"
#include "refsr/matching.hpp"
#include "refsr/networks.hpp"
#include "refsr/rng.hpp"
#include "refsr/wavelet.hpp"

namespace refsr {

/// Loss weights. Norms are mean-normalised: l1 terms average |d| over elements and
/// Frobenius terms are root-mean-square over entries.
struct LossWeights {
  double rec = 1.0;
  double tex = 1e-4;
  double deg = 1.0;
  double per = 1e-4;
  double adv = 1e-6;
  /// Per-level texture weights; levels absent here get 1 / |levels|.
  std::map<int, double> lambda;
  double gp_coef = 10.0;

  double lambda_for(int level, std::size_t n_levels) const;
  void validate() const;  // ArgumentError on negative or non-finite entries
};

struct LossTerms {
  double rec = 0.0, tex = 0.0, deg = 0.0, per = 0.0, adv = 0.0;
};

struct LossReport {
  LossTerms terms;
  double total = 0.0;
};

/// Weighted sum; NumericError naming the first non-finite term.
LossReport total_loss(const LossTerms& terms, const LossWeights& weights);

// ---------------------------------------------------------------------------
// Graph losses over NHWC batches.

ag::Var rec_loss(const ag::Var& sr, const Tensor& gt);

/// Mean over channels (and batch) of the per-channel RMS difference of perceptual features.
ag::Var per_loss(const ag::Var& sr, const Tensor& gt, const FeatureExtractor& extractor);

/// Gram-matrix targets of the texture loss for one sample.
struct TextureTarget {
  int level = 0;
  double lambda = 0.0;
  Tensor gram;  // (1, C, C, 1)
};

/// Grams of the transferred reference features F_T^l for each requested level.
/// ArgumentError for levels outside [match.level, ref_pyramid.L].
std::vector<TextureTarget> texture_targets(const FeaturePyramid& ref_pyramid, const MatchMap& match,
                                           const std::set<int>& levels, const LossWeights& weights);

/// sum_l lambda_l * mean_n RMS(Gram(phi^l(remap(HH(sr_n)))) - target_n^l).
/// `targets[n]` holds the targets of sample n; all samples must list the same levels.
ag::Var tex_loss(const ag::Var& sr, const std::vector<std::vector<TextureTarget>>& targets, int L,
                 const FeatureExtractor& extractor);

/// l1 between the frozen degrader's output and the LR input.
ag::Var deg_loss(const ag::Var& sr, const Tensor& lr, const BoundParams& degrader);

/// -mean critic score.
ag::Var adv_g_loss(const ag::Var& sr, const BoundParams& critic);

struct CriticLoss {
  double data_term = 0.0;  // mean D(sr) - mean D(gt)
  double penalty = 0.0;    // mean (||grad D(x_hat)|| - 1)^2
  double total = 0.0;      // data_term + gp_coef * penalty
  std::map<std::string, Tensor> gradients;
};

/// Critic objective and its parameter gradients. x_hat = eps_n gt_n + (1 - eps_n) sr_n.
CriticLoss critic_loss(const NetworkParams& critic, const Tensor& gt, const Tensor& sr,
                       const std::vector<double>& eps, double gp_coef);

/// Mean (||grad_x D(x_n)|| - 1)^2 over the batch.
double gradient_penalty(const NetworkParams& critic, const Tensor& x);

// ---------------------------------------------------------------------------
// Value-level wrappers over single images.

double loss_rec(const ImageTensor& i_sr, const ImageTensor& i_gt);
double loss_per(const ImageTensor& i_sr, const ImageTensor& i_gt, const FeatureExtractor& extractor);
double loss_tex_wavelet(const ImageTensor& i_sr, const FeaturePyramid& ref_pyramid, const MatchMap& match,
                        const LossWeights& weights, const FeatureExtractor& extractor, const std::set<int>& levels);
double loss_deg(const ImageTensor& i_sr, const ImageTensor& i_lr, const NetworkParams& degrader);
double loss_adv_g(const std::vector<ImageTensor>& i_sr, const NetworkParams& critic);
/// Critic objective with per-sample interpolation weights drawn uniformly from `rng`.
CriticLoss loss_adv_d(const std::vector<ImageTensor>& i_gt, const std::vector<ImageTensor>& i_sr,
                      const NetworkParams& critic, double gp_coef, Rng& rng);

/// Batch of equally sized RGB images as an NHWC tensor.
Tensor batch_tensor(const std::vector<ImageTensor>& images);

}  // namespace refsr
