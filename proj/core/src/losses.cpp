#include "refsr/losses.hpp"

#include <cmath>

#include "refsr/errors.hpp"

namespace refsr {

double LossWeights::lambda_for(int level, std::size_t n_levels) const {
  auto it = lambda.find(level);
  if (it != lambda.end()) return it->second;
  return n_levels == 0 ? 0.0 : 1.0 / static_cast<double>(n_levels);
}

void LossWeights::validate() const {
  auto check = [](double v, const std::string& name) {
    if (!std::isfinite(v) || v < 0.0) throw ArgumentError("loss weight '" + name + "' must be finite and >= 0");
  };
  check(rec, "rec");
  check(tex, "tex");
  check(deg, "deg");
  check(per, "per");
  check(adv, "adv");
  check(gp_coef, "gp_coef");
  for (const auto& [l, v] : lambda) check(v, "lambda_" + std::to_string(l));
}

LossReport total_loss(const LossTerms& t, const LossWeights& w) {
  const std::pair<const char*, double> named[] = {
      {"rec", t.rec}, {"tex", t.tex}, {"deg", t.deg}, {"per", t.per}, {"adv", t.adv}};
  for (const auto& [name, v] : named)
    if (!std::isfinite(v)) throw NumericError(std::string("loss term '") + name + "' is not finite");
  LossReport r;
  r.terms = t;
  r.total = w.rec * t.rec + w.tex * t.tex + w.deg * t.deg + w.per * t.per + w.adv * t.adv;
  return r;
}

// ---------------------------------------------------------------------------

ag::Var rec_loss(const ag::Var& sr, const Tensor& gt) { return ag::mean_abs_diff(sr, gt); }

ag::Var per_loss(const ag::Var& sr, const Tensor& gt, const FeatureExtractor& extractor) {
  if (!sr->value.same_shape(gt))
    throw ArgumentError("loss_per: shape mismatch " + shape_string(sr->value.shape()) + " vs " +
                        shape_string(gt.shape()));
  if (!extractor.has_perceptual_layer())
    throw ConfigurationError("loss_per: extractor '" + extractor.id() + "' has no perceptual layer");
  const Tensor target = extractor.perceptual(ag::constant(gt))->value;
  return ag::mean(ag::rms_per_channel(ag::sub_const(extractor.perceptual(sr), target)));
}

std::vector<TextureTarget> texture_targets(const FeaturePyramid& ref_pyramid, const MatchMap& match,
                                           const std::set<int>& levels, const LossWeights& weights) {
  std::vector<TextureTarget> out;
  for (int l : levels) {
    if (l < match.level || l > ref_pyramid.L)
      throw ArgumentError("texture loss: level " + std::to_string(l) + " outside transferable range " +
                          std::to_string(match.level) + ".." + std::to_string(ref_pyramid.L));
    TextureTarget t;
    t.level = l;
    t.lambda = weights.lambda_for(l, levels.size());
    t.gram = ag::gram(ag::constant(transfer_at_level(ref_pyramid, match, l).data))->value;
    out.push_back(std::move(t));
  }
  return out;
}

ag::Var tex_loss(const ag::Var& sr, const std::vector<std::vector<TextureTarget>>& targets, int L,
                 const FeatureExtractor& extractor) {
  const int N = sr->value.n();
  if (static_cast<int>(targets.size()) != N) throw ArgumentError("texture loss: one target set per sample required");
  if (sr->value.h() % 2 != 0 || sr->value.w() % 2 != 0) throw ArgumentError("texture loss: SR dims must be even");
  std::set<int> levels;
  for (const TextureTarget& t : targets.front()) levels.insert(t.level);
  if (levels.empty()) throw ArgumentError("texture loss: no levels");

  const ag::Var hh = ag::affine(ag::haar_hh(sr), kHhRemapScale, kHhRemapOffset);
  const auto feats = extract_levels(hh, levels, L, extractor);

  ag::Var total;
  for (std::size_t k = 0; k < targets.front().size(); ++k) {
    const int l = targets.front()[k].level;
    const double lambda = targets.front()[k].lambda;
    const ag::Var g = ag::gram(feats.at(l));
    const int C = g->value.h();
    std::vector<Tensor> per_sample;
    for (int n = 0; n < N; ++n) {
      if (targets[n].size() != targets.front().size() || targets[n][k].level != l)
        throw ArgumentError("texture loss: samples list different levels");
      const Tensor& tg = targets[n][k].gram;
      if (tg.h() != C || tg.w() != C)
        throw ArgumentError("texture loss: target Gram at level " + std::to_string(l) + " is " +
                            shape_string(tg.shape()) + ", features have " + std::to_string(C) + " channels");
      per_sample.push_back(tg);
    }
    const ag::Var term =
        ag::scale(ag::mean(ag::rms_per_sample(ag::sub_const(g, Tensor::stack(per_sample)))), lambda);
    total = total ? ag::add(total, term) : term;
  }
  return total;
}

ag::Var deg_loss(const ag::Var& sr, const Tensor& lr, const BoundParams& degrader) {
  const ag::Var out = degrader_forward(degrader, sr);
  if (!out->value.same_shape(lr))
    throw ArgumentError("loss_deg: degraded SR " + shape_string(out->value.shape()) + " vs LR " +
                        shape_string(lr.shape()));
  return ag::mean_abs_diff(out, lr);
}

ag::Var adv_g_loss(const ag::Var& sr, const BoundParams& critic) {
  return ag::scale(ag::mean(critic_forward(critic, sr)), -1.0);
}

namespace {

std::vector<double> grad_norms(const Tensor& g) {
  const int N = g.n();
  const std::size_t M = g.size() / static_cast<std::size_t>(N);
  std::vector<double> out(static_cast<std::size_t>(N));
  for (int n = 0; n < N; ++n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < M; ++i) acc += g.data()[n * M + i] * g.data()[n * M + i];
    out[static_cast<std::size_t>(n)] = std::sqrt(acc);
  }
  return out;
}

}  // namespace

double gradient_penalty(const NetworkParams& critic, const Tensor& x) {
  const auto norms = grad_norms(critic_input_gradient(critic, x));
  double acc = 0.0;
  for (double r : norms) acc += (r - 1.0) * (r - 1.0);
  return acc / static_cast<double>(norms.size());
}

CriticLoss critic_loss(const NetworkParams& critic, const Tensor& gt, const Tensor& sr,
                       const std::vector<double>& eps, double gp_coef) {
  if (!gt.same_shape(sr)) throw ArgumentError("critic loss: GT and SR batches differ in shape");
  const int N = gt.n();
  if (static_cast<int>(eps.size()) != N) throw ArgumentError("critic loss: one interpolation weight per sample");

  CriticLoss out;
  BoundParams net(critic, true);
  const ag::Var data = ag::sub(ag::mean(critic_forward(net, ag::constant(sr))),
                               ag::mean(critic_forward(net, ag::constant(gt))));
  out.data_term = data->value.item();
  ag::backward(data);

  if (gp_coef > 0.0) {
    Tensor x_hat(gt.shape());
    const std::size_t M = gt.size() / static_cast<std::size_t>(N);
    for (int n = 0; n < N; ++n)
      for (std::size_t i = 0; i < M; ++i) {
        const std::size_t j = n * M + i;
        x_hat.data()[j] = eps[static_cast<std::size_t>(n)] * gt.data()[j] +
                          (1.0 - eps[static_cast<std::size_t>(n)]) * sr.data()[j];
      }
    const Tensor g = critic_input_gradient(critic, x_hat);
    const auto norms = grad_norms(g);
    Tensor coef({N, 1, 1, 1});
    for (int n = 0; n < N; ++n) {
      const double r = norms[static_cast<std::size_t>(n)];
      out.penalty += (r - 1.0) * (r - 1.0) / N;
      // d/dtheta (r - 1)^2 = 2 (r - 1) / r * d/dtheta <grad D, g>; zero at r == 0.
      coef.data()[n] = r > 0.0 ? gp_coef / N * 2.0 * (r - 1.0) / r : 0.0;
    }
    ag::backward(ag::sum(ag::mul_const(critic_directional_derivative(net, x_hat, g), coef)));
  }
  out.total = out.data_term + gp_coef * out.penalty;
  out.gradients = net.gradients();
  return out;
}

// ---------------------------------------------------------------------------

Tensor batch_tensor(const std::vector<ImageTensor>& images) {
  if (images.empty()) throw ArgumentError("empty image batch");
  std::vector<Tensor> ts;
  for (const ImageTensor& img : images) {
    if (img.height != images.front().height || img.width != images.front().width ||
        img.channels != images.front().channels)
      throw ArgumentError("image batch has mixed sizes");
    ts.push_back(img.to_tensor());
  }
  return Tensor::stack(ts);
}

namespace {

void require_same(const ImageTensor& a, const ImageTensor& b, const char* what) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels)
    throw ArgumentError(std::string(what) + ": shape mismatch " + std::to_string(a.height) + "x" +
                        std::to_string(a.width) + "x" + std::to_string(a.channels) + " vs " +
                        std::to_string(b.height) + "x" + std::to_string(b.width) + "x" + std::to_string(b.channels));
}

}  // namespace

double loss_rec(const ImageTensor& i_sr, const ImageTensor& i_gt) {
  require_same(i_sr, i_gt, "loss_rec");
  return rec_loss(ag::constant(i_sr.to_tensor()), i_gt.to_tensor())->value.item();
}

double loss_per(const ImageTensor& i_sr, const ImageTensor& i_gt, const FeatureExtractor& extractor) {
  require_same(i_sr, i_gt, "loss_per");
  return per_loss(ag::constant(i_sr.to_tensor()), i_gt.to_tensor(), extractor)->value.item();
}

double loss_tex_wavelet(const ImageTensor& i_sr, const FeaturePyramid& ref_pyramid, const MatchMap& match,
                        const LossWeights& weights, const FeatureExtractor& extractor, const std::set<int>& levels) {
  check_image(i_sr, "loss_tex_wavelet");
  for (int l : levels)
    if (l < ref_pyramid.L - 2 || l > ref_pyramid.L)
      throw ArgumentError("loss_tex_wavelet: level " + std::to_string(l) + " outside " +
                          std::to_string(ref_pyramid.L - 2) + ".." + std::to_string(ref_pyramid.L));
  const auto targets = texture_targets(ref_pyramid, match, levels, weights);
  return tex_loss(ag::constant(i_sr.to_tensor()), {targets}, ref_pyramid.L, extractor)->value.item();
}

double loss_deg(const ImageTensor& i_sr, const ImageTensor& i_lr, const NetworkParams& degrader) {
  require_arch(degrader, "degrader");
  BoundParams net(degrader, false);
  return deg_loss(ag::constant(i_sr.to_tensor()), i_lr.to_tensor(), net)->value.item();
}

double loss_adv_g(const std::vector<ImageTensor>& i_sr, const NetworkParams& critic) {
  BoundParams net(critic, false);
  return adv_g_loss(ag::constant(batch_tensor(i_sr)), net)->value.item();
}

CriticLoss loss_adv_d(const std::vector<ImageTensor>& i_gt, const std::vector<ImageTensor>& i_sr,
                      const NetworkParams& critic, double gp_coef, Rng& rng) {
  std::vector<double> eps(i_gt.size());
  for (double& e : eps) e = rng.uniform();
  return critic_loss(critic, batch_tensor(i_gt), batch_tensor(i_sr), eps, gp_coef);
}

}  // namespace refsr
