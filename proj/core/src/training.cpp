#include "refsr/training.hpp"

#include <spdlog/spdlog.h>

#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "refsr/checkpoint.hpp"
#include "refsr/errors.hpp"
#include "refsr/rng.hpp"
#include "refsr/wavelet.hpp"

namespace refsr {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Geometry and configuration

PipelineGeometry pipeline_geometry(int s) {
  if (s < 4 || s > 16 || !std::has_single_bit(static_cast<unsigned>(s)))
    throw ArgumentError("scale " + std::to_string(s) + " unsupported: expected 4, 8 or 16");
  PipelineGeometry g;
  g.s = s;
  g.L = std::countr_zero(static_cast<unsigned>(s));
  g.match_level = g.L - 2;
  g.transfer_level = g.L;
  g.scale_gap = 1 << (g.transfer_level - g.match_level);
  g.match_stage = stage_for_level(g.match_level, g.L);
  g.transfer_stage = stage_for_level(g.transfer_level, g.L);
  return g;
}

std::set<int> TrainConfig::texture_levels() const {
  if (!tex_levels.empty()) return tex_levels;
  return {L - 2, L - 1, L};
}

ExtractorConfig TrainConfig::extractor_config() const {
  ExtractorConfig e;
  e.kind = extractor == "vgg19" ? ExtractorConfig::Kind::Vgg19 : ExtractorConfig::Kind::Fallback;
  e.seed = extractor_seed;
  e.weights_path = vgg_weights;
  e.expected_checksum = vgg_checksum;
  return e;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigurationError("config: " + m); };
  if (s < 4 || s > 16 || !std::has_single_bit(static_cast<unsigned>(s))) fail("s must be 4, 8 or 16");
  if ((1 << L) != s) fail("s (" + std::to_string(s) + ") must equal 2^L (L=" + std::to_string(L) + ")");
  if (!(lr_rate > 0.0) || !std::isfinite(lr_rate)) fail("lr_rate must be positive");
  if (!(degrader_lr > 0.0) || !std::isfinite(degrader_lr)) fail("degrader_lr must be positive");
  if (pretrain_epochs < 0 || full_epochs < 0 || degrader_epochs < 0) fail("epochs must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (critic_steps_per_gen < 0 || critic_warmup_steps < 0 || critic_warmup_ratio < 0)
    fail("critic schedule entries must be >= 0");
  if (degrader_val_fraction < 0.0 || degrader_val_fraction >= 1.0) fail("degrader_val_fraction must be in [0, 1)");
  try {
    weights.validate();
  } catch (const ArgumentError& e) {
    fail(e.what());
  }
  for (int l : texture_levels())
    if (l < L - 2 || l > L) fail("texture level " + std::to_string(l) + " outside " + std::to_string(L - 2) + ".." + std::to_string(L));
  if (patch_size < 1 || match_stride < 1) fail("patch_size and match_stride must be positive");
  if (workers < 1) fail("workers must be >= 1");
  if (extractor != "fallback" && extractor != "vgg19") fail("extractor must be 'fallback' or 'vgg19'");
  if (extractor == "vgg19" && vgg_weights.empty()) fail("extractor 'vgg19' needs vgg_weights");
  if (upscaler.width < 1 || upscaler.blocks < 0 || fusion.width < 1 || fusion.blocks < 0 || degrader.width < 1 ||
      critic.base_width < 1 || critic.stages < 1)
    fail("network sizes must be positive");
  if (checkpoint_every < 0 || stop_after_steps < 0) fail("checkpoint_every and stop_after_steps must be >= 0");
}

json TrainConfig::to_json() const {
  json lambda = json::object();
  for (const auto& [l, v] : weights.lambda) lambda[std::to_string(l)] = v;
  json j = {
      {"s", s},
      {"L", L},
      {"lr_rate", lr_rate},
      {"pretrain_epochs", pretrain_epochs},
      {"full_epochs", full_epochs},
      {"batch_size", batch_size},
      {"seed", seed},
      {"weights",
       {{"rec", weights.rec},
        {"tex", weights.tex},
        {"deg", weights.deg},
        {"per", weights.per},
        {"adv", weights.adv},
        {"gp_coef", weights.gp_coef},
        {"lambda", lambda}}},
      {"critic_steps_per_gen", critic_steps_per_gen},
      {"critic_warmup_steps", critic_warmup_steps},
      {"critic_warmup_ratio", critic_warmup_ratio},
      {"tex_levels", texture_levels()},
      {"symmetric_texture", symmetric_texture},
      {"degrader_epochs", degrader_epochs},
      {"degrader_lr", degrader_lr},
      {"degrader_val_fraction", degrader_val_fraction},
      {"upscaler", {{"width", upscaler.width}, {"blocks", upscaler.blocks}}},
      {"fusion", {{"width", fusion.width}, {"blocks", fusion.blocks}}},
      {"degrader", {{"width", degrader.width}}},
      {"critic", {{"base_width", critic.base_width}, {"stages", critic.stages}}},
      {"extractor", extractor},
      {"extractor_seed", extractor_seed},
      {"vgg_weights", vgg_weights.string()},
      {"vgg_checksum", vgg_checksum ? json(*vgg_checksum) : json(nullptr)},
      {"patch_size", patch_size},
      {"match_stride", match_stride},
      {"max_ref_candidates", max_ref_candidates},
      {"workers", workers},
      {"out_dir", out_dir.string()},
      {"match_cache_dir", match_cache_dir.string()},
      {"checkpoint_every", checkpoint_every},
      {"stop_after_steps", stop_after_steps},
  };
  return j;
}

namespace {

template <typename T>
void read_key(const json& j, const char* key, T& out, std::set<std::string>& seen) {
  seen.insert(key);
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigurationError(std::string("config key '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& j, const std::set<std::string>& seen, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!seen.count(it.key())) throw ConfigurationError("unknown config key '" + where + it.key() + "'");
}

}  // namespace

TrainConfig TrainConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigurationError("config must be a JSON object");
  TrainConfig c;
  std::set<std::string> seen;
  read_key(j, "s", c.s, seen);
  c.L = std::bit_width(static_cast<unsigned>(std::max(c.s, 1))) - 1;
  read_key(j, "L", c.L, seen);
  read_key(j, "lr_rate", c.lr_rate, seen);
  read_key(j, "pretrain_epochs", c.pretrain_epochs, seen);
  read_key(j, "full_epochs", c.full_epochs, seen);
  read_key(j, "batch_size", c.batch_size, seen);
  read_key(j, "seed", c.seed, seen);
  read_key(j, "critic_steps_per_gen", c.critic_steps_per_gen, seen);
  read_key(j, "critic_warmup_steps", c.critic_warmup_steps, seen);
  read_key(j, "critic_warmup_ratio", c.critic_warmup_ratio, seen);
  read_key(j, "tex_levels", c.tex_levels, seen);
  read_key(j, "symmetric_texture", c.symmetric_texture, seen);
  read_key(j, "degrader_epochs", c.degrader_epochs, seen);
  read_key(j, "degrader_lr", c.degrader_lr, seen);
  read_key(j, "degrader_val_fraction", c.degrader_val_fraction, seen);
  read_key(j, "extractor", c.extractor, seen);
  read_key(j, "extractor_seed", c.extractor_seed, seen);
  std::string vgg;
  read_key(j, "vgg_weights", vgg, seen);
  c.vgg_weights = vgg;
  seen.insert("vgg_checksum");
  if (j.contains("vgg_checksum") && !j.at("vgg_checksum").is_null()) {
    try {
      c.vgg_checksum = j.at("vgg_checksum").get<std::uint64_t>();
    } catch (const json::exception& e) {
      throw ConfigurationError(std::string("config key 'vgg_checksum': ") + e.what());
    }
  }
  read_key(j, "patch_size", c.patch_size, seen);
  read_key(j, "match_stride", c.match_stride, seen);
  read_key(j, "max_ref_candidates", c.max_ref_candidates, seen);
  read_key(j, "workers", c.workers, seen);
  std::string out_dir, cache_dir;
  read_key(j, "out_dir", out_dir, seen);
  read_key(j, "match_cache_dir", cache_dir, seen);
  c.out_dir = out_dir;
  c.match_cache_dir = cache_dir;
  read_key(j, "checkpoint_every", c.checkpoint_every, seen);
  read_key(j, "stop_after_steps", c.stop_after_steps, seen);

  auto section = [&](const char* key) -> const json* {
    seen.insert(key);
    if (!j.contains(key)) return nullptr;
    if (!j.at(key).is_object()) throw ConfigurationError(std::string("config key '") + key + "' must be an object");
    return &j.at(key);
  };
  if (const json* w = section("weights")) {
    std::set<std::string> ws;
    read_key(*w, "rec", c.weights.rec, ws);
    read_key(*w, "tex", c.weights.tex, ws);
    read_key(*w, "deg", c.weights.deg, ws);
    read_key(*w, "per", c.weights.per, ws);
    read_key(*w, "adv", c.weights.adv, ws);
    read_key(*w, "gp_coef", c.weights.gp_coef, ws);
    ws.insert("lambda");
    if (w->contains("lambda")) {
      for (auto it = w->at("lambda").begin(); it != w->at("lambda").end(); ++it) {
        try {
          c.weights.lambda[std::stoi(it.key())] = it.value().get<double>();
        } catch (const std::exception& e) {
          throw ConfigurationError("config key 'weights.lambda." + it.key() + "': " + e.what());
        }
      }
    }
    reject_unknown(*w, ws, "weights.");
  }
  if (const json* u = section("upscaler")) {
    std::set<std::string> us;
    read_key(*u, "width", c.upscaler.width, us);
    read_key(*u, "blocks", c.upscaler.blocks, us);
    reject_unknown(*u, us, "upscaler.");
  }
  if (const json* f = section("fusion")) {
    std::set<std::string> fs_;
    read_key(*f, "width", c.fusion.width, fs_);
    read_key(*f, "blocks", c.fusion.blocks, fs_);
    reject_unknown(*f, fs_, "fusion.");
  }
  if (const json* d = section("degrader")) {
    std::set<std::string> ds;
    read_key(*d, "width", c.degrader.width, ds);
    reject_unknown(*d, ds, "degrader.");
  }
  if (const json* cr = section("critic")) {
    std::set<std::string> cs;
    read_key(*cr, "base_width", c.critic.base_width, cs);
    read_key(*cr, "stages", c.critic.stages, cs);
    reject_unknown(*cr, cs, "critic.");
  }
  reject_unknown(j, seen, "");
  c.upscaler.s = c.s;
  c.degrader.s = c.s;
  return c;
}

TrainConfig TrainConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("config file not found: '" + path.string() + "'");
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigurationError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Generator

Generator init_generator(const TrainConfig& cfg, int transfer_channels) {
  UpscalerConfig u = cfg.upscaler;
  u.s = cfg.s;
  FusionConfig f = cfg.fusion;
  f.width = u.width;
  f.transfer_channels = transfer_channels;
  return {init_upscaler(u, mix_seed(cfg.seed, 0x55)), init_fusion(f, mix_seed(cfg.seed, 0xF5))};
}

void save_generator(const Generator& gen, const fs::path& path) { save_bundle({gen.upscaler, gen.fusion}, path); }

Generator load_generator(const fs::path& path) {
  const auto sections = load_bundle(path);
  return {find_section(sections, "upscaler"), find_section(sections, "fusion")};
}

// ---------------------------------------------------------------------------
// Matching and per-triple preparation

int minimum_reference_size(const TrainConfig& cfg) {
  const PipelineGeometry g = pipeline_geometry(cfg.s);
  const int need = cfg.patch_size << g.match_stage;
  return (need + cfg.s - 1) / cfg.s * cfg.s;
}

namespace {

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return s;
}

std::uint64_t hash_image(const ImageTensor& img, std::uint64_t h) {
  const int dims[3] = {img.height, img.width, img.channels};
  h = fnv1a64(reinterpret_cast<const std::uint8_t*>(dims), sizeof dims, h);
  return fnv1a64(reinterpret_cast<const std::uint8_t*>(img.data.data()), img.data.size() * sizeof(double), h);
}

ImageTensor upsample_nearest2(const ImageTensor& img) {
  ImageTensor out(img.height * 2, img.width * 2, img.channels);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y / 2, x / 2, c);
  return out;
}

}  // namespace

MatchMap match_images(const ImageTensor& lr, const ImageTensor& ref, const TrainConfig& cfg,
                      const FeatureExtractor& extractor) {
  const PipelineGeometry g = pipeline_geometry(cfg.s);
  check_image(lr, "match_images");
  check_image(ref, "match_images");
  if (ref.height % cfg.s != 0 || ref.width % cfg.s != 0)
    throw ArgumentError("reference " + std::to_string(ref.height) + "x" + std::to_string(ref.width) +
                        " is not divisible by s=" + std::to_string(cfg.s));
  const int min_ref = minimum_reference_size(cfg);
  if (ref.height < min_ref || ref.width < min_ref)
    throw ArgumentError("reference " + std::to_string(ref.height) + "x" + std::to_string(ref.width) +
                        " too small to tile the target: minimum reference size is " + std::to_string(min_ref) + "x" +
                        std::to_string(min_ref));
  if ((lr.height * cfg.s) >> g.match_stage < cfg.patch_size || (lr.width * cfg.s) >> g.match_stage < cfg.patch_size)
    throw ArgumentError("LR input too small for matching at level " + std::to_string(g.match_level));

  std::optional<fs::path> cache_file;
  if (!cfg.match_cache_dir.empty()) {
    std::uint64_t h = hash_image(ref, hash_image(lr, 0xcbf29ce484222325ULL));
    const std::string id = extractor.id();
    h = fnv1a64(reinterpret_cast<const std::uint8_t*>(id.data()), id.size(), h);
    const std::int64_t params[4] = {cfg.s, cfg.patch_size, cfg.match_stride,
                                    static_cast<std::int64_t>(cfg.max_ref_candidates)};
    h = fnv1a64(reinterpret_cast<const std::uint8_t*>(params), sizeof params, h);
    cache_file = cfg.match_cache_dir / (hex64(h) + ".match");
    if (fs::exists(*cache_file)) {
      try {
        return load_match_map(*cache_file);
      } catch (const Error& e) {
        spdlog::warn("ignoring unreadable match cache entry {}: {}", cache_file->string(), e.what());
      }
    }
  }

  const ImageTensor lr_up = bicubic_resize(lr, Rational{cfg.s, 1});
  const ImageTensor ref_du = down_up(ref, cfg.s);
  const Tensor q = extract_pyramid(lr_up, {g.match_level}, g.L, extractor).level(g.match_level);
  const Tensor r = extract_pyramid(ref_du, {g.match_level}, g.L, extractor).level(g.match_level);
  MatchOptions opt;
  opt.level = g.match_level;
  opt.max_ref_candidates = cfg.max_ref_candidates;
  opt.workers = cfg.workers;
  MatchMap m = match_features(q, r, cfg.patch_size, cfg.match_stride, opt);
  if (cache_file) save_match_map(m, *cache_file);
  return m;
}

PreparedTriple prepare_triple(const TrainingTriple& t, const TrainConfig& cfg, const FeatureExtractor& extractor) {
  const PipelineGeometry g = pipeline_geometry(cfg.s);
  if (t.hr.height != t.lr.height * cfg.s || t.hr.width != t.lr.width * cfg.s)
    throw ArgumentError("triple '" + t.painting_id + "': HR is not s x LR");
  PreparedTriple p;
  p.lr = t.lr.to_tensor();
  p.gt = t.hr.to_tensor();
  p.match = match_images(t.lr, t.ref, cfg, extractor);
  const FeaturePyramid ref_pyr = extract_pyramid(t.ref, {g.transfer_level}, g.L, extractor);
  p.f_t = transfer_at_level(ref_pyr, p.match, g.transfer_level).data;
  if (cfg.weights.tex > 0.0) {
    const std::set<int> levels = cfg.texture_levels();
    if (cfg.symmetric_texture) {
      const ImageTensor hh = upsample_nearest2(remap_hh(extract_hh(t.ref)));
      p.tex = texture_targets(extract_pyramid(hh, levels, g.L, extractor), p.match, levels, cfg.weights);
    } else {
      p.tex = texture_targets(extract_pyramid(t.ref, levels, g.L, extractor), p.match, levels, cfg.weights);
    }
  }
  return p;
}

json to_json(const StepRecord& r) {
  return {{"phase", r.phase},
          {"step", r.step},
          {"epoch", r.epoch},
          {"rec", r.report.terms.rec},
          {"tex", r.report.terms.tex},
          {"deg", r.report.terms.deg},
          {"per", r.report.terms.per},
          {"adv", r.report.terms.adv},
          {"total", r.report.total},
          {"critic", r.critic_loss},
          {"wall_time", r.wall_time}};
}

// ---------------------------------------------------------------------------
// Degrader

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void append_log(const fs::path& out_dir, const StepRecord& r) {
  if (out_dir.empty()) return;
  fs::create_directories(out_dir);
  std::ofstream out(out_dir / "train_log.jsonl", std::ios::app);
  out << to_json(r).dump() << '\n';
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t salt, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(mix_seed(seed, salt), static_cast<std::uint64_t>(epoch)));
  rng.shuffle(order.begin(), order.end());
  return order;
}

}  // namespace

DegraderResult train_degrader(const std::vector<std::pair<ImageTensor, ImageTensor>>& pairs, const TrainConfig& cfg) {
  cfg.validate();
  if (pairs.empty()) throw ArgumentError("train_degrader: no training pairs");
  DegraderConfig dc = cfg.degrader;
  dc.s = cfg.s;

  std::size_t n_val = 0;
  if (pairs.size() >= 2 && cfg.degrader_val_fraction > 0.0)
    n_val = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(pairs.size() * cfg.degrader_val_fraction)),
                                    1, pairs.size() - 1);
  const std::size_t n_train = pairs.size() - n_val;

  auto stack = [&](auto first, auto last, bool hr) {
    std::vector<Tensor> ts;
    for (auto it = first; it != last; ++it) ts.push_back(hr ? pairs[*it].first.to_tensor() : pairs[*it].second.to_tensor());
    return Tensor::stack(ts);
  };
  std::vector<std::size_t> train_idx(n_train), val_idx(n_val);
  std::iota(train_idx.begin(), train_idx.end(), std::size_t{0});
  std::iota(val_idx.begin(), val_idx.end(), n_train);
  const std::vector<std::size_t>& eval_idx = n_val > 0 ? val_idx : train_idx;

  auto evaluate = [&](const NetworkParams& p, const std::vector<std::size_t>& idx) {
    BoundParams net(p, false);
    double acc = 0.0;
    for (std::size_t b = 0; b < idx.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      const auto e = std::min(idx.size(), b + static_cast<std::size_t>(cfg.batch_size));
      const Tensor hr = stack(idx.begin() + static_cast<std::ptrdiff_t>(b), idx.begin() + static_cast<std::ptrdiff_t>(e), true);
      const Tensor lr = stack(idx.begin() + static_cast<std::ptrdiff_t>(b), idx.begin() + static_cast<std::ptrdiff_t>(e), false);
      acc += ag::mean_abs_diff(degrader_forward(net, ag::constant(hr)), lr)->value.item() * static_cast<double>(e - b);
    }
    return acc / static_cast<double>(idx.size());
  };

  DegraderResult res;
  res.params = init_degrader(dc, mix_seed(cfg.seed, 0xD0));
  res.initial_train_l1 = evaluate(res.params, train_idx);
  res.initial_val_l1 = evaluate(res.params, eval_idx);
  res.best_val_l1 = res.initial_val_l1;
  NetworkParams current = res.params;
  Adam opt(AdamConfig{cfg.degrader_lr});
  const auto t0 = std::chrono::steady_clock::now();
  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.degrader_epochs; ++epoch) {
    const auto order = epoch_order(n_train, cfg.seed, 0xDE, epoch);
    bool stop = false;
    for (std::size_t b = 0; b < n_train; b += static_cast<std::size_t>(cfg.batch_size)) {
      if (cfg.stop_after_steps > 0 && step >= cfg.stop_after_steps) {
        stop = true;
        break;
      }
      ++step;
      const auto e = std::min(n_train, b + static_cast<std::size_t>(cfg.batch_size));
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(b), order.begin() + static_cast<std::ptrdiff_t>(e));
      BoundParams net(current, true);
      const ag::Var loss =
          ag::mean_abs_diff(degrader_forward(net, ag::constant(stack(idx.begin(), idx.end(), true))),
                            stack(idx.begin(), idx.end(), false));
      const double v = loss->value.item();
      if (!std::isfinite(v)) throw TrainingError("degrader diverged at step " + std::to_string(step) + ": loss is " + std::to_string(v));
      ag::backward(loss);
      opt.step(current, net.gradients());
      StepRecord r;
      r.phase = "degrader";
      r.step = step;
      r.epoch = epoch + 1;
      r.report.terms.deg = v;
      r.report.total = v;
      r.wall_time = seconds_since(t0);
      res.log.push_back(r);
      append_log(cfg.out_dir, r);
    }
    const double val = evaluate(current, eval_idx);
    spdlog::info("degrader epoch {}: held-out l1 {:.6f}", epoch + 1, val);
    if (val < res.best_val_l1) {
      res.best_val_l1 = val;
      res.params = current;
    }
    if (stop || (cfg.stop_after_steps > 0 && step >= cfg.stop_after_steps)) break;
  }
  res.final_train_l1 = evaluate(current, train_idx);
  if (!cfg.out_dir.empty()) save_params(res.params, cfg.out_dir / "degrader.ckpt");
  return res;
}

// ---------------------------------------------------------------------------
// Generator phases

namespace {

enum class Phase { Pretrain, Full };

const char* phase_name(Phase p) { return p == Phase::Pretrain ? "pretrain" : "full"; }

class PhaseRunner {
 public:
  PhaseRunner(Phase phase, const std::vector<TrainingTriple>& triples, const TrainConfig& cfg,
              const NetworkParams& degrader, const FeatureExtractor& extractor)
      : phase_(phase), cfg_(cfg), degrader_(degrader), extractor_(extractor), geom_(pipeline_geometry(cfg.s)) {
    cfg.validate();
    require_arch(degrader, "degrader");
    if (degrader_config(degrader).s != cfg.s)
      throw ConfigurationError("degrader was trained for s=" + std::to_string(degrader_config(degrader).s) +
                               ", config has s=" + std::to_string(cfg.s));
    if (triples.empty()) throw ArgumentError(std::string(phase_name(phase)) + ": no training triples");
    data_.reserve(triples.size());
    for (const TrainingTriple& t : triples) data_.push_back(prepare_triple(t, cfg, extractor));
    for (const PreparedTriple& p : data_)
      if (!p.gt.same_shape(data_.front().gt) || !p.lr.same_shape(data_.front().lr))
        throw ArgumentError("training triples must share one tile size");
    opt_up_ = Adam(AdamConfig{cfg.lr_rate});
    opt_fu_ = Adam(AdamConfig{cfg.lr_rate});
    opt_cr_ = Adam(AdamConfig{cfg.lr_rate});
  }

  PhaseResult run(Generator gen, const fs::path& resume_from, const StepCallback& on_step) {
    gen_ = std::move(gen);
    if (upscaler_config(gen_.upscaler).s != cfg_.s)
      throw ConfigurationError("generator upscaler is for s=" + std::to_string(upscaler_config(gen_.upscaler).s) +
                               ", config has s=" + std::to_string(cfg_.s));
    if (fusion_config(gen_.fusion).transfer_channels != extractor_.stage_channels(geom_.transfer_stage))
      throw ConfigurationError("generator fusion head expects " +
                               std::to_string(fusion_config(gen_.fusion).transfer_channels) +
                               " transferred channels, extractor provides " +
                               std::to_string(extractor_.stage_channels(geom_.transfer_stage)));
    if (phase_ == Phase::Full) critic_ = init_critic(cfg_.critic, mix_seed(cfg_.seed, 0xC1));

    const int epochs = phase_ == Phase::Pretrain ? cfg_.pretrain_epochs : cfg_.full_epochs;
    const std::int64_t per_epoch =
        static_cast<std::int64_t>((data_.size() + static_cast<std::size_t>(cfg_.batch_size) - 1) / cfg_.batch_size);
    const std::int64_t total = per_epoch * epochs;
    std::int64_t step = 0;
    if (!resume_from.empty()) step = restore(resume_from);

    PhaseResult res;
    const auto t0 = std::chrono::steady_clock::now();
    std::int64_t ran = 0;
    while (step < total) {
      if (cfg_.stop_after_steps > 0 && ran >= cfg_.stop_after_steps) break;
      ++step;
      ++ran;
      const int epoch = static_cast<int>((step - 1) / per_epoch);
      const std::int64_t pos = (step - 1) % per_epoch;
      const auto order = epoch_order(data_.size(), cfg_.seed, phase_ == Phase::Pretrain ? 0xA1 : 0xB2, epoch);
      const auto b = static_cast<std::size_t>(pos) * static_cast<std::size_t>(cfg_.batch_size);
      const auto e = std::min(data_.size(), b + static_cast<std::size_t>(cfg_.batch_size));
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(b),
                                     order.begin() + static_cast<std::ptrdiff_t>(e));

      StepRecord rec = train_step(step, batch);
      rec.epoch = epoch + 1;
      rec.wall_time = seconds_since(t0);
      res.log.push_back(rec);
      append_log(cfg_.out_dir, rec);
      if (on_step) on_step(rec);

      if (pos + 1 == per_epoch) checkpoint(step, "epoch" + std::to_string(epoch + 1));
      else if (cfg_.checkpoint_every > 0 && step % cfg_.checkpoint_every == 0) checkpoint(step, "step" + std::to_string(step));
    }
    res.steps_done = step;
    res.completed = step >= total;
    if (!res.completed || total == 0) checkpoint(step, res.completed ? "initial" : "step" + std::to_string(step));
    res.generator = gen_;
    res.critic = critic_;
    return res;
  }

 private:
  struct Batch {
    Tensor lr, gt, f_t;
    std::vector<std::vector<TextureTarget>> tex;
  };

  Batch gather(const std::vector<std::size_t>& idx) const {
    std::vector<Tensor> lr, gt, ft;
    Batch b;
    for (std::size_t i : idx) {
      lr.push_back(data_[i].lr);
      gt.push_back(data_[i].gt);
      ft.push_back(data_[i].f_t);
      b.tex.push_back(data_[i].tex);
    }
    b.lr = Tensor::stack(lr);
    b.gt = Tensor::stack(gt);
    b.f_t = Tensor::stack(ft);
    return b;
  }

  StepRecord train_step(std::int64_t step, const std::vector<std::size_t>& idx) {
    const Batch b = gather(idx);
    const LossWeights& w = cfg_.weights;
    StepRecord rec;
    rec.phase = phase_name(phase_);
    rec.step = step;

    if (phase_ == Phase::Full && cfg_.critic_steps_per_gen > 0) {
      const int n_critic = step <= cfg_.critic_warmup_steps ? cfg_.critic_warmup_ratio : cfg_.critic_steps_per_gen;
      if (n_critic > 0) {
        BoundParams up(gen_.upscaler, false), fu(gen_.fusion, false);
        const Tensor sr = fusion_forward(fu, upscaler_forward(up, ag::constant(b.lr)), ag::constant(b.f_t))->value;
        for (int j = 0; j < n_critic; ++j) {
          Rng rng(mix_seed(mix_seed(cfg_.seed, static_cast<std::uint64_t>(step)), static_cast<std::uint64_t>(j)));
          std::vector<double> eps(idx.size());
          for (double& v : eps) v = rng.uniform();
          CriticLoss cl = critic_loss(critic_, b.gt, sr, eps, w.gp_coef);
          if (!std::isfinite(cl.total))
            throw TrainingError("step " + std::to_string(step) + ": critic loss is not finite");
          opt_cr_.step(critic_, cl.gradients);
          rec.critic_loss = cl.total;
        }
      }
    }

    BoundParams up(gen_.upscaler, true), fu(gen_.fusion, true);
    const ag::Var sr = fusion_forward(fu, upscaler_forward(up, ag::constant(b.lr)), ag::constant(b.f_t));
    LossTerms terms;
    const ag::Var rec_v = rec_loss(sr, b.gt);
    terms.rec = rec_v->value.item();
    ag::Var total = ag::scale(rec_v, w.rec);
    if (w.tex > 0.0) {
      const ag::Var t = tex_loss(sr, b.tex, geom_.L, extractor_);
      terms.tex = t->value.item();
      total = ag::add(total, ag::scale(t, w.tex));
    }
    if (phase_ == Phase::Full) {
      if (w.deg > 0.0) {
        BoundParams deg(degrader_, false);
        const ag::Var d = deg_loss(sr, b.lr, deg);
        terms.deg = d->value.item();
        total = ag::add(total, ag::scale(d, w.deg));
      }
      if (w.per > 0.0) {
        const ag::Var p = per_loss(sr, b.gt, extractor_);
        terms.per = p->value.item();
        total = ag::add(total, ag::scale(p, w.per));
      }
      if (w.adv > 0.0) {
        BoundParams cr(critic_, false);
        const ag::Var a = adv_g_loss(sr, cr);
        terms.adv = a->value.item();
        total = ag::add(total, ag::scale(a, w.adv));
      }
    }
    try {
      rec.report = total_loss(terms, w);
    } catch (const NumericError& e) {
      throw TrainingError(std::string(phase_name(phase_)) + " step " + std::to_string(step) + ": " + e.what());
    }
    ag::backward(total);
    opt_up_.step(gen_.upscaler, up.gradients());
    opt_fu_.step(gen_.fusion, fu.gradients());
    return rec;
  }

  void checkpoint(std::int64_t step, const std::string& tag) const {
    if (cfg_.out_dir.empty()) return;
    NetworkParams state;
    state.arch_id = "train_state";
    state.config = {{"phase", phase_name(phase_)}, {"step", step}, {"config", cfg_.to_json()}};
    std::vector<NetworkParams> sections{gen_.upscaler, gen_.fusion, opt_up_.state("upscaler"), opt_fu_.state("fusion"),
                                        state};
    if (phase_ == Phase::Full) {
      sections.push_back(critic_);
      sections.push_back(opt_cr_.state("critic"));
    }
    const fs::path dir = cfg_.out_dir / "checkpoints";
    save_bundle(sections, dir / (std::string(phase_name(phase_)) + "_" + tag + ".ckpt"));
    save_bundle(sections, dir / (std::string(phase_name(phase_)) + "_latest.ckpt"));
  }

  std::int64_t restore(const fs::path& path) {
    const auto sections = load_bundle(path);
    const NetworkParams& state = find_section(sections, "train_state");
    if (state.config.value("phase", "") != phase_name(phase_))
      throw ConfigurationError("checkpoint '" + path.string() + "' belongs to phase '" +
                               state.config.value("phase", "") + "', not '" + phase_name(phase_) + "'");
    gen_.upscaler = find_section(sections, "upscaler");
    gen_.fusion = find_section(sections, "fusion");
    opt_up_.load_state(find_section(sections, "adam:upscaler"));
    opt_fu_.load_state(find_section(sections, "adam:fusion"));
    if (phase_ == Phase::Full) {
      critic_ = find_section(sections, "critic");
      opt_cr_.load_state(find_section(sections, "adam:critic"));
    }
    return state.config.at("step").get<std::int64_t>();
  }

  Phase phase_;
  const TrainConfig& cfg_;
  const NetworkParams& degrader_;
  const FeatureExtractor& extractor_;
  PipelineGeometry geom_;
  std::vector<PreparedTriple> data_;
  Generator gen_;
  NetworkParams critic_;
  Adam opt_up_, opt_fu_, opt_cr_;
};

}  // namespace

PhaseResult pretrain_generator(const std::vector<TrainingTriple>& triples, const TrainConfig& cfg,
                               const NetworkParams& degrader, const FeatureExtractor& extractor,
                               const std::optional<Generator>& init, const fs::path& resume_from,
                               const StepCallback& on_step) {
  PhaseRunner runner(Phase::Pretrain, triples, cfg, degrader, extractor);
  const Generator start =
      init ? *init : init_generator(cfg, extractor.stage_channels(pipeline_geometry(cfg.s).transfer_stage));
  return runner.run(start, resume_from, on_step);
}

PhaseResult train_full(const std::vector<TrainingTriple>& triples, const TrainConfig& cfg,
                       const NetworkParams& degrader, const FeatureExtractor& extractor, const Generator& init,
                       const fs::path& resume_from, const StepCallback& on_step) {
  PhaseRunner runner(Phase::Full, triples, cfg, degrader, extractor);
  return runner.run(init, resume_from, on_step);
}

ImageTensor super_resolve(const ImageTensor& lr, const ImageTensor& ref, const Generator& gen, const TrainConfig& cfg,
                          const FeatureExtractor& extractor) {
  const PipelineGeometry g = pipeline_geometry(cfg.s);
  if (upscaler_config(gen.upscaler).s != cfg.s)
    throw ConfigurationError("generator upscaler is for s=" + std::to_string(upscaler_config(gen.upscaler).s) +
                             ", requested s=" + std::to_string(cfg.s));
  check_image(lr, "super_resolve");
  if (lr.channels != 3 || ref.channels != 3) throw ArgumentError("super_resolve: LR and reference must be RGB");
  const MatchMap m = match_images(lr, ref, cfg, extractor);
  const FeaturePyramid ref_pyr = extract_pyramid(ref, {g.transfer_level}, g.L, extractor);
  const TransferredFeature f_t = transfer_at_level(ref_pyr, m, g.transfer_level);
  return fuse_reconstruct(upscale_features(lr, gen.upscaler), f_t, gen.fusion);
}

}  // namespace refsr
