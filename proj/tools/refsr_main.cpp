#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "refsr/checkpoint.hpp"
#include "refsr/dataset.hpp"
#include "refsr/errors.hpp"
#include "refsr/image.hpp"
#include "refsr/matching.hpp"
#include "refsr/metrics.hpp"
#include "refsr/parallel.hpp"
#include "refsr/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace refsr;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataOptions {
  fs::path manifest;
  fs::path out = "data";
  double min_ppi = 0.0;
  long n_train = -1;  // -1: every eligible painting not used for test
  long n_test = 2;
  int tile_hr = 64;
  int tile_ref = 0;
  int tiles_per_painting = 4;
  int refs_per_tile = 1;

  json to_json() const {
    return {{"manifest", manifest.string()}, {"out", out.string()},   {"min_ppi", min_ppi},
            {"n_train", n_train},            {"n_test", n_test},      {"tile_hr", tile_hr},
            {"tile_ref", tile_ref},          {"tiles_per_painting", tiles_per_painting},
            {"refs_per_tile", refs_per_tile}};
  }
};

struct EvalOptions {
  fs::path niqe_model;
  fs::path ma_scores;

  json to_json() const { return {{"niqe_model", niqe_model.string()}, {"ma_scores", ma_scores.string()}}; }
};

// Values given on the command line; unset ones leave the config file untouched.
struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<int> scale;
  std::optional<int> epochs_pretrain, epochs_full, epochs_degrader;
  std::optional<double> lr_rate;
  std::optional<std::int64_t> stop_after;
  std::string log_level = "info";

  std::string manifest, data_out, data_dir, out_dir, degrader, resume, checkpoint, lr_image, ref_image, sr_out;
  std::optional<int> tile, tile_ref, tiles_per_painting;
  std::optional<long> n_train, n_test;
  std::optional<double> min_ppi;
  bool dry_run = false;
  int bit_depth = 8;
  std::string eval_dir, sr_dir, gt_dir, niqe_model, ma_scores, table_out, images_dir;
  int niqe_patch = kNiqePatch;
};

struct RunConfig {
  TrainConfig train;
  DataOptions data;
  EvalOptions eval;

  json to_json() const { return {{"train", train.to_json()}, {"data", data.to_json()}, {"eval", eval.to_json()}}; }
};

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigurationError(std::string("config key '") + key + "': " + e.what());
  }
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; }))
      throw ConfigurationError("unknown config key '" + where + it.key() + "'");
}

RunConfig read_config_file(const fs::path& path) {
  RunConfig rc;
  if (path.empty()) return rc;
  std::ifstream in(path);
  if (!in) throw ConfigurationError("config file not found: '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigurationError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigurationError("config file must hold a JSON object");
  check_keys(j, {"train", "data", "eval"}, "");
  if (j.contains("train")) rc.train = TrainConfig::from_json(j.at("train"));
  if (j.contains("data")) {
    const json& d = j.at("data");
    check_keys(d,
               {"manifest", "out", "min_ppi", "n_train", "n_test", "tile_hr", "tile_ref", "tiles_per_painting",
                "refs_per_tile"},
               "data.");
    std::string manifest = rc.data.manifest.string(), out = rc.data.out.string();
    take(d, "manifest", manifest);
    take(d, "out", out);
    rc.data.manifest = manifest;
    rc.data.out = out;
    take(d, "min_ppi", rc.data.min_ppi);
    take(d, "n_train", rc.data.n_train);
    take(d, "n_test", rc.data.n_test);
    take(d, "tile_hr", rc.data.tile_hr);
    take(d, "tile_ref", rc.data.tile_ref);
    take(d, "tiles_per_painting", rc.data.tiles_per_painting);
    take(d, "refs_per_tile", rc.data.refs_per_tile);
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    check_keys(e, {"niqe_model", "ma_scores"}, "eval.");
    std::string niqe_model, ma;
    take(e, "niqe_model", niqe_model);
    take(e, "ma_scores", ma);
    rc.eval.niqe_model = niqe_model;
    rc.eval.ma_scores = ma;
  }
  return rc;
}

void set_scale(TrainConfig& cfg, int s) {
  const PipelineGeometry g = pipeline_geometry(s);
  cfg.s = s;
  cfg.L = g.L;
  cfg.upscaler.s = s;
  cfg.degrader.s = s;
}

RunConfig resolve(const Flags& f, const std::optional<TrainConfig>& base = std::nullopt) {
  RunConfig rc = read_config_file(f.config);
  const bool workers_in_file = !f.config.empty() && rc.train.workers != TrainConfig{}.workers;
  if (base) rc.train = *base;
  if (f.seed) rc.train.seed = *f.seed;
  if (f.workers) rc.train.workers = *f.workers;
  else if (!base && !workers_in_file) rc.train.workers = default_workers();
  if (f.scale) set_scale(rc.train, *f.scale);
  if (f.epochs_pretrain) rc.train.pretrain_epochs = *f.epochs_pretrain;
  if (f.epochs_full) rc.train.full_epochs = *f.epochs_full;
  if (f.epochs_degrader) rc.train.degrader_epochs = *f.epochs_degrader;
  if (f.lr_rate) {
    rc.train.lr_rate = *f.lr_rate;
    rc.train.degrader_lr = *f.lr_rate;
  }
  if (f.stop_after) rc.train.stop_after_steps = *f.stop_after;
  if (!f.manifest.empty()) rc.data.manifest = f.manifest;
  if (!f.data_out.empty()) rc.data.out = f.data_out;
  if (f.tile) rc.data.tile_hr = *f.tile;
  if (f.tile_ref) rc.data.tile_ref = *f.tile_ref;
  if (f.tiles_per_painting) rc.data.tiles_per_painting = *f.tiles_per_painting;
  if (f.n_train) rc.data.n_train = *f.n_train;
  if (f.n_test) rc.data.n_test = *f.n_test;
  if (f.min_ppi) rc.data.min_ppi = *f.min_ppi;
  if (!f.niqe_model.empty()) rc.eval.niqe_model = f.niqe_model;
  if (!f.ma_scores.empty()) rc.eval.ma_scores = f.ma_scores;
  rc.train.validate();
  return rc;
}

void echo(const RunConfig& rc, const char* command) {
  std::cout << "# effective config (" << command << ")\n" << rc.to_json().dump(2) << "\n";
}

void require_exists(const fs::path& p, const std::string& what) {
  if (p.empty()) throw UsageError(what + " is required");
  if (!fs::exists(p)) throw UsageError(what + " not found: '" + p.string() + "'");
}

fs::path triples_dir(const fs::path& data, const char* split) {
  return fs::is_directory(data / split) ? data / split : data;
}

// ---------------------------------------------------------------------------

int cmd_prepare_data(const Flags& f) {
  RunConfig rc = resolve(f);
  echo(rc, "prepare-data");
  if (rc.data.manifest.empty()) throw UsageError("--manifest is required");
  if (!fs::exists(rc.data.manifest)) throw UsageError("manifest not found: '" + rc.data.manifest.string() + "'");

  const Manifest m = ingest_manifest(rc.data.manifest);
  const std::size_t eligible = static_cast<std::size_t>(std::count_if(
      m.records.begin(), m.records.end(), [&](const PaintingRecord& r) { return r.ppi >= rc.data.min_ppi; }));
  if (rc.data.n_test < 0) throw UsageError("--n-test must be >= 0");
  const auto n_test = static_cast<std::size_t>(rc.data.n_test);
  const std::size_t n_train =
      rc.data.n_train >= 0 ? static_cast<std::size_t>(rc.data.n_train) : (eligible > n_test ? eligible - n_test : 0);
  const Split split = select_by_ppi(m.records, rc.data.min_ppi, n_train, n_test, rc.train.seed);

  TripleOptions opt;
  opt.s = rc.train.s;
  opt.tile_hr = rc.data.tile_hr;
  opt.tile_ref = rc.data.tile_ref;
  opt.tiles_per_painting = rc.data.tiles_per_painting;
  opt.refs_per_tile = rc.data.refs_per_tile;
  opt.seed = rc.train.seed;
  const std::vector<TrainingTriple> train = make_triples(split.train, opt);
  std::vector<TrainingTriple> test;
  if (split.test.size() >= 2) {
    opt.seed = mix_seed(rc.train.seed, 0x7E57);
    test = make_triples(split.test, opt);
  } else if (!split.test.empty()) {
    spdlog::warn("test split has {} painting; at least 2 are needed to pair references, no test tiles written",
                 split.test.size());
  }

  std::cout << "manifest rows accepted: " << m.records.size() << "\n"
            << "manifest rows rejected: " << m.rejections.size() << "\n"
            << "eligible paintings (ppi >= " << rc.data.min_ppi << "): " << eligible << "\n"
            << "train paintings: " << split.train.size() << "\n"
            << "test paintings: " << split.test.size() << "\n"
            << "train triples: " << train.size() << "\n"
            << "test triples: " << test.size() << "\n";
  if (f.dry_run) {
    std::cout << "dry run: nothing written\n";
    return kExitOk;
  }
  fs::create_directories(rc.data.out);
  write_split_file(split.train, rc.data.out / "train_split.csv");
  write_split_file(split.test, rc.data.out / "test_split.csv");
  materialize_triples(train, rc.data.out / "train");
  if (!test.empty()) materialize_triples(test, rc.data.out / "test");
  std::cout << "wrote " << (rc.data.out / "train_split.csv").string() << ", "
            << (rc.data.out / "test_split.csv").string() << " and tile directories under " << rc.data.out.string()
            << "\n";
  return kExitOk;
}

int cmd_train_degradation(const Flags& f) {
  RunConfig rc = resolve(f);
  require_exists(f.data_dir, "--data");
  if (f.out_dir.empty()) throw UsageError("--out is required");
  rc.train.out_dir = f.out_dir;
  echo(rc, "train-degradation");
  const auto triples = load_triples(triples_dir(f.data_dir, "train"), rc.train.s);
  if (triples.empty()) throw UsageError("no triples found under '" + f.data_dir + "'");
  std::vector<std::pair<ImageTensor, ImageTensor>> pairs;
  for (const auto& t : triples) pairs.emplace_back(t.hr, t.lr);
  fs::create_directories(rc.train.out_dir);
  const DegraderResult res = train_degrader(pairs, rc.train);
  std::cout << "degrader pairs: " << pairs.size() << "\n"
            << "initial held-out l1: " << res.initial_val_l1 << "\n"
            << "best held-out l1: " << res.best_val_l1 << "\n"
            << "final train l1: " << res.final_train_l1 << "\n"
            << "wrote " << (rc.train.out_dir / "degrader.ckpt").string() << "\n";
  return kExitOk;
}

void save_run_generator(const Generator& gen, const TrainConfig& cfg, const fs::path& path) {
  NetworkParams run;
  run.arch_id = "train_config";
  run.config = cfg.to_json();
  save_bundle({gen.upscaler, gen.fusion, run}, path);
}

std::optional<TrainConfig> checkpoint_config(const std::vector<NetworkParams>& sections) {
  for (const NetworkParams& p : sections) {
    if (p.arch_id == "train_config") return TrainConfig::from_json(p.config);
    if (p.arch_id == "train_state" && p.config.contains("config"))
      return TrainConfig::from_json(p.config.at("config"));
  }
  return std::nullopt;
}

int cmd_train(const Flags& f) {
  RunConfig rc = resolve(f);
  require_exists(f.data_dir, "--data");
  const bool needs_degrader = rc.train.full_epochs > 0;
  if (needs_degrader || !f.degrader.empty()) require_exists(f.degrader, "--degrader");
  if (f.out_dir.empty()) throw UsageError("--out is required");
  rc.train.out_dir = f.out_dir;
  echo(rc, "train");
  const TrainConfig& cfg = rc.train;

  const auto triples = load_triples(triples_dir(f.data_dir, "train"), cfg.s);
  if (triples.empty()) throw UsageError("no triples found under '" + f.data_dir + "'");
  const NetworkParams degrader = f.degrader.empty() ? init_degrader(cfg.degrader, cfg.seed) : load_params(f.degrader);
  const auto extractor = make_extractor(cfg.extractor_config());
  fs::create_directories(cfg.out_dir);

  auto report = [](const StepRecord& r) {
    spdlog::info("{} step {} epoch {}: total {:.6f} rec {:.6f}", r.phase, r.step, r.epoch, r.report.total,
                 r.report.terms.rec);
  };

  std::string resume_phase;
  if (!f.resume.empty()) {
    require_exists(f.resume, "--resume");
    const auto sections = load_bundle(f.resume);
    resume_phase = find_section(sections, "train_state").config.value("phase", "");
  }

  std::optional<Generator> gen;
  bool stopped = false;
  if (resume_phase != "full" && (cfg.pretrain_epochs > 0 || cfg.full_epochs == 0)) {
    PhaseResult pre = pretrain_generator(triples, cfg, degrader, *extractor, std::nullopt,
                                         resume_phase == "pretrain" ? fs::path(f.resume) : fs::path(), report);
    gen = pre.generator;
    stopped = !pre.completed;
    std::cout << "pretrain steps: " << pre.steps_done << (pre.completed ? "" : " (stopped early)") << "\n";
  }
  if (!stopped && cfg.full_epochs > 0) {
    Generator init = gen ? *gen : init_generator(cfg, extractor->stage_channels(pipeline_geometry(cfg.s).transfer_stage));
    if (resume_phase == "full") init = load_generator(f.resume);
    PhaseResult full = train_full(triples, cfg, degrader, *extractor, init,
                                  resume_phase == "full" ? fs::path(f.resume) : fs::path(), report);
    gen = full.generator;
    stopped = !full.completed;
    std::cout << "full steps: " << full.steps_done << (full.completed ? "" : " (stopped early)") << "\n";
  }
  if (cfg.pretrain_epochs + cfg.full_epochs == 0) {
    std::cout << "no epochs requested: wrote " << (cfg.out_dir / "checkpoints" / "pretrain_initial.ckpt").string()
              << "\n";
    return kExitOk;
  }
  if (gen && !stopped) {
    save_run_generator(*gen, cfg, cfg.out_dir / "generator.ckpt");
    std::cout << "wrote " << (cfg.out_dir / "generator.ckpt").string() << "\n";
  }
  return kExitOk;
}

int cmd_super_resolve(const Flags& f) {
  require_exists(f.lr_image, "--lr");
  require_exists(f.ref_image, "--ref");
  require_exists(f.checkpoint, "--checkpoint");
  if (f.sr_out.empty()) throw UsageError("--out is required");
  const auto sections = load_bundle(f.checkpoint);
  const std::optional<TrainConfig> stored = checkpoint_config(sections);
  Flags g = f;
  g.scale.reset();
  RunConfig rc = resolve(g, stored);
  if (f.scale && *f.scale != rc.train.s)
    throw UsageError("--scale " + std::to_string(*f.scale) + " does not match the checkpoint (s=" +
                     std::to_string(rc.train.s) + ")");
  echo(rc, "super-resolve");
  const Generator gen{find_section(sections, "upscaler"), find_section(sections, "fusion")};
  const auto extractor = make_extractor(rc.train.extractor_config());
  const ImageTensor lr = load_image(f.lr_image);
  const ImageTensor ref = load_image(f.ref_image);
  const ImageTensor sr = super_resolve(lr, ref, gen, rc.train, *extractor);
  if (sr.height != lr.height * rc.train.s || sr.width != lr.width * rc.train.s)
    throw Error("super_resolve returned " + std::to_string(sr.height) + "x" + std::to_string(sr.width));
  if (!fs::path(f.sr_out).parent_path().empty()) fs::create_directories(fs::path(f.sr_out).parent_path());
  save_image(sr, f.sr_out, f.bit_depth);
  std::cout << "wrote " << f.sr_out << " (" << sr.width << "x" << sr.height << ")\n";
  return kExitOk;
}

int cmd_evaluate(const Flags& f) {
  RunConfig rc = resolve(f);
  echo(rc, "evaluate");
  struct Pair {
    std::string id;
    fs::path sr, gt;
  };
  std::vector<Pair> pairs;
  if (!f.eval_dir.empty()) {
    if (!f.sr_dir.empty() || !f.gt_dir.empty()) throw UsageError("use either --dir or --sr-dir/--gt-dir");
    require_exists(f.eval_dir, "--dir");
    for (const auto& e : fs::directory_iterator(f.eval_dir)) {
      const std::string name = e.path().filename().string();
      const auto pos = name.rfind("_sr.");
      if (pos == std::string::npos) continue;
      const std::string id = name.substr(0, pos);
      const fs::path gt = e.path().parent_path() / (id + "_gt" + e.path().extension().string());
      if (!fs::exists(gt)) throw UsageError("no ground truth for '" + name + "' (expected " + gt.filename().string() + ")");
      pairs.push_back({id, e.path(), gt});
    }
  } else {
    require_exists(f.sr_dir, "--sr-dir");
    require_exists(f.gt_dir, "--gt-dir");
    for (const auto& e : fs::directory_iterator(f.sr_dir)) {
      if (!e.is_regular_file()) continue;
      const fs::path gt = fs::path(f.gt_dir) / e.path().filename();
      if (!fs::exists(gt)) throw UsageError("no ground truth for '" + e.path().filename().string() + "'");
      pairs.push_back({e.path().stem().string(), e.path(), gt});
    }
  }
  if (pairs.empty()) throw UsageError("no (sr, gt) pairs found");
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.id < b.id; });

  std::optional<NiqeModel> model;
  if (!rc.eval.niqe_model.empty()) model = load_niqe_model(rc.eval.niqe_model);
  std::map<std::string, double> ma;
  if (!rc.eval.ma_scores.empty()) ma = load_ma_scores(rc.eval.ma_scores);

  std::vector<EvalRow> rows;
  for (const Pair& p : pairs) {
    const ImageTensor sr = load_image(p.sr), gt = load_image(p.gt);
    EvalRow row;
    row.image_id = p.id;
    row.psnr = psnr(sr, gt);
    row.ssim = ssim(sr, gt);
    if (model) {
      if (sr.height >= model->patch_size && sr.width >= model->patch_size) row.niqe = niqe(sr, *model);
      else spdlog::warn("{}: smaller than one NIQE patch, niqe reported as n/a", p.id);
    }
    if (auto it = ma.find(p.id); it != ma.end()) row.ma = it->second;
    if (row.ma && row.niqe) row.pi = perceptual_index(*row.ma, *row.niqe);
    rows.push_back(row);
  }
  const std::string table = format_eval_table(rows);
  std::cout << table;
  if (!f.table_out.empty()) {
    write_file_atomic(f.table_out, std::vector<std::uint8_t>(table.begin(), table.end()));
    std::cout << "wrote " << f.table_out << "\n";
  }
  return kExitOk;
}

int cmd_fit_niqe(const Flags& f) {
  RunConfig rc = resolve(f);
  echo(rc, "fit-niqe");
  require_exists(f.images_dir, "--images");
  if (f.table_out.empty()) throw UsageError("--out is required");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(f.images_dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<ImageTensor> corpus;
  for (const auto& p : files) corpus.push_back(load_image(p));
  const NiqeModel m = fit_niqe(corpus, f.niqe_patch);
  save_niqe_model(m, f.table_out);
  std::cout << "pristine patches: " << m.n_patches << "\nwrote " << f.table_out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("refsr"));

  CLI::App app{"Reference-based super-resolution of painting images"};
  app.require_subcommand(0, 1);
  app.fallthrough();
  Flags f;
  bool version = false;
  app.add_flag("--version", version, "Print artifact and file-format versions");
  app.add_option("--config", f.config, "JSON config file (sections: train, data, eval); flags override it");
  app.add_option("--seed", f.seed, "Random seed");
  app.add_option("--workers", f.workers, "Worker threads (default: machine cores)")->check(CLI::PositiveNumber);
  app.add_option("--log-level", f.log_level, "trace, debug, info, warn, error")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  auto* prep = app.add_subcommand("prepare-data", "Ingest a manifest, split by PPI and cut training triples");
  prep->add_option("--manifest", f.manifest, "Painting manifest (CSV)");
  prep->add_option("--out", f.data_out, "Output directory");
  prep->add_option("--scale", f.scale, "Scale factor")->check(CLI::IsMember({4, 8, 16}));
  prep->add_option("--tile", f.tile, "HR tile side");
  prep->add_option("--tile-ref", f.tile_ref, "Reference tile side (default: tile)");
  prep->add_option("--tiles-per-painting", f.tiles_per_painting, "Tiles per painting");
  prep->add_option("--n-train", f.n_train, "Training paintings (default: all remaining)");
  prep->add_option("--n-test", f.n_test, "Test paintings");
  prep->add_option("--min-ppi", f.min_ppi, "Minimum pixels per inch");
  prep->add_flag("--dry-run", f.dry_run, "Print counts without writing anything");

  auto* deg = app.add_subcommand("train-degradation", "Train the degradation network on (HR, LR) tile pairs");
  deg->add_option("--data", f.data_dir, "Directory written by prepare-data");
  deg->add_option("--out", f.out_dir, "Output directory");
  deg->add_option("--scale", f.scale, "Scale factor")->check(CLI::IsMember({4, 8, 16}));
  deg->add_option("--epochs", f.epochs_degrader, "Training epochs");
  deg->add_option("--lr-rate", f.lr_rate, "Adam learning rate");

  auto* train = app.add_subcommand("train", "Pretrain and adversarially train the generator");
  train->add_option("--data", f.data_dir, "Directory written by prepare-data");
  train->add_option("--degrader", f.degrader, "Degrader checkpoint (required when --epochs-full > 0)");
  train->add_option("--out", f.out_dir, "Output directory");
  train->add_option("--scale", f.scale, "Scale factor")->check(CLI::IsMember({4, 8, 16}));
  train->add_option("--epochs-pretrain", f.epochs_pretrain, "Pretraining epochs")->check(CLI::NonNegativeNumber);
  train->add_option("--epochs-full", f.epochs_full, "Adversarial epochs")->check(CLI::NonNegativeNumber);
  train->add_option("--lr-rate", f.lr_rate, "Adam learning rate");
  train->add_option("--resume", f.resume, "Phase checkpoint to resume from");
  train->add_option("--stop-after", f.stop_after, "Stop each phase after this many steps");

  auto* sr = app.add_subcommand("super-resolve", "Upscale one image using a reference");
  sr->add_option("--lr", f.lr_image, "Low-resolution input");
  sr->add_option("--ref", f.ref_image, "Reference image");
  sr->add_option("--checkpoint", f.checkpoint, "Generator checkpoint");
  sr->add_option("--scale", f.scale, "Scale factor")->check(CLI::IsMember({8, 16}));
  sr->add_option("--out", f.sr_out, "Output image");
  sr->add_option("--bit-depth", f.bit_depth, "PNG bit depth")->check(CLI::IsMember({8, 16}));

  auto* ev = app.add_subcommand("evaluate", "PSNR, SSIM, NIQE and PI over (sr, gt) pairs");
  ev->add_option("--dir", f.eval_dir, "Directory of <id>_sr.png / <id>_gt.png pairs");
  ev->add_option("--sr-dir", f.sr_dir, "Directory of SR images");
  ev->add_option("--gt-dir", f.gt_dir, "Directory of ground-truth images with the same file names");
  ev->add_option("--niqe-model", f.niqe_model, "Fitted NIQE model (JSON)");
  ev->add_option("--ma-scores", f.ma_scores, "CSV of externally computed Ma scores");
  ev->add_option("--out", f.table_out, "Write the metrics table here");

  auto* fit = app.add_subcommand("fit-niqe", "Fit the pristine NIQE model on a directory of sharp images");
  fit->add_option("--images", f.images_dir, "Image directory");
  fit->add_option("--out", f.table_out, "Model file (JSON)");
  fit->add_option("--patch", f.niqe_patch, "Patch side")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }
  spdlog::set_level(spdlog::level::from_str(f.log_level));

  if (version) {
    std::cout << "refsr " << REFSR_VERSION << "\n"
              << "checkpoint format " << kCheckpointFormatVersion << "\n"
              << "match map format " << kMatchMapFormatVersion << "\n";
    return kExitOk;
  }
  if (app.get_subcommands().empty()) {
    std::cerr << app.help();
    return kExitUsage;
  }

  try {
    if (*prep) return cmd_prepare_data(f);
    if (*deg) return cmd_train_degradation(f);
    if (*train) return cmd_train(f);
    if (*sr) return cmd_super_resolve(f);
    if (*ev) return cmd_evaluate(f);
    if (*fit) return cmd_fit_niqe(f);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigurationError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
