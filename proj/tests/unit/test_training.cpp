#include <doctest.h>

#include "desk.hpp"
#include "refsr/errors.hpp"
#include "refsr/training.hpp"
#include "synthetic.hpp"

using namespace refsr;
using namespace refsr::testing;

TEST_SUITE("training") {
  TEST_CASE("pipeline geometry") {
    for (auto [s, L] : {std::pair{4, 2}, std::pair{8, 3}, std::pair{16, 4}}) {
      const PipelineGeometry g = pipeline_geometry(s);
      CHECK(g.L == L);
      CHECK(g.match_level == L - 2);
      CHECK(g.transfer_level == L);
      CHECK(g.scale_gap == 4);
      CHECK(g.transfer_stage == 0);
      CHECK(g.match_stage == 2);
    }
    for (int s : {0, 2, 3, 6, 32}) CHECK_THROWS_AS(pipeline_geometry(s), ArgumentError);
  }

  TEST_CASE("config json round trip and validation") {
    TrainConfig c = desk_config(16);
    c.weights.lambda[3] = 0.25;
    c.tex_levels = {2, 4};
    c.vgg_checksum = 42;
    const TrainConfig back = TrainConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK(back.texture_levels() == std::set<int>{2, 4});
    CHECK(desk_config(8).texture_levels() == std::set<int>{1, 2, 3});

    nlohmann::json j = c.to_json();
    j["bogus"] = 1;
    CHECK_THROWS_AS(TrainConfig::from_json(j), ConfigurationError);
    TrainConfig bad = desk_config(8);
    bad.L = 4;
    CHECK_THROWS_AS(bad.validate(), ConfigurationError);
    bad = desk_config(8);
    bad.full_epochs = -1;
    CHECK_THROWS_AS(bad.validate(), ConfigurationError);
  }

  TEST_CASE("generator bundle round trip") {
    TempDir dir("gen");
    const Generator g = init_generator(desk_config(8), 16);
    save_generator(g, dir.path() / "g.ckpt");
    CHECK(load_generator(dir.path() / "g.ckpt") == g);
  }

  TEST_CASE("epoch accounting, lazy texture skip and checkpoints") {
    TempDir dir("train");
    const auto triples = toy_triples(dir.path() / "corpus", 3, 8, 32, 1, 3);
    TrainConfig cfg = desk_config(8);
    cfg.pretrain_epochs = 2;
    cfg.weights.tex = 0.0;
    cfg.out_dir = dir.path() / "run";
    const auto ex = make_extractor(cfg.extractor_config());
    const NetworkParams degrader = init_degrader(cfg.degrader, 1);
    const PhaseResult r = pretrain_generator(triples, cfg, degrader, *ex);
    CHECK(r.completed);
    REQUIRE(r.log.size() == 6);
    CHECK(r.log.back().epoch == 2);
    for (const StepRecord& s : r.log) {
      CHECK(s.phase == "pretrain");
      CHECK(s.report.terms.tex == 0.0);
      CHECK(s.report.total == s.report.terms.rec);
    }
    const auto sections = load_bundle(cfg.out_dir / "checkpoints" / "pretrain_epoch2.ckpt");
    CHECK(find_section(sections, "train_state").config.at("phase") == "pretrain");
    CHECK(std::filesystem::exists(cfg.out_dir / "checkpoints" / "pretrain_latest.ckpt"));
    CHECK(std::filesystem::exists(cfg.out_dir / "train_log.jsonl"));
  }

  TEST_CASE("full phase runs every term and is deterministic") {
    TempDir dir("train");
    const auto triples = toy_triples(dir.path() / "corpus", 2, 8, 32, 2, 2);
    TrainConfig cfg = desk_config(8);
    cfg.full_epochs = 2;
    const auto ex = make_extractor(cfg.extractor_config());
    const NetworkParams degrader = init_degrader(cfg.degrader, 1);
    const Generator init = init_generator(cfg, ex->stage_channels(pipeline_geometry(8).transfer_stage));
    const PhaseResult a = train_full(triples, cfg, degrader, *ex, init);
    const PhaseResult b = train_full(triples, cfg, degrader, *ex, init);
    REQUIRE(a.log.size() == 4);
    CHECK(a.generator == b.generator);
    CHECK(a.critic == b.critic);
    for (const StepRecord& s : a.log) {
      CHECK(s.report.terms.rec > 0.0);
      CHECK(s.report.terms.tex > 0.0);
      CHECK(s.report.terms.per > 0.0);
      CHECK(s.report.terms.deg > 0.0);
      CHECK(std::isfinite(s.critic_loss));
    }
    CHECK_FALSE(a.generator == init);
  }

  TEST_CASE("critic can be disabled") {
    TempDir dir("train");
    const auto triples = toy_triples(dir.path() / "corpus", 2, 8, 32, 3, 2);
    TrainConfig cfg = desk_config(8);
    cfg.critic_steps_per_gen = 0;
    cfg.critic_warmup_steps = 0;
    const auto ex = make_extractor(cfg.extractor_config());
    const NetworkParams degrader = init_degrader(cfg.degrader, 1);
    const Generator init = init_generator(cfg, ex->stage_channels(0));
    const PhaseResult r = train_full(triples, cfg, degrader, *ex, init);
    REQUIRE(r.log.size() == 2);
    for (const StepRecord& s : r.log) CHECK(s.critic_loss == 0.0);
  }

  TEST_CASE("degrader training improves held-out error") {
    std::vector<std::pair<ImageTensor, ImageTensor>> pairs;
    for (int i = 0; i < 10; ++i) {
      const ImageTensor hr = synthetic_painting(32, 32, i);
      pairs.emplace_back(hr, degrade_bicubic(hr, 8));
    }
    TrainConfig cfg = desk_config(8);
    cfg.degrader_epochs = 5;
    cfg.degrader_lr = 1e-3;
    cfg.batch_size = 4;
    const DegraderResult r = train_degrader(pairs, cfg);
    CHECK(r.best_val_l1 <= r.initial_val_l1);
    CHECK(r.final_train_l1 < r.initial_train_l1);
  }

  TEST_CASE("super-resolution output geometry") {
    TempDir dir("sr");
    TrainConfig cfg = desk_config(8);
    const auto ex = make_extractor(cfg.extractor_config());
    const Generator g = init_generator(cfg, ex->stage_channels(0));
    const ImageTensor lr = random_image(5, 6, 1);
    const int m = minimum_reference_size(cfg);
    const ImageTensor sr = super_resolve(lr, random_image(m, m, 2), g, cfg, *ex);
    CHECK(sr.height == 40);
    CHECK(sr.width == 48);
    CHECK(sr.in_unit_range());
    CHECK_THROWS_AS(super_resolve(lr, random_image(m + 4, m, 2), g, cfg, *ex), ArgumentError);
    CHECK_THROWS_AS(super_resolve(lr, random_image(m - 8, m - 8, 2), g, cfg, *ex), ArgumentError);
  }

  TEST_CASE("match cache reuse is transparent") {
    TempDir dir("cache");
    const auto triples = toy_triples(dir.path() / "corpus", 1, 8, 32, 4, 2);
    TrainConfig cfg = desk_config(8);
    const auto ex = make_extractor(cfg.extractor_config());
    const PreparedTriple plain = prepare_triple(triples[0], cfg, *ex);
    cfg.match_cache_dir = dir.path() / "cache";
    const PreparedTriple first = prepare_triple(triples[0], cfg, *ex);
    const PreparedTriple cached = prepare_triple(triples[0], cfg, *ex);
    CHECK(first.match == plain.match);
    CHECK(cached.match == plain.match);
    CHECK(cached.f_t == plain.f_t);
    CHECK_FALSE(std::filesystem::is_empty(cfg.match_cache_dir));
  }
}
