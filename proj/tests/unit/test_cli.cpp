#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "refsr/image.hpp"
#include "synthetic.hpp"

using namespace refsr;
using namespace refsr::testing;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

Run cli(const std::string& args, const fs::path& scratch) {
  const fs::path log = scratch / "cli_output.txt";
  const std::string cmd = std::string(REFSR_CLI) + " " + args + " >" + log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(rc) ? WEXITSTATUS(rc) : -1, ss.str()};
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("version reports artifact and format versions") {
    TempDir dir("cli");
    const Run r = cli("--version", dir.path());
    CHECK(r.code == 0);
    CHECK(r.output.find("checkpoint format 1") != std::string::npos);
  }

  TEST_CASE("usage and configuration errors exit with 2") {
    TempDir dir("cli");
    CHECK(cli("no-such-command", dir.path()).code == 2);
    CHECK(cli("prepare-data --manifest " + (dir.path() / "none.csv").string() + " --out x", dir.path()).code == 2);
    CHECK(cli("super-resolve --lr a.png", dir.path()).code == 2);
    {
      std::ofstream out(dir.path() / "bad.json");
      out << R"({"train": {"not_a_key": 1}})";
    }
    CHECK(cli("--config " + (dir.path() / "bad.json").string() + " prepare-data --manifest m.csv --out x --dry-run",
              dir.path())
              .code == 2);
  }

  TEST_CASE("runtime failures exit with 1") {
    TempDir dir("cli");
    save_image(random_image(8, 8, 1), dir.path() / "lr.png");
    save_image(random_image(64, 64, 2), dir.path() / "ref.png");
    {
      std::ofstream out(dir.path() / "bad.ckpt", std::ios::binary);
      out << "RSRCKPT1 truncated";
    }
    const Run r = cli("super-resolve --lr " + (dir.path() / "lr.png").string() + " --ref " +
                          (dir.path() / "ref.png").string() + " --checkpoint " + (dir.path() / "bad.ckpt").string() +
                          " --out " + (dir.path() / "sr.png").string(),
                      dir.path());
    CHECK(r.code == 1);
  }

  TEST_CASE("dry run echoes the effective config and writes nothing") {
    TempDir dir("cli");
    const SyntheticCorpus corpus = write_synthetic_corpus(dir.path() / "corpus", 4, 64, 64, 3);
    const Run r = cli("--seed 9 prepare-data --manifest " + corpus.manifest.string() + " --out " +
                          (dir.path() / "data").string() + " --tile 32 --dry-run",
                      dir.path());
    CHECK(r.code == 0);
    CHECK(r.output.find("# effective config (prepare-data)") != std::string::npos);
    CHECK(r.output.find("\"seed\": 9") != std::string::npos);
    CHECK(r.output.find("\"tile_hr\": 32") != std::string::npos);
    CHECK_FALSE(fs::exists(dir.path() / "data"));
  }

  TEST_CASE("zero-epoch training only reports the initial checkpoint") {
    TempDir dir("cli");
    const SyntheticCorpus corpus = write_synthetic_corpus(dir.path() / "corpus", 4, 64, 64, 4);
    const std::string data = (dir.path() / "data").string();
    {
      std::ofstream out(dir.path() / "c.json");
      out << R"({"train": {"upscaler": {"width": 4, "blocks": 1}, "fusion": {"width": 4, "blocks": 1},
                 "degrader": {"width": 4}, "critic": {"base_width": 4, "stages": 2}},
                 "data": {"tile_hr": 32, "tiles_per_painting": 1, "n_test": 0}})";
    }
    const std::string cfg = "--config " + (dir.path() / "c.json").string() + " ";
    REQUIRE(cli(cfg + "prepare-data --manifest " + corpus.manifest.string() + " --out " + data, dir.path()).code == 0);
    const Run r = cli(cfg + "train --data " + data + " --out " + (dir.path() / "run").string() +
                          " --epochs-pretrain 0 --epochs-full 0",
                      dir.path());
    CHECK(r.code == 0);
    CHECK(r.output.find("pretrain_initial.ckpt") != std::string::npos);
    CHECK_FALSE(fs::exists(dir.path() / "run" / "generator.ckpt"));

    save_image(random_image(8, 8, 6), dir.path() / "lr.png");
    save_image(random_image(32, 32, 7), dir.path() / "ref.png");
    const fs::path sr = dir.path() / "sr.png";
    const Run s = cli("super-resolve --lr " + (dir.path() / "lr.png").string() + " --ref " +
                          (dir.path() / "ref.png").string() + " --checkpoint " +
                          (dir.path() / "run" / "checkpoints" / "pretrain_initial.ckpt").string() +
                          " --scale 8 --out " + sr.string(),
                      dir.path());
    CHECK(s.code == 0);
    REQUIRE(fs::exists(sr));
    const ImageTensor out = load_image(sr);
    CHECK(out.height == 64);
    CHECK(out.width == 64);
    CHECK(cli("super-resolve --lr " + (dir.path() / "lr.png").string() + " --ref " + (dir.path() / "ref.png").string() +
                  " --checkpoint " + (dir.path() / "run" / "checkpoints" / "pretrain_initial.ckpt").string() +
                  " --scale 16 --out " + sr.string(),
              dir.path())
              .code == 2);
  }

  TEST_CASE("evaluate reports infinite PSNR for identical pairs") {
    TempDir dir("cli");
    const ImageTensor img = synthetic_painting(24, 24, 5);
    save_image(img, dir.path() / "x_sr.png", 16);
    save_image(img, dir.path() / "x_gt.png", 16);
    const Run r = cli("evaluate --dir " + dir.path().string() + " --out " + (dir.path() / "m.csv").string(), dir.path());
    CHECK(r.code == 0);
    std::ifstream in(dir.path() / "m.csv");
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header == "image_id,psnr,ssim,niqe,ma,pi");
    CHECK(row.rfind("x,inf,1", 0) == 0);
  }
}
