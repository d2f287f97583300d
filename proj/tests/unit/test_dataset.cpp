#include <doctest.h>

#include <fstream>
#include <set>

#include "refsr/dataset.hpp"
#include "refsr/errors.hpp"
#include "synthetic.hpp"

using namespace refsr;
using namespace refsr::testing;
namespace fs = std::filesystem;

namespace {

PaintingRecord record(const std::string& id, double ppi) {
  PaintingRecord r;
  r.id = id;
  r.ppi = ppi;
  return r;
}

std::vector<std::string> ids(const std::vector<PaintingRecord>& v) {
  std::vector<std::string> out;
  for (const auto& r : v) out.push_back(r.id);
  return out;
}

}  // namespace

TEST_SUITE("dataset") {
  TEST_CASE("manifest ingestion accepts valid rows and reports invalid ones") {
    TempDir dir("manifest");
    save_image(random_image(40, 50, 1), dir.path() / "a.png", 16);
    save_image(random_image(40, 50, 2), dir.path() / "b.png", 16);
    {
      std::ofstream out(dir.path() / "m.csv");
      out << "image_path,id,width_px,height_px,phys_width_in,phys_height_in,notes\n"
          << "a.png,a,50,40,0.5,0.4,x\n"
          << "b.png,b,50,40,-1,0.4,x\n"
          << "a.png,,50,40,0.5,0.4,x\n"
          << "b.png,d,50,40,0.25,0.4,x\n";
    }
    const Manifest m = ingest_manifest(dir.path() / "m.csv");
    REQUIRE(m.records.size() == 2);
    CHECK(m.records[0].id == "a");
    CHECK(m.records[0].ppi == doctest::Approx(100.0));
    CHECK(m.records[0].image_path == dir.path() / "a.png");
    CHECK(m.records[1].ppi == doctest::Approx(200.0));
    CHECK(m.rejections.size() == 2);
  }

  TEST_CASE("manifest errors") {
    TempDir dir("manifest");
    CHECK_THROWS_AS(ingest_manifest(dir.path() / "none.csv"), IoError);
    {
      std::ofstream out(dir.path() / "m.csv");
      out << "id,image_path,width_px\n";
    }
    CHECK_THROWS_AS(ingest_manifest(dir.path() / "m.csv"), FormatError);
  }

  TEST_CASE("selection ranks by ppi and is seeded inside ties") {
    const std::vector<PaintingRecord> recs{record("a", 100), record("b", 300), record("c", 200), record("d", 200),
                                           record("e", 50),  record("f", 200), record("g", 200)};
    const Split s = select_by_ppi(recs, 60, 4, 2, 1);
    CHECK(s.test.size() == 2);
    CHECK(s.test[0].id == "b");
    CHECK(s.train.size() == 4);
    for (const auto& r : s.train) CHECK(r.ppi >= 60);
    CHECK(s.train.back().id != "e");
    const Split again = select_by_ppi(recs, 60, 4, 2, 1);
    CHECK(ids(again.train) == ids(s.train));
    std::set<std::vector<std::string>> orders;
    for (std::uint64_t seed = 0; seed < 16; ++seed) orders.insert(ids(select_by_ppi(recs, 60, 4, 2, seed).train));
    CHECK(orders.size() > 1);
    CHECK_THROWS_AS(select_by_ppi(recs, 60, 10, 2, 1), ArgumentError);
  }

  TEST_CASE("triples respect reference disjointness and tile alignment") {
    TempDir dir("triples");
    const SyntheticCorpus corpus = write_synthetic_corpus(dir.path(), 4, 80, 72, 3);
    TripleOptions o;
    o.s = 8;
    o.tile_hr = 32;
    o.tile_ref = 48;
    o.tiles_per_painting = 3;
    o.refs_per_tile = 2;
    o.seed = 4;
    const auto triples = make_triples(corpus.records, o);
    CHECK(triples.size() == 4 * 3 * 2);
    for (const TrainingTriple& t : triples) {
      CHECK(t.ref_painting_id != t.painting_id);
      CHECK(crop_aligned(t.hr, 8) == t.hr);
      CHECK(t.hr.height == 32);
      CHECK(t.ref.height == 48);
      CHECK(t.lr == degrade_bicubic(t.hr, 8));
    }
    const auto again = make_triples(corpus.records, o);
    for (std::size_t i = 0; i < triples.size(); ++i) {
      CHECK(again[i].hr == triples[i].hr);
      CHECK(again[i].ref == triples[i].ref);
    }
  }

  TEST_CASE("triple options are validated") {
    TempDir dir("triples");
    const SyntheticCorpus corpus = write_synthetic_corpus(dir.path(), 2, 40, 40, 5);
    TripleOptions o;
    o.tile_hr = 30;
    CHECK_THROWS_AS(make_triples(corpus.records, o), ArgumentError);
    o.tile_hr = 32;
    CHECK_THROWS_AS(make_triples({corpus.records[0]}, o), ArgumentError);
    o.tile_hr = 64;
    CHECK_THROWS_AS(make_triples(corpus.records, o), ArgumentError);
  }

  TEST_CASE("materialized triples load back") {
    TempDir dir("triples");
    const SyntheticCorpus corpus = write_synthetic_corpus(dir.path() / "c", 3, 48, 48, 6);
    TripleOptions o;
    o.s = 4;
    o.tile_hr = 16;
    o.tiles_per_painting = 2;
    const auto triples = make_triples(corpus.records, o);
    materialize_triples(triples, dir.path() / "t");
    const auto back = load_triples(dir.path() / "t", 4);
    REQUIRE(back.size() == triples.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
      CHECK(back[i].painting_id == triples[i].painting_id);
      CHECK(back[i].tile_index == triples[i].tile_index);
      CHECK(back[i].lr.height == 4);
    }
    CHECK_THROWS_AS(load_triples(dir.path() / "none", 4), IoError);
  }

  TEST_CASE("grouped references") {
    TempDir dir("groups");
    for (const std::string g : {"g2", "g1"}) {
      fs::create_directories(dir.path() / g);
      save_image(random_image(8, 8, 1), dir.path() / g / "hr.png");
      for (int k = 0; k < kRefsPerGroup; ++k)
        save_image(random_image(8, 8, 2 + k), dir.path() / g / ("ref_" + std::to_string(k) + ".png"));
    }
    fs::create_directories(dir.path() / "g3");
    save_image(random_image(8, 8, 1), dir.path() / "g3" / "hr.png");
    const auto groups = load_grouped_refs(dir.path());
    REQUIRE(groups.size() == 2);
    CHECK(groups[0].id == "g1");
    CHECK(groups[0].refs.size() == 4);
  }

  TEST_CASE("split files list one id per line") {
    TempDir dir("split");
    write_split_file({record("x", 1), record("y", 2)}, dir.path() / "s.txt");
    std::ifstream in(dir.path() / "s.txt");
    std::string a, b;
    in >> a >> b;
    CHECK(a == "x");
    CHECK(b == "y");
  }
}
