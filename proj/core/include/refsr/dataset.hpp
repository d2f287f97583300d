#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "refsr/image.hpp"

namespace refsr {

struct PaintingRecord {
  std::string id;
  std::filesystem::path image_path;  // resolved against the manifest directory
  int width_px = 0;
  int height_px = 0;
  double phys_width_in = 0.0;
  double phys_height_in = 0.0;
  double ppi = 0.0;  // width_px / phys_width_in
};

struct ManifestRejection {
  int line = 0;
  std::string reason;
};

struct Manifest {
  std::vector<PaintingRecord> records;
  std::vector<ManifestRejection> rejections;
};

/// Comma-separated manifest with header columns
/// id, image_path, width_px, height_px, phys_width_in, phys_height_in (any order; extra
/// columns ignored). Invalid rows are logged and returned as rejections.
/// IoError when the file is missing, FormatError when the header lacks a column.
Manifest ingest_manifest(const std::filesystem::path& path);

/// Relative height/width PPI disagreement above which a warning is logged.
inline constexpr double kPpiAnamorphicTolerance = 0.05;

struct Split {
  std::vector<PaintingRecord> train;
  std::vector<PaintingRecord> test;
};

/// Records with ppi >= min_ppi, sorted by ppi descending with a seeded shuffle inside
/// equal-ppi groups; the first n_test go to test, the next n_train to train.
Split select_by_ppi(const std::vector<PaintingRecord>& records, double min_ppi, std::size_t n_train,
                    std::size_t n_test, std::uint64_t seed);

struct TrainingTriple {
  std::string painting_id;
  int tile_index = 0;
  std::string ref_painting_id;
  int s = 0;
  ImageTensor hr;
  ImageTensor lr;  // degrade_bicubic(hr, s)
  ImageTensor ref;
};

struct TripleOptions {
  int s = 8;
  int tile_hr = 64;
  /// Reference tile side; 0 means tile_hr. Must be >= tile_hr and divisible by s.
  int tile_ref = 0;
  int tiles_per_painting = 4;
  int refs_per_tile = 1;
  std::uint64_t seed = 0;
};

/// Random HR tiles per painting (origins on a multiple-of-s lattice), each paired with
/// reference tiles cut from other paintings of the same list. Paintings that cannot hold
/// a tile are skipped with a warning. ArgumentError when fewer than two usable paintings
/// remain (no valid reference source). Output order is (painting order, tile index).
std::vector<TrainingTriple> make_triples(const std::vector<PaintingRecord>& records, const TripleOptions& options);

/// Writes `<id>_<tileidx>_{hr,lr,ref}.png` (16-bit) into `dir`.
void materialize_triples(const std::vector<TrainingTriple>& triples, const std::filesystem::path& dir);

/// Reads triples written by materialize_triples, ordered by (id, tile index).
std::vector<TrainingTriple> load_triples(const std::filesystem::path& dir, int s);

struct ReferenceGroup {
  std::string id;
  ImageTensor hr;
  std::vector<ImageTensor> refs;  // ref_0 .. ref_3

  const ImageTensor& most_similar_ref() const { return refs.front(); }
};

inline constexpr int kRefsPerGroup = 4;

/// Groups laid out as `<root>/<group_id>/{hr.png, ref_0.png .. ref_3.png}`, sorted by id.
/// Incomplete groups are skipped with a warning.
std::vector<ReferenceGroup> load_grouped_refs(const std::filesystem::path& root);

/// Writes one id per line.
void write_split_file(const std::vector<PaintingRecord>& records, const std::filesystem::path& path);

}  // namespace refsr
