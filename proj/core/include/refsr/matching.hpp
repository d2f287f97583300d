#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "refsr/features.hpp"
#include "refsr/tensor.hpp"

namespace refsr {

struct PatchCoord {
  int row = 0;
  int col = 0;
  friend bool operator==(const PatchCoord&, const PatchCoord&) = default;
};

/// Best reference patch for every query patch of one pyramid level.
///
/// Query patches sit on a grid with `stride`; reference patches are enumerated
/// densely (stride 1), so `best_index` is the top-left pixel of the winning
/// reference patch in the reference feature map.
struct MatchMap {
  int grid_rows = 0, grid_cols = 0;
  int ref_grid_rows = 0, ref_grid_cols = 0;
  int query_height = 0, query_width = 0;
  int ref_height = 0, ref_width = 0;
  int patch_size = 0;
  int stride = 1;
  int level = 0;
  std::vector<PatchCoord> best_index;  // row-major over the query grid
  std::vector<double> best_score;

  const PatchCoord& at(int qr, int qc) const { return best_index[static_cast<std::size_t>(qr) * grid_cols + qc]; }
  double score(int qr, int qc) const { return best_score[static_cast<std::size_t>(qr) * grid_cols + qc]; }
  friend bool operator==(const MatchMap&, const MatchMap&) = default;
};

struct MatchOptions {
  /// Pyramid level the feature maps belong to; recorded in the MatchMap.
  int level = 0;
  /// Cap on reference candidates. 0 disables the cap; otherwise references are
  /// subsampled on a regular grid so that at most this many patches are scored.
  std::size_t max_ref_candidates = 0;
  int workers = 1;
};

/// Cosine-similarity patch matching. For each query patch the reference patch with
/// the highest similarity wins; exact ties go to the smallest row-major reference index.
/// Patches are flattened in (dy, dx, channel) order; all-zero patches have similarity 0.
MatchMap match_features(const Tensor& query, const Tensor& ref, int patch_size, int stride,
                        const MatchOptions& options = {});

/// Feature map assembled from reference patches, with per-position contribution counts.
struct TransferredFeature {
  Tensor data;
  std::vector<int> coverage;  // H x W, row-major

  int coverage_at(int y, int x) const { return coverage[static_cast<std::size_t>(y) * data.w() + x]; }
};

/// Copies, for every query patch, the (patch_size*scale_gap)^2 block of `ref_feat`
/// at the matched coordinate scaled by scale_gap, averaging overlaps uniformly.
/// `ref_feat` must be exactly scale_gap times the matched reference map.
TransferredFeature transfer_features(const Tensor& ref_feat, const MatchMap& match, int scale_gap);

/// transfer_features at pyramid level l with scale_gap = 2^(l - match.level).
TransferredFeature transfer_at_level(const FeaturePyramid& ref_pyramid, const MatchMap& match, int l);

inline constexpr std::uint32_t kMatchMapFormatVersion = 1;

/// Debug dump: "RSRMATCH" | u32 version=1 | i32 grid_rows, grid_cols, ref_grid_rows,
/// ref_grid_cols, query_height, query_width, ref_height, ref_width, patch_size, stride, level
/// | u8 dtype tag 'i' then i32 (row, col) pairs | u8 dtype tag 'd' then f64 scores. Little-endian.
void save_match_map(const MatchMap& match, const std::filesystem::path& path);
MatchMap load_match_map(const std::filesystem::path& path);

}  // namespace refsr
