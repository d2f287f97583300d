#include "refsr/matching.hpp"

#include <Eigen/Core>
#include <cmath>
#include <cstring>
#include <limits>

#include "refsr/checkpoint.hpp"
#include "refsr/errors.hpp"
#include "refsr/parallel.hpp"

namespace refsr {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr long kQueryBlock = 64;
constexpr long kRefBlock = 2048;
// GEMM scores may differ from the canonical dot product by a few ulps; anything
// within this margin of the running best is re-scored exactly.
constexpr double kRescoreMargin = 1e-9;

std::string dims(const Tensor& t) { return std::to_string(t.h()) + "x" + std::to_string(t.w()) + "x" + std::to_string(t.c()); }

// Writes the l2-normalised patch at (y, x) into `out` in (dy, dx, channel) order.
void normalized_patch(const Tensor& f, int y, int x, int p, double* out) {
  const int C = f.c();
  double* o = out;
  for (int dy = 0; dy < p; ++dy)
    for (int dx = 0; dx < p; ++dx) {
      const double* src = f.data() + f.index(0, y + dy, x + dx, 0);
      std::memcpy(o, src, sizeof(double) * C);
      o += C;
    }
  const long K = static_cast<long>(p) * p * C;
  double ss = 0.0;
  for (long k = 0; k < K; ++k) ss += out[k] * out[k];
  if (ss > 0.0) {
    const double inv = 1.0 / std::sqrt(ss);
    for (long k = 0; k < K; ++k) out[k] *= inv;
  }
}

double canonical_dot(const double* a, const double* b, long K) {
  double s = 0.0;
  for (long k = 0; k < K; ++k) s += a[k] * b[k];
  return s;
}

}  // namespace

MatchMap match_features(const Tensor& query, const Tensor& ref, int patch_size, int stride,
                        const MatchOptions& options) {
  if (query.n() != 1 || ref.n() != 1) throw ArgumentError("match_features: feature maps must have batch 1");
  if (query.c() != ref.c())
    throw ArgumentError("match_features: channel mismatch (query " + dims(query) + ", ref " + dims(ref) + ")");
  if (patch_size < 1 || stride < 1) throw ArgumentError("match_features: patch_size and stride must be positive");
  if (ref.h() < patch_size || ref.w() < patch_size)
    throw ArgumentError("match_features: reference " + dims(ref) + " smaller than patch " + std::to_string(patch_size));
  if (query.h() < patch_size || query.w() < patch_size)
    throw ArgumentError("match_features: query " + dims(query) + " smaller than patch " + std::to_string(patch_size));
  if ((query.h() - patch_size) % stride != 0 || (query.w() - patch_size) % stride != 0)
    throw ArgumentError("match_features: stride " + std::to_string(stride) + " does not tile query " + dims(query));

  const int p = patch_size;
  const long K = static_cast<long>(p) * p * query.c();

  MatchMap m;
  m.patch_size = p;
  m.stride = stride;
  m.level = options.level;
  m.query_height = query.h();
  m.query_width = query.w();
  m.ref_height = ref.h();
  m.ref_width = ref.w();
  m.grid_rows = (query.h() - p) / stride + 1;
  m.grid_cols = (query.w() - p) / stride + 1;
  m.ref_grid_rows = ref.h() - p + 1;
  m.ref_grid_cols = ref.w() - p + 1;

  // Candidate reference patches: dense, or a regular sub-grid under the cap.
  int t = 1;
  auto count_for = [&](int step) {
    return static_cast<std::size_t>((m.ref_grid_rows + step - 1) / step) *
           static_cast<std::size_t>((m.ref_grid_cols + step - 1) / step);
  };
  if (options.max_ref_candidates > 0)
    while (count_for(t) > options.max_ref_candidates && (t < m.ref_grid_rows || t < m.ref_grid_cols)) ++t;
  std::vector<PatchCoord> cand;
  for (int r = 0; r < m.ref_grid_rows; r += t)
    for (int c = 0; c < m.ref_grid_cols; c += t) cand.push_back({r, c});

  const long nr = static_cast<long>(cand.size());
  RowMat R(nr, K);
  parallel_for(static_cast<std::size_t>(nr), options.workers, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) normalized_patch(ref, cand[i].row, cand[i].col, p, R.row(static_cast<long>(i)).data());
  });

  const long nq = static_cast<long>(m.grid_rows) * m.grid_cols;
  m.best_index.assign(static_cast<std::size_t>(nq), {});
  m.best_score.assign(static_cast<std::size_t>(nq), 0.0);

  const long nblocks = (nq + kQueryBlock - 1) / kQueryBlock;
  parallel_for(static_cast<std::size_t>(nblocks), options.workers, [&](std::size_t b0, std::size_t b1) {
    RowMat Q, S;
    for (std::size_t blk = b0; blk < b1; ++blk) {
      const long q0 = static_cast<long>(blk) * kQueryBlock;
      const long nb = std::min(kQueryBlock, nq - q0);
      Q.resize(nb, K);
      for (long i = 0; i < nb; ++i) {
        const long q = q0 + i;
        normalized_patch(query, static_cast<int>(q / m.grid_cols) * stride,
                         static_cast<int>(q % m.grid_cols) * stride, p, Q.row(i).data());
      }
      std::vector<double> best(static_cast<std::size_t>(nb), -std::numeric_limits<double>::infinity());
      std::vector<long> best_j(static_cast<std::size_t>(nb), -1);
      for (long r0 = 0; r0 < nr; r0 += kRefBlock) {
        const long rb = std::min(kRefBlock, nr - r0);
        S.noalias() = Q * R.middleRows(r0, rb).transpose();
        for (long i = 0; i < nb; ++i) {
          double& bs = best[static_cast<std::size_t>(i)];
          long& bj = best_j[static_cast<std::size_t>(i)];
          if (S.row(i).maxCoeff() < bs - kRescoreMargin) continue;
          for (long j = 0; j < rb; ++j) {
            if (S(i, j) < bs - kRescoreMargin) continue;
            const double exact = canonical_dot(Q.row(i).data(), R.row(r0 + j).data(), K);
            if (exact > bs || (exact == bs && r0 + j < bj)) {
              bs = exact;
              bj = r0 + j;
            }
          }
        }
      }
      for (long i = 0; i < nb; ++i) {
        const auto q = static_cast<std::size_t>(q0 + i);
        m.best_index[q] = cand[static_cast<std::size_t>(best_j[static_cast<std::size_t>(i)])];
        m.best_score[q] = std::clamp(best[static_cast<std::size_t>(i)], -1.0, 1.0);
      }
    }
  });
  return m;
}

TransferredFeature transfer_features(const Tensor& ref_feat, const MatchMap& match, int scale_gap) {
  if (scale_gap < 1) throw ArgumentError("transfer_features: scale_gap must be >= 1");
  if (ref_feat.n() != 1) throw ArgumentError("transfer_features: reference features must have batch 1");
  if (ref_feat.h() != match.ref_height * scale_gap || ref_feat.w() != match.ref_width * scale_gap)
    throw ArgumentError("transfer_features: scale misalignment, reference features " + dims(ref_feat) +
                        " are not " + std::to_string(scale_gap) + "x the matched " +
                        std::to_string(match.ref_height) + "x" + std::to_string(match.ref_width) + " map");
  if (match.best_index.size() != static_cast<std::size_t>(match.grid_rows) * match.grid_cols)
    throw ArgumentError("transfer_features: malformed match map");

  const int C = ref_feat.c();
  const int H = match.query_height * scale_gap, W = match.query_width * scale_gap;
  const int block = match.patch_size * scale_gap;
  TransferredFeature out;
  out.data = Tensor({1, H, W, C});
  out.coverage.assign(static_cast<std::size_t>(H) * W, 0);
  // Overlaps are averaged as first + mean(x_i - first).
  Tensor delta({1, H, W, C});

  for (int qr = 0; qr < match.grid_rows; ++qr)
    for (int qc = 0; qc < match.grid_cols; ++qc) {
      const PatchCoord src = match.at(qr, qc);
      const int oy = qr * match.stride * scale_gap, ox = qc * match.stride * scale_gap;
      const int sy = src.row * scale_gap, sx = src.col * scale_gap;
      for (int dy = 0; dy < block; ++dy)
        for (int dx = 0; dx < block; ++dx) {
          const double* s = ref_feat.data() + ref_feat.index(0, sy + dy, sx + dx, 0);
          const std::size_t at = out.data.index(0, oy + dy, ox + dx, 0);
          int& n = out.coverage[static_cast<std::size_t>(oy + dy) * W + ox + dx];
          if (n == 0) std::memcpy(out.data.data() + at, s, sizeof(double) * C);
          else
            for (int c = 0; c < C; ++c) delta.data()[at + c] += s[c] - out.data.data()[at + c];
          ++n;
        }
    }

  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const int n = out.coverage[static_cast<std::size_t>(y) * W + x];
      if (n == 0) throw ArgumentError("transfer_features: match grid leaves output uncovered");
      if (n == 1) continue;
      const std::size_t at = out.data.index(0, y, x, 0);
      for (int c = 0; c < C; ++c) out.data.data()[at + c] += delta.data()[at + c] / n;
    }
  return out;
}

TransferredFeature transfer_at_level(const FeaturePyramid& ref_pyramid, const MatchMap& match, int l) {
  if (l < match.level)
    throw ArgumentError("transfer_at_level: level " + std::to_string(l) + " is below the matching level " +
                        std::to_string(match.level));
  if (l - match.level > 16) throw ArgumentError("transfer_at_level: level gap too large");
  return transfer_features(ref_pyramid.level(l), match, 1 << (l - match.level));
}

namespace {

constexpr char kMatchMagic[8] = {'R', 'S', 'R', 'M', 'A', 'T', 'C', 'H'};

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* b = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), b, b + sizeof v);
}

template <typename T>
T take(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (in.size() - pos < sizeof(T)) throw CorruptionError("match map file truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof v);
  pos += sizeof v;
  return v;
}

}  // namespace

void save_match_map(const MatchMap& m, const std::filesystem::path& path) {
  std::vector<std::uint8_t> out(kMatchMagic, kMatchMagic + sizeof kMatchMagic);
  put(out, kMatchMapFormatVersion);
  for (int v : {m.grid_rows, m.grid_cols, m.ref_grid_rows, m.ref_grid_cols, m.query_height, m.query_width,
                m.ref_height, m.ref_width, m.patch_size, m.stride, m.level})
    put<std::int32_t>(out, v);
  put<std::uint8_t>(out, 'i');
  for (const PatchCoord& c : m.best_index) {
    put<std::int32_t>(out, c.row);
    put<std::int32_t>(out, c.col);
  }
  put<std::uint8_t>(out, 'd');
  for (double s : m.best_score) put(out, s);
  write_file_atomic(path, out);
}

MatchMap load_match_map(const std::filesystem::path& path) {
  const auto in = read_file(path);
  if (in.size() < sizeof kMatchMagic || std::memcmp(in.data(), kMatchMagic, sizeof kMatchMagic) != 0)
    throw CorruptionError("'" + path.string() + "' is not a match map file");
  std::size_t pos = sizeof kMatchMagic;
  if (take<std::uint32_t>(in, pos) != kMatchMapFormatVersion) throw CorruptionError("unsupported match map version");
  MatchMap m;
  for (int* f : {&m.grid_rows, &m.grid_cols, &m.ref_grid_rows, &m.ref_grid_cols, &m.query_height, &m.query_width,
                 &m.ref_height, &m.ref_width, &m.patch_size, &m.stride, &m.level})
    *f = take<std::int32_t>(in, pos);
  if (m.grid_rows < 0 || m.grid_cols < 0) throw CorruptionError("match map has negative grid dims");
  const auto n = static_cast<std::size_t>(m.grid_rows) * static_cast<std::size_t>(m.grid_cols);
  if (take<std::uint8_t>(in, pos) != 'i') throw CorruptionError("match map index block has wrong dtype tag");
  m.best_index.resize(n);
  for (PatchCoord& c : m.best_index) {
    c.row = take<std::int32_t>(in, pos);
    c.col = take<std::int32_t>(in, pos);
  }
  if (take<std::uint8_t>(in, pos) != 'd') throw CorruptionError("match map score block has wrong dtype tag");
  m.best_score.resize(n);
  for (double& s : m.best_score) s = take<double>(in, pos);
  if (pos != in.size()) throw CorruptionError("trailing bytes in match map file");
  return m;
}

}  // namespace refsr
