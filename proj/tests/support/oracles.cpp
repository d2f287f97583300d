#include "oracles.hpp"

#include <algorithm>
#include <cmath>

#include "refsr/metrics.hpp"

namespace refsr::testing {

namespace {

std::vector<double> unit_patch(const Tensor& f, int y, int x, int p) {
  std::vector<double> v;
  for (int dy = 0; dy < p; ++dy)
    for (int dx = 0; dx < p; ++dx)
      for (int c = 0; c < f.c(); ++c) v.push_back(f.at(0, y + dy, x + dx, c));
  double ss = 0.0;
  for (double e : v) ss += e * e;
  if (ss > 0.0) {
    const double inv = 1.0 / std::sqrt(ss);
    for (double& e : v) e *= inv;
  }
  return v;
}

double keys(double x) {
  const double a = -0.5, t = std::abs(x);
  if (t <= 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
  if (t < 2.0) return a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a;
  return 0.0;
}

std::vector<std::pair<int, double>> axis_weights(int in_len, int j, double f) {
  const double centre = (j + 0.5) / f - 0.5;
  const double support = f < 1.0 ? 2.0 / f : 2.0;
  std::vector<std::pair<int, double>> w;
  double total = 0.0;
  for (int i = static_cast<int>(std::floor(centre - support)) - 1; i <= static_cast<int>(std::ceil(centre + support)) + 1;
       ++i) {
    const double d = centre - i;
    const double k = f < 1.0 ? f * keys(f * d) : keys(d);
    if (k == 0.0) continue;
    w.emplace_back(std::clamp(i, 0, in_len - 1), k);
    total += k;
  }
  for (auto& e : w) e.second /= total;
  return w;
}

}  // namespace

MatchMap brute_force_match(const Tensor& query, const Tensor& ref, int patch, int stride) {
  MatchMap m;
  m.patch_size = patch;
  m.stride = stride;
  m.query_height = query.h();
  m.query_width = query.w();
  m.ref_height = ref.h();
  m.ref_width = ref.w();
  m.grid_rows = (query.h() - patch) / stride + 1;
  m.grid_cols = (query.w() - patch) / stride + 1;
  m.ref_grid_rows = ref.h() - patch + 1;
  m.ref_grid_cols = ref.w() - patch + 1;
  for (int qr = 0; qr < m.grid_rows; ++qr)
    for (int qc = 0; qc < m.grid_cols; ++qc) {
      const auto q = unit_patch(query, qr * stride, qc * stride, patch);
      double best = -2.0;
      PatchCoord arg;
      for (int r = 0; r < m.ref_grid_rows; ++r)
        for (int c = 0; c < m.ref_grid_cols; ++c) {
          const auto v = unit_patch(ref, r, c, patch);
          double s = 0.0;
          for (std::size_t k = 0; k < v.size(); ++k) s += q[k] * v[k];
          if (s > best) {
            best = s;
            arg = {r, c};
          }
        }
      m.best_index.push_back(arg);
      m.best_score.push_back(std::clamp(best, -1.0, 1.0));
    }
  return m;
}

Tensor naive_transfer(const Tensor& ref_feat, const MatchMap& match, int scale_gap) {
  const int H = match.query_height * scale_gap, W = match.query_width * scale_gap, C = ref_feat.c();
  const int block = match.patch_size * scale_gap;
  Tensor sum({1, H, W, C});
  std::vector<int> count(static_cast<std::size_t>(H) * W, 0);
  for (int qr = 0; qr < match.grid_rows; ++qr)
    for (int qc = 0; qc < match.grid_cols; ++qc) {
      const PatchCoord src = match.at(qr, qc);
      for (int dy = 0; dy < block; ++dy)
        for (int dx = 0; dx < block; ++dx) {
          const int oy = qr * match.stride * scale_gap + dy, ox = qc * match.stride * scale_gap + dx;
          for (int c = 0; c < C; ++c)
            sum.at(0, oy, ox, c) += ref_feat.at(0, src.row * scale_gap + dy, src.col * scale_gap + dx, c);
          ++count[static_cast<std::size_t>(oy) * W + ox];
        }
    }
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < C; ++c) sum.at(0, y, x, c) /= count[static_cast<std::size_t>(y) * W + x];
  return sum;
}

ImageTensor direct_bicubic(const ImageTensor& img, double factor) {
  const int oh = static_cast<int>(std::lround(img.height * factor));
  const int ow = static_cast<int>(std::lround(img.width * factor));
  ImageTensor out(oh, ow, img.channels);
  for (int y = 0; y < oh; ++y) {
    const auto wy = axis_weights(img.height, y, factor);
    for (int x = 0; x < ow; ++x) {
      const auto wx = axis_weights(img.width, x, factor);
      for (int c = 0; c < img.channels; ++c) {
        double v = 0.0;
        for (const auto& [iy, ky] : wy)
          for (const auto& [ix, kx] : wx) v += ky * kx * img.at(iy, ix, c);
        out.at(y, x, c) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return out;
}

double windowed_ssim(const ImageTensor& a, const ImageTensor& b) {
  const ImageTensor x = luminance(a), y = luminance(b);
  const int n = kSsimWindow;
  std::vector<double> w(static_cast<std::size_t>(n * n));
  double total = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double di = i - 5.0, dj = j - 5.0;
      w[static_cast<std::size_t>(i * n + j)] = std::exp(-(di * di + dj * dj) / (2.0 * 1.5 * 1.5));
      total += w[static_cast<std::size_t>(i * n + j)];
    }
  for (double& v : w) v /= total;
  const double c1 = 1e-4, c2 = 9e-4;
  double acc = 0.0;
  int count = 0;
  for (int r = 0; r + n <= x.height; ++r)
    for (int c = 0; c + n <= x.width; ++c) {
      double mx = 0, my = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const double k = w[static_cast<std::size_t>(i * n + j)];
          mx += k * x.at(r + i, c + j, 0);
          my += k * y.at(r + i, c + j, 0);
        }
      double vx = 0, vy = 0, cxy = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const double k = w[static_cast<std::size_t>(i * n + j)];
          const double dx = x.at(r + i, c + j, 0) - mx, dy = y.at(r + i, c + j, 0) - my;
          vx += k * dx * dx;
          vy += k * dy * dy;
          cxy += k * dx * dy;
        }
      acc += (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return acc / count;
}

std::vector<std::vector<double>> naive_gram(const Tensor& feat) {
  const int C = feat.c();
  std::vector<std::vector<double>> g(static_cast<std::size_t>(C), std::vector<double>(static_cast<std::size_t>(C)));
  for (int i = 0; i < C; ++i)
    for (int j = 0; j < C; ++j) {
      double s = 0.0;
      for (int y = 0; y < feat.h(); ++y)
        for (int x = 0; x < feat.w(); ++x) s += feat.at(0, y, x, i) * feat.at(0, y, x, j);
      g[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = s / (feat.h() * feat.w());
    }
  return g;
}

std::vector<double> finite_difference(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  std::vector<double> g(x.size());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    probe.data()[i] = v + h;
    const double up = f(probe);
    probe.data()[i] = v - h;
    const double down = f(probe);
    probe.data()[i] = v;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(d) / std::max({std::sqrt(na), std::sqrt(nb), 1e-300});
}

}  // namespace refsr::testing
