#include "refsr/metrics.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "refsr/checkpoint.hpp"
#include "refsr/errors.hpp"

namespace refsr {

namespace {

void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* what) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels)
    throw ArgumentError(std::string(what) + ": shape mismatch " + std::to_string(a.height) + "x" +
                        std::to_string(a.width) + "x" + std::to_string(a.channels) + " vs " +
                        std::to_string(b.height) + "x" + std::to_string(b.width) + "x" + std::to_string(b.channels));
}

using Plane = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Plane to_plane(const ImageTensor& y, double scale = 1.0) {
  Plane p(y.height, y.width);
  for (int r = 0; r < y.height; ++r)
    for (int c = 0; c < y.width; ++c) p(r, c) = y.at(r, c, 0) * scale;
  return p;
}

std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size));
  const double mid = (size - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - mid;
    k[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += k[static_cast<std::size_t>(i)];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable correlation over valid positions only.
Plane filter_valid(const Plane& in, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const long H = in.rows(), W = in.cols();
  Plane tmp(H, W - n + 1);
  for (long r = 0; r < H; ++r)
    for (long c = 0; c + n <= W; ++c) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[static_cast<std::size_t>(i)] * in(r, c + i);
      tmp(r, c) = s;
    }
  Plane out(H - n + 1, W - n + 1);
  for (long r = 0; r + n <= H; ++r)
    for (long c = 0; c < tmp.cols(); ++c) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[static_cast<std::size_t>(i)] * tmp(r + i, c);
      out(r, c) = s;
    }
  return out;
}

// Separable correlation with edge replication; output has the input size.
Plane filter_replicate(const Plane& in, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size()), half = n / 2;
  const long H = in.rows(), W = in.cols();
  Plane tmp(H, W), out(H, W);
  for (long r = 0; r < H; ++r)
    for (long c = 0; c < W; ++c) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[static_cast<std::size_t>(i)] * in(r, std::clamp<long>(c + i - half, 0, W - 1));
      tmp(r, c) = s;
    }
  for (long r = 0; r < H; ++r)
    for (long c = 0; c < W; ++c) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[static_cast<std::size_t>(i)] * tmp(std::clamp<long>(r + i - half, 0, H - 1), c);
      out(r, c) = s;
    }
  return out;
}

}  // namespace

ImageTensor luminance(const ImageTensor& img) {
  check_image(img, "luminance");
  if (img.channels == 1) return img;
  ImageTensor y(img.height, img.width, 1);
  y.color_space = ColorSpace::LUMA;
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c)
      y.at(r, c, 0) = 0.299 * img.at(r, c, 0) + 0.587 * img.at(r, c, 1) + 0.114 * img.at(r, c, 2);
  return y;
}

double psnr(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "psnr");
  const ImageTensor ya = luminance(a), yb = luminance(b);
  double acc = 0.0;
  for (std::size_t i = 0; i < ya.size(); ++i) {
    const double d = ya.data[i] - yb.data[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(ya.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "ssim");
  if (a.height < kSsimWindow || a.width < kSsimWindow)
    throw ArgumentError("ssim: images must be at least " + std::to_string(kSsimWindow) + "x" +
                        std::to_string(kSsimWindow));
  const Plane x = to_plane(luminance(a)), y = to_plane(luminance(b));
  const auto k = gaussian_kernel(kSsimWindow, 1.5);
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const Plane mx = filter_valid(x, k), my = filter_valid(y, k);
  const Plane sxx = filter_valid(x.cwiseProduct(x), k) - mx.cwiseProduct(mx);
  const Plane syy = filter_valid(y.cwiseProduct(y), k) - my.cwiseProduct(my);
  const Plane sxy = filter_valid(x.cwiseProduct(y), k) - mx.cwiseProduct(my);
  double acc = 0.0;
  for (long i = 0; i < mx.size(); ++i) {
    const double num = (2.0 * mx.data()[i] * my.data()[i] + c1) * (2.0 * sxy.data()[i] + c2);
    const double den = (mx.data()[i] * mx.data()[i] + my.data()[i] * my.data()[i] + c1) *
                       (sxx.data()[i] + syy.data()[i] + c2);
    acc += num / den;
  }
  return acc / static_cast<double>(mx.size());
}

// ---------------------------------------------------------------------------
// NIQE

namespace {

struct GammaTable {
  std::vector<double> alpha, ggd_ratio, aggd_ratio;

  GammaTable() {
    for (int i = 0; i <= 9800; ++i) {
      const double g = 0.2 + 0.001 * i;
      alpha.push_back(g);
      const double g1 = std::tgamma(1.0 / g), g2 = std::tgamma(2.0 / g), g3 = std::tgamma(3.0 / g);
      ggd_ratio.push_back(g1 * g3 / (g2 * g2));
      aggd_ratio.push_back(g2 * g2 / (g1 * g3));
    }
  }
};

const GammaTable& gamma_table() {
  static const GammaTable t;
  return t;
}

// Returns (alpha, left std, right std) of an asymmetric generalized Gaussian fit.
std::array<double, 3> fit_aggd(const std::vector<double>& v) {
  double left = 0.0, right = 0.0, abs_sum = 0.0, sq_sum = 0.0;
  long nl = 0, nr = 0;
  for (double x : v) {
    if (x < 0) {
      left += x * x;
      ++nl;
    } else if (x > 0) {
      right += x * x;
      ++nr;
    }
    abs_sum += std::abs(x);
    sq_sum += x * x;
  }
  const double lstd = nl ? std::sqrt(left / nl) : 0.0;
  const double rstd = nr ? std::sqrt(right / nr) : 0.0;
  const double n = static_cast<double>(v.size());
  if (sq_sum == 0.0) return {gamma_table().alpha.back(), 0.0, 0.0};
  const double gammahat = rstd > 0.0 ? lstd / rstd : 1.0;
  const double rhat = (abs_sum / n) * (abs_sum / n) / (sq_sum / n);
  const double rnorm = rhat * (gammahat * gammahat * gammahat + 1.0) * (gammahat + 1.0) /
                       ((gammahat * gammahat + 1.0) * (gammahat * gammahat + 1.0));
  const auto& t = gamma_table();
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < t.alpha.size(); ++i) {
    const double d = (t.aggd_ratio[i] - rnorm) * (t.aggd_ratio[i] - rnorm);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return {t.alpha[best], lstd, rstd};
}

struct ScaleMaps {
  Plane mscn;
  Plane sigma;
};

ScaleMaps mscn(const Plane& img) {
  const auto k = gaussian_kernel(7, 7.0 / 6.0);
  const Plane mu = filter_replicate(img, k);
  const Plane var = filter_replicate(img.cwiseProduct(img), k) - mu.cwiseProduct(mu);
  ScaleMaps m;
  m.sigma = var.cwiseAbs().cwiseSqrt();
  m.mscn = (img - mu).cwiseQuotient((m.sigma.array() + 1.0).matrix());
  return m;
}

// 18 features of one patch of an MSCN map.
void patch_features(const Plane& m, long r0, long c0, long p, double* out) {
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(p * p));
  for (long r = r0; r < r0 + p; ++r)
    for (long c = c0; c < c0 + p; ++c) v.push_back(m(r, c));
  auto [a, l, rr] = fit_aggd(v);
  out[0] = a;
  out[1] = (l * l + rr * rr) / 2.0;
  const long shifts[4][2] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};
  for (int s = 0; s < 4; ++s) {
    std::vector<double> prod;
    for (long r = r0; r < r0 + p; ++r)
      for (long c = c0; c < c0 + p; ++c) {
        const long r2 = r + shifts[s][0], c2 = c + shifts[s][1];
        if (r2 < r0 || r2 >= r0 + p || c2 < c0 || c2 >= c0 + p) continue;
        prod.push_back(m(r, c) * m(r2, c2));
      }
    auto [pa, pl, pr] = fit_aggd(prod);
    const double g1 = std::tgamma(1.0 / pa), g2 = std::tgamma(2.0 / pa), g3 = std::tgamma(3.0 / pa);
    const double eta = (pr - pl) * (g2 / g1) * std::sqrt(g1 / g3);
    out[2 + 4 * s] = pa;
    out[3 + 4 * s] = eta;
    out[4 + 4 * s] = pl * pl;
    out[5 + 4 * s] = pr * pr;
  }
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> mean_cov(const Eigen::MatrixXd& f) {
  const Eigen::VectorXd mu = f.colwise().mean().transpose();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(f.cols(), f.cols());
  if (f.rows() > 1) {
    const Eigen::MatrixXd c = f.rowwise() - mu.transpose();
    cov = c.transpose() * c / static_cast<double>(f.rows() - 1);
  }
  return {mu, cov};
}

}  // namespace

Eigen::MatrixXd niqe_patch_features(const ImageTensor& img, bool sharp_only, int patch_size) {
  check_image(img, "niqe");
  if (patch_size < 8 || patch_size % 2 != 0) throw ArgumentError("niqe: patch size must be even and >= 8");
  const int rows = img.height / patch_size, cols = img.width / patch_size;
  if (rows < 1 || cols < 1)
    throw ArgumentError("niqe: image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                        " smaller than one " + std::to_string(patch_size) + "x" + std::to_string(patch_size) + " patch");
  const ImageTensor y = crop(luminance(img), 0, 0, rows * patch_size, cols * patch_size);
  const ImageTensor y2 = bicubic_resize(y, Rational{1, 2});
  const ScaleMaps s1 = mscn(to_plane(y, 255.0));
  const ScaleMaps s2 = mscn(to_plane(y2, 255.0));

  const long n = static_cast<long>(rows) * cols;
  Eigen::MatrixXd feats(n, kNiqeFeatures);
  std::vector<double> sharpness(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    const long r = i / cols, c = i % cols;
    Eigen::Matrix<double, 1, kNiqeFeatures> row;
    patch_features(s1.mscn, r * patch_size, c * patch_size, patch_size, row.data());
    patch_features(s2.mscn, r * patch_size / 2, c * patch_size / 2, patch_size / 2, row.data() + 18);
    feats.row(i) = row;
    sharpness[static_cast<std::size_t>(i)] =
        s1.sigma.block(r * patch_size, c * patch_size, patch_size, patch_size).mean();
  }
  if (!sharp_only) return feats;
  const double max_sharp = *std::max_element(sharpness.begin(), sharpness.end());
  std::vector<long> keep;
  for (long i = 0; i < n; ++i)
    if (sharpness[static_cast<std::size_t>(i)] > kNiqeSharpnessFraction * max_sharp) keep.push_back(i);
  Eigen::MatrixXd out(static_cast<long>(keep.size()), kNiqeFeatures);
  for (std::size_t k = 0; k < keep.size(); ++k) out.row(static_cast<long>(k)) = feats.row(keep[k]);
  return out;
}

NiqeModel fit_niqe(const std::vector<ImageTensor>& corpus, int patch_size) {
  std::vector<Eigen::MatrixXd> parts;
  long total = 0;
  for (const ImageTensor& img : corpus) {
    if (img.height < patch_size || img.width < patch_size) continue;
    parts.push_back(niqe_patch_features(img, true, patch_size));
    total += parts.back().rows();
  }
  if (total < kNiqeMinPatches)
    throw ArgumentError("fit_niqe: insufficient patches (" + std::to_string(total) + " pristine patches from " +
                        std::to_string(corpus.size()) + " images, need at least " + std::to_string(kNiqeMinPatches) + ")");
  Eigen::MatrixXd all(total, kNiqeFeatures);
  long at = 0;
  for (const auto& p : parts) {
    all.middleRows(at, p.rows()) = p;
    at += p.rows();
  }
  NiqeModel m;
  std::tie(m.mu, m.cov) = mean_cov(all);
  m.patch_size = patch_size;
  m.n_patches = total;
  return m;
}

double niqe(const ImageTensor& img, const NiqeModel& model) {
  if (!model.fitted()) throw ConfigurationError("niqe: model is not fitted");
  const Eigen::MatrixXd f = niqe_patch_features(img, false, model.patch_size);
  const auto [mu, cov] = mean_cov(f);
  const Eigen::VectorXd d = model.mu - mu;
  const Eigen::MatrixXd pooled = (model.cov + cov) / 2.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(pooled, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double tol = 1e-15 * (sv.size() ? sv(0) : 0.0);
  Eigen::VectorXd inv = sv;
  for (long i = 0; i < sv.size(); ++i) inv(i) = sv(i) > tol ? 1.0 / sv(i) : 0.0;
  const Eigen::MatrixXd pinv = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
  return std::sqrt(std::max(0.0, d.dot(pinv * d)));
}

void save_niqe_model(const NiqeModel& model, const std::filesystem::path& path) {
  if (!model.fitted()) throw ConfigurationError("save_niqe_model: model is not fitted");
  nlohmann::json j;
  j["format"] = "refsr-niqe";
  j["version"] = 1;
  j["patch_size"] = model.patch_size;
  j["n_patches"] = model.n_patches;
  j["mu"] = std::vector<double>(model.mu.data(), model.mu.data() + model.mu.size());
  std::vector<std::vector<double>> cov;
  for (long r = 0; r < model.cov.rows(); ++r) {
    cov.emplace_back();
    for (long c = 0; c < model.cov.cols(); ++c) cov.back().push_back(model.cov(r, c));
  }
  j["cov"] = cov;
  const std::string s = j.dump(1);
  write_file_atomic(path, std::vector<std::uint8_t>(s.begin(), s.end()));
}

NiqeModel load_niqe_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("NIQE model file not found: '" + path.string() + "'");
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.value("format", "") != "refsr-niqe") throw FormatError("'" + path.string() + "' is not a NIQE model");
    NiqeModel m;
    m.patch_size = j.at("patch_size").get<int>();
    m.n_patches = j.at("n_patches").get<long>();
    const auto mu = j.at("mu").get<std::vector<double>>();
    const auto cov = j.at("cov").get<std::vector<std::vector<double>>>();
    m.mu = Eigen::Map<const Eigen::VectorXd>(mu.data(), static_cast<long>(mu.size()));
    m.cov.resize(static_cast<long>(cov.size()), static_cast<long>(mu.size()));
    for (std::size_t r = 0; r < cov.size(); ++r) {
      if (cov[r].size() != mu.size()) throw FormatError("NIQE model covariance is not square");
      for (std::size_t c = 0; c < mu.size(); ++c) m.cov(static_cast<long>(r), static_cast<long>(c)) = cov[r][c];
    }
    if (m.cov.rows() != m.cov.cols()) throw FormatError("NIQE model covariance is not square");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("NIQE model '" + path.string() + "' unreadable: " + e.what());
  }
}

double perceptual_index(double ma, double niqe_score) { return 0.5 * ((10.0 - ma) + niqe_score); }

std::string format_eval_table(const std::vector<EvalRow>& rows) {
  auto num = [](const std::optional<double>& v) -> std::string {
    if (!v) return "n/a";
    if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os.precision(6);
    os << std::fixed << *v;
    return os.str();
  };
  std::ostringstream os;
  os << "image_id,psnr,ssim,niqe,ma,pi\n";
  for (const EvalRow& r : rows)
    os << r.image_id << ',' << num(r.psnr) << ',' << num(r.ssim) << ',' << num(r.niqe) << ',' << num(r.ma) << ','
       << num(r.pi) << '\n';
  return os.str();
}

std::map<std::string, double> load_ma_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("Ma score file not found: '" + path.string() + "'");
  std::map<std::string, double> out;
  std::string line;
  std::getline(in, line);
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("Ma score file line " + std::to_string(lineno) + ": expected id,score");
    try {
      out[line.substr(0, comma)] = std::stod(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw FormatError("Ma score file line " + std::to_string(lineno) + ": bad score");
    }
  }
  return out;
}

}  // namespace refsr
