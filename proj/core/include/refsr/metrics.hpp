#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "refsr/image.hpp"

namespace refsr {

/// BT.601 luma of an RGB image; LUMA images are returned unchanged.
ImageTensor luminance(const ImageTensor& img);

/// 10 log10(1 / MSE) on luminance; +infinity for identical images.
double psnr(const ImageTensor& a, const ImageTensor& b);

/// Mean SSIM on luminance: 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
/// dynamic range 1, statistics over valid window positions only.
double ssim(const ImageTensor& a, const ImageTensor& b);

inline constexpr int kSsimWindow = 11;

/// Pristine multivariate Gaussian of NIQE features (36 = 2 scales x 18).
struct NiqeModel {
  Eigen::VectorXd mu;
  Eigen::MatrixXd cov;
  int patch_size = 96;
  long n_patches = 0;

  bool fitted() const { return mu.size() > 0; }
};

inline constexpr int kNiqeFeatures = 36;
inline constexpr int kNiqePatch = 96;
/// Patches whose sharpness is below this fraction of the image maximum are not pristine.
inline constexpr double kNiqeSharpnessFraction = 0.75;
/// Fewer pristine patches than this cannot give a full-rank covariance.
inline constexpr long kNiqeMinPatches = kNiqeFeatures + 1;

/// Per-patch NIQE features of one image (rows = patches), optionally keeping only sharp patches.
Eigen::MatrixXd niqe_patch_features(const ImageTensor& img, bool sharp_only, int patch_size = kNiqePatch);

/// ArgumentError("insufficient patches ...") below kNiqeMinPatches pristine patches.
NiqeModel fit_niqe(const std::vector<ImageTensor>& corpus, int patch_size = kNiqePatch);

/// ConfigurationError for an unfitted model; ArgumentError for images smaller than one patch.
double niqe(const ImageTensor& img, const NiqeModel& model);

void save_niqe_model(const NiqeModel& model, const std::filesystem::path& path);
NiqeModel load_niqe_model(const std::filesystem::path& path);

/// 0.5 ((10 - ma) + niqe).
double perceptual_index(double ma, double niqe_score);

struct EvalRow {
  std::string image_id;
  double psnr = 0.0;
  double ssim = 0.0;
  std::optional<double> niqe;
  std::optional<double> ma;
  std::optional<double> pi;
};

/// CSV table: image_id,psnr,ssim,niqe,ma,pi ("inf" for infinite PSNR, "n/a" for missing values).
std::string format_eval_table(const std::vector<EvalRow>& rows);

/// Two-column CSV (image_id, ma) with a header row.
std::map<std::string, double> load_ma_scores(const std::filesystem::path& path);

}  // namespace refsr
