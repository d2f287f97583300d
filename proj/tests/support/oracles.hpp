#pragma once

#include <functional>
#include <vector>

#include "refsr/image.hpp"
#include "refsr/matching.hpp"
#include "refsr/tensor.hpp"

namespace refsr::testing {

/// Exhaustive cosine-similarity search over every reference patch in row-major order;
/// the first maximum wins.
MatchMap brute_force_match(const Tensor& query, const Tensor& ref, int patch, int stride);

/// Transfer by explicit per-pixel accumulation and division by the contribution count.
Tensor naive_transfer(const Tensor& ref_feat, const MatchMap& match, int scale_gap);

/// Bicubic resize as a direct 2-D sum over the full kernel footprint, 0-based centres.
ImageTensor direct_bicubic(const ImageTensor& img, double factor);

/// SSIM with the 2-D Gaussian window evaluated at every valid position.
double windowed_ssim(const ImageTensor& a, const ImageTensor& b);

/// Gram matrix of one sample as an explicit triple loop, normalised by H*W.
std::vector<std::vector<double>> naive_gram(const Tensor& feat);

/// Central finite differences of f with respect to every entry of x.
std::vector<double> finite_difference(const std::function<double(const Tensor&)>& f, const Tensor& x, double h);

/// ||a - b|| / max(||a||, ||b||, 1e-300).
double relative_error(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace refsr::testing
