#pragma once

#include "refsr/image.hpp"

namespace refsr {

/// Single-level orthonormal Haar sub-bands, each (H/2) x (W/2) x C.
///
/// Kernels are outer products of L = [1, 1]/sqrt(2) and H = [-1, 1]/sqrt(2); the
/// first factor runs down the rows, the second across the columns. For a 2x2 block
/// [[a, b], [c, d]]:
///   LL = ( a + b + c + d) / 2
///   LH = (-a + b - c + d) / 2
///   HL = (-a - b + c + d) / 2
///   HH = ( a - b - c + d) / 2
struct WaveletBands {
  ImageTensor ll, lh, hl, hh;
};

WaveletBands haar_forward(const ImageTensor& img);

/// Exact synthesis. The result is not clamped.
ImageTensor haar_inverse(const WaveletBands& bands);

/// Adjoint of haar_forward; equal to haar_inverse.
ImageTensor haar_adjoint(const WaveletBands& bands);

/// HH band only; values lie in [-1, 1] for inputs in [0, 1].
ImageTensor extract_hh(const ImageTensor& img);

/// Maps an HH band into [0, 1] (v -> v/2 + 0.5) before it is fed to a feature extractor.
ImageTensor remap_hh(const ImageTensor& hh);

inline constexpr double kHhRemapScale = 0.5;
inline constexpr double kHhRemapOffset = 0.5;

}  // namespace refsr
