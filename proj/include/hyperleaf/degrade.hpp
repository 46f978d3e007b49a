#pragma once

#include <string>
#include <vector>

#include "hyperleaf/tensor.hpp"

namespace hyperleaf {

enum class DownsampleMethod { bicubic, decimate };

DownsampleMethod parse_downsample_method(const std::string& s);
std::string to_string(DownsampleMethod m);

// Simulated acquisition PSF: Gaussian blur, then downsampling by `factor`.
// `truncation` is the total kernel extent as a multiple of sigma; the default
// 6 gives a width-25 kernel at sigma 4 (radius 3 sigma each side).
struct PsfConfig {
  double sigma = 4.0;
  double truncation = 6.0;
  int factor = 4;
  DownsampleMethod method = DownsampleMethod::bicubic;

  void validate() const;
};

// Symmetric 1-D Gaussian kernel. Total width = smallest odd integer >=
// truncation*sigma; entries proportional to exp(-x^2 / (2 sigma^2)) at
// integer offsets, normalized to sum 1 in binary64.
std::vector<double> gaussian_kernel(double sigma, double truncation);

// Separable per-channel convolution (horizontal then vertical) with
// symmetric reflect boundary. Kernels wider than the image reflect
// repeatedly.
Tensor3 blur(const Tensor3& t, const std::vector<double>& kernel);

// Separable cubic-convolution resampling (Catmull-Rom family, a = -0.5),
// half-pixel aligned: src = (dst + 0.5) * (in/out) - 0.5, reflect boundary.
Tensor3 resample_bicubic(const Tensor3& t, int out_h, int out_w);

// Blur + downsample on a raw tensor. H and W must be divisible by factor.
Tensor3 degrade_tensor(const Tensor3& hr, const PsfConfig& psf);

// Abundance variant: after blur + downsample, clamps at 0 and re-normalizes
// each pixel so the LR map satisfies ASC again.
AbundanceMap degrade_pair(const AbundanceMap& hr, const PsfConfig& psf);

Tensor3 bicubic_upsample(const Tensor3& lr, int factor);

// Upsampling baseline for abundances: bicubic x factor, clamp at 0,
// re-normalize per pixel.
AbundanceMap bicubic_upsample_baseline(const AbundanceMap& lr, int factor);

}  // namespace hyperleaf
