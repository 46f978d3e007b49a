#include "hyperleaf/degrade.hpp"

#include <cmath>

namespace hyperleaf {

namespace {

// Half-sample symmetric reflection: ... x1 x0 | x0 x1 ... xn-1 | xn-1 xn-2 ...
// Tiles the signal with period 2n, so arbitrarily wide kernels are fine.
int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

// Cubic convolution kernel (Keys), parameter a = -0.5.
double cubic_weight(double x) {
  constexpr double a = -0.5;
  x = std::fabs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return a * (((x - 5.0) * x + 8.0) * x - 4.0);
  return 0.0;
}

struct ResampleTap {
  int idx[4];
  double w[4];
};

// Per-output-coordinate source taps for one axis.
std::vector<ResampleTap> resample_taps(int in_n, int out_n) {
  std::vector<ResampleTap> taps(out_n);
  const double scale = static_cast<double>(in_n) / out_n;
  for (int d = 0; d < out_n; ++d) {
    const double src = (d + 0.5) * scale - 0.5;
    const double base = std::floor(src);
    const int i0 = static_cast<int>(base);
    const double f = src - base;
    ResampleTap& t = taps[d];
    t.w[0] = cubic_weight(1.0 + f);
    t.w[1] = cubic_weight(f);
    t.w[2] = cubic_weight(1.0 - f);
    t.w[3] = cubic_weight(2.0 - f);
    t.idx[0] = reflect_index(i0 - 1, in_n);
    t.idx[1] = reflect_index(i0, in_n);
    t.idx[2] = reflect_index(i0 + 1, in_n);
    t.idx[3] = reflect_index(i0 + 2, in_n);
  }
  return taps;
}

}  // namespace

DownsampleMethod parse_downsample_method(const std::string& s) {
  if (s == "bicubic") return DownsampleMethod::bicubic;
  if (s == "decimate") return DownsampleMethod::decimate;
  fail("config_error", "unknown downsample method '" + s + "' (want bicubic|decimate)");
}

std::string to_string(DownsampleMethod m) {
  return m == DownsampleMethod::bicubic ? "bicubic" : "decimate";
}

void PsfConfig::validate() const {
  if (!(sigma > 0.0)) fail("config_error", "psf.sigma must be > 0");
  if (!(truncation > 0.0)) fail("config_error", "psf.truncation must be > 0");
  if (factor < 2) fail("config_error", "psf.factor must be >= 2");
}

std::vector<double> gaussian_kernel(double sigma, double truncation) {
  if (!(sigma > 0.0) || !(truncation > 0.0)) {
    fail("config_error", "gaussian_kernel needs sigma > 0 and truncation > 0");
  }
  int width = static_cast<int>(std::ceil(truncation * sigma));
  if (width % 2 == 0) ++width;
  if (width < 1) width = 1;
  const int radius = width / 2;

  std::vector<double> k(width);
  double sum = 0.0;
  for (int x = 0; x <= radius; ++x) {
    const double v = std::exp(-(static_cast<double>(x) * x) / (2.0 * sigma * sigma));
    k[radius + x] = v;
    k[radius - x] = v;  // same stored value, so symmetry is exact in bits
  }
  for (double v : k) sum += v;
  for (double& v : k) v /= sum;
  return k;
}

Tensor3 blur(const Tensor3& t, const std::vector<double>& kernel) {
  const int W = t.width, H = t.height;
  const int radius = static_cast<int>(kernel.size()) / 2;

  // Horizontal pass.
  Tensor3 hp(t.channels, H, W);
  for (int c = 0; c < t.channels; ++c) {
    for (int i = 0; i < H; ++i) {
      const double* row = t.band(c) + static_cast<size_t>(i) * W;
      double* out = hp.band(c) + static_cast<size_t>(i) * W;
      for (int j = 0; j < W; ++j) {
        double acc = 0.0;
        for (size_t k = 0; k < kernel.size(); ++k) {
          acc += kernel[k] * row[reflect_index(j + static_cast<int>(k) - radius, W)];
        }
        out[j] = acc;
      }
    }
  }

  // Vertical pass.
  Tensor3 out(t.channels, H, W);
  for (int c = 0; c < t.channels; ++c) {
    for (int i = 0; i < H; ++i) {
      double* dst = out.band(c) + static_cast<size_t>(i) * W;
      for (int j = 0; j < W; ++j) {
        double acc = 0.0;
        for (size_t k = 0; k < kernel.size(); ++k) {
          const int si = reflect_index(i + static_cast<int>(k) - radius, H);
          acc += kernel[k] * hp.band(c)[static_cast<size_t>(si) * W + j];
        }
        dst[j] = acc;
      }
    }
  }
  return out;
}

Tensor3 resample_bicubic(const Tensor3& t, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) fail("dimension_error", "resample target dims must be >= 1");

  const auto col_taps = resample_taps(t.width, out_w);

  // Horizontal pass: (C, H, in_w) -> (C, H, out_w).
  Tensor3 hp(t.channels, t.height, out_w);
  for (int c = 0; c < t.channels; ++c) {
    for (int i = 0; i < t.height; ++i) {
      const double* row = t.band(c) + static_cast<size_t>(i) * t.width;
      double* out = hp.band(c) + static_cast<size_t>(i) * out_w;
      for (int j = 0; j < out_w; ++j) {
        const ResampleTap& tap = col_taps[j];
        out[j] = tap.w[0] * row[tap.idx[0]] + tap.w[1] * row[tap.idx[1]] +
                 tap.w[2] * row[tap.idx[2]] + tap.w[3] * row[tap.idx[3]];
      }
    }
  }

  // Vertical pass: (C, in_h, out_w) -> (C, out_h, out_w).
  const auto row_taps = resample_taps(t.height, out_h);
  Tensor3 out(t.channels, out_h, out_w);
  for (int c = 0; c < t.channels; ++c) {
    for (int i = 0; i < out_h; ++i) {
      const ResampleTap& tap = row_taps[i];
      const double* r0 = hp.band(c) + static_cast<size_t>(tap.idx[0]) * out_w;
      const double* r1 = hp.band(c) + static_cast<size_t>(tap.idx[1]) * out_w;
      const double* r2 = hp.band(c) + static_cast<size_t>(tap.idx[2]) * out_w;
      const double* r3 = hp.band(c) + static_cast<size_t>(tap.idx[3]) * out_w;
      double* dst = out.band(c) + static_cast<size_t>(i) * out_w;
      for (int j = 0; j < out_w; ++j) {
        dst[j] = tap.w[0] * r0[j] + tap.w[1] * r1[j] + tap.w[2] * r2[j] + tap.w[3] * r3[j];
      }
    }
  }
  return out;
}

Tensor3 degrade_tensor(const Tensor3& hr, const PsfConfig& psf) {
  psf.validate();
  if (hr.height % psf.factor != 0 || hr.width % psf.factor != 0) {
    fail("dimension_error", "image dims " + std::to_string(hr.height) + "x" +
                                std::to_string(hr.width) + " not divisible by factor " +
                                std::to_string(psf.factor));
  }
  const Tensor3 blurred = blur(hr, gaussian_kernel(psf.sigma, psf.truncation));
  const int oh = hr.height / psf.factor;
  const int ow = hr.width / psf.factor;
  if (psf.method == DownsampleMethod::bicubic) {
    return resample_bicubic(blurred, oh, ow);
  }
  // Plain decimation: keep one sample per factor-sized cell.
  const int off = (psf.factor - 1) / 2;
  Tensor3 out(hr.channels, oh, ow);
  for (int c = 0; c < hr.channels; ++c) {
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        out.at(c, i, j) = blurred.at(c, i * psf.factor + off, j * psf.factor + off);
      }
    }
  }
  return out;
}

namespace {

// Clamp at 0 and re-normalize each pixel's channel sum to 1.
AbundanceMap renormalize(Tensor3 t) {
  for (double& v : t.data) {
    if (v < 0.0) v = 0.0;
  }
  for (int i = 0; i < t.height; ++i) {
    for (int j = 0; j < t.width; ++j) {
      double sum = 0.0;
      for (int c = 0; c < t.channels; ++c) sum += t.at(c, i, j);
      if (sum <= 0.0) {
        fail("normalization_error", "pixel (" + std::to_string(i) + "," + std::to_string(j) +
                                        ") has zero channel sum after degradation");
      }
      for (int c = 0; c < t.channels; ++c) t.at(c, i, j) /= sum;
    }
  }
  return AbundanceMap(std::move(t), true);
}

}  // namespace

AbundanceMap degrade_pair(const AbundanceMap& hr, const PsfConfig& psf) {
  Tensor3 lr = degrade_tensor(hr.inner, psf);
  if (!hr.normalized) return AbundanceMap(std::move(lr), false);
  return renormalize(std::move(lr));
}

Tensor3 bicubic_upsample(const Tensor3& lr, int factor) {
  if (factor < 1) fail("dimension_error", "upsample factor must be >= 1");
  return resample_bicubic(lr, lr.height * factor, lr.width * factor);
}

AbundanceMap bicubic_upsample_baseline(const AbundanceMap& lr, int factor) {
  Tensor3 up = bicubic_upsample(lr.inner, factor);
  if (!lr.normalized) return AbundanceMap(std::move(up), false);
  return renormalize(std::move(up));
}

}  // namespace hyperleaf
