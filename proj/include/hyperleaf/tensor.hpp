#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "hyperleaf/error.hpp"

namespace hyperleaf {

// Rank-3 grid of reals in channel-major row-major order:
// element (c, i, j) lives at linear index c*H*W + i*W + j.
// Values are binary64 in memory; the on-disk HTF format stores binary32.
struct Tensor3 {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(int c, int h, int w, double fill = 0.0);

  size_t index(int c, int i, int j) const {
    return (static_cast<size_t>(c) * height + i) * width + j;
  }
  double& at(int c, int i, int j) { return data[index(c, i, j)]; }
  double at(int c, int i, int j) const { return data[index(c, i, j)]; }

  size_t size() const { return data.size(); }
  size_t plane_size() const { return static_cast<size_t>(height) * width; }

  double* band(int c) { return data.data() + c * plane_size(); }
  const double* band(int c) const { return data.data() + c * plane_size(); }

  bool same_shape(const Tensor3& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
  bool all_finite() const;
};

// Fill-constructed tensor; zero or negative dimensions are a dimension error.
Tensor3 tensor_new(int channels, int height, int width, double fill);

// Abundance stack: channel n holds material n's per-pixel fraction.
// ANC: all values >= 0. ASC (when `normalized`): per-pixel channel sums
// within 1e-6 of 1.
struct AbundanceMap {
  Tensor3 inner;
  bool normalized = false;

  AbundanceMap() = default;
  explicit AbundanceMap(Tensor3 t, bool norm = false) : inner(std::move(t)), normalized(norm) {}

  int materials() const { return inner.channels; }
  int height() const { return inner.height; }
  int width() const { return inner.width; }
};

struct AbundanceReport {
  bool anc_ok = false;
  bool asc_ok = false;
  double worst_pixel_sum_error = 0.0;
  double min_value = 0.0;
};

// Pure report, never throws. asc_ok <=> max_{i,j} |sum_n A(n,i,j) - 1| <= tol.
AbundanceReport validate_abundance(const AbundanceMap& a, double tol);

// L x N spectra matrix, column n = spectrum of material n. N <= L, all
// values finite and >= 0.
struct EndmemberMatrix {
  int bands = 0;      // L
  int materials = 0;  // N
  std::vector<double> values;  // row-major: values[l*materials + n]

  EndmemberMatrix() = default;
  EndmemberMatrix(int l, int n);

  double& at(int l, int n) { return values[static_cast<size_t>(l) * materials + n]; }
  double at(int l, int n) const { return values[static_cast<size_t>(l) * materials + n]; }

  void validate() const;
};

// ---------------------------------------------------------------------------
// HTF tensor file format (bit-exact):
//   bytes 0-3   ASCII magic "HTF1"
//   bytes 4-7   u32 LE ndims (always 3)
//   bytes 8-19  3 x u32 LE dims, order (C, H, W)
//   bytes 20-23 u32 LE dtype code (1 = float32, 2 = float64)
//   then C*H*W values, little-endian, row-major channel-major
// save_tensor always writes dtype 1; dtype 2 is used by network checkpoints,
// which need full binary64 state for bit-exact resume.
// ---------------------------------------------------------------------------

void save_tensor(const Tensor3& t, const std::string& path);
void save_tensor_f64(const Tensor3& t, const std::string& path);
Tensor3 load_tensor(const std::string& path);

// Endmember matrices travel as HTF tensors with dims (L, N, 1).
void save_endmembers(const EndmemberMatrix& s, const std::string& path);
EndmemberMatrix load_endmembers(const std::string& path);

}  // namespace hyperleaf
