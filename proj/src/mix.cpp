#include "hyperleaf/mix.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace hyperleaf {

namespace {

// Lower-triangular Cholesky of a small SPD matrix (row-major n x n).
// Throws singularity_error when a pivot collapses.
std::vector<double> cholesky(const std::vector<double>& m, int n) {
  std::vector<double> l(static_cast<size_t>(n) * n, 0.0);
  double scale = 0.0;
  for (int i = 0; i < n; ++i) scale = std::max(scale, std::fabs(m[static_cast<size_t>(i) * n + i]));
  const double pivot_floor = scale * 1e-12;

  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double acc = m[static_cast<size_t>(i) * n + j];
      for (int k = 0; k < j; ++k) {
        acc -= l[static_cast<size_t>(i) * n + k] * l[static_cast<size_t>(j) * n + k];
      }
      if (i == j) {
        if (!(acc > pivot_floor)) {
          fail("singularity_error", "endmember matrix is rank-deficient (pivot " +
                                        std::to_string(acc) + " at column " + std::to_string(i) +
                                        ")");
        }
        l[static_cast<size_t>(i) * n + i] = std::sqrt(acc);
      } else {
        l[static_cast<size_t>(i) * n + j] = acc / l[static_cast<size_t>(j) * n + j];
      }
    }
  }
  return l;
}

// Solve L L^T x = b in place.
void cholesky_solve(const std::vector<double>& l, int n, std::vector<double>& b) {
  for (int i = 0; i < n; ++i) {
    double acc = b[i];
    for (int k = 0; k < i; ++k) acc -= l[static_cast<size_t>(i) * n + k] * b[k];
    b[i] = acc / l[static_cast<size_t>(i) * n + i];
  }
  for (int i = n - 1; i >= 0; --i) {
    double acc = b[i];
    for (int k = i + 1; k < n; ++k) acc -= l[static_cast<size_t>(k) * n + i] * b[k];
    b[i] = acc / l[static_cast<size_t>(i) * n + i];
  }
}

}  // namespace

Tensor3 mix(const EndmemberMatrix& s, const AbundanceMap& a) {
  if (a.materials() != s.materials) {
    fail("dimension_error", "abundance channels (" + std::to_string(a.materials()) +
                                ") do not match endmember materials (" +
                                std::to_string(s.materials) + ")");
  }
  const Tensor3& m = a.inner;
  Tensor3 cube(s.bands, m.height, m.width, 0.0);
  for (int l = 0; l < s.bands; ++l) {
    double* out = cube.band(l);
    for (int n = 0; n < s.materials; ++n) {
      const double w = s.at(l, n);
      const double* src = m.band(n);
      const size_t plane = m.plane_size();
      for (size_t p = 0; p < plane; ++p) out[p] += w * src[p];
    }
  }
  return cube;
}

Tensor3 reconstruct_hr(const EndmemberMatrix& s, const AbundanceMap& a_hr) { return mix(s, a_hr); }

AbundanceMap unmix_oracle(const EndmemberMatrix& s, const Tensor3& cube) {
  if (cube.channels != s.bands) {
    fail("dimension_error", "cube bands (" + std::to_string(cube.channels) +
                                ") do not match endmember bands (" + std::to_string(s.bands) + ")");
  }
  const int n = s.materials;
  const int L = s.bands;

  // Gram matrix S^T S.
  std::vector<double> gram(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int l = 0; l < L; ++l) acc += s.at(l, i) * s.at(l, j);
      gram[static_cast<size_t>(i) * n + j] = acc;
    }
  }
  const std::vector<double> chol = cholesky(gram, n);

  Tensor3 out(n, cube.height, cube.width, 0.0);
  std::vector<double> rhs(n);
  for (int i = 0; i < cube.height; ++i) {
    for (int j = 0; j < cube.width; ++j) {
      for (int k = 0; k < n; ++k) {
        double acc = 0.0;
        for (int l = 0; l < L; ++l) acc += s.at(l, k) * cube.at(l, i, j);
        rhs[k] = acc;
      }
      cholesky_solve(chol, n, rhs);
      double sum = 0.0;
      for (int k = 0; k < n; ++k) {
        if (rhs[k] < 0.0) rhs[k] = 0.0;
        sum += rhs[k];
      }
      if (sum <= 0.0) {
        fail("normalization_error", "unmixed pixel (" + std::to_string(i) + "," +
                                        std::to_string(j) + ") has zero abundance sum");
      }
      for (int k = 0; k < n; ++k) out.at(k, i, j) = rhs[k] / sum;
    }
  }
  return AbundanceMap(std::move(out), true);
}

}  // namespace hyperleaf
