#pragma once

#include "hyperleaf/tensor.hpp"

namespace hyperleaf {

// Linear mixing model: cube(l,i,j) = sum_n S(l,n) * A(n,i,j).
// Output has L channels at A's spatial dims; binary64 accumulation.
Tensor3 mix(const EndmemberMatrix& s, const AbundanceMap& a);

// Same combination at HR dims; named to mirror the reconstruction step of
// the pipeline.
Tensor3 reconstruct_hr(const EndmemberMatrix& s, const AbundanceMap& a_hr);

// Per-pixel least-squares abundance recovery via normal equations
// (Cholesky, binary64), then clamp at 0 and pixel renormalization.
// S must have full column rank; N <= L.
AbundanceMap unmix_oracle(const EndmemberMatrix& s, const Tensor3& cube);

}  // namespace hyperleaf
