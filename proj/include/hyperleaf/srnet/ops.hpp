#pragma once

#include <vector>

#include "hyperleaf/tensor.hpp"

namespace hyperleaf::srnet {

// 2-D cross-correlation kernel, laid out w[((oc*in_c + ic)*kh + ky)*kw + kx].
// Only odd square sizes (1x1, 3x3) are used; padding is same with zeros.
struct ConvKernel {
  int out_c = 0;
  int in_c = 0;
  int kh = 0;
  int kw = 0;
  std::vector<double> w;

  ConvKernel() = default;
  ConvKernel(int oc, int ic, int h, int ww)
      : out_c(oc), in_c(ic), kh(h), kw(ww), w(static_cast<size_t>(oc) * ic * h * ww, 0.0) {}

  size_t index(int oc, int ic, int ky, int kx) const {
    return ((static_cast<size_t>(oc) * in_c + ic) * kh + ky) * kw + kx;
  }
};

// y[oc,i,j] = bias[oc] + sum_{ic,ky,kx} w[oc,ic,ky,kx] * x[ic, i+ky-ph, j+kx-pw]
// Accumulation is binary64 in fixed (ic,ky,kx) order per output pixel.
Tensor3 conv2d_forward(const Tensor3& x, const ConvKernel& k, const std::vector<double>& bias);

// Gradients of a scalar loss w.r.t. input, kernel, and bias given dL/dy.
// gk/gbias are accumulated into (callers zero them per batch); gx is
// overwritten.
void conv2d_backward(const Tensor3& x, const ConvKernel& k, const Tensor3& gy, Tensor3* gx,
                     ConvKernel* gk, std::vector<double>* gbias);

Tensor3 relu_forward(const Tensor3& x);
Tensor3 relu_backward(const Tensor3& x, const Tensor3& gy);  // subgradient 0 at x == 0

Tensor3 concat_channels(const std::vector<const Tensor3*>& xs);

// Sub-pixel upsampling (4C, H, W) -> (C, 2H, 2W). Source channel for output
// (c, 2i+di, 2j+dj) is c*4 + di*2 + dj; shuffle_down_x2 is the exact inverse.
Tensor3 pixel_shuffle_x2(const Tensor3& x);
Tensor3 shuffle_down_x2(const Tensor3& y);

// Channel-axis softmax per pixel with max-subtraction stabilization.
// Output satisfies ANC/ASC by construction.
Tensor3 softmax_channels(const Tensor3& x);
Tensor3 softmax_backward(const Tensor3& y, const Tensor3& gy);

struct L1Result {
  double loss = 0.0;
  Tensor3 grad;  // dL/dpred; 0 at exact ties
};

// Mean absolute error over all elements.
L1Result l1_loss(const Tensor3& pred, const Tensor3& target);

}  // namespace hyperleaf::srnet
