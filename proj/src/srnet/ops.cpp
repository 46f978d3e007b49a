#include "hyperleaf/srnet/ops.hpp"

#include <algorithm>
#include <cmath>

namespace hyperleaf::srnet {

namespace {

void check_conv_shapes(const Tensor3& x, const ConvKernel& k, const std::vector<double>& bias) {
  if (k.in_c != x.channels) {
    fail("dimension_error", "conv input channels " + std::to_string(x.channels) +
                                " != kernel in_c " + std::to_string(k.in_c));
  }
  if (static_cast<int>(bias.size()) != k.out_c) {
    fail("dimension_error", "conv bias size != out_c");
  }
  if (k.kh % 2 == 0 || k.kw % 2 == 0) {
    fail("dimension_error", "conv kernels must have odd sides");
  }
}

// Zero-padded copies of each channel plane, one pixel of margin all around.
// Turns same-padding 3x3 loops into branch-free streams the compiler can
// vectorize.
std::vector<double> pad_planes(const Tensor3& t) {
  const int pw = t.width + 2, ph = t.height + 2;
  std::vector<double> out(static_cast<size_t>(t.channels) * ph * pw, 0.0);
  for (int c = 0; c < t.channels; ++c) {
    double* dst = out.data() + static_cast<size_t>(c) * ph * pw;
    for (int i = 0; i < t.height; ++i) {
      const double* src = t.band(c) + static_cast<size_t>(i) * t.width;
      std::copy(src, src + t.width, dst + static_cast<size_t>(i + 1) * pw + 1);
    }
  }
  return out;
}

void conv3x3_forward_impl(const Tensor3& x, const ConvKernel& k, const std::vector<double>& bias,
                          Tensor3& y) {
  const int H = x.height, W = x.width;
  const int pw = W + 2;
  const std::vector<double> xp = pad_planes(x);

  for (int oc = 0; oc < k.out_c; ++oc) {
    double* yb = y.band(oc);
    std::fill(yb, yb + y.plane_size(), bias[oc]);
    for (int ic = 0; ic < k.in_c; ++ic) {
      const double* xq = xp.data() + static_cast<size_t>(ic) * (H + 2) * pw;
      const double* w = k.w.data() + k.index(oc, ic, 0, 0);
      const double w0 = w[0], w1 = w[1], w2 = w[2];
      const double w3 = w[3], w4 = w[4], w5 = w[5];
      const double w6 = w[6], w7 = w[7], w8 = w[8];
      for (int i = 0; i < H; ++i) {
        const double* r0 = xq + static_cast<size_t>(i) * pw;
        const double* r1 = r0 + pw;
        const double* r2 = r1 + pw;
        double* yr = yb + static_cast<size_t>(i) * W;
        for (int j = 0; j < W; ++j) {
          yr[j] += w0 * r0[j] + w1 * r0[j + 1] + w2 * r0[j + 2] + w3 * r1[j] + w4 * r1[j + 1] +
                   w5 * r1[j + 2] + w6 * r2[j] + w7 * r2[j + 1] + w8 * r2[j + 2];
        }
      }
    }
  }
}

void conv1x1_forward_impl(const Tensor3& x, const ConvKernel& k, const std::vector<double>& bias,
                          Tensor3& y) {
  const size_t plane = x.plane_size();
  for (int oc = 0; oc < k.out_c; ++oc) {
    double* yb = y.band(oc);
    std::fill(yb, yb + plane, bias[oc]);
    for (int ic = 0; ic < k.in_c; ++ic) {
      const double wv = k.w[k.index(oc, ic, 0, 0)];
      const double* xb = x.band(ic);
      for (size_t p = 0; p < plane; ++p) yb[p] += wv * xb[p];
    }
  }
}

// Generic same-padding cross-correlation for any odd kernel size.
void conv_generic_forward_impl(const Tensor3& x, const ConvKernel& k,
                               const std::vector<double>& bias, Tensor3& y) {
  const int H = x.height, W = x.width;
  const int ph = k.kh / 2, pwd = k.kw / 2;
  for (int oc = 0; oc < k.out_c; ++oc) {
    double* yb = y.band(oc);
    std::fill(yb, yb + y.plane_size(), bias[oc]);
    for (int ic = 0; ic < k.in_c; ++ic) {
      const double* xb = x.band(ic);
      for (int ky = 0; ky < k.kh; ++ky) {
        const int dy = ky - ph;
        const int i_lo = std::max(0, -dy);
        const int i_hi = std::min(H, H - dy);
        for (int kx = 0; kx < k.kw; ++kx) {
          const int dx = kx - pwd;
          const int j_lo = std::max(0, -dx);
          const int j_hi = std::min(W, W - dx);
          const double wv = k.w[k.index(oc, ic, ky, kx)];
          for (int i = i_lo; i < i_hi; ++i) {
            double* yr = yb + static_cast<size_t>(i) * W;
            const double* xr = xb + static_cast<size_t>(i + dy) * W + dx;
            for (int j = j_lo; j < j_hi; ++j) yr[j] += wv * xr[j];
          }
        }
      }
    }
  }
}

// Plane dot product with a fixed sixteen-lane accumulation order (enough
// independent chains to hide FMA latency whatever the vector width).
double dot_blocked(const double* a, const double* b, size_t n) {
  double lane[16] = {};
  size_t p = 0;
  for (; p + 16 <= n; p += 16) {
    for (int l = 0; l < 16; ++l) lane[l] += a[p + l] * b[p + l];
  }
  double tail = 0.0;
  for (; p < n; ++p) tail += a[p] * b[p];
  double acc = 0.0;
  for (int l = 0; l < 16; ++l) acc += lane[l];
  return acc + tail;
}

double sum_blocked(const double* a, size_t n) {
  double lane[16] = {};
  size_t p = 0;
  for (; p + 16 <= n; p += 16) {
    for (int l = 0; l < 16; ++l) lane[l] += a[p + l];
  }
  double tail = 0.0;
  for (; p < n; ++p) tail += a[p];
  double acc = 0.0;
  for (int l = 0; l < 16; ++l) acc += lane[l];
  return acc + tail;
}

}  // namespace

Tensor3 conv2d_forward(const Tensor3& x, const ConvKernel& k, const std::vector<double>& bias) {
  check_conv_shapes(x, k, bias);
  Tensor3 y(k.out_c, x.height, x.width);
  if (k.kh == 3 && k.kw == 3) {
    conv3x3_forward_impl(x, k, bias, y);
  } else if (k.kh == 1 && k.kw == 1) {
    conv1x1_forward_impl(x, k, bias, y);
  } else {
    conv_generic_forward_impl(x, k, bias, y);
  }
  return y;
}

void conv2d_backward(const Tensor3& x, const ConvKernel& k, const Tensor3& gy, Tensor3* gx,
                     ConvKernel* gk, std::vector<double>* gbias) {
  const int H = x.height, W = x.width;
  if (gy.channels != k.out_c || gy.height != H || gy.width != W) {
    fail("dimension_error", "conv backward: gy shape mismatch");
  }

  if (gbias) {
    for (int oc = 0; oc < k.out_c; ++oc) {
      (*gbias)[oc] += sum_blocked(gy.band(oc), gy.plane_size());
    }
  }

  if (gk && k.kh == 3 && k.kw == 3) {
    // dL/dw[oc,ic,tap] = <gy[oc], x[ic] shifted by tap>; nine shifted dot
    // products against the zero-padded input.
    const int pw = W + 2;
    const std::vector<double> xp = pad_planes(x);
    for (int oc = 0; oc < k.out_c; ++oc) {
      const double* gb = gy.band(oc);
      for (int ic = 0; ic < k.in_c; ++ic) {
        const double* xq = xp.data() + static_cast<size_t>(ic) * (H + 2) * pw;
        double* wg = gk->w.data() + gk->index(oc, ic, 0, 0);
        for (int tap = 0; tap < 9; ++tap) {
          const int ky = tap / 3, kx = tap % 3;
          double lane[16] = {};
          double tail = 0.0;
          for (int i = 0; i < H; ++i) {
            const double* gr = gb + static_cast<size_t>(i) * W;
            const double* xr = xq + static_cast<size_t>(i + ky) * pw + kx;
            int j = 0;
            for (; j + 16 <= W; j += 16) {
              for (int l = 0; l < 16; ++l) lane[l] += gr[j + l] * xr[j + l];
            }
            for (; j < W; ++j) tail += gr[j] * xr[j];
          }
          double acc = 0.0;
          for (int l = 0; l < 16; ++l) acc += lane[l];
          wg[tap] += acc + tail;
        }
      }
    }
  } else if (gk && k.kh == 1 && k.kw == 1) {
    for (int oc = 0; oc < k.out_c; ++oc) {
      for (int ic = 0; ic < k.in_c; ++ic) {
        gk->w[gk->index(oc, ic, 0, 0)] += dot_blocked(gy.band(oc), x.band(ic), x.plane_size());
      }
    }
  } else if (gk) {
    const int ph = k.kh / 2, pwd = k.kw / 2;
    for (int oc = 0; oc < k.out_c; ++oc) {
      const double* gb = gy.band(oc);
      for (int ic = 0; ic < k.in_c; ++ic) {
        const double* xb = x.band(ic);
        for (int ky = 0; ky < k.kh; ++ky) {
          const int dy = ky - ph;
          const int i_lo = std::max(0, -dy);
          const int i_hi = std::min(H, H - dy);
          for (int kx = 0; kx < k.kw; ++kx) {
            const int dx = kx - pwd;
            const int j_lo = std::max(0, -dx);
            const int j_hi = std::min(W, W - dx);
            double acc = 0.0;
            for (int i = i_lo; i < i_hi; ++i) {
              const double* gr = gb + static_cast<size_t>(i) * W;
              const double* xr = xb + static_cast<size_t>(i + dy) * W + dx;
              for (int j = j_lo; j < j_hi; ++j) acc += gr[j] * xr[j];
            }
            gk->w[gk->index(oc, ic, ky, kx)] += acc;
          }
        }
      }
    }
  }

  if (gx && k.kh == 3 && k.kw == 3) {
    // dL/dx = full correlation of gy with the flipped kernel; reuse the
    // padded-plane stream with gy padded instead.
    const int pw = W + 2;
    const std::vector<double> gp = pad_planes(gy);
    *gx = Tensor3(k.in_c, H, W, 0.0);
    for (int ic = 0; ic < k.in_c; ++ic) {
      double* xb = gx->band(ic);
      for (int oc = 0; oc < k.out_c; ++oc) {
        const double* gq = gp.data() + static_cast<size_t>(oc) * (H + 2) * pw;
        const double* w = k.w.data() + k.index(oc, ic, 0, 0);
        // flipped taps
        const double w0 = w[8], w1 = w[7], w2 = w[6];
        const double w3 = w[5], w4 = w[4], w5 = w[3];
        const double w6 = w[2], w7 = w[1], w8 = w[0];
        for (int i = 0; i < H; ++i) {
          const double* r0 = gq + static_cast<size_t>(i) * pw;
          const double* r1 = r0 + pw;
          const double* r2 = r1 + pw;
          double* xr = xb + static_cast<size_t>(i) * W;
          for (int j = 0; j < W; ++j) {
            xr[j] += w0 * r0[j] + w1 * r0[j + 1] + w2 * r0[j + 2] + w3 * r1[j] + w4 * r1[j + 1] +
                     w5 * r1[j + 2] + w6 * r2[j] + w7 * r2[j + 1] + w8 * r2[j + 2];
          }
        }
      }
    }
  } else if (gx && k.kh == 1 && k.kw == 1) {
    *gx = Tensor3(k.in_c, H, W, 0.0);
    const size_t plane = x.plane_size();
    for (int ic = 0; ic < k.in_c; ++ic) {
      double* xb = gx->band(ic);
      for (int oc = 0; oc < k.out_c; ++oc) {
        const double wv = k.w[k.index(oc, ic, 0, 0)];
        const double* gb = gy.band(oc);
        for (size_t p = 0; p < plane; ++p) xb[p] += wv * gb[p];
      }
    }
  } else if (gx) {
    const int ph = k.kh / 2, pwd = k.kw / 2;
    *gx = Tensor3(k.in_c, H, W, 0.0);
    for (int oc = 0; oc < k.out_c; ++oc) {
      const double* gb = gy.band(oc);
      for (int ic = 0; ic < k.in_c; ++ic) {
        double* xb = gx->band(ic);
        for (int ky = 0; ky < k.kh; ++ky) {
          const int dy = ky - ph;  // gy row = i - dy
          const int i_lo = std::max(0, dy);
          const int i_hi = std::min(H, H + dy);
          for (int kx = 0; kx < k.kw; ++kx) {
            const int dx = kx - pwd;
            const int j_lo = std::max(0, dx);
            const int j_hi = std::min(W, W + dx);
            const double wv = k.w[k.index(oc, ic, ky, kx)];
            for (int i = i_lo; i < i_hi; ++i) {
              double* xr = xb + static_cast<size_t>(i) * W;
              const double* gr = gb + static_cast<size_t>(i - dy) * W - dx;
              for (int j = j_lo; j < j_hi; ++j) xr[j] += wv * gr[j];
            }
          }
        }
      }
    }
  }
}

Tensor3 relu_forward(const Tensor3& x) {
  Tensor3 y = x;
  for (double& v : y.data) v = std::max(0.0, v);
  return y;
}

Tensor3 relu_backward(const Tensor3& x, const Tensor3& gy) {
  Tensor3 gx = gy;
  for (size_t p = 0; p < x.data.size(); ++p) {
    if (!(x.data[p] > 0.0)) gx.data[p] = 0.0;
  }
  return gx;
}

Tensor3 concat_channels(const std::vector<const Tensor3*>& xs) {
  if (xs.empty()) fail("dimension_error", "concat of zero tensors");
  int channels = 0;
  for (const Tensor3* t : xs) {
    if (t->height != xs[0]->height || t->width != xs[0]->width) {
      fail("dimension_error", "concat inputs differ in spatial dims");
    }
    channels += t->channels;
  }
  Tensor3 y(channels, xs[0]->height, xs[0]->width);
  size_t off = 0;
  for (const Tensor3* t : xs) {
    std::copy(t->data.begin(), t->data.end(), y.data.begin() + off);
    off += t->data.size();
  }
  return y;
}

Tensor3 pixel_shuffle_x2(const Tensor3& x) {
  if (x.channels % 4 != 0) {
    fail("dimension_error",
         "pixel_shuffle_x2 needs channels divisible by 4, got " + std::to_string(x.channels));
  }
  const int C = x.channels / 4;
  Tensor3 y(C, 2 * x.height, 2 * x.width);
  for (int c = 0; c < C; ++c) {
    for (int di = 0; di < 2; ++di) {
      for (int dj = 0; dj < 2; ++dj) {
        const double* src = x.band(c * 4 + di * 2 + dj);
        for (int i = 0; i < x.height; ++i) {
          const double* sr = src + static_cast<size_t>(i) * x.width;
          double* dr = y.band(c) + static_cast<size_t>(2 * i + di) * y.width + dj;
          for (int j = 0; j < x.width; ++j) dr[2 * j] = sr[j];
        }
      }
    }
  }
  return y;
}

Tensor3 shuffle_down_x2(const Tensor3& y) {
  if (y.height % 2 != 0 || y.width % 2 != 0) {
    fail("dimension_error", "shuffle_down_x2 needs even spatial dims");
  }
  const int H = y.height / 2, W = y.width / 2;
  Tensor3 x(y.channels * 4, H, W);
  for (int c = 0; c < y.channels; ++c) {
    for (int di = 0; di < 2; ++di) {
      for (int dj = 0; dj < 2; ++dj) {
        double* dst = x.band(c * 4 + di * 2 + dj);
        for (int i = 0; i < H; ++i) {
          double* dr = dst + static_cast<size_t>(i) * W;
          const double* sr = y.band(c) + static_cast<size_t>(2 * i + di) * y.width + dj;
          for (int j = 0; j < W; ++j) dr[j] = sr[2 * j];
        }
      }
    }
  }
  return x;
}

Tensor3 softmax_channels(const Tensor3& x) {
  Tensor3 y(x.channels, x.height, x.width);
  const size_t plane = x.plane_size();
  for (size_t p = 0; p < plane; ++p) {
    double mx = x.band(0)[p];
    for (int c = 1; c < x.channels; ++c) mx = std::max(mx, x.band(c)[p]);
    double sum = 0.0;
    for (int c = 0; c < x.channels; ++c) {
      const double e = std::exp(x.band(c)[p] - mx);
      y.band(c)[p] = e;
      sum += e;
    }
    for (int c = 0; c < x.channels; ++c) y.band(c)[p] /= sum;
  }
  return y;
}

Tensor3 softmax_backward(const Tensor3& y, const Tensor3& gy) {
  Tensor3 gx(y.channels, y.height, y.width);
  const size_t plane = y.plane_size();
  for (size_t p = 0; p < plane; ++p) {
    double dot = 0.0;
    for (int c = 0; c < y.channels; ++c) dot += gy.band(c)[p] * y.band(c)[p];
    for (int c = 0; c < y.channels; ++c) {
      gx.band(c)[p] = y.band(c)[p] * (gy.band(c)[p] - dot);
    }
  }
  return gx;
}

L1Result l1_loss(const Tensor3& pred, const Tensor3& target) {
  if (!pred.same_shape(target)) fail("dimension_error", "l1_loss shape mismatch");
  L1Result res;
  res.grad = Tensor3(pred.channels, pred.height, pred.width, 0.0);
  const double inv = 1.0 / static_cast<double>(pred.data.size());
  double acc = 0.0;
  for (size_t p = 0; p < pred.data.size(); ++p) {
    const double d = pred.data[p] - target.data[p];
    acc += std::fabs(d);
    if (d > 0.0) {
      res.grad.data[p] = inv;
    } else if (d < 0.0) {
      res.grad.data[p] = -inv;
    }
  }
  res.loss = acc * inv;
  return res;
}

}  // namespace hyperleaf::srnet
