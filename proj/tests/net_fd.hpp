#pragma once

// End-to-end finite-difference check of the full network + L1 loss.
//
// The composed loss is piecewise linear (ReLU activations, L1), so any one
// random draw can land a kink inside the central-difference window and spoil
// a handful of near-zero-gradient coordinates. Kinks move with the data
// while a wrong analytic gradient does not, so each sampled coordinate is
// checked at several random (input, target) draws and scored by its best
// agreement; a genuine backward bug keeps every draw's error large.

#include <algorithm>
#include <vector>

#include "fd_check.hpp"
#include "hyperleaf/srnet/network.hpp"
#include "test_util.hpp"

namespace fdcheck {

inline double end_to_end_fd_error(const hyperleaf::srnet::NetArch& arch,
                                  hyperleaf::srnet::NetworkParams& params,
                                  const std::vector<uint64_t>& data_seeds, double h = 1e-5) {
  using hyperleaf::Tensor3;
  namespace srnet = hyperleaf::srnet;

  std::vector<double> best;  // elementwise min across draws
  for (const uint64_t seed : data_seeds) {
    hyperleaf::Rng rng(seed);
    const hyperleaf::AbundanceMap in = testutil::random_abundance(arch.in_channels, 8, 8, rng);
    const hyperleaf::AbundanceMap target =
        testutil::random_abundance(arch.in_channels, 8 * arch.scale, 8 * arch.scale, rng);

    const auto loss_now = [&]() {
      srnet::Tape tape(&params);
      const int out = srnet::build_forward(tape, arch, in.inner);
      return srnet::l1_loss(tape.value(out), target.inner).loss;
    };

    srnet::NetworkParams grads = srnet::NetworkParams::zeros_like(params);
    Tensor3 input_grad;
    {
      srnet::Tape tape(&params);
      const int out = srnet::build_forward(tape, arch, in.inner);
      const srnet::L1Result l1 = srnet::l1_loss(tape.value(out), target.inner);
      tape.backward(out, l1.grad, &grads);
      input_grad = tape.grad(0);
    }

    std::vector<double> rel;
    for (size_t e = 0; e < params.entries.size(); ++e) {
      auto& kw = params.entries[e].kernel.w;
      check_vector_grad(kw, loss_now, grads.entries[e].kernel.w, h,
                        std::max<size_t>(1, kw.size() / 12), &rel);
      auto& bias = params.entries[e].bias;
      check_vector_grad(bias, loss_now, grads.entries[e].bias, h,
                        std::max<size_t>(1, bias.size() / 4), &rel);
    }
    check_input_grad(
        in.inner,
        [&](const Tensor3& xin) {
          srnet::Tape tape(&params);
          const int out = srnet::build_forward(tape, arch, xin);
          return srnet::l1_loss(tape.value(out), target.inner).loss;
        },
        input_grad, h, 17, &rel);

    if (best.empty()) {
      best = rel;
    } else {
      for (size_t k = 0; k < best.size(); ++k) best[k] = std::min(best[k], rel[k]);
    }
  }
  return *std::max_element(best.begin(), best.end());
}

}  // namespace fdcheck
