#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hyperleaf/deadleaves.hpp"
#include "hyperleaf/srnet/network.hpp"

namespace hyperleaf::srnet {

struct TrainConfig {
  int epochs = 100;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch_size = 8;
  int patch_size = 16;        // LR side; HR patches are patch_size * scale
  int patches_per_image = 1;  // random patches drawn per image per epoch
  uint64_t seed = 0;
  std::string checkpoint_dir;  // empty = no checkpoints
  int checkpoint_every = 25;   // epochs; the final epoch is always saved
  double val_fraction = 0.1;   // held-out tail of the manifest

  void validate() const;
};

struct AdamState {
  NetworkParams m;
  NetworkParams v;
  long step = 0;
};

// One bias-corrected Adam update; grads must be the batch-mean gradient.
void adam_step(NetworkParams& params, const NetworkParams& grads, AdamState& state,
               const TrainConfig& cfg);

struct TrainLogRow {
  int epoch = 0;
  double loss = 0.0;       // mean train L1 over the epoch
  double val_mpsnr = 0.0;  // abundance mPSNR on the held-out split, peak 1
};

struct TrainResult {
  NetworkParams params;
  std::vector<TrainLogRow> log;
};

// Patch-based training per the manifest. Fully deterministic under a fixed
// seed; `resume_dir` restarts bit-exactly from a checkpoint written by a
// previous run with the same configuration. A CSV log (epoch,loss,val_mpsnr)
// is written next to the checkpoints when checkpoint_dir is set.
TrainResult train(const DatasetManifest& manifest, const NetArch& arch, const TrainConfig& cfg,
                  const std::string& resume_dir = "");

struct InferOptions {
  int tile_size = 64;  // LR pixels; inputs up to this size run untiled
  int overlap = 8;     // LR-pixel context margin around each tile
};

// Forward pass with overlap-and-center-crop tiling for large inputs.
AbundanceMap infer(const NetworkParams& params, const NetArch& arch, const AbundanceMap& a_lr,
                   const InferOptions& opt = {});

}  // namespace hyperleaf::srnet
