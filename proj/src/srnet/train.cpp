#include "hyperleaf/srnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "hyperleaf/config.hpp"
#include "hyperleaf/metrics.hpp"

namespace fs = std::filesystem;

namespace hyperleaf::srnet {

void TrainConfig::validate() const {
  if (epochs < 1) fail("config_error", "train.epochs must be >= 1");
  if (!(learning_rate >= 0.0)) fail("config_error", "train.learning_rate must be >= 0");
  if (batch_size < 1) fail("config_error", "train.batch_size must be >= 1");
  if (patch_size < 1) fail("config_error", "train.patch_size must be >= 1");
  if (patches_per_image < 1) fail("config_error", "train.patches_per_image must be >= 1");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    fail("config_error", "train.val_fraction must be in [0, 1)");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && eps > 0.0)) {
    fail("config_error", "train adam parameters out of range");
  }
}

void adam_step(NetworkParams& params, const NetworkParams& grads, AdamState& state,
               const TrainConfig& cfg) {
  state.step += 1;
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (size_t e = 0; e < params.entries.size(); ++e) {
    auto update = [&](std::vector<double>& p, const std::vector<double>& g,
                      std::vector<double>& m, std::vector<double>& v) {
      for (size_t k = 0; k < p.size(); ++k) {
        m[k] = b1 * m[k] + (1.0 - b1) * g[k];
        v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
        const double mhat = m[k] / bc1;
        const double vhat = v[k] / bc2;
        p[k] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps);
      }
    };
    update(params.entries[e].kernel.w, grads.entries[e].kernel.w, state.m.entries[e].kernel.w,
           state.v.entries[e].kernel.w);
    update(params.entries[e].bias, grads.entries[e].bias, state.m.entries[e].bias,
           state.v.entries[e].bias);
  }
}

namespace {

struct Sample {
  Tensor3 lr;
  Tensor3 hr;
};

Tensor3 crop(const Tensor3& t, int i0, int j0, int h, int w) {
  Tensor3 out(t.channels, h, w);
  for (int c = 0; c < t.channels; ++c) {
    for (int i = 0; i < h; ++i) {
      const double* src = t.band(c) + static_cast<size_t>(i0 + i) * t.width + j0;
      std::copy(src, src + w, out.band(c) + static_cast<size_t>(i) * w);
    }
  }
  return out;
}

double validation_mpsnr(const NetworkParams& params, const NetArch& arch,
                        const std::vector<Sample>& val) {
  double acc = 0.0;
  for (const Sample& s : val) {
    const AbundanceMap pred = forward(params, arch, AbundanceMap(s.lr, true));
    acc += mpsnr(s.hr, pred.inner, 1.0);
  }
  return acc / static_cast<double>(val.size());
}

}  // namespace

TrainResult train(const DatasetManifest& manifest, const NetArch& arch, const TrainConfig& cfg,
                  const std::string& resume_dir) {
  arch.validate();
  cfg.validate();
  if (manifest.entries.empty()) fail("config_error", "manifest lists no images");

  // Load the whole dataset; desk-scale sets fit comfortably in memory.
  std::vector<Sample> samples;
  samples.reserve(manifest.entries.size());
  for (size_t k = 0; k < manifest.entries.size(); ++k) {
    Sample s;
    s.lr = load_tensor(manifest.resolve_lr(k));
    s.hr = load_tensor(manifest.resolve_hr(k));
    if (s.lr.channels != arch.in_channels || s.hr.channels != arch.in_channels) {
      fail("dimension_error", "dataset channels do not match arch.in_channels");
    }
    if (s.hr.height != s.lr.height * arch.scale || s.hr.width != s.lr.width * arch.scale) {
      fail("dimension_error", "HR dims are not scale x LR dims for image " +
                                  std::to_string(manifest.entries[k].index));
    }
    if (s.lr.height < cfg.patch_size || s.lr.width < cfg.patch_size) {
      fail("config_error", "train.patch_size exceeds LR image side");
    }
    samples.push_back(std::move(s));
  }

  // Held-out tail for validation mPSNR; single-image sets validate on the
  // training image itself.
  const int n_total = static_cast<int>(samples.size());
  int n_val = std::min(n_total - 1,
                       std::max(n_total > 1 && cfg.val_fraction > 0.0 ? 1 : 0,
                                static_cast<int>(std::lround(cfg.val_fraction * n_total))));
  if (n_val < 0) n_val = 0;
  const int n_train = n_total - n_val;
  std::vector<Sample> val;
  if (n_val > 0) {
    val.assign(samples.begin() + n_train, samples.end());
    samples.resize(n_train);
  } else {
    val.push_back(samples[0]);
  }

  NetworkParams params;
  AdamState state;
  Rng rng(derive_seed(cfg.seed, "train"));
  int start_epoch = 0;
  if (resume_dir.empty()) {
    params = init_params(arch, cfg.seed);
    state.m = NetworkParams::zeros_like(params);
    state.v = NetworkParams::zeros_like(params);
  } else {
    CheckpointMeta meta;
    params = load_checkpoint(resume_dir, &meta, &state.m, &state.v);
    if (!meta.has_optimizer) {
      fail("config_error", "checkpoint " + resume_dir + " holds no optimizer state");
    }
    state.step = meta.step;
    rng.set_state(meta.rng_state);
    start_epoch = meta.epoch;
  }

  const std::string log_path =
      cfg.checkpoint_dir.empty() ? "" : (fs::path(cfg.checkpoint_dir) / "train_log.csv").string();
  std::ofstream log_out;
  if (!log_path.empty()) {
    std::error_code ec;
    fs::create_directories(cfg.checkpoint_dir, ec);
    if (ec) fail("io_error", "cannot create " + cfg.checkpoint_dir + ": " + ec.message());
    log_out.open(log_path, resume_dir.empty() ? std::ios::trunc : std::ios::app);
    if (!log_out) fail("io_error", "cannot open " + log_path);
    if (resume_dir.empty()) log_out << "epoch,loss,val_mpsnr\n";
  }

  auto save_ckpt = [&](int epoch) {
    if (cfg.checkpoint_dir.empty()) return;
    CheckpointMeta meta;
    meta.arch = arch;
    meta.init_seed = cfg.seed;
    meta.step = state.step;
    meta.epoch = epoch;
    meta.rng_state = rng.state();
    const std::string dir =
        (fs::path(cfg.checkpoint_dir) / ("ckpt_" + std::to_string(epoch))).string();
    save_checkpoint(dir, params, meta, &state.m, &state.v);
  };

  TrainResult result;
  NetworkParams grads = NetworkParams::zeros_like(params);

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    // Epoch order: every train image appears patches_per_image times,
    // Fisher-Yates shuffled.
    std::vector<int> order;
    order.reserve(static_cast<size_t>(n_train) * cfg.patches_per_image);
    for (int r = 0; r < cfg.patches_per_image; ++r) {
      for (int k = 0; k < n_train; ++k) order.push_back(k);
    }
    for (size_t k = order.size(); k > 1; --k) {
      const size_t j = rng.uniform_below(k);
      std::swap(order[k - 1], order[j]);
    }

    double epoch_loss = 0.0;
    long batch_count = 0;
    size_t cursor = 0;
    while (cursor < order.size()) {
      const size_t batch_n = std::min<size_t>(cfg.batch_size, order.size() - cursor);
      grads.fill(0.0);
      double batch_loss = 0.0;
      for (size_t bk = 0; bk < batch_n; ++bk) {
        const Sample& s = samples[order[cursor + bk]];
        const int pi = static_cast<int>(rng.uniform_below(s.lr.height - cfg.patch_size + 1));
        const int pj = static_cast<int>(rng.uniform_below(s.lr.width - cfg.patch_size + 1));
        Tensor3 lr_patch = crop(s.lr, pi, pj, cfg.patch_size, cfg.patch_size);
        Tensor3 hr_patch = crop(s.hr, pi * arch.scale, pj * arch.scale,
                                cfg.patch_size * arch.scale, cfg.patch_size * arch.scale);

        Tape tape(&params);
        const int out = build_forward(tape, arch, std::move(lr_patch));
        L1Result l1 = l1_loss(tape.value(out), hr_patch);
        if (!std::isfinite(l1.loss)) {
          fail("training_error", "non-finite loss at epoch " + std::to_string(epoch) +
                                     ", batch " + std::to_string(batch_count) + ", image index " +
                                     std::to_string(manifest.entries[order[cursor + bk]].index) +
                                     ", seed " + format_u64(cfg.seed));
        }
        batch_loss += l1.loss;
        const double inv_batch = 1.0 / static_cast<double>(batch_n);
        for (double& g : l1.grad.data) g *= inv_batch;
        tape.backward(out, l1.grad, &grads);
      }
      adam_step(params, grads, state, cfg);
      epoch_loss += batch_loss / static_cast<double>(batch_n);
      ++batch_count;
      cursor += batch_n;
    }

    TrainLogRow row;
    row.epoch = epoch;
    row.loss = epoch_loss / static_cast<double>(batch_count);
    row.val_mpsnr = validation_mpsnr(params, arch, val);
    result.log.push_back(row);
    if (log_out.is_open()) {
      log_out << row.epoch << "," << format_double(row.loss) << ","
              << format_double(row.val_mpsnr) << "\n";
      log_out.flush();
    }

    const bool last = epoch + 1 == cfg.epochs;
    if (last || (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)) {
      save_ckpt(epoch + 1);
    }
  }

  result.params = std::move(params);
  return result;
}

AbundanceMap infer(const NetworkParams& params, const NetArch& arch, const AbundanceMap& a_lr,
                   const InferOptions& opt) {
  arch.validate();
  const Tensor3& in = a_lr.inner;
  if (opt.tile_size < 1 || opt.overlap < 0) fail("config_error", "bad infer tiling options");
  if (in.height <= opt.tile_size && in.width <= opt.tile_size) {
    return forward(params, arch, a_lr);
  }

  const int S = arch.scale;
  Tensor3 out(in.channels, in.height * S, in.width * S, 0.0);
  for (int ti = 0; ti < in.height; ti += opt.tile_size) {
    const int core_h = std::min(opt.tile_size, in.height - ti);
    const int ext_i0 = std::max(0, ti - opt.overlap);
    const int ext_i1 = std::min(in.height, ti + core_h + opt.overlap);
    for (int tj = 0; tj < in.width; tj += opt.tile_size) {
      const int core_w = std::min(opt.tile_size, in.width - tj);
      const int ext_j0 = std::max(0, tj - opt.overlap);
      const int ext_j1 = std::min(in.width, tj + core_w + opt.overlap);

      Tensor3 tile(in.channels, ext_i1 - ext_i0, ext_j1 - ext_j0);
      for (int c = 0; c < in.channels; ++c) {
        for (int i = ext_i0; i < ext_i1; ++i) {
          const double* src = in.band(c) + static_cast<size_t>(i) * in.width + ext_j0;
          std::copy(src, src + (ext_j1 - ext_j0),
                    tile.band(c) + static_cast<size_t>(i - ext_i0) * tile.width);
        }
      }

      const AbundanceMap pred = forward(params, arch, AbundanceMap(std::move(tile), true));
      // Center-crop: keep only the core region of this tile's output.
      const int oi0 = (ti - ext_i0) * S;
      const int oj0 = (tj - ext_j0) * S;
      for (int c = 0; c < in.channels; ++c) {
        for (int i = 0; i < core_h * S; ++i) {
          const double* src = pred.inner.band(c) +
                              static_cast<size_t>(oi0 + i) * pred.inner.width + oj0;
          double* dst = out.band(c) + static_cast<size_t>(ti * S + i) * out.width + tj * S;
          std::copy(src, src + core_w * S, dst);
        }
      }
    }
  }
  return AbundanceMap(std::move(out), true);
}

}  // namespace hyperleaf::srnet
