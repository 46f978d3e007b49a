// hyperleaf - batch pipeline over HTF tensor files: synthetic abundance
// generation, PSF degradation, abundance super-resolution training and
// inference, linear mixing, and quality metrics.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <thread>

#include "hyperleaf/config.hpp"
#include "hyperleaf/deadleaves.hpp"
#include "hyperleaf/degrade.hpp"
#include "hyperleaf/error.hpp"
#include "hyperleaf/metrics.hpp"
#include "hyperleaf/mix.hpp"
#include "hyperleaf/srnet/train.hpp"
#include "hyperleaf/tensor.hpp"

namespace fs = std::filesystem;
using namespace hyperleaf;

namespace {

void print_header(const std::string& cmd, uint64_t seed) {
  std::cout << "# hyperleaf " << cmd << " seed=" << seed << "\n";
}

int worker_pool_size(int n_images) {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  int threads = static_cast<int>(hw);
  if (const char* env = std::getenv("HYPERLEAF_THREADS")) {
    try {
      threads = std::min(threads, static_cast<int>(parse_i64(env)));
    } catch (const Error&) {
      fail("config_error", "HYPERLEAF_THREADS must be an integer");
    }
  }
  return std::max(1, std::min(threads, n_images));
}

srnet::NetArch arch_from_kv(const KeyValueConfig& kv, int in_channels) {
  srnet::NetArch arch;
  arch.in_channels = in_channels;
  arch.g0 = static_cast<int>(kv.get_i64("net.g0", arch.g0));
  arch.d_blocks = static_cast<int>(kv.get_i64("net.d_blocks", arch.d_blocks));
  arch.c_layers = static_cast<int>(kv.get_i64("net.c_layers", arch.c_layers));
  arch.growth = static_cast<int>(kv.get_i64("net.growth", arch.growth));
  arch.scale = static_cast<int>(kv.get_i64("net.scale", arch.scale));
  arch.validate();
  return arch;
}

srnet::TrainConfig train_from_kv(const KeyValueConfig& kv) {
  srnet::TrainConfig cfg;
  cfg.epochs = static_cast<int>(kv.get_i64("train.epochs", cfg.epochs));
  cfg.learning_rate = kv.get_double("train.learning_rate", cfg.learning_rate);
  cfg.beta1 = kv.get_double("train.beta1", cfg.beta1);
  cfg.beta2 = kv.get_double("train.beta2", cfg.beta2);
  cfg.eps = kv.get_double("train.eps", cfg.eps);
  cfg.batch_size = static_cast<int>(kv.get_i64("train.batch_size", cfg.batch_size));
  cfg.patch_size = static_cast<int>(kv.get_i64("train.patch_size", cfg.patch_size));
  cfg.patches_per_image =
      static_cast<int>(kv.get_i64("train.patches_per_image", cfg.patches_per_image));
  cfg.seed = kv.get_u64("train.seed", cfg.seed);
  cfg.checkpoint_every =
      static_cast<int>(kv.get_i64("train.checkpoint_every", cfg.checkpoint_every));
  cfg.val_fraction = kv.get_double("train.val_fraction", cfg.val_fraction);
  return cfg;
}

struct SeedFlag {
  uint64_t value = 0;
  bool set = false;
};

void add_seed_flag(CLI::App* cmd, SeedFlag& seed) {
  cmd->add_option_function<uint64_t>(
      "--seed",
      [&seed](const uint64_t& v) {
        seed.value = v;
        seed.set = true;
      },
      "Base seed; all randomness flows from it");
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_gen_data(const std::string& config_path, const std::string& out_dir, int images_override,
                 const SeedFlag& seed) {
  const KeyValueConfig kv = KeyValueConfig::from_file(config_path);
  GenConfig gen = gen_config_from_kv(kv);
  const PsfConfig psf = psf_config_from_kv(kv);
  if (seed.set) gen.seed = seed.value;
  const int n_images =
      images_override > 0 ? images_override
                          : static_cast<int>(kv.get_i64("n_images", kv.get_i64("gen.n_images", 1)));
  print_header("gen-data", gen.seed);
  const int threads = worker_pool_size(n_images);
  const DatasetManifest manifest = generate_dataset(gen, n_images, psf, out_dir, threads);
  std::cout << "wrote " << manifest.entries.size() << " image pairs to " << out_dir << " ("
            << threads << " worker" << (threads == 1 ? "" : "s") << ")\n";
  return 0;
}

int cmd_degrade(const std::string& in_path, const std::string& out_path, const PsfConfig& psf,
                bool as_abundance, const SeedFlag& seed) {
  print_header("degrade", seed.value);
  const Tensor3 in = load_tensor(in_path);
  if (as_abundance) {
    const AbundanceMap lr = degrade_pair(AbundanceMap(in, true), psf);
    save_tensor(lr.inner, out_path);
  } else {
    save_tensor(degrade_tensor(in, psf), out_path);
  }
  std::cout << "degraded " << in_path << " (" << in.channels << "x" << in.height << "x" << in.width
            << ") -> " << out_path << "\n";
  return 0;
}

int cmd_train(const std::string& manifest_path, const std::string& arch_config,
              const std::string& train_config, const std::string& ckpt_dir, const SeedFlag& seed,
              const std::string& resume) {
  const DatasetManifest manifest = load_manifest(manifest_path);
  const srnet::NetArch arch =
      arch_from_kv(KeyValueConfig::from_file(arch_config), manifest.gen.n_materials);
  srnet::TrainConfig cfg = train_from_kv(KeyValueConfig::from_file(train_config));
  if (seed.set) cfg.seed = seed.value;
  cfg.checkpoint_dir = ckpt_dir;
  print_header("train", cfg.seed);
  const srnet::TrainResult result = srnet::train(manifest, arch, cfg, resume);
  std::cout << "trained " << cfg.epochs << " epochs on " << manifest.entries.size()
            << " images; final loss " << format_double(result.log.back().loss) << ", val mPSNR "
            << format_double(result.log.back().val_mpsnr) << " dB\n";
  std::cout << "checkpoints in " << ckpt_dir << "\n";
  return 0;
}

int cmd_infer(const std::string& ckpt_dir, const std::string& in_path, const std::string& out_path,
              int tile, int overlap, const SeedFlag& seed) {
  print_header("infer", seed.value);
  srnet::CheckpointMeta meta;
  const srnet::NetworkParams params = srnet::load_checkpoint(ckpt_dir, &meta);
  const Tensor3 in = load_tensor(in_path);
  srnet::InferOptions opt;
  if (tile > 0) opt.tile_size = tile;
  if (overlap >= 0) opt.overlap = overlap;
  const AbundanceMap out = srnet::infer(params, meta.arch, AbundanceMap(in, true), opt);
  save_tensor(out.inner, out_path);
  std::cout << "super-resolved " << in_path << " x" << meta.arch.scale << " -> " << out_path
            << "\n";
  return 0;
}

int cmd_mix(const std::string& s_path, const std::string& a_path, const std::string& out_path,
            const SeedFlag& seed) {
  print_header("mix", seed.value);
  const EndmemberMatrix s = load_endmembers(s_path);
  const Tensor3 a = load_tensor(a_path);
  const Tensor3 cube = mix(s, AbundanceMap(a, true));
  save_tensor(cube, out_path);
  std::cout << "mixed " << a_path << " with " << s_path << " -> " << out_path << " ("
            << cube.channels << " bands)\n";
  return 0;
}

int cmd_eval(const std::string& ref_path, const std::string& est_path,
             const std::string& report_path, const MetricsConfig& cfg, const SeedFlag& seed) {
  print_header("eval", seed.value);
  const Tensor3 ref = load_tensor(ref_path);
  const Tensor3 est = load_tensor(est_path);
  const MetricsReport rep = evaluate(ref, est, cfg);
  write_report_csv(rep, report_path);
  std::cout << "mpsnr=" << format_double(rep.mpsnr) << " msam=" << format_double(rep.msam)
            << " mergas=" << format_double(rep.mergas) << "\n";
  std::cout << "report written to " << report_path << "\n";
  return 0;
}

int cmd_pipeline(const std::string& config_path, bool dry_run, const SeedFlag& seed) {
  const KeyValueConfig kv = KeyValueConfig::from_file(config_path);
  const std::string out_dir = kv.require_string("pipeline.out_dir");
  const std::string a_lr_path = kv.require_string("pipeline.a_lr");
  const std::string s_path = kv.require_string("pipeline.endmembers");
  const std::string ref_path = kv.require_string("pipeline.reference");

  GenConfig gen = gen_config_from_kv(kv);
  const PsfConfig psf = psf_config_from_kv(kv);
  const int n_images =
      static_cast<int>(kv.get_i64("pipeline.n_images", kv.get_i64("gen.n_images", 100)));
  srnet::TrainConfig tcfg = train_from_kv(kv);
  const uint64_t base_seed =
      seed.set ? seed.value : kv.get_u64("pipeline.seed", kv.get_u64("gen.seed", 0));
  gen.seed = base_seed;
  tcfg.seed = base_seed;

  MetricsConfig mcfg;
  mcfg.ratio = kv.get_double("eval.ratio", 1.0 / psf.factor);
  mcfg.peak = kv.get_double("eval.peak", 1.0);
  mcfg.peak_mode = parse_peak_mode(kv.get_string("eval.peak_mode", "fixed"));

  print_header("pipeline", base_seed);

  const std::string data_dir = (fs::path(out_dir) / "data").string();
  const std::string ckpt_dir = (fs::path(out_dir) / "ckpt").string();
  const std::string a_hr_path = (fs::path(out_dir) / "a_hr.htf").string();
  const std::string cube_path = (fs::path(out_dir) / "hsi_hr.htf").string();
  const std::string report_path = (fs::path(out_dir) / "report.csv").string();

  if (dry_run) {
    std::cout << "plan:\n";
    std::cout << "  1. gen-data: " << n_images << " pairs of " << gen.n_materials << "x"
              << gen.height << "x" << gen.width << " -> " << data_dir << "\n";
    std::cout << "  2. train: " << tcfg.epochs << " epochs -> " << ckpt_dir << "\n";
    std::cout << "  3. infer: " << a_lr_path << " -> " << a_hr_path << "\n";
    std::cout << "  4. mix: " << s_path << " -> " << cube_path << "\n";
    std::cout << "  5. eval vs " << ref_path << " -> " << report_path << "\n";
    std::cout << "dry run, nothing written\n";
    return 0;
  }

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) fail("io_error", "cannot create " + out_dir + ": " + ec.message());

  std::cout << "[1/5] generating " << n_images << " synthetic pairs\n";
  const DatasetManifest manifest =
      generate_dataset(gen, n_images, psf, data_dir, worker_pool_size(n_images));

  std::cout << "[2/5] training (" << tcfg.epochs << " epochs)\n";
  const srnet::NetArch arch = arch_from_kv(kv, gen.n_materials);
  tcfg.checkpoint_dir = ckpt_dir;
  const srnet::TrainResult trained = srnet::train(manifest, arch, tcfg);

  std::cout << "[3/5] super-resolving " << a_lr_path << "\n";
  const Tensor3 a_lr = load_tensor(a_lr_path);
  const AbundanceMap a_hr = srnet::infer(trained.params, arch, AbundanceMap(a_lr, true));
  save_tensor(a_hr.inner, a_hr_path);

  std::cout << "[4/5] mixing with " << s_path << "\n";
  const EndmemberMatrix s = load_endmembers(s_path);
  const Tensor3 cube = reconstruct_hr(s, a_hr);
  save_tensor(cube, cube_path);

  std::cout << "[5/5] evaluating against " << ref_path << "\n";
  const Tensor3 ref = load_tensor(ref_path);
  const MetricsReport rep = evaluate(ref, cube, mcfg);
  write_report_csv(rep, report_path);

  std::cout << "summary: mpsnr=" << format_double(rep.mpsnr) << " msam=" << format_double(rep.msam)
            << " mergas=" << format_double(rep.mergas) << "\n";
  std::cout << "report written to " << report_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hyperspectral abundance super-resolution toolkit"};
  app.require_subcommand(1);

  SeedFlag seed;

  // gen-data
  std::string gen_config, gen_out;
  int gen_images = 0;
  CLI::App* gen = app.add_subcommand("gen-data", "Generate synthetic abundance pairs");
  gen->add_option("config", gen_config, "key=value config (gen.*, psf.*, n_images)")->required();
  gen->add_option("out_dir", gen_out, "output directory")->required();
  gen->add_option("--images", gen_images, "override image count");
  add_seed_flag(gen, seed);

  // degrade
  std::string dg_in, dg_out, dg_method = "bicubic";
  PsfConfig dg_psf;
  bool dg_abundance = false;
  CLI::App* dg = app.add_subcommand("degrade", "Blur + downsample one HTF tensor");
  dg->add_option("input", dg_in, "input .htf")->required();
  dg->add_option("output", dg_out, "output .htf")->required();
  dg->add_option("--sigma", dg_psf.sigma, "Gaussian sigma (default 4)");
  dg->add_option("--truncation", dg_psf.truncation, "kernel extent in sigmas (default 6)");
  dg->add_option("--factor", dg_psf.factor, "downsampling factor (default 4)");
  dg->add_option("--method", dg_method, "bicubic|decimate");
  dg->add_flag("--abundance", dg_abundance, "re-normalize pixels to keep ASC");
  add_seed_flag(dg, seed);

  // train
  std::string tr_manifest, tr_arch, tr_cfg, tr_ckpt, tr_resume;
  CLI::App* tr = app.add_subcommand("train", "Train the super-resolution network");
  tr->add_option("manifest", tr_manifest, "dataset manifest.txt")->required();
  tr->add_option("arch_config", tr_arch, "net.* key=value file")->required();
  tr->add_option("train_config", tr_cfg, "train.* key=value file")->required();
  tr->add_option("ckpt_dir", tr_ckpt, "checkpoint directory")->required();
  tr->add_option("--resume", tr_resume, "checkpoint dir to resume from");
  add_seed_flag(tr, seed);

  // infer
  std::string in_ckpt, in_lr, in_out;
  int in_tile = 0, in_overlap = -1;
  CLI::App* inf = app.add_subcommand("infer", "Super-resolve an abundance stack");
  inf->add_option("ckpt", in_ckpt, "checkpoint directory")->required();
  inf->add_option("input", in_lr, "LR abundance .htf")->required();
  inf->add_option("output", in_out, "HR abundance .htf")->required();
  inf->add_option("--tile", in_tile, "LR tile size for large inputs (default 64)");
  inf->add_option("--overlap", in_overlap, "LR context margin per tile (default 8)");
  add_seed_flag(inf, seed);

  // mix
  std::string mx_s, mx_a, mx_out;
  CLI::App* mx = app.add_subcommand("mix", "Combine endmembers and abundances into a cube");
  mx->add_option("endmembers", mx_s, "endmember .htf (L, N, 1)")->required();
  mx->add_option("abundances", mx_a, "abundance .htf")->required();
  mx->add_option("output", mx_out, "cube .htf")->required();
  add_seed_flag(mx, seed);

  // eval
  std::string ev_ref, ev_est, ev_report, ev_peak_mode = "fixed";
  MetricsConfig ev_cfg;
  CLI::App* ev = app.add_subcommand("eval", "mPSNR / mSAM / mERGAS report");
  ev->add_option("reference", ev_ref, "reference cube .htf")->required();
  ev->add_option("estimate", ev_est, "estimated cube .htf")->required();
  ev->add_option("report", ev_report, "output CSV")->required();
  ev->add_option("--ratio", ev_cfg.ratio, "resolution ratio (default 0.25)");
  ev->add_option("--peak", ev_cfg.peak, "PSNR peak (default 1.0)");
  ev->add_option("--peak-mode", ev_peak_mode, "fixed|per-band-max");
  add_seed_flag(ev, seed);

  // pipeline
  std::string pl_config;
  bool pl_dry = false;
  CLI::App* pl = app.add_subcommand("pipeline", "gen -> train -> infer -> mix -> eval");
  pl->add_option("config", pl_config, "end-to-end key=value config")->required();
  pl->add_flag("--dry-run", pl_dry, "print the plan without writing");
  add_seed_flag(pl, seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage_error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_config, gen_out, gen_images, seed);
    if (dg->parsed()) {
      dg_psf.method = parse_downsample_method(dg_method);
      return cmd_degrade(dg_in, dg_out, dg_psf, dg_abundance, seed);
    }
    if (tr->parsed()) return cmd_train(tr_manifest, tr_arch, tr_cfg, tr_ckpt, seed, tr_resume);
    if (inf->parsed()) return cmd_infer(in_ckpt, in_lr, in_out, in_tile, in_overlap, seed);
    if (mx->parsed()) return cmd_mix(mx_s, mx_a, mx_out, seed);
    if (ev->parsed()) {
      ev_cfg.peak_mode = parse_peak_mode(ev_peak_mode);
      return cmd_eval(ev_ref, ev_est, ev_report, ev_cfg, seed);
    }
    if (pl->parsed()) return cmd_pipeline(pl_config, pl_dry, seed);
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";  // "code: message"
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal_error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
