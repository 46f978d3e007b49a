#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hyperleaf/degrade.hpp"
#include "hyperleaf/rng.hpp"
#include "hyperleaf/tensor.hpp"

namespace hyperleaf {

// One rectangular leaf: half-sides a/2 x b/2, rotated by theta around
// (cx, cy) in pixel coordinates (x along width, y along height), carrying
// abundance `value` on channel `material`.
struct Leaf {
  double a = 1.0;
  double b = 1.0;
  double theta = 0.0;   // radians in [0, pi)
  double value = 0.0;   // in [0, 1]
  double cx = 0.0;
  double cy = 0.0;
  int material = 0;
};

// How the local-variation layer enters the field: added on top of the
// finished occlusion field (default), or placed first so it occludes.
enum class VariationMode { additive, occluding_top };

VariationMode parse_variation_mode(const std::string& s);
std::string to_string(VariationMode m);

struct GenConfig {
  int n_materials = 6;
  int height = 512;
  int width = 512;
  int side_min = 4;   // uniform integer law for a and b
  int side_max = 40;
  int variation_count = 50;
  double variation_value_max = 0.15;
  double leakage_eps = 0.05;  // off-dominant channels draw Uniform[0, eps]
  VariationMode variation_mode = VariationMode::additive;
  uint64_t seed = 0;

  // Reference defaults are 4..40 sides at 500x500; other sizes scale the
  // side range proportionally (clamped below at 1).
  static GenConfig defaults_for(int n_materials, int height, int width);

  void validate() const;
};

// Draw one leaf. RNG consumption order: a, b, theta, value, cx, cy, material.
Leaf sample_leaf(Rng& rng, const GenConfig& cfg);

// All pixels (i, j) whose centers (j+0.5, i+0.5) lie inside the rotated
// rectangle, clipped to the image, in row-major scan order. No
// anti-aliasing; may be empty for sub-pixel leaves off any center.
std::vector<std::pair<int, int>> rasterize_leaf(const Leaf& leaf, int height, int width);

constexpr long kLeafSafetyCap = 1000000;

struct BaseField {
  AbundanceMap map;  // raw, unnormalized
  long leaf_count = 0;
};

// Perfect-simulation occlusion field: each new leaf writes only the still
// uncovered pixels it reaches (dominant channel = leaf value, other
// channels independent Uniform[0, leakage_eps] per pixel), until the image
// is fully covered. `ownership`, when given, is filled with the claiming
// leaf's index per pixel.
BaseField generate_base_field(Rng& rng, const GenConfig& cfg,
                              std::vector<long>* ownership = nullptr);

// Additive low-value perturbation: variation_count leaves each add a value
// drawn Uniform[0, variation_value_max] to their material channel over their
// pixel set; result clamped at 0 from below.
AbundanceMap apply_local_variation(Rng& rng, const GenConfig& cfg, const AbundanceMap& raw);

// Pixelwise sum-to-one normalization. Requires non-negative input and a
// positive sum at every pixel.
AbundanceMap asc_normalize(const AbundanceMap& raw);

// Full recipe for one map: occlusion field + local variation (per
// variation_mode) + ASC normalization.
AbundanceMap generate_abundance(Rng& rng, const GenConfig& cfg);

// ---------------------------------------------------------------------------
// Dataset generation
// ---------------------------------------------------------------------------

struct ManifestEntry {
  int index = 0;
  std::string hr_path;  // relative to the manifest
  std::string lr_path;
  uint64_t seed = 0;    // cfg.seed ^ index
};

struct DatasetManifest {
  GenConfig gen;
  PsfConfig psf;
  int n_images = 0;
  std::vector<ManifestEntry> entries;
  std::string dir;  // directory holding the manifest, for path resolution

  std::string resolve_hr(size_t k) const;
  std::string resolve_lr(size_t k) const;
};

// Writes n_images (HR, LR) HTF pairs plus manifest.txt into out_dir. Image i
// uses its own RNG stream seeded with cfg.seed ^ i, so regeneration is
// bit-identical and order-independent. `threads` > 1 enables a worker pool.
DatasetManifest generate_dataset(const GenConfig& cfg, int n_images, const PsfConfig& psf,
                                 const std::string& out_dir, int threads = 1);

DatasetManifest load_manifest(const std::string& path);

// Manifest text codec (header key=value block, then "index, hr, lr, seed"
// rows). Exposed for the CLI pipeline and tests.
void gen_config_to_kv(const GenConfig& cfg, class KeyValueConfig& kv);
GenConfig gen_config_from_kv(const class KeyValueConfig& kv);
void psf_config_to_kv(const PsfConfig& psf, class KeyValueConfig& kv);
PsfConfig psf_config_from_kv(const class KeyValueConfig& kv);

}  // namespace hyperleaf
