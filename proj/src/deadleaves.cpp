#include "hyperleaf/deadleaves.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "hyperleaf/config.hpp"

namespace fs = std::filesystem;

namespace hyperleaf {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string image_name(int index, const char* kind) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "img_%05d_%s.htf", index, kind);
  return buf;
}

// Writes `leaf` into the occlusion field: only pixels still uncovered are
// claimed. Returns how many pixels were newly covered.
long place_leaf_below(const Leaf& leaf, const GenConfig& cfg, Rng& rng, Tensor3& field,
                      std::vector<uint8_t>& covered, std::vector<long>* ownership,
                      long leaf_index) {
  long claimed = 0;
  for (const auto& [i, j] : rasterize_leaf(leaf, cfg.height, cfg.width)) {
    const size_t p = static_cast<size_t>(i) * cfg.width + j;
    if (covered[p]) continue;
    covered[p] = 1;
    ++claimed;
    if (ownership) (*ownership)[p] = leaf_index;
    for (int c = 0; c < cfg.n_materials; ++c) {
      if (c == leaf.material) {
        field.band(c)[p] = leaf.value;
      } else {
        field.band(c)[p] = rng.uniform(0.0, cfg.leakage_eps);
      }
    }
  }
  return claimed;
}

}  // namespace

VariationMode parse_variation_mode(const std::string& s) {
  if (s == "additive") return VariationMode::additive;
  if (s == "occluding-top") return VariationMode::occluding_top;
  fail("config_error", "unknown variation mode '" + s + "' (want additive|occluding-top)");
}

std::string to_string(VariationMode m) {
  return m == VariationMode::additive ? "additive" : "occluding-top";
}

GenConfig GenConfig::defaults_for(int n_materials, int height, int width) {
  GenConfig cfg;
  cfg.n_materials = n_materials;
  cfg.height = height;
  cfg.width = width;
  const double rel = static_cast<double>(std::min(height, width)) / 500.0;
  cfg.side_min = std::max(1, static_cast<int>(std::lround(4.0 * rel)));
  cfg.side_max = std::max(cfg.side_min, static_cast<int>(std::lround(40.0 * rel)));
  cfg.side_max = std::min(cfg.side_max, std::min(height, width));
  return cfg;
}

void GenConfig::validate() const {
  if (n_materials < 1) fail("config_error", "gen.n_materials must be >= 1");
  if (height < 1 || width < 1) fail("config_error", "gen.height and gen.width must be >= 1");
  if (side_min < 1) fail("config_error", "gen.side_min must be >= 1");
  if (side_max < side_min) fail("config_error", "gen.side_max must be >= gen.side_min");
  if (side_max > std::min(height, width)) {
    fail("config_error", "gen.side_max must be <= min(height, width)");
  }
  if (variation_count < 0) fail("config_error", "gen.variation_count must be >= 0");
  if (!(variation_value_max > 0.0 && variation_value_max <= 0.3)) {
    fail("config_error", "gen.variation_value_max must be in (0, 0.3]");
  }
  if (!(leakage_eps >= 0.0 && leakage_eps <= 0.2)) {
    fail("config_error", "gen.leakage_eps must be in [0, 0.2]");
  }
}

Leaf sample_leaf(Rng& rng, const GenConfig& cfg) {
  Leaf leaf;
  leaf.a = static_cast<double>(rng.uniform_range(cfg.side_min, cfg.side_max));
  leaf.b = static_cast<double>(rng.uniform_range(cfg.side_min, cfg.side_max));
  leaf.theta = rng.uniform01() * kPi;
  leaf.value = rng.uniform01();
  // Poisson positions conditioned on the window are uniform over it.
  leaf.cx = rng.uniform01() * cfg.width;
  leaf.cy = rng.uniform01() * cfg.height;
  leaf.material = static_cast<int>(rng.uniform_below(static_cast<uint64_t>(cfg.n_materials)));
  return leaf;
}

std::vector<std::pair<int, int>> rasterize_leaf(const Leaf& leaf, int height, int width) {
  if (height < 1 || width < 1) fail("dimension_error", "rasterize target dims must be >= 1");
  const double ha = leaf.a / 2.0;
  const double hb = leaf.b / 2.0;
  const double c = std::cos(leaf.theta);
  const double s = std::sin(leaf.theta);

  // Axis-aligned bounding box of the rotated rectangle.
  const double ex = std::fabs(c) * ha + std::fabs(s) * hb;
  const double ey = std::fabs(s) * ha + std::fabs(c) * hb;
  const int j0 = std::max(0, static_cast<int>(std::floor(leaf.cx - ex - 0.5)));
  const int j1 = std::min(width - 1, static_cast<int>(std::ceil(leaf.cx + ex - 0.5)));
  const int i0 = std::max(0, static_cast<int>(std::floor(leaf.cy - ey - 0.5)));
  const int i1 = std::min(height - 1, static_cast<int>(std::ceil(leaf.cy + ey - 0.5)));

  std::vector<std::pair<int, int>> pixels;
  for (int i = i0; i <= i1; ++i) {
    const double dy = (i + 0.5) - leaf.cy;
    for (int j = j0; j <= j1; ++j) {
      const double dx = (j + 0.5) - leaf.cx;
      const double u = c * dx + s * dy;   // along the `a` side
      const double v = -s * dx + c * dy;  // along the `b` side
      if (std::fabs(u) <= ha && std::fabs(v) <= hb) {
        pixels.emplace_back(i, j);
      }
    }
  }
  return pixels;
}

BaseField generate_base_field(Rng& rng, const GenConfig& cfg, std::vector<long>* ownership) {
  cfg.validate();
  const size_t plane = static_cast<size_t>(cfg.height) * cfg.width;
  Tensor3 field(cfg.n_materials, cfg.height, cfg.width, 0.0);
  std::vector<uint8_t> covered(plane, 0);
  if (ownership) ownership->assign(plane, -1);

  long uncovered = static_cast<long>(plane);
  long leaf_count = 0;
  while (uncovered > 0) {
    if (leaf_count >= kLeafSafetyCap) {
      fail("generation_error", "leaf safety cap (" + std::to_string(kLeafSafetyCap) +
                                   ") reached with " + std::to_string(uncovered) +
                                   " pixels uncovered; degenerate config");
    }
    const Leaf leaf = sample_leaf(rng, cfg);
    uncovered -= place_leaf_below(leaf, cfg, rng, field, covered, ownership, leaf_count);
    ++leaf_count;
  }
  return BaseField{AbundanceMap(std::move(field), false), leaf_count};
}

AbundanceMap apply_local_variation(Rng& rng, const GenConfig& cfg, const AbundanceMap& raw) {
  Tensor3 out = raw.inner;
  for (int k = 0; k < cfg.variation_count; ++k) {
    Leaf leaf = sample_leaf(rng, cfg);
    const double delta = leaf.value * cfg.variation_value_max;
    double* band = out.band(leaf.material);
    for (const auto& [i, j] : rasterize_leaf(leaf, cfg.height, cfg.width)) {
      double& v = band[static_cast<size_t>(i) * cfg.width + j];
      v = std::max(0.0, v + delta);
    }
  }
  return AbundanceMap(std::move(out), false);
}

AbundanceMap asc_normalize(const AbundanceMap& raw) {
  Tensor3 t = raw.inner;
  for (double v : t.data) {
    if (!(v >= 0.0)) {
      fail("normalization_error", "asc_normalize requires non-negative input");
    }
  }
  for (int i = 0; i < t.height; ++i) {
    for (int j = 0; j < t.width; ++j) {
      double sum = 0.0;
      for (int c = 0; c < t.channels; ++c) sum += t.at(c, i, j);
      if (sum <= 0.0) {
        fail("normalization_error",
             "zero-sum pixel (" + std::to_string(i) + "," + std::to_string(j) + ")");
      }
      for (int c = 0; c < t.channels; ++c) t.at(c, i, j) /= sum;
    }
  }
  return AbundanceMap(std::move(t), true);
}

AbundanceMap generate_abundance(Rng& rng, const GenConfig& cfg) {
  cfg.validate();
  if (cfg.variation_mode == VariationMode::additive) {
    BaseField base = generate_base_field(rng, cfg);
    AbundanceMap varied = apply_local_variation(rng, cfg, base.map);
    return asc_normalize(varied);
  }

  // occluding-top: the variation leaves are placed first, so in the
  // below-placement construction they end up as the topmost layer.
  const size_t plane = static_cast<size_t>(cfg.height) * cfg.width;
  Tensor3 field(cfg.n_materials, cfg.height, cfg.width, 0.0);
  std::vector<uint8_t> covered(plane, 0);
  long uncovered = static_cast<long>(plane);
  long leaf_count = 0;
  for (int k = 0; k < cfg.variation_count && uncovered > 0; ++k) {
    Leaf leaf = sample_leaf(rng, cfg);
    leaf.value *= cfg.variation_value_max;
    uncovered -= place_leaf_below(leaf, cfg, rng, field, covered, nullptr, leaf_count);
    ++leaf_count;
  }
  while (uncovered > 0) {
    if (leaf_count >= kLeafSafetyCap) {
      fail("generation_error", "leaf safety cap reached; degenerate config");
    }
    const Leaf leaf = sample_leaf(rng, cfg);
    uncovered -= place_leaf_below(leaf, cfg, rng, field, covered, nullptr, leaf_count);
    ++leaf_count;
  }
  return asc_normalize(AbundanceMap(std::move(field), false));
}

// ---------------------------------------------------------------------------
// Dataset generation + manifest
// ---------------------------------------------------------------------------

void gen_config_to_kv(const GenConfig& cfg, KeyValueConfig& kv) {
  kv.set("gen.n_materials", std::to_string(cfg.n_materials));
  kv.set("gen.height", std::to_string(cfg.height));
  kv.set("gen.width", std::to_string(cfg.width));
  kv.set("gen.side_min", std::to_string(cfg.side_min));
  kv.set("gen.side_max", std::to_string(cfg.side_max));
  kv.set("gen.variation_count", std::to_string(cfg.variation_count));
  kv.set("gen.variation_value_max", format_double(cfg.variation_value_max));
  kv.set("gen.leakage_eps", format_double(cfg.leakage_eps));
  kv.set("gen.variation_mode", to_string(cfg.variation_mode));
  kv.set("gen.seed", format_u64(cfg.seed));
}

GenConfig gen_config_from_kv(const KeyValueConfig& kv) {
  GenConfig def;
  const int n = static_cast<int>(kv.get_i64("gen.n_materials", def.n_materials));
  const int h = static_cast<int>(kv.get_i64("gen.height", def.height));
  const int w = static_cast<int>(kv.get_i64("gen.width", def.width));
  GenConfig scaled = GenConfig::defaults_for(n, h, w);
  GenConfig cfg;
  cfg.n_materials = n;
  cfg.height = h;
  cfg.width = w;
  cfg.side_min = static_cast<int>(kv.get_i64("gen.side_min", scaled.side_min));
  cfg.side_max = static_cast<int>(kv.get_i64("gen.side_max", scaled.side_max));
  cfg.variation_count = static_cast<int>(kv.get_i64("gen.variation_count", def.variation_count));
  cfg.variation_value_max = kv.get_double("gen.variation_value_max", def.variation_value_max);
  cfg.leakage_eps = kv.get_double("gen.leakage_eps", def.leakage_eps);
  cfg.variation_mode = parse_variation_mode(kv.get_string("gen.variation_mode", "additive"));
  cfg.seed = kv.get_u64("gen.seed", def.seed);
  cfg.validate();
  return cfg;
}

void psf_config_to_kv(const PsfConfig& psf, KeyValueConfig& kv) {
  kv.set("psf.sigma", format_double(psf.sigma));
  kv.set("psf.truncation", format_double(psf.truncation));
  kv.set("psf.factor", std::to_string(psf.factor));
  kv.set("psf.method", to_string(psf.method));
}

PsfConfig psf_config_from_kv(const KeyValueConfig& kv) {
  PsfConfig psf;
  psf.sigma = kv.get_double("psf.sigma", psf.sigma);
  psf.truncation = kv.get_double("psf.truncation", psf.truncation);
  psf.factor = static_cast<int>(kv.get_i64("psf.factor", psf.factor));
  psf.method = parse_downsample_method(kv.get_string("psf.method", "bicubic"));
  psf.validate();
  return psf;
}

std::string DatasetManifest::resolve_hr(size_t k) const {
  return (fs::path(dir) / entries.at(k).hr_path).string();
}

std::string DatasetManifest::resolve_lr(size_t k) const {
  return (fs::path(dir) / entries.at(k).lr_path).string();
}

namespace {

// Generates and writes one (HR, LR) pair; pure function of (cfg, psf, index).
ManifestEntry generate_one(const GenConfig& cfg, const PsfConfig& psf, int index,
                           const std::string& out_dir) {
  const uint64_t seed_i = cfg.seed ^ static_cast<uint64_t>(index);
  Rng rng(seed_i);
  const AbundanceMap hr = generate_abundance(rng, cfg);

  const AbundanceReport hr_rep = validate_abundance(hr, 1e-6);
  if (!hr_rep.anc_ok || !hr_rep.asc_ok) {
    fail("generation_error", "image " + std::to_string(index) +
                                 " failed abundance validation (worst sum error " +
                                 format_double(hr_rep.worst_pixel_sum_error) + ")");
  }
  const AbundanceMap lr = degrade_pair(hr, psf);
  const AbundanceReport lr_rep = validate_abundance(lr, 1e-6);
  if (!lr_rep.anc_ok || !lr_rep.asc_ok) {
    fail("generation_error",
         "LR image " + std::to_string(index) + " failed abundance validation");
  }

  ManifestEntry e;
  e.index = index;
  e.hr_path = image_name(index, "hr");
  e.lr_path = image_name(index, "lr");
  e.seed = seed_i;
  save_tensor(hr.inner, (fs::path(out_dir) / e.hr_path).string());
  save_tensor(lr.inner, (fs::path(out_dir) / e.lr_path).string());
  return e;
}

}  // namespace

DatasetManifest generate_dataset(const GenConfig& cfg, int n_images, const PsfConfig& psf,
                                 const std::string& out_dir, int threads) {
  cfg.validate();
  psf.validate();
  if (n_images < 1) fail("config_error", "n_images must be >= 1");
  if (cfg.height % psf.factor != 0 || cfg.width % psf.factor != 0) {
    fail("dimension_error", "gen dims must be divisible by psf.factor");
  }

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) fail("io_error", "cannot create " + out_dir + ": " + ec.message());

  DatasetManifest manifest;
  manifest.gen = cfg;
  manifest.psf = psf;
  manifest.n_images = n_images;
  manifest.dir = out_dir;
  manifest.entries.resize(n_images);

  threads = std::clamp(threads, 1, n_images);
  if (threads == 1) {
    for (int i = 0; i < n_images; ++i) {
      manifest.entries[i] = generate_one(cfg, psf, i, out_dir);
    }
  } else {
    // Per-image seeds make output independent of scheduling.
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&, t]() {
        try {
          for (int i = t; i < n_images; i += threads) {
            manifest.entries[i] = generate_one(cfg, psf, i, out_dir);
          }
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  // Manifest: header block of key=value lines, then one row per image.
  std::ostringstream body;
  KeyValueConfig kv;
  gen_config_to_kv(cfg, kv);
  psf_config_to_kv(psf, kv);
  kv.set("n_images", std::to_string(n_images));
  for (const auto& [k, v] : kv.values()) body << k << "=" << v << "\n";
  for (const ManifestEntry& e : manifest.entries) {
    body << e.index << ", " << e.hr_path << ", " << e.lr_path << ", " << format_u64(e.seed)
         << "\n";
  }
  const std::string manifest_path = (fs::path(out_dir) / "manifest.txt").string();
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) fail("io_error", "cannot open " + manifest_path + " for writing");
  out << body.str();
  if (!out) fail("io_error", "write failed for " + manifest_path);
  return manifest;
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("io_error", "cannot open manifest " + path);

  KeyValueConfig kv;
  std::vector<ManifestEntry> entries;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (line.find('=') != std::string::npos) {
      const auto parts = split(line, '=');
      kv.set(trim(parts[0]), trim(line.substr(line.find('=') + 1)));
      continue;
    }
    const auto parts = split(line, ',');
    if (parts.size() != 4) {
      fail("format_error", path + ": line " + std::to_string(lineno) +
                               ": expected 'index, hr, lr, seed'");
    }
    ManifestEntry e;
    e.index = static_cast<int>(parse_i64(parts[0]));
    e.hr_path = trim(parts[1]);
    e.lr_path = trim(parts[2]);
    e.seed = parse_u64(parts[3]);
    entries.push_back(std::move(e));
  }

  DatasetManifest m;
  m.gen = gen_config_from_kv(kv);
  m.psf = psf_config_from_kv(kv);
  m.n_images = static_cast<int>(kv.get_i64("n_images", static_cast<int64_t>(entries.size())));
  m.entries = std::move(entries);
  m.dir = fs::path(path).parent_path().string();
  if (m.dir.empty()) m.dir = ".";
  if (m.n_images != static_cast<int>(m.entries.size())) {
    fail("format_error", path + ": n_images=" + std::to_string(m.n_images) + " but " +
                             std::to_string(m.entries.size()) + " rows");
  }
  return m;
}

}  // namespace hyperleaf
