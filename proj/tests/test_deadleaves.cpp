#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "hyperleaf/deadleaves.hpp"
#include "test_util.hpp"

using namespace hyperleaf;

namespace {

GenConfig small_config() {
  GenConfig cfg;
  cfg.n_materials = 4;
  cfg.height = 32;
  cfg.width = 32;
  cfg.side_min = 2;
  cfg.side_max = 10;
  cfg.variation_count = 20;
  cfg.variation_value_max = 0.15;
  cfg.leakage_eps = 0.05;
  cfg.seed = 99;
  return cfg;
}

}  // namespace

TEST_CASE("defaults scale with image size") {
  const GenConfig ref = GenConfig::defaults_for(6, 500, 500);
  CHECK(ref.side_min == 4);
  CHECK(ref.side_max == 40);
  const GenConfig small = GenConfig::defaults_for(6, 128, 128);
  CHECK(small.side_min == 1);
  CHECK(small.side_max == 10);
  small.validate();
}

TEST_CASE("sample_leaf laws") {
  GenConfig cfg = small_config();

  SUBCASE("degenerate side law") {
    cfg.side_min = cfg.side_max = 5;
    Rng rng(1);
    for (int k = 0; k < 50; ++k) {
      const Leaf leaf = sample_leaf(rng, cfg);
      CHECK(leaf.a == 5.0);
      CHECK(leaf.b == 5.0);
    }
  }

  SUBCASE("fixed seed reproduces the leaf sequence") {
    Rng r1(42), r2(42);
    for (int k = 0; k < 100; ++k) {
      const Leaf a = sample_leaf(r1, cfg);
      const Leaf b = sample_leaf(r2, cfg);
      REQUIRE(a.a == b.a);
      REQUIRE(a.b == b.b);
      REQUIRE(a.theta == b.theta);
      REQUIRE(a.value == b.value);
      REQUIRE(a.cx == b.cx);
      REQUIRE(a.cy == b.cy);
      REQUIRE(a.material == b.material);
    }
  }

  SUBCASE("uniform side law Monte Carlo") {
    cfg.side_min = 4;
    cfg.side_max = 40;
    cfg.height = cfg.width = 64;
    Rng rng(7);
    double mean_a = 0.0;
    const int n = 10000;
    for (int k = 0; k < n; ++k) mean_a += sample_leaf(rng, cfg).a;
    mean_a /= n;
    // Uniform{4..40}: mean 22, sd sqrt((37^2-1)/12); 3 standard errors.
    const double se = std::sqrt((37.0 * 37.0 - 1.0) / 12.0) / std::sqrt(n);
    CHECK(std::fabs(mean_a - 22.0) <= 3.0 * se);
  }

  SUBCASE("ranges") {
    Rng rng(3);
    for (int k = 0; k < 200; ++k) {
      const Leaf leaf = sample_leaf(rng, cfg);
      CHECK(leaf.theta >= 0.0);
      CHECK(leaf.theta < 3.14159265358979323846);
      CHECK(leaf.value >= 0.0);
      CHECK(leaf.value < 1.0);
      CHECK(leaf.cx >= 0.0);
      CHECK(leaf.cx < cfg.width);
      CHECK(leaf.cy >= 0.0);
      CHECK(leaf.cy < cfg.height);
      CHECK(leaf.material >= 0);
      CHECK(leaf.material < cfg.n_materials);
    }
  }
}

TEST_CASE("rasterize axis-aligned 4x2 leaf at a grid point") {
  Leaf leaf;
  leaf.a = 4.0;
  leaf.b = 2.0;
  leaf.theta = 0.0;
  leaf.cx = 8.0;
  leaf.cy = 6.0;
  const auto pixels = rasterize_leaf(leaf, 16, 16);
  REQUIRE(pixels.size() == 8);
  std::set<std::pair<int, int>> got(pixels.begin(), pixels.end());
  for (int i : {5, 6}) {
    for (int j : {6, 7, 8, 9}) {
      CHECK(got.count({i, j}) == 1);
    }
  }
}

TEST_CASE("rasterize: quarter turn swaps the sides") {
  Leaf ab;
  ab.a = 5.0;
  ab.b = 3.0;
  ab.theta = 3.14159265358979323846 / 2.0;
  ab.cx = 7.3;
  ab.cy = 6.2;
  Leaf ba = ab;
  ba.a = 3.0;
  ba.b = 5.0;
  ba.theta = 0.0;
  CHECK(rasterize_leaf(ab, 16, 16) == rasterize_leaf(ba, 16, 16));
}

TEST_CASE("rasterize: unit leaf at a pixel center covers exactly that pixel") {
  for (double theta : {0.0, 0.3, 1.1, 2.7}) {
    Leaf leaf;
    leaf.a = leaf.b = 1.0;
    leaf.theta = theta;
    leaf.cx = 4.5;
    leaf.cy = 7.5;
    const auto pixels = rasterize_leaf(leaf, 16, 16);
    REQUIRE(pixels.size() == 1);
    CHECK(pixels[0] == std::pair<int, int>{7, 4});
  }
}

TEST_CASE("rasterize clips to the image") {
  Leaf leaf;
  leaf.a = 10.0;
  leaf.b = 10.0;
  leaf.theta = 0.0;
  leaf.cx = 0.0;
  leaf.cy = 0.0;
  const auto pixels = rasterize_leaf(leaf, 8, 8);
  CHECK(!pixels.empty());
  for (const auto& [i, j] : pixels) {
    CHECK(i >= 0);
    CHECK(j >= 0);
    CHECK(i <= 5);
    CHECK(j <= 5);
  }
}

TEST_CASE("base field covers every pixel exactly once") {
  const GenConfig cfg = small_config();
  Rng rng(cfg.seed);
  std::vector<long> ownership;
  const BaseField base = generate_base_field(rng, cfg, &ownership);

  REQUIRE(ownership.size() == 32 * 32);
  for (long owner : ownership) {
    REQUIRE(owner >= 0);
    REQUIRE(owner < base.leaf_count);
  }

  // Raw value ranges: dominant channel in [0,1], others in [0, eps].
  const Tensor3& t = base.map.inner;
  for (size_t p = 0; p < t.plane_size(); ++p) {
    int above_eps = 0;
    for (int c = 0; c < cfg.n_materials; ++c) {
      const double v = t.band(c)[p];
      REQUIRE(v >= 0.0);
      REQUIRE(v <= 1.0);
      if (v > cfg.leakage_eps) ++above_eps;
    }
    CHECK(above_eps <= 1);
  }
}

TEST_CASE("base field value ranges hold over 10 maps") {
  GenConfig cfg = small_config();
  for (int img = 0; img < 10; ++img) {
    cfg.seed = 1000 + img;
    Rng rng(cfg.seed);
    const BaseField base = generate_base_field(rng, cfg);
    const Tensor3& t = base.map.inner;
    for (size_t p = 0; p < t.plane_size(); ++p) {
      int dominant = 0;
      for (int c = 0; c < cfg.n_materials; ++c) {
        const double v = t.band(c)[p];
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
        if (v > cfg.leakage_eps) ++dominant;
      }
      REQUIRE(dominant <= 1);
    }
  }
}

TEST_CASE("coverage terminates over random configs") {
  Rng meta(2024);
  for (int trial = 0; trial < 50; ++trial) {
    GenConfig cfg;
    cfg.n_materials = 2 + static_cast<int>(meta.uniform_below(5));
    cfg.height = 8 + static_cast<int>(meta.uniform_below(40));
    cfg.width = 8 + static_cast<int>(meta.uniform_below(40));
    const int side_cap = std::min(cfg.height, cfg.width);
    cfg.side_min = 1 + static_cast<int>(meta.uniform_below(std::min(6, side_cap)));
    cfg.side_max =
        cfg.side_min + static_cast<int>(meta.uniform_below(side_cap - cfg.side_min + 1));
    cfg.leakage_eps = meta.uniform(0.0, 0.2);
    cfg.seed = meta.next_u64();

    Rng rng(cfg.seed);
    std::vector<long> ownership;
    const BaseField base = generate_base_field(rng, cfg, &ownership);
    CHECK(base.leaf_count > 0);
    for (long owner : ownership) REQUIRE(owner >= 0);
  }
}

TEST_CASE("large-leaf degenerate case covers fast") {
  GenConfig cfg = small_config();
  cfg.side_min = cfg.side_max = 32;  // leaf as large as the image
  cfg.seed = 5;
  Rng rng(cfg.seed);
  std::vector<long> ownership;
  const BaseField base = generate_base_field(rng, cfg, &ownership);
  CHECK(base.leaf_count < 100);

  // The first leaf owns exactly its rasterized pixel set.
  Rng replay(cfg.seed);
  const Leaf first = sample_leaf(replay, cfg);
  const auto raster = rasterize_leaf(first, cfg.height, cfg.width);
  std::set<size_t> expected;
  for (const auto& [i, j] : raster) expected.insert(static_cast<size_t>(i) * cfg.width + j);
  for (size_t p = 0; p < ownership.size(); ++p) {
    CHECK((ownership[p] == 0) == (expected.count(p) == 1));
  }
}

TEST_CASE("local variation: identity at count zero, locality at count one") {
  GenConfig cfg = small_config();
  Rng rng(11);
  const BaseField base = generate_base_field(rng, cfg);

  GenConfig none = cfg;
  none.variation_count = 0;
  Rng r2(123);
  const AbundanceMap same = apply_local_variation(r2, none, base.map);
  CHECK(testutil::max_abs_diff(same.inner, base.map.inner) == 0.0);

  GenConfig one = cfg;
  one.variation_count = 1;
  Rng r3(321);
  Rng r3_replay(321);
  const AbundanceMap varied = apply_local_variation(r3, one, base.map);
  const Leaf leaf = sample_leaf(r3_replay, one);
  std::set<size_t> inside;
  for (const auto& [i, j] : rasterize_leaf(leaf, cfg.height, cfg.width)) {
    inside.insert(static_cast<size_t>(i) * cfg.width + j);
  }
  for (int c = 0; c < cfg.n_materials; ++c) {
    for (size_t p = 0; p < base.map.inner.plane_size(); ++p) {
      const double before = base.map.inner.band(c)[p];
      const double after = varied.inner.band(c)[p];
      if (c == leaf.material && inside.count(p)) {
        const double delta = leaf.value * one.variation_value_max;
        REQUIRE(after == std::max(0.0, before + delta));
      } else {
        REQUIRE(after == before);
      }
    }
  }
}

TEST_CASE("local variation: mean delta bounded over 100 maps") {
  GenConfig cfg = small_config();
  double worst_mean = 0.0;
  for (int img = 0; img < 100; ++img) {
    cfg.seed = 7000 + img;
    Rng rng(cfg.seed);
    const BaseField base = generate_base_field(rng, cfg);
    const AbundanceMap varied = apply_local_variation(rng, cfg, base.map);
    double acc = 0.0;
    for (size_t p = 0; p < base.map.inner.data.size(); ++p) {
      acc += std::fabs(varied.inner.data[p] - base.map.inner.data[p]);
    }
    worst_mean = std::max(worst_mean, acc / base.map.inner.data.size());
  }
  CHECK(worst_mean <= cfg.variation_value_max);
}

TEST_CASE("asc_normalize examples") {
  Tensor3 two(2, 1, 1);
  two.at(0, 0, 0) = 0.2;
  two.at(1, 0, 0) = 0.2;
  const AbundanceMap n1 = asc_normalize(AbundanceMap(two, false));
  CHECK(n1.inner.at(0, 0, 0) == 0.5);
  CHECK(n1.inner.at(1, 0, 0) == 0.5);
  CHECK(n1.normalized);

  Tensor3 pair(2, 1, 1);
  pair.at(0, 0, 0) = 1.0;
  pair.at(1, 0, 0) = 3.0;
  const AbundanceMap n2 = asc_normalize(AbundanceMap(pair, false));
  CHECK(n2.inner.at(0, 0, 0) == 0.25);
  CHECK(n2.inner.at(1, 0, 0) == 0.75);

  // Idempotence.
  Rng rng(13);
  const AbundanceMap a = testutil::random_abundance(3, 6, 6, rng);
  const AbundanceMap again = asc_normalize(a);
  CHECK(testutil::max_abs_diff(again.inner, a.inner) <= 1e-12);

  // Scaling invariance; powers of two are exact.
  Tensor3 scaled4 = a.inner;
  for (double& v : scaled4.data) v *= 4.0;
  CHECK(testutil::max_abs_diff(asc_normalize(AbundanceMap(scaled4, false)).inner, again.inner) ==
        0.0);
  Tensor3 scaled17 = a.inner;
  for (double& v : scaled17.data) v *= 1.7;
  CHECK(testutil::max_abs_diff(asc_normalize(AbundanceMap(scaled17, false)).inner, again.inner) <=
        1e-12);

  // Zero-sum pixel names the pixel.
  Tensor3 withzero(2, 2, 2, 0.5);
  withzero.at(0, 1, 0) = 0.0;
  withzero.at(1, 1, 0) = 0.0;
  try {
    asc_normalize(AbundanceMap(withzero, false));
    FAIL("expected normalization_error");
  } catch (const Error& e) {
    CHECK(e.code() == "normalization_error");
    CHECK(std::string(e.what()).find("(1,0)") != std::string::npos);
  }
}

TEST_CASE("generate_abundance satisfies the constraints in both modes") {
  GenConfig cfg = small_config();
  for (VariationMode mode : {VariationMode::additive, VariationMode::occluding_top}) {
    cfg.variation_mode = mode;
    Rng rng(cfg.seed);
    const AbundanceMap a = generate_abundance(rng, cfg);
    const AbundanceReport rep = validate_abundance(a, 1e-6);
    CHECK(rep.anc_ok);
    CHECK(rep.asc_ok);

    Rng rng2(cfg.seed);
    const AbundanceMap b = generate_abundance(rng2, cfg);
    CHECK(a.inner.data == b.inner.data);  // same seed, same map
  }
}

TEST_CASE("generate_dataset writes pairs, manifest, and is reproducible") {
  testutil::TempDir dir("dl_dataset");
  GenConfig cfg = small_config();
  cfg.seed = 77;
  PsfConfig psf;
  psf.sigma = 2.0;

  const std::string out_a = dir.file("run_a");
  const DatasetManifest m = generate_dataset(cfg, 3, psf, out_a);
  REQUIRE(m.entries.size() == 3);

  // 3 pairs + manifest = 7 files.
  int files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(out_a)) ++files;
  CHECK(files == 7);

  for (size_t k = 0; k < 3; ++k) {
    CHECK(m.entries[k].seed == (cfg.seed ^ static_cast<uint64_t>(k)));
    const AbundanceMap hr(load_tensor(m.resolve_hr(k)), true);
    const AbundanceMap lr(load_tensor(m.resolve_lr(k)), true);
    CHECK(validate_abundance(hr, 1e-6).asc_ok);
    CHECK(validate_abundance(lr, 1e-6).asc_ok);
    CHECK(hr.inner.height == 32);
    CHECK(lr.inner.height == 8);
  }

  // Reruns are byte-identical.
  const std::string out_b = dir.file("run_b");
  generate_dataset(cfg, 3, psf, out_b);
  for (const char* name : {"img_00000_hr.htf", "img_00001_lr.htf", "manifest.txt"}) {
    const std::string fa = (std::filesystem::path(out_a) / name).string();
    const std::string fb = (std::filesystem::path(out_b) / name).string();
    REQUIRE(testutil::read_file_bytes(fa) == testutil::read_file_bytes(fb));
  }

  // Per-image isolation: a longer run reproduces the shorter run's images.
  const std::string out_c = dir.file("run_c");
  generate_dataset(cfg, 5, psf, out_c);
  for (const char* name : {"img_00000_hr.htf", "img_00002_lr.htf"}) {
    const std::string fa = (std::filesystem::path(out_a) / name).string();
    const std::string fc = (std::filesystem::path(out_c) / name).string();
    REQUIRE(testutil::read_file_bytes(fa) == testutil::read_file_bytes(fc));
  }

  // Worker pool output matches single-threaded output.
  const std::string out_d = dir.file("run_d");
  generate_dataset(cfg, 3, psf, out_d, 3);
  for (const char* name : {"img_00000_hr.htf", "img_00001_hr.htf", "img_00002_lr.htf",
                           "manifest.txt"}) {
    const std::string fa = (std::filesystem::path(out_a) / name).string();
    const std::string fd = (std::filesystem::path(out_d) / name).string();
    REQUIRE(testutil::read_file_bytes(fa) == testutil::read_file_bytes(fd));
  }

  // Manifest round-trip.
  const DatasetManifest loaded =
      load_manifest((std::filesystem::path(out_a) / "manifest.txt").string());
  CHECK(loaded.n_images == 3);
  CHECK(loaded.gen.seed == cfg.seed);
  CHECK(loaded.gen.side_max == cfg.side_max);
  CHECK(loaded.psf.sigma == psf.sigma);
  CHECK(loaded.entries[2].hr_path == "img_00002_hr.htf");
}

TEST_CASE("generator defaults") {
  const GenConfig cfg;
  CHECK(cfg.n_materials == 6);
  CHECK(cfg.variation_count == 50);
  CHECK(cfg.variation_value_max == 0.15);
  CHECK(cfg.leakage_eps == 0.05);
  CHECK(cfg.variation_mode == VariationMode::additive);
}
