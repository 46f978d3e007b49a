#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>

#include "hyperleaf/tensor.hpp"
#include "test_util.hpp"

using namespace hyperleaf;
using testutil::TempDir;

TEST_CASE("tensor_new fills and checks dims") {
  const Tensor3 z = tensor_new(1, 2, 2, 0.0);
  REQUIRE(z.data.size() == 4);
  for (double v : z.data) CHECK(v == 0.0);

  const Tensor3 ones = tensor_new(3, 1, 1, 1.0);
  REQUIRE(ones.data.size() == 3);
  for (double v : ones.data) CHECK(v == 1.0);

  CHECK_THROWS_AS(tensor_new(0, 2, 2, 0.0), Error);
  CHECK_THROWS_AS(tensor_new(2, 0, 2, 0.0), Error);
  CHECK_THROWS_AS(tensor_new(2, 2, 0, 0.0), Error);
}

TEST_CASE("row-major channel-major indexing, exhaustive") {
  Tensor3 t = tensor_new(2, 3, 4, 0.5);
  REQUIRE(t.data.size() == 24);
  for (double v : t.data) CHECK(v == 0.5);
  CHECK(t.index(1, 2, 3) == 23);

  // Write by hand-computed linear index, read back with at().
  size_t linear = 0;
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 4; ++j) {
        t.data[static_cast<size_t>(c) * 12 + static_cast<size_t>(i) * 4 + j] =
            static_cast<double>(linear);
        ++linear;
      }
    }
  }
  linear = 0;
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 4; ++j) {
        CHECK(t.at(c, i, j) == static_cast<double>(linear));
        ++linear;
      }
    }
  }
}

TEST_CASE("HTF round-trip is bitwise identity") {
  TempDir dir("tensor_roundtrip");

  Tensor3 t(2, 2, 2);
  for (size_t k = 0; k < 8; ++k) t.data[k] = static_cast<double>(k) * 0.25 - 0.5;
  const std::string path = dir.file("t.htf");
  save_tensor(t, path);
  const Tensor3 u = load_tensor(path);
  REQUIRE(u.channels == 2);
  REQUIRE(u.height == 2);
  REQUIRE(u.width == 2);
  CHECK(u.data == t.data);

  // Property: random float32-valued tensors survive the trip bit-for-bit.
  Rng rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    const int c = 1 + static_cast<int>(rng.uniform_below(4));
    const int h = 1 + static_cast<int>(rng.uniform_below(6));
    const int w = 1 + static_cast<int>(rng.uniform_below(6));
    const Tensor3 a = testutil::random_tensor_f32(c, h, w, rng);
    save_tensor(a, path);
    const Tensor3 b = load_tensor(path);
    REQUIRE(b.same_shape(a));
    for (size_t k = 0; k < a.data.size(); ++k) REQUIRE(a.data[k] == b.data[k]);
  }

  // float64 variant is exact on arbitrary doubles.
  const Tensor3 d = testutil::random_tensor(3, 5, 4, rng, -1e6, 1e6);
  save_tensor_f64(d, path);
  const Tensor3 d2 = load_tensor(path);
  CHECK(d2.data == d.data);
}

TEST_CASE("HTF file layout is bit-exact") {
  TempDir dir("tensor_layout");
  Tensor3 t(1, 1, 1);
  t.data[0] = 3.25;
  const std::string path = dir.file("one.htf");
  save_tensor(t, path);

  const std::string bytes = testutil::read_file_bytes(path);
  // 4 magic + 4 ndims + 12 dims + 4 dtype = 24 header bytes, + 4 payload.
  REQUIRE(bytes.size() == 28);
  CHECK(bytes.substr(0, 4) == "HTF1");
  auto u32_at = [&](size_t off) {
    return static_cast<uint32_t>(static_cast<unsigned char>(bytes[off])) |
           (static_cast<uint32_t>(static_cast<unsigned char>(bytes[off + 1])) << 8) |
           (static_cast<uint32_t>(static_cast<unsigned char>(bytes[off + 2])) << 16) |
           (static_cast<uint32_t>(static_cast<unsigned char>(bytes[off + 3])) << 24);
  };
  CHECK(u32_at(4) == 3);    // ndims
  CHECK(u32_at(8) == 1);    // C
  CHECK(u32_at(12) == 1);   // H
  CHECK(u32_at(16) == 1);   // W
  CHECK(u32_at(20) == 1);   // dtype float32
  CHECK(u32_at(24) == 0x40500000u);  // 3.25f little-endian
}

TEST_CASE("HTF loader rejects corrupt files") {
  TempDir dir("tensor_corrupt");

  SUBCASE("bad magic") {
    const std::string path = dir.file("bad.htf");
    std::ofstream(path, std::ios::binary) << "XXXXrest-of-file-does-not-matter";
    CHECK_THROWS_WITH_AS(static_cast<void>(load_tensor(path)),
                         doctest::Contains("bad magic"), Error);
  }

  SUBCASE("truncated payload") {
    Tensor3 t(2, 3, 3, 1.5);
    const std::string path = dir.file("trunc.htf");
    save_tensor(t, path);
    std::string bytes = testutil::read_file_bytes(path);
    bytes.resize(bytes.size() - 5);
    std::ofstream(path, std::ios::binary | std::ios::trunc) << bytes;
    try {
      load_tensor(path);
      FAIL("expected format_error");
    } catch (const Error& e) {
      CHECK(e.code() == "format_error");
      CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
    }
  }

  SUBCASE("dim overflow") {
    std::string buf = "HTF1";
    auto put = [&](uint32_t v) {
      for (int k = 0; k < 4; ++k) buf.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
    };
    put(3);
    put(70000);
    put(70000);
    put(70000);
    put(1);
    const std::string path = dir.file("huge.htf");
    std::ofstream(path, std::ios::binary) << buf;
    try {
      load_tensor(path);
      FAIL("expected format_error");
    } catch (const Error& e) {
      CHECK(e.code() == "format_error");
    }
  }

  SUBCASE("unknown dtype") {
    Tensor3 t(1, 1, 1, 1.0);
    const std::string path = dir.file("dtype.htf");
    save_tensor(t, path);
    std::string bytes = testutil::read_file_bytes(path);
    bytes[20] = 7;
    std::ofstream(path, std::ios::binary | std::ios::trunc) << bytes;
    CHECK_THROWS_WITH_AS(static_cast<void>(load_tensor(path)),
                         doctest::Contains("dtype"), Error);
  }
}

TEST_CASE("validate_abundance reports ANC and ASC") {
  const int n = 4;
  Tensor3 uniform(n, 6, 5, 1.0 / n);
  const AbundanceReport ok = validate_abundance(AbundanceMap(uniform, true), 1e-6);
  CHECK(ok.anc_ok);
  CHECK(ok.asc_ok);
  CHECK(ok.worst_pixel_sum_error <= 1e-12);

  Tensor3 neg = uniform;
  neg.at(1, 2, 3) = -0.1;
  const AbundanceReport bad_anc = validate_abundance(AbundanceMap(neg, false), 1e-6);
  CHECK_FALSE(bad_anc.anc_ok);
  CHECK(bad_anc.min_value == -0.1);

  Tensor3 off = uniform;
  off.at(0, 1, 1) += 0.01;  // pixel sums to 1.01
  const AbundanceReport bad_asc = validate_abundance(AbundanceMap(off, true), 1e-6);
  CHECK(bad_asc.anc_ok);
  CHECK_FALSE(bad_asc.asc_ok);
  CHECK(bad_asc.worst_pixel_sum_error == doctest::Approx(0.01).epsilon(1e-9));
}

TEST_CASE("endmember file round-trip and validation") {
  TempDir dir("endmembers");
  EndmemberMatrix s(5, 3);
  Rng rng(3);
  for (double& v : s.values) v = static_cast<double>(static_cast<float>(rng.uniform01()));
  const std::string path = dir.file("s.htf");
  save_endmembers(s, path);
  const EndmemberMatrix u = load_endmembers(path);
  CHECK(u.bands == 5);
  CHECK(u.materials == 3);
  CHECK(u.values == s.values);

  EndmemberMatrix wide(2, 5);
  CHECK_THROWS_AS(wide.validate(), Error);  // N > L
}
