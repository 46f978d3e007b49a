#include "hyperleaf/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>

namespace hyperleaf {

namespace {

constexpr char kMagic[4] = {'H', 'T', 'F', '1'};
constexpr uint32_t kDtypeF32 = 1;
constexpr uint32_t kDtypeF64 = 2;
constexpr uint64_t kMaxElements = 1ULL << 31;  // 2Gi elements, dims beyond this are rejected

std::string dims_str(int c, int h, int w) {
  return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
}

void put_u32(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

void put_u64(std::string& out, uint64_t v) {
  put_u32(out, static_cast<uint32_t>(v & 0xFFFFFFFFULL));
  put_u32(out, static_cast<uint32_t>(v >> 32));
}

class Reader {
 public:
  Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) fail("io_error", "cannot open " + path);
  }

  uint32_t u32() {
    unsigned char b[4];
    read(b, 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
  }

  uint64_t u64() {
    const uint64_t lo = u32();
    return lo | (static_cast<uint64_t>(u32()) << 32);
  }

  void read(unsigned char* dst, size_t n) {
    in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in_.gcount()) != n) {
      fail("format_error", path_ + ": truncated at byte offset " + std::to_string(offset_));
    }
    offset_ += n;
  }

  size_t offset() const { return offset_; }

 private:
  std::string path_;
  std::ifstream in_;
  size_t offset_ = 0;
};

void check_finite_for_write(const Tensor3& t, const std::string& path) {
  for (size_t k = 0; k < t.data.size(); ++k) {
    if (!std::isfinite(t.data[k])) {
      fail("format_error",
           path + ": refusing to write non-finite value at element " + std::to_string(k));
    }
  }
}

void write_header(std::string& buf, const Tensor3& t, uint32_t dtype) {
  buf.append(kMagic, 4);
  put_u32(buf, 3);
  put_u32(buf, static_cast<uint32_t>(t.channels));
  put_u32(buf, static_cast<uint32_t>(t.height));
  put_u32(buf, static_cast<uint32_t>(t.width));
  put_u32(buf, dtype);
}

void write_file(const std::string& path, const std::string& buf) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("io_error", "cannot open " + path + " for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) fail("io_error", "write failed for " + path);
}

}  // namespace

Tensor3::Tensor3(int c, int h, int w, double fill) : channels(c), height(h), width(w) {
  if (c < 1 || h < 1 || w < 1) {
    fail("dimension_error", "tensor dims must be >= 1, got " + dims_str(c, h, w));
  }
  data.assign(static_cast<size_t>(c) * h * w, fill);
}

bool Tensor3::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor3 tensor_new(int channels, int height, int width, double fill) {
  return Tensor3(channels, height, width, fill);
}

AbundanceReport validate_abundance(const AbundanceMap& a, double tol) {
  const Tensor3& t = a.inner;
  AbundanceReport rep;
  rep.min_value = std::numeric_limits<double>::infinity();
  for (double v : t.data) rep.min_value = std::min(rep.min_value, v);
  rep.anc_ok = rep.min_value >= 0.0;

  double worst = 0.0;
  for (int i = 0; i < t.height; ++i) {
    for (int j = 0; j < t.width; ++j) {
      double sum = 0.0;
      for (int c = 0; c < t.channels; ++c) sum += t.at(c, i, j);
      worst = std::max(worst, std::fabs(sum - 1.0));
    }
  }
  rep.worst_pixel_sum_error = worst;
  rep.asc_ok = worst <= tol;
  return rep;
}

EndmemberMatrix::EndmemberMatrix(int l, int n) : bands(l), materials(n) {
  if (l < 1 || n < 1) {
    fail("dimension_error", "endmember matrix dims must be >= 1, got " + std::to_string(l) + "x" +
                                std::to_string(n));
  }
  values.assign(static_cast<size_t>(l) * n, 0.0);
}

void EndmemberMatrix::validate() const {
  if (materials > bands) {
    fail("dimension_error", "endmember matrix needs N <= L, got L=" + std::to_string(bands) +
                                " N=" + std::to_string(materials));
  }
  for (double v : values) {
    if (!(std::isfinite(v) && v >= 0.0)) {
      fail("format_error", "endmember values must be finite and >= 0");
    }
  }
}

void save_tensor(const Tensor3& t, const std::string& path) {
  check_finite_for_write(t, path);
  std::string buf;
  buf.reserve(24 + 4 * t.data.size());
  write_header(buf, t, kDtypeF32);
  for (double v : t.data) {
    put_u32(buf, std::bit_cast<uint32_t>(static_cast<float>(v)));
  }
  write_file(path, buf);
}

void save_tensor_f64(const Tensor3& t, const std::string& path) {
  check_finite_for_write(t, path);
  std::string buf;
  buf.reserve(24 + 8 * t.data.size());
  write_header(buf, t, kDtypeF64);
  for (double v : t.data) {
    put_u64(buf, std::bit_cast<uint64_t>(v));
  }
  write_file(path, buf);
}

Tensor3 load_tensor(const std::string& path) {
  Reader r(path);

  unsigned char magic[4];
  r.read(magic, 4);
  for (int k = 0; k < 4; ++k) {
    if (magic[k] != static_cast<unsigned char>(kMagic[k])) {
      fail("format_error", path + ": bad magic at byte offset 0");
    }
  }
  const uint32_t ndims = r.u32();
  if (ndims != 3) {
    fail("format_error", path + ": expected ndims=3, got " + std::to_string(ndims) +
                             " at byte offset 4");
  }
  uint32_t dims[3];
  for (int k = 0; k < 3; ++k) {
    const size_t off = r.offset();
    dims[k] = r.u32();
    if (dims[k] == 0 || dims[k] > kMaxElements) {
      fail("format_error",
           path + ": dim " + std::to_string(dims[k]) + " out of range at byte offset " +
               std::to_string(off));
    }
  }
  const uint64_t count = static_cast<uint64_t>(dims[0]) * dims[1] * dims[2];
  if (count > kMaxElements) {
    fail("format_error", path + ": element count overflow (" + std::to_string(count) +
                             ") at byte offset 8");
  }
  const size_t dtype_off = r.offset();
  const uint32_t dtype = r.u32();
  if (dtype != kDtypeF32 && dtype != kDtypeF64) {
    fail("format_error", path + ": unknown dtype code " + std::to_string(dtype) +
                             " at byte offset " + std::to_string(dtype_off));
  }

  Tensor3 t(static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2]));
  for (size_t k = 0; k < count; ++k) {
    const size_t off = r.offset();
    double v;
    if (dtype == kDtypeF32) {
      v = static_cast<double>(std::bit_cast<float>(r.u32()));
    } else {
      v = std::bit_cast<double>(r.u64());
    }
    if (!std::isfinite(v)) {
      fail("format_error",
           path + ": non-finite value at byte offset " + std::to_string(off));
    }
    t.data[k] = v;
  }
  return t;
}

void save_endmembers(const EndmemberMatrix& s, const std::string& path) {
  s.validate();
  Tensor3 t(s.bands, s.materials, 1);
  t.data = s.values;
  save_tensor(t, path);
}

EndmemberMatrix load_endmembers(const std::string& path) {
  const Tensor3 t = load_tensor(path);
  if (t.width != 1) {
    fail("format_error", path + ": endmember file must have dims (L, N, 1), got " +
                             dims_str(t.channels, t.height, t.width));
  }
  EndmemberMatrix s(t.channels, t.height);
  s.values = t.data;
  s.validate();
  return s;
}

}  // namespace hyperleaf
