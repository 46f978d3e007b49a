#include "hyperleaf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "hyperleaf/config.hpp"

namespace hyperleaf {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_same_shape(const Tensor3& ref, const Tensor3& est) {
  if (!ref.same_shape(est)) {
    fail("dimension_error", "metric inputs differ in shape");
  }
}

}  // namespace

PeakMode parse_peak_mode(const std::string& s) {
  if (s == "fixed") return PeakMode::fixed;
  if (s == "per-band-max") return PeakMode::per_band_max;
  fail("config_error", "unknown peak mode '" + s + "' (want fixed|per-band-max)");
}

std::string to_string(PeakMode m) { return m == PeakMode::fixed ? "fixed" : "per-band-max"; }

double psnr_band(const double* ref, const double* est, size_t count, double peak) {
  if (!(peak > 0.0)) fail("metric_error", "psnr peak must be > 0");
  double sq = 0.0;
  for (size_t k = 0; k < count; ++k) {
    const double d = ref[k] - est[k];
    sq += d * d;
  }
  const double mse = sq / static_cast<double>(count);
  if (mse == 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(peak * peak / mse));
}

double mpsnr(const Tensor3& ref, const Tensor3& est, double peak) {
  check_same_shape(ref, est);
  double acc = 0.0;
  for (int c = 0; c < ref.channels; ++c) {
    acc += psnr_band(ref.band(c), est.band(c), ref.plane_size(), peak);
  }
  return acc / ref.channels;
}

double sam_mean(const Tensor3& ref, const Tensor3& est) {
  check_same_shape(ref, est);
  const size_t plane = ref.plane_size();
  double acc = 0.0;
  for (size_t p = 0; p < plane; ++p) {
    double dot = 0.0, nr = 0.0, ne = 0.0;
    for (int c = 0; c < ref.channels; ++c) {
      const double r = ref.band(c)[p];
      const double e = est.band(c)[p];
      dot += r * e;
      nr += r * r;
      ne += e * e;
    }
    if (nr == 0.0 || ne == 0.0) {
      fail("metric_error", "zero spectrum at pixel (" + std::to_string(p / ref.width) + "," +
                               std::to_string(p % ref.width) + ")");
    }
    const double arg = std::clamp(dot / (std::sqrt(nr) * std::sqrt(ne)), -1.0, 1.0);
    acc += std::acos(arg);
  }
  return (acc / static_cast<double>(plane)) * (180.0 / kPi);
}

double ergas(const Tensor3& ref, const Tensor3& est, double ratio) {
  check_same_shape(ref, est);
  if (!(ratio > 0.0)) fail("metric_error", "ergas ratio must be > 0");
  const size_t plane = ref.plane_size();
  double acc = 0.0;
  for (int c = 0; c < ref.channels; ++c) {
    const double* r = ref.band(c);
    const double* e = est.band(c);
    double mean = 0.0, sq = 0.0;
    for (size_t p = 0; p < plane; ++p) mean += r[p];
    mean /= static_cast<double>(plane);
    if (mean == 0.0) {
      fail("metric_error", "reference band " + std::to_string(c) + " has zero mean");
    }
    for (size_t p = 0; p < plane; ++p) {
      const double d = r[p] - e[p];
      sq += d * d;
    }
    const double rmse = std::sqrt(sq / static_cast<double>(plane));
    acc += (rmse / mean) * (rmse / mean);
  }
  return 100.0 * ratio * std::sqrt(acc / ref.channels);
}

MetricsReport evaluate(const Tensor3& ref, const Tensor3& est, const MetricsConfig& cfg) {
  check_same_shape(ref, est);
  MetricsReport rep;
  rep.ratio = cfg.ratio;
  rep.per_band_psnr.reserve(ref.channels);
  double acc = 0.0;
  for (int c = 0; c < ref.channels; ++c) {
    double peak = cfg.peak;
    if (cfg.peak_mode == PeakMode::per_band_max) {
      peak = 0.0;
      const double* r = ref.band(c);
      for (size_t p = 0; p < ref.plane_size(); ++p) peak = std::max(peak, std::fabs(r[p]));
      if (peak == 0.0) {
        fail("metric_error", "reference band " + std::to_string(c) + " is all zero");
      }
    }
    const double v = psnr_band(ref.band(c), est.band(c), ref.plane_size(), peak);
    rep.per_band_psnr.push_back(v);
    acc += v;
  }
  rep.mpsnr = acc / ref.channels;
  rep.msam = sam_mean(ref, est);
  rep.mergas = ergas(ref, est, cfg.ratio);
  return rep;
}

void write_report_csv(const MetricsReport& rep, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail("io_error", "cannot open " + path + " for writing");
  out << "metric,value\n";
  out << "mpsnr," << format_double(rep.mpsnr) << "\n";
  out << "msam," << format_double(rep.msam) << "\n";
  out << "mergas," << format_double(rep.mergas) << "\n";
  out << "ratio," << format_double(rep.ratio) << "\n";
  for (size_t l = 0; l < rep.per_band_psnr.size(); ++l) {
    out << "psnr_band_" << l << "," << format_double(rep.per_band_psnr[l]) << "\n";
  }
  if (!out) fail("io_error", "write failed for " + path);
}

MetricsReport read_report_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("io_error", "cannot open " + path);
  MetricsReport rep;
  std::string line;
  if (!std::getline(in, line) || trim(line) != "metric,value") {
    fail("format_error", path + ": missing 'metric,value' header");
  }
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    const auto parts = split(line, ',');
    if (parts.size() != 2) fail("format_error", path + ": bad row '" + line + "'");
    const std::string& key = parts[0];
    const double v = parse_double(parts[1]);
    if (key == "mpsnr") {
      rep.mpsnr = v;
    } else if (key == "msam") {
      rep.msam = v;
    } else if (key == "mergas") {
      rep.mergas = v;
    } else if (key == "ratio") {
      rep.ratio = v;
    } else if (key.rfind("psnr_band_", 0) == 0) {
      const size_t l = static_cast<size_t>(parse_i64(key.substr(10)));
      if (rep.per_band_psnr.size() <= l) rep.per_band_psnr.resize(l + 1, 0.0);
      rep.per_band_psnr[l] = v;
    } else {
      fail("format_error", path + ": unknown metric '" + key + "'");
    }
  }
  return rep;
}

}  // namespace hyperleaf
