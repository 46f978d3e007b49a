#pragma once

#include <string>
#include <vector>

#include "hyperleaf/tensor.hpp"

namespace hyperleaf {

// PSNR of identical bands is reported as this sentinel instead of +inf;
// values above it are capped to it.
constexpr double kPsnrCapDb = 300.0;

enum class PeakMode { fixed, per_band_max };

PeakMode parse_peak_mode(const std::string& s);  // "fixed" | "per-band-max"
std::string to_string(PeakMode m);

struct MetricsConfig {
  PeakMode peak_mode = PeakMode::fixed;
  double peak = 1.0;    // used in fixed mode; data is assumed [0,1]-scaled
  double ratio = 0.25;  // resolution ratio = 1/factor
};

struct MetricsReport {
  double mpsnr = 0.0;       // dB, mean of per_band_psnr
  double msam = 0.0;        // degrees
  double mergas = 0.0;      // dimensionless
  std::vector<double> per_band_psnr;
  double ratio = 0.25;
};

// 10*log10(peak^2 / MSE) over one 2-D band (pointer + count), capped at 300 dB.
double psnr_band(const double* ref, const double* est, size_t count, double peak);

// Arithmetic mean of psnr_band over channels.
double mpsnr(const Tensor3& ref, const Tensor3& est, double peak);

// Mean over pixels of the spectral angle between ref and est spectra,
// in degrees. Errors on an all-zero spectrum.
double sam_mean(const Tensor3& ref, const Tensor3& est);

// 100 * ratio * sqrt((1/L) * sum_l (RMSE_l / mean_l)^2). Errors on a ref
// band with zero mean.
double ergas(const Tensor3& ref, const Tensor3& est, double ratio);

MetricsReport evaluate(const Tensor3& ref, const Tensor3& est, const MetricsConfig& cfg);

// CSV layout: header "metric,value", rows mpsnr/msam/mergas/ratio, then
// one psnr_band_<l> row per channel.
void write_report_csv(const MetricsReport& rep, const std::string& path);
MetricsReport read_report_csv(const std::string& path);

}  // namespace hyperleaf
