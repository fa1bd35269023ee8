#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tcim/common.hpp"

namespace tcim {

// Fixed covariate ordering shared by model files, fitting, and simulation.
enum CovariateIndex : int {
  kDvPrev = 0,  // previous 6-h intensity change, kt/6h
  kVCur = 1,    // current intensity, kt
  kMpi = 2,     // maximum potential intensity, kt
  kShr = 3,     // 850-200 hPa shear, m/s
  kRh = 4,      // 300-500 hPa relative humidity, %
  kOcn = 5,     // ocean feedback, dimensionless
};
inline constexpr int kNumCovariates = 6;
inline constexpr int kResponseSlot = 6;  // scaler slot for the response dv
inline constexpr std::array<const char*, kNumCovariates> kCovariateNames = {
    "dv_p", "v", "mpi", "shr", "rh", "ocn"};

// Which covariates a fitted model uses. NoOcn drops the ocean feedback slot
// (the ablation variant); everything else keeps the fixed ordering.
enum class CovariateSet { Full, NoOcn };

std::vector<int> active_covariates(CovariateSet set);
const char* covariate_set_name(CovariateSet set);
CovariateSet covariate_set_from_name(const std::string& name);

constexpr double kKtPerMs = 3600.0 / 1852.0;  // knots per m/s
constexpr double kMsPerKt = 1852.0 / 3600.0;

struct TrackPoint {
  std::int64_t time = 0;  // seconds since epoch; 6-h spacing expected
  double lat = 0.0;       // degrees, [-90, 90]
  double lon = 0.0;       // degrees
  double observed_wind = 0.0;  // kt, reported maximum sustained wind
  bool over_land = false;
};

struct EnvRecord {
  double mpi = 0.0;    // kt
  double shr = 0.0;    // m/s
  double rh = 0.0;     // percent
  double h_m = 0.0;    // m; NaN when the input lacks ocean columns
  double gamma = 0.0;  // K per 100 m; NaN when absent
};

// Raw or standardized 6-vector in the fixed ordering above.
struct CovariateVector {
  std::array<double, kNumCovariates> x{};
  bool standardized = false;

  double operator[](int i) const { return x[static_cast<std::size_t>(i)]; }
  double& operator[](int i) { return x[static_cast<std::size_t>(i)]; }
};

// One storm: 6-hourly track + environment, with derived series filled by the
// ingest module. dv[t] = v[t+1] - v[t] (forward difference; one entry fewer
// than the track).
struct StormRecord {
  std::string storm_id;
  std::string name;
  std::vector<TrackPoint> track;
  std::vector<EnvRecord> env;  // parallel to track

  std::vector<double> translation;  // m/s, per point
  std::vector<double> v;            // kt, background-removed intensity
  std::vector<double> dv;           // kt/6h, size() - 1 entries

  std::size_t size() const { return track.size(); }
  bool has_derived() const { return v.size() == track.size(); }
};

// A contiguous over-ocean run prepared for fitting: standardized responses
// and covariates. start_index points at the storm track index of the first
// response.
struct OceanSequence {
  std::string storm_id;
  int start_index = 0;
  std::vector<double> responses;            // standardized dv, length T
  std::vector<CovariateVector> covariates;  // standardized, length T
  std::size_t length() const { return responses.size(); }
};

// A contiguous over-land run. intensities[0] == v0, at the first over-land
// point.
struct LandSegment {
  std::string storm_id;
  double v0 = 0.0;                  // kt at land entry
  std::vector<double> intensities;  // kt, 6-h steps
};

// Standardization fitted on the training set: slots 0..5 are the covariates,
// slot 6 the response dv.
struct Scaler {
  std::array<double, kNumCovariates + 1> mean{};
  std::array<double, kNumCovariates + 1> sd{};

  Scaler() {
    mean.fill(0.0);
    sd.fill(1.0);
  }

  double standardize(int slot, double raw) const {
    return (raw - mean[static_cast<std::size_t>(slot)]) /
           sd[static_cast<std::size_t>(slot)];
  }
  double unstandardize(int slot, double std_value) const {
    return std_value * sd[static_cast<std::size_t>(slot)] +
           mean[static_cast<std::size_t>(slot)];
  }

  CovariateVector standardize(const CovariateVector& raw) const;
  CovariateVector unstandardize(const CovariateVector& std_vec) const;

  // Throws ValidationError on a nonpositive standard deviation.
  void validate() const;
};

}  // namespace tcim
