#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tcim/common.hpp"
#include "tcim/domain.hpp"

namespace tcim {

struct ParseOptions {
  // When false, the hm_m / gamma_k_per_100m columns may be absent (their
  // EnvRecord fields become NaN). Needed for the no-OCN covariate set.
  bool require_ocean_fields = true;
};

// Parses the track/environment CSV. Columns (header names):
//   storm_id, time, lat, lon, wind_kt, over_land,
//   mpi_kt, shr_ms, rh_pct, hm_m, gamma_k_per_100m  [, name]
// Points are grouped by storm_id and time-sorted. Unknown columns warn;
// malformed rows raise ParseError with their line number; duplicated
// timestamps raise ValidationError. Single-point storms are dropped with a
// warning.
std::vector<StormRecord> parse_tracks(const std::string& path,
                                      const ParseOptions& options = {},
                                      WarningLog* warnings = nullptr);

struct IngestConfig {
  double bg_fraction = 0.55;  // background-wind fraction of translation speed
  int min_ocean_len = 12;     // minimum responses per training sequence
  int min_land_len = 2;       // minimum points per land segment
  double min_land_v0 = 20.0;  // kt
  double gamma_floor = 0.01;  // K/100m, substituted when gamma <= 0
  double v_floor = 5.0;       // kt, substituted when v <= 0 inside OCN
  bool include_ocn = true;    // false builds the no-OCN covariate variant
};

// Per-point translation speed (m/s): centered great-circle difference at
// interior points, one-sided at the ends. Uses actual elapsed times.
std::vector<double> compute_translation(const StormRecord& storm);

// v = max(observed - fraction * translation_in_kt, 0).
double remove_background_wind(double observed_wind_kt, double translation_ms,
                              double fraction);

// Ocean feedback of Schade & Emanuel:
//   z = 0.01 gamma^-0.4 h_m u_t (pi / v),  ocn = 1 - 0.87 exp(-z).
// Evaluated as 0.13 + 0.87 (1 - exp(-z)) so ocn(0) == 0.13 exactly.
// Throws ValidationError for gamma <= 0 or v <= 0.
double compute_ocn(double gamma, double h_m, double u_t, double pi, double v);

// Same, substituting configured floors for nonpositive gamma / v (warns).
double compute_ocn_floored(double gamma, double h_m, double u_t, double pi,
                           double v, const IngestConfig& config,
                           WarningLog* warnings = nullptr);

// Fills storm.translation, storm.v, storm.dv.
void derive_intensity(StormRecord& storm, const IngestConfig& config);

// Raw-unit covariates at track index t. dv_p at the first point of a storm
// is 0 (no prior change); elsewhere it is v[t] - v[t-1]. With
// include_ocn == false the OCN slot is 0 and ignored downstream.
CovariateVector raw_covariates(const StormRecord& storm, std::size_t t,
                               const IngestConfig& config,
                               WarningLog* warnings = nullptr);

// Sequence prior to standardization.
struct RawSequence {
  std::string storm_id;
  int start_index = 0;
  std::vector<double> responses;
  std::vector<CovariateVector> covariates;
};

// Splits a derived storm into maximal over-ocean sequences and over-land
// segments. An ocean run keeps the response at its final point whenever the
// next track point exists (even over land); only end-of-record drops it.
// Sequences with fewer than min_ocean_len responses and land segments
// failing the length/v0 filters are discarded.
std::pair<std::vector<RawSequence>, std::vector<LandSegment>> segment_storm(
    const StormRecord& storm, const IngestConfig& config);

// Sample mean/sd (n-1 denominator) per covariate slot plus the response.
// Inactive slots (OCN when include_ocn is false) get mean 0 / sd 1.
// Throws FitError naming the variable on zero variance.
Scaler fit_scaler(const std::vector<RawSequence>& sequences, bool include_ocn);

struct Dataset {
  std::vector<StormRecord> storms;
  std::vector<OceanSequence> sequences;  // standardized
  std::vector<LandSegment> land_segments;
  Scaler scaler;

  std::size_t n_storms() const { return storms.size(); }
  std::size_t n_sequences() const { return sequences.size(); }
  std::size_t n_land_segments() const { return land_segments.size(); }
  std::size_t n_observations() const;
};

// Full ingest pipeline: derive series, segment, fit the scaler, standardize.
Dataset build_dataset(std::vector<StormRecord> storms,
                      const IngestConfig& config,
                      WarningLog* warnings = nullptr);

std::string dataset_summary_json(const Dataset& dataset);

}  // namespace tcim
