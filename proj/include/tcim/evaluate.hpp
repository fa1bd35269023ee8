#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tcim/domain.hpp"
#include "tcim/simulate.hpp"

namespace tcim {

// One intensity trajectory aligned to a track: an observation (realization
// == -1) or one ensemble member (possibly stopped early, so v may be shorter
// than the track).
struct SeriesView {
  const StormRecord* storm = nullptr;
  std::span<const double> v;
  int realization = -1;
};

std::vector<SeriesView> observation_views(
    const std::vector<StormRecord>& storms);
std::vector<SeriesView> ensemble_views(const EnsembleResult& ensemble,
                                       const StormRecord& storm);

// --- histograms ---------------------------------------------------------

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  double density = 0.0;  // count / (total * width)
};

struct Histogram {
  double bin_width = 0.0;
  std::size_t total = 0;
  std::vector<HistogramBin> bins;  // ascending, zero-aligned edges
};

Histogram histogram_zero_aligned(const std::vector<double>& values,
                                 double bin_width);

// 6-h intensity changes over ocean (both endpoints over ocean).
std::vector<double> dv_samples_6h(const std::vector<SeriesView>& views);
// 24-h changes v[t+4] - v[t]; windows containing any land point are dropped.
std::vector<double> dv_samples_24h(const std::vector<SeriesView>& views);

// --- lifetime maximum intensity -------------------------------------------

struct LmiRecord {
  std::string storm_id;
  int realization = -1;
  double lmi = 0.0;
  bool ri = false;  // any all-ocean 24-h rise >= 30 kt
};

struct LmiStats {
  std::vector<LmiRecord> records;
  double ri_fraction = 0.0;
};

LmiStats lmi_stats(const std::vector<SeriesView>& views,
                   double ri_threshold_kt = 30.0);

// Gaussian kernel density with Silverman's bandwidth; raw values are always
// reported alongside so consumers can re-estimate.
struct Kde {
  double bandwidth = 0.0;
  std::vector<double> grid;
  std::vector<double> density;
};

Kde gaussian_kde(const std::vector<double>& values, int grid_points = 256);

// --- landfall ---------------------------------------------------------------

struct RegionSpec {
  std::string name;
  std::vector<std::array<double, 2>> polygon;  // (lat, lon) vertices
};

std::vector<RegionSpec> regions_from_json(const nlohmann::json& j);

// Point-in-polygon with points on the boundary counted inside.
bool point_in_region(const RegionSpec& region, double lat, double lon);

struct LandfallEvent {
  std::string storm_id;
  int realization = -1;
  int step_index = 0;   // index of the first over-land point
  double v_kt = 0.0;    // intensity at the last ocean point
  double lat = 0.0;
  double lon = 0.0;
  std::string region;   // "other" when no polygon contains the point
};

std::vector<LandfallEvent> landfall_events(
    const std::vector<SeriesView>& views,
    const std::vector<RegionSpec>& regions, WarningLog* warnings = nullptr);

// Per-region pooled density plus a 15th-85th percentile band of the
// per-realization densities (ensembles only; for observations the band
// degenerates to the pooled density).
struct LandfallBand {
  std::string region;
  Histogram pooled;
  std::vector<double> density_p15;
  std::vector<double> density_p85;
};

std::vector<LandfallBand> landfall_bands(
    const std::vector<LandfallEvent>& events,
    const std::vector<RegionSpec>& regions, int n_realizations,
    double bin_width = 10.0);

// --- spatial percentiles ------------------------------------------------

struct GridCell {
  double lat_lo = 0.0;
  double lon_lo = 0.0;
  std::size_t count = 0;  // contributing samples (obs) or realizations (sim)
  double value = 0.0;
};

// Per-cell percentile of intensities. Observation views pool directly; for
// ensemble views the cell value is the median over realizations of the
// per-realization percentile.
std::vector<GridCell> spatial_percentiles(const std::vector<SeriesView>& views,
                                          double grid_deg, double percentile);

// --- per-storm envelopes --------------------------------------------------

struct EnvelopeRow {
  int step = 0;
  std::int64_t time = 0;
  int n_active = 0;  // realizations still running at this step
  double mean = 0.0;
  std::array<double, 9> deciles{};  // 10th..90th
};

std::vector<EnvelopeRow> storm_envelope(const EnsembleResult& ensemble,
                                        const StormRecord& storm);

// --- CSV rendering ------------------------------------------------------

std::string histogram_csv(const Histogram& hist);
std::string lmi_values_csv(const LmiStats& stats);
std::string lmi_summary_csv(const LmiStats& stats);
std::string kde_csv(const Kde& kde);
std::string landfall_events_csv(const std::vector<LandfallEvent>& events);
std::string landfall_bands_csv(const std::vector<LandfallBand>& bands);
std::string spatial_csv(const std::vector<GridCell>& cells);
std::string envelope_csv(const std::vector<EnvelopeRow>& rows);

}  // namespace tcim
