#include "tcim/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace tcim {

std::vector<SeriesView> observation_views(
    const std::vector<StormRecord>& storms) {
  std::vector<SeriesView> views;
  views.reserve(storms.size());
  for (const auto& storm : storms) {
    if (!storm.has_derived()) {
      throw ValidationError("observation_views: storm " + storm.storm_id +
                            " lacks derived series");
    }
    views.push_back({&storm, std::span<const double>(storm.v), -1});
  }
  return views;
}

std::vector<SeriesView> ensemble_views(const EnsembleResult& ensemble,
                                       const StormRecord& storm) {
  std::vector<SeriesView> views;
  views.reserve(ensemble.realizations.size());
  for (std::size_t r = 0; r < ensemble.realizations.size(); ++r) {
    views.push_back({&storm,
                     std::span<const double>(ensemble.realizations[r].v),
                     static_cast<int>(r)});
  }
  return views;
}

Histogram histogram_zero_aligned(const std::vector<double>& values,
                                 double bin_width) {
  if (!(bin_width > 0.0)) {
    throw ValidationError("histogram: bin width must be positive");
  }
  Histogram hist;
  hist.bin_width = bin_width;
  hist.total = values.size();
  if (values.empty()) return hist;

  std::map<long long, std::size_t> counts;
  for (double v : values) {
    counts[static_cast<long long>(std::floor(v / bin_width))] += 1;
  }
  const double norm = 1.0 / (static_cast<double>(values.size()) * bin_width);
  for (const auto& [index, count] : counts) {
    HistogramBin bin;
    bin.lo = static_cast<double>(index) * bin_width;
    bin.hi = bin.lo + bin_width;
    bin.count = count;
    bin.density = static_cast<double>(count) * norm;
    hist.bins.push_back(bin);
  }
  return hist;
}

namespace {

bool window_all_ocean(const SeriesView& view, std::size_t t, std::size_t span) {
  for (std::size_t i = t; i <= t + span; ++i) {
    if (view.storm->track[i].over_land) return false;
  }
  return true;
}

}  // namespace

std::vector<double> dv_samples_6h(const std::vector<SeriesView>& views) {
  std::vector<double> out;
  for (const auto& view : views) {
    if (view.v.size() < 2) continue;
    for (std::size_t t = 0; t + 1 < view.v.size(); ++t) {
      if (!window_all_ocean(view, t, 1)) continue;
      out.push_back(view.v[t + 1] - view.v[t]);
    }
  }
  return out;
}

std::vector<double> dv_samples_24h(const std::vector<SeriesView>& views) {
  std::vector<double> out;
  for (const auto& view : views) {
    if (view.v.size() < 5) continue;
    for (std::size_t t = 0; t + 4 < view.v.size(); ++t) {
      if (!window_all_ocean(view, t, 4)) continue;
      out.push_back(view.v[t + 4] - view.v[t]);
    }
  }
  return out;
}

LmiStats lmi_stats(const std::vector<SeriesView>& views,
                   double ri_threshold_kt) {
  LmiStats stats;
  std::size_t n_ri = 0;
  for (const auto& view : views) {
    if (view.v.empty()) continue;
    LmiRecord rec;
    rec.storm_id = view.storm->storm_id;
    rec.realization = view.realization;
    rec.lmi = *std::max_element(view.v.begin(), view.v.end());
    rec.ri = false;
    for (std::size_t t = 0; t + 4 < view.v.size(); ++t) {
      if (!window_all_ocean(view, t, 4)) continue;
      if (view.v[t + 4] - view.v[t] >= ri_threshold_kt) {
        rec.ri = true;
        break;
      }
    }
    n_ri += rec.ri ? 1 : 0;
    stats.records.push_back(std::move(rec));
  }
  stats.ri_fraction = stats.records.empty()
                          ? 0.0
                          : static_cast<double>(n_ri) /
                                static_cast<double>(stats.records.size());
  return stats;
}

Kde gaussian_kde(const std::vector<double>& values, int grid_points) {
  if (values.empty()) throw ValidationError("kde: empty sample");
  Kde kde;
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var = values.size() > 1 ? var / (n - 1.0) : 0.0;
  const double sd = std::sqrt(var);

  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  const double iqr = percentile_linear_sorted(sorted, 75.0) -
                     percentile_linear_sorted(sorted, 25.0);
  double spread = sd;
  if (iqr > 0.0) spread = std::min(spread, iqr / 1.34);
  // Silverman's rule; floor keeps the degenerate all-equal sample usable.
  kde.bandwidth = std::max(0.9 * spread * std::pow(n, -0.2), 1e-8);

  const double lo = sorted.front() - 3.0 * kde.bandwidth;
  const double hi = sorted.back() + 3.0 * kde.bandwidth;
  const int m = std::max(grid_points, 2);
  kde.grid.resize(static_cast<std::size_t>(m));
  kde.density.resize(static_cast<std::size_t>(m));
  const double step = (hi - lo) / static_cast<double>(m - 1);
  const double inv_h = 1.0 / kde.bandwidth;
  const double norm = inv_h / (n * std::sqrt(2.0 * M_PI));
  for (int g = 0; g < m; ++g) {
    const double x = lo + step * g;
    double acc = 0.0;
    for (double v : values) {
      const double z = (x - v) * inv_h;
      acc += std::exp(-0.5 * z * z);
    }
    kde.grid[static_cast<std::size_t>(g)] = x;
    kde.density[static_cast<std::size_t>(g)] = acc * norm;
  }
  return kde;
}

std::vector<RegionSpec> regions_from_json(const nlohmann::json& j) {
  std::vector<RegionSpec> regions;
  for (const auto& r : j.at("regions")) {
    RegionSpec region;
    region.name = r.at("name").get<std::string>();
    for (const auto& vertex : r.at("polygon")) {
      region.polygon.push_back(
          {vertex.at(0).get<double>(), vertex.at(1).get<double>()});
    }
    if (region.polygon.size() < 3) {
      throw ValidationError("region '" + region.name +
                            "' needs at least 3 vertices");
    }
    regions.push_back(std::move(region));
  }
  return regions;
}

namespace {

bool on_segment(double ax, double ay, double bx, double by, double px,
                double py) {
  const double cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax);
  if (std::abs(cross) > 1e-12) return false;
  return px >= std::min(ax, bx) - 1e-12 && px <= std::max(ax, bx) + 1e-12 &&
         py >= std::min(ay, by) - 1e-12 && py <= std::max(ay, by) + 1e-12;
}

}  // namespace

bool point_in_region(const RegionSpec& region, double lat, double lon) {
  const auto& poly = region.polygon;
  const std::size_t n = poly.size();
  // x = lon, y = lat
  const double px = lon;
  const double py = lat;
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const double xi = poly[i][1], yi = poly[i][0];
    const double xj = poly[j][1], yj = poly[j][0];
    if (on_segment(xi, yi, xj, yj, px, py)) return true;  // closed boundary
    const bool crosses = (yi > py) != (yj > py);
    if (crosses) {
      const double x_at = (xj - xi) * (py - yi) / (yj - yi) + xi;
      if (px < x_at) inside = !inside;
    }
  }
  return inside;
}

std::vector<LandfallEvent> landfall_events(
    const std::vector<SeriesView>& views,
    const std::vector<RegionSpec>& regions, WarningLog* warnings) {
  std::vector<LandfallEvent> events;
  for (const auto& view : views) {
    for (std::size_t t = 0; t + 1 < view.v.size(); ++t) {
      const auto& track = view.storm->track;
      if (track[t].over_land || !track[t + 1].over_land) continue;
      LandfallEvent ev;
      ev.storm_id = view.storm->storm_id;
      ev.realization = view.realization;
      ev.step_index = static_cast<int>(t + 1);
      ev.v_kt = view.v[t];
      ev.lat = track[t + 1].lat;
      ev.lon = track[t + 1].lon;
      ev.region = "other";
      for (const auto& region : regions) {
        if (point_in_region(region, ev.lat, ev.lon)) {
          ev.region = region.name;
          break;
        }
      }
      if (ev.region == "other") {
        warn(warnings, "landfall point (" + format_double(ev.lat) + ", " +
                           format_double(ev.lon) + ") outside all regions");
      }
      events.push_back(std::move(ev));
    }
  }
  return events;
}

std::vector<LandfallBand> landfall_bands(
    const std::vector<LandfallEvent>& events,
    const std::vector<RegionSpec>& regions, int n_realizations,
    double bin_width) {
  std::vector<std::string> names;
  names.reserve(regions.size() + 1);
  for (const auto& region : regions) names.push_back(region.name);
  names.emplace_back("other");

  std::vector<LandfallBand> bands;
  for (const auto& name : names) {
    std::vector<double> pooled;
    for (const auto& ev : events) {
      if (ev.region == name) pooled.push_back(ev.v_kt);
    }
    if (pooled.empty()) continue;
    LandfallBand band;
    band.region = name;
    band.pooled = histogram_zero_aligned(pooled, bin_width);

    const std::size_t n_bins = band.pooled.bins.size();
    band.density_p15.assign(n_bins, 0.0);
    band.density_p85.assign(n_bins, 0.0);
    if (n_realizations > 1) {
      // Per-realization densities on the pooled bin layout; realizations
      // without events contribute zero densities.
      std::map<long long, std::size_t> bin_pos;
      for (std::size_t b = 0; b < n_bins; ++b) {
        bin_pos[std::llround(band.pooled.bins[b].lo / bin_width)] = b;
      }
      std::vector<std::vector<double>> per_bin(
          n_bins, std::vector<double>(static_cast<std::size_t>(n_realizations),
                                      0.0));
      std::vector<std::size_t> counts(
          static_cast<std::size_t>(n_realizations), 0);
      for (const auto& ev : events) {
        if (ev.region == name && ev.realization >= 0) {
          counts[static_cast<std::size_t>(ev.realization)] += 1;
        }
      }
      for (const auto& ev : events) {
        if (ev.region != name || ev.realization < 0) continue;
        const auto it = bin_pos.find(
            static_cast<long long>(std::floor(ev.v_kt / bin_width)));
        if (it == bin_pos.end()) continue;
        const auto r = static_cast<std::size_t>(ev.realization);
        per_bin[it->second][r] +=
            1.0 / (static_cast<double>(counts[r]) * bin_width);
      }
      for (std::size_t b = 0; b < n_bins; ++b) {
        std::sort(per_bin[b].begin(), per_bin[b].end());
        band.density_p15[b] = percentile_linear_sorted(per_bin[b], 15.0);
        band.density_p85[b] = percentile_linear_sorted(per_bin[b], 85.0);
      }
    } else {
      for (std::size_t b = 0; b < n_bins; ++b) {
        band.density_p15[b] = band.pooled.bins[b].density;
        band.density_p85[b] = band.pooled.bins[b].density;
      }
    }
    bands.push_back(std::move(band));
  }
  return bands;
}

std::vector<GridCell> spatial_percentiles(const std::vector<SeriesView>& views,
                                          double grid_deg, double percentile) {
  if (!(grid_deg > 0.0)) {
    throw ValidationError("spatial_percentiles: grid size must be positive");
  }
  if (!(percentile > 0.0 && percentile < 100.0)) {
    throw ValidationError("spatial_percentiles: percentile must be in (0,100)");
  }
  const bool ensemble_mode =
      std::any_of(views.begin(), views.end(),
                  [](const SeriesView& v) { return v.realization >= 0; });

  using CellKey = std::pair<long long, long long>;
  // cell -> realization -> values ("realization" 0 for observations)
  std::map<CellKey, std::map<int, std::vector<double>>> cells;
  for (const auto& view : views) {
    for (std::size_t t = 0; t < view.v.size(); ++t) {
      const auto& pt = view.storm->track[t];
      const CellKey key = {
          static_cast<long long>(std::floor(pt.lat / grid_deg)),
          static_cast<long long>(std::floor(pt.lon / grid_deg))};
      cells[key][std::max(view.realization, 0)].push_back(view.v[t]);
    }
  }

  std::vector<GridCell> out;
  out.reserve(cells.size());
  for (auto& [key, by_realization] : cells) {
    GridCell cell;
    cell.lat_lo = static_cast<double>(key.first) * grid_deg;
    cell.lon_lo = static_cast<double>(key.second) * grid_deg;
    if (!ensemble_mode) {
      auto& values = by_realization.begin()->second;
      cell.count = values.size();
      cell.value = percentile_linear(std::move(values), percentile);
    } else {
      std::vector<double> per_realization;
      per_realization.reserve(by_realization.size());
      for (auto& [r, values] : by_realization) {
        per_realization.push_back(
            percentile_linear(std::move(values), percentile));
      }
      cell.count = per_realization.size();
      cell.value = percentile_linear(std::move(per_realization), 50.0);
    }
    out.push_back(cell);
  }
  return out;
}

std::vector<EnvelopeRow> storm_envelope(const EnsembleResult& ensemble,
                                        const StormRecord& storm) {
  if (ensemble.realizations.size() < 10) {
    throw ValidationError("storm_envelope: need at least 10 realizations");
  }
  std::size_t max_len = 0;
  for (const auto& real : ensemble.realizations) {
    max_len = std::max(max_len, real.v.size());
  }
  std::vector<EnvelopeRow> rows;
  rows.reserve(max_len);
  for (std::size_t t = 0; t < max_len; ++t) {
    std::vector<double> values;
    for (const auto& real : ensemble.realizations) {
      if (t < real.v.size()) values.push_back(real.v[t]);
    }
    EnvelopeRow row;
    row.step = static_cast<int>(t);
    row.time = storm.track[t].time;
    row.n_active = static_cast<int>(values.size());
    row.mean = 0.0;
    for (double v : values) row.mean += v;
    row.mean /= static_cast<double>(values.size());
    std::sort(values.begin(), values.end());
    for (int d = 1; d <= 9; ++d) {
      row.deciles[static_cast<std::size_t>(d - 1)] =
          percentile_linear_sorted(values, 10.0 * d);
    }
    rows.push_back(row);
  }
  return rows;
}

std::string histogram_csv(const Histogram& hist) {
  std::ostringstream out;
  out << "bin_lo,bin_hi,count,density\n";
  for (const auto& bin : hist.bins) {
    out << format_double(bin.lo) << ',' << format_double(bin.hi) << ','
        << bin.count << ',' << format_double(bin.density) << '\n';
  }
  return out.str();
}

std::string lmi_values_csv(const LmiStats& stats) {
  std::ostringstream out;
  out << "storm_id,realization,lmi_kt,ri\n";
  for (const auto& rec : stats.records) {
    out << rec.storm_id << ',' << rec.realization << ','
        << format_double(rec.lmi) << ',' << (rec.ri ? 1 : 0) << '\n';
  }
  return out.str();
}

std::string lmi_summary_csv(const LmiStats& stats) {
  std::ostringstream out;
  out << "n,ri_count,ri_fraction\n";
  std::size_t n_ri = 0;
  for (const auto& rec : stats.records) n_ri += rec.ri ? 1 : 0;
  out << stats.records.size() << ',' << n_ri << ','
      << format_double(stats.ri_fraction) << '\n';
  return out.str();
}

std::string kde_csv(const Kde& kde) {
  std::ostringstream out;
  out << "value,density\n";
  for (std::size_t i = 0; i < kde.grid.size(); ++i) {
    out << format_double(kde.grid[i]) << ',' << format_double(kde.density[i])
        << '\n';
  }
  return out.str();
}

std::string landfall_events_csv(const std::vector<LandfallEvent>& events) {
  std::ostringstream out;
  out << "storm_id,realization,step_index,v_kt,lat,lon,region\n";
  for (const auto& ev : events) {
    out << ev.storm_id << ',' << ev.realization << ',' << ev.step_index << ','
        << format_double(ev.v_kt) << ',' << format_double(ev.lat) << ','
        << format_double(ev.lon) << ',' << ev.region << '\n';
  }
  return out.str();
}

std::string landfall_bands_csv(const std::vector<LandfallBand>& bands) {
  std::ostringstream out;
  out << "region,bin_lo,bin_hi,count,density,density_p15,density_p85\n";
  for (const auto& band : bands) {
    for (std::size_t b = 0; b < band.pooled.bins.size(); ++b) {
      const auto& bin = band.pooled.bins[b];
      out << band.region << ',' << format_double(bin.lo) << ','
          << format_double(bin.hi) << ',' << bin.count << ','
          << format_double(bin.density) << ','
          << format_double(band.density_p15[b]) << ','
          << format_double(band.density_p85[b]) << '\n';
    }
  }
  return out.str();
}

std::string spatial_csv(const std::vector<GridCell>& cells) {
  std::ostringstream out;
  out << "lat_lo,lon_lo,count,value\n";
  for (const auto& cell : cells) {
    out << format_double(cell.lat_lo) << ',' << format_double(cell.lon_lo)
        << ',' << cell.count << ',' << format_double(cell.value) << '\n';
  }
  return out.str();
}

std::string envelope_csv(const std::vector<EnvelopeRow>& rows) {
  std::ostringstream out;
  out << "step,time,n_active,mean";
  for (int d = 1; d <= 9; ++d) out << ",p" << 10 * d;
  out << '\n';
  for (const auto& row : rows) {
    out << row.step << ',' << format_iso8601(row.time) << ',' << row.n_active
        << ',' << format_double(row.mean);
    for (double v : row.deciles) out << ',' << format_double(v);
    out << '\n';
  }
  return out.str();
}

}  // namespace tcim
