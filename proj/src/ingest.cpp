#include "tcim/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace tcim {

namespace {

double haversine_m(double lat1, double lon1, double lat2, double lon2) {
  constexpr double kEarthRadiusM = 6371000.0;
  constexpr double kDeg = M_PI / 180.0;
  const double phi1 = lat1 * kDeg;
  const double phi2 = lat2 * kDeg;
  const double dphi = (lat2 - lat1) * kDeg;
  const double dlambda = (lon2 - lon1) * kDeg;
  const double a = std::sin(dphi / 2) * std::sin(dphi / 2) +
                   std::cos(phi1) * std::cos(phi2) * std::sin(dlambda / 2) *
                       std::sin(dlambda / 2);
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(a)));
}

double parse_number(const std::string& field, const char* column, int line) {
  if (field.empty()) {
    throw ParseError("line " + std::to_string(line) + ": missing value for '" +
                     column + "'");
  }
  char* end = nullptr;
  const double value = std::strtod(field.c_str(), &end);
  if (end == field.c_str() || *end != '\0') {
    throw ParseError("line " + std::to_string(line) + ": bad number '" +
                     field + "' in column '" + column + "'");
  }
  return value;
}

bool parse_bool01(const std::string& field, const char* column, int line) {
  if (field == "0") return false;
  if (field == "1") return true;
  throw ParseError("line " + std::to_string(line) + ": column '" + column +
                   "' must be 0 or 1, got '" + field + "'");
}

}  // namespace

std::vector<StormRecord> parse_tracks(const std::string& path,
                                      const ParseOptions& options,
                                      WarningLog* warnings) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open tracks file '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) {
    throw ParseError("tracks file '" + path + "' is empty (no header)");
  }
  const auto header = split_csv_line(line);

  const std::vector<std::string> required = {
      "storm_id", "time",   "lat",    "lon",  "wind_kt",
      "over_land", "mpi_kt", "shr_ms", "rh_pct"};
  const std::vector<std::string> ocean_fields = {"hm_m", "gamma_k_per_100m"};
  const std::vector<std::string> optional = {"name"};

  std::map<std::string, int> col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i].empty()) continue;
    if (col.count(header[i]) != 0) {
      throw ParseError("duplicate column '" + header[i] + "' in header");
    }
    col[header[i]] = static_cast<int>(i);
    const bool known =
        std::find(required.begin(), required.end(), header[i]) !=
            required.end() ||
        std::find(ocean_fields.begin(), ocean_fields.end(), header[i]) !=
            ocean_fields.end() ||
        std::find(optional.begin(), optional.end(), header[i]) !=
            optional.end();
    if (!known) warn(warnings, "ignoring unknown column '" + header[i] + "'");
  }
  for (const auto& name : required) {
    if (col.count(name) == 0) {
      throw ParseError("tracks file missing required column '" + name + "'");
    }
  }
  const bool have_ocean_cols =
      col.count("hm_m") != 0 && col.count("gamma_k_per_100m") != 0;
  if (options.require_ocean_fields && !have_ocean_cols) {
    throw ParseError(
        "tracks file missing hm_m / gamma_k_per_100m columns (required unless "
        "the no-OCN variant is requested)");
  }

  auto field = [&](const std::vector<std::string>& row, const char* name,
                   int line_no) -> const std::string& {
    const auto it = col.find(name);
    const auto idx = static_cast<std::size_t>(it->second);
    if (idx >= row.size()) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": too few fields (missing '" + std::string(name) +
                       "')");
    }
    return row[idx];
  };

  std::vector<StormRecord> storms;
  std::map<std::string, std::size_t> index_by_id;

  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto row = split_csv_line(line);

    const std::string& id = field(row, "storm_id", line_no);
    if (id.empty()) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": missing storm_id");
    }

    TrackPoint pt;
    const std::string& time_text = field(row, "time", line_no);
    if (time_text.empty()) {
      throw ParseError("line " + std::to_string(line_no) + ": missing time");
    }
    try {
      pt.time = parse_iso8601(time_text);
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    pt.lat = parse_number(field(row, "lat", line_no), "lat", line_no);
    pt.lon = parse_number(field(row, "lon", line_no), "lon", line_no);
    pt.observed_wind =
        parse_number(field(row, "wind_kt", line_no), "wind_kt", line_no);
    pt.over_land =
        parse_bool01(field(row, "over_land", line_no), "over_land", line_no);
    if (pt.lat < -90.0 || pt.lat > 90.0) {
      throw ValidationError("line " + std::to_string(line_no) +
                            ": latitude out of range");
    }
    if (pt.observed_wind < 0.0) {
      throw ValidationError("line " + std::to_string(line_no) +
                            ": negative wind");
    }

    EnvRecord env;
    env.mpi = parse_number(field(row, "mpi_kt", line_no), "mpi_kt", line_no);
    env.shr = parse_number(field(row, "shr_ms", line_no), "shr_ms", line_no);
    env.rh = parse_number(field(row, "rh_pct", line_no), "rh_pct", line_no);
    if (have_ocean_cols) {
      env.h_m = parse_number(field(row, "hm_m", line_no), "hm_m", line_no);
      env.gamma = parse_number(field(row, "gamma_k_per_100m", line_no),
                               "gamma_k_per_100m", line_no);
    } else {
      env.h_m = std::nan("");
      env.gamma = std::nan("");
    }

    auto it = index_by_id.find(id);
    if (it == index_by_id.end()) {
      it = index_by_id.emplace(id, storms.size()).first;
      storms.emplace_back();
      storms.back().storm_id = id;
      if (col.count("name") != 0 &&
          static_cast<std::size_t>(col["name"]) < row.size()) {
        storms.back().name = row[static_cast<std::size_t>(col["name"])];
      }
    }
    storms[it->second].track.push_back(pt);
    storms[it->second].env.push_back(env);
  }

  // Time-sort each storm and reject duplicate timestamps.
  for (auto& storm : storms) {
    std::vector<std::size_t> order(storm.track.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return storm.track[a].time < storm.track[b].time;
    });
    std::vector<TrackPoint> track;
    std::vector<EnvRecord> env;
    track.reserve(order.size());
    env.reserve(order.size());
    for (std::size_t i : order) {
      track.push_back(storm.track[i]);
      env.push_back(storm.env[i]);
    }
    storm.track = std::move(track);
    storm.env = std::move(env);
    for (std::size_t i = 1; i < storm.track.size(); ++i) {
      if (storm.track[i].time == storm.track[i - 1].time) {
        throw ValidationError("storm " + storm.storm_id +
                              ": duplicated timestamp " +
                              format_iso8601(storm.track[i].time));
      }
    }
  }

  // Drop storms too short to carry a difference series.
  std::vector<StormRecord> kept;
  kept.reserve(storms.size());
  for (auto& storm : storms) {
    if (storm.track.size() < 2) {
      warn(warnings, "dropping storm " + storm.storm_id +
                         " with fewer than 2 points");
      continue;
    }
    kept.push_back(std::move(storm));
  }
  return kept;
}

std::vector<double> compute_translation(const StormRecord& storm) {
  const std::size_t n = storm.track.size();
  if (n < 2) {
    throw ValidationError("compute_translation: storm " + storm.storm_id +
                          " has fewer than 2 points");
  }
  auto speed = [&](std::size_t a, std::size_t b) {
    const auto& pa = storm.track[a];
    const auto& pb = storm.track[b];
    const double dt = static_cast<double>(pb.time - pa.time);
    if (dt <= 0.0) {
      throw ValidationError("storm " + storm.storm_id +
                            ": zero elapsed time between points");
    }
    return haversine_m(pa.lat, pa.lon, pb.lat, pb.lon) / dt;
  };
  std::vector<double> out(n);
  out[0] = speed(0, 1);
  out[n - 1] = speed(n - 2, n - 1);
  for (std::size_t t = 1; t + 1 < n; ++t) out[t] = speed(t - 1, t + 1);
  return out;
}

double remove_background_wind(double observed_wind_kt, double translation_ms,
                              double fraction) {
  if (fraction < 0.0 || fraction > 1.0) {
    throw ValidationError("background-wind fraction must be in [0, 1]");
  }
  return std::max(observed_wind_kt - fraction * translation_ms * kKtPerMs,
                  0.0);
}

double compute_ocn(double gamma, double h_m, double u_t, double pi, double v) {
  if (!(gamma > 0.0)) {
    throw ValidationError("compute_ocn: gamma must be positive");
  }
  if (!(v > 0.0)) throw ValidationError("compute_ocn: v must be positive");
  const double z = 0.01 * std::pow(gamma, -0.4) * h_m * u_t * (pi / v);
  return 0.13 + 0.87 * (-std::expm1(-z));
}

double compute_ocn_floored(double gamma, double h_m, double u_t, double pi,
                           double v, const IngestConfig& config,
                           WarningLog* warnings) {
  if (!(gamma > 0.0) || std::isnan(gamma)) {
    warn(warnings, "ocn: substituted gamma floor " +
                       format_double(config.gamma_floor));
    gamma = config.gamma_floor;
  }
  if (!(v > 0.0)) {
    warn(warnings, "ocn: substituted v floor " + format_double(config.v_floor));
    v = config.v_floor;
  }
  return compute_ocn(gamma, h_m, u_t, pi, v);
}

void derive_intensity(StormRecord& storm, const IngestConfig& config) {
  storm.translation = compute_translation(storm);
  const std::size_t n = storm.track.size();
  storm.v.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    storm.v[t] = remove_background_wind(storm.track[t].observed_wind,
                                        storm.translation[t],
                                        config.bg_fraction);
  }
  storm.dv.resize(n - 1);
  for (std::size_t t = 0; t + 1 < n; ++t) {
    storm.dv[t] = storm.v[t + 1] - storm.v[t];
  }
}

CovariateVector raw_covariates(const StormRecord& storm, std::size_t t,
                               const IngestConfig& config,
                               WarningLog* warnings) {
  if (!storm.has_derived()) {
    throw ValidationError("raw_covariates: storm lacks derived series");
  }
  CovariateVector x;
  x.standardized = false;
  x[kDvPrev] = t == 0 ? 0.0 : storm.v[t] - storm.v[t - 1];
  x[kVCur] = storm.v[t];
  x[kMpi] = storm.env[t].mpi;
  x[kShr] = storm.env[t].shr;
  x[kRh] = storm.env[t].rh;
  if (config.include_ocn) {
    x[kOcn] = compute_ocn_floored(storm.env[t].gamma, storm.env[t].h_m,
                                  storm.translation[t], storm.env[t].mpi,
                                  storm.v[t], config, warnings);
  } else {
    x[kOcn] = 0.0;
  }
  return x;
}

std::pair<std::vector<RawSequence>, std::vector<LandSegment>> segment_storm(
    const StormRecord& storm, const IngestConfig& config) {
  if (!storm.has_derived()) {
    throw ValidationError("segment_storm: storm lacks derived series");
  }
  std::vector<RawSequence> sequences;
  std::vector<LandSegment> segments;
  const std::size_t n = storm.track.size();

  std::size_t run_start = 0;
  for (std::size_t i = 0; i <= n; ++i) {
    const bool boundary =
        i == n || storm.track[i].over_land != storm.track[run_start].over_land;
    if (!boundary) continue;

    const std::size_t run_end = i;  // [run_start, run_end)
    const bool over_land = storm.track[run_start].over_land;
    if (over_land) {
      const std::size_t len = run_end - run_start;
      if (static_cast<int>(len) >= config.min_land_len &&
          storm.v[run_start] >= config.min_land_v0) {
        LandSegment seg;
        seg.storm_id = storm.storm_id;
        seg.v0 = storm.v[run_start];
        seg.intensities.assign(storm.v.begin() + static_cast<long>(run_start),
                               storm.v.begin() + static_cast<long>(run_end));
        segments.push_back(std::move(seg));
      }
    } else {
      // The final point's response survives unless the record ends there.
      const std::size_t resp_end = run_end < n ? run_end : n - 1;
      if (resp_end > run_start) {
        const std::size_t t_count = resp_end - run_start;
        if (static_cast<int>(t_count) >= config.min_ocean_len) {
          RawSequence seq;
          seq.storm_id = storm.storm_id;
          seq.start_index = static_cast<int>(run_start);
          seq.responses.reserve(t_count);
          seq.covariates.reserve(t_count);
          for (std::size_t t = run_start; t < resp_end; ++t) {
            seq.responses.push_back(storm.dv[t]);
            seq.covariates.push_back(raw_covariates(storm, t, config));
          }
          sequences.push_back(std::move(seq));
        }
      }
    }
    if (i < n) run_start = i;
  }
  return {std::move(sequences), std::move(segments)};
}

Scaler fit_scaler(const std::vector<RawSequence>& sequences, bool include_ocn) {
  std::array<double, kNumCovariates + 1> sum{};
  std::array<double, kNumCovariates + 1> sumsq{};
  std::size_t n = 0;
  for (const auto& seq : sequences) {
    for (std::size_t t = 0; t < seq.responses.size(); ++t) {
      for (int i = 0; i < kNumCovariates; ++i) {
        sum[static_cast<std::size_t>(i)] += seq.covariates[t][i];
        sumsq[static_cast<std::size_t>(i)] +=
            seq.covariates[t][i] * seq.covariates[t][i];
      }
      sum[kResponseSlot] += seq.responses[t];
      sumsq[kResponseSlot] += seq.responses[t] * seq.responses[t];
    }
    n += seq.responses.size();
  }
  if (n < 2) throw FitError("fit_scaler: need at least 2 observations");

  Scaler scaler;
  const auto dn = static_cast<double>(n);
  for (int slot = 0; slot <= kNumCovariates; ++slot) {
    if (slot == kOcn && !include_ocn) continue;  // keep identity scaling
    const auto s = static_cast<std::size_t>(slot);
    const double mean = sum[s] / dn;
    const double var = (sumsq[s] - dn * mean * mean) / (dn - 1.0);
    if (!(var > 0.0)) {
      const char* name = slot == kResponseSlot
                             ? "dv"
                             : kCovariateNames[static_cast<std::size_t>(slot)];
      throw FitError(std::string("fit_scaler: zero variance in variable '") +
                     name + "'");
    }
    scaler.mean[s] = mean;
    scaler.sd[s] = std::sqrt(var);
  }
  scaler.validate();
  return scaler;
}

std::size_t Dataset::n_observations() const {
  std::size_t total = 0;
  for (const auto& seq : sequences) total += seq.length();
  return total;
}

Dataset build_dataset(std::vector<StormRecord> storms,
                      const IngestConfig& config, WarningLog* warnings) {
  Dataset dataset;
  std::vector<RawSequence> raw;
  for (auto& storm : storms) {
    derive_intensity(storm, config);
    auto [seqs, lands] = segment_storm(storm, config);
    for (auto& s : seqs) raw.push_back(std::move(s));
    for (auto& l : lands) dataset.land_segments.push_back(std::move(l));
  }
  dataset.storms = std::move(storms);
  if (raw.empty()) {
    throw FitError("build_dataset: no training sequences survive filtering");
  }
  dataset.scaler = fit_scaler(raw, config.include_ocn);

  for (auto& seq : raw) {
    OceanSequence out;
    out.storm_id = seq.storm_id;
    out.start_index = seq.start_index;
    out.responses.reserve(seq.responses.size());
    out.covariates.reserve(seq.covariates.size());
    for (std::size_t t = 0; t < seq.responses.size(); ++t) {
      out.responses.push_back(
          dataset.scaler.standardize(kResponseSlot, seq.responses[t]));
      out.covariates.push_back(dataset.scaler.standardize(seq.covariates[t]));
    }
    dataset.sequences.push_back(std::move(out));
  }
  if (warnings != nullptr) {
    warn(warnings,
         "dataset: " + std::to_string(dataset.n_storms()) + " storms, " +
             std::to_string(dataset.n_sequences()) + " sequences, " +
             std::to_string(dataset.n_observations()) + " observations, " +
             std::to_string(dataset.n_land_segments()) + " land segments");
  }
  return dataset;
}

std::string dataset_summary_json(const Dataset& dataset) {
  nlohmann::json j;
  j["counts"] = {{"storms", dataset.n_storms()},
                 {"sequences", dataset.n_sequences()},
                 {"observations", dataset.n_observations()},
                 {"land_segments", dataset.n_land_segments()}};
  nlohmann::json scaler;
  for (int slot = 0; slot <= kNumCovariates; ++slot) {
    const char* name = slot == kResponseSlot
                           ? "dv"
                           : kCovariateNames[static_cast<std::size_t>(slot)];
    scaler[name] = {{"mean", dataset.scaler.mean[static_cast<std::size_t>(slot)]},
                    {"sd", dataset.scaler.sd[static_cast<std::size_t>(slot)]}};
  }
  j["scaler"] = scaler;
  return j.dump(2);
}

}  // namespace tcim
