#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "tcim/ingest.hpp"
#include "tcim/rng.hpp"

using namespace tcim;

namespace {

const char* kHeader =
    "storm_id,time,lat,lon,wind_kt,over_land,mpi_kt,shr_ms,rh_pct,hm_m,"
    "gamma_k_per_100m\n";

std::string write_temp(const std::string& content) {
  static int counter = 0;
  const std::string path =
      (std::filesystem::temp_directory_path() /
       ("tcim_ingest_" + std::to_string(++counter) + ".csv"))
          .string();
  std::ofstream out(path);
  out << content;
  return path;
}

StormRecord ocean_land_storm(const std::vector<int>& land_flags,
                             double wind0 = 40.0, double lat_step = 0.0) {
  // lat_step == 0 keeps the storm stationary (translation 0, v == observed).
  StormRecord storm;
  storm.storm_id = "SYN";
  for (std::size_t i = 0; i < land_flags.size(); ++i) {
    TrackPoint pt;
    pt.time = 21600LL * static_cast<long long>(i);
    pt.lat = 20.0 + lat_step * static_cast<double>(i);
    pt.lon = -60.0;
    pt.observed_wind = wind0 + static_cast<double>(i);
    pt.over_land = land_flags[i] != 0;
    storm.track.push_back(pt);
    EnvRecord env{140.0, 8.0, 60.0, 50.0, 0.1};
    storm.env.push_back(env);
  }
  return storm;
}

}  // namespace

TEST_CASE("parse_tracks handles a header-only file") {
  const auto path = write_temp(kHeader);
  CHECK(parse_tracks(path).empty());
}

TEST_CASE("parse_tracks reads a minimal two-point storm") {
  const auto path = write_temp(
      std::string(kHeader) +
      "AL01,1999-07-01T00:00:00,15.0,-40.0,30,0,140,8,60,50,0.1\n"
      "AL01,1999-07-01T06:00:00,15.5,-40.5,35,0,141,8,61,50,0.1\n");
  const auto storms = parse_tracks(path);
  REQUIRE(storms.size() == 1);
  CHECK(storms[0].storm_id == "AL01");
  REQUIRE(storms[0].track.size() == 2);
  CHECK(storms[0].track[1].observed_wind == 35.0);
}

TEST_CASE("parse_tracks rejects duplicated timestamps") {
  const auto path = write_temp(
      std::string(kHeader) +
      "AL01,1999-07-01T00:00:00,15.0,-40.0,30,0,140,8,60,50,0.1\n"
      "AL01,1999-07-01T00:00:00,15.5,-40.5,35,0,141,8,61,50,0.1\n");
  try {
    parse_tracks(path);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("AL01") != std::string::npos);
    CHECK(msg.find("1999-07-01T00:00:00") != std::string::npos);
  }
}

TEST_CASE("parse_tracks sorts rows and warns on unknown columns") {
  const auto path = write_temp(
      "storm_id,time,lat,lon,wind_kt,over_land,mpi_kt,shr_ms,rh_pct,hm_m,"
      "gamma_k_per_100m,bogus\n"
      "AL01,1999-07-01T06:00:00,15.5,-40.5,35,0,141,8,61,50,0.1,x\n"
      "AL01,1999-07-01T00:00:00,15.0,-40.0,30,0,140,8,60,50,0.1,y\n");
  WarningLog log;
  const auto storms = parse_tracks(path, {}, &log);
  REQUIRE(storms.size() == 1);
  CHECK(storms[0].track[0].time < storms[0].track[1].time);
  REQUIRE(!log.empty());
  CHECK(log.messages[0].find("bogus") != std::string::npos);
}

TEST_CASE("parse_tracks errors carry line numbers") {
  SUBCASE("bad number") {
    const auto path = write_temp(
        std::string(kHeader) +
        "AL01,1999-07-01T00:00:00,15.0,-40.0,thirty,0,140,8,60,50,0.1\n");
    try {
      parse_tracks(path);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }
  SUBCASE("missing required column") {
    const auto path = write_temp("storm_id,time,lat\n");
    CHECK_THROWS_AS(parse_tracks(path), ParseError);
  }
  SUBCASE("missing ocean fields by default") {
    const auto path = write_temp(
        "storm_id,time,lat,lon,wind_kt,over_land,mpi_kt,shr_ms,rh_pct\n");
    CHECK_THROWS_AS(parse_tracks(path), ParseError);
    ParseOptions options;
    options.require_ocean_fields = false;
    CHECK(parse_tracks(path, options).empty());
  }
}

TEST_CASE("translation speed") {
  SUBCASE("stationary storm") {
    const StormRecord storm = ocean_land_storm({0, 0, 0, 0});
    const auto speed = compute_translation(storm);
    for (double s : speed) CHECK(s == doctest::Approx(0.0).scale(1.0));
  }
  SUBCASE("two points 0.965 degrees of latitude over 6 h") {
    StormRecord storm;
    storm.storm_id = "T";
    for (int i = 0; i < 2; ++i) {
      TrackPoint pt;
      pt.time = 21600LL * i;
      pt.lat = 10.0 + 0.965 * i;
      pt.lon = -50.0;
      pt.observed_wind = 40.0;
      storm.track.push_back(pt);
      storm.env.push_back({});
    }
    const auto speed = compute_translation(storm);
    CHECK(speed[0] == doctest::Approx(4.97).epsilon(0.01));
    CHECK(speed[1] == doctest::Approx(4.97).epsilon(0.01));
  }
  SUBCASE("collinear uniform motion: centered equals one-sided") {
    StormRecord storm;
    storm.storm_id = "T";
    for (int i = 0; i < 3; ++i) {
      TrackPoint pt;
      pt.time = 21600LL * i;
      pt.lat = 10.0 + 0.5 * i;
      pt.lon = -50.0;
      pt.observed_wind = 40.0;
      storm.track.push_back(pt);
      storm.env.push_back({});
    }
    const auto speed = compute_translation(storm);
    CHECK(speed[1] == doctest::Approx(speed[0]).epsilon(1e-6));
    CHECK(speed[1] == doctest::Approx(speed[2]).epsilon(1e-6));
  }
}

TEST_CASE("background wind removal") {
  CHECK(remove_background_wind(50.0, 5.0, 0.0) == 50.0);
  CHECK(remove_background_wind(50.0, 5.0, 0.55) ==
        doctest::Approx(44.65).epsilon(1e-3));
  CHECK(remove_background_wind(1.0, 10.0, 0.55) == 0.0);  // clamped
  CHECK_THROWS_AS(remove_background_wind(50.0, 5.0, 1.5), ValidationError);
}

TEST_CASE("ocean feedback parameter") {
  SUBCASE("zero translation gives the floor value exactly") {
    CHECK(compute_ocn(1.0, 50.0, 0.0, 150.0, 150.0) == 0.13);
  }
  SUBCASE("worked example z = 2.5") {
    const double expected = 1.0 - 0.87 * std::exp(-2.5);
    CHECK(std::abs(compute_ocn(1.0, 50.0, 5.0, 150.0, 150.0) - expected) <
          1e-12);
    CHECK(compute_ocn(1.0, 50.0, 5.0, 150.0, 150.0) ==
          doctest::Approx(0.9286).epsilon(1e-4));
  }
  SUBCASE("monotone directions") {
    // Geophysical ranges keep z well below exp() saturation, where strict
    // monotonicity is representable.
    Rng rng(21);
    for (int trial = 0; trial < 1000; ++trial) {
      const double gamma = 0.05 + rng.uniform() * 0.5;
      const double hm = 5.0 + rng.uniform() * 35.0;
      const double ut = 0.1 + rng.uniform() * 3.0;
      const double pi = 80.0 + rng.uniform() * 100.0;
      const double v = 40.0 + rng.uniform() * 120.0;
      const double base = compute_ocn(gamma, hm, ut, pi, v);
      CHECK(compute_ocn(gamma, hm, ut * 1.3, pi, v) > base);
      CHECK(compute_ocn(gamma, hm * 1.3, ut, pi, v) > base);
      CHECK(compute_ocn(gamma, hm, ut, pi * 1.3, v) > base);
      CHECK(compute_ocn(gamma, hm, ut, pi, v * 1.3) < base);
      CHECK(compute_ocn(gamma * 1.3, hm, ut, pi, v) < base);
      CHECK(base >= 0.13);
      CHECK(base < 1.0);
    }
  }
  SUBCASE("domain errors and floors") {
    CHECK_THROWS_AS(compute_ocn(0.0, 50.0, 5.0, 150.0, 150.0),
                    ValidationError);
    CHECK_THROWS_AS(compute_ocn(1.0, 50.0, 5.0, 150.0, 0.0), ValidationError);
    IngestConfig config;
    WarningLog log;
    const double floored =
        compute_ocn_floored(0.0, 50.0, 5.0, 150.0, 150.0, config, &log);
    CHECK(floored ==
          doctest::Approx(compute_ocn(config.gamma_floor, 50.0, 5.0, 150.0,
                                      150.0)));
    CHECK(!log.empty());
  }
}

TEST_CASE("scaler fitting") {
  SUBCASE("two-point variable has mean 0 and sd sqrt(2)") {
    RawSequence seq;
    seq.storm_id = "S";
    for (int i = 0; i < 2; ++i) {
      CovariateVector cov;
      for (int c = 0; c < kNumCovariates; ++c) {
        cov[c] = i == 0 ? -1.0 : 1.0;
      }
      seq.covariates.push_back(cov);
      seq.responses.push_back(i == 0 ? -1.0 : 1.0);
    }
    const Scaler scaler = fit_scaler({seq}, true);
    for (int slot = 0; slot <= kNumCovariates; ++slot) {
      CHECK(scaler.mean[static_cast<std::size_t>(slot)] ==
            doctest::Approx(0.0).scale(1.0));
      CHECK(scaler.sd[static_cast<std::size_t>(slot)] ==
            doctest::Approx(std::sqrt(2.0)));
    }
    CHECK(scaler.standardize(0, 1.0) == doctest::Approx(1.0 / std::sqrt(2.0)));
  }
  SUBCASE("refit of standardized data is near identity") {
    Rng rng(22);
    RawSequence seq;
    for (int i = 0; i < 5000; ++i) {
      CovariateVector cov;
      for (int c = 0; c < kNumCovariates; ++c) cov[c] = rng.normal();
      seq.covariates.push_back(cov);
      seq.responses.push_back(rng.normal());
    }
    const Scaler scaler = fit_scaler({seq}, true);
    for (int slot = 0; slot <= kNumCovariates; ++slot) {
      CHECK(std::abs(scaler.mean[static_cast<std::size_t>(slot)]) < 0.05);
      CHECK(scaler.sd[static_cast<std::size_t>(slot)] ==
            doctest::Approx(1.0).epsilon(0.05));
    }
  }
  SUBCASE("zero variance names the variable") {
    RawSequence seq;
    for (int i = 0; i < 10; ++i) {
      CovariateVector cov;
      for (int c = 0; c < kNumCovariates; ++c) cov[c] = i;
      cov[kShr] = 7.0;  // constant
      seq.covariates.push_back(cov);
      seq.responses.push_back(i);
    }
    try {
      fit_scaler({seq}, true);
      FAIL("expected FitError");
    } catch (const FitError& e) {
      CHECK(std::string(e.what()).find("shr") != std::string::npos);
    }
  }
}

TEST_CASE("storm segmentation") {
  IngestConfig config;
  SUBCASE("fully over ocean: one sequence, T = n - 1") {
    StormRecord storm = ocean_land_storm(std::vector<int>(30, 0));
    derive_intensity(storm, config);
    const auto [seqs, lands] = segment_storm(storm, config);
    REQUIRE(seqs.size() == 1);
    CHECK(seqs[0].responses.size() == 29);
    CHECK(lands.empty());
  }
  SUBCASE("ocean(20)-land(4)-ocean(8): one sequence and one land segment") {
    std::vector<int> flags(32, 0);
    for (int i = 20; i < 24; ++i) flags[static_cast<std::size_t>(i)] = 1;
    StormRecord storm = ocean_land_storm(flags, 60.0);
    derive_intensity(storm, config);
    const auto [seqs, lands] = segment_storm(storm, config);
    REQUIRE(seqs.size() == 1);  // trailing 8-point run dropped (< 12)
    CHECK(seqs[0].start_index == 0);
    // The final ocean point's response survives (next point exists).
    CHECK(seqs[0].responses.size() == 20);
    REQUIRE(lands.size() == 1);
    CHECK(lands[0].intensities.size() == 4);
    CHECK(lands[0].v0 == storm.v[20]);
  }
  SUBCASE("single-point land runs are not segments") {
    std::vector<int> flags(30, 0);
    flags[15] = 1;
    StormRecord storm = ocean_land_storm(flags, 60.0);
    derive_intensity(storm, config);
    const auto [seqs, lands] = segment_storm(storm, config);
    CHECK(lands.empty());
    REQUIRE(seqs.size() == 2);  // 15-run and 14-run both >= 12
  }
  SUBCASE("weak land entries are filtered by v0") {
    std::vector<int> flags(30, 0);
    for (int i = 14; i < 18; ++i) flags[static_cast<std::size_t>(i)] = 1;
    StormRecord storm = ocean_land_storm(flags, 2.0);  // v0 < 20 kt
    derive_intensity(storm, config);
    const auto [seqs, lands] = segment_storm(storm, config);
    CHECK(lands.empty());
  }
  SUBCASE("segmentation partitions: no observation in two sequences") {
    std::vector<int> flags(60, 0);
    for (int i = 25; i < 28; ++i) flags[static_cast<std::size_t>(i)] = 1;
    StormRecord storm = ocean_land_storm(flags, 70.0);
    derive_intensity(storm, config);
    const auto [seqs, lands] = segment_storm(storm, config);
    std::set<int> seen;
    for (const auto& seq : seqs) {
      for (std::size_t t = 0; t < seq.responses.size(); ++t) {
        const int idx = seq.start_index + static_cast<int>(t);
        CHECK(seen.insert(idx).second);
      }
    }
  }
}

TEST_CASE("dv_p covariate convention") {
  IngestConfig config;
  StormRecord storm = ocean_land_storm(std::vector<int>(15, 0));
  derive_intensity(storm, config);
  CHECK(raw_covariates(storm, 0, config)[kDvPrev] == 0.0);
  CHECK(raw_covariates(storm, 3, config)[kDvPrev] ==
        doctest::Approx(storm.v[3] - storm.v[2]));
  CHECK(raw_covariates(storm, 3, config)[kVCur] == storm.v[3]);
}

TEST_CASE("build_dataset standardizes and counts") {
  IngestConfig config;
  std::vector<StormRecord> storms;
  Rng rng(23);
  for (int s = 0; s < 3; ++s) {
    StormRecord storm = ocean_land_storm(std::vector<int>(40, 0),
                                         30.0 + 10.0 * s, 0.3);
    // wiggle the wind so variances are nonzero
    for (auto& pt : storm.track) pt.observed_wind += rng.normal(0.0, 5.0);
    for (auto& pt : storm.track) pt.observed_wind = std::max(pt.observed_wind, 5.0);
    // vary the environment too
    for (auto& env : storm.env) {
      env.mpi += rng.normal(0.0, 10.0);
      env.shr = std::max(0.5, env.shr + rng.normal(0.0, 2.0));
      env.rh = std::min(95.0, std::max(20.0, env.rh + rng.normal(0.0, 5.0)));
      env.h_m = std::max(5.0, env.h_m + rng.normal(0.0, 10.0));
      env.gamma = std::max(0.02, env.gamma + rng.normal(0.0, 0.02));
    }
    storm.storm_id = "S" + std::to_string(s);
    storms.push_back(std::move(storm));
  }
  const Dataset dataset = build_dataset(storms, config);
  CHECK(dataset.n_storms() == 3);
  CHECK(dataset.n_sequences() == 3);
  CHECK(dataset.n_observations() == 3 * 39);
  // Standardized responses should have roughly zero mean / unit sd.
  double sum = 0.0, sumsq = 0.0;
  std::size_t n = 0;
  for (const auto& seq : dataset.sequences) {
    for (double r : seq.responses) {
      sum += r;
      sumsq += r * r;
      ++n;
    }
  }
  const double mean = sum / static_cast<double>(n);
  CHECK(std::abs(mean) < 1e-10);
  CHECK(sumsq / static_cast<double>(n - 1) == doctest::Approx(1.0).epsilon(0.02));
  // Summary JSON parses back.
  const auto summary = dataset_summary_json(dataset);
  CHECK(summary.find("\"storms\": 3") != std::string::npos);
}
