#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "tcim/domain.hpp"
#include "tcim/landdecay.hpp"
#include "tcim/model_io.hpp"

namespace tcim {

// One extreme-state correction window: the generated steps whose source
// index t satisfies start_index <= t < start_index + n_steps are forced into
// the extreme state (MeHiM only).
struct RiWindow {
  int start_index = 0;
  int n_steps = 4;
};

struct SimConfig {
  int n_realizations = 100;
  std::uint64_t master_seed = 0;
  double stop_threshold = 10.0;  // kt
  double gamma_floor = 0.01;     // OCN substitution floors, as in ingest
  double v_floor = 5.0;
  std::vector<RiWindow> ri_corrections;
  int threads = 1;
};

struct Realization {
  std::vector<double> v;   // kt, aligned to the track; may stop early
  std::vector<double> dv;  // realized differences, v.size() - 1 entries
  StatePath states;        // 0-based per point; -1 for non-MeHiM models
  int stopped_at = -1;     // index where the stop rule fired, -1 otherwise
  std::uint64_t seed = 0;
};

struct EnsembleResult {
  std::string storm_id;
  std::string model_type;
  std::string model_hash;
  std::uint64_t master_seed = 0;
  std::vector<Realization> realizations;
};

// One Monte Carlo realization along a prescribed track. The storm must carry
// derived series (translation, v, dv). The first two points copy observed
// intensity; each later point comes from the ocean model (covariates at the
// source point, OCN recomputed from the simulated intensity) or, over land,
// from the decay model clocked from the latest land entry. land_model may be
// null only for tracks that never touch land.
Realization simulate_storm(const ModelBundle& bundle, const StormRecord& storm,
                           const LandModel* land_model, const SimConfig& config,
                           int realization_index);

EnsembleResult simulate_ensemble(const ModelBundle& bundle,
                                 const StormRecord& storm,
                                 const LandModel* land_model,
                                 const SimConfig& config);

// Observed rapid-intensification onsets: the first step of each maximal run
// of 24-h rises >= threshold, each opening a 4-step correction window.
std::vector<RiWindow> ri_correct_schedule(const StormRecord& storm,
                                          double threshold_kt = 30.0,
                                          int window_steps = 4);

// Ensemble CSV: realization, step_index, time, v_kt, dv_kt, state, over_land.
// dv is empty on each realization's last recorded step; state is 1-based for
// MeHiM and 0 otherwise.
std::string ensemble_csv(const EnsembleResult& ensemble,
                         const StormRecord& storm);

nlohmann::json ensemble_manifest(const EnsembleResult& ensemble,
                                 const SimConfig& config);

}  // namespace tcim
