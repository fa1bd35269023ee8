#include "tcim/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "tcim/hmm.hpp"
#include "tcim/ingest.hpp"
#include "tcim/mixture.hpp"
#include "tcim/rng.hpp"

namespace tcim {

namespace {

// First index of the maximal over-land run containing each land point.
std::vector<int> land_run_starts(const StormRecord& storm) {
  const int n = static_cast<int>(storm.size());
  std::vector<int> start(static_cast<std::size_t>(n), -1);
  for (int i = 0; i < n; ++i) {
    if (!storm.track[static_cast<std::size_t>(i)].over_land) continue;
    start[static_cast<std::size_t>(i)] =
        (i > 0 && start[static_cast<std::size_t>(i - 1)] >= 0)
            ? start[static_cast<std::size_t>(i - 1)]
            : i;
  }
  return start;
}

double require_finite(double value, const char* what, const StormRecord& storm,
                      int index) {
  if (!std::isfinite(value)) {
    throw SimulationError("storm " + storm.storm_id + ": missing " + what +
                          " at step " + std::to_string(index));
  }
  return value;
}

bool in_ri_window(const std::vector<RiWindow>& windows, int source_step) {
  for (const auto& w : windows) {
    if (source_step >= w.start_index &&
        source_step < w.start_index + w.n_steps) {
      return true;
    }
  }
  return false;
}

}  // namespace

Realization simulate_storm(const ModelBundle& bundle, const StormRecord& storm,
                           const LandModel* land_model, const SimConfig& config,
                           int realization_index) {
  const int n = static_cast<int>(storm.size());
  if (n < 3) {
    throw SimulationError("storm " + storm.storm_id +
                          ": need at least 3 points to simulate");
  }
  if (!storm.has_derived()) {
    throw SimulationError("storm " + storm.storm_id +
                          ": derived series missing (run ingest first)");
  }

  const CovariateSet set = bundle.covariate_set();
  const Scaler& scaler = bundle.scaler();
  const auto active = active_covariates(set);
  const bool needs_ocn = set == CovariateSet::Full;

  IngestConfig floors;
  floors.gamma_floor = config.gamma_floor;
  floors.v_floor = config.v_floor;

  Realization real;
  real.seed = derive_seed(config.master_seed, storm.storm_id,
                          static_cast<std::uint64_t>(realization_index));
  Rng rng(real.seed);

  real.v.reserve(static_cast<std::size_t>(n));
  real.v.push_back(storm.v[0]);
  real.v.push_back(storm.v[1]);
  real.states.assign(2, -1);

  if (bundle.choice == ModelChoice::Mehim) {
    const MehimModel& model = *bundle.mehim;
    Eigen::VectorXd x_init(3);
    for (std::size_t i = 0; i < kInitialCovariates.size(); ++i) {
      const int slot = kInitialCovariates[i];
      double raw = 0.0;
      if (slot == kMpi) raw = storm.env[0].mpi;
      if (slot == kShr) raw = storm.env[0].shr;
      if (slot == kRh) raw = storm.env[0].rh;
      x_init[static_cast<Eigen::Index>(i)] = scaler.standardize(
          slot, require_finite(raw, "environment", storm, 0));
    }
    const Eigen::VectorXd p0 = initial_probs(model, x_init);
    // One draw covers both initialization steps.
    const int s0 = rng.categorical(
        std::span<const double>(p0.data(), static_cast<std::size_t>(p0.size())));
    real.states[0] = s0;
    real.states[1] = s0;
  }

  const auto run_start = land_run_starts(storm);
  double dv_prev_raw = real.v[1] - real.v[0];

  for (int t = 1; t + 1 < n; ++t) {
    const int dest = t + 1;
    double next_v = 0.0;
    int next_state = real.states[static_cast<std::size_t>(t)];

    if (storm.track[static_cast<std::size_t>(dest)].over_land) {
      if (land_model == nullptr) {
        throw SimulationError("storm " + storm.storm_id +
                              ": track crosses land but no land model given");
      }
      // Clock decay from the land-entry event: the last pre-land point is
      // one step before the run's first land point.
      const int entry = run_start[static_cast<std::size_t>(dest)];
      double v0;
      double tau;
      if (entry == 0) {
        v0 = real.v[0];
        tau = static_cast<double>(dest);
      } else {
        v0 = real.v[static_cast<std::size_t>(entry - 1)];
        tau = static_cast<double>(dest - entry + 1);
      }
      next_v = v0 <= land_model->v_b ? v0 : land_apply(*land_model, v0, tau);
      // dv_prev and the MeHiM state stay frozen at their last ocean values.
    } else {
      CovariateVector raw;
      raw[kDvPrev] = dv_prev_raw;
      raw[kVCur] = real.v[static_cast<std::size_t>(t)];
      raw[kMpi] = require_finite(storm.env[static_cast<std::size_t>(t)].mpi,
                                 "mpi", storm, t);
      raw[kShr] = require_finite(storm.env[static_cast<std::size_t>(t)].shr,
                                 "shr", storm, t);
      raw[kRh] = require_finite(storm.env[static_cast<std::size_t>(t)].rh,
                                "rh", storm, t);
      if (needs_ocn) {
        const double h_m = require_finite(
            storm.env[static_cast<std::size_t>(t)].h_m, "h_m", storm, t);
        const double gamma = require_finite(
            storm.env[static_cast<std::size_t>(t)].gamma, "gamma", storm, t);
        raw[kOcn] = compute_ocn_floored(
            gamma, h_m, storm.translation[static_cast<std::size_t>(t)],
            raw[kMpi], real.v[static_cast<std::size_t>(t)], floors);
      }
      Eigen::VectorXd x(static_cast<Eigen::Index>(active.size()));
      for (std::size_t i = 0; i < active.size(); ++i) {
        x[static_cast<Eigen::Index>(i)] =
            scaler.standardize(active[i], raw[active[i]]);
      }

      double dv_std = 0.0;
      switch (bundle.choice) {
        case ModelChoice::Ols: {
          const LinearFit& fit = bundle.ols->fit;
          dv_std = rng.normal(fit.predict(x), fit.sigma);
          break;
        }
        case ModelChoice::Fmr: {
          dv_std = fmr_sample_dv(*bundle.fmr, x, rng);
          break;
        }
        case ModelChoice::Mehim: {
          const MehimModel& model = *bundle.mehim;
          if (in_ri_window(config.ri_corrections, t)) {
            next_state = model.k - 1;  // forced extreme state
          } else {
            const Eigen::VectorXd probs = transition_probs(
                model, real.states[static_cast<std::size_t>(t)], x);
            next_state = rng.categorical(std::span<const double>(
                probs.data(), static_cast<std::size_t>(probs.size())));
          }
          dv_std = emission_sample(model, next_state, x, rng);
          break;
        }
      }
      const double dv_raw = scaler.unstandardize(kResponseSlot, dv_std);
      next_v = std::max(real.v[static_cast<std::size_t>(t)] + dv_raw, 0.0);
      dv_prev_raw = dv_raw;
    }

    real.v.push_back(next_v);
    real.states.push_back(next_state);
    if (next_v < config.stop_threshold) {
      real.stopped_at = dest;
      break;
    }
  }

  real.dv.resize(real.v.size() - 1);
  for (std::size_t i = 0; i + 1 < real.v.size(); ++i) {
    real.dv[i] = real.v[i + 1] - real.v[i];
  }
  return real;
}

EnsembleResult simulate_ensemble(const ModelBundle& bundle,
                                 const StormRecord& storm,
                                 const LandModel* land_model,
                                 const SimConfig& config) {
  if (config.n_realizations < 1) {
    throw ValidationError("simulate_ensemble: n_realizations must be >= 1");
  }
  EnsembleResult result;
  result.storm_id = storm.storm_id;
  result.model_type = model_choice_name(bundle.choice);
  result.model_hash = bundle.hash;
  result.master_seed = config.master_seed;
  result.realizations.resize(static_cast<std::size_t>(config.n_realizations));

  const int threads = std::max(1, config.threads);
  if (threads == 1) {
    for (int i = 0; i < config.n_realizations; ++i) {
      result.realizations[static_cast<std::size_t>(i)] =
          simulate_storm(bundle, storm, land_model, config, i);
    }
    return result;
  }

  // Realizations are independent; output order is fixed by index.
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(threads));
  for (int w = 0; w < threads; ++w) {
    workers.emplace_back([&, w]() {
      try {
        for (int i = w; i < config.n_realizations; i += threads) {
          result.realizations[static_cast<std::size_t>(i)] =
              simulate_storm(bundle, storm, land_model, config, i);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& worker : workers) worker.join();
  if (first_error) std::rethrow_exception(first_error);
  return result;
}

std::vector<RiWindow> ri_correct_schedule(const StormRecord& storm,
                                          double threshold_kt,
                                          int window_steps) {
  if (!storm.has_derived()) {
    throw ValidationError("ri_correct_schedule: derived series missing");
  }
  const int n = static_cast<int>(storm.size());
  std::vector<RiWindow> windows;
  bool prev_rising = false;
  for (int t = 0; t + 4 < n; ++t) {
    const bool rising = storm.v[static_cast<std::size_t>(t + 4)] -
                            storm.v[static_cast<std::size_t>(t)] >=
                        threshold_kt;
    if (rising && !prev_rising) {
      windows.push_back({t, window_steps});
    }
    prev_rising = rising;
  }
  return windows;
}

std::string ensemble_csv(const EnsembleResult& ensemble,
                         const StormRecord& storm) {
  std::ostringstream out;
  out << "realization,step_index,time,v_kt,dv_kt,state,over_land\n";
  for (std::size_t r = 0; r < ensemble.realizations.size(); ++r) {
    const auto& real = ensemble.realizations[r];
    for (std::size_t t = 0; t < real.v.size(); ++t) {
      out << r << ',' << t << ','
          << format_iso8601(storm.track[t].time) << ','
          << format_double(real.v[t]) << ',';
      if (t + 1 < real.v.size()) out << format_double(real.dv[t]);
      out << ',' << (real.states[t] >= 0 ? real.states[t] + 1 : 0) << ','
          << (storm.track[t].over_land ? 1 : 0) << '\n';
    }
  }
  return out.str();
}

nlohmann::json ensemble_manifest(const EnsembleResult& ensemble,
                                 const SimConfig& config) {
  nlohmann::json j;
  j["storm_id"] = ensemble.storm_id;
  j["model_type"] = ensemble.model_type;
  j["model_hash"] = ensemble.model_hash;
  j["master_seed"] = ensemble.master_seed;
  j["n_realizations"] = ensemble.realizations.size();
  j["stop_threshold_kt"] = config.stop_threshold;
  nlohmann::json windows = nlohmann::json::array();
  for (const auto& w : config.ri_corrections) {
    windows.push_back({{"start_index", w.start_index}, {"n_steps", w.n_steps}});
  }
  j["ri_corrections"] = windows;
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& real : ensemble.realizations) seeds.push_back(real.seed);
  j["realization_seeds"] = seeds;
  return j;
}

}  // namespace tcim
