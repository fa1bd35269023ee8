#pragma once

#include <vector>

#include "tcim/domain.hpp"
#include "tcim/stats.hpp"

namespace tcim {

// Over-land exponential decay toward a background wind:
//   V(t) = v_b + (v0 - v_b) exp(-alpha t), t in 6-h steps.
struct LandModel {
  double alpha = 0.0;  // per 6 h, > 0
  double v_b = 0.0;    // kt, >= 0
  int n_segments = 0;
  bool identifiable = true;
};

// Fits (alpha, v_b) over all segment points. Segments are expected to pass
// the ingest filters (length >= 2, v0 >= 20 kt).
LandModel land_fit(const std::vector<LandSegment>& segments);

// Decayed intensity after t steps. Intensities at or below the background
// wind hold their value.
double land_apply(const LandModel& model, double v0, double t_steps);

}  // namespace tcim
