#include "tcim/landdecay.hpp"

#include <cmath>

namespace tcim {

LandModel land_fit(const std::vector<LandSegment>& segments) {
  ExpDecayOptions options;
  options.alpha0 = 0.05;
  options.vb0 = 20.0;
  const ExpDecayFit fit = nls_exp_decay_fit(segments, options);
  LandModel model;
  model.alpha = fit.alpha;
  model.v_b = fit.v_b;
  model.n_segments = static_cast<int>(segments.size());
  model.identifiable = fit.identifiable;
  return model;
}

double land_apply(const LandModel& model, double v0, double t_steps) {
  if (t_steps < 0.0) throw ValidationError("land_apply: negative time");
  if (v0 <= model.v_b) return v0;  // no decay below the background wind
  return model.v_b + (v0 - model.v_b) * std::exp(-model.alpha * t_steps);
}

}  // namespace tcim
