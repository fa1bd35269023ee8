#include "tcim/domain.hpp"

#include <cmath>

namespace tcim {

std::vector<int> active_covariates(CovariateSet set) {
  if (set == CovariateSet::NoOcn) return {kDvPrev, kVCur, kMpi, kShr, kRh};
  return {kDvPrev, kVCur, kMpi, kShr, kRh, kOcn};
}

const char* covariate_set_name(CovariateSet set) {
  return set == CovariateSet::NoOcn ? "no_ocn" : "full";
}

CovariateSet covariate_set_from_name(const std::string& name) {
  if (name == "full") return CovariateSet::Full;
  if (name == "no_ocn") return CovariateSet::NoOcn;
  throw ValidationError("unknown covariate set '" + name + "'");
}

CovariateVector Scaler::standardize(const CovariateVector& raw) const {
  CovariateVector out;
  out.standardized = true;
  for (int i = 0; i < kNumCovariates; ++i) out[i] = standardize(i, raw[i]);
  return out;
}

CovariateVector Scaler::unstandardize(const CovariateVector& std_vec) const {
  CovariateVector out;
  out.standardized = false;
  for (int i = 0; i < kNumCovariates; ++i) out[i] = unstandardize(i, std_vec[i]);
  return out;
}

void Scaler::validate() const {
  for (std::size_t i = 0; i < sd.size(); ++i) {
    if (!(sd[i] > 0.0) || !std::isfinite(sd[i]) || !std::isfinite(mean[i])) {
      throw ValidationError("scaler slot " + std::to_string(i) +
                            " has invalid mean/sd");
    }
  }
}

}  // namespace tcim
