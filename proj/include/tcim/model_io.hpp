#pragma once

#include <optional>
#include <string>

#include "json.hpp"
#include "tcim/hmm.hpp"
#include "tcim/landdecay.hpp"
#include "tcim/mixture.hpp"

namespace tcim {

inline constexpr int kModelSchemaVersion = 1;

enum class ModelChoice { Ols, Fmr, Mehim };
const char* model_choice_name(ModelChoice choice);
ModelChoice model_choice_from_name(const std::string& name);

nlohmann::json ols_to_json(const OlsModel& model);
nlohmann::json fmr_to_json(const FmrModel& model);
nlohmann::json mehim_to_json(const MehimModel& model);
nlohmann::json land_to_json(const LandModel& model);

OlsModel ols_from_json(const nlohmann::json& j);
FmrModel fmr_from_json(const nlohmann::json& j);
MehimModel mehim_from_json(const nlohmann::json& j);
LandModel land_from_json(const nlohmann::json& j);

// FNV-1a over the canonical (sorted-key) serialization.
std::string model_hash(const nlohmann::json& j);

// A loaded over-ocean model of any of the three kinds.
struct ModelBundle {
  ModelChoice choice = ModelChoice::Ols;
  std::optional<OlsModel> ols;
  std::optional<FmrModel> fmr;
  std::optional<MehimModel> mehim;
  std::string hash;

  const Scaler& scaler() const;
  CovariateSet covariate_set() const;
  int k() const;
};

ModelBundle bundle_from_json(const nlohmann::json& j);
nlohmann::json bundle_to_json(const ModelBundle& bundle);

void save_json(const std::string& path, const nlohmann::json& j);
nlohmann::json load_json(const std::string& path);

ModelBundle load_ocean_model(const std::string& path);
LandModel load_land_model(const std::string& path);

// Human-readable coefficient tables for fit reports.
std::string format_ols_report(const OlsModel& model);
std::string format_fmr_report(const FmrModel& model);
std::string format_mehim_report(const MehimModel& model);
std::string format_land_report(const LandModel& model);

}  // namespace tcim
