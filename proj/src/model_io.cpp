#include "tcim/model_io.hpp"

#include <cinttypes>
#include <cstdio>
#include <sstream>

namespace tcim {

namespace {

using nlohmann::json;

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

json linear_fit_to_json(const LinearFit& fit) {
  return {{"intercept", fit.intercept},
          {"coefficients", vector_to_json(fit.coefficients)},
          {"sigma", fit.sigma}};
}

LinearFit linear_fit_from_json(const json& j) {
  LinearFit fit;
  fit.intercept = j.at("intercept").get<double>();
  fit.coefficients = vector_from_json(j.at("coefficients"));
  fit.sigma = j.at("sigma").get<double>();
  return fit;
}

json mnl_to_json(const MnlFit& fit) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < fit.params.rows(); ++r) {
    rows.push_back(vector_to_json(fit.params.row(r).transpose()));
  }
  return {{"k", fit.k}, {"p", fit.p}, {"ridged", fit.ridged}, {"rows", rows}};
}

MnlFit mnl_from_json(const json& j) {
  MnlFit fit;
  fit.k = j.at("k").get<int>();
  fit.p = j.at("p").get<int>();
  fit.ridged = j.value("ridged", false);
  const auto& rows = j.at("rows");
  fit.params.resize(static_cast<Eigen::Index>(rows.size()), fit.p + 1);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    fit.params.row(static_cast<Eigen::Index>(r)) =
        vector_from_json(rows[r]).transpose();
  }
  if (fit.params.rows() != fit.k - 1) {
    throw ValidationError("model file: logistic block row count mismatch");
  }
  return fit;
}

json scaler_to_json(const Scaler& scaler) {
  json mean = json::array();
  json sd = json::array();
  for (std::size_t i = 0; i < scaler.mean.size(); ++i) {
    mean.push_back(scaler.mean[i]);
    sd.push_back(scaler.sd[i]);
  }
  return {{"mean", mean}, {"sd", sd}};
}

Scaler scaler_from_json(const json& j) {
  Scaler scaler;
  const auto& mean = j.at("mean");
  const auto& sd = j.at("sd");
  if (mean.size() != scaler.mean.size() || sd.size() != scaler.sd.size()) {
    throw ValidationError("model file: scaler slot count mismatch");
  }
  for (std::size_t i = 0; i < scaler.mean.size(); ++i) {
    scaler.mean[i] = mean[i].get<double>();
    scaler.sd[i] = sd[i].get<double>();
  }
  scaler.validate();
  return scaler;
}

json meta_to_json(const FitMeta& meta) {
  return {{"loglik", meta.loglik},
          {"n_obs", meta.n_obs},
          {"n_sequences", meta.n_sequences},
          {"seed", meta.seed},
          {"iterations", meta.iterations},
          {"restarts", meta.restarts}};
}

FitMeta meta_from_json(const json& j) {
  FitMeta meta;
  meta.loglik = j.value("loglik", 0.0);
  meta.n_obs = j.value("n_obs", 0);
  meta.n_sequences = j.value("n_sequences", 0);
  meta.seed = j.value("seed", std::uint64_t{0});
  meta.iterations = j.value("iterations", 0);
  meta.restarts = j.value("restarts", 0);
  return meta;
}

json covariate_order_json(CovariateSet set) {
  json order = json::array();
  for (int idx : active_covariates(set)) {
    order.push_back(kCovariateNames[static_cast<std::size_t>(idx)]);
  }
  return order;
}

void check_header(const json& j, const char* expected_type) {
  const int version = j.value("schema_version", -1);
  if (version != kModelSchemaVersion) {
    throw ValidationError("model file: unsupported schema_version " +
                          std::to_string(version));
  }
  const std::string type = j.value("model_type", "");
  if (type != expected_type) {
    throw ValidationError("model file: expected model_type '" +
                          std::string(expected_type) + "', found '" + type +
                          "'");
  }
}

}  // namespace

const char* model_choice_name(ModelChoice choice) {
  switch (choice) {
    case ModelChoice::Ols: return "ols";
    case ModelChoice::Fmr: return "fmr";
    case ModelChoice::Mehim: return "mehim";
  }
  return "ols";
}

ModelChoice model_choice_from_name(const std::string& name) {
  if (name == "ols") return ModelChoice::Ols;
  if (name == "fmr") return ModelChoice::Fmr;
  if (name == "mehim") return ModelChoice::Mehim;
  throw ValidationError("unknown model type '" + name + "'");
}

json ols_to_json(const OlsModel& model) {
  json j;
  j["schema_version"] = kModelSchemaVersion;
  j["model_type"] = "ols";
  j["covariate_set"] = covariate_set_name(model.covariate_set);
  j["covariate_order"] = covariate_order_json(model.covariate_set);
  j["scaler"] = scaler_to_json(model.scaler);
  j["fit"] = linear_fit_to_json(model.fit);
  j["metadata"] = meta_to_json(model.meta);
  return j;
}

OlsModel ols_from_json(const json& j) {
  check_header(j, "ols");
  OlsModel model;
  model.covariate_set =
      covariate_set_from_name(j.at("covariate_set").get<std::string>());
  model.scaler = scaler_from_json(j.at("scaler"));
  model.fit = linear_fit_from_json(j.at("fit"));
  model.meta = meta_from_json(j.value("metadata", json::object()));
  return model;
}

json fmr_to_json(const FmrModel& model) {
  json j;
  j["schema_version"] = kModelSchemaVersion;
  j["model_type"] = "fmr";
  j["k"] = model.k;
  j["covariate_set"] = covariate_set_name(model.covariate_set);
  j["covariate_order"] = covariate_order_json(model.covariate_set);
  j["scaler"] = scaler_to_json(model.scaler);
  json components = json::array();
  for (const auto& comp : model.components) {
    json c = linear_fit_to_json(comp.fit);
    c["weight"] = comp.weight;
    components.push_back(c);
  }
  j["components"] = components;
  j["classifier"] = mnl_to_json(model.classifier);
  j["metadata"] = meta_to_json(model.meta);
  return j;
}

FmrModel fmr_from_json(const json& j) {
  check_header(j, "fmr");
  FmrModel model;
  model.k = j.at("k").get<int>();
  model.covariate_set =
      covariate_set_from_name(j.at("covariate_set").get<std::string>());
  model.scaler = scaler_from_json(j.at("scaler"));
  for (const auto& c : j.at("components")) {
    FmrComponent comp;
    comp.fit = linear_fit_from_json(c);
    comp.weight = c.at("weight").get<double>();
    model.components.push_back(std::move(comp));
  }
  if (static_cast<int>(model.components.size()) != model.k) {
    throw ValidationError("model file: component count != k");
  }
  model.classifier = mnl_from_json(j.at("classifier"));
  model.meta = meta_from_json(j.value("metadata", json::object()));
  return model;
}

json mehim_to_json(const MehimModel& model) {
  json j;
  j["schema_version"] = kModelSchemaVersion;
  j["model_type"] = "mehim";
  j["k"] = model.k;
  j["covariate_set"] = covariate_set_name(model.covariate_set);
  j["covariate_order"] = covariate_order_json(model.covariate_set);
  j["initial_covariates"] = {"mpi", "shr", "rh"};
  j["scaler"] = scaler_to_json(model.scaler);
  json emissions = json::array();
  for (const auto& em : model.emissions) {
    emissions.push_back(linear_fit_to_json(em));
  }
  j["emissions"] = emissions;
  json blocks = json::array();
  for (const auto& block : model.transitions) blocks.push_back(mnl_to_json(block));
  j["transition_blocks"] = blocks;
  j["initial_block"] = mnl_to_json(model.initial);
  j["metadata"] = meta_to_json(model.meta);
  return j;
}

MehimModel mehim_from_json(const json& j) {
  check_header(j, "mehim");
  MehimModel model;
  model.k = j.at("k").get<int>();
  model.covariate_set =
      covariate_set_from_name(j.at("covariate_set").get<std::string>());
  model.scaler = scaler_from_json(j.at("scaler"));
  for (const auto& em : j.at("emissions")) {
    model.emissions.push_back(linear_fit_from_json(em));
  }
  for (const auto& block : j.at("transition_blocks")) {
    model.transitions.push_back(mnl_from_json(block));
  }
  model.initial = mnl_from_json(j.at("initial_block"));
  if (static_cast<int>(model.emissions.size()) != model.k ||
      static_cast<int>(model.transitions.size()) != model.k) {
    throw ValidationError("model file: emission/transition count != k");
  }
  model.meta = meta_from_json(j.value("metadata", json::object()));
  return model;
}

json land_to_json(const LandModel& model) {
  json j;
  j["schema_version"] = kModelSchemaVersion;
  j["model_type"] = "land";
  j["alpha_per_6h"] = model.alpha;
  j["v_b_kt"] = model.v_b;
  j["metadata"] = {{"n_segments", model.n_segments},
                   {"identifiable", model.identifiable}};
  return j;
}

LandModel land_from_json(const json& j) {
  check_header(j, "land");
  LandModel model;
  model.alpha = j.at("alpha_per_6h").get<double>();
  model.v_b = j.at("v_b_kt").get<double>();
  model.n_segments = j.at("metadata").value("n_segments", 0);
  model.identifiable = j.at("metadata").value("identifiable", true);
  if (!(model.alpha > 0.0) || model.v_b < 0.0) {
    throw ValidationError("land model: alpha must be > 0 and v_b >= 0");
  }
  return model;
}

std::string model_hash(const json& j) {
  return to_hex(fnv1a64(j.dump()));
}

const Scaler& ModelBundle::scaler() const {
  switch (choice) {
    case ModelChoice::Ols: return ols->scaler;
    case ModelChoice::Fmr: return fmr->scaler;
    case ModelChoice::Mehim: return mehim->scaler;
  }
  return ols->scaler;
}

CovariateSet ModelBundle::covariate_set() const {
  switch (choice) {
    case ModelChoice::Ols: return ols->covariate_set;
    case ModelChoice::Fmr: return fmr->covariate_set;
    case ModelChoice::Mehim: return mehim->covariate_set;
  }
  return CovariateSet::Full;
}

int ModelBundle::k() const {
  switch (choice) {
    case ModelChoice::Ols: return 1;
    case ModelChoice::Fmr: return fmr->k;
    case ModelChoice::Mehim: return mehim->k;
  }
  return 1;
}

ModelBundle bundle_from_json(const json& j) {
  ModelBundle bundle;
  const std::string type = j.value("model_type", "");
  bundle.choice = model_choice_from_name(type);
  switch (bundle.choice) {
    case ModelChoice::Ols: bundle.ols = ols_from_json(j); break;
    case ModelChoice::Fmr: bundle.fmr = fmr_from_json(j); break;
    case ModelChoice::Mehim: bundle.mehim = mehim_from_json(j); break;
  }
  bundle.hash = model_hash(j);
  return bundle;
}

json bundle_to_json(const ModelBundle& bundle) {
  switch (bundle.choice) {
    case ModelChoice::Ols: return ols_to_json(*bundle.ols);
    case ModelChoice::Fmr: return fmr_to_json(*bundle.fmr);
    case ModelChoice::Mehim: return mehim_to_json(*bundle.mehim);
  }
  throw ValidationError("bundle_to_json: empty bundle");
}

void save_json(const std::string& path, const json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

json load_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError("JSON parse error in '" + path + "': " + e.what());
  }
}

ModelBundle load_ocean_model(const std::string& path) {
  return bundle_from_json(load_json(path));
}

LandModel load_land_model(const std::string& path) {
  return land_from_json(load_json(path));
}

namespace {

void append_coefficient_row(std::ostringstream& out, const std::string& label,
                            double intercept, const Eigen::VectorXd& coefs,
                            double sigma, bool with_sigma) {
  out << label;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%10.3f", intercept);
  out << buf;
  for (Eigen::Index i = 0; i < coefs.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%10.3f", coefs[i]);
    out << buf;
  }
  if (with_sigma) {
    std::snprintf(buf, sizeof(buf), "%10.3f", sigma);
    out << buf;
  }
  out << '\n';
}

std::string header_row(const std::string& label, CovariateSet set,
                       bool with_sigma) {
  std::ostringstream out;
  out << label;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%10s", "Intercept");
  out << buf;
  for (int idx : active_covariates(set)) {
    std::snprintf(buf, sizeof(buf), "%10s",
                  kCovariateNames[static_cast<std::size_t>(idx)]);
    out << buf;
  }
  if (with_sigma) {
    std::snprintf(buf, sizeof(buf), "%10s", "sigma");
    out << buf;
  }
  out << '\n';
  return out.str();
}

std::string meta_lines(const FitMeta& meta) {
  std::ostringstream out;
  out << "log-likelihood: " << format_double(meta.loglik)
      << "\nobservations:   " << meta.n_obs << "\nsequences:      "
      << meta.n_sequences << "\niterations:     " << meta.iterations
      << "\nrestarts:       " << meta.restarts << "\nseed:           "
      << meta.seed << '\n';
  return out.str();
}

std::string pad_label(const std::string& label) {
  std::string out = label;
  while (out.size() < 12) out.push_back(' ');
  return out;
}

}  // namespace

std::string format_ols_report(const OlsModel& model) {
  std::ostringstream out;
  out << "Linear (OLS) intensity-change model, standardized units\n\n";
  out << header_row(pad_label(""), model.covariate_set, true);
  append_coefficient_row(out, pad_label(""), model.fit.intercept,
                         model.fit.coefficients, model.fit.sigma, true);
  out << '\n' << meta_lines(model.meta);
  return out.str();
}

std::string format_fmr_report(const FmrModel& model) {
  std::ostringstream out;
  out << "Finite mixture regression (k=" << model.k
      << "), standardized units\n\nResponse components (weight | "
         "coefficients):\n";
  out << header_row(pad_label(""), model.covariate_set, true);
  for (int j = 0; j < model.k; ++j) {
    const auto& comp = model.components[static_cast<std::size_t>(j)];
    std::ostringstream label;
    label << "Group " << j + 1 << " w=";
    char wbuf[16];
    std::snprintf(wbuf, sizeof(wbuf), "%.3f", comp.weight);
    label << wbuf;
    append_coefficient_row(out, pad_label(label.str()), comp.fit.intercept,
                           comp.fit.coefficients, comp.fit.sigma, true);
  }
  out << "\nClassification model (baseline: Group " << model.k << "):\n";
  out << header_row(pad_label(""), model.covariate_set, false);
  for (Eigen::Index r = 0; r < model.classifier.params.rows(); ++r) {
    append_coefficient_row(
        out, pad_label("Group " + std::to_string(r + 1)),
        model.classifier.params(r, 0),
        model.classifier.params.row(r).tail(model.classifier.p).transpose(),
        0.0, false);
  }
  if (model.classifier.ridged) {
    out << "(classifier used ridge fallback 1e-6 due to separation)\n";
  }
  out << '\n' << meta_lines(model.meta);
  return out.str();
}

std::string format_mehim_report(const MehimModel& model) {
  std::ostringstream out;
  out << "Markov environment-dependent intensity model (k=" << model.k
      << "), standardized units\n\nResponse model:\n";
  out << header_row(pad_label(""), model.covariate_set, true);
  for (int i = 0; i < model.k; ++i) {
    const auto& em = model.emissions[static_cast<std::size_t>(i)];
    append_coefficient_row(out, pad_label("State " + std::to_string(i + 1)),
                           em.intercept, em.coefficients, em.sigma, true);
  }
  out << "\nTransition model (baseline: to State " << model.k << "):\n";
  for (int i = 0; i < model.k; ++i) {
    out << "From State " << i + 1 << ":\n";
    out << header_row(pad_label(""), model.covariate_set, false);
    const auto& block = model.transitions[static_cast<std::size_t>(i)];
    for (Eigen::Index r = 0; r < block.params.rows(); ++r) {
      append_coefficient_row(
          out, pad_label("  to " + std::to_string(r + 1)), block.params(r, 0),
          block.params.row(r).tail(block.p).transpose(), 0.0, false);
    }
  }
  out << "\nInitial-state model (covariates mpi, shr, rh; baseline: State "
      << model.k << "):\n";
  for (Eigen::Index r = 0; r < model.initial.params.rows(); ++r) {
    append_coefficient_row(
        out, pad_label("State " + std::to_string(r + 1)),
        model.initial.params(r, 0),
        model.initial.params.row(r).tail(model.initial.p).transpose(), 0.0,
        false);
  }
  out << '\n' << meta_lines(model.meta);
  return out.str();
}

std::string format_land_report(const LandModel& model) {
  std::ostringstream out;
  out << "Over-land exponential decay model\n\n"
      << "decay rate alpha: " << format_double(model.alpha)
      << " per 6 h\nbackground wind v_b: " << format_double(model.v_b)
      << " kt\nsegments: " << model.n_segments << '\n';
  if (!model.identifiable) {
    out << "warning: decay rate weakly identified (flat segments)\n";
  }
  return out.str();
}

}  // namespace tcim
