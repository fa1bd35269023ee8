#include "tcim/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace tcim {

Eigen::VectorXd active_vector(const CovariateVector& x, CovariateSet set) {
  const auto active = active_covariates(set);
  Eigen::VectorXd out(static_cast<Eigen::Index>(active.size()));
  for (std::size_t i = 0; i < active.size(); ++i) {
    out[static_cast<Eigen::Index>(i)] = x[active[i]];
  }
  return out;
}

Eigen::MatrixXd covariate_matrix(const OceanSequence& seq, CovariateSet set) {
  const auto active = active_covariates(set);
  Eigen::MatrixXd X(static_cast<Eigen::Index>(seq.length()),
                    static_cast<Eigen::Index>(active.size()));
  for (std::size_t t = 0; t < seq.length(); ++t) {
    for (std::size_t i = 0; i < active.size(); ++i) {
      X(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) =
          seq.covariates[t][active[i]];
    }
  }
  return X;
}

Eigen::VectorXd response_vector(const OceanSequence& seq) {
  return Eigen::Map<const Eigen::VectorXd>(
      seq.responses.data(), static_cast<Eigen::Index>(seq.responses.size()));
}

void pooled_observations(const std::vector<OceanSequence>& sequences,
                         CovariateSet set, Eigen::MatrixXd& X,
                         Eigen::VectorXd& y) {
  std::size_t total = 0;
  for (const auto& seq : sequences) total += seq.length();
  const auto p = static_cast<Eigen::Index>(active_covariates(set).size());
  X.resize(static_cast<Eigen::Index>(total), p);
  y.resize(static_cast<Eigen::Index>(total));
  Eigen::Index row = 0;
  for (const auto& seq : sequences) {
    X.middleRows(row, static_cast<Eigen::Index>(seq.length())) =
        covariate_matrix(seq, set);
    y.segment(row, static_cast<Eigen::Index>(seq.length())) =
        response_vector(seq);
    row += static_cast<Eigen::Index>(seq.length());
  }
}

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

double gaussian_loglik(double y, double mean, double sigma) {
  const double z = (y - mean) / sigma;
  return -0.5 * kLog2Pi - std::log(sigma) - 0.5 * z * z;
}

// Quantile split of |y| into k groups: small changes first, extremes last.
// Mirrors the static / normal / extreme structure so EM starts close.
std::vector<int> quantile_groups(const Eigen::VectorXd& y, int k) {
  std::vector<double> mag(static_cast<std::size_t>(y.size()));
  for (Eigen::Index i = 0; i < y.size(); ++i) mag[static_cast<std::size_t>(i)] = std::abs(y[i]);
  std::vector<double> sorted = mag;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> cuts;
  for (int g = 1; g < k; ++g) {
    cuts.push_back(percentile_linear_sorted(sorted, 100.0 * g / k));
  }
  std::vector<int> group(mag.size());
  for (std::size_t i = 0; i < mag.size(); ++i) {
    int g = 0;
    while (g < k - 1 && mag[i] >= cuts[static_cast<std::size_t>(g)]) ++g;
    group[i] = g;
  }
  return group;
}

struct EmRun {
  bool collapsed = false;
  double loglik = -std::numeric_limits<double>::infinity();
  std::vector<FmrComponent> components;
  int iterations = 0;
  std::vector<double> ll_trace;
};

EmRun run_fmr_em(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                 Eigen::MatrixXd R, const FmrOptions& options) {
  const Eigen::Index n = X.rows();
  const int k = options.k;
  EmRun run;
  run.components.resize(static_cast<std::size_t>(k));

  Eigen::MatrixXd log_density(n, k);
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < options.max_iter; ++iter) {
    // M-step from responsibilities.
    for (int j = 0; j < k; ++j) {
      const Eigen::VectorXd w = R.col(j);
      const double wsum = w.sum();
      if (!(wsum > 0.0)) {
        run.collapsed = true;
        return run;
      }
      auto& comp = run.components[static_cast<std::size_t>(j)];
      comp.weight = wsum / static_cast<double>(n);
      comp.fit = weighted_ols_fit(X, y, w);
      if (comp.fit.sigma < options.sigma_floor) {
        run.collapsed = true;
        return run;
      }
    }

    // E-step; also evaluates the observed-data log-likelihood.
    for (int j = 0; j < k; ++j) {
      const auto& comp = run.components[static_cast<std::size_t>(j)];
      const Eigen::VectorXd mu =
          (X * comp.fit.coefficients).array() + comp.fit.intercept;
      const double logw = std::log(comp.weight);
      for (Eigen::Index i = 0; i < n; ++i) {
        log_density(i, j) = logw + gaussian_loglik(y[i], mu[i], comp.fit.sigma);
      }
    }
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double m = log_density.row(i).maxCoeff();
      double denom = 0.0;
      for (int j = 0; j < k; ++j) denom += std::exp(log_density(i, j) - m);
      const double lse = m + std::log(denom);
      ll += lse;
      for (int j = 0; j < k; ++j) {
        R(i, j) = std::exp(log_density(i, j) - lse);
      }
    }
    run.ll_trace.push_back(ll);
    run.iterations = iter + 1;
    run.loglik = ll;
    if (iter > 0 && ll - prev_ll < options.tol * (1.0 + std::abs(ll))) break;
    prev_ll = ll;
  }
  return run;
}

void canonicalize_components(std::vector<FmrComponent>& components) {
  std::stable_sort(components.begin(), components.end(),
                   [](const FmrComponent& a, const FmrComponent& b) {
                     return a.fit.sigma < b.fit.sigma;
                   });
}

}  // namespace

Eigen::MatrixXd seed_responsibilities(const Eigen::VectorXd& y, int k,
                                      int restart, Rng& rng) {
  const Eigen::Index n = y.size();
  const auto groups = quantile_groups(y, k);
  // First restart starts almost exactly on the quantile split; later ones
  // blend in progressively more noise.
  const double eps = restart == 0 ? 0.05 : 0.10 + 0.85 * rng.uniform();
  Eigen::MatrixXd R(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    double total = 0.0;
    for (int j = 0; j < k; ++j) {
      double w = eps * rng.uniform();
      if (j == groups[static_cast<std::size_t>(i)]) w += 1.0 - eps;
      R(i, j) = w;
      total += w;
    }
    R.row(i) /= total;
  }
  return R;
}

FmrModel fmr_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                 const FmrOptions& options) {
  const Eigen::Index n = X.rows();
  if (options.k < 1) throw ValidationError("fmr_fit: k must be >= 1");
  if (y.size() != n) throw ValidationError("fmr_fit: X/y size mismatch");

  FmrModel model;
  model.k = options.k;
  model.meta.n_obs = static_cast<int>(n);
  model.meta.seed = options.seed;
  model.meta.restarts = options.restarts;

  if (options.k == 1) {
    // Single component: exactly the OLS solution.
    FmrComponent comp;
    comp.weight = 1.0;
    comp.fit = ols_fit(X, y);
    model.components.push_back(comp);
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      ll += gaussian_loglik(
          y[i], comp.fit.intercept + X.row(i).dot(comp.fit.coefficients),
          comp.fit.sigma);
    }
    model.meta.loglik = ll;
    return model;
  }

  if (n < 50 * options.k) {
    throw FitError("fmr_fit: need at least " + std::to_string(50 * options.k) +
                   " observations for k=" + std::to_string(options.k));
  }

  EmRun best;
  bool any = false;
  for (int restart = 0; restart < std::max(1, options.restarts); ++restart) {
    Rng rng(derive_seed(options.seed, "fmr-restart",
                        static_cast<std::uint64_t>(restart)));
    EmRun run = run_fmr_em(
        X, y, seed_responsibilities(y, options.k, restart, rng), options);
    if (run.collapsed) continue;
    if (!any || run.loglik > best.loglik) {
      best = std::move(run);
      any = true;
    }
  }
  if (!any) {
    throw FitError("fmr_fit: every restart collapsed (sigma floor " +
                   format_double(options.sigma_floor) + ")");
  }

  canonicalize_components(best.components);
  model.components = std::move(best.components);
  model.meta.loglik = best.loglik;
  model.meta.iterations = best.iterations;
  model.meta.ll_trace = std::move(best.ll_trace);
  return model;
}

Eigen::VectorXd fmr_posteriors(const FmrModel& model, const Eigen::VectorXd& x,
                               double y) {
  const int k = model.k;
  Eigen::VectorXd logp(k);
  for (int j = 0; j < k; ++j) {
    const auto& comp = model.components[static_cast<std::size_t>(j)];
    logp[j] = std::log(comp.weight) +
              gaussian_loglik(y, comp.fit.predict(x), comp.fit.sigma);
  }
  return softmax(logp);
}

std::vector<int> fmr_optimal_assignment(const FmrModel& model,
                                        const Eigen::MatrixXd& X,
                                        const Eigen::VectorXd& y) {
  std::vector<int> labels(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Eigen::VectorXd post = fmr_posteriors(model, X.row(i), y[i]);
    int arg = 0;
    for (int j = 1; j < model.k; ++j) {
      if (post[j] > post[arg]) arg = j;  // ties stay at the lower index
    }
    labels[static_cast<std::size_t>(i)] = arg;
  }
  return labels;
}

MnlFit fmr_classifier_fit(const Eigen::MatrixXd& X,
                          const std::vector<int>& labels, int k) {
  if (static_cast<Eigen::Index>(labels.size()) != X.rows()) {
    throw ValidationError("fmr_classifier_fit: label count mismatch");
  }
  Eigen::MatrixXd weights = Eigen::MatrixXd::Zero(X.rows(), k);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    if (label < 0 || label >= k) {
      throw ValidationError("fmr_classifier_fit: label out of range");
    }
    weights(i, label) = 1.0;
  }
  return mnl_fit(X, weights);
}

double fmr_sample_dv(const FmrModel& model, const Eigen::VectorXd& x,
                     Rng& rng) {
  int component = 0;
  if (model.k > 1) {
    const Eigen::VectorXd probs = mnl_probs(model.classifier, x);
    component = rng.categorical(
        std::span<const double>(probs.data(), static_cast<std::size_t>(probs.size())));
  }
  const auto& comp = model.components[static_cast<std::size_t>(component)];
  return rng.normal(comp.fit.predict(x), comp.fit.sigma);
}

FmrModel fit_fmr_model(const Dataset& dataset, CovariateSet set,
                       const FmrOptions& options) {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  pooled_observations(dataset.sequences, set, X, y);
  FmrModel model = fmr_fit(X, y, options);
  model.covariate_set = set;
  model.scaler = dataset.scaler;
  model.meta.n_sequences = static_cast<int>(dataset.sequences.size());
  if (model.k > 1) {
    const auto labels = fmr_optimal_assignment(model, X, y);
    model.classifier = fmr_classifier_fit(X, labels, model.k);
  }
  return model;
}

OlsModel fit_ols_model(const Dataset& dataset, CovariateSet set) {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  pooled_observations(dataset.sequences, set, X, y);
  std::vector<std::string> names;
  for (int idx : active_covariates(set)) {
    names.emplace_back(kCovariateNames[static_cast<std::size_t>(idx)]);
  }
  OlsModel model;
  model.covariate_set = set;
  model.fit = ols_fit(X, y, names);
  model.scaler = dataset.scaler;
  model.meta.n_obs = static_cast<int>(X.rows());
  model.meta.n_sequences = static_cast<int>(dataset.sequences.size());
  double ll = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double mu = model.fit.predict(X.row(i));
    const double z = (y[i] - mu) / model.fit.sigma;
    ll += -0.5 * kLog2Pi - std::log(model.fit.sigma) - 0.5 * z * z;
  }
  model.meta.loglik = ll;
  return model;
}

}  // namespace tcim
