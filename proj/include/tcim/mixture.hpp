#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "tcim/domain.hpp"
#include "tcim/ingest.hpp"
#include "tcim/rng.hpp"
#include "tcim/stats.hpp"

namespace tcim {

// Shared fit bookkeeping carried in every model file.
struct FitMeta {
  double loglik = 0.0;
  int n_obs = 0;
  int n_sequences = 0;
  std::uint64_t seed = 0;
  int iterations = 0;
  int restarts = 0;
  std::vector<double> ll_trace;  // per-iteration total log-likelihood (best run)
};

// --- design assembly --------------------------------------------------------

// Active-covariate row vector for one standardized covariate vector.
Eigen::VectorXd active_vector(const CovariateVector& x, CovariateSet set);

Eigen::MatrixXd covariate_matrix(const OceanSequence& seq, CovariateSet set);
Eigen::VectorXd response_vector(const OceanSequence& seq);

// Pooled observations across sequences (row-concatenated in sequence order).
void pooled_observations(const std::vector<OceanSequence>& sequences,
                         CovariateSet set, Eigen::MatrixXd& X,
                         Eigen::VectorXd& y);

// --- finite mixture regression ----------------------------------------------

struct FmrComponent {
  double weight = 0.0;
  LinearFit fit;
};

// Mixture of Gaussian linear regressions plus the multinomial-logistic
// classification model used for simulation. Components are kept in
// sigma-ascending order (static, normal, extreme); the classifier baseline
// is the last component.
struct FmrModel {
  int k = 3;
  CovariateSet covariate_set = CovariateSet::Full;
  std::vector<FmrComponent> components;
  MnlFit classifier;
  Scaler scaler;
  FitMeta meta;
};

struct FmrOptions {
  int k = 3;
  int restarts = 10;
  double tol = 1e-8;  // relative log-likelihood gain
  int max_iter = 1000;
  double sigma_floor = 1e-4;  // standardized units; collapse triggers restart
  std::uint64_t seed = 0;
};

// EM over standardized observations; best of `restarts` seeded restarts.
// k == 1 reduces exactly to ols_fit. The classifier is NOT fitted here
// (see fmr_classifier_fit / fit_fmr_model). Throws FitError when every
// restart collapses.
FmrModel fmr_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                 const FmrOptions& options);

// Initial EM responsibilities: quantile split of |y| (small / moderate /
// extreme) softened with restart-dependent jitter. Shared by the mixture and
// hidden-Markov fits.
Eigen::MatrixXd seed_responsibilities(const Eigen::VectorXd& y, int k,
                                      int restart, Rng& rng);

// Responsibilities r_j proportional to w_j N(y; mu_j(x), sigma_j).
Eigen::VectorXd fmr_posteriors(const FmrModel& model, const Eigen::VectorXd& x,
                               double y);

// Argmax posteriors; ties break toward the lower component index.
std::vector<int> fmr_optimal_assignment(const FmrModel& model,
                                        const Eigen::MatrixXd& X,
                                        const Eigen::VectorXd& y);

// Multinomial logistic fit on hard labels (one-hot weights), baseline = last
// component.
MnlFit fmr_classifier_fit(const Eigen::MatrixXd& X,
                          const std::vector<int>& labels, int k);

// Draw a standardized dv: categorical component from the classifier, then
// the component Gaussian.
double fmr_sample_dv(const FmrModel& model, const Eigen::VectorXd& x, Rng& rng);

// Full pipeline over a dataset: fmr_fit + optimal assignment + classifier.
FmrModel fit_fmr_model(const Dataset& dataset, CovariateSet set,
                       const FmrOptions& options);

// OLS counterpart of the pipeline (shared here since it reuses the pooled
// design assembly).
struct OlsModel {
  CovariateSet covariate_set = CovariateSet::Full;
  LinearFit fit;
  Scaler scaler;
  FitMeta meta;
};

OlsModel fit_ols_model(const Dataset& dataset, CovariateSet set);

}  // namespace tcim
