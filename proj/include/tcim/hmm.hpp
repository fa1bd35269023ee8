#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "tcim/domain.hpp"
#include "tcim/mixture.hpp"
#include "tcim/rng.hpp"
#include "tcim/stats.hpp"

namespace tcim {

// Covariates of the initial-state model: environment at the storm's first
// point (standardized MPI, SHR, RH).
inline constexpr std::array<int, 3> kInitialCovariates = {kMpi, kShr, kRh};

// Dependent hidden Markov model: Gaussian regression emissions per state,
// per-origin-state multinomial-logistic transitions, and a multinomial-
// logistic initial-state block. States are kept in emission-sigma-ascending
// order (static, moderate, extreme); every logistic block's baseline is the
// last state.
struct MehimModel {
  int k = 3;
  CovariateSet covariate_set = CovariateSet::Full;
  std::vector<LinearFit> emissions;  // k entries
  std::vector<MnlFit> transitions;   // k origin blocks over active covariates
  MnlFit initial;                    // over kInitialCovariates
  Scaler scaler;
  FitMeta meta;
};

// Per-step state indices (0-based internally; serialized 1-based).
using StatePath = std::vector<int>;

// Numeric view of a sequence under a covariate set.
struct SeqView {
  Eigen::MatrixXd X;       // T x p active covariates
  Eigen::VectorXd y;       // T responses
  Eigen::VectorXd x_init;  // initial-state covariates (3)
};

SeqView make_seq_view(const OceanSequence& seq, CovariateSet set);

// Next-state simplex from an origin state given covariates.
Eigen::VectorXd transition_probs(const MehimModel& model, int from_state,
                                 const Eigen::VectorXd& x);

Eigen::VectorXd initial_probs(const MehimModel& model,
                              const Eigen::VectorXd& x_init);

double emission_loglik(const MehimModel& model, int state,
                       const Eigen::VectorXd& x, double y);
double emission_sample(const MehimModel& model, int state,
                       const Eigen::VectorXd& x, Rng& rng);

// Log of the sequence likelihood by the forward recursion in log space.
double sequence_loglik(const MehimModel& model, const SeqView& seq);
double sequence_loglik(const MehimModel& model, const OceanSequence& seq);
double total_loglik(const MehimModel& model,
                    const std::vector<OceanSequence>& sequences);

struct ForwardBackward {
  double loglik = 0.0;
  Eigen::MatrixXd gamma;             // T x k smoothed state marginals
  std::vector<Eigen::MatrixXd> xi;   // T-1 pairwise marginals (k x k)
};

ForwardBackward forward_backward(const MehimModel& model, const SeqView& seq);

struct MehimOptions {
  int k = 3;
  int restarts = 10;
  double tol = 1e-8;  // relative total log-likelihood gain
  int max_iter = 500;
  double sigma_floor = 1e-4;
  std::uint64_t seed = 0;
  // Optional warm initialization from an FMR fit's posteriors.
  const FmrModel* init_from = nullptr;
};

// Baum-Welch over all sequences (generalized EM: logistic M-steps are
// concave Newton fits). k == 1 degenerates to the OLS solution. Scaler and
// n_sequences metadata are filled by the caller or fit_mehim_model.
MehimModel mehim_fit(const std::vector<OceanSequence>& sequences,
                     CovariateSet set, const MehimOptions& options);

MehimModel fit_mehim_model(const Dataset& dataset, CovariateSet set,
                           const MehimOptions& options);

// Most probable state path; ties break toward the lower state index.
StatePath viterbi(const MehimModel& model, const OceanSequence& seq);
std::pair<StatePath, double> viterbi_with_score(const MehimModel& model,
                                                const SeqView& seq);

// Joint log-probability of a specific path (initial + transitions +
// emissions); used by decoding checks.
double path_joint_loglik(const MehimModel& model, const SeqView& seq,
                         const StatePath& path);

// Reorders states by emission sigma ascending, permuting every block
// consistently. Leaves all likelihoods unchanged. Exposed for tests.
void canonicalize_states(MehimModel& model);

}  // namespace tcim
