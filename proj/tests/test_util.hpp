#pragma once

// Shared fixtures and independent oracles for the test suites. Everything
// here deliberately avoids the library's forward/Viterbi code paths so it
// can serve as a cross-check.

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "tcim/domain.hpp"
#include "tcim/hmm.hpp"
#include "tcim/rng.hpp"

namespace tcim::testutil {

// Paper-reported coefficient tables, used as generating parameters for
// recovery oracles. Order: intercept, dv_p, v, mpi, shr, rh, ocn, sigma.
inline const double kOlsRow[8] = {-0.000, 0.452, -0.142, 0.083,
                                  -0.054, 0.042, 0.032,  0.860};

inline const double kFmrWeights[3] = {0.296, 0.635, 0.069};
inline const double kFmrRows[3][8] = {
    {-0.080, 0.008, 0.003, 0.008, -0.004, -0.008, 0.012, 0.098},
    {0.100, 0.667, -0.134, 0.116, -0.063, 0.063, 0.055, 0.715},
    {0.228, 0.215, -0.861, -0.133, -0.646, 0.153, 0.234, 2.029}};

inline const double kMehimEmissionRows[3][8] = {
    {-0.077, 0.010, 0.004, 0.008, 0.000, -0.007, 0.014, 0.097},
    {0.072, 0.593, -0.143, 0.105, -0.044, 0.069, 0.039, 0.722},
    {0.269, 0.357, -0.483, 0.370, -0.619, -0.023, 0.252, 1.979}};

// Transition blocks: [origin][destination][intercept + 6 coefficients];
// destination 3 is the baseline (zeros).
inline const double kMehimTransitions[3][2][7] = {
    {{4.663, -0.103, -1.233, -2.713, -0.806, 0.022, -0.670},
     {4.553, 0.047, -1.279, -2.939, -0.830, 0.183, -0.807}},
    {{1.991, -0.642, -2.180, -1.053, -0.210, 0.058, -0.298},
     {3.561, -0.661, -1.116, -1.245, -0.242, 0.339, -0.007}},
    {{-1.013, -0.194, 0.043, 0.705, 0.194, -0.904, -0.870},
     {0.267, -0.020, -0.503, 0.506, 0.914, -0.580, -1.513}}};

inline LinearFit linear_fit_from_row(const double* row, int p = 6) {
  LinearFit fit;
  fit.intercept = row[0];
  fit.coefficients = Eigen::Map<const Eigen::VectorXd>(row + 1, p);
  fit.sigma = row[p + 1];
  return fit;
}

inline MnlFit mnl_from_rows(const double* const* rows, int k, int p) {
  MnlFit fit;
  fit.k = k;
  fit.p = p;
  fit.params.resize(k - 1, p + 1);
  for (int r = 0; r + 1 < k; ++r) {
    fit.params.row(r) = Eigen::Map<const Eigen::VectorXd>(rows[r], p + 1);
  }
  return fit;
}

// The MeHiM with the reported coefficient tables (identity scaler; the
// tables live in standardized units).
inline MehimModel table_mehim_model() {
  MehimModel model;
  model.k = 3;
  model.covariate_set = CovariateSet::Full;
  for (int i = 0; i < 3; ++i) {
    model.emissions.push_back(linear_fit_from_row(kMehimEmissionRows[i]));
  }
  for (int i = 0; i < 3; ++i) {
    const double* rows[2] = {kMehimTransitions[i][0], kMehimTransitions[i][1]};
    model.transitions.push_back(mnl_from_rows(rows, 3, 6));
  }
  // A mild initial-state block (not reported in the tables).
  MnlFit init;
  init.k = 3;
  init.p = 3;
  init.params.resize(2, 4);
  init.params << 1.2, 0.3, -0.2, 0.1, 1.8, -0.1, 0.2, 0.3;
  model.initial = init;
  return model;
}

// Random dense model with well-separated sigmas (for oracle property tests).
inline MehimModel random_mehim_model(int k, std::uint64_t seed) {
  Rng rng(seed);
  MehimModel model;
  model.k = k;
  model.covariate_set = CovariateSet::Full;
  for (int i = 0; i < k; ++i) {
    LinearFit em;
    em.intercept = rng.normal(0.0, 0.5);
    em.coefficients = Eigen::VectorXd::NullaryExpr(
        6, [&](Eigen::Index) { return rng.normal(0.0, 0.4); });
    em.sigma = 0.2 + rng.uniform() * (0.5 + i);
    model.emissions.push_back(em);
  }
  for (int i = 0; i < k; ++i) {
    MnlFit block;
    block.k = k;
    block.p = 6;
    block.params = Eigen::MatrixXd::NullaryExpr(
        k - 1, 7, [&](Eigen::Index, Eigen::Index) { return rng.normal(0.0, 0.8); });
    model.transitions.push_back(block);
  }
  MnlFit init;
  init.k = k;
  init.p = 3;
  init.params = Eigen::MatrixXd::NullaryExpr(
      k - 1, 4, [&](Eigen::Index, Eigen::Index) { return rng.normal(0.0, 0.8); });
  model.initial = init;
  return model;
}

// Random standardized sequence, responses generated FROM the model's own
// process so likelihoods stay in a sane range.
inline OceanSequence random_sequence(const MehimModel& model, int T,
                                     std::uint64_t seed) {
  Rng rng(seed);
  OceanSequence seq;
  seq.storm_id = "TEST";
  seq.start_index = 0;
  Eigen::VectorXd x_init(3);
  int state = 0;
  for (int t = 0; t < T; ++t) {
    CovariateVector cov;
    cov.standardized = true;
    for (int i = 0; i < kNumCovariates; ++i) cov[i] = rng.normal(0.0, 1.0);
    const Eigen::VectorXd x = active_vector(cov, model.covariate_set);
    if (t == 0) {
      for (std::size_t i = 0; i < kInitialCovariates.size(); ++i) {
        x_init[static_cast<Eigen::Index>(i)] = cov[kInitialCovariates[i]];
      }
      const Eigen::VectorXd p0 = initial_probs(model, x_init);
      state = rng.categorical(
          std::span<const double>(p0.data(), static_cast<std::size_t>(p0.size())));
    } else {
      const Eigen::VectorXd probs = transition_probs(model, state, x);
      state = rng.categorical(std::span<const double>(
          probs.data(), static_cast<std::size_t>(probs.size())));
    }
    seq.covariates.push_back(cov);
    seq.responses.push_back(emission_sample(model, state, x, rng));
  }
  return seq;
}

// Exhaustive path-sum likelihood: sums the joint probability over all k^T
// state paths using only the public per-step probabilities.
inline double brute_force_loglik(const MehimModel& model,
                                 const OceanSequence& seq) {
  const SeqView view = make_seq_view(seq, model.covariate_set);
  const int T = static_cast<int>(seq.length());
  const int k = model.k;
  long total_paths = 1;
  for (int t = 0; t < T; ++t) total_paths *= k;

  double max_lp = -std::numeric_limits<double>::infinity();
  std::vector<double> lps;
  lps.reserve(static_cast<std::size_t>(total_paths));
  std::vector<int> path(static_cast<std::size_t>(T));
  for (long code = 0; code < total_paths; ++code) {
    long c = code;
    for (int t = 0; t < T; ++t) {
      path[static_cast<std::size_t>(t)] = static_cast<int>(c % k);
      c /= k;
    }
    const double lp = path_joint_loglik(model, view, path);
    lps.push_back(lp);
    max_lp = std::max(max_lp, lp);
  }
  double sum = 0.0;
  for (double lp : lps) sum += std::exp(lp - max_lp);
  return max_lp + std::log(sum);
}

// Exhaustive argmax path; ties resolved toward the lexicographically
// smallest path, matching the documented Viterbi tie-break.
inline std::pair<StatePath, double> brute_force_viterbi(
    const MehimModel& model, const OceanSequence& seq) {
  const SeqView view = make_seq_view(seq, model.covariate_set);
  const int T = static_cast<int>(seq.length());
  const int k = model.k;
  long total_paths = 1;
  for (int t = 0; t < T; ++t) total_paths *= k;

  StatePath best;
  double best_lp = -std::numeric_limits<double>::infinity();
  std::vector<int> path(static_cast<std::size_t>(T));
  for (long code = 0; code < total_paths; ++code) {
    long c = code;
    // Decode so that earlier timesteps vary slowest: enumeration order is
    // lexicographic in the path, and strict improvement keeps the first
    // (smallest) optimum.
    for (int t = T - 1; t >= 0; --t) {
      path[static_cast<std::size_t>(t)] = static_cast<int>(c % k);
      c /= k;
    }
    const double lp = path_joint_loglik(model, view, path);
    if (lp > best_lp) {
      best_lp = lp;
      best = path;
    }
  }
  return {best, best_lp};
}

}  // namespace tcim::testutil
