#include "tcim/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace tcim {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double gaussian_loglik(double y, double mean, double sigma) {
  const double z = (y - mean) / sigma;
  return -0.5 * kLog2Pi - std::log(sigma) - 0.5 * z * z;
}

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (m == kNegInf) return kNegInf;
  return m + std::log((v.array() - m).exp().sum());
}

Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits) {
  return logits.array() - log_sum_exp(logits);
}

// Per-sequence tables under a fixed model. log_tr[t] holds the transition
// log-probabilities into position t+1, evaluated at that position's
// covariates (the convention the likelihood pins: the transition into a step
// shares the step's covariates with its emission).
struct SeqTables {
  Eigen::MatrixXd emis;                // T x k
  Eigen::VectorXd log_init;            // k
  std::vector<Eigen::MatrixXd> log_tr; // T-1 of k x k (rows: origin)
};

SeqTables build_tables(const MehimModel& model, const SeqView& seq) {
  const auto T = seq.y.size();
  const int k = model.k;
  SeqTables tab;
  tab.emis.resize(T, k);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (int i = 0; i < k; ++i) {
      const auto& em = model.emissions[static_cast<std::size_t>(i)];
      tab.emis(t, i) =
          gaussian_loglik(seq.y[t], em.predict(seq.X.row(t)), em.sigma);
    }
  }
  tab.log_init = log_softmax(model.initial.logits(seq.x_init));
  tab.log_tr.resize(static_cast<std::size_t>(std::max<Eigen::Index>(T - 1, 0)));
  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    Eigen::MatrixXd lt(k, k);
    for (int i = 0; i < k; ++i) {
      lt.row(i) = log_softmax(model.transitions[static_cast<std::size_t>(i)]
                                  .logits(seq.X.row(t + 1)))
                      .transpose();
    }
    tab.log_tr[static_cast<std::size_t>(t)] = std::move(lt);
  }
  return tab;
}

Eigen::MatrixXd forward_log(const SeqTables& tab, int k, double* loglik) {
  const Eigen::Index T = tab.emis.rows();
  Eigen::MatrixXd la(T, k);
  la.row(0) = (tab.log_init + tab.emis.row(0).transpose()).transpose();
  Eigen::VectorXd work(k);
  for (Eigen::Index t = 1; t < T; ++t) {
    const auto& lt = tab.log_tr[static_cast<std::size_t>(t - 1)];
    for (int j = 0; j < k; ++j) {
      for (int i = 0; i < k; ++i) work[i] = la(t - 1, i) + lt(i, j);
      la(t, j) = tab.emis(t, j) + log_sum_exp(work);
    }
  }
  if (loglik != nullptr) {
    *loglik = log_sum_exp(la.row(T - 1).transpose());
  }
  return la;
}

}  // namespace

SeqView make_seq_view(const OceanSequence& seq, CovariateSet set) {
  if (seq.length() == 0) {
    throw ValidationError("make_seq_view: empty sequence");
  }
  SeqView view;
  view.X = covariate_matrix(seq, set);
  view.y = response_vector(seq);
  view.x_init.resize(static_cast<Eigen::Index>(kInitialCovariates.size()));
  for (std::size_t i = 0; i < kInitialCovariates.size(); ++i) {
    view.x_init[static_cast<Eigen::Index>(i)] =
        seq.covariates[0][kInitialCovariates[i]];
  }
  return view;
}

Eigen::VectorXd transition_probs(const MehimModel& model, int from_state,
                                 const Eigen::VectorXd& x) {
  if (from_state < 0 || from_state >= model.k) {
    throw ValidationError("transition_probs: origin state out of range");
  }
  return mnl_probs(model.transitions[static_cast<std::size_t>(from_state)], x);
}

Eigen::VectorXd initial_probs(const MehimModel& model,
                              const Eigen::VectorXd& x_init) {
  return mnl_probs(model.initial, x_init);
}

double emission_loglik(const MehimModel& model, int state,
                       const Eigen::VectorXd& x, double y) {
  const auto& em = model.emissions[static_cast<std::size_t>(state)];
  return gaussian_loglik(y, em.predict(x), em.sigma);
}

double emission_sample(const MehimModel& model, int state,
                       const Eigen::VectorXd& x, Rng& rng) {
  const auto& em = model.emissions[static_cast<std::size_t>(state)];
  return rng.normal(em.predict(x), em.sigma);
}

double sequence_loglik(const MehimModel& model, const SeqView& seq) {
  const SeqTables tab = build_tables(model, seq);
  double ll = 0.0;
  forward_log(tab, model.k, &ll);
  return ll;
}

double sequence_loglik(const MehimModel& model, const OceanSequence& seq) {
  return sequence_loglik(model, make_seq_view(seq, model.covariate_set));
}

double total_loglik(const MehimModel& model,
                    const std::vector<OceanSequence>& sequences) {
  double total = 0.0;
  for (const auto& seq : sequences) total += sequence_loglik(model, seq);
  return total;
}

ForwardBackward forward_backward(const MehimModel& model, const SeqView& seq) {
  const SeqTables tab = build_tables(model, seq);
  const Eigen::Index T = seq.y.size();
  const int k = model.k;

  ForwardBackward fb;
  const Eigen::MatrixXd la = forward_log(tab, k, &fb.loglik);

  Eigen::MatrixXd lb = Eigen::MatrixXd::Zero(T, k);
  Eigen::VectorXd work(k);
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    const auto& lt = tab.log_tr[static_cast<std::size_t>(t)];
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < k; ++j) {
        work[j] = lt(i, j) + tab.emis(t + 1, j) + lb(t + 1, j);
      }
      lb(t, i) = log_sum_exp(work);
    }
  }

  fb.gamma.resize(T, k);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (int i = 0; i < k; ++i) {
      fb.gamma(t, i) = std::exp(la(t, i) + lb(t, i) - fb.loglik);
    }
    // Renormalize away residual rounding so each row is an exact simplex.
    fb.gamma.row(t) /= fb.gamma.row(t).sum();
  }

  fb.xi.resize(static_cast<std::size_t>(std::max<Eigen::Index>(T - 1, 0)));
  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    const auto& lt = tab.log_tr[static_cast<std::size_t>(t)];
    Eigen::MatrixXd x(k, k);
    double total = 0.0;
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < k; ++j) {
        x(i, j) = std::exp(la(t, i) + lt(i, j) + tab.emis(t + 1, j) +
                           lb(t + 1, j) - fb.loglik);
        total += x(i, j);
      }
    }
    x /= total;
    fb.xi[static_cast<std::size_t>(t)] = std::move(x);
  }
  return fb;
}

std::pair<StatePath, double> viterbi_with_score(const MehimModel& model,
                                                const SeqView& seq) {
  const SeqTables tab = build_tables(model, seq);
  const Eigen::Index T = seq.y.size();
  const int k = model.k;

  Eigen::MatrixXd delta(T, k);
  Eigen::MatrixXi back(T, k);
  delta.row(0) = (tab.log_init + tab.emis.row(0).transpose()).transpose();
  back.row(0).setConstant(-1);
  for (Eigen::Index t = 1; t < T; ++t) {
    const auto& lt = tab.log_tr[static_cast<std::size_t>(t - 1)];
    for (int j = 0; j < k; ++j) {
      int arg = 0;
      double best = delta(t - 1, 0) + lt(0, j);
      for (int i = 1; i < k; ++i) {
        const double cand = delta(t - 1, i) + lt(i, j);
        if (cand > best) {  // strict: ties keep the lower origin index
          best = cand;
          arg = i;
        }
      }
      delta(t, j) = tab.emis(t, j) + best;
      back(t, j) = arg;
    }
  }

  int last = 0;
  for (int j = 1; j < k; ++j) {
    if (delta(T - 1, j) > delta(T - 1, last)) last = j;
  }
  const double score = delta(T - 1, last);
  StatePath path(static_cast<std::size_t>(T));
  path[static_cast<std::size_t>(T - 1)] = last;
  for (Eigen::Index t = T - 1; t > 0; --t) {
    last = back(t, last);
    path[static_cast<std::size_t>(t - 1)] = last;
  }
  return {std::move(path), score};
}

StatePath viterbi(const MehimModel& model, const OceanSequence& seq) {
  return viterbi_with_score(model, make_seq_view(seq, model.covariate_set))
      .first;
}

double path_joint_loglik(const MehimModel& model, const SeqView& seq,
                         const StatePath& path) {
  const SeqTables tab = build_tables(model, seq);
  const Eigen::Index T = seq.y.size();
  if (static_cast<Eigen::Index>(path.size()) != T) {
    throw ValidationError("path_joint_loglik: path length mismatch");
  }
  double ll = tab.log_init[path[0]] + tab.emis(0, path[0]);
  for (Eigen::Index t = 1; t < T; ++t) {
    const auto s_prev = path[static_cast<std::size_t>(t - 1)];
    const auto s_cur = path[static_cast<std::size_t>(t)];
    ll += tab.log_tr[static_cast<std::size_t>(t - 1)](s_prev, s_cur) +
          tab.emis(t, s_cur);
  }
  return ll;
}

namespace {

// Category permutation of a logistic block: new category j' takes the old
// category perm[j'], then every row is re-expressed against the new baseline
// (the probabilities are unchanged).
MnlFit permute_categories(const MnlFit& fit, const std::vector<int>& perm) {
  const int k = fit.k;
  const int p = fit.p;
  Eigen::MatrixXd full = Eigen::MatrixXd::Zero(k, p + 1);
  full.topRows(k - 1) = fit.params;
  Eigen::MatrixXd reordered(k, p + 1);
  for (int j = 0; j < k; ++j) {
    reordered.row(j) = full.row(perm[static_cast<std::size_t>(j)]);
  }
  const Eigen::RowVectorXd baseline = reordered.row(k - 1);
  MnlFit out;
  out.k = k;
  out.p = p;
  out.ridged = fit.ridged;
  out.params = reordered.topRows(k - 1).rowwise() - baseline;
  return out;
}

}  // namespace

void canonicalize_states(MehimModel& model) {
  const int k = model.k;
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(), [&](int a, int b) {
    return model.emissions[static_cast<std::size_t>(a)].sigma <
           model.emissions[static_cast<std::size_t>(b)].sigma;
  });

  std::vector<LinearFit> emissions(static_cast<std::size_t>(k));
  std::vector<MnlFit> transitions(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    emissions[static_cast<std::size_t>(j)] =
        model.emissions[static_cast<std::size_t>(perm[static_cast<std::size_t>(j)])];
    if (k > 1) {
      transitions[static_cast<std::size_t>(j)] = permute_categories(
          model.transitions[static_cast<std::size_t>(
              perm[static_cast<std::size_t>(j)])],
          perm);
    } else {
      transitions[static_cast<std::size_t>(j)] =
          model.transitions[static_cast<std::size_t>(j)];
    }
  }
  model.emissions = std::move(emissions);
  model.transitions = std::move(transitions);
  if (k > 1) model.initial = permute_categories(model.initial, perm);
}

namespace {

struct PooledViews {
  std::vector<SeqView> views;
  Eigen::MatrixXd x_obs;       // N x p, all observations
  Eigen::VectorXd y_obs;       // N
  Eigen::MatrixXd x_tr;        // M x p, rows at positions 1..T-1 per sequence
  Eigen::MatrixXd x_init;      // S x 3
  std::vector<Eigen::Index> obs_base;  // per-sequence offset into x_obs
  std::vector<Eigen::Index> tr_base;   // per-sequence offset into x_tr
};

PooledViews assemble(const std::vector<OceanSequence>& sequences,
                     CovariateSet set) {
  PooledViews pooled;
  pooled.views.reserve(sequences.size());
  Eigen::Index n_obs = 0;
  Eigen::Index n_tr = 0;
  for (const auto& seq : sequences) {
    pooled.views.push_back(make_seq_view(seq, set));
    n_obs += static_cast<Eigen::Index>(seq.length());
    n_tr += static_cast<Eigen::Index>(seq.length()) - 1;
  }
  const auto p = static_cast<Eigen::Index>(active_covariates(set).size());
  pooled.x_obs.resize(n_obs, p);
  pooled.y_obs.resize(n_obs);
  pooled.x_tr.resize(n_tr, p);
  pooled.x_init.resize(static_cast<Eigen::Index>(sequences.size()), 3);
  Eigen::Index obs_at = 0;
  Eigen::Index tr_at = 0;
  for (std::size_t s = 0; s < pooled.views.size(); ++s) {
    const auto& view = pooled.views[s];
    const Eigen::Index T = view.y.size();
    pooled.obs_base.push_back(obs_at);
    pooled.tr_base.push_back(tr_at);
    pooled.x_obs.middleRows(obs_at, T) = view.X;
    pooled.y_obs.segment(obs_at, T) = view.y;
    if (T > 1) pooled.x_tr.middleRows(tr_at, T - 1) = view.X.bottomRows(T - 1);
    pooled.x_init.row(static_cast<Eigen::Index>(s)) = view.x_init;
    obs_at += T;
    tr_at += T - 1;
  }
  return pooled;
}

struct HmmParams {
  std::vector<LinearFit> emissions;
  std::vector<MnlFit> transitions;
  MnlFit initial;
};

struct HmmExpectations {
  double loglik = 0.0;
  Eigen::MatrixXd gamma;                  // N x k
  std::vector<Eigen::MatrixXd> xi;        // per origin: M x k
  Eigen::MatrixXd init_weights;           // S x k
};

MehimModel to_model(const HmmParams& params, int k, CovariateSet set) {
  MehimModel model;
  model.k = k;
  model.covariate_set = set;
  model.emissions = params.emissions;
  model.transitions = params.transitions;
  model.initial = params.initial;
  return model;
}

HmmExpectations e_step(const HmmParams& params, const PooledViews& pooled,
                       int k, CovariateSet set) {
  const MehimModel model = to_model(params, k, set);
  HmmExpectations ex;
  ex.gamma.resize(pooled.x_obs.rows(), k);
  ex.xi.assign(static_cast<std::size_t>(k),
               Eigen::MatrixXd::Zero(pooled.x_tr.rows(), k));
  ex.init_weights.resize(pooled.x_init.rows(), k);
  for (std::size_t s = 0; s < pooled.views.size(); ++s) {
    const ForwardBackward fb = forward_backward(model, pooled.views[s]);
    ex.loglik += fb.loglik;
    const Eigen::Index T = pooled.views[s].y.size();
    ex.gamma.middleRows(pooled.obs_base[s], T) = fb.gamma;
    ex.init_weights.row(static_cast<Eigen::Index>(s)) = fb.gamma.row(0);
    for (Eigen::Index t = 0; t + 1 < T; ++t) {
      const auto& x = fb.xi[static_cast<std::size_t>(t)];
      for (int i = 0; i < k; ++i) {
        ex.xi[static_cast<std::size_t>(i)].row(pooled.tr_base[s] + t) +=
            x.row(i);
      }
    }
  }
  return ex;
}

// Emission, transition, and initial-state updates; throws FitError on state
// collapse so the caller can abandon the restart.
HmmParams m_step(const PooledViews& pooled, const HmmExpectations& ex, int k,
                 double sigma_floor, const HmmParams* warm) {
  HmmParams params;
  params.emissions.resize(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    params.emissions[static_cast<std::size_t>(i)] =
        weighted_ols_fit(pooled.x_obs, pooled.y_obs, ex.gamma.col(i));
    if (params.emissions[static_cast<std::size_t>(i)].sigma < sigma_floor) {
      throw FitError("state collapse: emission sigma below floor");
    }
  }
  params.transitions.resize(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    MnlOptions opts;
    opts.max_iter = 100;
    if (warm != nullptr) {
      opts.warm_start = &warm->transitions[static_cast<std::size_t>(i)].params;
    }
    params.transitions[static_cast<std::size_t>(i)] =
        mnl_fit(pooled.x_tr, ex.xi[static_cast<std::size_t>(i)], opts);
  }
  {
    MnlOptions opts;
    opts.max_iter = 100;
    if (warm != nullptr) opts.warm_start = &warm->initial.params;
    params.initial = mnl_fit(pooled.x_init, ex.init_weights, opts);
  }
  return params;
}

struct HmmRun {
  bool failed = false;
  double loglik = -std::numeric_limits<double>::infinity();
  HmmParams params;
  int iterations = 0;
  std::vector<double> ll_trace;
};

HmmRun run_baum_welch(const PooledViews& pooled, const Eigen::MatrixXd& r0,
                      const MehimOptions& options, CovariateSet set) {
  const int k = options.k;
  HmmRun run;
  try {
    // Initial M-step from seeded responsibilities; pairwise expectations are
    // approximated as products of adjacent marginals.
    HmmExpectations ex0;
    ex0.gamma = r0;
    ex0.xi.assign(static_cast<std::size_t>(k),
                  Eigen::MatrixXd::Zero(pooled.x_tr.rows(), k));
    ex0.init_weights.resize(pooled.x_init.rows(), k);
    for (std::size_t s = 0; s < pooled.views.size(); ++s) {
      const Eigen::Index T = pooled.views[s].y.size();
      ex0.init_weights.row(static_cast<Eigen::Index>(s)) =
          r0.row(pooled.obs_base[s]);
      for (Eigen::Index t = 0; t + 1 < T; ++t) {
        for (int i = 0; i < k; ++i) {
          ex0.xi[static_cast<std::size_t>(i)].row(pooled.tr_base[s] + t) =
              r0(pooled.obs_base[s] + t, i) *
              r0.row(pooled.obs_base[s] + t + 1);
        }
      }
    }
    HmmParams params = m_step(pooled, ex0, k, options.sigma_floor, nullptr);

    double prev_ll = -std::numeric_limits<double>::infinity();
    HmmParams prev_params = params;
    for (int iter = 0; iter < options.max_iter; ++iter) {
      HmmExpectations ex = e_step(params, pooled, k, set);

      // Generalized-EM guard: the logistic M-steps are Newton fits, so a
      // material decrease means an overshoot; pull the logistic blocks back
      // toward the previous iterate.
      int halvings = 0;
      while (iter > 0 && ex.loglik < prev_ll - 1e-9 && halvings < 10) {
        for (int i = 0; i < k; ++i) {
          params.transitions[static_cast<std::size_t>(i)].params =
              0.5 * (params.transitions[static_cast<std::size_t>(i)].params +
                     prev_params.transitions[static_cast<std::size_t>(i)].params);
        }
        params.initial.params =
            0.5 * (params.initial.params + prev_params.initial.params);
        ex = e_step(params, pooled, k, set);
        ++halvings;
      }

      run.ll_trace.push_back(ex.loglik);
      run.iterations = iter + 1;
      run.loglik = ex.loglik;
      run.params = params;
      if (iter > 0 &&
          ex.loglik - prev_ll < options.tol * (1.0 + std::abs(ex.loglik))) {
        break;
      }
      prev_ll = ex.loglik;
      prev_params = params;
      params = m_step(pooled, ex, k, options.sigma_floor, &prev_params);
    }
  } catch (const FitError&) {
    run.failed = true;
  }
  return run;
}

}  // namespace

MehimModel mehim_fit(const std::vector<OceanSequence>& sequences,
                     CovariateSet set, const MehimOptions& options) {
  if (options.k < 1) throw ValidationError("mehim_fit: k must be >= 1");
  if (sequences.empty()) throw ValidationError("mehim_fit: no sequences");

  PooledViews pooled = assemble(sequences, set);
  const Eigen::Index n_obs = pooled.x_obs.rows();

  MehimModel model;
  model.k = options.k;
  model.covariate_set = set;
  model.meta.n_obs = static_cast<int>(n_obs);
  model.meta.n_sequences = static_cast<int>(sequences.size());
  model.meta.seed = options.seed;
  model.meta.restarts = options.restarts;

  if (options.k == 1) {
    // Single state: the likelihood factorizes into plain OLS.
    LinearFit fit = ols_fit(pooled.x_obs, pooled.y_obs);
    model.emissions = {fit};
    MnlFit trivial_tr;
    trivial_tr.k = 1;
    trivial_tr.p = static_cast<int>(pooled.x_obs.cols());
    trivial_tr.params.resize(0, trivial_tr.p + 1);
    MnlFit trivial_init;
    trivial_init.k = 1;
    trivial_init.p = 3;
    trivial_init.params.resize(0, 4);
    model.transitions = {trivial_tr};
    model.initial = trivial_init;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n_obs; ++i) {
      ll += gaussian_loglik(pooled.y_obs[i],
                            fit.predict(pooled.x_obs.row(i)), fit.sigma);
    }
    model.meta.loglik = ll;
    return model;
  }

  if (n_obs < 100 * options.k) {
    throw FitError("mehim_fit: need at least " +
                   std::to_string(100 * options.k) + " observations for k=" +
                   std::to_string(options.k));
  }

  HmmRun best;
  bool any = false;
  for (int restart = 0; restart < std::max(1, options.restarts); ++restart) {
    Rng rng(derive_seed(options.seed, "mehim-restart",
                        static_cast<std::uint64_t>(restart)));
    Eigen::MatrixXd r0;
    if (options.init_from != nullptr &&
        options.init_from->k == options.k) {
      // Seed from the mixture fit's posteriors, jittered after restart 0.
      r0.resize(n_obs, options.k);
      for (Eigen::Index i = 0; i < n_obs; ++i) {
        r0.row(i) = fmr_posteriors(*options.init_from, pooled.x_obs.row(i),
                                   pooled.y_obs[i]);
      }
      if (restart > 0) {
        const double eps = 0.10 + 0.85 * rng.uniform();
        for (Eigen::Index i = 0; i < n_obs; ++i) {
          for (int j = 0; j < options.k; ++j) {
            r0(i, j) = (1.0 - eps) * r0(i, j) + eps * rng.uniform();
          }
          r0.row(i) /= r0.row(i).sum();
        }
      }
    } else {
      r0 = seed_responsibilities(pooled.y_obs, options.k, restart, rng);
    }
    HmmRun run = run_baum_welch(pooled, r0, options, set);
    if (run.failed) continue;
    if (!any || run.loglik > best.loglik) {
      best = std::move(run);
      any = true;
    }
  }
  if (!any) {
    throw FitError("mehim_fit: every restart collapsed (sigma floor " +
                   format_double(options.sigma_floor) + ")");
  }

  model.emissions = std::move(best.params.emissions);
  model.transitions = std::move(best.params.transitions);
  model.initial = std::move(best.params.initial);
  model.meta.loglik = best.loglik;
  model.meta.iterations = best.iterations;
  model.meta.ll_trace = std::move(best.ll_trace);
  canonicalize_states(model);
  return model;
}

MehimModel fit_mehim_model(const Dataset& dataset, CovariateSet set,
                           const MehimOptions& options) {
  MehimModel model = mehim_fit(dataset.sequences, set, options);
  model.scaler = dataset.scaler;
  return model;
}

}  // namespace tcim
