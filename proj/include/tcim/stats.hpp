#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "tcim/common.hpp"
#include "tcim/domain.hpp"

namespace tcim {

// Gaussian linear regression: y ~ N(intercept + x . coefficients, sigma).
struct LinearFit {
  double intercept = 0.0;
  Eigen::VectorXd coefficients;
  double sigma = 1.0;

  double predict(const Eigen::VectorXd& x) const {
    return intercept + coefficients.dot(x);
  }
};

// Weighted multinomial logistic fit over k categories with the LAST category
// as the baseline (its parameters are identically zero and are not stored).
// params is (k-1) x (p+1); column 0 holds intercepts.
struct MnlFit {
  int k = 0;
  int p = 0;
  Eigen::MatrixXd params;
  bool ridged = false;  // separation fallback was triggered

  // Logits for all k categories (baseline last, always 0).
  Eigen::VectorXd logits(const Eigen::VectorXd& x) const;
};

struct MnlOptions {
  double tol = 1e-8;        // log-likelihood change
  double grad_tol = 1e-6;   // gradient max-norm
  int max_iter = 500;
  double ridge = 1e-6;      // fallback penalty on separation
  // Coefficient magnitude treated as quasi-complete separation. Standardized
  // covariates make legitimate log-odds slopes order 1; 15 corresponds to
  // probability ratios beyond 1e6 per standardized unit.
  double separation_cap = 15.0;
  const Eigen::MatrixXd* warm_start = nullptr;
};

// Softmax with max-subtraction; valid simplex for any finite input.
Eigen::VectorXd mnl_probs(const MnlFit& fit, const Eigen::VectorXd& x);
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

// Ordinary least squares with intercept. sigma uses the n - p - 1 residual
// degree-of-freedom denominator. column_names (optional) improve the rank
// deficiency message.
LinearFit ols_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                  const std::vector<std::string>& column_names = {});

double ols_predict(const LinearFit& fit, const Eigen::VectorXd& x);

// Weighted least squares for EM M-steps: sigma is the weighted MLE
// sqrt(sum w r^2 / sum w). Solves the normal equations with a tiny ridge
// retry if the weighted Gram matrix is numerically singular.
LinearFit weighted_ols_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& w);

// Maximizes sum_i sum_r w_ir log pi_r(x_i) by damped Newton ascent. weights
// entries must be nonnegative; row sums need not be 1 (they act as case
// weights), which lets the same primitive serve hard labels, mixture
// responsibilities, and expected transition counts.
MnlFit mnl_fit(const Eigen::MatrixXd& X, const Eigen::MatrixXd& weights,
               const MnlOptions& options = {});

// Weighted multinomial log-likelihood under a fit (for tests/diagnostics).
double mnl_loglik(const MnlFit& fit, const Eigen::MatrixXd& X,
                  const Eigen::MatrixXd& weights);

struct ExpDecayFit {
  double alpha = 0.0;  // per 6-h step, > 0
  double v_b = 0.0;    // kt, >= 0
  int iterations = 0;
  bool converged = false;
  double objective = 0.0;     // final sum of squared residuals
  bool identifiable = true;   // false when the decay rate does not move the fit
  std::string message;
};

struct ExpDecayOptions {
  double alpha0 = 0.05;
  double vb0 = 20.0;
  int max_iter = 500;
  double step_tol = 1e-10;
  double objective_tol = 1e-12;
};

// Fits V(t) = v_b + (v0 - v_b) exp(-alpha t) over all segment points by
// Levenberg-Marquardt with projection onto alpha > 0, v_b >= 0. Throws
// FitError when no iteration converges (the error message carries the
// best-so-far parameters).
ExpDecayFit nls_exp_decay_fit(const std::vector<LandSegment>& segments,
                              const ExpDecayOptions& options = {});

}  // namespace tcim
