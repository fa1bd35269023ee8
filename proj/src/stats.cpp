#include "tcim/stats.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tcim {

Eigen::VectorXd MnlFit::logits(const Eigen::VectorXd& x) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(k);
  for (int r = 0; r + 1 < k; ++r) {
    out[r] = params(r, 0) + params.row(r).tail(p).dot(x);
  }
  return out;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

Eigen::VectorXd mnl_probs(const MnlFit& fit, const Eigen::VectorXd& x) {
  if (x.size() != fit.p) {
    throw ValidationError("mnl_probs: covariate dimension mismatch");
  }
  return softmax(fit.logits(x));
}

LinearFit ols_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                  const std::vector<std::string>& column_names) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (y.size() != n) throw ValidationError("ols_fit: X/y size mismatch");
  if (n <= p + 1) {
    throw FitError("ols_fit: need more than " + std::to_string(p + 1) +
                   " observations, got " + std::to_string(n));
  }

  Eigen::MatrixXd design(n, p + 1);
  design.col(0).setOnes();
  design.rightCols(p) = X;

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < p + 1) {
    // The columns pivoted past the numerical rank are the dependent ones.
    std::ostringstream msg;
    msg << "ols_fit: rank-deficient design (rank " << qr.rank() << " of "
        << p + 1 << "); dependent columns:";
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index i = qr.rank(); i < p + 1; ++i) {
      const int col = perm[i];
      msg << ' ';
      if (col == 0) {
        msg << "intercept";
      } else if (static_cast<std::size_t>(col - 1) < column_names.size()) {
        msg << column_names[static_cast<std::size_t>(col - 1)];
      } else {
        msg << "x" << col - 1;
      }
    }
    throw FitError(msg.str());
  }

  Eigen::VectorXd beta = qr.solve(y);
  const Eigen::VectorXd residuals = y - design * beta;
  const double rss = residuals.squaredNorm();

  LinearFit fit;
  fit.intercept = beta[0];
  fit.coefficients = beta.tail(p);
  fit.sigma = std::sqrt(rss / static_cast<double>(n - (p + 1)));
  return fit;
}

double ols_predict(const LinearFit& fit, const Eigen::VectorXd& x) {
  return fit.predict(x);
}

LinearFit weighted_ols_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& w) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (y.size() != n || w.size() != n) {
    throw ValidationError("weighted_ols_fit: size mismatch");
  }
  const double wsum = w.sum();
  if (!(wsum > 0.0)) throw FitError("weighted_ols_fit: zero total weight");

  Eigen::MatrixXd design(n, p + 1);
  design.col(0).setOnes();
  design.rightCols(p) = X;

  const Eigen::MatrixXd wd = w.asDiagonal() * design;
  Eigen::MatrixXd gram = design.transpose() * wd;
  const Eigen::VectorXd rhs = wd.transpose() * y;

  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  Eigen::VectorXd beta;
  if (ldlt.info() == Eigen::Success) {
    beta = ldlt.solve(rhs);
  }
  if (ldlt.info() != Eigen::Success || !beta.allFinite()) {
    // Singular weighted Gram matrix (e.g. all weight on a few points).
    gram.diagonal().array() += 1e-10 * (1.0 + gram.diagonal().maxCoeff());
    beta = gram.ldlt().solve(rhs);
    if (!beta.allFinite()) throw FitError("weighted_ols_fit: singular system");
  }

  const Eigen::VectorXd residuals = y - design * beta;
  LinearFit fit;
  fit.intercept = beta[0];
  fit.coefficients = beta.tail(p);
  fit.sigma = std::sqrt(residuals.array().square().matrix().dot(w) / wsum);
  return fit;
}

namespace {

struct MnlWork {
  double loglik = 0.0;
  Eigen::VectorXd gradient;  // stacked (k-1) x (p+1)
  Eigen::MatrixXd hessian;   // negative definite at interior points
};

// Log-likelihood, gradient, and Hessian of the weighted multinomial
// log-likelihood at B (rows: non-baseline categories).
MnlWork mnl_eval(const Eigen::MatrixXd& X, const Eigen::MatrixXd& W,
                 const Eigen::MatrixXd& B, double ridge, bool want_hessian) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  const int k = static_cast<int>(W.cols());
  const int km1 = k - 1;
  const Eigen::Index dim = km1 * (p + 1);

  MnlWork work;
  work.gradient = Eigen::VectorXd::Zero(dim);
  if (want_hessian) work.hessian = Eigen::MatrixXd::Zero(dim, dim);

  Eigen::VectorXd z(p + 1);
  Eigen::VectorXd logits(k);
  Eigen::VectorXd probs(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    z[0] = 1.0;
    z.tail(p) = X.row(i);
    logits.setZero();
    for (int r = 0; r < km1; ++r) {
      logits[r] = B.row(r).dot(z);
    }
    const double m = logits.maxCoeff();
    double denom = 0.0;
    for (int r = 0; r < k; ++r) {
      probs[r] = std::exp(logits[r] - m);
      denom += probs[r];
    }
    probs /= denom;
    const double log_denom = m + std::log(denom);

    const double row_weight = W.row(i).sum();
    for (int r = 0; r < k; ++r) {
      const double w = W(i, r);
      if (w != 0.0) work.loglik += w * (logits[r] - log_denom);
    }
    for (int r = 0; r < km1; ++r) {
      const double resid = W(i, r) - row_weight * probs[r];
      work.gradient.segment(r * (p + 1), p + 1) += resid * z;
    }
    if (want_hessian) {
      for (int r = 0; r < km1; ++r) {
        for (int s = r; s < km1; ++s) {
          const double scale =
              -row_weight * probs[r] * ((r == s ? 1.0 : 0.0) - probs[s]);
          work.hessian.block(r * (p + 1), s * (p + 1), p + 1, p + 1) +=
              scale * (z * z.transpose());
        }
      }
    }
  }
  if (want_hessian) {
    work.hessian = work.hessian.selfadjointView<Eigen::Upper>();
  }
  if (ridge > 0.0) {
    for (int r = 0; r < km1; ++r) {
      for (Eigen::Index c = 0; c < p + 1; ++c) {
        const Eigen::Index idx = r * (p + 1) + c;
        work.loglik -= 0.5 * ridge * B(r, c) * B(r, c);
        work.gradient[idx] -= ridge * B(r, c);
      }
    }
    if (want_hessian) work.hessian.diagonal().array() -= ridge;
  }
  return work;
}

MnlFit mnl_newton(const Eigen::MatrixXd& X, const Eigen::MatrixXd& W,
                  const MnlOptions& options, double ridge, bool* separated) {
  const Eigen::Index p = X.cols();
  const int k = static_cast<int>(W.cols());
  const int km1 = k - 1;
  const Eigen::Index dim = km1 * (p + 1);

  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(km1, p + 1);
  if (options.warm_start != nullptr &&
      options.warm_start->rows() == km1 &&
      options.warm_start->cols() == p + 1) {
    B = *options.warm_start;
  }

  MnlWork cur = mnl_eval(X, W, B, ridge, true);
  for (int iter = 0; iter < options.max_iter; ++iter) {
    if (cur.gradient.lpNorm<Eigen::Infinity>() < options.grad_tol) break;

    Eigen::MatrixXd neg_h = -cur.hessian;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(neg_h);
    Eigen::VectorXd step(dim);
    if (ldlt.info() == Eigen::Success) step = ldlt.solve(cur.gradient);
    if (ldlt.info() != Eigen::Success || !step.allFinite()) {
      neg_h.diagonal().array() += 1e-8 * (1.0 + neg_h.diagonal().maxCoeff());
      step = neg_h.ldlt().solve(cur.gradient);
      if (!step.allFinite()) {
        *separated = true;
        break;
      }
    }

    // Backtracking to guarantee ascent.
    double scale = 1.0;
    bool accepted = false;
    double gain = 0.0;
    for (int halving = 0; halving < 40; ++halving) {
      Eigen::MatrixXd trial = B;
      for (int r = 0; r < km1; ++r) {
        trial.row(r) += scale * step.segment(r * (p + 1), p + 1).transpose();
      }
      MnlWork next = mnl_eval(X, W, trial, ridge, true);
      if (std::isfinite(next.loglik) && next.loglik >= cur.loglik - 1e-12) {
        gain = next.loglik - cur.loglik;
        B = std::move(trial);
        cur = std::move(next);
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted) break;
    if (B.cwiseAbs().maxCoeff() > options.separation_cap) {
      *separated = true;
      break;
    }
    if (gain < options.tol) break;
  }

  MnlFit fit;
  fit.k = k;
  fit.p = static_cast<int>(p);
  fit.params = B;
  return fit;
}

}  // namespace

MnlFit mnl_fit(const Eigen::MatrixXd& X, const Eigen::MatrixXd& weights,
               const MnlOptions& options) {
  const Eigen::Index n = X.rows();
  if (weights.rows() != n) throw ValidationError("mnl_fit: X/weights mismatch");
  if (weights.cols() < 2) throw ValidationError("mnl_fit: need >= 2 categories");
  if ((weights.array() < 0.0).any()) {
    throw ValidationError("mnl_fit: negative weight");
  }

  bool separated = false;
  MnlFit fit = mnl_newton(X, weights, options, 0.0, &separated);
  if (fit.params.size() > 0 &&
      fit.params.cwiseAbs().maxCoeff() > options.separation_cap) {
    separated = true;
  }
  if (separated) {
    // Quasi-complete separation drives coefficients unbounded; refit with a
    // small ridge penalty and flag the fallback.
    separated = false;
    fit = mnl_newton(X, weights, options, options.ridge, &separated);
    fit.ridged = true;
  }
  return fit;
}

double mnl_loglik(const MnlFit& fit, const Eigen::MatrixXd& X,
                  const Eigen::MatrixXd& weights) {
  return mnl_eval(X, weights, fit.params, 0.0, false).loglik;
}

namespace {

double decay_objective(const std::vector<LandSegment>& segments, double alpha,
                       double vb) {
  double sse = 0.0;
  for (const auto& seg : segments) {
    for (std::size_t t = 0; t < seg.intensities.size(); ++t) {
      const double pred =
          vb + (seg.v0 - vb) * std::exp(-alpha * static_cast<double>(t));
      const double r = seg.intensities[t] - pred;
      sse += r * r;
    }
  }
  return sse;
}

}  // namespace

ExpDecayFit nls_exp_decay_fit(const std::vector<LandSegment>& segments,
                              const ExpDecayOptions& options) {
  if (segments.empty()) throw ValidationError("nls_exp_decay_fit: no segments");
  bool all_flat = true;
  for (const auto& seg : segments) {
    if (seg.intensities.size() < 2) {
      throw ValidationError("nls_exp_decay_fit: segment shorter than 2 points");
    }
    for (double v : seg.intensities) {
      if (v != seg.intensities.front()) all_flat = false;
    }
  }

  double alpha = std::max(options.alpha0, 1e-8);
  double vb = std::max(options.vb0, 0.0);
  double sse = decay_objective(segments, alpha, vb);

  double lambda = 1e-3;
  bool converged = false;
  // Constant segments satisfy the model with v_b at the data level and ANY
  // decay rate; the rate keeps its (projected) initial value.
  bool identifiable = !all_flat;
  int iter = 0;
  for (; iter < options.max_iter; ++iter) {
    // Gauss-Newton pieces: residual r = obs - pred,
    // d pred/d vb = 1 - exp(-alpha t), d pred/d alpha = -t (v0-vb) exp(-alpha t).
    Eigen::Matrix2d jtj = Eigen::Matrix2d::Zero();
    Eigen::Vector2d jtr = Eigen::Vector2d::Zero();
    for (const auto& seg : segments) {
      for (std::size_t ti = 0; ti < seg.intensities.size(); ++ti) {
        const double t = static_cast<double>(ti);
        const double e = std::exp(-alpha * t);
        const double pred = vb + (seg.v0 - vb) * e;
        const double r = seg.intensities[ti] - pred;
        const double ja = -t * (seg.v0 - vb) * e;
        const double jb = 1.0 - e;
        jtj(0, 0) += ja * ja;
        jtj(0, 1) += ja * jb;
        jtj(1, 1) += jb * jb;
        jtr[0] += ja * r;
        jtr[1] += jb * r;
      }
    }
    jtj(1, 0) = jtj(0, 1);

    if (jtj(0, 0) < 1e-14 * std::max(1.0, jtj(1, 1))) {
      // Objective is flat in alpha (all segments start at v_b): keep the
      // projected initial rate and let v_b carry the fit.
      identifiable = false;
    }

    bool stepped = false;
    for (int attempt = 0; attempt < 30; ++attempt) {
      Eigen::Matrix2d damped = jtj;
      damped.diagonal() *= (1.0 + lambda);
      damped.diagonal().array() += 1e-14;
      const Eigen::Vector2d delta = damped.ldlt().solve(jtr);
      const double new_alpha = std::max(alpha + delta[0], 1e-8);
      const double new_vb = std::max(vb + delta[1], 0.0);
      const double new_sse = decay_objective(segments, new_alpha, new_vb);
      if (std::isfinite(new_sse) && new_sse <= sse) {
        const double step_norm = std::hypot(new_alpha - alpha, new_vb - vb);
        const double gain = sse - new_sse;
        alpha = new_alpha;
        vb = new_vb;
        sse = new_sse;
        lambda = std::max(lambda * 0.5, 1e-12);
        stepped = true;
        if (step_norm < options.step_tol || gain < options.objective_tol) {
          converged = true;
        }
        break;
      }
      lambda *= 4.0;
    }
    if (!stepped) {
      // No damping level improves the objective: local minimum.
      converged = true;
    }
    if (converged) break;
  }

  ExpDecayFit fit;
  fit.alpha = alpha;
  fit.v_b = vb;
  fit.iterations = iter;
  fit.converged = converged;
  fit.objective = sse;
  fit.identifiable = identifiable;
  if (!identifiable) {
    fit.message = "decay rate not identifiable (flat segments); returned rate "
                  "reflects the initial guess";
  }
  if (!converged) {
    std::ostringstream msg;
    msg << "nls_exp_decay_fit: no convergence after " << options.max_iter
        << " iterations; best alpha=" << alpha << " v_b=" << vb
        << " sse=" << sse;
    throw FitError(msg.str());
  }
  return fit;
}

}  // namespace tcim
