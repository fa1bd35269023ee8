#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>

#include "tcim/rng.hpp"
#include "tcim/stats.hpp"

using namespace tcim;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index n, Eigen::Index p, Rng& rng) {
  return Eigen::MatrixXd::NullaryExpr(
      n, p, [&](Eigen::Index, Eigen::Index) { return rng.normal(); });
}

}  // namespace

TEST_CASE("ols recovers exact linear data") {
  Rng rng(1);
  const Eigen::Index n = 50;
  // y depends only on column 0; the other full-rank columns get zero
  // coefficients and the residual vanishes.
  const Eigen::MatrixXd X = random_matrix(n, 6, rng);
  const Eigen::VectorXd y = 2.0 * X.col(0);
  const LinearFit fit = ols_fit(X, y);
  CHECK(fit.coefficients[0] == doctest::Approx(2.0).epsilon(1e-10));
  for (int c = 1; c < 6; ++c) {
    CHECK(fit.coefficients[c] == doctest::Approx(0.0).scale(1.0).epsilon(1e-10));
  }
  CHECK(fit.intercept == doctest::Approx(0.0).scale(1.0).epsilon(1e-10));
  CHECK(fit.sigma == doctest::Approx(0.0).scale(1.0).epsilon(1e-8));
}

TEST_CASE("ols constant response gives intercept only") {
  Rng rng(2);
  Eigen::MatrixXd X = random_matrix(100, 6, rng);
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(100, 3.5);
  const LinearFit fit = ols_fit(X, y);
  CHECK(fit.intercept == doctest::Approx(3.5).epsilon(1e-10));
  for (int c = 0; c < 6; ++c) {
    CHECK(std::abs(fit.coefficients[c]) < 1e-10);
  }
}

TEST_CASE("ols generate-and-refit recovers within 3 standard errors") {
  Rng rng(3);
  const Eigen::Index n = 10000;
  const Eigen::MatrixXd X = random_matrix(n, 6, rng);
  Eigen::VectorXd beta(6);
  beta << 0.452, -0.142, 0.083, -0.054, 0.042, 0.032;
  const double noise_sd = 0.1;
  Eigen::VectorXd y = X * beta;
  for (Eigen::Index i = 0; i < n; ++i) y[i] += rng.normal(0.0, noise_sd);

  const LinearFit fit = ols_fit(X, y);

  Eigen::MatrixXd design(n, 7);
  design.col(0).setOnes();
  design.rightCols(6) = X;
  const Eigen::MatrixXd cov =
      fit.sigma * fit.sigma *
      (design.transpose() * design).inverse();
  for (int c = 0; c < 6; ++c) {
    const double se = std::sqrt(cov(c + 1, c + 1));
    CHECK(std::abs(fit.coefficients[c] - beta[c]) < 3.0 * se);
  }
  CHECK(fit.sigma == doctest::Approx(noise_sd).epsilon(0.05));
}

TEST_CASE("ols residuals are orthogonal to the design") {
  Rng rng(4);
  const Eigen::MatrixXd X = random_matrix(500, 6, rng);
  Eigen::VectorXd y(500);
  for (Eigen::Index i = 0; i < 500; ++i) y[i] = rng.normal(0.0, 2.0);
  const LinearFit fit = ols_fit(X, y);
  Eigen::VectorXd residuals =
      y - (X * fit.coefficients).array().matrix() -
      Eigen::VectorXd::Constant(500, fit.intercept);
  CHECK(std::abs(residuals.sum()) < 1e-8);
  for (int c = 0; c < 6; ++c) {
    CHECK(std::abs(residuals.dot(X.col(c))) < 1e-8);
  }
}

TEST_CASE("ols names collinear columns") {
  Rng rng(5);
  Eigen::MatrixXd X = random_matrix(60, 6, rng);
  X.col(3) = 2.0 * X.col(1);  // exact dependence
  Eigen::VectorXd y(60);
  for (Eigen::Index i = 0; i < 60; ++i) y[i] = rng.normal();
  CHECK_THROWS_AS(
      ols_fit(X, y, {"dv_p", "v", "mpi", "shr", "rh", "ocn"}), FitError);
  try {
    ols_fit(X, y, {"dv_p", "v", "mpi", "shr", "rh", "ocn"});
  } catch (const FitError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("rank-deficient") != std::string::npos);
  }
}

TEST_CASE("weighted ols with unit weights matches ols coefficients") {
  Rng rng(6);
  const Eigen::MatrixXd X = random_matrix(300, 6, rng);
  Eigen::VectorXd y = X.col(0) * 1.5;
  for (Eigen::Index i = 0; i < 300; ++i) y[i] += rng.normal(0.0, 0.5);
  const LinearFit a = ols_fit(X, y);
  const LinearFit b = weighted_ols_fit(X, y, Eigen::VectorXd::Ones(300));
  CHECK((a.coefficients - b.coefficients).lpNorm<Eigen::Infinity>() < 1e-9);
  CHECK(a.intercept == doctest::Approx(b.intercept).epsilon(1e-9));
  // sigma conventions differ: n-p-1 vs weighted MLE.
  CHECK(b.sigma == doctest::Approx(a.sigma * std::sqrt(293.0 / 300.0))
                       .epsilon(1e-9));
}

TEST_CASE("softmax anchors") {
  SUBCASE("uniform at zero") {
    MnlFit fit;
    fit.k = 3;
    fit.p = 6;
    fit.params = Eigen::MatrixXd::Zero(2, 7);
    const Eigen::VectorXd probs = mnl_probs(fit, Eigen::VectorXd::Zero(6));
    for (int j = 0; j < 3; ++j) {
      CHECK(probs[j] == doctest::Approx(1.0 / 3).epsilon(1e-14));
    }
  }
  SUBCASE("reported from-state-1 intercepts") {
    // softmax(4.663, 4.553, 0), computed independently here.
    const double e1 = std::exp(4.663), e2 = std::exp(4.553), e3 = 1.0;
    const double z = e1 + e2 + e3;
    MnlFit fit;
    fit.k = 3;
    fit.p = 6;
    fit.params = Eigen::MatrixXd::Zero(2, 7);
    fit.params(0, 0) = 4.663;
    fit.params(1, 0) = 4.553;
    const Eigen::VectorXd probs = mnl_probs(fit, Eigen::VectorXd::Zero(6));
    CHECK(std::abs(probs[0] - e1 / z) < 1e-12);
    CHECK(std::abs(probs[1] - e2 / z) < 1e-12);
    CHECK(std::abs(probs[2] - e3 / z) < 1e-12);
    CHECK(probs[0] == doctest::Approx(0.525).epsilon(2e-3));
    CHECK(probs[1] == doctest::Approx(0.470).epsilon(2e-3));
    CHECK(probs[2] == doctest::Approx(0.005).epsilon(2e-1));
  }
  SUBCASE("shift invariance") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
      Eigen::VectorXd logits(4);
      for (int i = 0; i < 4; ++i) logits[i] = rng.normal(0.0, 5.0);
      const Eigen::VectorXd base = softmax(logits);
      const Eigen::VectorXd shifted =
          softmax(logits.array() + rng.normal(0.0, 100.0));
      CHECK((base - shifted).lpNorm<Eigen::Infinity>() < 1e-12);
    }
  }
  SUBCASE("valid simplex under extreme logits") {
    Rng rng(8);
    for (int trial = 0; trial < 200; ++trial) {
      Eigen::VectorXd logits(3);
      for (int i = 0; i < 3; ++i) logits[i] = rng.uniform(-700.0, 700.0);
      const Eigen::VectorXd probs = softmax(logits);
      double sum = 0.0;
      for (int i = 0; i < 3; ++i) {
        CHECK(std::isfinite(probs[i]));
        CHECK(probs[i] >= 0.0);
        sum += probs[i];
      }
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("mnl_fit with symmetric weights stays near zero") {
  Rng rng(9);
  const Eigen::MatrixXd X = random_matrix(500, 4, rng);
  const Eigen::MatrixXd W = Eigen::MatrixXd::Constant(500, 3, 1.0 / 3.0);
  const MnlFit fit = mnl_fit(X, W);
  CHECK(fit.params.cwiseAbs().maxCoeff() < 1e-6);
  const Eigen::VectorXd probs = mnl_probs(fit, X.row(0));
  for (int j = 0; j < 3; ++j) {
    CHECK(probs[j] == doctest::Approx(1.0 / 3).epsilon(1e-5));
  }
}

TEST_CASE("mnl_fit intercept-only closed form") {
  // Two categories, one balanced binary feature independent of the label:
  // the intercept is log(n1/n2) and the slope vanishes.
  const int n1 = 300, n2 = 100;
  const int n = n1 + n2;
  Eigen::MatrixXd X(n, 1);
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(n, 2);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = i % 2 == 0 ? 1.0 : 0.0;  // balanced within each label block
    W(i, i < n1 ? 0 : 1) = 1.0;
  }
  const MnlFit fit = mnl_fit(X, W);
  CHECK(fit.params(0, 0) ==
        doctest::Approx(std::log(static_cast<double>(n1) / n2)).epsilon(1e-5));
  CHECK(std::abs(fit.params(0, 1)) < 1e-5);
}

TEST_CASE("mnl_fit generate-and-refit recovery") {
  Rng rng(10);
  const Eigen::Index n = 100000;
  MnlFit truth;
  truth.k = 3;
  truth.p = 3;
  truth.params.resize(2, 4);
  truth.params << 0.4, -0.8, 0.5, 0.2, -0.3, 0.6, -0.4, 0.9;

  const Eigen::MatrixXd X = random_matrix(n, 3, rng);
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd probs = mnl_probs(truth, X.row(i));
    W(i, rng.categorical(std::span<const double>(probs.data(), 3))) = 1.0;
  }
  const MnlFit fit = mnl_fit(X, W);
  CHECK((fit.params - truth.params).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("mnl_fit gradient vanishes at the optimum") {
  Rng rng(11);
  const Eigen::Index n = 2000;
  const Eigen::MatrixXd X = random_matrix(n, 4, rng);
  Eigen::MatrixXd W(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    // Soft weights (responsibility-like rows).
    Eigen::VectorXd logits(3);
    for (int j = 0; j < 3; ++j) logits[j] = rng.normal();
    W.row(i) = softmax(logits).transpose();
  }
  const MnlFit fit = mnl_fit(X, W);

  // Finite-difference gradient of the weighted log-likelihood.
  const double h = 1e-5;
  const double base = mnl_loglik(fit, X, W);
  double max_grad = 0.0;
  for (Eigen::Index r = 0; r < fit.params.rows(); ++r) {
    for (Eigen::Index c = 0; c < fit.params.cols(); ++c) {
      MnlFit plus = fit;
      plus.params(r, c) += h;
      MnlFit minus = fit;
      minus.params(r, c) -= h;
      const double g = (mnl_loglik(plus, X, W) - mnl_loglik(minus, X, W)) /
                       (2.0 * h);
      max_grad = std::max(max_grad, std::abs(g));
      // Central difference agrees with a zero analytic gradient within the
      // relative tolerance scaled by the objective curvature.
      CHECK(std::abs(g) < 1e-4 * (1.0 + std::abs(base)));
    }
  }
  CHECK(max_grad < 1e-2);  // absolute sanity bound
}

TEST_CASE("mnl_fit flags separation and falls back to ridge") {
  // Perfectly separated data drive the unpenalized MLE to infinity.
  const int n = 200;
  Eigen::MatrixXd X(n, 1);
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(n, 2);
  for (int i = 0; i < n; ++i) {
    const bool first = i < n / 2;
    X(i, 0) = first ? 1.0 : -1.0;
    W(i, first ? 0 : 1) = 1.0;
  }
  const MnlFit fit = mnl_fit(X, W);
  CHECK(fit.ridged);
  CHECK(std::isfinite(fit.params(0, 0)));
  CHECK(std::isfinite(fit.params(0, 1)));
  // Still strongly predictive.
  Eigen::VectorXd x(1);
  x << 1.0;
  CHECK(mnl_probs(fit, x)[0] > 0.95);
}

TEST_CASE("exp decay fit recovers reported parameters exactly") {
  const double alpha = 0.049, vb = 18.82;
  std::vector<LandSegment> segments;
  Rng rng(12);
  for (int s = 0; s < 40; ++s) {
    LandSegment seg;
    seg.v0 = 30.0 + rng.uniform() * 90.0;
    const int len = 2 + static_cast<int>(rng.uniform() * 8);
    for (int t = 0; t < len; ++t) {
      seg.intensities.push_back(vb + (seg.v0 - vb) * std::exp(-alpha * t));
    }
    segments.push_back(std::move(seg));
  }
  const ExpDecayFit fit = nls_exp_decay_fit(segments);
  CHECK(std::abs(fit.alpha - alpha) < 1e-6);
  CHECK(std::abs(fit.v_b - vb) < 1e-6);
  CHECK(fit.converged);
}

TEST_CASE("exp decay on a single exact two-point segment") {
  LandSegment seg;
  seg.v0 = 80.0;
  seg.intensities = {80.0, 18.82 + (80.0 - 18.82) * std::exp(-0.049)};
  const ExpDecayFit fit = nls_exp_decay_fit({seg});
  CHECK(fit.objective < 1e-12);
}

TEST_CASE("exp decay rejects empty and degenerate inputs") {
  CHECK_THROWS_AS(nls_exp_decay_fit({}), ValidationError);
  LandSegment short_seg;
  short_seg.v0 = 50.0;
  short_seg.intensities = {50.0};
  CHECK_THROWS_AS(nls_exp_decay_fit({short_seg}), ValidationError);
}

TEST_CASE("exp decay flags unidentifiable flat segments") {
  std::vector<LandSegment> segments;
  for (int s = 0; s < 5; ++s) {
    LandSegment seg;
    seg.v0 = 25.0;
    seg.intensities = {25.0, 25.0, 25.0};
    segments.push_back(std::move(seg));
  }
  const ExpDecayFit fit = nls_exp_decay_fit(segments);
  CHECK(fit.v_b == doctest::Approx(25.0).epsilon(1e-3));
  CHECK_FALSE(fit.identifiable);
}

TEST_CASE("exp decay recovers from noisy segments within 5 percent") {
  const double alpha = 0.049, vb = 18.82;
  std::vector<LandSegment> segments;
  Rng rng(13);
  for (int s = 0; s < 200; ++s) {
    LandSegment seg;
    seg.v0 = 40.0 + rng.uniform() * 80.0;
    const int len = 3 + static_cast<int>(rng.uniform() * 10);
    for (int t = 0; t < len; ++t) {
      seg.intensities.push_back(vb + (seg.v0 - vb) * std::exp(-alpha * t) +
                                rng.normal(0.0, 1.0));
    }
    seg.v0 = seg.intensities[0];
    segments.push_back(std::move(seg));
  }
  const ExpDecayFit fit = nls_exp_decay_fit(segments);
  CHECK(std::abs(fit.alpha - alpha) / alpha < 0.05);
  CHECK(std::abs(fit.v_b - vb) / vb < 0.05);
}
