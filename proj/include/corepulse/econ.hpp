#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "corepulse/community.hpp"
#include "corepulse/design.hpp"
#include "corepulse/normal.hpp"

namespace corepulse {

// ---------------------------------------------------------------------------
// Probit log-likelihood and derivatives on a dense design. With
// q = 2y - 1 and eta = X beta, row i contributes log Phi(q_i eta_i).

template <typename Scalar>
Scalar probit_loglik(const MatrixX<Scalar>& X, const VectorX<Scalar>& y, const VectorX<Scalar>& beta) {
  const VectorX<Scalar> eta = X * beta;
  Scalar ll(0);
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const Scalar q = y(i) > Scalar(0.5) ? Scalar(1) : Scalar(-1);
    ll += log_norm_cdf(q * eta(i));
  }
  return ll;
}

template <typename Scalar>
VectorX<Scalar> probit_gradient(const MatrixX<Scalar>& X, const VectorX<Scalar>& y, const VectorX<Scalar>& beta) {
  const VectorX<Scalar> eta = X * beta;
  VectorX<Scalar> score(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const Scalar q = y(i) > Scalar(0.5) ? Scalar(1) : Scalar(-1);
    score(i) = q * inverse_mills(q * eta(i));
  }
  return X.transpose() * score;
}

/// Observed Hessian of the log-likelihood (negative semidefinite).
template <typename Scalar>
MatrixX<Scalar> probit_hessian(const MatrixX<Scalar>& X, const VectorX<Scalar>& y, const VectorX<Scalar>& beta) {
  const VectorX<Scalar> eta = X * beta;
  VectorX<Scalar> w(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const Scalar q = y(i) > Scalar(0.5) ? Scalar(1) : Scalar(-1);
    const Scalar lam = inverse_mills(q * eta(i));
    w(i) = lam * (q * eta(i) + lam);
  }
  return -(X.transpose() * w.asDiagonal() * X);
}

struct ProbitOptions {
  double tol = 1e-8;       // on the Newton decrement
  int max_iter = 100;
  double separation_bound = 25.0;  // |beta_j| * sd(x_j)
};

struct FitResult {
  std::string model = "probit";
  std::vector<std::string> names;
  Eigen::VectorXd beta;
  Eigen::VectorXd se;
  double loglik = 0.0;
  double null_loglik = 0.0;
  double pseudo_r2 = 0.0;
  Eigen::Index n_obs = 0;
  int iterations = 0;
  double gradient_norm = 0.0;
  bool converged = false;
  bool se_corrected = false;  // true once bootstrap SEs replace the naive ones
  int bootstrap_replicates = 0;
  std::vector<double> loglik_trace;  // at beta = 0, then after each accepted step
  std::vector<std::string> notes;

  std::optional<Eigen::Index> index(const std::string& name) const;
  double coef(const std::string& name) const;       // throws if absent
  double std_error(const std::string& name) const;  // throws if absent
  double z(Eigen::Index j) const { return beta(j) / se(j); }
  double p_value(Eigen::Index j) const { return two_sided_p(z(j)); }
};

/// Newton-Raphson with step halving. Throws Error("separation: ...") when a
/// coefficient leaves the bound while the likelihood is still improving and
/// Error("probit: no convergence ...") after max_iter iterations.
FitResult probit_fit(const DesignMatrix& design, const ProbitOptions& opts = {});
FitResult probit_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::vector<std::string> names,
                     const ProbitOptions& opts = {});

/// Intercept-only log-likelihood n1 log(p) + n0 log(1-p).
double null_loglik(const Eigen::VectorXd& y);

struct FirstStageResult {
  std::vector<std::string> endogenous;  // one entry per regression
  std::vector<std::string> regressors;  // exogenous dense, instruments, exogenous dummies
  Eigen::MatrixXd coefficients;         // regressors x endogenous
  Eigen::MatrixXd fitted;               // rows x endogenous
  Eigen::MatrixXd residuals;            // rows x endogenous
  Eigen::VectorXd r2;
};

/// OLS of each endogenous column on the exogenous design plus instruments.
/// Throws Error("weak/degenerate instrument") when an instrument has zero
/// variance or is collinear with the exogenous block.
FirstStageResult first_stage(const DesignMatrix& exogenous, const Eigen::MatrixXd& instruments,
                             std::span<const std::string> instrument_names, const Eigen::MatrixXd& endogenous,
                             std::span<const std::string> endogenous_names);

struct TwoSriOptions {
  ProbitOptions probit;
  int bootstrap = 0;  // replicates; 0 keeps the naive SEs
  std::uint64_t seed = 1;
};

/// Two-stage residual inclusion. `design` carries the endogenous columns
/// among its regressors and the instruments in design.instruments. Residual
/// columns are named resid_<endogenous>. Bootstrap resamples subscribers
/// (design.row_ids), not rows.
FitResult two_sri_fit(const DesignMatrix& design, std::span<const std::string> endogenous,
                      const TwoSriOptions& opts = {});

}  // namespace corepulse
