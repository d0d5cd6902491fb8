#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "spatarch/optim.hpp"
#include "spatarch/panel.hpp"
#include "spatarch/weights.hpp"

namespace spatarch {

enum class QmlApproach { transformed, direct };

struct QmlOptions {
  bool with_variance = true;
  int grid_points = 40;
  // Direct approach only: concentrate time fixed effects out along with the
  // unit effects. The transformed approach removes them by construction and
  // ignores this flag.
  bool time_effects = false;
};

struct QmlResult {
  QmlApproach approach = QmlApproach::transformed;
  double rho = 0.0;
  double gamma = 0.0;
  double delta = 0.0;
  Eigen::VectorXd beta;
  double sigma2 = 0.0;
  double loglik = 0.0;
  bool converged = false;
  bool multi_peak = false;
  bool bias_corrected = false;
  // Sandwich covariance, parameter order (gamma, delta, beta..., rho, sigma2);
  // empty when variance computation is skipped.
  Eigen::MatrixXd variance;
  Eigen::VectorXd std_errors;

  Eigen::VectorXd theta() const;  // (gamma, delta, beta..., rho, sigma2)
};

// Precomputed within-transformed arrays and Gram blocks shared by every
// profile evaluation: the residual sum of squares is an exact quadratic in
// (rho, eta), so each candidate rho costs O(k^3) instead of O(n T k).
// The transformed approach always removes both effect dimensions; the direct
// approach removes the time mean per unit, and additionally the unit mean per
// period when `time_effects` is set.
class QmlWorkspace {
 public:
  QmlWorkspace(const StarPanel& panel, const WeightMatrix& W,
               QmlApproach approach, bool time_effects = false);

  double profile_loglik(double rho) const;        // eta, sigma2 concentrated out
  double profile_derivative(double rho) const;    // central difference
  double full_loglik(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd eta_hat(double rho) const;      // (gamma, delta, beta...)
  double sigma2_hat(double rho) const;
  std::pair<double, double> admissible_interval() const;

  // Per-period analytic score contributions at theta, order matching theta().
  Eigen::MatrixXd period_scores(const Eigen::VectorXd& theta) const;

  int n() const { return n_; }
  int T() const { return T_; }
  int k() const { return k_; }
  QmlApproach approach() const { return approach_; }
  const WeightMatrix& weights() const { return *W_; }
  // Effective observation count entering the likelihood: (n-1)T under the
  // transformed approach, nT under the direct approach.
  double obs_count() const;

 private:
  const WeightMatrix* W_;
  QmlApproach approach_;
  bool center_units_ = true;            // apply Jn after the time demeaning
  int n_ = 0, T_ = 0, k_ = 0;
  Eigen::MatrixXd Yc_;                  // n x T, within-transformed outcome
  Eigen::MatrixXd MYc_;                 // n x T, within-transformed spatial term
  std::vector<Eigen::MatrixXd> Zc_;     // T blocks, n x (k+2)
  Eigen::MatrixXd Gzz_;                 // (k+2) x (k+2)
  Eigen::VectorXd bzy_, bzm_;
  double qyy_ = 0.0, qym_ = 0.0, qmm_ = 0.0;
  Eigen::LDLT<Eigen::MatrixXd> Gzz_ldlt_;

  double rss(double rho, const Eigen::VectorXd& eta) const;
  double det_term(double rho) const;       // log-determinant part, one period
  double det_term_derivative(double rho) const;
};

QmlResult estimate_qml(const StarPanel& panel, const WeightMatrix& W,
                       QmlApproach approach, const QmlOptions& options = {});

// Half-panel jackknife: refit on the two halves of the time dimension and
// combine as 2*full - mean(halves). Requires an even T of at least 6.
QmlResult jackknife_bias_correct(const StarPanel& panel, const WeightMatrix& W,
                                 QmlApproach approach,
                                 const QmlOptions& options = {});

// Sandwich covariance H^{-1} B H^{-1} with a finite-difference Hessian of the
// full log likelihood and analytic per-period outer-product scores.
Eigen::MatrixXd sandwich_variance(const QmlWorkspace& work,
                                  const Eigen::VectorXd& theta);

}  // namespace spatarch
