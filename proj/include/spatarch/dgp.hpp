#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <vector>

#include "spatarch/panel.hpp"
#include "spatarch/weights.hpp"

namespace spatarch {

// Error distribution for the volatility equation. log_chi2 is the model's
// own distribution (log of a squared standard normal); gaussian matches its
// first two moments and serves as the information-equality placebo; constant
// pins every error at the log-chi^2 mean for noiseless identification tests.
enum class ErrorKind { log_chi2, gaussian, constant };

// Additive perturbations applied to the generating inputs while reusing the
// same random draws; the invariance tests feed shifted and unshifted panels
// to every estimator. `alpha` is indexed by output period 0..T.
struct EffectShifts {
  double mu = 0.0;
  std::vector<double> alpha;
  double eps_star = 0.0;

  bool any() const { return mu != 0.0 || eps_star != 0.0 || !alpha.empty(); }
};

struct DgpConfig {
  std::shared_ptr<const WeightMatrix> W;
  int T = 0;
  double rho = 0.0;
  double gamma = 0.0;
  double delta = 0.0;
  Eigen::VectorXd beta;            // k coefficients; k = 0 drops regressors
  double sigma_mu = 1.0;           // spatial effects ~ N(0, sigma_mu^2)
  bool use_time_effects = false;   // alpha_t ~ N(0, sigma_alpha^2) when true
  double sigma_alpha = 1.0;
  int burn_in = 100;
  std::uint64_t seed = 0;
  std::uint32_t cell = 0;          // Monte Carlo cell index
  std::uint32_t replication = 0;   // Monte Carlo replication index
  ErrorKind errors = ErrorKind::log_chi2;
  EffectShifts shifts;
};

struct SimOutput {
  Panel panel;
  Eigen::MatrixXd ystar;     // n x (T+1), log Y^2 including period 0
  Eigen::VectorXd mu;        // n, includes any shift
  Eigen::VectorXd alpha;     // T+1 (periods 0..T), includes any shift
  double spectral_radius;    // of (I - rho W)^{-1} (gamma I + delta W)
};

// Iterates the reduced form Y*_t = (I - rho W)^{-1}(gamma Y*_{t-1}
// + delta W Y*_{t-1} + X_t beta + mu + alpha_t 1 + eps*_t) from a zero state
// through `burn_in` discarded periods, then returns periods 0..T. Levels are
// recovered as Y = sign(eps) exp(Y*/2). Draw order is fixed per stream
// (mu, alpha, X, eps), so identical configs give bit-identical panels on any
// thread count.
SimOutput simulate(const DgpConfig& cfg);

// Spectral radius of the reduced-form propagator; simulate() rejects
// configurations where it reaches 1.
double reduced_form_radius(const WeightMatrix& w, double rho, double gamma,
                           double delta);

// Density of log chi^2_1 (the distribution of log eps^2 for standard normal
// eps): p(x) = exp(-(exp(x) - x)/2) / sqrt(2 pi).
double log_chi2_density(double x);

// Exact moments: mean -euler - ln 2, variance pi^2/2, and the third/fourth
// central moments (polygamma values at 1/2), validated against a simulation
// oracle in the tests.
double log_chi2_mean();
double log_chi2_variance();
double log_chi2_third_central();
double log_chi2_fourth_central();

}  // namespace spatarch
