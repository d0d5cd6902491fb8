#include "spatarch/dgp.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <cmath>

#include "spatarch/rng.hpp"

namespace spatarch {

namespace {

constexpr double kEuler = 0.57721566490153286060651209008240;
constexpr double kPi = 3.14159265358979323846264338327950;
constexpr double kZeta3 = 1.20205690315959428539973816151145;

void validate_config(const DgpConfig& cfg) {
  if (!cfg.W) throw Error(ErrorCode::config, "simulate: weight matrix is required");
  if (cfg.T < 1) throw Error(ErrorCode::config, "simulate: T must be at least 1");
  if (cfg.burn_in < 0) throw Error(ErrorCode::config, "simulate: burn_in must be >= 0");
  if (cfg.sigma_mu < 0 || cfg.sigma_alpha < 0)
    throw Error(ErrorCode::config, "simulate: effect scales must be non-negative");
  if (cfg.W->has_real_spectrum()) {
    const auto [lo, hi] = cfg.W->admissible_interval();
    if (cfg.rho <= lo || cfg.rho >= hi)
      throw Error(ErrorCode::out_of_parameter_space,
                  "rho=" + std::to_string(cfg.rho) + " outside admissible interval (" +
                      std::to_string(lo) + ", " + std::to_string(hi) + ")");
  }
  if (!cfg.shifts.alpha.empty() &&
      static_cast<int>(cfg.shifts.alpha.size()) != cfg.T + 1)
    throw Error(ErrorCode::config,
                "simulate: alpha shift vector must cover periods 0..T");
}

}  // namespace

double reduced_form_radius(const WeightMatrix& w, double rho, double gamma,
                           double delta) {
  const int n = w.n();
  Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(n, n) - rho * w.matrix();
  Eigen::MatrixXd rhs = gamma * Eigen::MatrixXd::Identity(n, n) + delta * w.matrix();
  Eigen::MatrixXd a = lhs.partialPivLu().solve(rhs);
  Eigen::EigenSolver<Eigen::MatrixXd> es(a, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

SimOutput simulate(const DgpConfig& cfg) {
  validate_config(cfg);
  const int n = cfg.W->n();
  const int T = cfg.T;
  const int k = static_cast<int>(cfg.beta.size());
  const double radius = reduced_form_radius(*cfg.W, cfg.rho, cfg.gamma, cfg.delta);
  if (radius >= 1.0 - 1e-8)
    throw Error(ErrorCode::nonstationary,
                "reduced-form spectral radius " + std::to_string(radius) +
                    " is not below 1");

  CounterRng rng_mu(cfg.seed, cfg.cell, cfg.replication, CounterRng::kMu);
  CounterRng rng_alpha(cfg.seed, cfg.cell, cfg.replication, CounterRng::kAlpha);
  CounterRng rng_x(cfg.seed, cfg.cell, cfg.replication, CounterRng::kX);
  CounterRng rng_eps(cfg.seed, cfg.cell, cfg.replication, CounterRng::kEps);

  Eigen::VectorXd mu(n);
  for (int i = 0; i < n; ++i) mu(i) = cfg.sigma_mu * rng_mu.normal();
  mu.array() += cfg.shifts.mu;

  Eigen::PartialPivLU<Eigen::MatrixXd> lhs_lu(
      Eigen::MatrixXd::Identity(n, n) - cfg.rho * cfg.W->matrix());

  const double eps_mean = log_chi2_mean();
  const double eps_sd = std::sqrt(log_chi2_variance());

  SimOutput out;
  out.spectral_radius = radius;
  out.mu = mu;
  out.alpha = Eigen::VectorXd::Zero(T + 1);
  out.ystar.resize(n, T + 1);
  out.panel.y0.resize(n);
  out.panel.y.resize(n, T);
  out.panel.x.assign(T, Eigen::MatrixXd(n, k));

  Eigen::VectorXd state = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd eps_star(n), sign(n), rhs(n);
  Eigen::MatrixXd xt(n, k);

  // Without burn-in, period 0 is the zero initial state itself: it is not
  // generated, carries no shock or effect, and its level is exp(0) = 1.
  if (cfg.burn_in == 0) {
    out.ystar.col(0).setZero();
    out.panel.y0.setOnes();
  }

  // Periods -burn_in+1 .. T; the state at -burn_in is zero.
  for (int t = -cfg.burn_in + 1; t <= T; ++t) {
    double alpha_t = 0.0;
    if (cfg.use_time_effects) alpha_t = cfg.sigma_alpha * rng_alpha.normal();
    if (t >= 0 && !cfg.shifts.alpha.empty()) alpha_t += cfg.shifts.alpha[t];

    for (int j = 0; j < k; ++j)
      for (int i = 0; i < n; ++i) xt(i, j) = rng_x.normal();

    switch (cfg.errors) {
      case ErrorKind::log_chi2:
        for (int i = 0; i < n; ++i) {
          const double z = rng_eps.normal();
          eps_star(i) = std::log(z * z);
          sign(i) = z < 0 ? -1.0 : 1.0;
        }
        break;
      case ErrorKind::gaussian:
        for (int i = 0; i < n; ++i) {
          eps_star(i) = eps_mean + eps_sd * rng_eps.normal();
          sign(i) = rng_eps.uniform() < 0.5 ? -1.0 : 1.0;
        }
        break;
      case ErrorKind::constant:
        eps_star.setConstant(eps_mean);
        sign.setOnes();
        break;
    }
    eps_star.array() += cfg.shifts.eps_star;

    rhs = cfg.gamma * state + cfg.delta * (cfg.W->matrix() * state) + mu + eps_star;
    if (k > 0) rhs += xt * cfg.beta;
    rhs.array() += alpha_t;
    state = lhs_lu.solve(rhs);

    if (t >= 0) {
      out.ystar.col(t) = state;
      out.alpha(t) = alpha_t;
      Eigen::VectorXd levels = sign.array() * (state.array() / 2.0).exp();
      if (t == 0) {
        out.panel.y0 = levels;
      } else {
        out.panel.y.col(t - 1) = levels;
        out.panel.x[t - 1] = xt;
      }
    }
  }
  return out;
}

double log_chi2_density(double x) {
  return std::exp(-0.5 * (std::exp(x) - x)) / std::sqrt(2.0 * kPi);
}

double log_chi2_mean() { return -kEuler - std::log(2.0); }

double log_chi2_variance() { return kPi * kPi / 2.0; }

// Central moments of log chi^2_1 follow from log-gamma cumulants:
// kappa_3 = psi''(1/2) = -14 zeta(3), kappa_4 = psi'''(1/2) = pi^4, and
// m4 = kappa_4 + 3 kappa_2^2 = (7/4) pi^4.
double log_chi2_third_central() { return -14.0 * kZeta3; }

double log_chi2_fourth_central() {
  const double pi4 = kPi * kPi * kPi * kPi;
  return 1.75 * pi4;
}

}  // namespace spatarch
