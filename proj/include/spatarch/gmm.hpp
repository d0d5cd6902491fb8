#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "spatarch/panel.hpp"
#include "spatarch/weights.hpp"

namespace spatarch {

// Forward orthogonal deviations of the estimation equation plus the
// instrument blocks. Transformed arrays have T-1 periods; the instrument lags
// stay untransformed so the moment conditions hold exactly at the truth.
struct GmmArrays {
  Eigen::MatrixXd y;       // n x (T-1), transformed outcome
  Eigen::MatrixXd my;      // n x (T-1), transformed spatial term
  Eigen::MatrixXd lag;     // n x (T-1), transformed own lag
  Eigen::MatrixXd mlag;    // n x (T-1), transformed spatial lag
  std::vector<Eigen::MatrixXd> x;  // T-1 blocks, n x k, transformed
  Eigen::MatrixXd inst_lag;        // n x (T-1), untransformed lag levels
  Eigen::MatrixXd inst_wlag;       // W * inst_lag
  Eigen::MatrixXd inst_w2lag;      // W^2 * inst_lag
  std::vector<Eigen::MatrixXd> inst_wx;  // T-1 blocks, W * x
  int n() const { return static_cast<int>(y.rows()); }
  int periods() const { return static_cast<int>(y.cols()); }
  int k() const { return x.empty() ? 0 : static_cast<int>(x.front().cols()); }
};

GmmArrays transform_for_gmm(const StarPanel& panel, const WeightMatrix& W);

// Quadratic-moment matrices: trace-adjusted so each stays orthogonal to the
// cross-sectional demeaning projector.
std::vector<Eigen::MatrixXd> build_default_moments(const WeightMatrix& W);

// Per-(W, moment basis) quantities reused across replications on the same
// design cell.
struct GmmStatics {
  std::vector<Eigen::MatrixXd> P;     // moment matrices, n x n
  std::vector<Eigen::MatrixXd> PJ;    // Jn P Jn
  std::vector<Eigen::VectorXd> dPJ;   // diag(Jn P Jn)
  Eigen::MatrixXd trace_pair;         // tr(PJ_j (PJ_l + PJ_l')), one period
};

GmmStatics build_gmm_statics(const WeightMatrix& W);

// Stacked data for the moment system in the composite-coefficient form
// u(theta) = D c(theta), c = (1, -rho, -gamma, -delta, -beta')'.
struct MomentSystem {
  int n = 0, periods = 0, k = 0;
  int n_quad = 0, n_lin = 0;
  Eigen::MatrixXd D;     // N x (k+4), uncentered transformed data
  Eigen::MatrixXd DJ;    // N x (k+4), per-period cross-sectionally centered
  Eigen::MatrixXd Q;     // N x n_lin, pruned instrument block
  Eigen::MatrixXd QJ;    // centered instruments
  std::vector<Eigen::MatrixXd> S;  // quadratic Gram blocks DJ'(I(x)P_j)DJ
  Eigen::MatrixXd L;     // QJ' DJ
  std::vector<Eigen::VectorXd> d;  // stacked diag(Jn P_j Jn), length N
  Eigen::MatrixXd trace_pair;
  int N() const { return n * periods; }
  int n_moments() const { return n_quad + n_lin; }
  int n_params() const { return k + 3; }
  Eigen::VectorXd composite(const Eigen::VectorXd& theta) const;  // c(theta)
  Eigen::VectorXd residuals(const Eigen::VectorXd& theta) const;  // D c
};

MomentSystem assemble_moment_system(const GmmArrays& arrays,
                                    const GmmStatics& statics);

// Sample moments g(theta), their analytic Jacobian, and the asymptotic
// covariance estimate of sqrt(N) g(theta0) built from residual moments taken
// net of per-period cross-sectional means.
Eigen::VectorXd moment_vector(const MomentSystem& sys,
                              const Eigen::VectorXd& theta);
Eigen::MatrixXd moment_jacobian(const MomentSystem& sys,
                                const Eigen::VectorXd& theta);
Eigen::MatrixXd weight_matrix_estimate(const MomentSystem& sys,
                                       const Eigen::VectorXd& residuals);

struct GmmOptions {
  bool with_variance = true;
  std::optional<Eigen::VectorXd> initial;  // (rho, gamma, delta, beta...)
  const GmmStatics* statics = nullptr;
  int max_iterations = 200;
};

struct GmmResult {
  double rho = 0.0;
  double gamma = 0.0;
  double delta = 0.0;
  Eigen::VectorXd beta;
  double sigma2 = 0.0;      // variance of transformed residuals, per-period means removed
  double j_stat = 0.0;
  int j_df = 0;
  double objective = 0.0;   // step-two criterion at the optimum
  bool converged = false;
  bool identity_weight_fallback = false;
  Eigen::MatrixXd variance;     // order (rho, gamma, delta, beta...)
  Eigen::VectorXd std_errors;

  Eigen::VectorXd theta() const;  // (rho, gamma, delta, beta...)
};

GmmResult estimate_gmm(const StarPanel& panel, const WeightMatrix& W,
                       const GmmOptions& options = {});

}  // namespace spatarch
