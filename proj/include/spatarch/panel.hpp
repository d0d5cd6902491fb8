#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "spatarch/errors.hpp"

namespace spatarch {

// Balanced panel of levels. Column t-1 of `y` holds period t (t = 1..T);
// the initial condition Y_0 travels separately because it has no regressors.
// Stored column-major by period.
struct Panel {
  Eigen::VectorXd y0;               // n
  Eigen::MatrixXd y;                // n x T
  std::vector<Eigen::MatrixXd> x;   // T blocks, each n x k (k may be 0)

  int n() const { return static_cast<int>(y.rows()); }
  int T() const { return static_cast<int>(y.cols()); }
  int k() const { return x.empty() ? 0 : static_cast<int>(x.front().cols()); }

  void validate() const;  // shapes consistent, all outcomes nonzero and finite
};

// log Y^2 panel; same layout as Panel.
struct StarPanel {
  Eigen::VectorXd ystar0;           // n
  Eigen::MatrixXd ystar;            // n x T
  std::vector<Eigen::MatrixXd> x;   // shared with the source panel

  int n() const { return static_cast<int>(ystar.rows()); }
  int T() const { return static_cast<int>(ystar.cols()); }
  int k() const { return x.empty() ? 0 : static_cast<int>(x.front().cols()); }
};

// Orthonormal complements of the constant vector: Fn'Fn = I_{n-1}, Fn'1 = 0,
// Fn Fn' = J_n. Built from forward Helmert contrasts (row s of column j mixes
// periods j..T-1 only), which is the orientation the GMM moments rely on.
struct Projector {
  Eigen::MatrixXd Fn;  // n x (n-1)
  Eigen::MatrixXd FT;  // T x (T-1)
};

StarPanel log_square(const Panel& p);

Projector build_projectors(int n, int T);

// Orthonormal complement of 1_d, forward-oriented: column j combines entry j
// with the mean of entries j+1..d-1.
Eigen::MatrixXd helmert_forward(int d);

// Subtract each row's mean: V -> V (I_T - 11'/T). Demeans over time.
Eigen::MatrixXd time_demean(const Eigen::MatrixXd& v);

// V * FT, mapping n x T arrays to n x (T-1).
Eigen::MatrixXd apply_FT(const Eigen::MatrixXd& v, const Projector& proj);

// Long-format CSV: header "i,t,y,x1,...,xk"; t=0 rows carry Y_0 with empty
// regressor fields. Values are written with 17 significant digits and
// round-trip bit-exactly.
void save_panel_csv(const std::string& path, const Panel& p);
Panel load_panel_csv(const std::string& path);

// Sidecar of simulated fixed effects: rows "i_or_t,kind,value" with kind
// "mu" (spatial, index 1..n) or "alpha" (time, index 0..T).
void save_effects_csv(const std::string& path, const Eigen::VectorXd& mu,
                      const Eigen::VectorXd& alpha);

}  // namespace spatarch
