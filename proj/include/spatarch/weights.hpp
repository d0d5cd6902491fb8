#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spatarch/errors.hpp"

namespace spatarch {

// Immutable spatial weight matrix. Validated at construction (square, zero
// diagonal, non-negative entries); the eigenvalue spectrum is computed once
// here, never lazily, so estimation threads can share a WeightMatrix freely.
class WeightMatrix {
 public:
  // `raw_adjacency`: the symmetric 0/1 (or weighted) adjacency this matrix was
  // row-normalized from, when known. It enables the symmetrized eigensolver
  // route; CSV-loaded matrices of unknown provenance use the general solver.
  static WeightMatrix from_matrix(Eigen::MatrixXd w,
                                  std::optional<Eigen::MatrixXd> raw_adjacency =
                                      std::nullopt);

  int n() const { return static_cast<int>(w_.rows()); }
  const Eigen::MatrixXd& matrix() const { return w_; }
  bool row_normalized() const { return row_normalized_; }
  bool has_real_spectrum() const { return has_spectrum_; }

  // Eigenvalues sorted ascending. Throws non_real_spectrum when the general
  // solver found imaginary parts above 1e-8; callers then use the LU route.
  const Eigen::VectorXd& spectrum() const;

  // Open interval of rho for which I - rho*W stays invertible with positive
  // determinant: (1/lambda_min, 1/lambda_max) intersected with (-0.995, 0.995).
  std::pair<double, double> admissible_interval() const;

 private:
  WeightMatrix() = default;
  Eigen::MatrixXd w_;
  Eigen::VectorXd eigenvalues_;
  bool has_spectrum_ = false;
  bool row_normalized_ = false;
};

// Queen contiguity on a side x side lattice (Chebyshev distance 1),
// row-normalized. side >= 2.
WeightMatrix build_lattice_queen(int side);

// Divides each row by its sum. Zero rows are kept and their indices reported
// through `zero_rows` (isolated nodes are data, not an error); negative
// entries are.
WeightMatrix row_normalize(const Eigen::MatrixXd& raw,
                           std::vector<int>* zero_rows = nullptr);

// ln|I - rho*W| via the cached spectrum when available, LU otherwise. Throws
// out_of_parameter_space when the determinant is not positive, i.e. rho left
// the admissible interval.
double log_det_spatial(const WeightMatrix& w, double rho);

// LU evaluation of ln|I - rho*W|; the spectrum-free route, also used as an
// independent cross-check of the spectral formula.
double log_det_lu(const Eigen::MatrixXd& w, double rho);

// d/drho ln|I - rho*W| = -sum lambda/(1 - rho*lambda); trace-based fallback
// when no real spectrum is cached.
double log_det_derivative(const WeightMatrix& w, double rho);

void save_weights_csv(const std::string& path, const WeightMatrix& w);
WeightMatrix load_weights_csv(const std::string& path);

}  // namespace spatarch
