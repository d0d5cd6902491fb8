#include "spatarch/weights.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "spatarch/csvio.hpp"

namespace spatarch {

namespace {

constexpr double kRowSumTol = 1e-12;
constexpr double kImagTol = 1e-8;
constexpr double kRhoCap = 0.995;

bool is_symmetric(const Eigen::MatrixXd& a) {
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale;
}

}  // namespace

WeightMatrix WeightMatrix::from_matrix(Eigen::MatrixXd w,
                                       std::optional<Eigen::MatrixXd> raw) {
  const auto n = w.rows();
  if (n == 0 || w.cols() != n)
    throw Error(ErrorCode::invalid_dimension, "weight matrix must be square and non-empty");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (w(i, i) != 0.0)
      throw Error(ErrorCode::invalid_weights,
                  "weight matrix has nonzero diagonal at " + std::to_string(i));
    for (Eigen::Index j = 0; j < n; ++j)
      if (w(i, j) < 0.0 || !std::isfinite(w(i, j)))
        throw Error(ErrorCode::invalid_weights,
                    "weight matrix has negative or non-finite entry at (" +
                        std::to_string(i) + "," + std::to_string(j) + ")");
  }

  WeightMatrix out;
  out.w_ = std::move(w);
  out.row_normalized_ = true;
  for (Eigen::Index i = 0; i < n; ++i)
    if (std::abs(out.w_.row(i).sum() - 1.0) > kRowSumTol) out.row_normalized_ = false;

  // Spectrum, computed once. When the matrix is D^{-1}A with A symmetric and
  // all rows active, D^{1/2} W D^{-1/2} is symmetric, so a self-adjoint solve
  // gives exact real eigenvalues; otherwise fall back to the general solver
  // and accept the result only if imaginary parts are negligible.
  bool used_symmetric = false;
  if (raw && is_symmetric(*raw) && raw->rows() == n) {
    Eigen::VectorXd rowsum = raw->rowwise().sum();
    if ((rowsum.array() > 0).all()) {
      Eigen::VectorXd dinv_sqrt = rowsum.array().rsqrt();
      Eigen::MatrixXd sym =
          dinv_sqrt.asDiagonal() * (*raw) * dinv_sqrt.asDiagonal();
      sym = 0.5 * (sym + sym.transpose().eval());
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
      out.eigenvalues_ = es.eigenvalues();
      out.has_spectrum_ = true;
      used_symmetric = true;
    }
  }
  if (!used_symmetric) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(out.w_);
    const double scale = std::max(1.0, out.w_.cwiseAbs().maxCoeff());
    if (es.eigenvalues().imag().cwiseAbs().maxCoeff() <= kImagTol * scale) {
      out.eigenvalues_ = es.eigenvalues().real();
      std::sort(out.eigenvalues_.data(), out.eigenvalues_.data() + n);
      out.has_spectrum_ = true;
    }
  }
  return out;
}

const Eigen::VectorXd& WeightMatrix::spectrum() const {
  if (!has_spectrum_)
    throw Error(ErrorCode::non_real_spectrum,
                "weight matrix spectrum has non-negligible imaginary parts; "
                "use the LU determinant route");
  return eigenvalues_;
}

std::pair<double, double> WeightMatrix::admissible_interval() const {
  const Eigen::VectorXd& ev = spectrum();
  const double lmin = ev(0);
  const double lmax = ev(ev.size() - 1);
  double lo = lmin < -kRowSumTol ? 1.0 / lmin : -kRhoCap;
  double hi = lmax > kRowSumTol ? 1.0 / lmax : kRhoCap;
  return {std::max(lo, -kRhoCap), std::min(hi, kRhoCap)};
}

WeightMatrix build_lattice_queen(int side) {
  if (side < 2)
    throw Error(ErrorCode::invalid_dimension,
                "lattice side must be at least 2, got " + std::to_string(side));
  const int n = side * side;
  Eigen::MatrixXd adj = Eigen::MatrixXd::Zero(n, n);
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c)
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          const int rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= side || cc < 0 || cc >= side) continue;
          adj(r * side + c, rr * side + cc) = 1.0;
        }
  return row_normalize(adj);
}

WeightMatrix row_normalize(const Eigen::MatrixXd& raw, std::vector<int>* zero_rows) {
  const auto n = raw.rows();
  if (n == 0 || raw.cols() != n)
    throw Error(ErrorCode::invalid_dimension, "weight matrix must be square and non-empty");
  Eigen::MatrixXd w = raw;
  bool any_zero = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j)
      if (raw(i, j) < 0.0)
        throw Error(ErrorCode::invalid_weights,
                    "cannot row-normalize a matrix with negative entries");
    const double s = raw.row(i).sum();
    if (s > 0.0) {
      w.row(i) /= s;
    } else {
      any_zero = true;
      if (zero_rows) zero_rows->push_back(static_cast<int>(i));
    }
  }
  return WeightMatrix::from_matrix(
      std::move(w), any_zero ? std::nullopt : std::optional<Eigen::MatrixXd>(raw));
}

double log_det_spatial(const WeightMatrix& w, double rho) {
  if (!std::isfinite(rho))
    throw Error(ErrorCode::out_of_parameter_space, "rho is not finite");
  if (w.has_real_spectrum()) {
    const Eigen::VectorXd& ev = w.spectrum();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
      const double term = 1.0 - rho * ev(i);
      if (term <= 0.0)
        throw Error(ErrorCode::out_of_parameter_space,
                    "1 - rho*lambda is not positive at rho=" + std::to_string(rho));
      acc += std::log(term);
    }
    return acc;
  }
  return log_det_lu(w.matrix(), rho);
}

double log_det_lu(const Eigen::MatrixXd& w, double rho) {
  const auto n = w.rows();
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - rho * w;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  double log_abs = 0.0;
  double sign = lu.permutationP().determinant();  // +1 or -1
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = lu.matrixLU()(i, i);
    if (d == 0.0 || !std::isfinite(d))
      throw Error(ErrorCode::out_of_parameter_space,
                  "I - rho*W is singular at rho=" + std::to_string(rho));
    if (d < 0.0) sign = -sign;
    log_abs += std::log(std::abs(d));
  }
  if (sign <= 0.0)
    throw Error(ErrorCode::out_of_parameter_space,
                "det(I - rho*W) is negative at rho=" + std::to_string(rho));
  return log_abs;
}

double log_det_derivative(const WeightMatrix& w, double rho) {
  if (w.has_real_spectrum()) {
    const Eigen::VectorXd& ev = w.spectrum();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
      const double term = 1.0 - rho * ev(i);
      if (term <= 0.0)
        throw Error(ErrorCode::out_of_parameter_space,
                    "1 - rho*lambda is not positive at rho=" + std::to_string(rho));
      acc -= ev(i) / term;
    }
    return acc;
  }
  const auto n = w.n();
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - rho * w.matrix();
  return -a.partialPivLu().solve(w.matrix()).trace();
}

void save_weights_csv(const std::string& path, const WeightMatrix& w) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot open for writing: " + path);
  const Eigen::MatrixXd& m = w.matrix();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << csv::fmt(m(i, j));
    }
    out << '\n';
  }
  if (!out.good()) throw Error(ErrorCode::io, "write failed: " + path);
}

WeightMatrix load_weights_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> vals;
    for (const std::string& tok : csv::split(line))
      vals.push_back(csv::parse_double(tok, path, lineno));
    if (!rows.empty() && vals.size() != rows.front().size())
      throw Error(ErrorCode::config,
                  path + ":" + std::to_string(lineno) + ": ragged row in weights grid");
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw Error(ErrorCode::config, path + ": empty weights file");
  if (rows.size() != rows.front().size())
    throw Error(ErrorCode::config, path + ": weights grid is not square");
  const int n = static_cast<int>(rows.size());
  Eigen::MatrixXd w(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) w(i, j) = rows[i][j];
  return WeightMatrix::from_matrix(std::move(w));
}

}  // namespace spatarch
