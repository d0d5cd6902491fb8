#include "spatarch/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "spatarch/errors.hpp"

namespace spatarch {

namespace {

Eigen::MatrixXd center_columns(const Eigen::MatrixXd& m) {
  return m.rowwise() - m.colwise().mean();
}

// Jn A Jn for the cross-sectional demeaning projector Jn = I - 11'/n.
Eigen::MatrixXd double_center(const Eigen::MatrixXd& a) {
  Eigen::MatrixXd c = a;
  c.rowwise() -= a.colwise().mean();
  c.colwise() -= c.rowwise().mean().eval();
  return c;
}

Eigen::MatrixXd apply_fod(const Eigen::MatrixXd& series,
                          const Eigen::MatrixXd& F) {
  return series * F;
}

}  // namespace

GmmArrays transform_for_gmm(const StarPanel& panel, const WeightMatrix& W) {
  const int n = panel.n();
  const int T = panel.T();
  if (n != W.n())
    throw Error(ErrorCode::invalid_dimension,
                "panel cross-section size does not match the weight matrix");
  if (T < 2)
    throw Error(ErrorCode::invalid_dimension,
                "orthogonal deviations need at least two periods");

  Eigen::MatrixXd Y = panel.ystar;
  Eigen::MatrixXd Lag(n, T);
  Lag.col(0) = panel.ystar0;
  if (T > 1) Lag.rightCols(T - 1) = panel.ystar.leftCols(T - 1);
  Eigen::MatrixXd MY = W.matrix() * Y;
  Eigen::MatrixXd MLag = W.matrix() * Lag;

  const Eigen::MatrixXd F = helmert_forward(T);  // T x (T-1)

  GmmArrays out;
  out.y = apply_fod(Y, F);
  out.my = apply_fod(MY, F);
  out.lag = apply_fod(Lag, F);
  out.mlag = apply_fod(MLag, F);
  const int k = panel.k();
  out.x.resize(static_cast<std::size_t>(T - 1));
  for (int j = 0; j < T - 1; ++j) {
    Eigen::MatrixXd xj = Eigen::MatrixXd::Zero(n, k);
    for (int t = 0; t < T; ++t)
      if (F(t, j) != 0.0) xj += F(t, j) * panel.x[static_cast<std::size_t>(t)];
    out.x[static_cast<std::size_t>(j)] = xj;
  }

  // Lag instruments stay in levels: the deviation at index j only involves
  // errors dated j+1 and later, so the level lag dated j is orthogonal to
  // every transformed error.  Using the transformed lag itself instead would
  // violate the linear moment conditions at the truth by O(1/T).
  out.inst_lag = Lag.leftCols(T - 1);
  out.inst_wlag = W.matrix() * out.inst_lag;
  out.inst_w2lag = W.matrix() * out.inst_wlag;
  out.inst_wx.resize(static_cast<std::size_t>(T - 1));
  for (int j = 0; j < T - 1; ++j)
    out.inst_wx[static_cast<std::size_t>(j)] =
        W.matrix() * out.x[static_cast<std::size_t>(j)];
  return out;
}

std::vector<Eigen::MatrixXd> build_default_moments(const WeightMatrix& W) {
  const int n = W.n();
  const Eigen::MatrixXd& M = W.matrix();
  auto centered_trace = [n](const Eigen::MatrixXd& a) {
    // tr(Jn A Jn) = tr(A) - 1'A1/n.
    return a.trace() - a.sum() / static_cast<double>(n);
  };
  std::vector<Eigen::MatrixXd> P;
  Eigen::MatrixXd WtW = M.transpose() * M;
  P.push_back(M - (centered_trace(M) / (n - 1.0)) *
                      Eigen::MatrixXd::Identity(n, n));
  P.push_back(WtW - (centered_trace(WtW) / (n - 1.0)) *
                        Eigen::MatrixXd::Identity(n, n));
  for (const auto& p : P) {
    if (std::abs(centered_trace(p)) > 1e-8 * (1.0 + p.cwiseAbs().maxCoeff()))
      throw Error(ErrorCode::numeric,
                  "quadratic moment matrix failed the centered-trace check");
  }
  return P;
}

GmmStatics build_gmm_statics(const WeightMatrix& W) {
  GmmStatics s;
  s.P = build_default_moments(W);
  const int m = static_cast<int>(s.P.size());
  s.PJ.reserve(s.P.size());
  s.dPJ.reserve(s.P.size());
  for (const auto& p : s.P) {
    Eigen::MatrixXd pj = double_center(p);
    s.dPJ.push_back(pj.diagonal());
    s.PJ.push_back(std::move(pj));
  }
  s.trace_pair.resize(m, m);
  for (int j = 0; j < m; ++j)
    for (int l = 0; l < m; ++l)
      s.trace_pair(j, l) =
          s.PJ[static_cast<std::size_t>(j)]
              .cwiseProduct(s.PJ[static_cast<std::size_t>(l)] +
                            s.PJ[static_cast<std::size_t>(l)].transpose())
              .sum();
  return s;
}

Eigen::VectorXd MomentSystem::composite(const Eigen::VectorXd& theta) const {
  if (theta.size() != k + 3)
    throw Error(ErrorCode::invalid_dimension, "composite: bad theta length");
  Eigen::VectorXd c(k + 4);
  c(0) = 1.0;
  c.tail(k + 3) = -theta;
  return c;
}

Eigen::VectorXd MomentSystem::residuals(const Eigen::VectorXd& theta) const {
  return D * composite(theta);
}

MomentSystem assemble_moment_system(const GmmArrays& arrays,
                                    const GmmStatics& statics) {
  MomentSystem sys;
  sys.n = arrays.n();
  sys.periods = arrays.periods();
  sys.k = arrays.k();
  sys.n_quad = static_cast<int>(statics.P.size());
  const int n = sys.n, T1 = sys.periods, k = sys.k;
  const int N = n * T1;
  const int pc = k + 4;

  sys.D.resize(N, pc);
  sys.DJ.resize(N, pc);
  const int n_inst_raw = 3 + 2 * k;
  Eigen::MatrixXd Qraw(N, n_inst_raw);
  Eigen::MatrixXd QrawJ(N, n_inst_raw);
  for (int t = 0; t < T1; ++t) {
    Eigen::MatrixXd block(n, pc);
    block.col(0) = arrays.y.col(t);
    block.col(1) = arrays.my.col(t);
    block.col(2) = arrays.lag.col(t);
    block.col(3) = arrays.mlag.col(t);
    if (k > 0) block.rightCols(k) = arrays.x[static_cast<std::size_t>(t)];
    sys.D.middleRows(t * n, n) = block;
    sys.DJ.middleRows(t * n, n) = center_columns(block);

    Eigen::MatrixXd inst(n, n_inst_raw);
    inst.col(0) = arrays.inst_lag.col(t);
    inst.col(1) = arrays.inst_wlag.col(t);
    inst.col(2) = arrays.inst_w2lag.col(t);
    if (k > 0) {
      inst.middleCols(3, k) = arrays.x[static_cast<std::size_t>(t)];
      inst.rightCols(k) = arrays.inst_wx[static_cast<std::size_t>(t)];
    }
    Qraw.middleRows(t * n, n) = inst;
    QrawJ.middleRows(t * n, n) = center_columns(inst);
  }

  // Drop instrument columns that are linearly redundant after centering.
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(QrawJ);
  qr.setThreshold(1e-10);
  const int rank = static_cast<int>(qr.rank());
  if (rank < 1)
    throw Error(ErrorCode::degenerate_instruments,
                "instrument block has no linearly independent column");
  std::vector<int> keep(qr.colsPermutation().indices().data(),
                        qr.colsPermutation().indices().data() + rank);
  std::sort(keep.begin(), keep.end());
  sys.n_lin = rank;
  sys.Q.resize(N, rank);
  sys.QJ.resize(N, rank);
  for (int j = 0; j < rank; ++j) {
    sys.Q.col(j) = Qraw.col(keep[static_cast<std::size_t>(j)]);
    sys.QJ.col(j) = QrawJ.col(keep[static_cast<std::size_t>(j)]);
  }
  if (sys.n_moments() < sys.n_params())
    throw Error(ErrorCode::degenerate_instruments,
                "fewer moment conditions than parameters after pruning");

  sys.S.resize(static_cast<std::size_t>(sys.n_quad));
  for (int j = 0; j < sys.n_quad; ++j) {
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(pc, pc);
    const Eigen::MatrixXd& P = statics.P[static_cast<std::size_t>(j)];
    for (int t = 0; t < T1; ++t) {
      const auto block = sys.DJ.middleRows(t * n, n);
      s.noalias() += block.transpose() * (P * block);
    }
    sys.S[static_cast<std::size_t>(j)] = 0.5 * (s + s.transpose());
  }
  sys.L = sys.QJ.transpose() * sys.DJ;

  sys.d.resize(static_cast<std::size_t>(sys.n_quad));
  for (int j = 0; j < sys.n_quad; ++j) {
    Eigen::VectorXd dj(N);
    for (int t = 0; t < T1; ++t)
      dj.segment(t * n, n) = statics.dPJ[static_cast<std::size_t>(j)];
    sys.d[static_cast<std::size_t>(j)] = dj;
  }
  sys.trace_pair = static_cast<double>(T1) * statics.trace_pair;
  return sys;
}

Eigen::VectorXd moment_vector(const MomentSystem& sys,
                              const Eigen::VectorXd& theta) {
  const Eigen::VectorXd c = sys.composite(theta);
  Eigen::VectorXd g(sys.n_moments());
  for (int j = 0; j < sys.n_quad; ++j)
    g(j) = c.dot(sys.S[static_cast<std::size_t>(j)] * c);
  g.tail(sys.n_lin) = sys.L * c;
  return g / static_cast<double>(sys.N());
}

Eigen::MatrixXd moment_jacobian(const MomentSystem& sys,
                                const Eigen::VectorXd& theta) {
  const Eigen::VectorXd c = sys.composite(theta);
  Eigen::MatrixXd G(sys.n_moments(), sys.n_params());
  for (int j = 0; j < sys.n_quad; ++j) {
    const Eigen::VectorXd sc = sys.S[static_cast<std::size_t>(j)] * c;
    G.row(j) = -2.0 * sc.tail(sys.n_params()).transpose();
  }
  G.bottomRows(sys.n_lin) = -sys.L.rightCols(sys.n_params());
  return G / static_cast<double>(sys.N());
}

Eigen::MatrixXd weight_matrix_estimate(const MomentSystem& sys,
                                       const Eigen::VectorXd& residuals) {
  const double N = static_cast<double>(sys.N());
  if (residuals.size() != sys.N())
    throw Error(ErrorCode::invalid_dimension,
                "weight_matrix_estimate: residual length mismatch");
  // Center per period, matching the Jn-projected moment blocks the matrix
  // weighs; this also keeps the estimate unchanged under time-effect shifts,
  // which the deviations turn into per-period constants.
  Eigen::ArrayXd u(residuals.size());
  for (int t = 0; t < sys.periods; ++t) {
    const auto seg = residuals.segment(t * sys.n, sys.n);
    u.segment(t * sys.n, sys.n) = seg.array() - seg.mean();
  }
  const double m2 = (u * u).mean();
  const double m3 = (u * u * u).mean();
  const double m4 = (u * u * u * u).mean();

  const int nm = sys.n_moments();
  Eigen::MatrixXd omega(nm, nm);
  for (int j = 0; j < sys.n_quad; ++j) {
    for (int l = j; l < sys.n_quad; ++l) {
      const double dd = sys.d[static_cast<std::size_t>(j)].dot(
          sys.d[static_cast<std::size_t>(l)]);
      const double v =
          ((m4 - 3.0 * m2 * m2) * dd + m2 * m2 * sys.trace_pair(j, l)) / N;
      omega(j, l) = v;
      omega(l, j) = v;
    }
  }
  for (int j = 0; j < sys.n_quad; ++j) {
    const Eigen::RowVectorXd cross =
        m3 * (sys.d[static_cast<std::size_t>(j)].transpose() * sys.QJ) / N;
    omega.block(j, sys.n_quad, 1, sys.n_lin) = cross;
    omega.block(sys.n_quad, j, sys.n_lin, 1) = cross.transpose();
  }
  omega.bottomRightCorner(sys.n_lin, sys.n_lin) =
      m2 * (sys.QJ.transpose() * sys.QJ) / N;
  return omega;
}

Eigen::VectorXd GmmResult::theta() const {
  Eigen::VectorXd th(beta.size() + 3);
  th(0) = rho;
  th(1) = gamma;
  th(2) = delta;
  th.tail(beta.size()) = beta;
  return th;
}

namespace {

// Levenberg-damped Gauss-Newton on the quadratic-form criterion g'Ag with the
// analytic moment Jacobian.
Eigen::VectorXd minimize_criterion(const MomentSystem& sys,
                                   const Eigen::MatrixXd& A,
                                   Eigen::VectorXd theta, int max_iterations,
                                   bool* converged, double* objective) {
  Eigen::VectorXd g = moment_vector(sys, theta);
  double psi = g.dot(A * g);
  const double gtol = 1e-9 * std::max(1.0, psi);
  double lambda = 1e-3;
  *converged = false;
  for (int it = 0; it < max_iterations; ++it) {
    const Eigen::MatrixXd G = moment_jacobian(sys, theta);
    const Eigen::VectorXd grad = 2.0 * G.transpose() * (A * g);
    if (grad.lpNorm<Eigen::Infinity>() <= gtol) {
      *converged = true;
      break;
    }
    const Eigen::MatrixXd H = 2.0 * G.transpose() * A * G;
    const Eigen::VectorXd dscale = H.diagonal().cwiseMax(
        1e-12 * std::max(1.0, H.diagonal().maxCoeff()));
    bool accepted = false;
    for (int trial = 0; trial < 60 && !accepted; ++trial) {
      const Eigen::MatrixXd M =
          H + lambda * dscale.asDiagonal().toDenseMatrix();
      const Eigen::VectorXd step = M.ldlt().solve(-grad);
      if (!step.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      const Eigen::VectorXd cand = theta + step;
      const Eigen::VectorXd gc = moment_vector(sys, cand);
      const double psic = gc.dot(A * gc);
      if (std::isfinite(psic) && psic <= psi) {
        const double rel_step =
            step.lpNorm<Eigen::Infinity>() /
            (1.0 + theta.lpNorm<Eigen::Infinity>());
        const double gain = psi - psic;
        theta = cand;
        g = gc;
        psi = psic;
        lambda = std::max(lambda / 3.0, 1e-14);
        accepted = true;
        if (rel_step <= 1e-11 || gain <= 1e-15 * std::max(1.0, psi))
          *converged = true;
      } else {
        lambda *= 10.0;
      }
      if (lambda > 1e14) break;
    }
    if (!accepted) {
      const Eigen::VectorXd grad_now =
          2.0 * moment_jacobian(sys, theta).transpose() * (A * g);
      *converged = grad_now.lpNorm<Eigen::Infinity>() <= gtol;
      break;
    }
    if (*converged) break;
  }
  *objective = psi;
  return theta;
}

}  // namespace

GmmResult estimate_gmm(const StarPanel& panel, const WeightMatrix& W,
                       const GmmOptions& options) {
  const GmmArrays arrays = transform_for_gmm(panel, W);
  GmmStatics local_statics;
  const GmmStatics* statics = options.statics;
  if (statics == nullptr) {
    local_statics = build_gmm_statics(W);
    statics = &local_statics;
  }
  const MomentSystem sys = assemble_moment_system(arrays, *statics);
  const int np = sys.n_params();

  Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(np);
  if (options.initial) {
    if (options.initial->size() != np)
      throw Error(ErrorCode::invalid_dimension,
                  "initial point has the wrong parameter count");
    theta0 = *options.initial;
  }

  const Eigen::MatrixXd identity =
      Eigen::MatrixXd::Identity(sys.n_moments(), sys.n_moments());
  bool conv1 = false;
  double psi1 = 0.0;
  const Eigen::VectorXd theta1 =
      minimize_criterion(sys, identity, theta0, options.max_iterations, &conv1,
                         &psi1);

  GmmResult r;
  const Eigen::VectorXd u1 = sys.residuals(theta1);
  Eigen::MatrixXd A2 = identity;
  Eigen::MatrixXd omega = weight_matrix_estimate(sys, u1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(omega);
  if (es.info() != Eigen::Success || !omega.allFinite() ||
      es.eigenvalues().maxCoeff() <= 0.0) {
    r.identity_weight_fallback = true;
  } else {
    const double clip = 1e-10 * es.eigenvalues().maxCoeff();
    const Eigen::VectorXd inv_eigs =
        es.eigenvalues().cwiseMax(clip).cwiseInverse();
    A2 = es.eigenvectors() * inv_eigs.asDiagonal() *
         es.eigenvectors().transpose();
  }

  bool conv2 = false;
  double psi2 = 0.0;
  const Eigen::VectorXd theta2 = minimize_criterion(
      sys, A2, theta1, options.max_iterations, &conv2, &psi2);

  r.rho = theta2(0);
  r.gamma = theta2(1);
  r.delta = theta2(2);
  r.beta = theta2.tail(sys.k);
  r.converged = conv1 && conv2;
  r.objective = psi2;
  r.j_stat = static_cast<double>(sys.N()) * psi2;
  r.j_df = sys.n_moments() - np;
  const Eigen::VectorXd u2 = sys.residuals(theta2);
  double ss = 0.0;
  for (int t = 0; t < sys.periods; ++t) {
    const auto seg = u2.segment(t * sys.n, sys.n);
    ss += (seg.array() - seg.mean()).square().sum();
  }
  r.sigma2 = ss / static_cast<double>(sys.N());

  if (options.with_variance && !r.identity_weight_fallback) {
    const Eigen::MatrixXd G = moment_jacobian(sys, theta2);
    const Eigen::MatrixXd M = G.transpose() * A2 * G;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
    if (ldlt.info() != Eigen::Success)
      throw Error(ErrorCode::singular_information,
                  "weighted moment Jacobian is numerically singular");
    Eigen::MatrixXd V =
        ldlt.solve(Eigen::MatrixXd::Identity(np, np)) /
        static_cast<double>(sys.N());
    V = 0.5 * (V + V.transpose()).eval();
    if (!V.allFinite() || V.diagonal().minCoeff() < 0.0)
      throw Error(ErrorCode::singular_information,
                  "moment-based covariance is not positive semidefinite");
    r.variance = V;
    r.std_errors = V.diagonal().cwiseSqrt();
  }
  return r;
}

}  // namespace spatarch
