#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "spatarch/errors.hpp"
#include "spatarch/panel.hpp"
#include "spatarch/weights.hpp"

using namespace spatarch;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error to be thrown");
  return ErrorCode::numeric;
}

Panel random_panel(int n, int T, int k, unsigned seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> nd;
  Panel p;
  p.y0.resize(n);
  for (int i = 0; i < n; ++i) p.y0(i) = nd(gen) + 3.0;
  p.y.resize(n, T);
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < n; ++i) p.y(i, t) = nd(gen) + 3.0;
  p.x.assign(T, Eigen::MatrixXd(n, k));
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < k; ++j)
      for (int i = 0; i < n; ++i) p.x[t](i, j) = nd(gen);
  return p;
}

}  // namespace

TEST_CASE("helmert matrices are orthonormal complements of the constant") {
  for (int d : {2, 3, 5, 10, 25, 49}) {
    const Eigen::MatrixXd f = helmert_forward(d);
    REQUIRE(f.rows() == d);
    REQUIRE(f.cols() == d - 1);
    const Eigen::MatrixXd gram = f.transpose() * f;
    CHECK((gram - Eigen::MatrixXd::Identity(d - 1, d - 1)).cwiseAbs().maxCoeff() <
          1e-12);
    CHECK((f.transpose() * Eigen::VectorXd::Ones(d)).cwiseAbs().maxCoeff() <
          1e-12);
    const Eigen::MatrixXd jd = Eigen::MatrixXd::Identity(d, d) -
                               Eigen::MatrixXd::Constant(d, d, 1.0 / d);
    CHECK((f * f.transpose() - jd).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK(code_of([] { helmert_forward(1); }) == ErrorCode::invalid_dimension);
}

TEST_CASE("helmert columns are forward oriented") {
  const int d = 7;
  const Eigen::MatrixXd f = helmert_forward(d);
  for (int j = 0; j < d - 1; ++j) {
    for (int s = 0; s < j; ++s) CHECK(f(s, j) == 0.0);
    const double tail = d - 1 - j;
    CHECK(f(j, j) == doctest::Approx(std::sqrt(tail / (tail + 1.0))));
    for (int s = j + 1; s < d; ++s)
      CHECK(f(s, j) == doctest::Approx(-f(j, j) / tail));
  }
}

TEST_CASE("restricted spatial determinant identity") {
  // ln|I_{n-1} - rho Fn' M Fn| + ln(1 - rho) = ln|I_n - rho M| for any
  // row-normalized M: the projection removes exactly the unit eigenvalue.
  std::mt19937 gen(7);
  for (int side : {3, 5, 7, 9}) {
    const WeightMatrix w = build_lattice_queen(side);
    const Eigen::MatrixXd fn = helmert_forward(w.n());
    const Eigen::MatrixXd mstar = fn.transpose() * w.matrix() * fn;
    const auto [lo, hi] = w.admissible_interval();
    std::uniform_real_distribution<double> draw(lo + 0.02, hi - 0.02);
    for (int rep = 0; rep < 100; ++rep) {
      const double rho = draw(gen);
      const double lhs = log_det_lu(mstar, rho) + std::log1p(-rho);
      const double rhs = log_det_spatial(w, rho);
      CHECK(std::abs(lhs - rhs) < 1e-8);
    }
  }
}

TEST_CASE("projected quadratic forms match the within-group ones") {
  std::mt19937 gen(11);
  std::normal_distribution<double> nd;
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 4 + static_cast<int>(gen() % 20);
    const int T = 2 + static_cast<int>(gen() % 8);
    const Projector proj = build_projectors(n, T);
    Eigen::MatrixXd u(n, T);
    for (int t = 0; t < T; ++t)
      for (int i = 0; i < n; ++i) u(i, t) = nd(gen);

    // Cross-section: sum_t u_t' Jn u_t = sum over transformed columns.
    const Eigen::MatrixXd jn = Eigen::MatrixXd::Identity(n, n) -
                               Eigen::MatrixXd::Constant(n, n, 1.0 / n);
    const Eigen::MatrixXd ustar = proj.Fn.transpose() * u;
    double lhs = 0.0, rhs = 0.0;
    for (int t = 0; t < T; ++t) {
      lhs += ustar.col(t).squaredNorm();
      rhs += u.col(t).dot(jn * u.col(t));
    }
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));

    // Time: the FT image carries exactly the within-row variation.
    const Eigen::MatrixXd vstar = apply_FT(u, proj);
    CHECK(vstar.squaredNorm() ==
          doctest::Approx(time_demean(u).squaredNorm()).epsilon(1e-12));
  }
}

TEST_CASE("time_demean removes row means and is idempotent") {
  std::mt19937 gen(3);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd v(6, 9);
  for (int t = 0; t < 9; ++t)
    for (int i = 0; i < 6; ++i) v(i, t) = nd(gen) + 2.0;
  const Eigen::MatrixXd d = time_demean(v);
  CHECK(d.rowwise().mean().cwiseAbs().maxCoeff() < 1e-14);
  CHECK((time_demean(d) - d).cwiseAbs().maxCoeff() < 1e-14);
  // Constant-over-time rows vanish entirely.
  const Eigen::MatrixXd c = Eigen::VectorXd::LinSpaced(6, -1.0, 1.0) *
                            Eigen::RowVectorXd::Ones(9);
  CHECK(time_demean(c).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("apply_FT rejects mismatched period counts") {
  const Projector proj = build_projectors(5, 4);
  CHECK(code_of([&] { apply_FT(Eigen::MatrixXd::Zero(5, 6), proj); }) ==
        ErrorCode::invalid_dimension);
}

TEST_CASE("log_square is even in the outcome and rejects zeros") {
  Panel p = random_panel(6, 4, 2, 21);
  const StarPanel s = log_square(p);
  CHECK(s.n() == p.n());
  CHECK(s.T() == p.T());
  CHECK(s.k() == 2);
  for (int i = 0; i < p.n(); ++i) {
    CHECK(s.ystar0(i) == doctest::Approx(2.0 * std::log(std::abs(p.y0(i)))));
    for (int t = 0; t < p.T(); ++t)
      CHECK(s.ystar(i, t) ==
            doctest::Approx(2.0 * std::log(std::abs(p.y(i, t)))));
  }
  Panel flipped = p;
  flipped.y = -flipped.y;
  flipped.y0 = -flipped.y0;
  const StarPanel s2 = log_square(flipped);
  CHECK((s2.ystar - s.ystar).cwiseAbs().maxCoeff() == 0.0);

  Panel bad = p;
  bad.y(2, 1) = 0.0;
  CHECK(code_of([&] { log_square(bad); }) == ErrorCode::degenerate_observation);
  bad = p;
  bad.y0(0) = std::numeric_limits<double>::quiet_NaN();
  CHECK(code_of([&] { log_square(bad); }) == ErrorCode::degenerate_observation);
}

TEST_CASE("panel validate catches shape mismatches") {
  Panel p = random_panel(5, 3, 1, 8);
  CHECK_NOTHROW(p.validate());
  Panel bad = p;
  bad.y0.resize(4);
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::invalid_dimension);
  bad = p;
  bad.x.pop_back();
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::invalid_dimension);
  bad = p;
  bad.x[1] = Eigen::MatrixXd::Zero(5, 2);
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::invalid_dimension);
}

TEST_CASE("panel CSV round trip is bit exact") {
  const Panel p = random_panel(7, 5, 2, 99);
  const std::string path = "test_panel_roundtrip.csv";
  save_panel_csv(path, p);
  const Panel q = load_panel_csv(path);
  std::remove(path.c_str());
  REQUIRE(q.n() == p.n());
  REQUIRE(q.T() == p.T());
  REQUIRE(q.k() == p.k());
  CHECK((q.y0 - p.y0).cwiseAbs().maxCoeff() == 0.0);
  CHECK((q.y - p.y).cwiseAbs().maxCoeff() == 0.0);
  for (int t = 0; t < p.T(); ++t)
    CHECK((q.x[t] - p.x[t]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("panel loader rejects malformed files") {
  const std::string path = "test_panel_bad.csv";
  const auto write = [&](const char* body) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    std::fputs(body, f);
    std::fclose(f);
  };
  write("t,i,y\n");
  CHECK(code_of([&] { load_panel_csv(path); }) == ErrorCode::config);
  write("i,t,y\n1,0,1.0\n1,1,2.0\n1,1,2.5\n");
  CHECK(code_of([&] { load_panel_csv(path); }) == ErrorCode::config);
  write("i,t,y\n1,0,1.0\n2,0,1.0\n1,1,2.0\n");  // (2,1) missing
  CHECK(code_of([&] { load_panel_csv(path); }) == ErrorCode::config);
  write("i,t,y,x1\n1,0,1.0,\n1,1,2.0\n");  // wrong field count
  CHECK(code_of([&] { load_panel_csv(path); }) == ErrorCode::config);
  std::remove(path.c_str());
  CHECK(code_of([] { load_panel_csv("no_such_panel.csv"); }) == ErrorCode::io);
}

TEST_CASE("effects sidecar lists mu then alpha with 1-based and 0-based ids") {
  const std::string path = "test_panel_effects.csv";
  Eigen::VectorXd mu(3), alpha(2);
  mu << 0.1, -0.2, 0.3;
  alpha << 1.5, -2.5;
  save_effects_csv(path, mu, alpha);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "i_or_t,kind,value");
  int mu_rows = 0, alpha_rows = 0;
  while (std::getline(in, line)) {
    if (line.find(",mu,") != std::string::npos) ++mu_rows;
    if (line.find(",alpha,") != std::string::npos) ++alpha_rows;
  }
  CHECK(mu_rows == 3);
  CHECK(alpha_rows == 2);
  std::remove(path.c_str());
}
