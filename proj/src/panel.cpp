#include "spatarch/panel.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include "spatarch/csvio.hpp"

namespace spatarch {

void Panel::validate() const {
  const int nn = n(), TT = T(), kk = k();
  if (nn == 0 || TT == 0)
    throw Error(ErrorCode::invalid_dimension, "panel must have n >= 1 and T >= 1");
  if (y0.size() != nn)
    throw Error(ErrorCode::invalid_dimension, "panel y0 length does not match n");
  if (static_cast<int>(x.size()) != TT && !(x.empty() && kk == 0))
    throw Error(ErrorCode::invalid_dimension, "panel needs one regressor block per period");
  for (const auto& xt : x)
    if (xt.rows() != nn || xt.cols() != kk)
      throw Error(ErrorCode::invalid_dimension, "regressor block has inconsistent shape");
  for (int i = 0; i < nn; ++i) {
    if (y0(i) == 0.0 || !std::isfinite(y0(i)))
      throw Error(ErrorCode::degenerate_observation,
                  "zero or non-finite outcome at (i=" + std::to_string(i + 1) + ", t=0)");
    for (int t = 0; t < TT; ++t)
      if (y(i, t) == 0.0 || !std::isfinite(y(i, t)))
        throw Error(ErrorCode::degenerate_observation,
                    "zero or non-finite outcome at (i=" + std::to_string(i + 1) +
                        ", t=" + std::to_string(t + 1) + ")");
  }
}

StarPanel log_square(const Panel& p) {
  p.validate();
  StarPanel s;
  s.ystar0 = (p.y0.array().square()).log();
  s.ystar = (p.y.array().square()).log();
  s.x = p.x;
  return s;
}

Eigen::MatrixXd helmert_forward(int d) {
  if (d < 2)
    throw Error(ErrorCode::invalid_dimension,
                "projector dimension must be at least 2, got " + std::to_string(d));
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(d, d - 1);
  for (int j = 0; j < d - 1; ++j) {
    const double tail = d - 1 - j;  // number of later entries averaged away
    const double c = std::sqrt(tail / (tail + 1.0));
    f(j, j) = c;
    for (int s = j + 1; s < d; ++s) f(s, j) = -c / tail;
  }
  return f;
}

Projector build_projectors(int n, int T) {
  return Projector{helmert_forward(n), helmert_forward(T)};
}

Eigen::MatrixXd time_demean(const Eigen::MatrixXd& v) {
  return v.colwise() - v.rowwise().mean();
}

Eigen::MatrixXd apply_FT(const Eigen::MatrixXd& v, const Projector& proj) {
  if (v.cols() != proj.FT.rows())
    throw Error(ErrorCode::invalid_dimension,
                "apply_FT: array has " + std::to_string(v.cols()) +
                    " periods but projector expects " + std::to_string(proj.FT.rows()));
  return v * proj.FT;
}

void save_panel_csv(const std::string& path, const Panel& p) {
  p.validate();
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot open for writing: " + path);
  const int n = p.n(), T = p.T(), k = p.k();
  out << "i,t,y";
  for (int j = 1; j <= k; ++j) out << ",x" << j;
  out << '\n';
  for (int i = 0; i < n; ++i) {
    out << (i + 1) << ",0," << csv::fmt(p.y0(i));
    for (int j = 0; j < k; ++j) out << ',';
    out << '\n';
  }
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < n; ++i) {
      out << (i + 1) << ',' << (t + 1) << ',' << csv::fmt(p.y(i, t));
      for (int j = 0; j < k; ++j) out << ',' << csv::fmt(p.x[t](i, j));
      out << '\n';
    }
  if (!out.good()) throw Error(ErrorCode::io, "write failed: " + path);
}

Panel load_panel_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::config, path + ": empty file");
  const auto header = csv::split(line);
  if (header.size() < 3 || header[0] != "i" || header[1] != "t" || header[2] != "y")
    throw Error(ErrorCode::config, path + ": header must start with i,t,y");
  const int k = static_cast<int>(header.size()) - 3;
  for (int j = 0; j < k; ++j)
    if (header[3 + j] != "x" + std::to_string(j + 1))
      throw Error(ErrorCode::config, path + ": regressor columns must be named x1..xk");

  struct Row {
    double y;
    std::vector<double> x;
  };
  std::map<std::pair<long, long>, Row> rows;
  long n = 0, T = 0;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tok = csv::split(line);
    if (static_cast<int>(tok.size()) != 3 + k)
      throw Error(ErrorCode::config,
                  path + ":" + std::to_string(lineno) + ": wrong field count");
    const long i = csv::parse_long(tok[0], path, lineno);
    const long t = csv::parse_long(tok[1], path, lineno);
    if (i < 1 || t < 0)
      throw Error(ErrorCode::config,
                  path + ":" + std::to_string(lineno) + ": need i >= 1 and t >= 0");
    Row r;
    r.y = csv::parse_double(tok[2], path, lineno);
    if (t > 0)
      for (int j = 0; j < k; ++j)
        r.x.push_back(csv::parse_double(tok[3 + j], path, lineno));
    if (!rows.emplace(std::make_pair(i, t), std::move(r)).second)
      throw Error(ErrorCode::config,
                  path + ":" + std::to_string(lineno) + ": duplicate (i,t) row");
    n = std::max(n, i);
    T = std::max(T, t);
  }
  if (n == 0 || T == 0) throw Error(ErrorCode::config, path + ": no observation rows");

  Panel p;
  p.y0.resize(n);
  p.y.resize(n, T);
  p.x.assign(T, Eigen::MatrixXd(n, k));
  for (long i = 1; i <= n; ++i)
    for (long t = 0; t <= T; ++t) {
      const auto it = rows.find({i, t});
      if (it == rows.end())
        throw Error(ErrorCode::config, path + ": missing row for (i=" + std::to_string(i) +
                                           ", t=" + std::to_string(t) + ")");
      if (t == 0) {
        p.y0(i - 1) = it->second.y;
      } else {
        p.y(i - 1, t - 1) = it->second.y;
        for (int j = 0; j < k; ++j) p.x[t - 1](i - 1, j) = it->second.x[j];
      }
    }
  p.validate();
  return p;
}

void save_effects_csv(const std::string& path, const Eigen::VectorXd& mu,
                      const Eigen::VectorXd& alpha) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot open for writing: " + path);
  out << "i_or_t,kind,value\n";
  for (Eigen::Index i = 0; i < mu.size(); ++i)
    out << (i + 1) << ",mu," << csv::fmt(mu(i)) << '\n';
  for (Eigen::Index t = 0; t < alpha.size(); ++t)
    out << t << ",alpha," << csv::fmt(alpha(t)) << '\n';
  if (!out.good()) throw Error(ErrorCode::io, "write failed: " + path);
}

}  // namespace spatarch
