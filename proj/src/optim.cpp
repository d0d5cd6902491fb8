#include "spatarch/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "spatarch/errors.hpp"

namespace spatarch {

namespace {

// Brent minimization on [a, b]; returns the abscissa and writes the minimum
// value through fmin. Classic golden section with parabolic acceleration.
double brent_minimize(const std::function<double(double)>& f, double a, double b,
                      double xtol, double* fmin) {
  constexpr double kGold = 0.3819660112501051;
  constexpr int kMaxIter = 200;
  double x = a + kGold * (b - a);
  double w = x, v = x;
  double fx = f(x);
  double fw = fx, fv = fx;
  double d = 0.0, e = 0.0;
  for (int iter = 0; iter < kMaxIter; ++iter) {
    const double xm = 0.5 * (a + b);
    const double tol1 = xtol * std::abs(x) + 1e-14;
    const double tol2 = 2.0 * tol1;
    if (std::abs(x - xm) <= tol2 - 0.5 * (b - a)) break;
    bool use_golden = true;
    if (std::abs(e) > tol1) {
      const double r = (x - w) * (fx - fv);
      double q = (x - v) * (fx - fw);
      double p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p;
      q = std::abs(q);
      const double etemp = e;
      e = d;
      if (std::abs(p) < std::abs(0.5 * q * etemp) && p > q * (a - x) &&
          p < q * (b - x)) {
        d = p / q;
        const double u = x + d;
        if (u - a < tol2 || b - u < tol2) d = std::copysign(tol1, xm - x);
        use_golden = false;
      }
    }
    if (use_golden) {
      e = (x >= xm) ? a - x : b - x;
      d = kGold * e;
    }
    const double u =
        (std::abs(d) >= tol1) ? x + d : x + std::copysign(tol1, d);
    const double fu = f(u);
    if (fu <= fx) {
      if (u >= x) a = x; else b = x;
      v = w; fv = fw;
      w = x; fw = fx;
      x = u; fx = fu;
    } else {
      if (u < x) a = u; else b = u;
      if (fu <= fw || w == x) {
        v = w; fv = fw;
        w = u; fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u; fv = fu;
      }
    }
  }
  *fmin = fx;
  return x;
}

}  // namespace

ProfileResult maximize_profile(const std::function<double(double)>& f, double lo,
                               double hi, int grid_points) {
  if (!(hi > lo) || grid_points < 3)
    throw Error(ErrorCode::config, "maximize_profile: empty interval or grid");

  ProfileResult out;
  const double width = hi - lo;
  out.grid_x.resize(static_cast<std::size_t>(grid_points));
  out.grid_value.resize(static_cast<std::size_t>(grid_points));
  for (int i = 0; i < grid_points; ++i) {
    const double x = lo + width * (i + 0.5) / grid_points;
    out.grid_x[static_cast<std::size_t>(i)] = x;
    out.grid_value[static_cast<std::size_t>(i)] = f(x);
  }

  // Best grid point, scanning by increasing |x| so exact ties pick the value
  // closest to zero.
  std::vector<int> order(static_cast<std::size_t>(grid_points));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return std::abs(out.grid_x[static_cast<std::size_t>(a)]) <
           std::abs(out.grid_x[static_cast<std::size_t>(b)]);
  });
  int best = -1;
  double best_val = -std::numeric_limits<double>::infinity();
  for (int i : order) {
    const double v = out.grid_value[static_cast<std::size_t>(i)];
    if (std::isfinite(v) && v > best_val) {
      best_val = v;
      best = i;
    }
  }
  if (best < 0)
    throw Error(ErrorCode::numeric,
                "maximize_profile: objective not finite anywhere on the grid");

  // Count strict interior local maxima of the grid profile.
  int peaks = 0;
  const double peak_tol = 1e-9 * std::max(1.0, std::abs(best_val));
  for (int i = 1; i + 1 < grid_points; ++i) {
    const double l = out.grid_value[static_cast<std::size_t>(i - 1)];
    const double c = out.grid_value[static_cast<std::size_t>(i)];
    const double r = out.grid_value[static_cast<std::size_t>(i + 1)];
    if (std::isfinite(l) && std::isfinite(c) && std::isfinite(r) &&
        c > l + peak_tol && c > r + peak_tol)
      ++peaks;
  }
  out.multi_peak = peaks > 1;

  const double a = (best == 0) ? lo : out.grid_x[static_cast<std::size_t>(best - 1)];
  const double b = (best == grid_points - 1)
                       ? hi
                       : out.grid_x[static_cast<std::size_t>(best + 1)];
  auto neg = [&](double x) {
    const double v = f(x);
    return std::isfinite(v) ? -v : std::numeric_limits<double>::infinity();
  };
  double fneg = 0.0;
  out.x = brent_minimize(neg, a, b, 1e-10, &fneg);
  out.value = -fneg;

  // Newton polish on a central-difference derivative. Brent stops once the
  // values stop resolving, which leaves the abscissa anywhere in the band
  // where the objective is flat to one ulp, roughly sqrt(ulp/|f''|) wide; the
  // derivative pins the stationary point about three orders tighter.
  const double h = 1e-6 * std::max(1.0, std::abs(out.x));
  for (int step = 0; step < 2; ++step) {
    const double f0 = f(out.x);
    const double fp = f(out.x + h);
    const double fm = f(out.x - h);
    if (!std::isfinite(f0) || !std::isfinite(fp) || !std::isfinite(fm)) break;
    const double grad = (fp - fm) / (2.0 * h);
    const double curv = (fp - 2.0 * f0 + fm) / (h * h);
    if (!(curv < 0.0)) break;
    const double delta = -grad / curv;
    const double cand = out.x + delta;
    if (!(std::abs(delta) < 1e-4 * std::max(1.0, std::abs(out.x))) ||
        cand <= a || cand >= b)
      break;
    out.x = cand;
  }
  const double polished = f(out.x);
  if (std::isfinite(polished)) out.value = polished;

  if (out.value < best_val) {
    out.x = out.grid_x[static_cast<std::size_t>(best)];
    out.value = best_val;
  }
  const double edge = 1e-6 * width;
  out.interior = (out.x - lo > edge) && (hi - out.x > edge);
  return out;
}

}  // namespace spatarch
