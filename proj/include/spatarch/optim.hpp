#pragma once

#include <functional>
#include <vector>

namespace spatarch {

struct ProfileResult {
  double x = 0.0;
  double value = 0.0;
  bool interior = false;    // argmax not pinned against an interval end
  bool multi_peak = false;  // coarse grid saw more than one strict local max
  std::vector<double> grid_x;
  std::vector<double> grid_value;
};

// Maximize a smooth 1-D function on (lo, hi): evaluate `grid_points` midpoints,
// pick the best (ties resolved toward smaller |x|), refine with Brent's method
// inside the bracketing neighbours, then polish with Newton steps on a
// finite-difference derivative. Evaluations returning -inf mark inadmissible
// points and are skipped by the grid stage. The polish matters for
// reproducibility: value comparisons alone cannot place the peak more tightly
// than the band where the function is flat to one ulp, so inputs equal up to
// rounding could otherwise return argmaxes 1e-8 apart.
ProfileResult maximize_profile(const std::function<double(double)>& f, double lo,
                               double hi, int grid_points = 40);

}  // namespace spatarch
