#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace dslam {

// One range-sensor frame: B beam distances over a forward-facing fan.
struct RangeScan {
  std::vector<double> ranges;
  double fov = 70.0 * M_PI / 180.0;
  double r_max = 10.0;
  double r_min = 0.1;

  int beam_count() const { return int(ranges.size()); }

  // Beams evenly spaced over [-fov/2, +fov/2], endpoints inclusive.
  double beam_angle(int b) const {
    const int n = beam_count();
    if (n == 1) return 0.0;
    return -0.5 * fov + fov * double(b) / double(n - 1);
  }

  void validate() const {
    for (double r : ranges)
      if (!(r >= r_min - 1e-12 && r <= r_max + 1e-12))
        throw std::invalid_argument("scan range " + std::to_string(r) + " outside [" +
                                    std::to_string(r_min) + ", " + std::to_string(r_max) + "]");
  }
};

}  // namespace dslam
