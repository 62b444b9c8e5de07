#ifndef ADVDIFF_STEERING_HPP_
#define ADVDIFF_STEERING_HPP_

#include <array>
#include <cstddef>
#include <span>

namespace advdiff {

using Vec2 = std::array<double, 2>;

// Target heading and speed for the steering task.
struct SteeringSpec {
  Vec2 direction{1.0, 0.0};  // unit vector d*
  double speed = 1.0;        // v*, m/s
  double min_speed = 0.5;    // sampling range for v*
  double max_speed = 1.5;
  std::size_t resample_steps = 0;  // 0: keep one target per episode

  // Throws std::invalid_argument unless |d*| = 1 (to 1e-9) and the speed
  // range is ordered and contains v*.
  void validate() const;
};

// Steering errors (v* - v.d*, -|v - (v.d*)d*|).
std::array<double, 2> steering_errors(std::span<const double> velocity,
                                      const SteeringSpec& spec);

}  // namespace advdiff

#endif  // ADVDIFF_STEERING_HPP_
