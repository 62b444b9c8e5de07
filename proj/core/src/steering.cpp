#include "advdiff/steering.hpp"

#include <cmath>
#include <stdexcept>

#include "advdiff/error.hpp"

namespace advdiff {

void SteeringSpec::validate() const {
  const double norm = std::hypot(direction[0], direction[1]);
  if (!(std::abs(norm - 1.0) <= 1e-9)) {
    throw std::invalid_argument("steering direction must be a unit vector");
  }
  if (!(min_speed <= max_speed) || !(speed >= min_speed && speed <= max_speed)) {
    throw std::invalid_argument("steering speed outside [min_speed, max_speed]");
  }
}

std::array<double, 2> steering_errors(std::span<const double> velocity,
                                      const SteeringSpec& spec) {
  if (velocity.size() != 2) throw ShapeError("steering expects a 2-D velocity");
  const Vec2& d = spec.direction;
  const double along = velocity[0] * d[0] + velocity[1] * d[1];
  const double px = velocity[0] - along * d[0];
  const double py = velocity[1] - along * d[1];
  return {spec.speed - along, -std::hypot(px, py)};
}

}  // namespace advdiff
