#include "egofuse/trajectory.hpp"

#include <stdexcept>

namespace egofuse {

void Trajectory::validate() const {
  for (size_t i = 0; i < poses.size(); ++i) {
    if (i > 0 && !(poses[i].time > poses[i - 1].time))
      throw std::runtime_error("trajectory: timestamps not strictly increasing");
    if (!is_rotation(poses[i].R, 1e-6))
      throw std::runtime_error("trajectory: rotation block not orthonormal");
  }
}

}  // namespace egofuse
