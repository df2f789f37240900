#pragma once

#include <string>
#include <vector>

#include "srfloc/se3.hpp"

namespace srfloc {

struct StampedPose {
  double timestamp = 0.0;
  SE3 pose;
};

// Text trajectory format, one pose per line:
//   timestamp tx ty tz qx qy qz qw
// whitespace-separated, '#' starts a comment. Quaternions are renormalized
// on load.
std::vector<StampedPose> load_trajectory(const std::string& path);
void save_trajectory(const std::string& path, const std::vector<StampedPose>& poses);

}  // namespace srfloc
