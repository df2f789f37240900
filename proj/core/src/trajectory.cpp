#include "srfloc/trajectory.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace srfloc {

std::vector<StampedPose> load_trajectory(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open trajectory file: " + path);
  std::vector<StampedPose> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    StampedPose sp;
    double qx, qy, qz, qw;
    if (!(ss >> sp.timestamp)) continue;  // blank or comment-only line
    if (!(ss >> sp.pose.t.x() >> sp.pose.t.y() >> sp.pose.t.z() >> qx >> qy >> qz >> qw)) {
      throw std::runtime_error(path + ": malformed pose at line " + std::to_string(lineno));
    }
    sp.pose.q = Eigen::Quaterniond(qw, qx, qy, qz);
    if (sp.pose.q.norm() < 1e-12) {
      throw std::runtime_error(path + ": zero quaternion at line " + std::to_string(lineno));
    }
    sp.pose.normalize();
    out.push_back(sp);
  }
  return out;
}

void save_trajectory(const std::string& path, const std::vector<StampedPose>& poses) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write trajectory file: " + path);
  os << "# timestamp tx ty tz qx qy qz qw\n";
  char buf[256];
  for (const auto& sp : poses) {
    std::snprintf(buf, sizeof(buf), "%.6f %.9f %.9f %.9f %.9f %.9f %.9f %.9f\n", sp.timestamp,
                  sp.pose.t.x(), sp.pose.t.y(), sp.pose.t.z(), sp.pose.q.x(), sp.pose.q.y(),
                  sp.pose.q.z(), sp.pose.q.w());
    os << buf;
  }
}

}  // namespace srfloc
