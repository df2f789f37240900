#include "srfloc/essential.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace srfloc {

namespace {

Eigen::Matrix3d normalizing_transform(std::span<const Eigen::Vector3d> pts,
                                      std::span<const int> subset) {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const int i : subset) mean += pts[i].head<2>();
  mean /= static_cast<double>(subset.size());
  double dist = 0.0;
  for (const int i : subset) dist += (pts[i].head<2>() - mean).norm();
  dist /= static_cast<double>(subset.size());
  const double scale = dist > 1e-12 ? std::sqrt(2.0) / dist : 1.0;
  Eigen::Matrix3d t = Eigen::Matrix3d::Identity();
  t(0, 0) = scale;
  t(1, 1) = scale;
  t(0, 2) = -scale * mean.x();
  t(1, 2) = -scale * mean.y();
  return t;
}

bool solve_subset(std::span<const Eigen::Vector3d> x1, std::span<const Eigen::Vector3d> x2,
                  std::span<const int> subset, Eigen::Matrix3d* essential) {
  const Eigen::Matrix3d t1 = normalizing_transform(x1, subset);
  const Eigen::Matrix3d t2 = normalizing_transform(x2, subset);

  Eigen::MatrixXd a(subset.size(), 9);
  for (std::size_t r = 0; r < subset.size(); ++r) {
    const Eigen::Vector3d p1 = t1 * x1[subset[r]];
    const Eigen::Vector3d p2 = t2 * x2[subset[r]];
    a.row(r) << p2.x() * p1.x(), p2.x() * p1.y(), p2.x(), p2.y() * p1.x(), p2.y() * p1.y(),
        p2.y(), p1.x(), p1.y(), 1.0;
  }

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 9, 9>> eig(a.transpose() * a);
  if (eig.info() != Eigen::Success) return false;
  const Eigen::Matrix<double, 9, 1> e = eig.eigenvectors().col(0);
  Eigen::Matrix3d raw;
  raw << e[0], e[1], e[2], e[3], e[4], e[5], e[6], e[7], e[8];

  // Project onto the essential manifold.
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(raw, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double s = 0.5 * (svd.singularValues()[0] + svd.singularValues()[1]);
  if (s < 1e-15) return false;
  Eigen::Vector3d sv(s, s, 0.0);
  const Eigen::Matrix3d projected = svd.matrixU() * sv.asDiagonal() * svd.matrixV().transpose();

  *essential = t2.transpose() * projected * t1;
  const double norm = essential->norm();
  if (norm < 1e-15 || !essential->allFinite()) return false;
  *essential /= norm;
  return true;
}

}  // namespace

double sampson_distance(const Eigen::Matrix3d& essential, const Eigen::Vector3d& x1,
                        const Eigen::Vector3d& x2) {
  const Eigen::Vector3d ex1 = essential * x1;
  const Eigen::Vector3d etx2 = essential.transpose() * x2;
  const double num = x2.dot(ex1);
  const double den = ex1.head<2>().squaredNorm() + etx2.head<2>().squaredNorm();
  if (den < 1e-20) return std::numeric_limits<double>::max();
  return std::abs(num) / std::sqrt(den);
}

bool eight_point_essential(std::span<const Eigen::Vector3d> x1,
                           std::span<const Eigen::Vector3d> x2, Eigen::Matrix3d* essential) {
  if (x1.size() < 8 || x1.size() != x2.size()) return false;
  std::vector<int> all(x1.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return solve_subset(x1, x2, all, essential);
}

EssentialResult essential_ransac(std::span<const Eigen::Vector3d> x1,
                                 std::span<const Eigen::Vector3d> x2,
                                 const EssentialOptions& options, Rng& rng) {
  EssentialResult result;
  const int n = static_cast<int>(x1.size());
  if (n < 8 || x2.size() != x1.size()) return result;
  result.inlier_mask.assign(n, 0);

  std::vector<int> indices(n);
  for (int i = 0; i < n; ++i) indices[i] = i;
  std::vector<char> mask(n, 0);
  int adaptive_limit = options.max_iterations;

  for (int iter = 0; iter < options.max_iterations && iter < adaptive_limit; ++iter) {
    for (int k = 0; k < 8; ++k) {
      const int pick = k + static_cast<int>(rng.uniform_index(n - k));
      std::swap(indices[k], indices[pick]);
    }
    Eigen::Matrix3d model;
    if (!solve_subset(x1, x2, std::span<const int>(indices.data(), 8), &model)) continue;

    int count = 0;
    for (int i = 0; i < n; ++i) {
      mask[i] = sampson_distance(model, x1[i], x2[i]) < options.sampson_threshold ? 1 : 0;
      count += mask[i];
    }
    if (count > result.inlier_count) {
      result.inlier_count = count;
      result.inlier_mask = mask;
      result.essential = model;
      result.ok = true;
      const double ratio = static_cast<double>(count) / n;
      const double p_sample = std::pow(ratio, 8);
      if (p_sample >= 1.0 - 1e-12) {
        adaptive_limit = iter + 1;
      } else if (p_sample > 0.0) {
        adaptive_limit = std::min<double>(
            options.max_iterations,
            std::ceil(std::log(1.0 - options.confidence) / std::log(1.0 - p_sample)));
      }
    }
  }
  return result;
}

}  // namespace srfloc
