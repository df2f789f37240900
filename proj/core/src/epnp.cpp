#include "srfloc/epnp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace srfloc {

namespace {

struct ControlPoints {
  std::vector<Eigen::Vector3d> world;          // 4 general, 3 planar
  Eigen::MatrixXd alphas;                      // n x m barycentric coordinates
};

std::optional<ControlPoints> choose_control_points(std::span<const Eigen::Vector3d> points) {
  const std::size_t n = points.size();
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(n);

  Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();
  for (const auto& p : points) {
    const Eigen::Vector3d d = p - centroid;
    covariance += d * d.transpose();
  }
  covariance /= static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(covariance);
  const Eigen::Vector3d evals = eig.eigenvalues();  // ascending
  const Eigen::Matrix3d evecs = eig.eigenvectors();
  const double largest = evals[2];
  if (largest < 1e-16) return std::nullopt;                 // coincident points
  if (evals[1] < 1e-10 * largest) return std::nullopt;      // collinear set
  const bool planar = evals[0] < 1e-8 * largest;

  ControlPoints cp;
  cp.world.push_back(centroid);
  const int spread_axes = planar ? 2 : 3;
  for (int k = 0; k < spread_axes; ++k) {
    const int col = 2 - k;  // descending eigenvalue order
    cp.world.push_back(centroid + std::sqrt(evals[col]) * evecs.col(col));
  }

  const int m = static_cast<int>(cp.world.size());
  Eigen::MatrixXd basis(3, m - 1);
  for (int j = 1; j < m; ++j) basis.col(j - 1) = cp.world[j] - cp.world[0];
  const Eigen::MatrixXd pinv =
      (basis.transpose() * basis).ldlt().solve(basis.transpose());

  cp.alphas.resize(static_cast<int>(n), m);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::VectorXd a = pinv * (points[i] - cp.world[0]);
    cp.alphas(static_cast<int>(i), 0) = 1.0 - a.sum();
    for (int j = 1; j < m; ++j) cp.alphas(static_cast<int>(i), j) = a[j - 1];
  }
  return cp;
}

// Distance residuals between hypothesized camera-frame control points and the
// known world-frame control distances. Used for the beta refinement.
void control_distances(const std::vector<Eigen::Vector3d>& cps, Eigen::VectorXd& out) {
  const int m = static_cast<int>(cps.size());
  int r = 0;
  out.resize(m * (m - 1) / 2);
  for (int j = 0; j < m; ++j) {
    for (int k = j + 1; k < m; ++k) out[r++] = (cps[j] - cps[k]).squaredNorm();
  }
}

std::vector<Eigen::Vector3d> assemble_control_points(const Eigen::MatrixXd& null_vectors,
                                                     const Eigen::VectorXd& betas, int m) {
  std::vector<Eigen::Vector3d> cps(m, Eigen::Vector3d::Zero());
  for (int k = 0; k < betas.size(); ++k) {
    for (int j = 0; j < m; ++j) {
      cps[j] += betas[k] * null_vectors.col(k).segment<3>(3 * j);
    }
  }
  return cps;
}

void refine_betas(const Eigen::MatrixXd& null_vectors, const Eigen::VectorXd& world_dists,
                  Eigen::VectorXd& betas, int m) {
  const int n_betas = static_cast<int>(betas.size());
  const int n_constraints = m * (m - 1) / 2;
  Eigen::MatrixXd jac(n_constraints, n_betas);
  Eigen::VectorXd residual(n_constraints);
  for (int iter = 0; iter < 5; ++iter) {
    const auto cps = assemble_control_points(null_vectors, betas, m);
    int r = 0;
    for (int j = 0; j < m; ++j) {
      for (int k = j + 1; k < m; ++k, ++r) {
        const Eigen::Vector3d diff = cps[j] - cps[k];
        residual[r] = diff.squaredNorm() - world_dists[r];
        for (int b = 0; b < n_betas; ++b) {
          const Eigen::Vector3d dv =
              null_vectors.col(b).segment<3>(3 * j) - null_vectors.col(b).segment<3>(3 * k);
          jac(r, b) = 2.0 * diff.dot(dv);
        }
      }
    }
    const Eigen::VectorXd delta =
        (jac.transpose() * jac).ldlt().solve(-jac.transpose() * residual);
    if (!delta.allFinite()) break;
    betas += delta;
  }
}

std::optional<SE3> pose_from_point_clouds(std::span<const Eigen::Vector3d> world,
                                          const std::vector<Eigen::Vector3d>& camera) {
  const std::size_t n = world.size();
  Eigen::MatrixXd src(3, n), dst(3, n);
  for (std::size_t i = 0; i < n; ++i) {
    src.col(i) = world[i];
    dst.col(i) = camera[i];
  }
  const Eigen::Matrix4d transform = Eigen::umeyama(src, dst, false);
  const Eigen::Matrix3d rot = transform.block<3, 3>(0, 0);
  if (!rot.allFinite()) return std::nullopt;
  // camera-from-world here; the library convention is world-from-camera
  return SE3::from_matrix(rot, transform.block<3, 1>(0, 3)).inverse();
}

}  // namespace

std::optional<SE3> epnp_solve(std::span<const Eigen::Vector3d> world_points,
                              std::span<const Pixel> pixels, const PinholeCamera& cam) {
  const std::size_t n = world_points.size();
  if (n < 4 || pixels.size() != n) return std::nullopt;

  const auto cp = choose_control_points(world_points);
  if (!cp) return std::nullopt;
  const int m = static_cast<int>(cp->world.size());

  // M x = 0 over the stacked camera-frame control point coordinates.
  Eigen::MatrixXd design(2 * n, 3 * m);
  design.setZero();
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d norm = lift_unit_plane(cam, pixels[i]);
    for (int j = 0; j < m; ++j) {
      const double a = cp->alphas(static_cast<int>(i), j);
      design(2 * i, 3 * j) = a;
      design(2 * i, 3 * j + 2) = -a * norm.x();
      design(2 * i + 1, 3 * j + 1) = a;
      design(2 * i + 1, 3 * j + 2) = -a * norm.y();
    }
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(design.transpose() * design);
  if (eig.info() != Eigen::Success) return std::nullopt;
  const int n_null = m == 4 ? 3 : 2;  // candidate null-space dimensions tried
  Eigen::MatrixXd null_vectors = eig.eigenvectors().leftCols(m == 4 ? 4 : 3);

  Eigen::VectorXd world_dists;
  control_distances(cp->world, world_dists);

  const auto beta_candidates = [&]() {
    std::vector<Eigen::VectorXd> out;
    const int n_constraints = m * (m - 1) / 2;

    {  // N = 1
      double num = 0.0, den = 0.0;
      int r = 0;
      for (int j = 0; j < m; ++j) {
        for (int k = j + 1; k < m; ++k, ++r) {
          const Eigen::Vector3d dv =
              null_vectors.col(0).segment<3>(3 * j) - null_vectors.col(0).segment<3>(3 * k);
          num += dv.norm() * std::sqrt(world_dists[r]);
          den += dv.squaredNorm();
        }
      }
      Eigen::VectorXd b(1);
      b[0] = den > 0.0 ? num / den : 0.0;
      out.push_back(b);
    }
    if (n_null >= 2) {  // N = 2: unknowns b11 b12 b22
      Eigen::MatrixXd l(n_constraints, 3);
      int r = 0;
      for (int j = 0; j < m; ++j) {
        for (int k = j + 1; k < m; ++k, ++r) {
          const Eigen::Vector3d d0 =
              null_vectors.col(0).segment<3>(3 * j) - null_vectors.col(0).segment<3>(3 * k);
          const Eigen::Vector3d d1 =
              null_vectors.col(1).segment<3>(3 * j) - null_vectors.col(1).segment<3>(3 * k);
          l(r, 0) = d0.squaredNorm();
          l(r, 1) = 2.0 * d0.dot(d1);
          l(r, 2) = d1.squaredNorm();
        }
      }
      const Eigen::Vector3d sol =
          l.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(world_dists);
      Eigen::VectorXd b(2);
      b[0] = std::sqrt(std::abs(sol[0]));
      b[1] = b[0] > 1e-12 ? sol[1] / b[0] : std::sqrt(std::abs(sol[2]));
      out.push_back(b);
    }
    if (n_null >= 3 && m == 4) {  // N = 3: unknowns b11 b12 b22 b13 b23
      Eigen::MatrixXd l(n_constraints, 5);
      int r = 0;
      for (int j = 0; j < m; ++j) {
        for (int k = j + 1; k < m; ++k, ++r) {
          const Eigen::Vector3d d0 =
              null_vectors.col(0).segment<3>(3 * j) - null_vectors.col(0).segment<3>(3 * k);
          const Eigen::Vector3d d1 =
              null_vectors.col(1).segment<3>(3 * j) - null_vectors.col(1).segment<3>(3 * k);
          const Eigen::Vector3d d2 =
              null_vectors.col(2).segment<3>(3 * j) - null_vectors.col(2).segment<3>(3 * k);
          l(r, 0) = d0.squaredNorm();
          l(r, 1) = 2.0 * d0.dot(d1);
          l(r, 2) = d1.squaredNorm();
          l(r, 3) = 2.0 * d0.dot(d2);
          l(r, 4) = 2.0 * d1.dot(d2);
        }
      }
      const Eigen::VectorXd sol =
          l.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(world_dists);
      Eigen::VectorXd b(3);
      b[0] = std::sqrt(std::abs(sol[0]));
      b[1] = std::sqrt(std::abs(sol[2])) * (sol[1] >= 0.0 ? 1.0 : -1.0);
      b[2] = b[0] > 1e-12 ? sol[3] / b[0] : 0.0;
      out.push_back(b);
    }
    return out;
  }();

  std::optional<SE3> best_pose;
  double best_error = std::numeric_limits<double>::max();
  for (auto betas : beta_candidates) {
    Eigen::MatrixXd used = null_vectors.leftCols(betas.size());
    refine_betas(used, world_dists, betas, m);
    auto camera_cps = assemble_control_points(used, betas, m);

    // Rebuild the camera-frame cloud; flip the sign if it lands behind.
    std::vector<Eigen::Vector3d> camera_points(n);
    double depth_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      Eigen::Vector3d p = Eigen::Vector3d::Zero();
      for (int j = 0; j < m; ++j) p += cp->alphas(static_cast<int>(i), j) * camera_cps[j];
      camera_points[i] = p;
      depth_sum += p.z();
    }
    if (depth_sum < 0.0) {
      for (auto& p : camera_points) p = -p;
    }

    const auto pose = pose_from_point_clouds(world_points, camera_points);
    if (!pose) continue;

    double error = 0.0;
    bool valid = true;
    const SE3 camera_from_world = pose->inverse();
    for (std::size_t i = 0; i < n; ++i) {
      const auto px = project(cam, camera_from_world.transform(world_points[i]));
      if (!px) {
        valid = false;
        break;
      }
      const double du = px->u - pixels[i].u;
      const double dv = px->v - pixels[i].v;
      error += du * du + dv * dv;
    }
    if (valid && error < best_error) {
      best_error = error;
      best_pose = pose;
    }
  }
  return best_pose;
}

std::optional<PnPResult> pnp_ransac(std::span<const Eigen::Vector3d> world_points,
                                    std::span<const Pixel> pixels, std::span<const int> octaves,
                                    const PinholeCamera& cam, const PnPOptions& options, Rng& rng) {
  const int n = static_cast<int>(world_points.size());
  if (n < 4 || pixels.size() != world_points.size() || octaves.size() != world_points.size()) {
    return std::nullopt;
  }

  std::vector<double> thresholds(n);
  for (int i = 0; i < n; ++i) {
    thresholds[i] = options.base_threshold_px * std::pow(options.octave_scale, octaves[i]);
  }

  const auto count_inliers = [&](const SE3& pose, std::vector<char>& mask) {
    const SE3 camera_from_world = pose.inverse();
    int count = 0;
    for (int i = 0; i < n; ++i) {
      mask[i] = 0;
      const auto px = project(cam, camera_from_world.transform(world_points[i]));
      if (!px) continue;
      const double du = px->u - pixels[i].u;
      const double dv = px->v - pixels[i].v;
      if (std::sqrt(du * du + dv * dv) < thresholds[i]) {
        mask[i] = 1;
        ++count;
      }
    }
    return count;
  };

  std::vector<int> indices(n);
  for (int i = 0; i < n; ++i) indices[i] = i;

  PnPResult best;
  best.inlier_mask.assign(n, 0);
  std::vector<char> mask(n, 0);
  int adaptive_limit = options.max_iterations;
  int iter = 0;
  for (; iter < options.max_iterations && iter < adaptive_limit; ++iter) {
    for (int k = 0; k < 4; ++k) {
      const int pick = k + static_cast<int>(rng.uniform_index(n - k));
      std::swap(indices[k], indices[pick]);
    }
    std::array<Eigen::Vector3d, 4> sample_world;
    std::array<Pixel, 4> sample_px;
    for (int k = 0; k < 4; ++k) {
      sample_world[k] = world_points[indices[k]];
      sample_px[k] = pixels[indices[k]];
    }
    const auto pose = epnp_solve(sample_world, sample_px, cam);
    if (!pose) continue;
    const int count = count_inliers(*pose, mask);
    if (count > best.inlier_count) {
      best.inlier_count = count;
      best.pose = *pose;
      best.inlier_mask = mask;
      const double inlier_ratio = static_cast<double>(count) / n;
      const double p_sample = std::pow(inlier_ratio, 4);
      if (p_sample >= 1.0 - 1e-12) {
        adaptive_limit = iter + 1;
      } else if (p_sample > 0.0) {
        adaptive_limit = std::min<double>(
            options.max_iterations,
            std::ceil(std::log(1.0 - options.confidence) / std::log(1.0 - p_sample)));
      }
    }
  }

  if (best.inlier_count < options.min_inliers) return std::nullopt;
  best.iterations_run = iter;

  // Refit over the inlier set; keep the refit only if it does not lose support.
  std::vector<Eigen::Vector3d> inlier_world;
  std::vector<Pixel> inlier_px;
  for (int i = 0; i < n; ++i) {
    if (best.inlier_mask[i]) {
      inlier_world.push_back(world_points[i]);
      inlier_px.push_back(pixels[i]);
    }
  }
  if (const auto refit = epnp_solve(inlier_world, inlier_px, cam)) {
    const int count = count_inliers(*refit, mask);
    if (count >= best.inlier_count) {
      best.pose = *refit;
      best.inlier_count = count;
      best.inlier_mask = mask;
    }
  }
  return best;
}

}  // namespace srfloc
