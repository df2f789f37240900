#include "srfloc/surfel_optimizer.hpp"

#include <Eigen/Sparse>
#include <cmath>
#include <cstdio>
#include <map>

namespace srfloc {

namespace {

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

// Huber on the squared residual norm; returns (cost, irls weight).
std::pair<double, double> huber(double squared_norm, double delta) {
  const double delta_sq = delta * delta;
  if (squared_norm <= delta_sq) return {squared_norm, 1.0};
  const double norm = std::sqrt(squared_norm);
  return {2.0 * delta * norm - delta_sq, delta / norm};
}

}  // namespace

std::string OptimizationReport::to_line() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "opt success=%d iters=%d cost=%.6e->%.6e residuals=%zu skipped=%zu "
                "trimmed=%zu max_update=%.3e msg=%s",
                success ? 1 : 0, iterations, initial_cost, final_cost, residual_count,
                skipped_count, trimmed_count, max_pose_update,
                message.empty() ? "-" : message.c_str());
  return buf;
}

std::optional<double> inverse_depth_on_plane(const SE3& anchor_pose, const Pixel& anchor_px,
                                             const PlaneCoeff& plane, const PinholeCamera& cam,
                                             const OptimizerSettings& settings) {
  const Eigen::Vector3d ray = anchor_pose.q * lift_unit_plane(cam, anchor_px);
  const double denom = plane.n.dot(anchor_pose.t) + plane.d;
  if (std::abs(denom) <= settings.eps_denominator) return std::nullopt;
  const double rho = -plane.n.dot(ray) / denom;
  if (rho <= settings.rho_min) return std::nullopt;
  if (1.0 / rho > settings.max_depth) return std::nullopt;
  return rho;
}

std::optional<Eigen::Vector3d> plane_anchored_world_point(const SE3& anchor_pose,
                                                          const Pixel& anchor_px,
                                                          const PlaneCoeff& plane,
                                                          const PinholeCamera& cam,
                                                          const OptimizerSettings& settings) {
  const auto rho = inverse_depth_on_plane(anchor_pose, anchor_px, plane, cam, settings);
  if (!rho) return std::nullopt;
  const Eigen::Vector3d ray = anchor_pose.q * lift_unit_plane(cam, anchor_px);
  return anchor_pose.t + ray / *rho;
}

std::optional<Eigen::Vector2d> surfel_reproj_residual(const SurfelReprojFactor& factor,
                                                      const SE3& anchor_pose,
                                                      const SE3& target_pose,
                                                      const PinholeCamera& cam,
                                                      const OptimizerSettings& settings,
                                                      Eigen::Matrix<double, 2, 6>* jac_anchor,
                                                      Eigen::Matrix<double, 2, 6>* jac_target) {
  const Eigen::Vector3d lifted = lift_unit_plane(cam, factor.anchor_px);
  const Eigen::Vector3d ray = anchor_pose.q * lifted;
  const double denom = factor.plane.n.dot(anchor_pose.t) + factor.plane.d;
  if (std::abs(denom) <= settings.eps_denominator) return std::nullopt;
  const double n_dot_ray = factor.plane.n.dot(ray);
  const double rho = -n_dot_ray / denom;
  if (rho <= settings.rho_min || 1.0 / rho > settings.max_depth) return std::nullopt;
  const double depth = 1.0 / rho;

  const Eigen::Vector3d world_point = anchor_pose.t + depth * ray;
  const Eigen::Vector3d target_point = target_pose.inverse_transform(world_point);
  if (target_point.z() <= 1e-6) return std::nullopt;

  const Eigen::Vector2d projected(cam.fx * target_point.x() / target_point.z() + cam.cx,
                                  cam.fy * target_point.y() / target_point.z() + cam.cy);
  const Eigen::Vector2d residual =
      projected - Eigen::Vector2d(factor.target_px.u, factor.target_px.v);

  if (jac_anchor || jac_target) {
    const Eigen::Matrix<double, 2, 3> j_proj = projection_jacobian(cam, target_point);
    const Eigen::Matrix3d rot_target_t = target_pose.rotation().transpose();
    if (jac_target) {
      jac_target->block<2, 3>(0, 0) = -j_proj;
      jac_target->block<2, 3>(0, 3) = j_proj * skew(target_point);
    }
    if (jac_anchor) {
      const Eigen::Matrix3d rot_anchor = anchor_pose.rotation();
      // d world_point / d tangent, through both the ray origin and the
      // plane-intersection depth.
      const Eigen::Matrix3d deflect =
          Eigen::Matrix3d::Identity() - ray * factor.plane.n.transpose() / n_dot_ray;
      const Eigen::Matrix3d d_world_dv = deflect * rot_anchor;
      const Eigen::Matrix3d d_world_dw = -depth * deflect * rot_anchor * skew(lifted);
      jac_anchor->block<2, 3>(0, 0) = j_proj * rot_target_t * d_world_dv;
      jac_anchor->block<2, 3>(0, 3) = j_proj * rot_target_t * d_world_dw;
    }
  }
  return residual;
}

std::vector<SurfelReprojFactor> collect_factors(const VisualDatabase& db, const SurfelMap& map) {
  std::vector<SurfelReprojFactor> factors;
  for (const auto& [pid, pt] : db.points()) {
    if (pt.observations.size() < 2) continue;
    const PlaneCoeff plane = plane_coeff(map.surfel(pt.surfel_id));
    const auto& [anchor_kf, anchor_idx] = pt.observations.front();
    const Pixel anchor_px = db.keyframe(anchor_kf).features.keypoints[anchor_idx].position;
    for (std::size_t i = 1; i < pt.observations.size(); ++i) {
      const auto& [target_kf, target_idx] = pt.observations[i];
      const auto& target_kp = db.keyframe(target_kf).features.keypoints[target_idx];
      factors.push_back(SurfelReprojFactor{plane, anchor_kf, anchor_px, target_kf,
                                           target_kp.position, target_kp.octave});
    }
  }
  return factors;
}

OptimizationReport optimize_poses(VisualDatabase& db, const PinholeCamera& cam,
                                  const SurfelMap& map, const OptimizerSettings& settings) {
  OptimizationReport report;

  const std::vector<SurfelReprojFactor> factors = collect_factors(db, map);
  if (factors.empty()) {
    report.message = "no multi-view factors";
    return report;
  }

  // Only keyframes touched by a factor become variables; the rest have no
  // constraint and keep their pose.
  std::map<std::uint32_t, int> pose_index;
  std::vector<std::uint32_t> pose_ids;
  for (const auto& f : factors) {
    for (const auto id : {f.anchor_kf, f.target_kf}) {
      if (pose_index.emplace(id, 0).second) pose_ids.push_back(id);
    }
  }
  std::sort(pose_ids.begin(), pose_ids.end());
  for (std::size_t k = 0; k < pose_ids.size(); ++k) pose_index[pose_ids[k]] = static_cast<int>(k);
  const int n_vars = 6 * static_cast<int>(pose_ids.size());

  std::vector<SE3> poses;
  poses.reserve(pose_ids.size());
  for (const auto id : pose_ids) poses.push_back(db.keyframe(id).pose);

  const auto octave_weight = [&](int octave) {
    const double s = std::pow(settings.octave_scale, octave);
    return 1.0 / (s * s);
  };

  std::vector<char> active(factors.size(), 1);
  const auto evaluate_cost = [&](const std::vector<SE3>& p, std::size_t* skipped) -> double {
    double cost = 0.0;
    std::size_t skip = 0;
    for (std::size_t fi = 0; fi < factors.size(); ++fi) {
      if (!active[fi]) continue;
      const auto& f = factors[fi];
      const auto res = surfel_reproj_residual(f, p[pose_index.at(f.anchor_kf)],
                                              p[pose_index.at(f.target_kf)], cam, settings);
      if (!res) {
        ++skip;
        continue;
      }
      cost += octave_weight(f.octave) * huber(res->squaredNorm(), settings.huber_delta).first;
    }
    if (skipped) *skipped = skip;
    return cost;
  };

  std::size_t skipped = 0;
  double cost = evaluate_cost(poses, &skipped);
  report.initial_cost = cost;
  report.residual_count = factors.size() - skipped;
  report.skipped_count = skipped;
  report.cost_per_iteration.push_back(cost);
  if (report.residual_count == 0) {
    report.message = "all factors degenerate";
    return report;
  }
  if (!std::isfinite(cost)) {
    report.message = "non-finite initial cost";
    return report;
  }

  double lambda = settings.lambda_init;
  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::Matrix<double, 2, 6> jac_anchor, jac_target;
  int iterations = 0;
  int round = 0;
  bool converged = false;

  while (iterations < settings.max_iterations && !converged) {
    if (cost <= 1e-12) break;  // already at numerical zero
    ++iterations;

    triplets.clear();
    Eigen::VectorXd gradient = Eigen::VectorXd::Zero(n_vars);
    std::map<std::pair<int, int>, Eigen::Matrix<double, 6, 6>> blocks;
    const auto block_at = [&blocks](int bi, int bj) -> Eigen::Matrix<double, 6, 6>& {
      return blocks.try_emplace({bi, bj}, Eigen::Matrix<double, 6, 6>::Zero()).first->second;
    };

    for (std::size_t fi = 0; fi < factors.size(); ++fi) {
      if (!active[fi]) continue;
      const auto& f = factors[fi];
      const int ia = pose_index.at(f.anchor_kf);
      const int ib = pose_index.at(f.target_kf);
      const auto res = surfel_reproj_residual(f, poses[ia], poses[ib], cam, settings,
                                              &jac_anchor, &jac_target);
      if (!res) continue;
      const auto [rho_cost, rho_weight] = huber(res->squaredNorm(), settings.huber_delta);
      const double w = octave_weight(f.octave) * rho_weight;

      if (ia != ib) {
        block_at(ia, ia) += w * jac_anchor.transpose() * jac_anchor;
        block_at(ib, ib) += w * jac_target.transpose() * jac_target;
        if (ia < ib) {
          block_at(ia, ib) += w * jac_anchor.transpose() * jac_target;
        } else {
          block_at(ib, ia) += w * jac_target.transpose() * jac_anchor;
        }
        gradient.segment<6>(6 * ia) -= w * jac_anchor.transpose() * *res;
        gradient.segment<6>(6 * ib) -= w * jac_target.transpose() * *res;
      } else {
        const Eigen::Matrix<double, 2, 6> j = jac_anchor + jac_target;
        block_at(ia, ia) += w * j.transpose() * j;
        gradient.segment<6>(6 * ia) -= w * j.transpose() * *res;
      }
    }

    bool accepted = false;
    for (int attempt = 0; attempt < 12 && !accepted; ++attempt) {
      triplets.clear();
      for (const auto& [key, block] : blocks) {
        const auto [bi, bj] = key;
        for (int r = 0; r < 6; ++r) {
          for (int c = 0; c < 6; ++c) {
            double value = block(r, c);
            if (bi == bj && r == c) value += lambda * std::max(block(r, c), 1e-12);
            triplets.emplace_back(6 * bi + r, 6 * bj + c, value);
            if (bi != bj) triplets.emplace_back(6 * bj + c, 6 * bi + r, block(r, c));
          }
        }
      }
      Eigen::SparseMatrix<double> hessian(n_vars, n_vars);
      hessian.setFromTriplets(triplets.begin(), triplets.end());
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(hessian);
      if (solver.info() != Eigen::Success) {
        lambda *= 10.0;
        continue;
      }
      const Eigen::VectorXd delta = solver.solve(gradient);
      if (!delta.allFinite()) {
        lambda *= 10.0;
        continue;
      }

      std::vector<SE3> trial = poses;
      double max_update = 0.0;
      for (std::size_t k = 0; k < pose_ids.size(); ++k) {
        const Tangent xi = delta.segment<6>(6 * static_cast<int>(k));
        trial[k] = se3_boxplus(poses[k], xi);
        max_update = std::max(max_update, xi.norm());
      }
      const double trial_cost = evaluate_cost(trial, nullptr);
      if (!std::isfinite(trial_cost)) {
        report.message = "non-finite cost during optimization";
        report.final_cost = cost;
        report.iterations = iterations;
        return report;  // database untouched
      }
      if (trial_cost < cost) {
        const double relative = (cost - trial_cost) / std::max(cost, 1e-300);
        poses = std::move(trial);
        cost = trial_cost;
        lambda *= 0.5;
        accepted = true;
        report.max_pose_update = std::max(report.max_pose_update, max_update);
        report.cost_per_iteration.push_back(cost);
        if (relative < settings.relative_decrease) converged = true;
      } else {
        lambda *= 10.0;
      }
    }
    const bool round_done = converged || !accepted;
    if (round_done && round + 1 < settings.trim_rounds) {
      // Drop factors whose residual exceeds the gate and re-solve.
      std::size_t dropped = 0;
      for (std::size_t fi = 0; fi < factors.size(); ++fi) {
        if (!active[fi]) continue;
        const auto& f = factors[fi];
        const auto res = surfel_reproj_residual(f, poses[pose_index.at(f.anchor_kf)],
                                                poses[pose_index.at(f.target_kf)], cam, settings);
        if (!res || res->norm() > settings.trim_gate_px) {
          active[fi] = 0;
          ++dropped;
        }
      }
      ++round;
      if (dropped > 0) {
        report.trimmed_count += dropped;
        cost = evaluate_cost(poses, nullptr);
        report.cost_per_iteration.push_back(cost);
        lambda = settings.lambda_init;
        converged = false;
        continue;
      }
      converged = true;
    }
    if (!accepted && !converged) break;  // damping exhausted
  }

  report.iterations = iterations;
  report.final_cost = cost;
  report.success = true;
  for (std::size_t k = 0; k < pose_ids.size(); ++k) {
    db.set_keyframe_pose(pose_ids[k], poses[k]);
  }
  return report;
}

std::size_t refresh_map_points(VisualDatabase& db, const PinholeCamera& cam, const SurfelMap& map,
                               const OptimizerSettings& settings) {
  std::size_t updated = 0;
  std::vector<std::pair<std::uint64_t, Eigen::Vector3d>> moves;
  for (const auto& [pid, pt] : db.points()) {
    const auto& [anchor_kf, anchor_idx] = pt.observations.front();
    const Pixel px = db.keyframe(anchor_kf).features.keypoints[anchor_idx].position;
    const PlaneCoeff plane = plane_coeff(map.surfel(pt.surfel_id));
    const auto world = plane_anchored_world_point(db.keyframe(anchor_kf).pose, px, plane, cam,
                                                  settings);
    if (!world) continue;  // degenerate, keep the previous position
    moves.emplace_back(pid, *world);
  }
  for (const auto& [pid, pos] : moves) {
    db.set_point_position(pid, pos);
    ++updated;
  }
  return updated;
}

}  // namespace srfloc
