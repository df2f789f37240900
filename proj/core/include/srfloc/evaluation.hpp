#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "srfloc/relocalizer.hpp"
#include "srfloc/trajectory.hpp"

namespace srfloc {

struct PrSample {
  int threshold = 0;  // minimum n_in
  double precision = 1.0;
  double recall = 0.0;
};

struct EvalReport {
  int queries = 0;
  int verified = 0;
  double recall = 0.0;                 // verified and within theta_r, over all queries
  std::optional<double> mate_cm;       // mean translation error of verified poses
  std::vector<PrSample> pr_with_verification;
  std::vector<PrSample> pr_without_verification;
};

// Translation error of each record against the ground-truth pose with the
// same timestamp (within 0.5 us). Throws when a timestamp has no ground truth.
std::vector<double> translation_errors(std::span<const RelocRecord> records,
                                       std::span<const StampedPose> ground_truth);

double compute_recall(std::span<const RelocRecord> records,
                      std::span<const StampedPose> ground_truth, double theta_r);

// Mean Euclidean translation error in centimeters, verified poses only; no
// alignment step (poses are metric in the map frame). Absent without any
// verified pose.
std::optional<double> compute_mate_cm(std::span<const RelocRecord> records,
                                      std::span<const StampedPose> ground_truth);

// One sample per integer inlier threshold in [0, max n_in]. Accepted poses
// need n_in >= t and, when pose_verification is set, verified status. Empty
// acceptance reports precision 1.0 by convention.
std::vector<PrSample> pr_sweep(std::span<const RelocRecord> records,
                               std::span<const StampedPose> ground_truth, double theta_r,
                               bool pose_verification);

EvalReport evaluate(std::span<const RelocRecord> records,
                    std::span<const StampedPose> ground_truth, double theta_r);

void write_pr_csv(const std::string& path, std::span<const PrSample> samples);
std::string summary_text(const EvalReport& report);

}  // namespace srfloc
