#include "srfloc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace srfloc {

namespace {

constexpr double kTimestampTolerance = 5e-7;

const SE3& ground_truth_pose(std::span<const StampedPose> ground_truth, double timestamp) {
  for (const auto& sp : ground_truth) {
    if (std::abs(sp.timestamp - timestamp) < kTimestampTolerance) return sp.pose;
  }
  throw std::runtime_error("no ground-truth pose for timestamp " + std::to_string(timestamp));
}

}  // namespace

std::vector<double> translation_errors(std::span<const RelocRecord> records,
                                       std::span<const StampedPose> ground_truth) {
  std::vector<double> errors;
  errors.reserve(records.size());
  for (const auto& rec : records) {
    const SE3& gt = ground_truth_pose(ground_truth, rec.timestamp);
    errors.push_back(rec.status == RelocStatus::kFailed
                         ? std::numeric_limits<double>::infinity()
                         : translation_distance(rec.pose, gt));
  }
  return errors;
}

double compute_recall(std::span<const RelocRecord> records,
                      std::span<const StampedPose> ground_truth, double theta_r) {
  if (records.empty()) return 0.0;
  const auto errors = translation_errors(records, ground_truth);
  int correct = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].status == RelocStatus::kVerified && errors[i] <= theta_r) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

std::optional<double> compute_mate_cm(std::span<const RelocRecord> records,
                                      std::span<const StampedPose> ground_truth) {
  const auto errors = translation_errors(records, ground_truth);
  double sum = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].status == RelocStatus::kVerified) {
      sum += errors[i];
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return 100.0 * sum / count;
}

std::vector<PrSample> pr_sweep(std::span<const RelocRecord> records,
                               std::span<const StampedPose> ground_truth, double theta_r,
                               bool pose_verification) {
  const auto errors = translation_errors(records, ground_truth);
  int max_inliers = 0;
  for (const auto& rec : records) {
    if (rec.status != RelocStatus::kFailed) max_inliers = std::max(max_inliers, rec.n_in);
  }

  std::vector<PrSample> samples;
  samples.reserve(max_inliers + 1);
  const int total = static_cast<int>(records.size());
  for (int t = 0; t <= max_inliers; ++t) {
    int accepted = 0, correct = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& rec = records[i];
      const bool pass_status = pose_verification ? rec.status == RelocStatus::kVerified
                                                 : rec.status != RelocStatus::kFailed;
      if (!pass_status || rec.n_in < t) continue;
      ++accepted;
      if (errors[i] <= theta_r) ++correct;
    }
    PrSample s;
    s.threshold = t;
    s.precision = accepted > 0 ? static_cast<double>(correct) / accepted : 1.0;
    s.recall = total > 0 ? static_cast<double>(correct) / total : 0.0;
    samples.push_back(s);
  }
  return samples;
}

EvalReport evaluate(std::span<const RelocRecord> records,
                    std::span<const StampedPose> ground_truth, double theta_r) {
  EvalReport report;
  report.queries = static_cast<int>(records.size());
  for (const auto& rec : records) {
    if (rec.status == RelocStatus::kVerified) ++report.verified;
  }
  report.recall = compute_recall(records, ground_truth, theta_r);
  report.mate_cm = compute_mate_cm(records, ground_truth);
  report.pr_with_verification = pr_sweep(records, ground_truth, theta_r, true);
  report.pr_without_verification = pr_sweep(records, ground_truth, theta_r, false);
  return report;
}

void write_pr_csv(const std::string& path, std::span<const PrSample> samples) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write PR csv: " + path);
  os << "threshold,precision,recall\n";
  char buf[96];
  for (const auto& s : samples) {
    std::snprintf(buf, sizeof(buf), "%d,%.9f,%.9f\n", s.threshold, s.precision, s.recall);
    os << buf;
  }
}

std::string summary_text(const EvalReport& report) {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof(buf), "queries=%d\n", report.queries);
  out += buf;
  std::snprintf(buf, sizeof(buf), "verified=%d\n", report.verified);
  out += buf;
  std::snprintf(buf, sizeof(buf), "recall=%.6f\n", report.recall);
  out += buf;
  if (report.mate_cm) {
    std::snprintf(buf, sizeof(buf), "mate_cm=%.6f\n", *report.mate_cm);
  } else {
    std::snprintf(buf, sizeof(buf), "mate_cm=absent\n");
  }
  out += buf;
  return out;
}

}  // namespace srfloc
