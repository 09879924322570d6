#pragma once

#include <span>
#include <string>
#include <vector>

#include "oaflow/costvol.hpp"
#include "oaflow/epigeo.hpp"
#include "oaflow/interpolate.hpp"
#include "oaflow/sgm.hpp"

namespace oaflow {

struct DisparityRange {
  double d_min = -128.0, d_max = 128.0, step = 1.0;

  int count() const { return static_cast<int>(std::floor((d_max - d_min) / step + 1e-9)) + 1; }
  double value(double label) const { return d_min + label * step; }
  void validate() const;
};

/// Miss cost for labels without a nearby candidate: -(lowest retained score) + margin.
double miss_penalty(std::span<const Candidate> candidates, double margin = 1.0);

/// Cost over arbitrary along-line disparities for pixel p: for each disparity the candidate
/// nearest to p_rect + d * dir (within `tolerance` pixels) supplies -score; otherwise `miss`.
std::vector<double> epipolar_cost_profile(std::span<const Candidate> candidates, const Eigen::Vector2d& p,
                                          const Eigen::Vector2d& p_rect, const Eigen::Vector2d& dir,
                                          std::span<const double> disparities, double miss, double tolerance = 1.0);

/// Per-disparity costs for pixel p of one rigid body.
std::vector<double> instance_cost_profile(const Eigen::Vector2d& p, const EpipolarFrame& frame,
                                          const TopKCostVolume& cv, const DisparityRange& range);

/// Keeps p iff |flow_fw(p) + flow_bw(p + flow_fw(p))| <= tol (bilinear lookup of valid backward pixels).
FlowField left_right_check(const FlowField& flow_fw, const FlowField& flow_bw, double tol);

struct FgOptions {
  DisparityRange range;
  SgmPenalties penalties;
  RansacOptions ransac;
  int min_inliers = 15;
  double max_median_error = 2.0;  // pixels
  double lr_tolerance = 1.0;      // pixels
  double miss_margin = 1.0;
  InterpolationOptions interpolation;
};

enum class InstanceStatus { epipolar, fallback };

struct InstanceFlowResult {
  int instance_id = 0;
  FlowField semi_dense;
  FlowField dense;
  InstanceStatus status = InstanceStatus::fallback;
  int confident_matches = 0;
  int inliers = 0;
  double median_error = 0.0;
  double lr_survival = 0.0;  // fraction of mask pixels kept by the left-right check
  std::string note;
};

/// Disparity-labelled SGM along epipolar lines over `domain`; returns the reconstructed flow.
FlowField epipolar_sgm_flow(const EpipolarFrame& frame, const TopKCostVolume& cv, const Mask& domain,
                            const DisparityRange& range, const SgmPenalties& penalties, double miss_margin);

/// Flow for one rigid instance. `cv_bw` is the volume computed with the frames swapped.
InstanceFlowResult estimate_instance_flow(const Mask& mask, const TopKCostVolume& cv_fw, const TopKCostVolume& cv_bw,
                                          std::span<const SparseMatch> matches, const Image& img1, const Image& img2,
                                          const FgOptions& opts = {});

/// Pixels reached by rounding p + flow(p) for valid p in `mask`, dilated by `radius`.
Mask warp_mask(const Mask& mask, const FlowField& flow, int radius);

}  // namespace oaflow
