#pragma once

#include <optional>
#include <span>
#include <vector>

#include "oaflow/costvol.hpp"
#include "oaflow/epigeo.hpp"
#include "oaflow/fgflow.hpp"
#include "oaflow/image.hpp"
#include "oaflow/sgm.hpp"

namespace oaflow {

/// Per-pixel vz-ratio omega = v_z / Z. Valid values are finite and below 1.
struct VzRatioField {
  Raster<double> omega;
  Mask valid;

  VzRatioField() = default;
  VzRatioField(int w, int h) : omega(w, h, 0.0), valid(w, h, 0) {}

  int width() const { return omega.width; }
  int height() const { return omega.height; }
  void set(int x, int y, double w) {
    omega(x, y) = w;
    valid(x, y) = 1;
  }
  void invalidate(int x, int y) {
    omega(x, y) = 0.0;
    valid(x, y) = 0;
  }
  size_t count_valid() const;
};

/// d = delta * omega / (1 - omega). Throws std::domain_error for omega >= 1 or delta < 0.
double vz_disparity(double delta, double omega);
/// Inverse of vz_disparity: omega = d / (delta + d).
double vz_from_disparity(double delta, double d);

/// Distance of the rectified pixel from the epipole; +inf for an epipole at infinity.
double epipole_distance(const EpipolarFrame& frame, const Eigen::Vector2d& p);

/// Uniform omega labels over [0, omega_max].
struct VzLabels {
  double omega_max = 0.1;
  int count = 96;

  double value(double label) const { return omega_max * label / (count - 1); }
  double step() const { return omega_max / (count - 1); }
  std::vector<double> values() const;
};

/// omega_max = 1.2 x the 99th percentile of omega implied by the matches, kept inside (1e-3, 0.95].
VzLabels vz_labels_from_matches(std::span<const SparseMatch> matches, const EpipolarFrame& frame, int count = 96);

/// Geometry of the static scene between the frames. `epipolar` is empty when the camera did not
/// translate and the rotational field alone explains the background.
struct BackgroundMotion {
  RotationalFlowModel rotation;
  std::optional<EpipolarFrame> epipolar;
  std::vector<int> inliers;  // indices into the background matches
  double median_error = 0.0;
};

struct BgOptions {
  RansacOptions ransac;
  double translation_free_fraction = 0.9;  // share of matches an affine field must explain
  double translation_free_tolerance = 1.0; // pixels
  int vz_label_count = 96;
  SgmPenalties penalties;
  double miss_margin = 1.0;
  double lr_tolerance = 1.0;
  DisparityRange infinite_epipole_range;  // disparity labels when the epipole is at infinity
};

/// Background matches: those whose source pixel has label 0.
SparseMatches background_matches(std::span<const SparseMatch> matches, const InstanceMap& instances);

/// RANSAC F and rotational model on background matches only. Throws GeometryError when fewer
/// than 8 background matches exist or every hypothesis is degenerate.
EpipolarFrame background_frame(std::span<const SparseMatch> matches, const InstanceMap& instances,
                               const RansacOptions& opts = {});

/// Least-squares affine flow fitted to the matches, refitted once on those within `tolerance`.
/// Returns the model and the share of matches it explains.
RotationalFlowModel fit_affine_flow(std::span<const SparseMatch> matches, double tolerance, double* explained = nullptr);

/// Full background geometry including the translation-free case.
BackgroundMotion estimate_background_motion(std::span<const SparseMatch> matches, const InstanceMap& instances,
                                            const BgOptions& opts = {});

/// 4-direction SGM over `omega_labels` on `domain`; returns the per-pixel omega (sub-label refined).
/// Labels may be negative, as for the backward pass where omega_b = -omega / (1 - omega).
VzRatioField sgm_vz(const EpipolarFrame& frame, const TopKCostVolume& cv, const Mask& domain,
                    std::span<const double> omega_labels, const SgmPenalties& penalties, double miss_margin = 1.0);

/// Flow p_rect + vz_disparity(delta, omega) * dir - p at every valid pixel of `field`.
/// Pixels at the epipole receive the rotational component only.
FlowField bg_flow_from_vz(const VzRatioField& field, const EpipolarFrame& frame);

/// Semi-dense background omega: forward and backward vz SGM followed by the left-right check.
VzRatioField semi_dense_vz(const EpipolarFrame& fw, const EpipolarFrame& bw, const TopKCostVolume& cv_fw,
                           const TopKCostVolume& cv_bw, const Mask& domain, const VzLabels& labels,
                           const BgOptions& opts = {});

/// Fills invalid background pixels by walking toward the epipole, collecting up to `max_samples`
/// valid background omegas, fitting omega = alpha * delta + beta and evaluating it at the pixel
/// (clamped below 1). Degenerate fits use the sample mean; fewer than 2 samples leave the pixel invalid.
VzRatioField extrapolate_vz(const VzRatioField& field, const EpipolarFrame& frame, const InstanceMap& instances,
                            int max_samples = 50);

/// Backward frame from a forward one: F^T and a rotational model fitted on swapped inliers.
EpipolarFrame backward_frame(const EpipolarFrame& fw, std::span<const SparseMatch> inliers);

}  // namespace oaflow
