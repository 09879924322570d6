#pragma once

#include <string>
#include <vector>

#include "oaflow/config.hpp"
#include "oaflow/fgflow.hpp"
#include "oaflow/matchnet.hpp"

namespace oaflow {

enum class BackgroundMode { vz_ratio, epipolar_disparity, rotation_only };

struct RunReport {
  int width = 0, height = 0;
  size_t confident_matches = 0;
  size_t background_matches = 0;
  BackgroundMode background_mode = BackgroundMode::rotation_only;
  Eigen::Matrix3d background_F = Eigen::Matrix3d::Zero();
  Eigen::Vector3d background_epipole = Eigen::Vector3d::Zero();
  size_t background_inliers = 0;
  double background_median_error = 0.0;
  double omega_max = 0.0;
  double semi_dense_fraction = 0.0;  // background pixels with omega after the left-right check
  int superpixels = 0;
  int plane_sweeps = 0;
  double plane_energy = 0.0;
  std::vector<InstanceFlowResult> instances;  // dense fields dropped, diagnostics kept
  std::vector<std::pair<std::string, double>> timings;  // seconds per stage
};

/// Key-value lines followed by a per-instance table.
std::string format_run_report(const RunReport& r);

/// Instance k takes instances[k-1]'s dense field; background pixels take `background`.
/// Throws std::invalid_argument when a label in the map has no result.
FlowField compose(const FlowField& background, const std::vector<InstanceFlowResult>& instances,
                  const InstanceMap& map);

struct PipelineResult {
  FlowField flow;
  RunReport report;
};

/// Features, cost volumes, aggregation, confident matches, per-instance and background flow, composition.
/// Throws GeometryError when the background geometry cannot be estimated.
PipelineResult run(const Image& img1, const Image& img2, const InstanceMap& instances, const NetParams& net,
                   const PipelineConfig& config);

}  // namespace oaflow
