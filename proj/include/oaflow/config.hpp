#pragma once

#include <stdexcept>
#include <string>

#include "oaflow/bgflow.hpp"
#include "oaflow/costvol.hpp"
#include "oaflow/fgflow.hpp"
#include "oaflow/slanted_plane.hpp"
#include "oaflow/superpixel.hpp"

namespace oaflow {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Every tunable of the pipeline. Defaults follow the published constants where they exist.
struct PipelineConfig {
  std::string checkpoint;

  // matching
  int top_k = 30;
  SearchWindow window;
  int aggregation_iterations = 4;
  int aggregation_window = 5;
  double confidence_fraction = 0.6;
  ConfidenceSelector confidence_selector = ConfidenceSelector::top_score;
  int patch_range = 200;  // R, training strips

  // geometry and labeling
  SgmPenalties penalties;  // lambda1, lambda2
  RansacOptions ransac;
  int fg_min_inliers = 15;
  double fg_max_median_error = 2.0;
  double lr_tolerance = 1.0;
  double miss_margin = 1.0;
  DisparityRange disparity;

  // background
  int vz_labels = 96;
  int extrapolation_samples = 50;
  int superpixels = 800;  // for a 1242x375 frame; scaled with the image area
  double superpixel_compactness = 0.05;
  SlantedPlaneOptions plane;

  InterpolationOptions interpolation;

  void validate() const;
  FgOptions fg_options() const;
  BgOptions bg_options() const;
  /// Superpixel count for a frame of the given size.
  int superpixels_for(int width, int height) const;
};

/// Flat "key = value" text; '#' starts a comment. Unknown keys and malformed values throw ConfigError.
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::string& path);
std::string format_config(const PipelineConfig& c);

/// Environment variable naming the default config file.
inline constexpr const char* kConfigEnv = "OAFLOW_CONFIG";

}  // namespace oaflow
