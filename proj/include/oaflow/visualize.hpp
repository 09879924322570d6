#pragma once

#include "oaflow/image_io.hpp"

namespace oaflow {

/// Color-wheel rendering (hue = direction, saturation = magnitude / max_magnitude). A non-positive
/// max_magnitude uses the largest valid magnitude. Invalid pixels are black. 8-bit RGB.
PngData flow_to_color(const FlowField& flow, double max_magnitude = 0.0);

/// Endpoint-error map: blue (small) to red (large) on a log scale around the 3 px threshold,
/// black where the ground truth is invalid. 8-bit RGB.
PngData error_map(const FlowField& est, const FlowField& gt);

}  // namespace oaflow
