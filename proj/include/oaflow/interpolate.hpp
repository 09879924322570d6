#pragma once

#include "oaflow/image.hpp"

namespace oaflow {

struct InterpolationOptions {
  int neighbors = 25;           // seeds per affine fit
  double edge_weight = 50.0;    // geodesic step cost: length * (1 + edge_weight * |dI|)
  double distance_scale = 5.0;  // fit weight exp(-D / distance_scale)
  int smoothing_sweeps = 1;     // Jacobi sweeps after the fill
  double smoothing_weight = 1.0;
  double smoothing_edge_beta = 10.0;  // neighbor weight smoothing_weight * exp(-beta * |dI|)
};

/// Geodesic nearest-seed map over `region` with edge-aware step costs; pixels outside the
/// region or unreachable get seed -1 and infinite distance.
struct GeodesicMap {
  Raster<int> nearest_seed;
  Raster<double> distance;
};
GeodesicMap geodesic_nearest_seed(const Mask& seeds, const Image& guide, const Mask& region, double edge_weight);

/// Sparse-to-dense fill inside `region`: every region pixel inherits a locally weighted affine
/// model fitted to the geodesically nearest seeds of its Voronoi cell (seeds keep their values),
/// followed by Jacobi smoothing sweeps with edge-stopping weights. Pixels outside the region are
/// invalid in the result. Throws std::invalid_argument when the region holds no valid seed.
FlowField interpolate_dense(const FlowField& semi_dense, const Image& guide, const Mask& region,
                            const InterpolationOptions& opts = {});

}  // namespace oaflow
