#pragma once

#include <vector>

#include "oaflow/bgflow.hpp"
#include "oaflow/superpixel.hpp"

namespace oaflow {

/// omega(x, y) = A (x - xc) + B (y - yc) + C over one superpixel.
struct PlaneParams {
  double A = 0.0, B = 0.0, C = 0.0;
  double xc = 0.0, yc = 0.0;

  double at(double x, double y) const { return A * (x - xc) + B * (y - yc) + C; }
};

struct SlantedPlaneOptions {
  double label_step = 1e-3;        // omega units per label; residuals are measured in these steps
  double huber_scale = 3.0;        // label steps
  double coplanar_weight = 1.0;    // per squared step of disagreement at each boundary pixel
  double hinge_penalty = 0.5;      // per boundary pixel pair
  double occlusion_penalty = 2.0;  // per boundary pixel pair
  int max_sweeps = 20;
  double tolerance = 1e-6;         // stop when a sweep lowers the energy by less than this
  int irls_iterations = 5;
  bool reassign_pixels = true;
};

struct SlantedPlaneResult {
  VzRatioField field;  // plane value at every superpixel pixel
  std::vector<PlaneParams> planes;
  SuperpixelGraph graph;
  std::vector<double> energy_trace;  // initial energy, then one entry per sweep
};

/// Energy: robust (Huber) data term of every valid omega sample against its superpixel plane, plus
/// for each 4-neighbor pixel pair (p, q) across superpixels a, b:
///   coplanar:  w_c (D(p)^2 + D(q)^2)    hinge: w_h + w_c D(m)^2 with m the pair midpoint
///   occlusion: w_o
/// where D is the difference of the two planes in label steps.
double slanted_plane_energy(const VzRatioField& field, const SuperpixelGraph& graph,
                            const std::vector<PlaneParams>& planes, const SlantedPlaneOptions& opts = {});

/// Block coordinate descent: robust plane fits (parallel over a coloring of the adjacency graph),
/// boundary-type selection, boundary-pixel reassignment. Every step is accepted only when it does
/// not raise the energy.
SlantedPlaneResult slanted_plane(const VzRatioField& field, SuperpixelGraph graph,
                                 const SlantedPlaneOptions& opts = {});

}  // namespace oaflow
