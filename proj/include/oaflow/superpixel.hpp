#pragma once

#include <map>
#include <utility>
#include <vector>

#include "oaflow/image.hpp"

namespace oaflow {

enum class BoundaryType { coplanar, hinge, occlusion };

/// Partition of a region into superpixels. Pixels outside the region carry -1.
struct SuperpixelGraph {
  Raster<int> label;
  int count = 0;
  std::vector<double> cx, cy;  // centroids
  std::vector<int> size;
  std::map<std::pair<int, int>, BoundaryType> boundaries;  // key (a, b) with a < b

  BoundaryType type(int a, int b) const;
  void set_type(int a, int b, BoundaryType t);
  /// Recomputes sizes, centroids and the adjacency set from `label`. Pairs that were already
  /// adjacent keep their type; new pairs start as occlusion.
  void rebuild();
};

/// Wraps an explicit labeling (-1 = outside) into a graph.
SuperpixelGraph make_superpixel_graph(Raster<int> labels);

struct SuperpixelOptions {
  int count = 800;
  double compactness = 0.05;  // intensity distance equivalent to one grid step
  int iterations = 10;
};

/// Grid-seeded local k-means in (x, y, intensity) over `region`, followed by a connectivity pass
/// that merges fragments smaller than a quarter of the grid cell into an adjacent superpixel.
SuperpixelGraph compute_superpixels(const Image& guide, const Mask& region, const SuperpixelOptions& opts = {});

}  // namespace oaflow
