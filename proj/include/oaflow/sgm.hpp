#pragma once

#include <span>
#include <vector>

#include "oaflow/image.hpp"

namespace oaflow {

/// Pairwise term: 0 for equal labels, `small` for a unit jump, `large` beyond.
struct SgmPenalties {
  double small = 32.0;
  double large = 256.0;
  void validate() const;
};

/// Dense per-pixel label costs over a grid, layout [y][x][label].
struct CostGrid {
  int width = 0, height = 0, labels = 0;
  std::vector<double> costs;

  CostGrid() = default;
  CostGrid(int w, int h, int l, double fill = 0.0)
      : width(w), height(h), labels(l), costs(static_cast<size_t>(w) * h * l, fill) {}
  double* at(int x, int y) { return costs.data() + (static_cast<size_t>(y) * width + x) * labels; }
  const double* at(int x, int y) const { return costs.data() + (static_cast<size_t>(y) * width + x) * labels; }
};

enum class SgmDirections { horizontal, four };

/// Semi-global aggregation over the pixels selected by `domain` (paths restart where the domain
/// is broken). Each direction contributes its path cost minus the unary term, and the unary is
/// added once:  S(p,d) = C(p,d) + sum_r (L_r(p,d) - C(p,d)).  Path costs are normalized by their
/// previous minimum, so on a single scanline S(p,.) equals the min-marginals of the chain energy up
/// to a per-pixel constant. Scanlines of one direction run in parallel; the
/// per-pixel summation order is fixed, so results do not depend on the thread count.
CostGrid sgm_aggregate(const CostGrid& unary, const Mask& domain, const SgmPenalties& pen,
                       SgmDirections dirs = SgmDirections::four);

/// Per-pixel argmin of aggregated costs (ties resolve to the smaller label); -1 outside the domain.
Raster<int> winner_take_all(const CostGrid& aggregated, const Mask& domain);

/// Parabolic sub-label offset in [-0.5, 0.5] around label `d` of a cost vector.
double subpixel_offset(std::span<const double> costs, int d);

/// SGM on one scanline: costs[i][d] for pixel i and label d. Returns per-pixel labels.
std::vector<int> sgm_1d(const std::vector<std::vector<double>>& costs, const SgmPenalties& pen);

/// E(d) = sum C(i, d_i) + sum S(d_i, d_{i+1}) along a chain.
double chain_energy(const std::vector<std::vector<double>>& costs, std::span<const int> labels,
                    const SgmPenalties& pen);

}  // namespace oaflow
