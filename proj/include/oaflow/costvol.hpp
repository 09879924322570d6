#pragma once

#include <Eigen/Core>
#include <span>
#include <string>
#include <vector>

#include "oaflow/matchnet.hpp"

namespace oaflow {

/// Half-open displacement window: u in [u_min, u_max), v in [v_min, v_max).
struct SearchWindow {
  int u_min = -200, u_max = 200;
  int v_min = -100, v_max = 100;

  int width() const { return u_max - u_min; }
  int height() const { return v_max - v_min; }
  size_t size() const { return static_cast<size_t>(width()) * height(); }
  bool contains(int du, int dv) const { return du >= u_min && du < u_max && dv >= v_min && dv < v_max; }
  /// Position of a displacement in scanline (row-major) order over the window.
  int scan_index(int du, int dv) const { return (dv - v_min) * width() + (du - u_min); }
  void validate() const;
};

struct Candidate {
  int du = 0, dv = 0;
  double score = 0.0;
};

/// Per-pixel candidate lists, at most K entries each, sorted by descending score
/// (equal scores in scanline order of the displacement).
struct TopKCostVolume {
  int width = 0, height = 0, K = 0;
  SearchWindow window;
  std::vector<Candidate> slots;  // width * height * K
  std::vector<int> counts;       // width * height

  TopKCostVolume() = default;
  TopKCostVolume(int w, int h, int k, SearchWindow win)
      : width(w), height(h), K(k), window(win), slots(static_cast<size_t>(w) * h * k), counts(static_cast<size_t>(w) * h, 0) {}

  std::span<const Candidate> at(int x, int y) const {
    const size_t i = static_cast<size_t>(y) * width + x;
    return {slots.data() + i * K, static_cast<size_t>(counts[i])};
  }
  std::span<Candidate> at(int x, int y) {
    const size_t i = static_cast<size_t>(y) * width + x;
    return {slots.data() + i * K, static_cast<size_t>(counts[i])};
  }
  void set(int x, int y, std::span<const Candidate> c);
  /// True when every list is sorted, unique, inside the window and no longer than K.
  bool well_formed() const;
};

struct SparseMatch {
  Eigen::Vector2d p;   // pixel in image 1
  Eigen::Vector2d p2;  // matching pixel in image 2
  double score = 0.0;
};
using SparseMatches = std::vector<SparseMatch>;

/// Exact top-K over the in-window displacements whose target lies inside the second feature map.
TopKCostVolume build_cost_volume(const FeatureMap& f1, const FeatureMap& f2, const SearchWindow& window, int K);

/// Iterative neighborhood averaging over the union of neighbor label sets.
/// Missing entries count as 0; the divisor is the number of in-bounds neighbors. Keeps the top K.
TopKCostVolume aggregate(const TopKCostVolume& cv, int iterations, int window = 5);

enum class ConfidenceSelector { top_score, entropy };

/// Keeps the pixels whose best aggregated score reaches the per-image quantile that retains
/// `target_fraction` of the pixels. The entropy selector ranks by low softmax entropy instead.
SparseMatches confident_matches(const TopKCostVolume& cv, double target_fraction,
                                ConfidenceSelector selector = ConfidenceSelector::top_score);

/// Binary dump: "OACV" magic, int32 width/height/K/u_min/u_max/v_min/v_max, then per pixel an int32
/// count followed by K records of (int32 du, int32 dv, float64 score); unused records are zero.
void write_cost_volume(const TopKCostVolume& cv, const std::string& path);
TopKCostVolume read_cost_volume(const std::string& path);

namespace reference {
// Serial implementations that score/sort exhaustively; kept for testing the parallel kernels.
TopKCostVolume build_cost_volume(const FeatureMap& f1, const FeatureMap& f2, const SearchWindow& window, int K);
TopKCostVolume aggregate(const TopKCostVolume& cv, int iterations, int window = 5);
}  // namespace reference

}  // namespace oaflow
