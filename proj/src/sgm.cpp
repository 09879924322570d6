#include "oaflow/sgm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace oaflow {

void SgmPenalties::validate() const {
  if (!(small >= 0) || !(large >= small)) throw std::invalid_argument("SgmPenalties: require 0 <= small <= large");
}

namespace {

struct PathState {
  std::vector<double> prev, cur;
  double prev_min = 0.0;
  bool has_prev = false;
};

// One step of the path recursion at pixel (x, y); accumulates L_r - C into `agg`.
void path_step(const CostGrid& unary, const SgmPenalties& pen, int x, int y, PathState& st, CostGrid& agg) {
  const int L = unary.labels;
  const double* c = unary.at(x, y);
  double* out = agg.at(x, y);
  double cur_min = std::numeric_limits<double>::infinity();
  if (!st.has_prev) {
    for (int d = 0; d < L; ++d) st.cur[d] = c[d];
  } else {
    const double jump = st.prev_min + pen.large;
    for (int d = 0; d < L; ++d) {
      double best = st.prev[d];
      if (d > 0) best = std::min(best, st.prev[d - 1] + pen.small);
      if (d + 1 < L) best = std::min(best, st.prev[d + 1] + pen.small);
      best = std::min(best, jump);
      st.cur[d] = c[d] + best - st.prev_min;
    }
  }
  for (int d = 0; d < L; ++d) {
    out[d] += st.cur[d] - c[d];
    cur_min = std::min(cur_min, st.cur[d]);
  }
  std::swap(st.prev, st.cur);
  st.prev_min = cur_min;
  st.has_prev = true;
}

}  // namespace

CostGrid sgm_aggregate(const CostGrid& unary, const Mask& domain, const SgmPenalties& pen, SgmDirections dirs) {
  pen.validate();
  if (!domain.same_shape(unary.width, unary.height)) throw std::invalid_argument("sgm_aggregate: domain shape mismatch");
  const int W = unary.width, H = unary.height, L = unary.labels;
  CostGrid agg(W, H, L, 0.0);
  if (L == 0) return agg;

  // Each direction: (number of scanlines, pixel at step k of scanline s).
  auto run = [&](int lines, int length, auto pixel_of) {
#pragma omp parallel
    {
      PathState st;
      st.prev.resize(L);
      st.cur.resize(L);
#pragma omp for schedule(static)
      for (int s = 0; s < lines; ++s) {
        st.has_prev = false;
        for (int k = 0; k < length; ++k) {
          const auto [x, y] = pixel_of(s, k);
          if (!domain(x, y)) {
            st.has_prev = false;
            continue;
          }
          path_step(unary, pen, x, y, st, agg);
        }
      }
    }
  };
  run(H, W, [](int s, int k) { return std::pair{k, s}; });
  run(H, W, [W](int s, int k) { return std::pair{W - 1 - k, s}; });
  if (dirs == SgmDirections::four) {
    run(W, H, [](int s, int k) { return std::pair{s, k}; });
    run(W, H, [H](int s, int k) { return std::pair{s, H - 1 - k}; });
  }
  for (size_t i = 0; i < agg.costs.size(); ++i) agg.costs[i] += unary.costs[i];
  return agg;
}

Raster<int> winner_take_all(const CostGrid& aggregated, const Mask& domain) {
  Raster<int> labels(aggregated.width, aggregated.height, -1);
  for (int y = 0; y < aggregated.height; ++y)
    for (int x = 0; x < aggregated.width; ++x) {
      if (!domain(x, y)) continue;
      const double* s = aggregated.at(x, y);
      labels(x, y) = static_cast<int>(std::min_element(s, s + aggregated.labels) - s);
    }
  return labels;
}

double subpixel_offset(std::span<const double> costs, int d) {
  if (d <= 0 || d + 1 >= static_cast<int>(costs.size())) return 0.0;
  const double a = costs[d - 1], b = costs[d], c = costs[d + 1];
  const double denom = a - 2 * b + c;
  if (!(denom > 1e-12)) return 0.0;
  return std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
}

std::vector<int> sgm_1d(const std::vector<std::vector<double>>& costs, const SgmPenalties& pen) {
  const int n = static_cast<int>(costs.size());
  if (n == 0) return {};
  const int L = static_cast<int>(costs[0].size());
  if (L == 0) throw std::invalid_argument("sgm_1d: at least one label required");
  CostGrid unary(n, 1, L);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(costs[i].size()) != L) throw std::invalid_argument("sgm_1d: ragged cost table");
    std::copy(costs[i].begin(), costs[i].end(), unary.at(i, 0));
  }
  const Mask all(n, 1, 1);
  const auto labels = winner_take_all(sgm_aggregate(unary, all, pen, SgmDirections::horizontal), all);
  return labels.data;
}

double chain_energy(const std::vector<std::vector<double>>& costs, std::span<const int> labels,
                    const SgmPenalties& pen) {
  double e = 0.0;
  for (size_t i = 0; i < costs.size(); ++i) {
    e += costs[i][labels[i]];
    if (i > 0) {
      const int jump = std::abs(labels[i] - labels[i - 1]);
      e += jump == 0 ? 0.0 : (jump == 1 ? pen.small : pen.large);
    }
  }
  return e;
}

}  // namespace oaflow
