#include "oaflow/interpolate.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <stdexcept>

namespace oaflow {

namespace {

constexpr int kDx[8] = {1, -1, 0, 0, 1, 1, -1, -1};
constexpr int kDy[8] = {0, 0, 1, -1, 1, -1, 1, -1};
constexpr double kLen[8] = {1, 1, 1, 1, M_SQRT2, M_SQRT2, M_SQRT2, M_SQRT2};

double step_cost(const Image& g, int x0, int y0, int x1, int y1, double len, double edge_weight) {
  return len * (1.0 + edge_weight * std::abs(static_cast<double>(g(x1, y1)) - g(x0, y0)));
}

struct QueueItem {
  double d;
  int idx;
  bool operator>(const QueueItem& o) const { return d > o.d || (d == o.d && idx > o.idx); }
};

}  // namespace

GeodesicMap geodesic_nearest_seed(const Mask& seeds, const Image& guide, const Mask& region, double edge_weight) {
  const int W = region.width, H = region.height;
  GeodesicMap gm{Raster<int>(W, H, -1), Raster<double>(W, H, std::numeric_limits<double>::infinity())};
  std::priority_queue<QueueItem, std::vector<QueueItem>, std::greater<>> pq;
  for (int i = 0; i < W * H; ++i)
    if (seeds[i] && region[i]) {
      gm.nearest_seed[i] = i;
      gm.distance[i] = 0.0;
      pq.push({0.0, i});
    }
  while (!pq.empty()) {
    const auto [d, idx] = pq.top();
    pq.pop();
    if (d > gm.distance[idx]) continue;
    const int x = idx % W, y = idx / W;
    for (int k = 0; k < 8; ++k) {
      const int nx = x + kDx[k], ny = y + kDy[k];
      if (!region.inside(nx, ny) || !region(nx, ny)) continue;
      const double nd = d + step_cost(guide, x, y, nx, ny, kLen[k], edge_weight);
      const int nidx = ny * W + nx;
      if (nd < gm.distance[nidx]) {
        gm.distance[nidx] = nd;
        gm.nearest_seed[nidx] = gm.nearest_seed[idx];
        pq.push({nd, nidx});
      }
    }
  }
  return gm;
}

FlowField interpolate_dense(const FlowField& semi, const Image& guide, const Mask& region,
                            const InterpolationOptions& opts) {
  const int W = semi.width(), H = semi.height();
  if (!guide.same_shape(W, H) || !region.same_shape(W, H))
    throw std::invalid_argument("interpolate_dense: shape mismatch");
  Mask seeds(W, H, 0);
  std::vector<int> seed_pixels;
  for (int i = 0; i < W * H; ++i)
    if (region[i] && semi.valid[i]) {
      seeds[i] = 1;
      seed_pixels.push_back(i);
    }
  if (seed_pixels.empty()) throw std::invalid_argument("interpolate_dense: no valid seed inside the region");

  const GeodesicMap gm = geodesic_nearest_seed(seeds, guide, region, opts.edge_weight);

  // Seed adjacency from touching geodesic Voronoi cells.
  std::vector<int> seed_id(static_cast<size_t>(W) * H, -1);
  for (size_t s = 0; s < seed_pixels.size(); ++s) seed_id[seed_pixels[s]] = static_cast<int>(s);
  std::vector<std::map<int, double>> adj(seed_pixels.size());
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const int a = gm.nearest_seed(x, y);
      if (a < 0) continue;
      for (int k = 0; k < 8; ++k) {
        const int nx = x + kDx[k], ny = y + kDy[k];
        if (!region.inside(nx, ny)) continue;
        const int b = gm.nearest_seed(nx, ny);
        if (b < 0 || b == a) continue;
        const double w = gm.distance(x, y) + gm.distance(nx, ny) + step_cost(guide, x, y, nx, ny, kLen[k], opts.edge_weight);
        auto& e = adj[seed_id[a]][seed_id[b]];
        if (e == 0.0 || w < e) e = w;
      }
    }

  // Per-seed weighted affine model over its geodesic k nearest seeds.
  const int n_seeds = static_cast<int>(seed_pixels.size());
  std::vector<Eigen::Vector3d> model_u(n_seeds), model_v(n_seeds);
#pragma omp parallel
  {
    std::vector<double> dist(n_seeds, std::numeric_limits<double>::infinity());
    std::vector<int> touched;
#pragma omp for schedule(dynamic, 16)
    for (int s = 0; s < n_seeds; ++s) {
      std::priority_queue<std::pair<double, int>, std::vector<std::pair<double, int>>, std::greater<>> pq;
      std::vector<std::pair<int, double>> knn;
      dist[s] = 0.0;
      touched.push_back(s);
      pq.push({0.0, s});
      while (!pq.empty() && static_cast<int>(knn.size()) < opts.neighbors) {
        const auto [d, a] = pq.top();
        pq.pop();
        if (d > dist[a]) continue;
        knn.push_back({a, d});
        for (const auto& [b, w] : adj[a]) {
          if (d + w < dist[b]) {
            if (!std::isfinite(dist[b])) touched.push_back(b);
            dist[b] = d + w;
            pq.push({d + w, b});
          }
        }
      }
      for (int t : touched) dist[t] = std::numeric_limits<double>::infinity();
      touched.clear();

      Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
      Eigen::Vector3d bu = Eigen::Vector3d::Zero(), bv = Eigen::Vector3d::Zero();
      const int cx = seed_pixels[s] % W, cy = seed_pixels[s] / W;
      double wsum = 0.0, mu = 0.0, mv = 0.0;
      for (const auto& [j, d] : knn) {
        const int idx = seed_pixels[j];
        const double w = std::exp(-d / opts.distance_scale);
        const Eigen::Vector3d row(1.0, idx % W - cx, idx / W - cy);
        A += w * row * row.transpose();
        bu += w * semi.u[idx] * row;
        bv += w * semi.v[idx] * row;
        wsum += w;
        mu += w * semi.u[idx];
        mv += w * semi.v[idx];
      }
      // Affine when the neighborhood is well spread, otherwise the weighted mean.
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(A / wsum);
      if (knn.size() >= 3 && es.eigenvalues()(0) > 1e-6) {
        const auto ldlt = A.ldlt();
        model_u[s] = ldlt.solve(bu);
        model_v[s] = ldlt.solve(bv);
      } else {
        model_u[s] = Eigen::Vector3d(mu / wsum, 0, 0);
        model_v[s] = Eigen::Vector3d(mv / wsum, 0, 0);
      }
    }
  }

  FlowField out(W, H);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (!region(x, y)) continue;
      if (seeds(x, y)) {
        out.set(x, y, semi.u(x, y), semi.v(x, y));
        continue;
      }
      const int a = gm.nearest_seed(x, y);
      if (a < 0) continue;  // region component without seeds, handled below
      const int s = seed_id[a];
      const double dx = x - a % W, dy = y - a / W;
      out.set(x, y, static_cast<float>(model_u[s](0) + model_u[s](1) * dx + model_u[s](2) * dy),
              static_cast<float>(model_v[s](0) + model_v[s](1) * dx + model_v[s](2) * dy));
    }
  // Region pixels unreachable from any seed (disconnected components) take the global seed mean.
  {
    double su = 0, sv = 0;
    for (int i : seed_pixels) {
      su += semi.u[i];
      sv += semi.v[i];
    }
    su /= n_seeds;
    sv /= n_seeds;
    for (int i = 0; i < W * H; ++i)
      if (region[i] && !out.valid[i]) out.set(i % W, i / W, static_cast<float>(su), static_cast<float>(sv));
  }

  for (int sweep = 0; sweep < opts.smoothing_sweeps; ++sweep) {
    FlowField next = out;
#pragma omp parallel for schedule(static)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        if (!region(x, y)) continue;
        double wsum = 1.0, su = out.u(x, y), sv = out.v(x, y);
        for (int k = 0; k < 4; ++k) {
          const int nx = x + kDx[k], ny = y + kDy[k];
          if (!region.inside(nx, ny) || !region(nx, ny)) continue;
          const double w = opts.smoothing_weight *
                           std::exp(-opts.smoothing_edge_beta * std::abs(static_cast<double>(guide(nx, ny)) - guide(x, y)));
          wsum += w;
          su += w * out.u(nx, ny);
          sv += w * out.v(nx, ny);
        }
        next.u(x, y) = static_cast<float>(su / wsum);
        next.v(x, y) = static_cast<float>(sv / wsum);
      }
    out = std::move(next);
  }
  return out;
}

}  // namespace oaflow
