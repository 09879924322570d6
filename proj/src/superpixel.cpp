#include "oaflow/superpixel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

namespace oaflow {

BoundaryType SuperpixelGraph::type(int a, int b) const {
  const auto it = boundaries.find({std::min(a, b), std::max(a, b)});
  return it == boundaries.end() ? BoundaryType::occlusion : it->second;
}

void SuperpixelGraph::set_type(int a, int b, BoundaryType t) { boundaries[{std::min(a, b), std::max(a, b)}] = t; }

void SuperpixelGraph::rebuild() {
  cx.assign(count, 0.0);
  cy.assign(count, 0.0);
  size.assign(count, 0);
  std::map<std::pair<int, int>, BoundaryType> next;
  for (int y = 0; y < label.height; ++y)
    for (int x = 0; x < label.width; ++x) {
      const int a = label(x, y);
      if (a < 0) continue;
      cx[a] += x;
      cy[a] += y;
      ++size[a];
      const int nb[2][2] = {{x + 1, y}, {x, y + 1}};
      for (const auto& n : nb) {
        if (!label.inside(n[0], n[1])) continue;
        const int b = label(n[0], n[1]);
        if (b < 0 || b == a) continue;
        next.emplace(std::pair{std::min(a, b), std::max(a, b)}, type(a, b));
      }
    }
  for (int s = 0; s < count; ++s)
    if (size[s] > 0) {
      cx[s] /= size[s];
      cy[s] /= size[s];
    }
  boundaries = std::move(next);
}

SuperpixelGraph make_superpixel_graph(Raster<int> labels) {
  SuperpixelGraph g;
  int mx = -1;
  for (int v : labels.data) mx = std::max(mx, v);
  g.label = std::move(labels);
  g.count = mx + 1;
  g.rebuild();
  return g;
}

SuperpixelGraph compute_superpixels(const Image& guide, const Mask& region, const SuperpixelOptions& opts) {
  const int W = region.width, H = region.height;
  if (!guide.same_shape(W, H)) throw std::invalid_argument("compute_superpixels: shape mismatch");
  if (opts.count < 1) throw std::invalid_argument("compute_superpixels: count must be positive");
  size_t area = 0;
  for (auto v : region.data) area += v != 0;
  Raster<int> label(W, H, -1);
  if (area == 0) return make_superpixel_graph(std::move(label));

  const double S = std::max(2.0, std::sqrt(static_cast<double>(area) / opts.count));
  struct Center {
    double x, y, i;
  };
  std::vector<Center> centers;
  for (double y = S / 2; y < H; y += S)
    for (double x = S / 2; x < W; x += S) {
      // Snap the seed to the nearest region pixel inside its cell.
      int bx = -1, by = -1;
      double best = std::numeric_limits<double>::infinity();
      for (int yy = std::max(0, static_cast<int>(y - S / 2)); yy < std::min(H, static_cast<int>(y + S / 2) + 1); ++yy)
        for (int xx = std::max(0, static_cast<int>(x - S / 2)); xx < std::min(W, static_cast<int>(x + S / 2) + 1); ++xx) {
          if (!region(xx, yy)) continue;
          const double d = (xx - x) * (xx - x) + (yy - y) * (yy - y);
          if (d < best) {
            best = d;
            bx = xx;
            by = yy;
          }
        }
      if (bx >= 0) centers.push_back({double(bx), double(by), double(guide(bx, by))});
    }

  const double m2 = opts.compactness * opts.compactness;
  Raster<double> dist(W, H);
  for (int it = 0; it < opts.iterations; ++it) {
    std::fill(dist.data.begin(), dist.data.end(), std::numeric_limits<double>::infinity());
    for (size_t c = 0; c < centers.size(); ++c) {
      const auto& ce = centers[c];
      const int x0 = std::max(0, static_cast<int>(ce.x - 2 * S)), x1 = std::min(W - 1, static_cast<int>(ce.x + 2 * S));
      const int y0 = std::max(0, static_cast<int>(ce.y - 2 * S)), y1 = std::min(H - 1, static_cast<int>(ce.y + 2 * S));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          if (!region(x, y)) continue;
          const double di = guide(x, y) - ce.i;
          const double d = ((x - ce.x) * (x - ce.x) + (y - ce.y) * (y - ce.y)) / (S * S) + di * di / m2;
          if (d < dist(x, y)) {
            dist(x, y) = d;
            label(x, y) = static_cast<int>(c);
          }
        }
    }
    std::vector<Center> acc(centers.size(), {0, 0, 0});
    std::vector<int> n(centers.size(), 0);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const int c = label(x, y);
        if (c < 0) continue;
        acc[c].x += x;
        acc[c].y += y;
        acc[c].i += guide(x, y);
        ++n[c];
      }
    for (size_t c = 0; c < centers.size(); ++c)
      if (n[c] > 0) centers[c] = {acc[c].x / n[c], acc[c].y / n[c], acc[c].i / n[c]};
  }

  // Region pixels beyond every search window join the nearest labeled pixel (multi-source BFS).
  {
    std::queue<int> q;
    for (int i = 0; i < W * H; ++i)
      if (label[i] >= 0) q.push(i);
    while (!q.empty()) {
      const int i = q.front();
      q.pop();
      const int x = i % W, y = i / W;
      const int nb[4][2] = {{x + 1, y}, {x - 1, y}, {x, y + 1}, {x, y - 1}};
      for (const auto& p : nb) {
        if (!label.inside(p[0], p[1]) || !region(p[0], p[1]) || label(p[0], p[1]) >= 0) continue;
        label(p[0], p[1]) = label[i];
        q.push(p[1] * W + p[0]);
      }
    }
  }

  // Connected components; small fragments merge into the adjacent component found first.
  Raster<int> comp(W, H, -1);
  std::vector<int> comp_size;
  std::vector<int> comp_merge;
  const int min_size = std::max(1, static_cast<int>(S * S / 4));
  for (int i = 0; i < W * H; ++i) {
    if (label[i] < 0 || comp[i] >= 0) continue;
    const int id = static_cast<int>(comp_size.size());
    std::vector<int> members{i};
    comp[i] = id;
    int adjacent = -1;
    for (size_t k = 0; k < members.size(); ++k) {
      const int x = members[k] % W, y = members[k] / W;
      const int nb[4][2] = {{x + 1, y}, {x - 1, y}, {x, y + 1}, {x, y - 1}};
      for (const auto& p : nb) {
        if (!label.inside(p[0], p[1])) continue;
        const int j = p[1] * W + p[0];
        if (label[j] < 0) continue;
        if (label[j] == label[i]) {
          if (comp[j] < 0) {
            comp[j] = id;
            members.push_back(j);
          }
        } else if (adjacent < 0 && comp[j] >= 0) {
          adjacent = comp[j];
        }
      }
    }
    comp_size.push_back(static_cast<int>(members.size()));
    comp_merge.push_back(static_cast<int>(members.size()) < min_size && adjacent >= 0 ? adjacent : id);
  }
  // Resolve merge chains and number the surviving components contiguously.
  std::vector<int> root(comp_size.size()), final_id(comp_size.size(), -1);
  int next = 0;
  for (size_t c = 0; c < comp_size.size(); ++c) {
    int r = static_cast<int>(c);
    while (comp_merge[r] != r) r = comp_merge[r];
    root[c] = r;
    if (final_id[r] < 0) final_id[r] = next++;
  }
  for (int i = 0; i < W * H; ++i)
    if (comp[i] >= 0) label[i] = final_id[root[comp[i]]];
  return make_superpixel_graph(std::move(label));
}

}  // namespace oaflow
