#include "oaflow/slanted_plane.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace oaflow {

namespace {

double huber(double r, double tau) {
  const double a = std::abs(r);
  return a <= tau ? 0.5 * r * r : tau * (a - 0.5 * tau);
}

double pair_cost(BoundaryType t, const PlaneParams& a, const PlaneParams& b, int px, int py, int qx, int qy,
                 const SlantedPlaneOptions& o) {
  switch (t) {
    case BoundaryType::coplanar: {
      const double dp = (a.at(px, py) - b.at(px, py)) / o.label_step;
      const double dq = (a.at(qx, qy) - b.at(qx, qy)) / o.label_step;
      return o.coplanar_weight * (dp * dp + dq * dq);
    }
    case BoundaryType::hinge: {
      const double mx = 0.5 * (px + qx), my = 0.5 * (py + qy);
      const double dm = (a.at(mx, my) - b.at(mx, my)) / o.label_step;
      return o.hinge_penalty + o.coplanar_weight * dm * dm;
    }
    case BoundaryType::occlusion:
      return o.occlusion_penalty;
  }
  return 0.0;
}

struct PixelPair {
  int p, q;  // linear indices; q is the right or lower neighbor of p
};

struct Layout {
  std::vector<std::vector<int>> members;     // pixel indices per superpixel
  std::vector<PixelPair> pairs;              // 4-neighbor pairs across superpixels
  std::vector<std::vector<int>> pairs_of;    // pair indices touching each superpixel
  std::map<std::pair<int, int>, std::vector<int>> pairs_of_edge;
};

Layout make_layout(const SuperpixelGraph& g) {
  const int W = g.label.width, H = g.label.height;
  Layout L;
  L.members.resize(g.count);
  L.pairs_of.resize(g.count);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const int i = y * W + x;
      const int a = g.label[i];
      if (a < 0) continue;
      L.members[a].push_back(i);
      const int nb[2][2] = {{x + 1, y}, {x, y + 1}};
      for (const auto& n : nb) {
        if (!g.label.inside(n[0], n[1])) continue;
        const int j = n[1] * W + n[0];
        const int b = g.label[j];
        if (b < 0 || b == a) continue;
        const int id = static_cast<int>(L.pairs.size());
        L.pairs.push_back({i, j});
        L.pairs_of[a].push_back(id);
        L.pairs_of[b].push_back(id);
        L.pairs_of_edge[{std::min(a, b), std::max(a, b)}].push_back(id);
      }
    }
  return L;
}

double block_energy(int s, const VzRatioField& field, const SuperpixelGraph& g, const std::vector<PlaneParams>& planes,
                    const Layout& L, const SlantedPlaneOptions& o) {
  const int W = g.label.width;
  double e = 0.0;
  const double tau = o.huber_scale;
  for (int i : L.members[s])
    if (field.valid[i]) e += huber((field.omega[i] - planes[s].at(i % W, i / W)) / o.label_step, tau);
  for (int id : L.pairs_of[s]) {
    const auto& pp = L.pairs[id];
    const int a = g.label[pp.p], b = g.label[pp.q];
    e += pair_cost(g.type(a, b), planes[a], planes[b], pp.p % W, pp.p / W, pp.q % W, pp.q / W, o);
  }
  return e;
}

// One majorize-minimize step per IRLS iteration on the quadratic surrogate of the block energy,
// with a small proximal term that keeps under-determined blocks at their previous plane.
PlaneParams fit_block(int s, const VzRatioField& field, const SuperpixelGraph& g, const std::vector<PlaneParams>& planes,
                      const Layout& L, const SlantedPlaneOptions& o) {
  const int W = g.label.width;
  const double step = o.label_step, tau = o.huber_scale, prox = 1e-6;
  PlaneParams cur = planes[s];
  for (int it = 0; it < o.irls_iterations; ++it) {
    Eigen::Matrix3d Hm = prox * Eigen::Matrix3d::Identity();
    Eigen::Vector3d gv = prox * Eigen::Vector3d(cur.A, cur.B, cur.C) / step;
    auto add = [&](double w, double x, double y, double target) {
      const Eigen::Vector3d a(x - cur.xc, y - cur.yc, 1.0);
      Hm += w * a * a.transpose();
      gv += w * target * a;
    };
    for (int i : L.members[s]) {
      if (!field.valid[i]) continue;
      const double x = i % W, y = i / W;
      const double r = (field.omega[i] - cur.at(x, y)) / step;
      const double w = std::abs(r) <= tau ? 1.0 : tau / std::abs(r);
      add(0.5 * w, x, y, field.omega[i] / step);
    }
    for (int id : L.pairs_of[s]) {
      const auto& pp = L.pairs[id];
      const int a = g.label[pp.p], b = g.label[pp.q];
      const int t = a == s ? b : a;
      const BoundaryType type = g.type(a, b);
      const double px = pp.p % W, py = pp.p / W, qx = pp.q % W, qy = pp.q / W;
      if (type == BoundaryType::coplanar) {
        add(o.coplanar_weight, px, py, planes[t].at(px, py) / step);
        add(o.coplanar_weight, qx, qy, planes[t].at(qx, qy) / step);
      } else if (type == BoundaryType::hinge) {
        const double mx = 0.5 * (px + qx), my = 0.5 * (py + qy);
        add(o.coplanar_weight, mx, my, planes[t].at(mx, my) / step);
      }
    }
    const Eigen::Vector3d th = Hm.ldlt().solve(gv);
    if (!th.allFinite()) break;
    cur.A = th(0) * step;
    cur.B = th(1) * step;
    cur.C = th(2) * step;
  }
  return cur;
}

std::vector<std::vector<int>> color_classes(const SuperpixelGraph& g) {
  std::vector<std::vector<int>> adj(g.count);
  for (const auto& [k, t] : g.boundaries) {
    adj[k.first].push_back(k.second);
    adj[k.second].push_back(k.first);
  }
  std::vector<int> color(g.count, -1);
  std::vector<std::vector<int>> classes;
  for (int s = 0; s < g.count; ++s) {
    std::vector<char> used(adj[s].size() + 1, 0);
    for (int t : adj[s])
      if (color[t] >= 0 && color[t] < static_cast<int>(used.size())) used[color[t]] = 1;
    int c = 0;
    while (used[c]) ++c;
    color[s] = c;
    if (c >= static_cast<int>(classes.size())) classes.resize(c + 1);
    classes[c].push_back(s);
  }
  return classes;
}

}  // namespace

double slanted_plane_energy(const VzRatioField& field, const SuperpixelGraph& g, const std::vector<PlaneParams>& planes,
                            const SlantedPlaneOptions& o) {
  const int W = g.label.width, H = g.label.height;
  double e = 0.0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const int a = g.label(x, y);
      if (a < 0) continue;
      if (field.valid(x, y)) e += huber((field.omega(x, y) - planes[a].at(x, y)) / o.label_step, o.huber_scale);
      const int nb[2][2] = {{x + 1, y}, {x, y + 1}};
      for (const auto& n : nb) {
        if (!g.label.inside(n[0], n[1])) continue;
        const int b = g.label(n[0], n[1]);
        if (b < 0 || b == a) continue;
        e += pair_cost(g.type(a, b), planes[a], planes[b], x, y, n[0], n[1], o);
      }
    }
  return e;
}

SlantedPlaneResult slanted_plane(const VzRatioField& field, SuperpixelGraph graph, const SlantedPlaneOptions& o) {
  const int W = graph.label.width, H = graph.label.height;
  if (!field.omega.same_shape(W, H)) throw std::invalid_argument("slanted_plane: shape mismatch");
  if (!(o.label_step > 0) || !(o.huber_scale > 0)) throw std::invalid_argument("slanted_plane: bad scales");

  SlantedPlaneResult res;
  double global = 0.0;
  size_t nvalid = 0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      if (graph.label(x, y) >= 0 && field.valid(x, y)) {
        global += field.omega(x, y);
        ++nvalid;
      }
  global = nvalid ? global / nvalid : 0.0;

  std::vector<PlaneParams> planes(graph.count);
  {
    std::vector<double> sum(graph.count, 0.0);
    std::vector<int> n(graph.count, 0);
    for (int i = 0; i < W * H; ++i) {
      const int s = graph.label[i];
      if (s >= 0 && field.valid[i]) {
        sum[s] += field.omega[i];
        ++n[s];
      }
    }
    for (int s = 0; s < graph.count; ++s) {
      planes[s].xc = graph.cx[s];
      planes[s].yc = graph.cy[s];
      planes[s].C = n[s] ? sum[s] / n[s] : global;
    }
  }

  Layout layout = make_layout(graph);
  double energy = slanted_plane_energy(field, graph, planes, o);
  res.energy_trace.push_back(energy);

  for (int sweep = 0; sweep < o.max_sweeps; ++sweep) {
    // (1) plane fits, one color class at a time so that blocks updated together do not interact
    for (const auto& cls : color_classes(graph)) {
#pragma omp parallel for schedule(dynamic, 1)
      for (size_t k = 0; k < cls.size(); ++k) {
        const int s = cls[k];
        if (layout.members[s].empty()) continue;
        const double before = block_energy(s, field, graph, planes, layout, o);
        const PlaneParams old = planes[s];
        const PlaneParams fitted = fit_block(s, field, graph, planes, layout, o);
        planes[s] = fitted;
        if (block_energy(s, field, graph, planes, layout, o) > before) planes[s] = old;
      }
    }

    // (2) boundary types, exact per edge; ties prefer coplanar, then hinge
    for (auto& [key, type] : graph.boundaries) {
      const auto it = layout.pairs_of_edge.find(key);
      if (it == layout.pairs_of_edge.end()) continue;
      double cost[3] = {0, 0, 0};
      for (int id : it->second) {
        const auto& pp = layout.pairs[id];
        const int a = graph.label[pp.p], b = graph.label[pp.q];
        for (int t = 0; t < 3; ++t)
          cost[t] += pair_cost(static_cast<BoundaryType>(t), planes[a], planes[b], pp.p % W, pp.p / W, pp.q % W,
                               pp.q / W, o);
      }
      int best = static_cast<int>(type);
      for (int t = 0; t < 3; ++t)
        if (cost[t] < cost[best] || (cost[t] == cost[best] && t < best)) best = t;
      type = static_cast<BoundaryType>(best);
    }

    // (3) boundary-pixel reassignment with the exact local energy change
    if (o.reassign_pixels) {
      bool moved = false;
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const int s = graph.label(x, y);
          if (s < 0 || graph.size[s] <= 1) continue;
          const int nb[4][2] = {{x + 1, y}, {x - 1, y}, {x, y + 1}, {x, y - 1}};
          int cand[4], nc = 0;
          for (const auto& n : nb) {
            if (!graph.label.inside(n[0], n[1])) continue;
            const int t = graph.label(n[0], n[1]);
            if (t < 0 || t == s || std::find(cand, cand + nc, t) != cand + nc) continue;
            cand[nc++] = t;
          }
          if (nc == 0) continue;
          auto local = [&](int lab) {
            double e = 0.0;
            if (field.valid(x, y)) e += huber((field.omega(x, y) - planes[lab].at(x, y)) / o.label_step, o.huber_scale);
            for (const auto& n : nb) {
              if (!graph.label.inside(n[0], n[1])) continue;
              const int u = graph.label(n[0], n[1]);
              if (u < 0 || u == lab) continue;
              e += pair_cost(graph.type(lab, u), planes[lab], planes[u], x, y, n[0], n[1], o);
            }
            return e;
          };
          const double here = local(s);
          int best = -1;
          double best_gain = -1e-12;
          for (int k = 0; k < nc; ++k) {
            const double d = local(cand[k]) - here;
            if (d < best_gain) {
              best_gain = d;
              best = cand[k];
            }
          }
          if (best < 0) continue;
          graph.label(x, y) = best;
          --graph.size[s];
          ++graph.size[best];
          // Adjacencies created by the move start as occlusion, matching the energy just evaluated.
          for (const auto& n : nb) {
            if (!graph.label.inside(n[0], n[1])) continue;
            const int u = graph.label(n[0], n[1]);
            if (u >= 0 && u != best && !graph.boundaries.count({std::min(u, best), std::max(u, best)}))
              graph.set_type(u, best, BoundaryType::occlusion);
          }
          moved = true;
        }
      if (moved) {
        graph.rebuild();
        layout = make_layout(graph);
      }
    }

    const double next = slanted_plane_energy(field, graph, planes, o);
    res.energy_trace.push_back(next);
    const bool done = energy - next < o.tolerance;
    energy = next;
    if (done) break;
  }

  res.field = VzRatioField(W, H);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const int s = graph.label(x, y);
      if (s >= 0) res.field.set(x, y, std::min(planes[s].at(x, y), 1.0 - 1e-6));
    }
  res.planes = std::move(planes);
  res.graph = std::move(graph);
  return res;
}

}  // namespace oaflow
