#include <cmath>
#include <queue>
#include <random>
#include <set>

#include "doctest.h"
#include "oaflow/slanted_plane.hpp"
#include "support.hpp"

using namespace oaflow;

namespace {

// Left half label 0, right half label 1.
SuperpixelGraph two_halves(int W, int H, int split) {
  Raster<int> lab(W, H, 0);
  for (int y = 0; y < H; ++y)
    for (int x = split; x < W; ++x) lab(x, y) = 1;
  return make_superpixel_graph(lab);
}

template <typename F>
VzRatioField field_from(int W, int H, F&& f) {
  VzRatioField v(W, H);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) v.set(x, y, f(x, y));
  return v;
}

bool connected(const Raster<int>& lab, int id) {
  int start = -1, total = 0;
  for (size_t i = 0; i < lab.size(); ++i)
    if (lab[i] == id) {
      ++total;
      if (start < 0) start = static_cast<int>(i);
    }
  if (start < 0) return false;
  std::vector<char> seen(lab.size(), 0);
  std::queue<int> q;
  q.push(start);
  seen[start] = 1;
  int reached = 0;
  while (!q.empty()) {
    const int i = q.front();
    q.pop();
    ++reached;
    const int x = i % lab.width, y = i / lab.width;
    const int nb[4][2] = {{x + 1, y}, {x - 1, y}, {x, y + 1}, {x, y - 1}};
    for (const auto& n : nb) {
      if (!lab.inside(n[0], n[1])) continue;
      const int j = n[1] * lab.width + n[0];
      if (!seen[j] && lab[j] == id) {
        seen[j] = 1;
        q.push(j);
      }
    }
  }
  return reached == total;
}

}  // namespace

TEST_CASE("one superpixel fits its plane exactly") {
  const int W = 15, H = 11;
  const SuperpixelGraph g = make_superpixel_graph(Raster<int>(W, H, 0));
  const VzRatioField f = field_from(W, H, [](int x, int y) { return 0.05 + 0.001 * x - 0.0004 * y; });
  const SlantedPlaneResult r = slanted_plane(f, g);
  REQUIRE(r.planes.size() == 1);
  CHECK(r.planes[0].A == doctest::Approx(0.001).epsilon(1e-9));
  CHECK(r.planes[0].B == doctest::Approx(-0.0004).epsilon(1e-9));
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) CHECK(std::abs(r.field.omega(x, y) - f.omega(x, y)) < 1e-9);
  CHECK(r.energy_trace.back() < 1e-12);
}

TEST_CASE("hand-computed energy") {
  const SuperpixelGraph g = two_halves(2, 1, 1);
  VzRatioField f(2, 1);
  f.set(0, 0, 0.010);
  f.set(1, 0, 0.030);
  std::vector<PlaneParams> planes(2);
  planes[0].C = 0.012;  // residual 2 steps: 0.5 * 4
  planes[1].C = 0.040;  // residual 10 steps: huber 3 * (10 - 1.5)
  SlantedPlaneOptions o;
  SuperpixelGraph occ = g;
  CHECK(slanted_plane_energy(f, occ, planes, o) == doctest::Approx(2.0 + 25.5 + 2.0));
  occ.set_type(0, 1, BoundaryType::coplanar);
  CHECK(slanted_plane_energy(f, occ, planes, o) == doctest::Approx(27.5 + 2 * 28.0 * 28.0));
  occ.set_type(1, 0, BoundaryType::hinge);
  CHECK(occ.type(0, 1) == BoundaryType::hinge);
  CHECK(slanted_plane_energy(f, occ, planes, o) == doctest::Approx(27.5 + 0.5 + 28.0 * 28.0));
}

TEST_CASE("coplanar oracle") {
  const int W = 20, H = 10;
  const VzRatioField f = field_from(W, H, [](int x, int y) { return 0.08 + 0.0015 * x + 0.0007 * y; });
  const SlantedPlaneResult r = slanted_plane(f, two_halves(W, H, 9));
  CHECK(r.graph.type(0, 1) == BoundaryType::coplanar);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) CHECK(std::abs(r.field.omega(x, y) - f.omega(x, y)) < 1e-9);
}

TEST_CASE("occlusion oracle") {
  const int W = 20, H = 10;
  const VzRatioField f = field_from(W, H, [](int x, int) { return x < 10 ? 0.05 : 0.15; });
  const SlantedPlaneResult r = slanted_plane(f, two_halves(W, H, 10));
  CHECK(r.graph.type(0, 1) == BoundaryType::occlusion);
  CHECK(r.energy_trace.back() == doctest::Approx(H * SlantedPlaneOptions{}.occlusion_penalty));
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) CHECK(std::abs(r.field.omega(x, y) - f.omega(x, y)) < 1e-9);
}

TEST_CASE("hinge oracle") {
  const int W = 20, H = 8;
  const VzRatioField f = field_from(W, H, [](int x, int) { return 0.1 - 0.002 * std::abs(x - 9.5); });
  const SlantedPlaneResult r = slanted_plane(f, two_halves(W, H, 10));
  CHECK(r.graph.type(0, 1) == BoundaryType::hinge);
  CHECK(r.energy_trace.back() == doctest::Approx(H * SlantedPlaneOptions{}.hinge_penalty));
}

TEST_CASE("descent never raises the energy") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const int W = 40, H = 30;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.002);
    std::uniform_real_distribution<double> U(0, 1);
    const Image guide = test::random_texture(W, H, seed, 3);
    Mask region(W, H, 1);
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 10; ++x) region(x, y) = 0;
    const SuperpixelGraph g = compute_superpixels(guide, region, {12, 0.05, 5});
    VzRatioField f(W, H);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        if (U(rng) < 0.3) continue;
        double w = x < 20 ? 0.04 + 0.001 * y : 0.09 - 0.0005 * x;
        w += noise(rng);
        if (U(rng) < 0.05) w += 0.05;
        f.set(x, y, w);
      }
    const SlantedPlaneResult r = slanted_plane(f, g);
    REQUIRE(r.energy_trace.size() >= 2);
    for (size_t i = 1; i < r.energy_trace.size(); ++i) CHECK(r.energy_trace[i] <= r.energy_trace[i - 1] + 1e-9);
    CHECK(slanted_plane_energy(f, r.graph, r.planes) == doctest::Approx(r.energy_trace.back()).epsilon(1e-9));
    CHECK(r.energy_trace.back() < r.energy_trace.front());
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) CHECK(r.field.valid(x, y) == (r.graph.label(x, y) >= 0));
  }
}

TEST_CASE("superpixels partition the region into connected pieces") {
  const int W = 60, H = 45;
  const Image guide = test::random_texture(W, H, 9, 2);
  Mask region(W, H, 0);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) region(x, y) = (x - 30) * (x - 30) + (y - 22) * (y - 22) < 20 * 20;
  const SuperpixelGraph g = compute_superpixels(guide, region, {30, 0.05, 10});
  REQUIRE(g.count > 5);
  std::vector<int> size(g.count, 0);
  std::vector<double> sx(g.count, 0), sy(g.count, 0);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const int s = g.label(x, y);
      CHECK((s >= 0) == (region(x, y) != 0));
      if (s < 0) continue;
      REQUIRE(s < g.count);
      ++size[s];
      sx[s] += x;
      sy[s] += y;
    }
  for (int s = 0; s < g.count; ++s) {
    CHECK(size[s] == g.size[s]);
    CHECK(size[s] > 0);
    CHECK(g.cx[s] == doctest::Approx(sx[s] / size[s]));
    CHECK(g.cy[s] == doctest::Approx(sy[s] / size[s]));
    CHECK(connected(g.label, s));
  }
  std::set<std::pair<int, int>> adj;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const int a = g.label(x, y);
      if (a < 0) continue;
      if (x + 1 < W && g.label(x + 1, y) >= 0 && g.label(x + 1, y) != a)
        adj.insert({std::min(a, g.label(x + 1, y)), std::max(a, g.label(x + 1, y))});
      if (y + 1 < H && g.label(x, y + 1) >= 0 && g.label(x, y + 1) != a)
        adj.insert({std::min(a, g.label(x, y + 1)), std::max(a, g.label(x, y + 1))});
    }
  CHECK(adj.size() == g.boundaries.size());
  for (const auto& [key, t] : g.boundaries) CHECK(adj.count(key) == 1);
}

TEST_CASE("rebuild keeps known boundary types") {
  Raster<int> lab(6, 2, 0);
  for (int x = 2; x < 4; ++x) lab(x, 0) = lab(x, 1) = 1;
  for (int x = 4; x < 6; ++x) lab(x, 0) = lab(x, 1) = 2;
  SuperpixelGraph g = make_superpixel_graph(lab);
  CHECK(g.boundaries.size() == 2);
  CHECK(g.type(0, 1) == BoundaryType::occlusion);
  g.set_type(0, 1, BoundaryType::coplanar);
  g.label(2, 0) = 0;
  g.label(2, 1) = 0;
  g.label(3, 0) = 0;
  g.label(3, 1) = 0;
  g.rebuild();
  CHECK(g.size[1] == 0);
  CHECK(g.boundaries.size() == 1);
  CHECK(g.type(0, 2) == BoundaryType::occlusion);
}

TEST_CASE("slanted plane preconditions") {
  const SuperpixelGraph g = make_superpixel_graph(Raster<int>(4, 4, 0));
  CHECK_THROWS(slanted_plane(VzRatioField(5, 4), g));
  SlantedPlaneOptions bad;
  bad.label_step = 0;
  CHECK_THROWS(slanted_plane(VzRatioField(4, 4), g, bad));
}
