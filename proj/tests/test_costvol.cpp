#include <algorithm>
#include <random>
#include <set>

#include "doctest.h"
#include "oaflow/costvol.hpp"
#include "support.hpp"

using namespace oaflow;
using test::box_average;
using test::Dense;
using test::exhaustive_top_k;
using test::full_window;
using test::to_dense;

namespace {

TopKCostVolume constant_volume(int w, int h, std::vector<Candidate> cands) {
  TopKCostVolume cv(w, h, static_cast<int>(cands.size()), {-3, 4, -3, 4});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) cv.set(x, y, cands);
  return cv;
}

}  // namespace

TEST_CASE("top-K lists equal exhaustive scoring") {
  for (int K : {1, 3, 30}) {
    const FeatureMap f1 = test::random_features(8, 8, 4, 10 + K), f2 = test::random_features(8, 8, 4, 20 + K);
    const SearchWindow w{-2, 3, -2, 3};
    const TopKCostVolume cv = build_cost_volume(f1, f2, w, K);
    CHECK(cv.well_formed());
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        const auto want = exhaustive_top_k(f1, f2, w, K, x, y);
        const auto got = cv.at(x, y);
        REQUIRE(got.size() == want.size());
        for (size_t i = 0; i < want.size(); ++i) {
          CHECK(got[i].du == want[i].du);
          CHECK(got[i].dv == want[i].dv);
          CHECK(got[i].score == doctest::Approx(want[i].score).epsilon(1e-12));
        }
      }
  }
}

TEST_CASE("full-window top-K on 16x16") {
  const FeatureMap f1 = test::random_features(16, 16, 3, 1), f2 = test::random_features(16, 16, 3, 2);
  const SearchWindow w = full_window(16, 16);
  const TopKCostVolume cv = build_cost_volume(f1, f2, w, 30);
  for (int y = 0; y < 16; y += 5)
    for (int x = 0; x < 16; x += 3) {
      const auto want = exhaustive_top_k(f1, f2, w, 30, x, y);
      const auto got = cv.at(x, y);
      REQUIRE(got.size() == 30);
      for (size_t i = 0; i < 30; ++i) CHECK((got[i].du == want[i].du && got[i].dv == want[i].dv));
    }
}

TEST_CASE("zero-displacement window") {
  const FeatureMap f = test::random_features(5, 4, 3, 7);
  const TopKCostVolume cv = build_cost_volume(f, f, {0, 1, 0, 1}, 30);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 5; ++x) {
      REQUIRE(cv.at(x, y).size() == 1);
      double self = 0;
      for (int c = 0; c < 3; ++c) self += f.at(x, y)[c] * f.at(x, y)[c];
      CHECK(cv.at(x, y)[0].score == doctest::Approx(self));
    }
}

TEST_CASE("build rejects bad arguments") {
  const FeatureMap f = test::random_features(4, 4, 2, 1);
  CHECK_THROWS(build_cost_volume(f, f, {0, 1, 0, 1}, 0));
  CHECK_THROWS(build_cost_volume(f, f, {1, 1, 0, 1}, 3));
  const FeatureMap g = test::random_features(5, 4, 2, 1);
  CHECK_THROWS(build_cost_volume(f, g, {0, 1, 0, 1}, 3));
}

TEST_CASE("aggregation with zero iterations is the identity") {
  const FeatureMap f1 = test::random_features(6, 6, 3, 4), f2 = test::random_features(6, 6, 3, 5);
  const TopKCostVolume cv = build_cost_volume(f1, f2, {-2, 3, -2, 3}, 5);
  const TopKCostVolume a = aggregate(cv, 0);
  CHECK(a.counts == cv.counts);
  for (size_t i = 0; i < cv.slots.size(); ++i) CHECK(a.slots[i].score == cv.slots[i].score);
}

TEST_CASE("spatially constant volumes are fixed points") {
  const TopKCostVolume cv = constant_volume(9, 7, {{1, 0, 3.0}, {0, 0, 2.0}, {-1, 2, 0.5}});
  const TopKCostVolume a = aggregate(cv, 3);
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x < 9; ++x) {
      const auto c = a.at(x, y);
      REQUIRE(c.size() == 3);
      CHECK(c[0].score == doctest::Approx(3.0));
      CHECK(c[1].score == doctest::Approx(2.0));
      CHECK(c[2].score == doctest::Approx(0.5));
    }
}

TEST_CASE("dense aggregation equals brute-force neighborhood averaging") {
  const FeatureMap f1 = test::random_features(10, 10, 3, 8), f2 = test::random_features(10, 10, 3, 9);
  const SearchWindow w{-2, 3, -2, 3};
  const int L = static_cast<int>(w.size());
  const TopKCostVolume cv = build_cost_volume(f1, f2, w, L);
  const TopKCostVolume a = aggregate(cv, 2, 5);
  CHECK(a.well_formed());
  const Dense want = box_average(box_average(to_dense(cv), 10, 10, L, 5), 10, 10, L, 5);
  const Dense got = to_dense(a);
  double worst = 0;
  for (size_t i = 0; i < want.size(); ++i) worst = std::max(worst, std::abs(want[i] - got[i]));
  CHECK(worst < 1e-9);

  // Interior pixels: two 5x5 box passes induce a 9x9 triangular kernel.
  const Dense d0 = to_dense(cv);
  for (int y = 4; y <= 5; ++y)
    for (int x = 4; x <= 5; ++x)
      for (int l = 0; l < L; ++l) {
        double s = 0;
        for (int dy = -4; dy <= 4; ++dy)
          for (int dx = -4; dx <= 4; ++dx)
            s += (5 - std::abs(dx)) * (5 - std::abs(dy)) * d0[(static_cast<size_t>(y + dy) * 10 + x + dx) * L + l];
        CHECK(std::abs(s / 625.0 - got[(static_cast<size_t>(y) * 10 + x) * L + l]) < 1e-9);
      }
}

TEST_CASE("aggregation is linear on dense volumes") {
  const SearchWindow w{-1, 2, -1, 2};
  const int L = static_cast<int>(w.size());
  const FeatureMap a1 = test::random_features(7, 6, 2, 1), a2 = test::random_features(7, 6, 2, 2);
  const TopKCostVolume X = build_cost_volume(a1, a2, w, L), Y = build_cost_volume(a2, a1, w, L);
  TopKCostVolume Z = X;
  const Dense dx = to_dense(X), dy = to_dense(Y);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 7; ++x) {
      std::vector<Candidate> c;
      for (int dv = -1; dv < 2; ++dv)
        for (int du = -1; du < 2; ++du) {
          const size_t i = (static_cast<size_t>(y) * 7 + x) * L + w.scan_index(du, dv);
          c.push_back({du, dv, 2.0 * dx[i] - 0.5 * dy[i]});
        }
      std::stable_sort(c.begin(), c.end(), [](const Candidate& p, const Candidate& q) { return p.score > q.score; });
      Z.set(x, y, c);
    }
  const Dense ax = to_dense(aggregate(X, 2, 3)), ay = to_dense(aggregate(Y, 2, 3)), az = to_dense(aggregate(Z, 2, 3));
  for (size_t i = 0; i < az.size(); ++i) CHECK(std::abs(az[i] - (2.0 * ax[i] - 0.5 * ay[i])) < 1e-9);
}

TEST_CASE("parallel kernels equal the serial references bit for bit") {
  const FeatureMap f1 = test::random_features(14, 11, 5, 31), f2 = test::random_features(14, 11, 5, 32);
  const SearchWindow w{-4, 5, -3, 4};
  const TopKCostVolume par = build_cost_volume(f1, f2, w, 7), ref = reference::build_cost_volume(f1, f2, w, 7);
  CHECK(par.counts == ref.counts);
  bool same = true;
  for (size_t i = 0; i < par.slots.size(); ++i)
    same &= par.slots[i].du == ref.slots[i].du && par.slots[i].dv == ref.slots[i].dv &&
            par.slots[i].score == ref.slots[i].score;
  CHECK(same);
  const TopKCostVolume ap = aggregate(par, 3, 5), ar = reference::aggregate(ref, 3, 5);
  CHECK(ap.counts == ar.counts);
  same = true;
  for (size_t i = 0; i < ap.slots.size(); ++i)
    same &= ap.slots[i].du == ar.slots[i].du && ap.slots[i].dv == ar.slots[i].dv && ap.slots[i].score == ar.slots[i].score;
  CHECK(same);
}

TEST_CASE("candidate lists stay sorted and bounded") {
  const FeatureMap f1 = test::random_features(12, 9, 4, 41), f2 = test::random_features(12, 9, 4, 42);
  TopKCostVolume cv = build_cost_volume(f1, f2, {-3, 4, -3, 4}, 6);
  CHECK(cv.well_formed());
  for (int it = 1; it <= 4; ++it) CHECK(aggregate(cv, it).well_formed());
}

TEST_CASE("confidence selection") {
  const FeatureMap f1 = test::random_features(10, 8, 4, 51), f2 = test::random_features(10, 8, 4, 52);
  const TopKCostVolume cv = aggregate(build_cost_volume(f1, f2, {-2, 3, -2, 3}, 5), 1);

  const SparseMatches all = confident_matches(cv, 1.0);
  CHECK(all.size() == 80);
  for (const auto& m : all) {
    const auto c = cv.at(static_cast<int>(m.p.x()), static_cast<int>(m.p.y()));
    CHECK(m.p2.x() - m.p.x() == c[0].du);
    CHECK(m.p2.y() - m.p.y() == c[0].dv);
  }

  std::set<std::pair<int, int>> prev;
  for (double frac : {0.1, 0.3, 0.6, 0.9}) {
    std::set<std::pair<int, int>> cur;
    for (const auto& m : confident_matches(cv, frac)) cur.insert({static_cast<int>(m.p.x()), static_cast<int>(m.p.y())});
    for (const auto& p : prev) CHECK(cur.count(p) == 1);
    CHECK(static_cast<double>(cur.size()) >= frac * 80 - 1);
    prev = std::move(cur);
  }
  CHECK_THROWS(confident_matches(cv, 0.0));
  CHECK_THROWS(confident_matches(cv, 1.5));
  CHECK_THROWS(confident_matches(TopKCostVolume{}, 0.5));
}

TEST_CASE("two-population confidence oracle") {
  TopKCostVolume cv(8, 4, 2, {-1, 2, -1, 2});
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 8; ++x) {
      const bool strong = (x + y) % 2 == 0;
      const std::vector<Candidate> c{{1, 0, strong ? 10.0 + x : 1.0 + 0.1 * x}, {0, 0, 0.0}};
      cv.set(x, y, c);
    }
  const SparseMatches m = confident_matches(cv, 0.5);
  CHECK(m.size() == 16);
  for (const auto& s : m) CHECK((static_cast<int>(s.p.x()) + static_cast<int>(s.p.y())) % 2 == 0);
}

TEST_CASE("entropy selector prefers peaked score lists") {
  TopKCostVolume cv(2, 1, 3, {-1, 2, -1, 2});
  const std::vector<Candidate> peaked{{0, 0, 9.0}, {1, 0, 0.0}, {-1, 0, 0.0}};
  const std::vector<Candidate> flat{{0, 0, 9.0}, {1, 0, 8.9}, {-1, 0, 8.8}};
  cv.set(0, 0, peaked);
  cv.set(1, 0, flat);
  const SparseMatches m = confident_matches(cv, 0.5, ConfidenceSelector::entropy);
  REQUIRE(m.size() == 1);
  CHECK(m[0].p.x() == 0.0);
}

TEST_CASE("cost volume dump roundtrip") {
  const FeatureMap f1 = test::random_features(6, 5, 3, 61), f2 = test::random_features(6, 5, 3, 62);
  const TopKCostVolume cv = build_cost_volume(f1, f2, {-2, 3, -1, 2}, 4);
  const std::string path = test::temp_path("cv.bin");
  write_cost_volume(cv, path);
  const TopKCostVolume back = read_cost_volume(path);
  CHECK(back.K == 4);
  CHECK(back.window.u_min == -2);
  CHECK(back.counts == cv.counts);
  for (size_t i = 0; i < cv.slots.size(); ++i) CHECK(back.slots[i].score == cv.slots[i].score);
}
