#include <algorithm>
#include <map>
#include <stdexcept>

#include "oaflow/costvol.hpp"

namespace oaflow::reference {

namespace {
bool ranks_before(const SearchWindow& w, const Candidate& a, const Candidate& b) {
  return a.score > b.score || (a.score == b.score && w.scan_index(a.du, a.dv) < w.scan_index(b.du, b.dv));
}
}  // namespace

TopKCostVolume build_cost_volume(const FeatureMap& f1, const FeatureMap& f2, const SearchWindow& window, int K) {
  if (K <= 0) throw std::invalid_argument("build_cost_volume: K must be positive");
  window.validate();
  TopKCostVolume cv(f1.width, f1.height, K, window);
  std::vector<Candidate> all;
  for (int y = 0; y < f1.height; ++y)
    for (int x = 0; x < f1.width; ++x) {
      all.clear();
      for (int dv = window.v_min; dv < window.v_max; ++dv)
        for (int du = window.u_min; du < window.u_max; ++du) {
          if (x + du < 0 || y + dv < 0 || x + du >= f2.width || y + dv >= f2.height) continue;
          all.push_back({du, dv,
                         match_score(std::span<const double>(f1.at(x, y), f1.dim),
                                     std::span<const double>(f2.at(x + du, y + dv), f2.dim))});
        }
      std::sort(all.begin(), all.end(), [&](const Candidate& a, const Candidate& b) { return ranks_before(window, a, b); });
      if (static_cast<int>(all.size()) > K) all.resize(K);
      cv.set(x, y, all);
    }
  return cv;
}

TopKCostVolume aggregate(const TopKCostVolume& cv, int iterations, int window) {
  const int r = window / 2;
  TopKCostVolume cur = cv;
  for (int it = 0; it < iterations; ++it) {
    TopKCostVolume next(cv.width, cv.height, cv.K, cv.window);
    for (int y = 0; y < cv.height; ++y)
      for (int x = 0; x < cv.width; ++x) {
        std::map<int, double> sums;
        int count = 0;
        for (int yy = y - r; yy <= y + r; ++yy)
          for (int xx = x - r; xx <= x + r; ++xx) {
            if (xx < 0 || yy < 0 || xx >= cv.width || yy >= cv.height) continue;
            ++count;
            for (const auto& c : cur.at(xx, yy)) sums[cv.window.scan_index(c.du, c.dv)] += c.score;
          }
        std::vector<Candidate> all;
        const int ww = cv.window.width();
        for (const auto& [key, s] : sums) all.push_back({key % ww + cv.window.u_min, key / ww + cv.window.v_min, s / count});
        std::sort(all.begin(), all.end(), [&](const Candidate& a, const Candidate& b) { return ranks_before(cv.window, a, b); });
        if (static_cast<int>(all.size()) > cv.K) all.resize(cv.K);
        next.set(x, y, all);
      }
    cur = std::move(next);
  }
  return cur;
}

}  // namespace oaflow::reference
