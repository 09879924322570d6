#include "oaflow/costvol.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace oaflow {

void SearchWindow::validate() const {
  if (u_max <= u_min || v_max <= v_min) throw std::invalid_argument("SearchWindow: empty window");
}

void TopKCostVolume::set(int x, int y, std::span<const Candidate> c) {
  if (static_cast<int>(c.size()) > K) throw std::invalid_argument("TopKCostVolume::set: more than K candidates");
  const size_t i = static_cast<size_t>(y) * width + x;
  std::copy(c.begin(), c.end(), slots.begin() + i * K);
  counts[i] = static_cast<int>(c.size());
}

bool TopKCostVolume::well_formed() const {
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      auto c = at(x, y);
      if (static_cast<int>(c.size()) > K) return false;
      for (size_t i = 0; i < c.size(); ++i) {
        if (!window.contains(c[i].du, c[i].dv)) return false;
        if (i > 0) {
          const bool ordered = c[i - 1].score > c[i].score ||
                               (c[i - 1].score == c[i].score &&
                                window.scan_index(c[i - 1].du, c[i - 1].dv) < window.scan_index(c[i].du, c[i].dv));
          if (!ordered) return false;
        }
        for (size_t j = 0; j < i; ++j)
          if (c[j].du == c[i].du && c[j].dv == c[i].dv) return false;
      }
    }
  return true;
}

TopKCostVolume build_cost_volume(const FeatureMap& f1, const FeatureMap& f2, const SearchWindow& window, int K) {
  if (K <= 0) throw std::invalid_argument("build_cost_volume: K must be positive");
  window.validate();
  if (f1.width != f2.width || f1.height != f2.height || f1.dim != f2.dim)
    throw std::invalid_argument("build_cost_volume: feature maps differ in shape");
  TopKCostVolume cv(f1.width, f1.height, K, window);
  const int W = f1.width, H = f1.height;
  const size_t D = static_cast<size_t>(f1.dim);

#pragma omp parallel for schedule(dynamic, 1)
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      Candidate* top = cv.slots.data() + (static_cast<size_t>(y) * W + x) * K;
      int n = 0;
      const std::span<const double> f(f1.at(x, y), D);
      const int v0 = std::max(window.v_min, -y), v1 = std::min(window.v_max, H - y);
      const int u0 = std::max(window.u_min, -x), u1 = std::min(window.u_max, W - x);
      // Candidates arrive in scanline order, so a later candidate never displaces an equal score.
      for (int dv = v0; dv < v1; ++dv) {
        for (int du = u0; du < u1; ++du) {
          const double s = match_score(f, std::span<const double>(f2.at(x + du, y + dv), D));
          if (n == K && !(s > top[K - 1].score)) continue;
          int pos = n < K ? n : K - 1;
          while (pos > 0 && top[pos - 1].score < s) {
            if (pos < K) top[pos] = top[pos - 1];
            --pos;
          }
          top[pos] = Candidate{du, dv, s};
          if (n < K) ++n;
        }
      }
      cv.counts[static_cast<size_t>(y) * W + x] = n;
    }
  }
  return cv;
}

namespace {

struct Keyed {
  int key;
  double score;
};

void aggregate_pixel(const TopKCostVolume& src, int x, int y, int r, std::vector<Keyed>& buf, TopKCostVolume& dst) {
  buf.clear();
  int neighbors = 0;
  for (int yy = y - r; yy <= y + r; ++yy) {
    if (yy < 0 || yy >= src.height) continue;
    for (int xx = x - r; xx <= x + r; ++xx) {
      if (xx < 0 || xx >= src.width) continue;
      ++neighbors;
      for (const auto& c : src.at(xx, yy)) buf.push_back({src.window.scan_index(c.du, c.dv), c.score});
    }
  }
  // Stable sort keeps the neighbor visiting order within a label, fixing the summation order.
  std::stable_sort(buf.begin(), buf.end(), [](const Keyed& a, const Keyed& b) { return a.key < b.key; });
  size_t out = 0;
  for (size_t i = 0; i < buf.size();) {
    size_t j = i;
    double sum = 0.0;
    while (j < buf.size() && buf[j].key == buf[i].key) sum += buf[j++].score;
    buf[out++] = {buf[i].key, sum / neighbors};
    i = j;
  }
  buf.resize(out);
  const size_t keep = std::min<size_t>(out, static_cast<size_t>(dst.K));
  std::partial_sort(buf.begin(), buf.begin() + keep, buf.end(), [](const Keyed& a, const Keyed& b) {
    return a.score > b.score || (a.score == b.score && a.key < b.key);
  });
  Candidate* slot = dst.slots.data() + (static_cast<size_t>(y) * dst.width + x) * dst.K;
  const int ww = src.window.width();
  for (size_t i = 0; i < keep; ++i)
    slot[i] = Candidate{buf[i].key % ww + src.window.u_min, buf[i].key / ww + src.window.v_min, buf[i].score};
  dst.counts[static_cast<size_t>(y) * dst.width + x] = static_cast<int>(keep);
}

}  // namespace

TopKCostVolume aggregate(const TopKCostVolume& cv, int iterations, int window) {
  if (iterations < 0) throw std::invalid_argument("aggregate: negative iteration count");
  if (window <= 0 || window % 2 == 0) throw std::invalid_argument("aggregate: window must be odd");
  const int r = window / 2;
  TopKCostVolume cur = cv;
  TopKCostVolume next(cv.width, cv.height, cv.K, cv.window);
  for (int it = 0; it < iterations; ++it) {
#pragma omp parallel
    {
      std::vector<Keyed> buf;
#pragma omp for schedule(dynamic, 1)
      for (int y = 0; y < cur.height; ++y)
        for (int x = 0; x < cur.width; ++x) aggregate_pixel(cur, x, y, r, buf, next);
    }
    std::swap(cur, next);
  }
  return cur;
}

SparseMatches confident_matches(const TopKCostVolume& cv, double target_fraction, ConfidenceSelector selector) {
  if (!(target_fraction > 0.0 && target_fraction <= 1.0))
    throw std::invalid_argument("confident_matches: fraction must be in (0, 1]");
  std::vector<double> confidence(static_cast<size_t>(cv.width) * cv.height, -INFINITY);
  std::vector<double> ranked;
  for (int y = 0; y < cv.height; ++y)
    for (int x = 0; x < cv.width; ++x) {
      auto c = cv.at(x, y);
      if (c.empty()) continue;
      double conf = c[0].score;
      if (selector == ConfidenceSelector::entropy) {
        double z = 0.0, ez = 0.0;
        for (const auto& e : c) {
          const double w = std::exp(e.score - c[0].score);
          z += w;
          ez += w * (e.score - c[0].score);
        }
        conf = -(std::log(z) - ez / z);  // negative entropy
      }
      confidence[static_cast<size_t>(y) * cv.width + x] = conf;
      ranked.push_back(conf);
    }
  if (ranked.empty()) throw std::invalid_argument("confident_matches: empty cost volume");
  std::sort(ranked.begin(), ranked.end(), std::greater<>());
  const size_t keep = std::clamp<size_t>(static_cast<size_t>(std::llround(target_fraction * ranked.size())), 1,
                                         ranked.size());
  const double threshold = ranked[keep - 1];
  SparseMatches out;
  for (int y = 0; y < cv.height; ++y)
    for (int x = 0; x < cv.width; ++x) {
      const double conf = confidence[static_cast<size_t>(y) * cv.width + x];
      if (!(conf >= threshold)) continue;
      const auto& best = cv.at(x, y)[0];
      out.push_back({Eigen::Vector2d(x, y), Eigen::Vector2d(x + best.du, y + best.dv), best.score});
    }
  return out;
}

void write_cost_volume(const TopKCostVolume& cv, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write cost volume '" + path + "'");
  auto put32 = [&](std::int32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
  os.write("OACV", 4);
  for (int v : {cv.width, cv.height, cv.K, cv.window.u_min, cv.window.u_max, cv.window.v_min, cv.window.v_max}) put32(v);
  for (size_t i = 0; i < cv.counts.size(); ++i) {
    put32(cv.counts[i]);
    for (int k = 0; k < cv.K; ++k) {
      Candidate c = k < cv.counts[i] ? cv.slots[i * cv.K + k] : Candidate{};
      put32(c.du);
      put32(c.dv);
      os.write(reinterpret_cast<const char*>(&c.score), 8);
    }
  }
}

TopKCostVolume read_cost_volume(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read cost volume '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "OACV") throw std::runtime_error("cost volume: bad magic");
  auto get32 = [&]() {
    std::int32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (!is) throw std::runtime_error("cost volume: truncated file");
    return v;
  };
  const int w = get32(), h = get32(), k = get32();
  SearchWindow win{get32(), get32(), get32(), get32()};
  if (w < 0 || h < 0 || k <= 0) throw std::runtime_error("cost volume: bad header");
  TopKCostVolume cv(w, h, k, win);
  for (size_t i = 0; i < cv.counts.size(); ++i) {
    cv.counts[i] = get32();
    if (cv.counts[i] < 0 || cv.counts[i] > k) throw std::runtime_error("cost volume: bad candidate count");
    for (int j = 0; j < k; ++j) {
      Candidate c;
      c.du = get32();
      c.dv = get32();
      is.read(reinterpret_cast<char*>(&c.score), 8);
      cv.slots[i * k + j] = c;
    }
  }
  if (!is) throw std::runtime_error("cost volume: truncated file");
  return cv;
}

}  // namespace oaflow
