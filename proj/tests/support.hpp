#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "oaflow/costvol.hpp"
#include "oaflow/epigeo.hpp"
#include "oaflow/image.hpp"
#include "oaflow/matchnet.hpp"
#include "oaflow/sgm.hpp"
#include "oaflow/tensor.hpp"

namespace oaflow::test {

// Box-blurred uniform noise rescaled to [0,1]; enough structure for a small matcher.
inline Image random_texture(int w, int h, std::uint64_t seed, int blur = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<double> noise(static_cast<size_t>(w) * h);
  for (auto& v : noise) v = U(rng);
  Image img(w, h);
  double lo = 1e9, hi = -1e9;
  std::vector<double> acc(noise.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      int n = 0;
      for (int dy = -blur; dy <= blur; ++dy)
        for (int dx = -blur; dx <= blur; ++dx) {
          const int xx = std::clamp(x + dx, 0, w - 1), yy = std::clamp(y + dy, 0, h - 1);
          s += noise[static_cast<size_t>(yy) * w + xx];
          ++n;
        }
      acc[static_cast<size_t>(y) * w + x] = s / n;
      lo = std::min(lo, s / n);
      hi = std::max(hi, s / n);
    }
  for (size_t i = 0; i < acc.size(); ++i) img[i] = static_cast<float>((acc[i] - lo) / (hi - lo));
  return img;
}

// img2(x + du, y + dv) = img1(x, y); pixels revealed at the border are fresh noise.
inline Image shift_image(const Image& img, int du, int dv, std::uint64_t seed) {
  Image fresh = random_texture(img.width, img.height, seed);
  Image out(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const int sx = x - du, sy = y - dv;
      out(x, y) = img.inside(sx, sy) ? img(sx, sy) : fresh(x, y);
    }
  return out;
}

// Training examples from textured pairs related by random integer translations.
inline std::vector<TrainingExample> shifted_patch_examples(int count, int R, int patch_size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<TrainingExample> out;
  const int W = 96, H = 96;
  int pair = 0;
  while (static_cast<int>(out.size()) < count) {
    const std::uint64_t s = seed * 7919 + pair++;
    const Image a = random_texture(W, H, s);
    std::uniform_int_distribution<int> shift(-6, 6);
    const int du = shift(rng), dv = shift(rng);
    const Image b = shift_image(a, du, dv, s + 1000003);
    FlowField gt(W, H);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) gt.set(x, y, static_cast<float>(du), static_cast<float>(dv));
    std::uniform_int_distribution<int> px(0, W - 1), py(0, H - 1);
    for (int k = 0; k < 50 && static_cast<int>(out.size()) < count;) {
      const int x = px(rng), y = py(rng);
      const SearchAxis axis = (out.size() % 2 == 0) ? SearchAxis::horizontal : SearchAxis::vertical;
      auto ex = sample_training_pair(a, b, gt, x, y, axis, R, patch_size);
      if (!ex) continue;
      out.push_back(std::move(*ex));
      ++k;
    }
  }
  return out;
}

// Random rigid two-view setup with points in front of both cameras.
struct TwoView {
  Eigen::Matrix3d K, R;
  Eigen::Vector3d t;
  SparseMatches matches;
  Eigen::Matrix3d F_true;
};

inline Eigen::Matrix3d skew_of(const Eigen::Vector3d& v) {
  Eigen::Matrix3d S;
  S << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return S;
}

inline TwoView random_two_view(std::uint64_t seed, int points, double max_angle = 0.1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  TwoView tv;
  tv.K << 500, 0, 320, 0, 500, 240, 0, 0, 1;
  const Eigen::Vector3d axis = Eigen::Vector3d(U(rng), U(rng), U(rng)).normalized();
  tv.R = Eigen::AngleAxisd(max_angle * U(rng), axis).toRotationMatrix();
  tv.t = Eigen::Vector3d(U(rng), 0.3 * U(rng), U(rng));
  if (tv.t.norm() < 0.2) tv.t.x() += 0.5;
  tv.F_true = tv.K.inverse().transpose() * skew_of(tv.t) * tv.R * tv.K.inverse();
  while (static_cast<int>(tv.matches.size()) < points) {
    const Eigen::Vector3d X(4 * U(rng), 3 * U(rng), 8 + 4 * U(rng));
    const Eigen::Vector3d X2 = tv.R * X + tv.t;
    if (X2.z() < 1.0) continue;
    const Eigen::Vector3d a = tv.K * X, b = tv.K * X2;
    tv.matches.push_back({a.head<2>() / a.z(), b.head<2>() / b.z(), 1.0});
  }
  return tv;
}

// Relative error of an analytic derivative against a finite difference. Pairs that are both below
// the difference quotient's rounding floor count as exact zeros (e.g. a bias followed by batch norm).
inline double rel_error(double analytic, double numeric) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  return scale < 1e-8 ? 0.0 : std::abs(analytic - numeric) / scale;
}

// Distance of p2 to the epipolar line of p.
inline double line_distance(const Eigen::Matrix3d& F, const Eigen::Vector2d& p, const Eigen::Vector2d& p2) {
  const Eigen::Vector3d l = F * p.homogeneous();
  return std::abs(l.dot(p2.homogeneous())) / std::hypot(l.x(), l.y());
}

// Viterbi over a chain with the SGM pairwise term.
inline double chain_optimum(const std::vector<std::vector<double>>& costs, const SgmPenalties& pen) {
  const size_t L = costs[0].size();
  std::vector<double> cur = costs[0];
  for (size_t i = 1; i < costs.size(); ++i) {
    std::vector<double> next(L, std::numeric_limits<double>::infinity());
    for (size_t d = 0; d < L; ++d)
      for (size_t e = 0; e < L; ++e) {
        const size_t jump = d > e ? d - e : e - d;
        const double s = jump == 0 ? 0.0 : (jump == 1 ? pen.small : pen.large);
        next[d] = std::min(next[d], cur[e] + s);
      }
    for (size_t d = 0; d < L; ++d) next[d] += costs[i][d];
    cur = std::move(next);
  }
  return *std::min_element(cur.begin(), cur.end());
}

// Exhaustive enumeration of every labeling; only for tiny chains.
inline double chain_brute_force(const std::vector<std::vector<double>>& costs, const SgmPenalties& pen) {
  const int n = static_cast<int>(costs.size()), L = static_cast<int>(costs[0].size());
  std::vector<int> lab(n, 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    best = std::min(best, chain_energy(costs, lab, pen));
    int i = 0;
    while (i < n && ++lab[i] == L) lab[i++] = 0;
    if (i == n) break;
  }
  return best;
}

inline FeatureMap random_features(int w, int h, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, 1.0);
  FeatureMap f{w, h, dim, std::vector<double>(static_cast<size_t>(w) * h * dim)};
  for (auto& v : f.values) v = N(rng);
  return f;
}

// Every in-window displacement whose target lies in f2, scored and sorted; the first K survive.
inline std::vector<Candidate> exhaustive_top_k(const FeatureMap& f1, const FeatureMap& f2, const SearchWindow& w,
                                               int K, int x, int y) {
  std::vector<std::pair<int, Candidate>> all;
  for (int dv = w.v_min; dv < w.v_max; ++dv)
    for (int du = w.u_min; du < w.u_max; ++du) {
      const int tx = x + du, ty = y + dv;
      if (tx < 0 || ty < 0 || tx >= f2.width || ty >= f2.height) continue;
      double s = 0;
      for (int c = 0; c < f1.dim; ++c) s += f1.at(x, y)[c] * f2.at(tx, ty)[c];
      all.push_back({w.scan_index(du, dv), {du, dv, s}});
    }
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (a.second.score != b.second.score) return a.second.score > b.second.score;
    return a.first < b.first;
  });
  std::vector<Candidate> out;
  for (int i = 0; i < std::min<int>(K, static_cast<int>(all.size())); ++i) out.push_back(all[i].second);
  return out;
}

// Dense [y][x][label] scores, 0 where a label is absent.
using Dense = std::vector<double>;

inline Dense to_dense(const TopKCostVolume& cv) {
  Dense d(static_cast<size_t>(cv.width) * cv.height * cv.window.size(), 0.0);
  for (int y = 0; y < cv.height; ++y)
    for (int x = 0; x < cv.width; ++x)
      for (const auto& c : cv.at(x, y))
        d[(static_cast<size_t>(y) * cv.width + x) * cv.window.size() + cv.window.scan_index(c.du, c.dv)] = c.score;
  return d;
}

inline Dense box_average(const Dense& in, int W, int H, size_t L, int win) {
  Dense out(in.size(), 0.0);
  const int r = win / 2;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      int n = 0;
      for (int yy = y - r; yy <= y + r; ++yy)
        for (int xx = x - r; xx <= x + r; ++xx) {
          if (xx < 0 || yy < 0 || xx >= W || yy >= H) continue;
          ++n;
          for (size_t l = 0; l < L; ++l)
            out[(static_cast<size_t>(y) * W + x) * L + l] += in[(static_cast<size_t>(yy) * W + xx) * L + l];
        }
      for (size_t l = 0; l < L; ++l) out[(static_cast<size_t>(y) * W + x) * L + l] /= n;
    }
  return out;
}

inline SearchWindow full_window(int w, int h) { return {-(w - 1), w, -(h - 1), h}; }

inline Tensor random_tensor(int n, int c, int h, int w, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, scale);
  Tensor t(n, c, h, w);
  for (auto& v : t.data) v = N(rng);
  return t;
}

inline double dot(const Tensor& a, const Tensor& b) {
  return std::inner_product(a.data.begin(), a.data.end(), b.data.begin(), 0.0);
}

inline ConvWeights random_conv(int cin, int cout, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, 0.5);
  ConvWeights c{cin, cout, std::vector<double>(static_cast<size_t>(cout) * cin * 9), std::vector<double>(cout)};
  for (auto& v : c.weight) v = N(rng);
  for (auto& v : c.bias) v = N(rng);
  return c;
}

inline std::string temp_path(const std::string& name) {
  return (std::string(std::getenv("TMPDIR") ? std::getenv("TMPDIR") : "/tmp")) + "/oaflow_test_" + name;
}

}  // namespace oaflow::test
