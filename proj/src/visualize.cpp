#include "oaflow/visualize.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace oaflow {

namespace {

// Standard 55-entry wheel: red-yellow-green-cyan-blue-magenta.
std::vector<std::array<double, 3>> make_wheel() {
  const int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
  std::vector<std::array<double, 3>> w;
  for (int i = 0; i < RY; ++i) w.push_back({255, 255.0 * i / RY, 0});
  for (int i = 0; i < YG; ++i) w.push_back({255 - 255.0 * i / YG, 255, 0});
  for (int i = 0; i < GC; ++i) w.push_back({0, 255, 255.0 * i / GC});
  for (int i = 0; i < CB; ++i) w.push_back({0, 255 - 255.0 * i / CB, 255});
  for (int i = 0; i < BM; ++i) w.push_back({255.0 * i / BM, 0, 255});
  for (int i = 0; i < MR; ++i) w.push_back({255, 0, 255 - 255.0 * i / MR});
  return w;
}

}  // namespace

PngData flow_to_color(const FlowField& flow, double max_magnitude) {
  static const auto wheel = make_wheel();
  const int W = flow.width(), H = flow.height();
  if (max_magnitude <= 0) {
    for (size_t i = 0; i < flow.u.size(); ++i)
      if (flow.valid[i]) max_magnitude = std::max(max_magnitude, std::hypot(double(flow.u[i]), double(flow.v[i])));
    if (max_magnitude <= 0) max_magnitude = 1.0;
  }
  PngData png{W, H, 3, 8, std::vector<std::uint16_t>(static_cast<size_t>(W) * H * 3, 0)};
  const int n = static_cast<int>(wheel.size());
  for (size_t i = 0; i < flow.u.size(); ++i) {
    if (!flow.valid[i]) continue;
    const double u = flow.u[i] / max_magnitude, v = flow.v[i] / max_magnitude;
    const double rad = std::min(1.0, std::hypot(u, v));
    const double a = std::atan2(-v, -u) / M_PI;
    const double fk = (a + 1.0) / 2.0 * (n - 1);
    const int k0 = static_cast<int>(fk), k1 = (k0 + 1) % n;
    const double f = fk - k0;
    for (int c = 0; c < 3; ++c) {
      const double col = ((1 - f) * wheel[k0][c] + f * wheel[k1][c]) / 255.0;
      png.samples[i * 3 + c] = static_cast<std::uint16_t>(std::lround(255.0 * (1 - rad * (1 - col))));
    }
  }
  return png;
}

PngData error_map(const FlowField& est, const FlowField& gt) {
  const int W = gt.width(), H = gt.height();
  if (est.width() != W || est.height() != H) throw std::invalid_argument("error_map: shape mismatch");
  // Bands of the endpoint error relative to the 3 px threshold.
  static const double bounds[] = {0.1875, 0.375, 0.75, 1.5, 3, 6, 12, 24, 48, 1e300};
  static const std::uint16_t colors[][3] = {{49, 54, 149},   {69, 117, 180}, {116, 173, 209}, {171, 217, 233},
                                            {224, 243, 248}, {254, 224, 144}, {253, 174, 97}, {244, 109, 67},
                                            {215, 48, 39},   {165, 0, 38}};
  PngData png{W, H, 3, 8, std::vector<std::uint16_t>(static_cast<size_t>(W) * H * 3, 0)};
  for (size_t i = 0; i < gt.u.size(); ++i) {
    if (!gt.valid[i]) continue;
    const double e = est.valid[i] ? std::hypot(est.u[i] - gt.u[i], est.v[i] - gt.v[i]) : 1e9;
    int b = 0;
    while (e > bounds[b] && b < 9) ++b;
    for (int c = 0; c < 3; ++c) png.samples[i * 3 + c] = colors[b][c];
  }
  return png;
}

}  // namespace oaflow
