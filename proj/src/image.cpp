#include "oaflow/image.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace oaflow {

Mask InstanceMap::mask_of(int label) const {
  Mask m(labels.width, labels.height, 0);
  for (size_t i = 0; i < labels.size(); ++i) m[i] = labels[i] == label ? 1 : 0;
  return m;
}

InstanceMap make_instance_map(Raster<int> raw) {
  std::map<int, int> remap;
  for (int v : raw.data) {
    if (v < 0) throw std::invalid_argument("instance labels must be non-negative");
    if (v != 0) remap.emplace(v, 0);
  }
  int next = 1;
  for (auto& [from, to] : remap) to = next++;
  for (int& v : raw.data)
    if (v != 0) v = remap[v];
  InstanceMap out;
  out.labels = std::move(raw);
  out.num_instances = static_cast<int>(remap.size());
  return out;
}

size_t FlowField::count_valid() const {
  return static_cast<size_t>(std::count_if(valid.data.begin(), valid.data.end(), [](auto f) { return f != 0; }));
}

Image pad_replicate(const Image& img, int border) {
  if (border < 0) throw std::invalid_argument("pad_replicate: negative border");
  Image out(img.width + 2 * border, img.height + 2 * border);
  for (int y = 0; y < out.height; ++y) {
    const int sy = std::clamp(y - border, 0, img.height - 1);
    for (int x = 0; x < out.width; ++x) {
      const int sx = std::clamp(x - border, 0, img.width - 1);
      out(x, y) = img(sx, sy);
    }
  }
  return out;
}

float sample_bilinear(const Image& img, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double ax = x - x0, ay = y - y0;
  const double top = (1 - ax) * img(x0, y0) + ax * img(x1, y0);
  const double bot = (1 - ax) * img(x0, y1) + ax * img(x1, y1);
  return static_cast<float>((1 - ay) * top + ay * bot);
}

bool sample_flow(const FlowField& flow, double x, double y, double& u, double& v) {
  if (x < 0 || y < 0 || x > flow.width() - 1 || y > flow.height() - 1) return false;
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double ax = x - x0, ay = y - y0;
  double wsum = 0, su = 0, sv = 0;
  for (int dy = 0; dy <= 1; ++dy) {
    for (int dx = 0; dx <= 1; ++dx) {
      const int xx = x0 + dx, yy = y0 + dy;
      if (!flow.u.inside(xx, yy) || !flow.is_valid(xx, yy)) continue;
      const double w = (dx ? ax : 1 - ax) * (dy ? ay : 1 - ay);
      if (w <= 0) continue;
      wsum += w;
      su += w * flow.u(xx, yy);
      sv += w * flow.v(xx, yy);
    }
  }
  if (wsum <= 1e-12) return false;
  u = su / wsum;
  v = sv / wsum;
  return true;
}

}  // namespace oaflow
