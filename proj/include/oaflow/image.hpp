#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace oaflow {

/// Row-major 2D raster. The building block for images, masks and flow.
template <typename T>
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Raster() = default;
  Raster(int w, int h, T fill = T{}) : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {
    if (w < 0 || h < 0) throw std::invalid_argument("Raster: negative dimensions");
  }

  size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool inside(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  bool same_shape(int w, int h) const { return w == width && h == height; }
  template <typename U>
  bool same_shape(const Raster<U>& o) const { return o.width == width && o.height == height; }

  T& operator()(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  const T& operator()(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
  T& operator[](size_t i) { return data[i]; }
  const T& operator[](size_t i) const { return data[i]; }
};

/// Luminance image, values in [0,1].
using Image = Raster<float>;
/// Per-pixel 0/1 mask.
using Mask = Raster<std::uint8_t>;

/// Per-pixel rigid-body labels. 0 is background, 1..num_instances are instances.
struct InstanceMap {
  Raster<int> labels;
  int num_instances = 0;

  int width() const { return labels.width; }
  int height() const { return labels.height; }
  Mask mask_of(int label) const;
  Mask background() const { return mask_of(0); }
};

/// Relabels arbitrary non-negative labels to the contiguous set {0..M}, keeping 0 as background.
/// Non-zero labels are ordered by their original value.
InstanceMap make_instance_map(Raster<int> raw);

/// Displacement field; invalid pixels carry u = v = 0.
struct FlowField {
  Raster<float> u;
  Raster<float> v;
  Mask valid;

  FlowField() = default;
  FlowField(int w, int h) : u(w, h, 0.f), v(w, h, 0.f), valid(w, h, 0) {}

  int width() const { return u.width; }
  int height() const { return u.height; }
  bool is_valid(int x, int y) const { return valid(x, y) != 0; }
  void set(int x, int y, float du, float dv) {
    u(x, y) = du;
    v(x, y) = dv;
    valid(x, y) = 1;
  }
  void invalidate(int x, int y) {
    u(x, y) = 0.f;
    v(x, y) = 0.f;
    valid(x, y) = 0;
  }
  size_t count_valid() const;
};

/// Pads an image by `border` pixels on every side by edge replication.
Image pad_replicate(const Image& img, int border);

/// Bilinear sample with edge clamping.
float sample_bilinear(const Image& img, double x, double y);

/// Bilinear lookup over valid flow pixels only; weights renormalized over valid corners.
/// Returns false when no corner is valid or the point falls outside the raster.
bool sample_flow(const FlowField& flow, double x, double y, double& u, double& v);

}  // namespace oaflow
