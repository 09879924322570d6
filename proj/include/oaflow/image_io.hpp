#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oaflow/image.hpp"

namespace oaflow {

/// Raw decoded PNG samples, interleaved, widened to 16 bits.
struct PngData {
  int width = 0;
  int height = 0;
  int channels = 0;   // 1..4
  int bit_depth = 0;  // 8 or 16
  std::vector<std::uint16_t> samples;
};

/// Decodes a PNG without value transforms (palette images yield their indices).
PngData read_png(const std::string& path);
void write_png(const std::string& path, const PngData& png);

/// Loads an 8/16-bit grayscale or RGB(A) PNG as luminance in [0,1].
Image load_image(const std::string& path);
/// Converts decoded samples to luminance (0.299R + 0.587G + 0.114B), scaled to [0,1].
Image to_luminance(const PngData& png);
/// Writes an image as 8-bit or 16-bit grayscale.
void save_image(const std::string& path, const Image& img, int bit_depth = 8);

/// KITTI flow encoding: ch1 = round(64u)+2^15, ch2 = round(64v)+2^15, ch3 = valid.
FlowField decode_flow(const PngData& png);
/// Returns the encoded PNG and the number of clamped out-of-range components.
PngData encode_flow(const FlowField& flow, size_t* clamped = nullptr);
FlowField read_flow_png(const std::string& path);
/// Out-of-range values are clamped to the encodable range and a warning is logged.
void write_flow_png(const FlowField& flow, const std::string& path);

InstanceMap load_instance_map(const std::string& path);
void save_instance_map(const std::string& path, const InstanceMap& map);

Mask load_mask(const std::string& path);
void save_mask(const std::string& path, const Mask& mask);

}  // namespace oaflow
