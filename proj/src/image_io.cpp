#include "oaflow/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <iostream>
#include <memory>

namespace oaflow {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_fail(const std::string& path, const std::string& what) {
  throw std::runtime_error("png '" + path + "': " + what);
}

void error_fn(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err) *err = msg;
  png_longjmp(png, 1);
}

void warn_fn(png_structp, png_const_charp) {}

}  // namespace

PngData read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) png_fail(path, "cannot open for reading");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) png_fail(path, "not a PNG file");

  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, error_fn, warn_fn);
  if (!png) png_fail(path, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  PngData out;
  std::vector<png_bytep> rows;
  std::vector<png_byte> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    png_fail(path, err.empty() ? "decode error" : err);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (depth < 8) {
    if (color == PNG_COLOR_TYPE_GRAY) png_set_expand_gray_1_2_4_to_8(png);
    else png_set_packing(png);
    depth = 8;
  }
  if (depth == 16) png_set_swap(png);  // little-endian host order into uint16 buffer
  png_read_update_info(png, info);

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  const size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * out.height);
  rows.resize(out.height);
  for (int y = 0; y < out.height; ++y) rows[y] = buffer.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const size_t n = static_cast<size_t>(out.width) * out.height * out.channels;
  out.samples.resize(n);
  if (out.bit_depth == 16) {
    for (size_t i = 0; i < n; ++i) {
      std::uint16_t v;
      std::memcpy(&v, buffer.data() + 2 * i, 2);
      out.samples[i] = v;
    }
  } else if (out.bit_depth == 8) {
    for (size_t i = 0; i < n; ++i) out.samples[i] = buffer[i];
  } else {
    png_fail(path, "unsupported bit depth");
  }
  return out;
}

void write_png(const std::string& path, const PngData& data) {
  if (data.bit_depth != 8 && data.bit_depth != 16) png_fail(path, "unsupported bit depth");
  if (data.channels < 1 || data.channels > 4) png_fail(path, "unsupported channel count");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) png_fail(path, "cannot open for writing");
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, error_fn, warn_fn);
  png_infop info = png_create_info_struct(png);
  const size_t bytes = data.bit_depth / 8;
  const size_t rowbytes = static_cast<size_t>(data.width) * data.channels * bytes;
  std::vector<png_byte> buffer(rowbytes * data.height);
  for (size_t i = 0; i < data.samples.size(); ++i) {
    if (bytes == 2) {
      buffer[2 * i] = static_cast<png_byte>(data.samples[i] >> 8);
      buffer[2 * i + 1] = static_cast<png_byte>(data.samples[i] & 0xff);
    } else {
      buffer[i] = static_cast<png_byte>(std::min<std::uint16_t>(data.samples[i], 255));
    }
  }
  std::vector<png_bytep> rows(data.height);
  for (int y = 0; y < data.height; ++y) rows[y] = buffer.data() + y * rowbytes;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    png_fail(path, err.empty() ? "encode error" : err);
  }
  static constexpr int kColor[] = {PNG_COLOR_TYPE_GRAY, PNG_COLOR_TYPE_GRAY_ALPHA, PNG_COLOR_TYPE_RGB,
                                   PNG_COLOR_TYPE_RGB_ALPHA};
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, data.width, data.height, data.bit_depth, kColor[data.channels - 1], PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image to_luminance(const PngData& png) {
  if (png.bit_depth != 8 && png.bit_depth != 16) throw std::runtime_error("unsupported bit depth");
  const double scale = png.bit_depth == 16 ? 65535.0 : 255.0;
  Image img(png.width, png.height);
  const int c = png.channels;
  for (size_t i = 0; i < img.size(); ++i) {
    const std::uint16_t* s = &png.samples[i * c];
    double lum;
    if (c >= 3) lum = 0.299 * s[0] + 0.587 * s[1] + 0.114 * s[2];
    else lum = s[0];
    img[i] = static_cast<float>(std::clamp(lum / scale, 0.0, 1.0));
  }
  return img;
}

Image load_image(const std::string& path) { return to_luminance(read_png(path)); }

void save_image(const std::string& path, const Image& img, int bit_depth) {
  PngData png{img.width, img.height, 1, bit_depth, {}};
  const double scale = bit_depth == 16 ? 65535.0 : 255.0;
  png.samples.resize(img.size());
  for (size_t i = 0; i < img.size(); ++i)
    png.samples[i] = static_cast<std::uint16_t>(std::lround(std::clamp<double>(img[i], 0.0, 1.0) * scale));
  write_png(path, png);
}

FlowField decode_flow(const PngData& png) {
  if (png.bit_depth != 16 || png.channels != 3)
    throw std::runtime_error("flow PNG must be 16-bit with 3 channels");
  FlowField flow(png.width, png.height);
  for (size_t i = 0; i < flow.u.size(); ++i) {
    const std::uint16_t* s = &png.samples[3 * i];
    if (s[2] == 0) continue;
    flow.u[i] = static_cast<float>((static_cast<double>(s[0]) - 32768.0) / 64.0);
    flow.v[i] = static_cast<float>((static_cast<double>(s[1]) - 32768.0) / 64.0);
    flow.valid[i] = 1;
  }
  return flow;
}

PngData encode_flow(const FlowField& flow, size_t* clamped) {
  PngData png{flow.width(), flow.height(), 3, 16, {}};
  png.samples.assign(flow.u.size() * 3, 0);
  size_t n_clamped = 0;
  auto encode = [&](float value) -> std::uint16_t {
    long q = std::lround(64.0 * static_cast<double>(value)) + 32768;
    if (q < 0 || q > 65535) {
      ++n_clamped;
      q = std::clamp<long>(q, 0, 65535);
    }
    return static_cast<std::uint16_t>(q);
  };
  for (size_t i = 0; i < flow.u.size(); ++i) {
    if (!flow.valid[i]) {
      png.samples[3 * i] = 32768;
      png.samples[3 * i + 1] = 32768;
      continue;
    }
    png.samples[3 * i] = encode(flow.u[i]);
    png.samples[3 * i + 1] = encode(flow.v[i]);
    png.samples[3 * i + 2] = 1;
  }
  if (clamped) *clamped = n_clamped;
  return png;
}

FlowField read_flow_png(const std::string& path) { return decode_flow(read_png(path)); }

void write_flow_png(const FlowField& flow, const std::string& path) {
  size_t clamped = 0;
  PngData png = encode_flow(flow, &clamped);
  if (clamped > 0)
    std::clog << "warning: " << clamped << " flow components outside the encodable range were clamped (" << path
              << ")\n";
  write_png(path, png);
}

InstanceMap load_instance_map(const std::string& path) {
  PngData png = read_png(path);
  if (png.channels != 1) throw std::runtime_error("instance map '" + path + "' must be single-channel");
  Raster<int> raw(png.width, png.height);
  for (size_t i = 0; i < raw.size(); ++i) raw[i] = png.samples[i];
  return make_instance_map(std::move(raw));
}

void save_instance_map(const std::string& path, const InstanceMap& map) {
  const int depth = map.num_instances > 255 ? 16 : 8;
  PngData png{map.width(), map.height(), 1, depth, {}};
  png.samples.resize(map.labels.size());
  for (size_t i = 0; i < map.labels.size(); ++i) png.samples[i] = static_cast<std::uint16_t>(map.labels[i]);
  write_png(path, png);
}

Mask load_mask(const std::string& path) {
  PngData png = read_png(path);
  Mask m(png.width, png.height, 0);
  for (size_t i = 0; i < m.size(); ++i) m[i] = png.samples[i * png.channels] != 0 ? 1 : 0;
  return m;
}

void save_mask(const std::string& path, const Mask& mask) {
  PngData png{mask.width, mask.height, 1, 8, {}};
  png.samples.resize(mask.size());
  for (size_t i = 0; i < mask.size(); ++i) png.samples[i] = mask[i] ? 255 : 0;
  write_png(path, png);
}

}  // namespace oaflow
