#include "oaflow/matchnet.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace oaflow {

NetSpec NetSpec::full() { return NetSpec{{32, 32, 64, 64, 64, 128, 128, 128, 128}, true}; }

NetSpec NetSpec::tiny(int filters) { return NetSpec{{filters, filters}, true}; }

void NetSpec::validate() const {
  if (layer_filter_counts.empty()) throw std::invalid_argument("NetSpec: at least one layer required");
  for (int f : layer_filter_counts)
    if (f <= 0) throw std::invalid_argument("NetSpec: filter counts must be positive");
}

NetParams NetParams::init(const NetSpec& spec, std::uint64_t seed) {
  spec.validate();
  NetParams p;
  p.spec = spec;
  std::mt19937_64 rng(seed);
  int cin = 1;
  for (int cout : spec.layer_filter_counts) {
    ConvLayer layer;
    layer.conv.cin = cin;
    layer.conv.cout = cout;
    const double bound = std::sqrt(6.0 / (9.0 * cin));
    std::uniform_real_distribution<double> dist(-bound, bound);
    layer.conv.weight.resize(static_cast<size_t>(cout) * cin * 9);
    for (double& w : layer.conv.weight) w = dist(rng);
    layer.conv.bias.assign(cout, 0.0);
    if (spec.batch_norm) {
      layer.bn.gamma.assign(cout, 1.0);
      layer.bn.beta.assign(cout, 0.0);
      layer.bn.running_mean.assign(cout, 0.0);
      layer.bn.running_var.assign(cout, 1.0);
    }
    p.layers.push_back(std::move(layer));
    cin = cout;
  }
  return p;
}

size_t NetParams::num_parameters() const {
  size_t n = 0;
  for (const auto& l : layers) n += l.conv.weight.size() + l.conv.bias.size() + l.bn.gamma.size() + l.bn.beta.size();
  return n;
}

void NetParams::validate() const {
  spec.validate();
  if (static_cast<int>(layers.size()) != spec.num_layers()) throw std::runtime_error("NetParams: layer count mismatch");
  int cin = 1;
  for (int i = 0; i < spec.num_layers(); ++i) {
    const auto& l = layers[i];
    const int cout = spec.layer_filter_counts[i];
    if (l.conv.cin != cin || l.conv.cout != cout || l.conv.weight.size() != static_cast<size_t>(cout) * cin * 9 ||
        l.conv.bias.size() != static_cast<size_t>(cout))
      throw std::runtime_error("NetParams: convolution shape mismatch at layer " + std::to_string(i));
    const size_t bn_size = spec.batch_norm ? static_cast<size_t>(cout) : 0;
    if (l.bn.gamma.size() != bn_size || l.bn.beta.size() != bn_size || l.bn.running_mean.size() != bn_size ||
        l.bn.running_var.size() != bn_size)
      throw std::runtime_error("NetParams: batch-norm shape mismatch at layer " + std::to_string(i));
    auto finite = [](const std::vector<double>& v) {
      return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    if (!finite(l.conv.weight) || !finite(l.conv.bias) || !finite(l.bn.gamma) || !finite(l.bn.beta) ||
        !finite(l.bn.running_mean) || !finite(l.bn.running_var))
      throw std::runtime_error("NetParams: non-finite value at layer " + std::to_string(i));
    cin = cout;
  }
}

Tensor forward_inference(const Tensor& input, const NetParams& params) {
  Tensor x = input;
  for (const auto& layer : params.layers) {
    x = conv3x3_forward(x, layer.conv);
    if (params.spec.batch_norm) x = batchnorm_forward_infer(x, layer.bn);
    x = relu_forward(x);
  }
  return x;
}

FeatureMap extract_features(const Image& image, const NetParams& params) {
  const int rf = params.spec.receptive_field();
  if (image.width < rf || image.height < rf) throw std::invalid_argument("extract_features: image smaller than receptive field");
  Tensor in(1, 1, image.height, image.width);
  for (size_t i = 0; i < image.size(); ++i) in.data[i] = image[i];
  const Tensor out = forward_inference(in, params);
  FeatureMap fm{out.w, out.h, out.c, {}};
  fm.values.resize(static_cast<size_t>(out.w) * out.h * out.c);
  for (int c = 0; c < out.c; ++c) {
    const double* src = out.channel(0, c);
    for (int y = 0; y < out.h; ++y)
      for (int x = 0; x < out.w; ++x) fm.at(x, y)[c] = src[static_cast<size_t>(y) * out.w + x];
  }
  return fm;
}

FeatureMap extract_features_aligned(const Image& image, const NetParams& params) {
  return extract_features(pad_replicate(image, params.spec.num_layers()), params);
}

double match_score(std::span<const double> f, std::span<const double> g) {
  if (f.size() != g.size()) throw std::invalid_argument("match_score: dimension mismatch");
  // Fixed four-lane accumulation order; every caller sees identical rounding.
  double a0 = 0, a1 = 0, a2 = 0, a3 = 0;
  size_t i = 0;
  const size_t n = f.size();
  for (; i + 4 <= n; i += 4) {
    a0 += f[i] * g[i];
    a1 += f[i + 1] * g[i + 1];
    a2 += f[i + 2] * g[i + 2];
    a3 += f[i + 3] * g[i + 3];
  }
  for (; i < n; ++i) a0 += f[i] * g[i];
  return (a0 + a1) + (a2 + a3);
}

TargetDistribution make_target(int support, int gt_index) {
  if (support <= 0 || gt_index < 0 || gt_index >= support)
    throw std::out_of_range("make_target: ground-truth index outside the support");
  static constexpr double kMass[3] = {0.5, 0.2, 0.05};
  TargetDistribution t;
  t.probs.assign(support, 0.0);
  double total = 0.0;
  for (int off = -2; off <= 2; ++off) {
    const int i = gt_index + off;
    if (i < 0 || i >= support) continue;
    t.probs[i] = kMass[std::abs(off)];
    total += t.probs[i];
  }
  for (double& p : t.probs) p /= total;
  return t;
}

LossAndGrad softmax_xent_loss(std::span<const double> scores, const TargetDistribution& target) {
  if (scores.size() != target.probs.size()) throw std::invalid_argument("softmax_xent_loss: length mismatch");
  if (scores.empty()) throw std::invalid_argument("softmax_xent_loss: empty scores");
  double mx = -INFINITY;
  for (double s : scores) {
    if (!std::isfinite(s)) throw std::domain_error("softmax_xent_loss: non-finite score");
    mx = std::max(mx, s);
  }
  double z = 0.0;
  for (double s : scores) z += std::exp(s - mx);
  const double log_z = mx + std::log(z);
  LossAndGrad out;
  out.grad.resize(scores.size());
  for (size_t i = 0; i < scores.size(); ++i) {
    const double log_p = scores[i] - log_z;
    if (target.probs[i] > 0) out.loss -= target.probs[i] * log_p;
    out.grad[i] = std::exp(log_p) - target.probs[i];
  }
  return out;
}

std::optional<TrainingExample> sample_training_pair(const Image& img1, const Image& img2, const FlowField& gt,
                                                    int cx, int cy, SearchAxis axis, int R, int patch_size) {
  if (R < 0 || R % 2 != 0) throw std::invalid_argument("sample_training_pair: R must be even and non-negative");
  if (patch_size % 2 == 0) throw std::invalid_argument("sample_training_pair: patch size must be odd");
  const int half = patch_size / 2;
  if (!gt.u.inside(cx, cy) || !gt.is_valid(cx, cy)) return std::nullopt;
  if (cx - half < 0 || cy - half < 0 || cx + half >= img1.width || cy + half >= img1.height) return std::nullopt;
  const int mx = static_cast<int>(std::lround(cx + gt.u(cx, cy)));
  const int my = static_cast<int>(std::lround(cy + gt.v(cx, cy)));
  const int rx = axis == SearchAxis::horizontal ? half + R / 2 : half;
  const int ry = axis == SearchAxis::vertical ? half + R / 2 : half;
  if (mx - rx < 0 || my - ry < 0 || mx + rx >= img2.width || my + ry >= img2.height) return std::nullopt;

  TrainingExample ex;
  ex.axis = axis;
  ex.gt_index = R / 2;
  ex.patch = Tensor(1, 1, patch_size, patch_size);
  for (int y = 0; y < patch_size; ++y)
    for (int x = 0; x < patch_size; ++x) ex.patch.at(0, 0, y, x) = img1(cx - half + x, cy - half + y);
  ex.strip = Tensor(1, 1, 2 * ry + 1, 2 * rx + 1);
  for (int y = 0; y < ex.strip.h; ++y)
    for (int x = 0; x < ex.strip.w; ++x) ex.strip.at(0, 0, y, x) = img2(mx - rx + x, my - ry + y);
  return ex;
}

}  // namespace oaflow
