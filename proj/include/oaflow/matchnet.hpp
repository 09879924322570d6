#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oaflow/image.hpp"
#include "oaflow/tensor.hpp"

namespace oaflow {

/// Siamese branch architecture: 3x3 convolutions, stride 1, no pooling.
/// Each convolution is followed by batch norm (when enabled) and a ReLU.
struct NetSpec {
  std::vector<int> layer_filter_counts;
  bool batch_norm = true;

  int num_layers() const { return static_cast<int>(layer_filter_counts.size()); }
  int receptive_field() const { return 2 * num_layers() + 1; }
  int feature_dim() const { return layer_filter_counts.empty() ? 1 : layer_filter_counts.back(); }

  /// 9 layers, 19x19 receptive field, 128-dimensional features.
  static NetSpec full();
  /// Desk-scale default: 2 layers of `filters` filters.
  static NetSpec tiny(int filters = 8);
  void validate() const;
  bool operator==(const NetSpec&) const = default;
};

struct ConvLayer {
  ConvWeights conv;
  BatchNormParams bn;
};

struct NetParams {
  NetSpec spec;
  std::vector<ConvLayer> layers;

  /// Uniform fan-in initialization: U(-1/sqrt(fan_in), 1/sqrt(fan_in)) * sqrt(3).
  static NetParams init(const NetSpec& spec, std::uint64_t seed);
  size_t num_parameters() const;
  /// Throws when tensor shapes disagree with the spec or values are non-finite.
  void validate() const;
};

/// Per-pixel feature vectors, layout [y][x][dim].
struct FeatureMap {
  int width = 0, height = 0, dim = 0;
  std::vector<double> values;

  const double* at(int x, int y) const { return values.data() + (static_cast<size_t>(y) * width + x) * dim; }
  double* at(int x, int y) { return values.data() + (static_cast<size_t>(y) * width + x) * dim; }
};

/// Inference-mode forward pass over a whole image (valid convolutions): output is (H-2L) x (W-2L) x dim.
FeatureMap extract_features(const Image& image, const NetParams& params);
/// Pads the image by L replicated pixels first so that features align with input pixels.
FeatureMap extract_features_aligned(const Image& image, const NetParams& params);
/// Inference forward pass over a batch tensor (n, 1, h, w); returns (n, dim, h-2L, w-2L).
Tensor forward_inference(const Tensor& input, const NetParams& params);

/// Inner product of two feature vectors.
double match_score(std::span<const double> f, std::span<const double> g);

/// Smoothed target over a 1D candidate axis: 0.5 / 0.2 / 0.05 at offsets 0 / 1 / 2, renormalized at borders.
struct TargetDistribution {
  std::vector<double> probs;
};
TargetDistribution make_target(int support, int gt_index);

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d scores
};
/// Cross-entropy of softmax(scores) against the target distribution.
LossAndGrad softmax_xent_loss(std::span<const double> scores, const TargetDistribution& target);

enum class SearchAxis { horizontal, vertical };

/// One training example: a (2L+1)^2 patch from image 1 and a strip of 1+R candidates in image 2.
struct TrainingExample {
  Tensor patch;  // (1, 1, P, P)
  Tensor strip;  // (1, 1, P, P+R) horizontal or (1, 1, P+R, P) vertical
  SearchAxis axis = SearchAxis::horizontal;
  int gt_index = 0;
};

/// Cuts the patch pair for pixel `center` along one axis. The strip is centered on the rounded
/// ground-truth match. Returns nullopt when ground truth is invalid or any patch leaves the image.
std::optional<TrainingExample> sample_training_pair(const Image& img1, const Image& img2, const FlowField& gt,
                                                    int cx, int cy, SearchAxis axis, int R, int patch_size);

struct TrainHyperparams {
  int iterations = 10000;
  int batch_size = 128;
  double learning_rate = 0.01;
  double weight_decay = 5e-4;
  std::vector<int> lr_halving_iterations{40000, 60000, 80000};
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  int log_every = 0;  // 0 disables progress callbacks
};

struct TrainReport {
  double initial_holdout_loss = 0.0;
  double final_holdout_loss = 0.0;
  std::vector<double> batch_losses;
};

using TrainProgress = std::function<void(int iteration, double loss)>;

/// Mini-batch training with Adam and the smoothed cross-entropy objective.
/// Throws std::runtime_error when the loss becomes non-finite.
NetParams train(const std::vector<TrainingExample>& dataset, const NetSpec& spec, const TrainHyperparams& hp,
                TrainReport* report = nullptr, TrainProgress progress = {});
NetParams train(const std::vector<TrainingExample>& dataset, NetParams init, const TrainHyperparams& hp,
                TrainReport* report = nullptr, TrainProgress progress = {});

/// Mean loss of a set of examples (batch statistics in training mode, as during optimization).
double batch_loss(const NetParams& params, std::span<const TrainingExample> batch);
/// Loss and gradients w.r.t. all learnable parameters (flattened in layer order: weight, bias, gamma, beta).
double batch_loss_and_grad(const NetParams& params, std::span<const TrainingExample> batch,
                           std::vector<double>& grad);
/// Flattened learnable parameters in the same order as the gradient vector.
std::vector<double> flatten_learnable(const NetParams& params);
void unflatten_learnable(NetParams& params, std::span<const double> flat);

/// Fraction of examples whose inference-mode score argmax hits the ground-truth index.
double argmax_accuracy(const NetParams& params, std::span<const TrainingExample> examples);
/// Inference-mode candidate scores for one example.
std::vector<double> example_scores(const NetParams& params, const TrainingExample& ex);

/// Versioned text checkpoint: spec followed by every tensor with its declared shape.
void save_checkpoint(const NetParams& params, const std::string& path);
NetParams load_checkpoint(const std::string& path);

}  // namespace oaflow
