#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace oaflow {

/// Dense NCHW tensor of doubles.
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, double fill = 0.0)
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<size_t>(n_) * c_ * h_ * w_, fill) {}

  size_t size() const { return data.size(); }
  size_t plane() const { return static_cast<size_t>(h) * w; }
  double& at(int in, int ic, int y, int x) { return data[((static_cast<size_t>(in) * c + ic) * h + y) * w + x]; }
  double at(int in, int ic, int y, int x) const { return data[((static_cast<size_t>(in) * c + ic) * h + y) * w + x]; }
  double* channel(int in, int ic) { return data.data() + (static_cast<size_t>(in) * c + ic) * plane(); }
  const double* channel(int in, int ic) const { return data.data() + (static_cast<size_t>(in) * c + ic) * plane(); }
};

/// 3x3 valid convolution weights, layout [cout][cin][3][3].
struct ConvWeights {
  int cin = 0, cout = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  double& w(int co, int ci, int ky, int kx) { return weight[((static_cast<size_t>(co) * cin + ci) * 3 + ky) * 3 + kx]; }
  double w(int co, int ci, int ky, int kx) const {
    return weight[((static_cast<size_t>(co) * cin + ci) * 3 + ky) * 3 + kx];
  }
};

struct BatchNormParams {
  std::vector<double> gamma, beta;
  std::vector<double> running_mean, running_var;
};

struct BatchNormCache {
  std::vector<double> mean, inv_std;
  Tensor xhat;
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

// Valid 3x3 convolution, stride 1: out is (n, cout, h-2, w-2). OpenMP over (sample, out channel).
Tensor conv3x3_forward(const Tensor& in, const ConvWeights& conv);
// Gradients; dweight/dbias are accumulated (not overwritten). din is overwritten.
void conv3x3_backward(const Tensor& in, const ConvWeights& conv, const Tensor& dout, Tensor& din,
                      std::vector<double>& dweight, std::vector<double>& dbias, bool need_din = true);

// Training-mode batch norm: per-channel statistics over (n, h, w).
Tensor batchnorm_forward_train(const Tensor& x, const BatchNormParams& bn, BatchNormCache& cache);
Tensor batchnorm_forward_infer(const Tensor& x, const BatchNormParams& bn);
void batchnorm_backward(const Tensor& dout, const BatchNormParams& bn, const BatchNormCache& cache, Tensor& dx,
                        std::vector<double>& dgamma, std::vector<double>& dbeta);
// running = momentum * running + (1 - momentum) * batch (unbiased variance).
void batchnorm_update_running(BatchNormParams& bn, const BatchNormCache& cache, size_t count);

Tensor relu_forward(const Tensor& x);
// dx = dout where the forward output was positive.
Tensor relu_backward(const Tensor& out, const Tensor& dout);

namespace reference {
// Serial, straightforward loop nest; kept for testing the parallel kernel.
Tensor conv3x3_forward(const Tensor& in, const ConvWeights& conv);
}  // namespace reference

}  // namespace oaflow
