#include "oaflow/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace oaflow {

Tensor conv3x3_forward(const Tensor& in, const ConvWeights& conv) {
  if (in.c != conv.cin) throw std::invalid_argument("conv3x3_forward: channel mismatch");
  if (in.h < 3 || in.w < 3) throw std::invalid_argument("conv3x3_forward: input smaller than kernel");
  const int oh = in.h - 2, ow = in.w - 2;
  Tensor out(in.n, conv.cout, oh, ow);
  const int jobs = in.n * conv.cout;
#pragma omp parallel for schedule(static)
  for (int job = 0; job < jobs; ++job) {
    const int n = job / conv.cout, co = job % conv.cout;
    double* o = out.channel(n, co);
    const double b = conv.bias[co];
    for (size_t i = 0; i < out.plane(); ++i) o[i] = b;
    for (int ci = 0; ci < conv.cin; ++ci) {
      const double* src = in.channel(n, ci);
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const double wv = conv.w(co, ci, ky, kx);
          for (int y = 0; y < oh; ++y) {
            const double* s = src + static_cast<size_t>(y + ky) * in.w + kx;
            double* d = o + static_cast<size_t>(y) * ow;
            for (int x = 0; x < ow; ++x) d[x] += wv * s[x];
          }
        }
      }
    }
  }
  return out;
}

namespace reference {
Tensor conv3x3_forward(const Tensor& in, const ConvWeights& conv) {
  if (in.c != conv.cin) throw std::invalid_argument("conv3x3_forward: channel mismatch");
  Tensor out(in.n, conv.cout, in.h - 2, in.w - 2);
  for (int n = 0; n < in.n; ++n)
    for (int co = 0; co < conv.cout; ++co)
      for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x) {
          double acc = conv.bias[co];
          for (int ci = 0; ci < conv.cin; ++ci)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) acc += conv.w(co, ci, ky, kx) * in.at(n, ci, y + ky, x + kx);
          out.at(n, co, y, x) = acc;
        }
  return out;
}
}  // namespace reference

void conv3x3_backward(const Tensor& in, const ConvWeights& conv, const Tensor& dout, Tensor& din,
                      std::vector<double>& dweight, std::vector<double>& dbias, bool need_din) {
  const int oh = dout.h, ow = dout.w;
  // Weight gradients: each output channel owns its slice, so the loop is race free and
  // the summation order is independent of the thread count.
#pragma omp parallel for schedule(static)
  for (int co = 0; co < conv.cout; ++co) {
    double db = 0.0;
    for (int n = 0; n < in.n; ++n) {
      const double* g = dout.channel(n, co);
      for (size_t i = 0; i < dout.plane(); ++i) db += g[i];
      for (int ci = 0; ci < conv.cin; ++ci) {
        const double* src = in.channel(n, ci);
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            double acc = 0.0;
            for (int y = 0; y < oh; ++y) {
              const double* s = src + static_cast<size_t>(y + ky) * in.w + kx;
              const double* gg = g + static_cast<size_t>(y) * ow;
              for (int x = 0; x < ow; ++x) acc += gg[x] * s[x];
            }
            dweight[((static_cast<size_t>(co) * conv.cin + ci) * 3 + ky) * 3 + kx] += acc;
          }
      }
    }
    dbias[co] += db;
  }
  if (!need_din) return;
  din = Tensor(in.n, in.c, in.h, in.w);
  const int jobs = in.n * conv.cin;
#pragma omp parallel for schedule(static)
  for (int job = 0; job < jobs; ++job) {
    const int n = job / conv.cin, ci = job % conv.cin;
    double* d = din.channel(n, ci);
    for (int co = 0; co < conv.cout; ++co) {
      const double* g = dout.channel(n, co);
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const double wv = conv.w(co, ci, ky, kx);
          for (int y = 0; y < oh; ++y) {
            double* dd = d + static_cast<size_t>(y + ky) * in.w + kx;
            const double* gg = g + static_cast<size_t>(y) * ow;
            for (int x = 0; x < ow; ++x) dd[x] += wv * gg[x];
          }
        }
    }
  }
}

Tensor batchnorm_forward_train(const Tensor& x, const BatchNormParams& bn, BatchNormCache& cache) {
  const size_t count = static_cast<size_t>(x.n) * x.plane();
  cache.mean.assign(x.c, 0.0);
  cache.inv_std.assign(x.c, 0.0);
  cache.xhat = Tensor(x.n, x.c, x.h, x.w);
  Tensor y(x.n, x.c, x.h, x.w);
  for (int c = 0; c < x.c; ++c) {
    double mean = 0.0;
    for (int n = 0; n < x.n; ++n) {
      const double* p = x.channel(n, c);
      for (size_t i = 0; i < x.plane(); ++i) mean += p[i];
    }
    mean /= static_cast<double>(count);
    double var = 0.0;
    for (int n = 0; n < x.n; ++n) {
      const double* p = x.channel(n, c);
      for (size_t i = 0; i < x.plane(); ++i) var += (p[i] - mean) * (p[i] - mean);
    }
    var /= static_cast<double>(count);
    const double inv = 1.0 / std::sqrt(var + kBatchNormEps);
    cache.mean[c] = mean;
    cache.inv_std[c] = inv;
    for (int n = 0; n < x.n; ++n) {
      const double* p = x.channel(n, c);
      double* xh = cache.xhat.channel(n, c);
      double* o = y.channel(n, c);
      for (size_t i = 0; i < x.plane(); ++i) {
        xh[i] = (p[i] - mean) * inv;
        o[i] = bn.gamma[c] * xh[i] + bn.beta[c];
      }
    }
  }
  return y;
}

Tensor batchnorm_forward_infer(const Tensor& x, const BatchNormParams& bn) {
  Tensor y(x.n, x.c, x.h, x.w);
#pragma omp parallel for schedule(static)
  for (int c = 0; c < x.c; ++c) {
    const double scale = bn.gamma[c] / std::sqrt(bn.running_var[c] + kBatchNormEps);
    const double shift = bn.beta[c] - scale * bn.running_mean[c];
    for (int n = 0; n < x.n; ++n) {
      const double* p = x.channel(n, c);
      double* o = y.channel(n, c);
      for (size_t i = 0; i < x.plane(); ++i) o[i] = scale * p[i] + shift;
    }
  }
  return y;
}

void batchnorm_backward(const Tensor& dout, const BatchNormParams& bn, const BatchNormCache& cache, Tensor& dx,
                        std::vector<double>& dgamma, std::vector<double>& dbeta) {
  const double count = static_cast<double>(dout.n) * static_cast<double>(dout.plane());
  dx = Tensor(dout.n, dout.c, dout.h, dout.w);
  for (int c = 0; c < dout.c; ++c) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (int n = 0; n < dout.n; ++n) {
      const double* g = dout.channel(n, c);
      const double* xh = cache.xhat.channel(n, c);
      for (size_t i = 0; i < dout.plane(); ++i) {
        sum_g += g[i];
        sum_gx += g[i] * xh[i];
      }
    }
    dgamma[c] += sum_gx;
    dbeta[c] += sum_g;
    const double k = bn.gamma[c] * cache.inv_std[c];
    for (int n = 0; n < dout.n; ++n) {
      const double* g = dout.channel(n, c);
      const double* xh = cache.xhat.channel(n, c);
      double* d = dx.channel(n, c);
      for (size_t i = 0; i < dout.plane(); ++i) d[i] = k * (g[i] - sum_g / count - xh[i] * sum_gx / count);
    }
  }
}

void batchnorm_update_running(BatchNormParams& bn, const BatchNormCache& cache, size_t count) {
  for (size_t c = 0; c < bn.gamma.size(); ++c) {
    const double var = 1.0 / (cache.inv_std[c] * cache.inv_std[c]) - kBatchNormEps;
    const double unbiased = count > 1 ? var * static_cast<double>(count) / static_cast<double>(count - 1) : var;
    bn.running_mean[c] = kBatchNormMomentum * bn.running_mean[c] + (1 - kBatchNormMomentum) * cache.mean[c];
    bn.running_var[c] = kBatchNormMomentum * bn.running_var[c] + (1 - kBatchNormMomentum) * unbiased;
  }
}

Tensor relu_forward(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data) v = v > 0 ? v : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& out, const Tensor& dout) {
  Tensor dx = dout;
  for (size_t i = 0; i < dx.size(); ++i)
    if (!(out.data[i] > 0)) dx.data[i] = 0.0;
  return dx;
}

}  // namespace oaflow
