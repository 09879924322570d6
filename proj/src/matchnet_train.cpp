#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "oaflow/matchnet.hpp"

namespace oaflow {

namespace {

struct LayerCache {
  Tensor input;
  BatchNormCache bn;
  Tensor out;
};

struct LayerGrad {
  std::vector<double> weight, bias, gamma, beta;
};

std::vector<LayerGrad> zero_grads(const NetParams& p) {
  std::vector<LayerGrad> g(p.layers.size());
  for (size_t i = 0; i < p.layers.size(); ++i) {
    g[i].weight.assign(p.layers[i].conv.weight.size(), 0.0);
    g[i].bias.assign(p.layers[i].conv.bias.size(), 0.0);
    g[i].gamma.assign(p.layers[i].bn.gamma.size(), 0.0);
    g[i].beta.assign(p.layers[i].bn.beta.size(), 0.0);
  }
  return g;
}

Tensor branch_forward(const NetParams& p, const Tensor& input, std::vector<LayerCache>& caches) {
  caches.assign(p.layers.size(), {});
  Tensor x = input;
  for (size_t i = 0; i < p.layers.size(); ++i) {
    caches[i].input = x;
    Tensor y = conv3x3_forward(x, p.layers[i].conv);
    if (p.spec.batch_norm) y = batchnorm_forward_train(y, p.layers[i].bn, caches[i].bn);
    x = relu_forward(y);
    caches[i].out = x;
  }
  return x;
}

void branch_backward(const NetParams& p, const std::vector<LayerCache>& caches, Tensor dout,
                     std::vector<LayerGrad>& grads) {
  for (int i = static_cast<int>(p.layers.size()) - 1; i >= 0; --i) {
    Tensor d = relu_backward(caches[i].out, dout);
    if (p.spec.batch_norm) {
      Tensor dbn;
      batchnorm_backward(d, p.layers[i].bn, caches[i].bn, dbn, grads[i].gamma, grads[i].beta);
      d = std::move(dbn);
    }
    Tensor din;
    conv3x3_backward(caches[i].input, p.layers[i].conv, d, din, grads[i].weight, grads[i].bias, i > 0);
    dout = std::move(din);
  }
}

Tensor stack(std::span<const TrainingExample> batch, const std::vector<int>& idx, bool strips) {
  const Tensor& first = strips ? batch[idx[0]].strip : batch[idx[0]].patch;
  Tensor t(static_cast<int>(idx.size()), 1, first.h, first.w);
  for (size_t j = 0; j < idx.size(); ++j) {
    const Tensor& src = strips ? batch[idx[j]].strip : batch[idx[j]].patch;
    if (src.h != first.h || src.w != first.w) throw std::invalid_argument("training batch: inconsistent patch sizes");
    std::copy(src.data.begin(), src.data.end(), t.data.begin() + j * first.plane());
  }
  return t;
}

struct BranchRun {
  std::vector<LayerCache> caches;
  Tensor features;
  size_t count() const { return features.n; }
};

// Forward + loss over a batch. When `grads` is non-null, backpropagates into it.
// When `runs_out` is non-null, returns the branch runs (for running-statistics updates).
double run_batch(const NetParams& p, std::span<const TrainingExample> batch, std::vector<LayerGrad>* grads,
                 std::vector<BranchRun>* runs_out) {
  if (batch.empty()) throw std::invalid_argument("empty training batch");
  const int B = static_cast<int>(batch.size());
  std::vector<int> all(B), horiz, vert;
  std::iota(all.begin(), all.end(), 0);
  for (int i = 0; i < B; ++i) (batch[i].axis == SearchAxis::horizontal ? horiz : vert).push_back(i);

  std::vector<BranchRun> runs(3);
  runs[0].features = branch_forward(p, stack(batch, all, false), runs[0].caches);
  if (runs[0].features.h != 1 || runs[0].features.w != 1)
    throw std::invalid_argument("training batch: patch size does not match the receptive field");
  if (!horiz.empty()) runs[1].features = branch_forward(p, stack(batch, horiz, true), runs[1].caches);
  if (!vert.empty()) runs[2].features = branch_forward(p, stack(batch, vert, true), runs[2].caches);

  const int D = p.spec.feature_dim();
  Tensor dleft(B, D, 1, 1);
  Tensor dh = runs[1].features, dv = runs[2].features;
  std::fill(dh.data.begin(), dh.data.end(), 0.0);
  std::fill(dv.data.begin(), dv.data.end(), 0.0);
  double total = 0.0;
  auto score_group = [&](const std::vector<int>& idx, const Tensor& strip_feat, Tensor& dstrip) {
    for (size_t j = 0; j < idx.size(); ++j) {
      const int b = idx[j];
      const int support = static_cast<int>(strip_feat.plane());
      std::vector<double> scores(support, 0.0);
      for (int d = 0; d < D; ++d) {
        const double f = runs[0].features.at(b, d, 0, 0);
        const double* g = strip_feat.channel(static_cast<int>(j), d);
        for (int k = 0; k < support; ++k) scores[k] += f * g[k];
      }
      const auto lg = softmax_xent_loss(scores, make_target(support, batch[b].gt_index));
      if (!std::isfinite(lg.loss)) throw std::runtime_error("training diverged: non-finite loss");
      total += lg.loss;
      if (!grads) continue;
      for (int d = 0; d < D; ++d) {
        const double f = runs[0].features.at(b, d, 0, 0);
        const double* g = strip_feat.channel(static_cast<int>(j), d);
        double* dg = dstrip.channel(static_cast<int>(j), d);
        double df = 0.0;
        for (int k = 0; k < support; ++k) {
          const double gs = lg.grad[k] / B;
          df += gs * g[k];
          dg[k] += gs * f;
        }
        dleft.at(b, d, 0, 0) += df;
      }
    }
  };
  if (!horiz.empty()) score_group(horiz, runs[1].features, dh);
  if (!vert.empty()) score_group(vert, runs[2].features, dv);

  if (grads) {
    branch_backward(p, runs[0].caches, dleft, *grads);
    if (!horiz.empty()) branch_backward(p, runs[1].caches, dh, *grads);
    if (!vert.empty()) branch_backward(p, runs[2].caches, dv, *grads);
  }
  if (runs_out) *runs_out = std::move(runs);
  return total / B;
}

std::vector<double> flatten(const std::vector<LayerGrad>& g) {
  std::vector<double> out;
  for (const auto& l : g) {
    out.insert(out.end(), l.weight.begin(), l.weight.end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
    out.insert(out.end(), l.gamma.begin(), l.gamma.end());
    out.insert(out.end(), l.beta.begin(), l.beta.end());
  }
  return out;
}

}  // namespace

std::vector<double> flatten_learnable(const NetParams& p) {
  std::vector<double> out;
  for (const auto& l : p.layers) {
    out.insert(out.end(), l.conv.weight.begin(), l.conv.weight.end());
    out.insert(out.end(), l.conv.bias.begin(), l.conv.bias.end());
    out.insert(out.end(), l.bn.gamma.begin(), l.bn.gamma.end());
    out.insert(out.end(), l.bn.beta.begin(), l.bn.beta.end());
  }
  return out;
}

void unflatten_learnable(NetParams& p, std::span<const double> flat) {
  size_t k = 0;
  auto take = [&](std::vector<double>& v) {
    if (k + v.size() > flat.size()) throw std::invalid_argument("unflatten_learnable: size mismatch");
    std::copy(flat.begin() + k, flat.begin() + k + v.size(), v.begin());
    k += v.size();
  };
  for (auto& l : p.layers) {
    take(l.conv.weight);
    take(l.conv.bias);
    take(l.bn.gamma);
    take(l.bn.beta);
  }
  if (k != flat.size()) throw std::invalid_argument("unflatten_learnable: size mismatch");
}

double batch_loss(const NetParams& params, std::span<const TrainingExample> batch) {
  return run_batch(params, batch, nullptr, nullptr);
}

double batch_loss_and_grad(const NetParams& params, std::span<const TrainingExample> batch,
                           std::vector<double>& grad) {
  auto grads = zero_grads(params);
  const double loss = run_batch(params, batch, &grads, nullptr);
  grad = flatten(grads);
  return loss;
}

std::vector<double> example_scores(const NetParams& params, const TrainingExample& ex) {
  const Tensor f = forward_inference(ex.patch, params);
  const Tensor g = forward_inference(ex.strip, params);
  const int support = static_cast<int>(g.plane());
  std::vector<double> scores(support, 0.0);
  for (int d = 0; d < f.c; ++d) {
    const double fv = f.at(0, d, 0, 0);
    const double* gg = g.channel(0, d);
    for (int k = 0; k < support; ++k) scores[k] += fv * gg[k];
  }
  return scores;
}

double argmax_accuracy(const NetParams& params, std::span<const TrainingExample> examples) {
  if (examples.empty()) return 0.0;
  size_t hits = 0;
  for (const auto& ex : examples) {
    const auto s = example_scores(params, ex);
    const auto best = std::max_element(s.begin(), s.end()) - s.begin();
    if (best == ex.gt_index) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

NetParams train(const std::vector<TrainingExample>& dataset, const NetSpec& spec, const TrainHyperparams& hp,
                TrainReport* report, TrainProgress progress) {
  return train(dataset, NetParams::init(spec, hp.seed), hp, report, std::move(progress));
}

NetParams train(const std::vector<TrainingExample>& dataset, NetParams params, const TrainHyperparams& hp,
                TrainReport* report, TrainProgress progress) {
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  if (hp.batch_size <= 0 || hp.iterations < 0) throw std::invalid_argument("train: invalid hyperparameters");
  params.validate();
  std::mt19937_64 rng(hp.seed ^ 0x9e3779b97f4a7c15ULL);

  // A fixed subset is withheld for the before/after loss report when the dataset is large enough.
  std::vector<size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  size_t n_holdout = dataset.size() >= 4 * static_cast<size_t>(hp.batch_size)
                         ? std::min<size_t>(hp.batch_size, dataset.size() / 10)
                         : 0;
  std::vector<TrainingExample> holdout;
  for (size_t i = 0; i < n_holdout; ++i) holdout.push_back(dataset[order[i]]);
  std::vector<size_t> pool(order.begin() + n_holdout, order.end());
  if (holdout.empty()) {
    for (size_t i = 0; i < std::min<size_t>(pool.size(), hp.batch_size); ++i) holdout.push_back(dataset[pool[i]]);
  }
  if (report) report->initial_holdout_loss = batch_loss(params, holdout);

  std::vector<double> theta = flatten_learnable(params);
  std::vector<double> m(theta.size(), 0.0), v(theta.size(), 0.0);
  // Weight decay applies to convolution weights only.
  std::vector<char> decays(theta.size(), 0);
  {
    size_t k = 0;
    for (const auto& l : params.layers) {
      std::fill(decays.begin() + k, decays.begin() + k + l.conv.weight.size(), 1);
      k += l.conv.weight.size() + l.conv.bias.size() + l.bn.gamma.size() + l.bn.beta.size();
    }
  }

  std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
  std::vector<TrainingExample> batch(hp.batch_size);
  double lr = hp.learning_rate;
  for (int it = 0; it < hp.iterations; ++it) {
    if (std::find(hp.lr_halving_iterations.begin(), hp.lr_halving_iterations.end(), it) !=
        hp.lr_halving_iterations.end())
      lr *= 0.5;
    for (auto& ex : batch) ex = dataset[pool[pick(rng)]];

    auto grads = zero_grads(params);
    std::vector<BranchRun> runs;
    const double loss = run_batch(params, batch, &grads, &runs);
    if (!std::isfinite(loss))
      throw std::runtime_error("training diverged at iteration " + std::to_string(it) + ": non-finite loss");
    if (report) report->batch_losses.push_back(loss);
    if (progress && hp.log_every > 0 && (it % hp.log_every == 0 || it + 1 == hp.iterations)) progress(it, loss);

    if (params.spec.batch_norm) {
      for (const auto& run : runs) {
        if (run.caches.empty()) continue;
        for (size_t li = 0; li < params.layers.size(); ++li) {
          const Tensor& o = run.caches[li].out;
          batchnorm_update_running(params.layers[li].bn, run.caches[li].bn, static_cast<size_t>(o.n) * o.plane());
        }
      }
    }

    const std::vector<double> g = flatten(grads);
    const double bc1 = 1.0 - std::pow(hp.adam_beta1, it + 1);
    const double bc2 = 1.0 - std::pow(hp.adam_beta2, it + 1);
    for (size_t i = 0; i < theta.size(); ++i) {
      const double gi = g[i] + (decays[i] ? hp.weight_decay * theta[i] : 0.0);
      m[i] = hp.adam_beta1 * m[i] + (1 - hp.adam_beta1) * gi;
      v[i] = hp.adam_beta2 * v[i] + (1 - hp.adam_beta2) * gi * gi;
      theta[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + hp.adam_eps);
    }
    unflatten_learnable(params, theta);
  }
  if (report) report->final_holdout_loss = batch_loss(params, holdout);
  return params;
}

}  // namespace oaflow
