#include "forge/predictor.hpp"

#include <cmath>
#include <limits>

#include "forge/rng.hpp"

namespace forge {

PredictorModel::PredictorModel(int dim_x, int dim_y, const ArchConfig& arch,
                               std::uint64_t seed)
    : dim_x_(dim_x), dim_y_(dim_y), arch_(arch) {
  if (dim_x < 1 || dim_y < 1) throw ConfigError("predictor dimensions must be positive");
  std::vector<int> widths;
  widths.push_back(dim_x);
  for (int h : arch.hidden) {
    if (h < 1) throw ConfigError("hidden width must be positive");
    widths.push_back(h);
  }
  widths.push_back(dim_y);

  int offset = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    Layer layer;
    layer.in = widths[l];
    layer.out = widths[l + 1];
    layer.w_offset = offset;
    offset += layer.in * layer.out;
    layer.b_offset = offset;
    offset += layer.out;
    layer.relu = arch.relu && l + 2 < widths.size();  // never on the output layer
    layers_.push_back(layer);
  }

  theta_ = Vec(offset);
  Rng rng(seed);
  for (const Layer& layer : layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in));
    for (int k = 0; k < layer.in * layer.out; ++k)
      theta_[layer.w_offset + k] = rng.uniform(-bound, bound);
    for (int k = 0; k < layer.out; ++k) theta_[layer.b_offset + k] = rng.uniform(-bound, bound);
  }
  x_mean_ = Vec::Zero(dim_x);
  x_std_ = Vec::Ones(dim_x);
}

void PredictorModel::set_input_stats(Vec mean, Vec std) {
  if (mean.size() != dim_x_ || std.size() != dim_x_)
    throw ConfigError("input stats dimension mismatch");
  for (int i = 0; i < std.size(); ++i)
    if (std[i] <= 0.0) std[i] = 1.0;
  x_mean_ = std::move(mean);
  x_std_ = std::move(std);
}

void PredictorModel::fit_input_stats(const Dataset& data) {
  Vec mean = Vec::Zero(dim_x_);
  Vec var = Vec::Zero(dim_x_);
  const auto& idx = data.split.train;
  if (idx.empty()) return;
  for (int i : idx) mean += data.instances[i].x;
  mean /= static_cast<double>(idx.size());
  for (int i : idx) var += (data.instances[i].x - mean).cwiseAbs2();
  var /= static_cast<double>(idx.size());
  set_input_stats(mean, var.cwiseSqrt());
}

Vec PredictorModel::forward(const Vec& x) const {
  if (x.size() != dim_x_) throw ConfigError("forward: input dimension mismatch");
  Vec h = (x - x_mean_).cwiseQuotient(x_std_);
  for (const Layer& layer : layers_) {
    Eigen::Map<const Mat> W(theta_.data() + layer.w_offset, layer.out, layer.in);
    Eigen::Map<const Vec> b(theta_.data() + layer.b_offset, layer.out);
    h = W * h + b;
    if (layer.relu) h = h.cwiseMax(0.0);
  }
  return h;
}

Vec backward(const PredictorModel& model, const Vec& x, const Vec& grad_y) {
  if (x.size() != model.dim_x()) throw ConfigError("backward: input dimension mismatch");
  if (grad_y.size() != model.dim_y()) throw ConfigError("backward: gradient dimension mismatch");
  if (!grad_y.allFinite()) throw ConfigError("backward: non-finite output gradient");

  const auto& layers = model.layers();
  const Vec& theta = model.params();

  // Forward pass caching the input of every layer (post-activation).
  std::vector<Vec> inputs(layers.size());
  std::vector<Vec> pre(layers.size());
  Vec h = (x - model.x_mean()).cwiseQuotient(model.x_std());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    inputs[l] = h;
    Eigen::Map<const Mat> W(theta.data() + layers[l].w_offset, layers[l].out, layers[l].in);
    Eigen::Map<const Vec> b(theta.data() + layers[l].b_offset, layers[l].out);
    pre[l] = W * h + b;
    h = layers[l].relu ? pre[l].cwiseMax(0.0) : pre[l];
  }

  Vec grad_theta = Vec::Zero(theta.size());
  Vec delta = grad_y;
  for (std::size_t l = layers.size(); l-- > 0;) {
    if (layers[l].relu) {
      for (int k = 0; k < delta.size(); ++k)
        if (pre[l][k] <= 0.0) delta[k] = 0.0;
    }
    Eigen::Map<Mat> gW(grad_theta.data() + layers[l].w_offset, layers[l].out, layers[l].in);
    Eigen::Map<Vec> gb(grad_theta.data() + layers[l].b_offset, layers[l].out);
    gW = delta * inputs[l].transpose();
    gb = delta;
    if (l > 0) {
      Eigen::Map<const Mat> W(theta.data() + layers[l].w_offset, layers[l].out, layers[l].in);
      delta = W.transpose() * delta;
    }
  }
  return grad_theta;
}

void adam_step(AdamState& state, Vec& params, const Vec& grad) {
  if (state.m.size() != params.size()) state.init(params.size());
  if (grad.size() != params.size()) throw ConfigError("adam: gradient size mismatch");
  if (!grad.allFinite()) throw ConfigError("adam: non-finite gradient");
  ++state.step;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const Vec denom = (state.v / c2).cwiseSqrt() + Vec::Constant(params.size(), state.eps);
  params -= state.lr * (state.m / c1).cwiseQuotient(denom);
}

double mse(const PredictorModel& model, const Dataset& data, const std::vector<int>& idx) {
  if (idx.empty()) return 0.0;
  double total = 0.0;
  for (int i : idx) total += (model.forward(data.instances[i].x) - data.instances[i].y).squaredNorm();
  return total / (static_cast<double>(idx.size()) * model.dim_y());
}

PflResult pfl_train(PredictorModel& model, const Dataset& data, const PflConfig& cfg) {
  PflResult result;
  const auto& train = data.split.train;
  if (train.empty()) throw ConfigError("pfl_train: empty train split");

  AdamState adam;
  adam.lr = cfg.lr;
  adam.init(model.params().size());

  const bool use_val = !data.split.val.empty();
  double best_val = use_val ? mse(model, data, data.split.val)
                            : std::numeric_limits<double>::infinity();
  Vec best_theta = model.params();
  int bad_epochs = 0;

  const int m = static_cast<int>(train.size());
  const int batch = cfg.batch_size > 0 ? std::min(cfg.batch_size, m) : m;
  const double denom = static_cast<double>(m) * model.dim_y();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (int start = 0; start < m; start += batch) {
      const int end = std::min(start + batch, m);
      Vec grad = Vec::Zero(model.params().size());
      for (int k = start; k < end; ++k) {
        const Instance& inst = data.instances[train[k]];
        const Vec residual = model.forward(inst.x) - inst.y;
        grad += backward(model, inst.x, 2.0 * residual / denom);
      }
      adam_step(adam, model.params(), grad);
    }
    result.epochs_run = epoch;

    if (use_val) {
      const double val = mse(model, data, data.split.val);
      if (val < best_val) {
        best_val = val;
        best_theta = model.params();
        bad_epochs = 0;
      } else {
        ++bad_epochs;
      }
      if (bad_epochs >= cfg.patience) break;
    }
  }

  if (use_val && cfg.epochs > 0) model.params() = best_theta;
  result.train_mse = mse(model, data, train);
  result.val_mse = use_val ? mse(model, data, data.split.val) : 0.0;
  return result;
}

}  // namespace forge
