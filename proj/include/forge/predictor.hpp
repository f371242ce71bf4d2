#pragma once

#include <cstdint>
#include <vector>

#include "forge/problems.hpp"
#include "forge/types.hpp"

namespace forge {

struct ArchConfig {
  std::vector<int> hidden;  // empty: single affine layer (linear regression)
  bool relu = true;         // activation after each hidden layer
};

/// Small feedforward parameter predictor h_theta: x -> y_hat. Parameters live
/// in one flat vector so the optimizer and serialization stay trivial.
/// Inputs are standardized with dataset statistics before the first layer.
class PredictorModel {
 public:
  struct Layer {
    int in = 0, out = 0;
    int w_offset = 0, b_offset = 0;  // row-major W block, then bias block
    bool relu = false;
  };

  PredictorModel() = default;
  PredictorModel(int dim_x, int dim_y, const ArchConfig& arch, std::uint64_t seed);

  Vec forward(const Vec& x) const;

  int dim_x() const { return dim_x_; }
  int dim_y() const { return dim_y_; }
  const Vec& params() const { return theta_; }
  Vec& params() { return theta_; }
  const std::vector<Layer>& layers() const { return layers_; }
  const Vec& x_mean() const { return x_mean_; }
  const Vec& x_std() const { return x_std_; }
  const ArchConfig& arch() const { return arch_; }

  void set_input_stats(Vec mean, Vec std);
  /// Per-dimension mean/std of x over the train split (degenerate dims get std 1).
  void fit_input_stats(const Dataset& data);

 private:
  int dim_x_ = 0, dim_y_ = 0;
  ArchConfig arch_;
  std::vector<Layer> layers_;
  Vec theta_;
  Vec x_mean_, x_std_;
};

/// Gradient of grad_y . h_theta(x) with respect to theta. Throws on
/// non-finite grad_y or shape mismatch.
Vec backward(const PredictorModel& model, const Vec& x, const Vec& grad_y);

struct AdamState {
  Vec m, v;
  long long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void init(Eigen::Index n) {
    m = Vec::Zero(n);
    v = Vec::Zero(n);
    step = 0;
  }
};

/// Standard bias-corrected Adam update, applied in place.
void adam_step(AdamState& state, Vec& params, const Vec& grad);

struct PflConfig {
  int epochs = 200;
  int patience = 20;
  double lr = 1e-3;
  int batch_size = 0;  // 0: full batch
};

struct PflResult {
  double train_mse = 0.0;
  double val_mse = 0.0;
  int epochs_run = 0;
};

/// Minimizes mean squared error on the train split with early stopping on
/// validation MSE; restores the best-validation parameters.
PflResult pfl_train(PredictorModel& model, const Dataset& data, const PflConfig& cfg);

/// Per-coordinate mean squared error of the model over the given indices.
double mse(const PredictorModel& model, const Dataset& data, const std::vector<int>& idx);

}  // namespace forge
