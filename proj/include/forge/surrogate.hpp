#pragma once

#include <Eigen/Cholesky>
#include <functional>
#include <vector>

#include "forge/types.hpp"

namespace forge {

/// s_out^2 * exp(-||a-b||^2 / (2 l^2)).
double rbf_kernel(const Vec& a, const Vec& b, double length_scale, double output_scale);

/// Covariance downscaling between rows donated by different examples:
/// k_old / (1 + e^alpha * ||v_i - v_j||). Unchanged when the landscape
/// vectors coincide.
double shared_kernel(double k_old, const Vec& v_i, const Vec& v_j, double alpha);

/// Regrets of one example at the global probe points.
struct LandscapeVector {
  Vec v;
};

/// Evaluates the regret oracle at every probe.
LandscapeVector landscape_vector(const std::function<double(const Vec&)>& regret_at,
                                 const std::vector<Vec>& probes);

struct GpNormStats {
  Vec in_mean, in_std;     // per-dimension prediction-space normalization
  double out_mean = 0.0;   // regret standardization
  double out_std = 1.0;
};

struct GpConfig {
  int iters = 50;
  double step = 0.05;
  double max_update = 0.25;  // per-coordinate clamp on log-space steps
  double noise_floor = 1e-6;
  double jitter0 = 1e-8;
  double jitter_max = 1e-4;
};

/// Per-example Gaussian-process regression of smoothed regret: isotropic RBF
/// kernel, marginal-likelihood fit with a LogNormal(log(dim)/2, 1) prior on
/// the length-scale, cached Cholesky factorization, and optional covariance
/// downscaling for donated samples.
class GpSurrogate {
 public:
  GpSurrogate() = default;
  GpSurrogate(int dim, GpNormStats stats);

  /// Raw-space training points and targets; owners name the donating example
  /// per row (self_owner for own samples) for sharing downscale factors.
  void set_data(Mat points_raw, Vec targets_raw, std::vector<int> owners, int self_owner);

  struct FitInfo {
    bool ok = false;
    double log_marginal = 0.0;
    int dropped_rows = 0;
  };

  /// Maximizes log marginal likelihood plus the length-scale log-prior by
  /// fixed-iteration gradient ascent in log-hyperparameter space. On
  /// factorization failure escalates jitter, then drops donated rows; a fit
  /// that still fails marks the surrogate unusable.
  /// When `alpha` is given alongside the landscape table, donated rows are
  /// downscaled; with optimize_alpha the global scale is ascended jointly.
  FitInfo fit(const GpConfig& cfg, bool warm_start,
              const std::vector<LandscapeVector>* landscapes = nullptr, double* alpha = nullptr,
              bool optimize_alpha = false);

  struct Prediction {
    double mean = 0.0;  // de-standardized (raw regret units)
    double std = 0.0;   // standardized units, compared against beta
  };

  Prediction predict(const Vec& y_hat_raw) const;

  /// Analytic gradient of the de-standardized predictive mean with respect
  /// to the raw prediction, including the normalization chain factor.
  Vec mean_gradient(const Vec& y_hat_raw) const;

  bool fitted() const { return fitted_; }
  bool usable() const { return fitted_ && !broken_; }
  void mark_unusable() { broken_ = true; }
  int n_points() const { return static_cast<int>(x_norm_.rows()); }
  int dim() const { return dim_; }

  double length_scale() const { return std::exp(log_len_); }
  double output_scale() const { return std::exp(log_out_); }
  double noise_var() const { return std::exp(log_noise_); }
  double log_marginal() const { return log_marginal_; }
  const GpNormStats& stats() const { return stats_; }

 private:
  Vec normalize(const Vec& raw) const;
  bool factorize(double jitter);
  void build_kernel_matrix();
  double alpha_used_ = 0.0;

  int dim_ = 0;
  GpNormStats stats_;
  Mat x_norm_;           // n x dim, normalized inputs
  Vec t_std_;            // standardized targets
  std::vector<int> owners_;
  int self_owner_ = -1;
  const std::vector<LandscapeVector>* landscapes_ = nullptr;

  double log_len_ = 0.0, log_out_ = 0.0, log_noise_ = 0.0;
  Mat kernel_;           // downscaled K (no noise)
  Mat share_;            // per-pair downscale factors (empty when unused)
  Vec row_factor_;       // downscale of each row against the own example
  Eigen::LLT<Mat> chol_;
  Vec weights_;          // (K + sigma_n^2 I)^-1 t
  double log_marginal_ = 0.0;
  bool fitted_ = false;
  bool broken_ = false;
  bool warm_ = false;    // have hyperparameters from a previous fit
};

}  // namespace forge
