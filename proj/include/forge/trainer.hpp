#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "forge/predictor.hpp"
#include "forge/problems.hpp"
#include "forge/sfge.hpp"
#include "forge/smoothing.hpp"
#include "forge/surrogate.hpp"

namespace forge {

struct TrainerConfig {
  double beta = 1.0;            // confidence gate on standardized GP stdev
  int retrain_trigger = 40;     // new samples per surrogate before a refit
  double sigma_smooth = 0.1;    // smoothing stdev for GP targets
  int epochs = 300;
  int patience = 20;            // consecutive non-improving epochs tolerated
  double time_limit_seconds = -1.0;  // <0: none; covers pretraining + epochs

  // Ablation toggles.
  bool smoothing = true;
  bool pretrain = true;
  bool sharing = false;
  bool differentiation = true;
  bool surrogate_enabled = true;  // false: plain score-function training

  double d_max = -1.0;   // sharing radius; <0: 10% quantile of pairwise distances
  double alpha0 = 0.0;   // initial sharing downscale log-scale
  double sigma0 = 0.1;   // initial policy stdev
  bool sigma_per_dim = false;
  double lr = 1e-3;

  int pfl_epochs = 200;  // warm-start budget
  int pfl_patience = 20;
  double pfl_lr = 1e-3;
  int pfl_batch_size = 0;

  ArchConfig arch;
  int threads = 0;       // <=0: hardware default
  int gp_max_points = 512;
  GpConfig gp;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochRow {
  int epoch = 0;
  double train_regret = 0.0;  // mean of per-example loss terms (mixed sources)
  double val_regret = 0.0;    // true mean regret on the validation split
  long long solver_calls_cum = 0;
  double hit_rate = 0.0;      // fraction of gated decisions served by the GP
  double wall_time = 0.0;
};

struct RunMetrics {
  std::vector<EpochRow> rows;
  long long train_calls = 0;
  long long eval_calls = 0;
  double calls_per_instance = 0.0;
  int epochs_run = 0;
  double wall_time = 0.0;
  double best_val_regret = 0.0;
  double test_regret = 0.0;
  double surrogate_hit_rate = 0.0;
  std::string stop_reason = "max_epochs";  // max_epochs | patience | time_limit
};

struct TrainResult {
  PredictorModel model;
  RunMetrics metrics;
};

/// Mean true regret of the model over the given instance indices; every
/// regret costs two solver calls, tallied into `counter` when provided.
double evaluate(const ProblemSpec& spec, const PredictorModel& model, const Dataset& data,
                const std::vector<int>& idx, std::atomic<long long>* counter = nullptr,
                int threads = 1);

/// Orchestrates the surrogate-accelerated training loop: PFL warm start,
/// probe pretraining, confidence-gated surrogate/fallback gradients, GP
/// retraining, and early stopping on validation regret.
class Trainer {
 public:
  Trainer(const ProblemSpec& spec, const Dataset& data, TrainerConfig cfg);

  /// PFL warm start of the predictor (maximum-likelihood pretraining).
  void warm_start();

  /// Draws the global probe set, fills per-example banks and landscape
  /// vectors, computes normalization statistics, and fits the initial GPs.
  void pretrain();

  struct EpochStats {
    double mean_loss = 0.0;
    int surrogate_uses = 0;
    int fallback_uses = 0;
    long long calls = 0;
  };

  /// One full-batch pass over the train split followed by an Adam step on
  /// the predictor and the policy scale.
  EpochStats epoch_step(int epoch);

  /// Refits surrogates whose banks accumulated at least `retrain_trigger`
  /// new samples, donating new samples to nearby examples when sharing is
  /// enabled. Returns the number of refits.
  int maybe_retrain();

  /// Full training run; returns the best-validation model and metrics.
  TrainResult run();

  // Accessors (used by tests and the CLI).
  const PredictorModel& model() const { return model_; }
  PredictorModel& model() { return model_; }
  const SfgePolicy& policy() const { return policy_; }
  double policy_sigma() const { return policy_.sigma(); }
  const std::vector<Vec>& probes() const { return probes_; }
  const SampleBank& bank(int train_pos) const { return banks_[train_pos]; }
  const GpSurrogate& gp(int train_pos) const { return gps_[train_pos]; }
  const LandscapeVector& landscape(int train_pos) const { return landscapes_[train_pos]; }
  const GpNormStats& stats() const { return stats_; }
  long long train_calls() const { return train_calls_.load(); }
  long long eval_calls() const { return eval_calls_.load(); }
  int train_size() const { return static_cast<int>(data_.split.train.size()); }
  double d_max() const { return d_max_; }
  double alpha() const { return alpha_; }
  double evaluate_split(const std::vector<int>& idx);
  bool pretrained() const { return pretrained_; }

  /// Training-side regret of instance `instance_idx` at a prediction; the
  /// solve at the realization is cached per instance, so repeated
  /// evaluations cost one solver call each.
  double training_regret(int instance_idx, const Vec& y_hat);

 private:
  void auto_d_max();
  void fit_surrogate(int train_pos, bool warm);
  void default_stats();

  const ProblemSpec& spec_;
  const Dataset& data_;
  TrainerConfig cfg_;

  PredictorModel model_;
  AdamState adam_theta_;
  SfgePolicy policy_;
  AdamState adam_sigma_;
  RunningBaseline baseline_;

  std::vector<Vec> probes_;
  std::vector<SampleBank> banks_;        // per train example
  std::vector<GpSurrogate> gps_;         // per train example
  std::vector<LandscapeVector> landscapes_;
  std::vector<int> new_samples_;         // appended since last fit
  std::vector<int> donated_upto_;        // bank watermark already donated
  GpNormStats stats_;
  double d_max_ = -1.0;
  double alpha_ = 0.0;
  bool pretrained_ = false;

  std::vector<double> base_cost_;        // g(y_i, z*(y_i)) per instance
  std::vector<char> base_cached_;

  std::atomic<long long> train_calls_{0};
  std::atomic<long long> eval_calls_{0};
  long long surrogate_uses_total_ = 0;
  long long fallback_uses_total_ = 0;

  // Reused per-epoch buffers.
  Mat grad_slots_;
  std::vector<double> loss_slots_, sigma_grad_slots_, regret_slots_;
  std::vector<char> fallback_slots_;
};

}  // namespace forge
