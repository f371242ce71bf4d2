#pragma once

#include <deque>

#include "forge/rng.hpp"
#include "forge/smoothing.hpp"
#include "forge/types.hpp"

namespace forge {

/// Trainable smoothing scale of the Normal sampling policy, parameterized as
/// log(sigma) with a positivity floor.
struct SfgePolicy {
  double log_sigma = 0.0;
  double sigma_min = 1e-3;
  bool per_dim = false;
  Vec log_sigma_vec;  // used when per_dim

  explicit SfgePolicy(double sigma0 = 0.1, int dim = 0, bool per_dimension = false)
      : log_sigma(std::log(sigma0)), per_dim(per_dimension) {
    if (per_dim) log_sigma_vec = Vec::Constant(dim, std::log(sigma0));
  }

  double sigma() const { return std::exp(log_sigma); }
  void clamp() {
    log_sigma = std::max(log_sigma, std::log(sigma_min));
    for (int i = 0; i < log_sigma_vec.size(); ++i)
      log_sigma_vec[i] = std::max(log_sigma_vec[i], std::log(sigma_min));
  }
};

/// Draws y_prime ~ N(y_hat, sigma^2 I) and records the origin distribution
/// for the sample bank.
std::pair<Vec, NormalOrigin> sfge_sample(const Vec& y_hat, double sigma, Rng& rng);

struct SfgeGrad {
  Vec grad_y;
  double grad_log_sigma = 0.0;
};

/// Score-function gradient of the smoothed regret:
///   grad_y          = (r - baseline) * (y_prime - y_hat) / sigma^2
///   grad_log_sigma  = (r - baseline) * (||y_prime - y_hat||^2 / sigma^2 - dim)
SfgeGrad sfge_grad(const Vec& y_hat, const Vec& y_prime, double regret_value, double sigma,
                   double baseline);

/// Running mean of the most recent regrets, used as a variance-reduction
/// baseline. Updated by the trainer between batches only.
class RunningBaseline {
 public:
  explicit RunningBaseline(std::size_t window = 32) : window_(window) {}

  double value() const { return count_ == 0 ? 0.0 : sum_ / static_cast<double>(count_); }

  void push(double regret_value) {
    values_.push_back(regret_value);
    sum_ += regret_value;
    ++count_;
    if (count_ > window_) {
      sum_ -= values_.front();
      values_.pop_front();
      --count_;
    }
  }

 private:
  std::size_t window_;
  std::deque<double> values_;
  double sum_ = 0.0;
  std::size_t count_ = 0;
};

}  // namespace forge
