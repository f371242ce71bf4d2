#pragma once

#include <atomic>
#include <cstdint>
#include <variant>
#include <vector>

#include "forge/types.hpp"

namespace forge {

/// Isotropic Normal sampling distribution N(mean, sigma^2 I).
struct NormalOrigin {
  Vec mean;
  double sigma = 0.0;
};

/// Uniform distribution over an axis-aligned box (Latin hypercube probes and
/// the archived realization point).
struct BoxOrigin {
  Vec lo, hi;
};

/// One archived evaluation of the regret black box: where it was evaluated,
/// the value, and the density it was sampled from.
struct RegretSample {
  Vec y_hat;
  double regret = 0.0;
  std::variant<NormalOrigin, BoxOrigin> origin;
  int owner = -1;  // donating example, for sample sharing; -1 = own sample
};

struct SampleBank {
  std::vector<RegretSample> samples;

  int size() const { return static_cast<int>(samples.size()); }
  bool empty() const { return samples.empty(); }
  void add(RegretSample s) { samples.push_back(std::move(s)); }
};

/// Latin hypercube sample: n points, one per stratum per dimension, jittered
/// uniformly within each stratum.
std::vector<Vec> lhs_sample(int dim, const Vec& lo, const Vec& hi, int n, std::uint64_t seed);

/// Number of pretraining probes: max(8, ceil(8 * log2(dim_y + 1))).
int pretrain_count(int dim_y);

/// Log density of the sample's origin distribution at a point.
double log_origin_density(const RegretSample& sample, const Vec& point);

/// Log of the aggregated proposal density (1/n) sum_k q_k(point). Throws on
/// an empty bank. May be -inf when every origin has zero mass at the point.
double log_aggregated_density(const SampleBank& bank, const Vec& point);

/// Linear-space aggregated density; underflows to 0 in high dimension, use
/// the log form for weight computations.
double aggregated_density(const SampleBank& bank, const Vec& point);

/// Importance weight phi(y_prime; y_hat, sigma) / q(y_prime). Zero-density
/// proposals clamp the weight to 0 and bump the underflow diagnostic.
double importance_weight(const Vec& y_hat, const Vec& y_prime, double sigma,
                         const SampleBank& bank);

/// Diagnostic counter for zero-proposal-density weight clamps.
std::atomic<long long>& weight_underflow_count();

struct SmoothedRegret {
  double value = 0.0;
  bool low_confidence = false;
  /// Normalized weights over the kept bank entries (parallel to `kept`).
  std::vector<double> weights;
  std::vector<int> kept;
};

/// Self-normalized importance-sampling estimate of the smoothed regret at
/// y_hat with smoothing stdev sigma, reusing every archived sample. When all
/// weights vanish, falls back to the regret of the nearest archived sample
/// and flags low confidence.
SmoothedRegret smoothed_regret_detail(const Vec& y_hat, double sigma, const SampleBank& bank);
double smoothed_regret(const Vec& y_hat, double sigma, const SampleBank& bank);

/// Smoothed-regret targets at each bank point, sharing the O(n^2) density
/// table. Row k is the estimate at bank.samples[k].y_hat.
Vec smoothed_targets(const SampleBank& bank, double sigma);

}  // namespace forge
