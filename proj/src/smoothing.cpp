#include "forge/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "forge/rng.hpp"

namespace forge {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLogDensityFloor = -690.77552789821368;  // log(1e-300)
constexpr double kWeightDropLog = -27.631021115928547;    // log(1e-12)

double log_normal_density(const Vec& point, const Vec& mean, double sigma) {
  const double d = static_cast<double>(point.size());
  const double sq = (point - mean).squaredNorm();
  return -0.5 * d * std::log(2.0 * M_PI * sigma * sigma) - sq / (2.0 * sigma * sigma);
}

}  // namespace

std::vector<Vec> lhs_sample(int dim, const Vec& lo, const Vec& hi, int n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("lhs_sample: n must be >= 1");
  if (lo.size() != dim || hi.size() != dim) throw ConfigError("lhs_sample: box dimension mismatch");
  for (int d = 0; d < dim; ++d) {
    if (!std::isfinite(lo[d]) || !std::isfinite(hi[d]) || hi[d] < lo[d])
      throw ConfigError("lhs_sample: box must be finite with hi >= lo");
  }

  Rng rng(seed);
  std::vector<Vec> points(n, Vec(dim));
  std::vector<int> strata(n);
  for (int d = 0; d < dim; ++d) {
    std::iota(strata.begin(), strata.end(), 0);
    rng.shuffle(strata);
    const double width = (hi[d] - lo[d]) / n;
    for (int k = 0; k < n; ++k)
      points[k][d] = lo[d] + (strata[k] + rng.uniform()) * width;
  }
  return points;
}

int pretrain_count(int dim_y) {
  if (dim_y < 1) throw ConfigError("pretrain_count: dim_y must be >= 1");
  const double raw = 8.0 * std::log2(static_cast<double>(dim_y) + 1.0);
  return std::max(8, static_cast<int>(std::ceil(raw)));
}

double log_origin_density(const RegretSample& sample, const Vec& point) {
  if (const auto* normal = std::get_if<NormalOrigin>(&sample.origin)) {
    return log_normal_density(point, normal->mean, normal->sigma);
  }
  const auto& box = std::get<BoxOrigin>(sample.origin);
  double log_vol = 0.0;
  for (int d = 0; d < point.size(); ++d) {
    if (point[d] < box.lo[d] || point[d] > box.hi[d]) return kNegInf;
    log_vol += std::log(std::max(box.hi[d] - box.lo[d], 1e-12));
  }
  return -log_vol;
}

double log_aggregated_density(const SampleBank& bank, const Vec& point) {
  if (bank.empty()) throw ConfigError("aggregated_density: empty sample bank");
  double max_log = kNegInf;
  std::vector<double> logs(bank.samples.size());
  for (std::size_t k = 0; k < bank.samples.size(); ++k) {
    logs[k] = log_origin_density(bank.samples[k], point);
    max_log = std::max(max_log, logs[k]);
  }
  if (max_log == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double l : logs) acc += std::exp(l - max_log);
  return max_log + std::log(acc) - std::log(static_cast<double>(bank.samples.size()));
}

double aggregated_density(const SampleBank& bank, const Vec& point) {
  const double l = log_aggregated_density(bank, point);
  return l == kNegInf ? 0.0 : std::exp(l);
}

std::atomic<long long>& weight_underflow_count() {
  static std::atomic<long long> count{0};
  return count;
}

double importance_weight(const Vec& y_hat, const Vec& y_prime, double sigma,
                         const SampleBank& bank) {
  const double log_q = log_aggregated_density(bank, y_prime);
  if (log_q == kNegInf) {
    weight_underflow_count().fetch_add(1, std::memory_order_relaxed);
    return 0.0;
  }
  const double log_target = log_normal_density(y_prime, y_hat, sigma);
  return std::exp(log_target - std::max(log_q, kLogDensityFloor));
}

namespace {

SmoothedRegret combine(const SampleBank& bank, const std::vector<double>& log_w,
                       const Vec& y_hat) {
  SmoothedRegret out;
  double max_log = kNegInf;
  for (double l : log_w) max_log = std::max(max_log, l);

  if (max_log == kNegInf) {
    // Every weight vanished: report the regret of the nearest archived sample.
    out.low_confidence = true;
    int nearest = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k < bank.size(); ++k) {
      const double d = (bank.samples[k].y_hat - y_hat).squaredNorm();
      if (d < best) {
        best = d;
        nearest = k;
      }
    }
    out.value = bank.samples[nearest].regret;
    out.kept = {nearest};
    out.weights = {1.0};
    return out;
  }

  double total = 0.0;
  for (int k = 0; k < bank.size(); ++k) {
    if (log_w[k] - max_log < kWeightDropLog) continue;  // below 1e-12 * max weight
    const double w = std::exp(log_w[k] - max_log);
    out.kept.push_back(k);
    out.weights.push_back(w);
    total += w;
  }
  double value = 0.0;
  for (std::size_t j = 0; j < out.kept.size(); ++j) {
    out.weights[j] /= total;
    value += out.weights[j] * bank.samples[out.kept[j]].regret;
  }
  out.value = value;
  return out;
}

}  // namespace

SmoothedRegret smoothed_regret_detail(const Vec& y_hat, double sigma, const SampleBank& bank) {
  if (bank.empty()) throw ConfigError("smoothed_regret: empty sample bank");
  if (sigma <= 0.0) throw ConfigError("smoothed_regret: sigma must be positive");

  std::vector<double> log_w(bank.samples.size(), kNegInf);
  for (int k = 0; k < bank.size(); ++k) {
    const double log_q = log_aggregated_density(bank, bank.samples[k].y_hat);
    if (log_q == kNegInf) {
      weight_underflow_count().fetch_add(1, std::memory_order_relaxed);
      continue;
    }
    const double log_target = log_normal_density(bank.samples[k].y_hat, y_hat, sigma);
    log_w[k] = log_target - std::max(log_q, kLogDensityFloor);
  }
  return combine(bank, log_w, y_hat);
}

double smoothed_regret(const Vec& y_hat, double sigma, const SampleBank& bank) {
  return smoothed_regret_detail(y_hat, sigma, bank).value;
}

Vec smoothed_targets(const SampleBank& bank, double sigma) {
  const int n = bank.size();
  if (n == 0) return Vec();
  if (sigma <= 0.0) throw ConfigError("smoothed_targets: sigma must be positive");

  // Shared tables: aggregated proposal density at every stored point, and
  // pairwise squared distances for the Normal targets.
  Vec log_q(n);
  for (int k = 0; k < n; ++k) log_q[k] = log_aggregated_density(bank, bank.samples[k].y_hat);
  Mat sq_dist(n, n);
  for (int a = 0; a < n; ++a) {
    sq_dist(a, a) = 0.0;
    for (int b = a + 1; b < n; ++b) {
      const double d = (bank.samples[a].y_hat - bank.samples[b].y_hat).squaredNorm();
      sq_dist(a, b) = d;
      sq_dist(b, a) = d;
    }
  }

  const double dim = static_cast<double>(bank.samples[0].y_hat.size());
  const double log_norm = -0.5 * dim * std::log(2.0 * M_PI * sigma * sigma);
  Vec targets(n);
  std::vector<double> log_w(n);
  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < n; ++j) {
      if (log_q[j] == kNegInf) {
        log_w[j] = kNegInf;
        continue;
      }
      const double log_target = log_norm - sq_dist(k, j) / (2.0 * sigma * sigma);
      log_w[j] = log_target - std::max(log_q[j], kLogDensityFloor);
    }
    targets[k] = combine(bank, log_w, bank.samples[k].y_hat).value;
  }
  return targets;
}

}  // namespace forge
