#include "forge/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "forge/parallel.hpp"

namespace forge {

namespace {

constexpr std::uint64_t kStreamInit = 0xf001;
constexpr std::uint64_t kStreamProbes = 0xf003;
constexpr std::uint64_t kStreamEpoch = 0xf004;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

void TrainerConfig::validate() const {
  if (beta <= 0.0) throw ConfigError("beta must be positive");
  if (retrain_trigger < 1) throw ConfigError("retrain_trigger must be >= 1");
  if (epochs < 0 || patience < 0) throw ConfigError("epochs and patience must be non-negative");
  if (sigma0 <= 0.0 || sigma_smooth <= 0.0) throw ConfigError("sigma parameters must be positive");
  if (lr <= 0.0 || pfl_lr <= 0.0) throw ConfigError("learning rates must be positive");
  if (pfl_epochs < 0) throw ConfigError("pfl_epochs must be non-negative");
  if (gp_max_points < 8) throw ConfigError("gp_max_points must be >= 8");
  if (sharing && d_max == 0.0) throw ConfigError("d_max must be positive when sharing");
  if (sigma_per_dim && surrogate_enabled)
    throw ConfigError("per-dimension sigma requires the plain score-function mode");
}

double evaluate(const ProblemSpec& spec, const PredictorModel& model, const Dataset& data,
                const std::vector<int>& idx, std::atomic<long long>* counter, int threads) {
  if (idx.empty()) return 0.0;
  std::vector<double> slots(idx.size());
  parallel_for(static_cast<std::int64_t>(idx.size()), threads, [&](std::int64_t k) {
    const Instance& inst = data.instances[idx[static_cast<std::size_t>(k)]];
    slots[static_cast<std::size_t>(k)] = regret(spec, inst.y, model.forward(inst.x));
    if (counter) counter->fetch_add(2, std::memory_order_relaxed);
  });
  double total = 0.0;
  for (double r : slots) total += r;
  return total / static_cast<double>(idx.size());
}

Trainer::Trainer(const ProblemSpec& spec, const Dataset& data, TrainerConfig cfg)
    : spec_(spec),
      data_(data),
      cfg_(std::move(cfg)),
      policy_(cfg_.sigma0, spec.dim_y, cfg_.sigma_per_dim) {
  cfg_.validate();
  spec_.validate();
  if (data_.split.train.empty()) throw ConfigError("trainer: empty train split");

  model_ = PredictorModel(spec_.dim_x, spec_.dim_y, cfg_.arch,
                          stream_seed(cfg_.seed, kStreamInit));
  model_.fit_input_stats(data_);
  adam_theta_.lr = cfg_.lr;
  adam_sigma_.lr = cfg_.lr;

  const int m = train_size();
  banks_.resize(m);
  gps_.resize(m);
  landscapes_.resize(m);
  new_samples_.assign(m, 0);
  donated_upto_.assign(m, 0);
  base_cost_.assign(data_.instances.size(), 0.0);
  base_cached_.assign(data_.instances.size(), 0);
  alpha_ = cfg_.alpha0;
  d_max_ = cfg_.d_max;
  default_stats();
}

void Trainer::default_stats() {
  // Fallback statistics from the train-split realizations, used when
  // pretraining is disabled.
  const auto& idx = data_.split.train;
  Vec mean = Vec::Zero(spec_.dim_y);
  for (int i : idx) mean += data_.instances[i].y;
  mean /= static_cast<double>(idx.size());
  Vec var = Vec::Zero(spec_.dim_y);
  for (int i : idx) var += (data_.instances[i].y - mean).cwiseAbs2();
  var /= static_cast<double>(idx.size());
  stats_.in_mean = mean;
  stats_.in_std = var.cwiseSqrt();
  for (int d = 0; d < spec_.dim_y; ++d)
    if (stats_.in_std[d] <= 0.0) stats_.in_std[d] = 1.0;
  stats_.out_mean = 0.0;
  stats_.out_std = 1.0;
}

void Trainer::warm_start() {
  if (cfg_.pfl_epochs <= 0) return;
  PflConfig pfl;
  pfl.epochs = cfg_.pfl_epochs;
  pfl.patience = cfg_.pfl_patience;
  pfl.lr = cfg_.pfl_lr;
  pfl.batch_size = cfg_.pfl_batch_size;
  pfl_train(model_, data_, pfl);
}

double Trainer::training_regret(int instance_idx, const Vec& y_hat) {
  const Instance& inst = data_.instances[instance_idx];
  if (!base_cached_[instance_idx]) {
    const Decision at_truth = solve(spec_, inst.y);
    train_calls_.fetch_add(1, std::memory_order_relaxed);
    base_cost_[instance_idx] = true_cost(spec_, inst.y, at_truth);
    base_cached_[instance_idx] = 1;
  }
  const Decision at_pred = solve(spec_, y_hat);
  train_calls_.fetch_add(1, std::memory_order_relaxed);
  return true_cost(spec_, inst.y, at_pred) - base_cost_[instance_idx];
}

void Trainer::auto_d_max() {
  const int m = train_size();
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(m) * (m - 1) / 2);
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j)
      dists.push_back((landscapes_[i].v - landscapes_[j].v).norm());
  if (dists.empty()) {
    d_max_ = 1.0;
    return;
  }
  const auto k = static_cast<std::size_t>(0.1 * static_cast<double>(dists.size() - 1));
  std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(k), dists.end());
  d_max_ = dists[k];
}

void Trainer::fit_surrogate(int train_pos, bool warm) {
  const SampleBank& bank = banks_[train_pos];
  const int n = bank.size();
  if (n == 0) {
    gps_[train_pos].mark_unusable();
    return;
  }

  // Bound refit cost: keep the pretraining block plus the most recent tail.
  std::vector<int> sel;
  if (n <= cfg_.gp_max_points) {
    sel.resize(n);
    for (int k = 0; k < n; ++k) sel[k] = k;
  } else {
    const int head_avail = pretrained_ ? static_cast<int>(probes_.size()) + 1 : 0;
    const int head = std::min(head_avail, cfg_.gp_max_points / 2);
    const int tail = cfg_.gp_max_points - head;
    for (int k = 0; k < head; ++k) sel.push_back(k);
    for (int k = n - tail; k < n; ++k) sel.push_back(k);
  }

  SampleBank sub;
  sub.samples.reserve(sel.size());
  for (int k : sel) sub.samples.push_back(bank.samples[k]);

  Vec targets;
  if (cfg_.smoothing) {
    targets = smoothed_targets(sub, cfg_.sigma_smooth);
  } else {
    targets = Vec(sub.size());
    for (int k = 0; k < sub.size(); ++k) targets[k] = sub.samples[k].regret;
  }

  Mat points(sub.size(), spec_.dim_y);
  std::vector<int> owners(sub.samples.size());
  for (int k = 0; k < sub.size(); ++k) {
    points.row(k) = sub.samples[k].y_hat.transpose();
    owners[static_cast<std::size_t>(k)] = sub.samples[k].owner;
  }

  GpSurrogate& gp = gps_[train_pos];
  if (!gp.fitted() && gp.dim() == 0) gp = GpSurrogate(spec_.dim_y, stats_);
  gp.set_data(std::move(points), std::move(targets), std::move(owners), train_pos);
  const bool sharing = cfg_.sharing && pretrained_;
  gp.fit(cfg_.gp, warm, sharing ? &landscapes_ : nullptr, sharing ? &alpha_ : nullptr,
         sharing);
  new_samples_[train_pos] = 0;
}

void Trainer::pretrain() {
  const int m = train_size();
  if (!cfg_.pretrain || !cfg_.surrogate_enabled) {
    pretrained_ = false;
    return;
  }

  // Probe box: train-split realization range inflated by 20%.
  Vec lo = Vec::Constant(spec_.dim_y, std::numeric_limits<double>::infinity());
  Vec hi = Vec::Constant(spec_.dim_y, -std::numeric_limits<double>::infinity());
  for (int i : data_.split.train) {
    lo = lo.cwiseMin(data_.instances[i].y);
    hi = hi.cwiseMax(data_.instances[i].y);
  }
  for (int d = 0; d < spec_.dim_y; ++d) {
    const double center = 0.5 * (lo[d] + hi[d]);
    double half = 0.5 * (hi[d] - lo[d]);
    if (half <= 0.0) half = std::max(0.5, 0.1 * std::abs(center));
    lo[d] = center - 1.2 * half;
    hi[d] = center + 1.2 * half;
  }

  const int n_probes = pretrain_count(spec_.dim_y);
  probes_ = lhs_sample(spec_.dim_y, lo, hi, n_probes, stream_seed(cfg_.seed, kStreamProbes));
  const BoxOrigin box{lo, hi};

  parallel_for(m, cfg_.threads, [&](std::int64_t k) {
    const int pos = static_cast<int>(k);
    const int idx = data_.split.train[static_cast<std::size_t>(pos)];
    landscapes_[pos] =
        landscape_vector([&](const Vec& p) { return training_regret(idx, p); }, probes_);
    SampleBank& bank = banks_[pos];
    bank.samples.clear();
    for (int j = 0; j < n_probes; ++j)
      bank.add({probes_[static_cast<std::size_t>(j)], landscapes_[pos].v[j], box, -1});
    // The realization itself anchors the regret minimum at zero cost.
    bank.add({data_.instances[idx].y, 0.0, box, -1});
  });

  // Input normalization from the probe set, output standardization from the
  // pooled pretraining regrets.
  Vec pm = Vec::Zero(spec_.dim_y);
  for (const Vec& p : probes_) pm += p;
  pm /= static_cast<double>(n_probes);
  Vec pv = Vec::Zero(spec_.dim_y);
  for (const Vec& p : probes_) pv += (p - pm).cwiseAbs2();
  pv /= static_cast<double>(n_probes);
  stats_.in_mean = pm;
  stats_.in_std = pv.cwiseSqrt();
  for (int d = 0; d < spec_.dim_y; ++d)
    if (stats_.in_std[d] <= 0.0) stats_.in_std[d] = 1.0;

  double rm = 0.0;
  long count = 0;
  for (int pos = 0; pos < m; ++pos) {
    rm += landscapes_[pos].v.sum();
    count += landscapes_[pos].v.size() + 1;  // + the zero at the realization
  }
  rm /= static_cast<double>(count);
  double rv = 0.0;
  for (int pos = 0; pos < m; ++pos) {
    rv += (landscapes_[pos].v.array() - rm).square().sum();
    rv += rm * rm;
  }
  rv /= static_cast<double>(count);
  stats_.out_mean = rm;
  stats_.out_std = rv > 0.0 ? std::sqrt(rv) : 1.0;

  pretrained_ = true;
  if (cfg_.sharing && d_max_ < 0.0) auto_d_max();

  if (cfg_.sharing) {
    for (int pos = 0; pos < m; ++pos) fit_surrogate(pos, false);
  } else {
    parallel_for(m, cfg_.threads, [&](std::int64_t k) {
      fit_surrogate(static_cast<int>(k), false);
    });
  }
  for (int pos = 0; pos < m; ++pos) donated_upto_[pos] = banks_[pos].size();
}

Trainer::EpochStats Trainer::epoch_step(int epoch) {
  const int m = train_size();
  const Eigen::Index n_theta = model_.params().size();
  if (grad_slots_.rows() != m || grad_slots_.cols() != n_theta)
    grad_slots_ = Mat(m, n_theta);
  loss_slots_.assign(static_cast<std::size_t>(m), 0.0);
  sigma_grad_slots_.assign(static_cast<std::size_t>(m), 0.0);
  regret_slots_.assign(static_cast<std::size_t>(m), std::numeric_limits<double>::quiet_NaN());
  fallback_slots_.assign(static_cast<std::size_t>(m), 0);

  const double baseline = baseline_.value();  // frozen for the whole batch
  const double sigma = policy_.sigma();
  const long long calls_before = train_calls_.load();

  Mat sigma_grad_vec;
  if (policy_.per_dim)
    sigma_grad_vec = Mat::Zero(m, spec_.dim_y);

  parallel_for(m, cfg_.threads, [&](std::int64_t k) {
    const int pos = static_cast<int>(k);
    const int idx = data_.split.train[static_cast<std::size_t>(pos)];
    const Instance& inst = data_.instances[idx];
    Rng rng(stream_seed(cfg_.seed, kStreamEpoch, static_cast<std::uint64_t>(idx),
                        static_cast<std::uint64_t>(epoch)));
    const Vec y_hat = model_.forward(inst.x);

    bool gated = false;
    GpSurrogate::Prediction pred;
    if (cfg_.surrogate_enabled && gps_[pos].usable()) {
      pred = gps_[pos].predict(y_hat);
      gated = pred.std < cfg_.beta;
    }

    if (gated) {
      if (cfg_.differentiation) {
        loss_slots_[static_cast<std::size_t>(pos)] = pred.mean;
        grad_slots_.row(pos) = backward(model_, inst.x, gps_[pos].mean_gradient(y_hat)).transpose();
        sigma_grad_slots_[static_cast<std::size_t>(pos)] = 0.0;
      } else {
        // Score-function form with the surrogate mean as the reward.
        auto [y_prime, origin] = sfge_sample(y_hat, sigma, rng);
        const double reward = gps_[pos].predict(y_prime).mean;
        const SfgeGrad g = sfge_grad(y_hat, y_prime, reward, sigma, baseline);
        loss_slots_[static_cast<std::size_t>(pos)] = reward;
        grad_slots_.row(pos) = backward(model_, inst.x, g.grad_y).transpose();
        sigma_grad_slots_[static_cast<std::size_t>(pos)] = g.grad_log_sigma;
        regret_slots_[static_cast<std::size_t>(pos)] = reward;
      }
    } else {
      Vec y_prime;
      if (policy_.per_dim) {
        y_prime = y_hat;
        for (int d = 0; d < spec_.dim_y; ++d)
          y_prime[d] += std::exp(policy_.log_sigma_vec[d]) * rng.normal();
      } else {
        y_prime = sfge_sample(y_hat, sigma, rng).first;
      }
      const double r = training_regret(idx, y_prime);
      if (cfg_.surrogate_enabled) {
        banks_[pos].add({y_prime, r, NormalOrigin{y_hat, sigma}, -1});
        ++new_samples_[pos];
      }
      if (policy_.per_dim) {
        const double adv = r - baseline;
        Vec gy(spec_.dim_y);
        for (int d = 0; d < spec_.dim_y; ++d) {
          const double sd = std::exp(policy_.log_sigma_vec[d]);
          const double delta = y_prime[d] - y_hat[d];
          gy[d] = adv * delta / (sd * sd);
          sigma_grad_vec(pos, d) = adv * (delta * delta / (sd * sd) - 1.0);
        }
        grad_slots_.row(pos) = backward(model_, inst.x, gy).transpose();
      } else {
        const SfgeGrad g = sfge_grad(y_hat, y_prime, r, sigma, baseline);
        grad_slots_.row(pos) = backward(model_, inst.x, g.grad_y).transpose();
        sigma_grad_slots_[static_cast<std::size_t>(pos)] = g.grad_log_sigma;
      }
      loss_slots_[static_cast<std::size_t>(pos)] = r;
      regret_slots_[static_cast<std::size_t>(pos)] = r;
      fallback_slots_[static_cast<std::size_t>(pos)] = 1;
    }
  });

  // Deterministic reduction in example order, then one optimizer step.
  Vec grad = Vec::Zero(n_theta);
  for (int pos = 0; pos < m; ++pos) grad += grad_slots_.row(pos).transpose();
  grad /= static_cast<double>(m);
  adam_step(adam_theta_, model_.params(), grad);

  if (policy_.per_dim) {
    Vec g = Vec::Zero(spec_.dim_y);
    for (int pos = 0; pos < m; ++pos) g += sigma_grad_vec.row(pos).transpose();
    g /= static_cast<double>(m);
    adam_step(adam_sigma_, policy_.log_sigma_vec, g);
  } else {
    double g = 0.0;
    for (int pos = 0; pos < m; ++pos) g += sigma_grad_slots_[static_cast<std::size_t>(pos)];
    Vec p(1), gv(1);
    p[0] = policy_.log_sigma;
    gv[0] = g / static_cast<double>(m);
    adam_step(adam_sigma_, p, gv);
    policy_.log_sigma = p[0];
  }
  policy_.clamp();

  EpochStats stats;
  for (int pos = 0; pos < m; ++pos) {
    stats.mean_loss += loss_slots_[static_cast<std::size_t>(pos)];
    if (fallback_slots_[static_cast<std::size_t>(pos)])
      ++stats.fallback_uses;
    else
      ++stats.surrogate_uses;
    const double r = regret_slots_[static_cast<std::size_t>(pos)];
    if (!std::isnan(r)) baseline_.push(r);
  }
  stats.mean_loss /= static_cast<double>(m);
  stats.calls = train_calls_.load() - calls_before;
  surrogate_uses_total_ += stats.surrogate_uses;
  fallback_uses_total_ += stats.fallback_uses;
  return stats;
}

int Trainer::maybe_retrain() {
  if (!cfg_.surrogate_enabled) return 0;
  const int m = train_size();

  std::vector<int> due;
  for (int pos = 0; pos < m; ++pos)
    if (new_samples_[pos] >= cfg_.retrain_trigger && !banks_[pos].empty()) due.push_back(pos);
  if (due.empty()) return 0;

  if (cfg_.sharing && pretrained_) {
    // Donate the new own samples of due surrogates to nearby examples.
    struct Donation {
      int to;
      RegretSample sample;
    };
    std::vector<Donation> donations;
    for (int pos : due) {
      const int from = donated_upto_[pos];
      const int upto = banks_[pos].size();
      for (int s = from; s < upto; ++s) {
        const RegretSample& sample = banks_[pos].samples[static_cast<std::size_t>(s)];
        if (sample.owner != -1) continue;
        for (int other = 0; other < m; ++other) {
          if (other == pos) continue;
          if ((landscapes_[pos].v - landscapes_[other].v).norm() <= d_max_) {
            RegretSample copy = sample;
            copy.owner = pos;
            donations.push_back({other, std::move(copy)});
          }
        }
      }
      donated_upto_[pos] = upto;
    }
    for (Donation& d : donations) {
      banks_[d.to].add(std::move(d.sample));
      ++new_samples_[d.to];
    }
    // Donations can push other surrogates past the trigger.
    due.clear();
    for (int pos = 0; pos < m; ++pos)
      if (new_samples_[pos] >= cfg_.retrain_trigger && !banks_[pos].empty()) due.push_back(pos);
    for (int pos : due) fit_surrogate(pos, true);  // serial: alpha has one writer
  } else {
    std::vector<int> jobs = due;
    parallel_for(static_cast<std::int64_t>(jobs.size()), cfg_.threads, [&](std::int64_t k) {
      fit_surrogate(jobs[static_cast<std::size_t>(k)], true);
    });
  }
  return static_cast<int>(due.size());
}

double Trainer::evaluate_split(const std::vector<int>& idx) {
  return evaluate(spec_, model_, data_, idx, &eval_calls_, cfg_.threads);
}

TrainResult Trainer::run() {
  warm_start();

  const auto t0 = Clock::now();
  const auto exceeded = [&]() {
    return cfg_.time_limit_seconds >= 0.0 && seconds_since(t0) >= cfg_.time_limit_seconds;
  };

  RunMetrics metrics;
  const bool has_val = !data_.split.val.empty();

  if (exceeded()) {
    metrics.stop_reason = "time_limit";
    metrics.wall_time = seconds_since(t0);
    metrics.test_regret = evaluate_split(data_.split.test);
    metrics.eval_calls = eval_calls_.load();
    return {model_, metrics};
  }

  pretrain();

  double best_val = has_val ? evaluate_split(data_.split.val)
                            : std::numeric_limits<double>::infinity();
  Vec best_theta = model_.params();
  metrics.best_val_regret = best_val;
  int bad_epochs = 0;

  for (int epoch = 1; epoch <= cfg_.epochs; ++epoch) {
    if (exceeded()) {
      metrics.stop_reason = "time_limit";
      break;
    }
    const EpochStats stats = epoch_step(epoch);
    maybe_retrain();
    metrics.epochs_run = epoch;

    const double val = has_val ? evaluate_split(data_.split.val) : stats.mean_loss;
    EpochRow row;
    row.epoch = epoch;
    row.train_regret = stats.mean_loss;
    row.val_regret = val;
    row.solver_calls_cum = train_calls_.load();
    row.hit_rate = static_cast<double>(stats.surrogate_uses) /
                   static_cast<double>(stats.surrogate_uses + stats.fallback_uses);
    row.wall_time = seconds_since(t0);
    metrics.rows.push_back(row);

    if (has_val) {
      if (val < best_val) {
        best_val = val;
        best_theta = model_.params();
        bad_epochs = 0;
      } else {
        ++bad_epochs;
      }
      if (bad_epochs >= cfg_.patience) {
        metrics.stop_reason = "patience";
        break;
      }
    }
  }
  if (has_val) model_.params() = best_theta;
  metrics.best_val_regret = best_val;
  metrics.train_calls = train_calls_.load();
  metrics.calls_per_instance =
      static_cast<double>(metrics.train_calls) / static_cast<double>(train_size());
  const long long uses = surrogate_uses_total_ + fallback_uses_total_;
  metrics.surrogate_hit_rate =
      uses == 0 ? 0.0 : static_cast<double>(surrogate_uses_total_) / static_cast<double>(uses);
  metrics.test_regret = evaluate_split(data_.split.test);
  metrics.eval_calls = eval_calls_.load();
  metrics.wall_time = seconds_since(t0);
  return {model_, metrics};
}

}  // namespace forge
