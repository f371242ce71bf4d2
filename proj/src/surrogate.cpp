#include "forge/surrogate.hpp"

#include <cmath>
#include <limits>

namespace forge {

double rbf_kernel(const Vec& a, const Vec& b, double length_scale, double output_scale) {
  if (a.size() != b.size()) throw ConfigError("rbf_kernel: dimension mismatch");
  const double sq = (a - b).squaredNorm();
  return output_scale * output_scale * std::exp(-sq / (2.0 * length_scale * length_scale));
}

double shared_kernel(double k_old, const Vec& v_i, const Vec& v_j, double alpha) {
  if (v_i.size() != v_j.size()) throw ConfigError("shared_kernel: landscape size mismatch");
  const double dist = (v_i - v_j).norm();
  return k_old / (1.0 + std::exp(alpha) * dist);
}

LandscapeVector landscape_vector(const std::function<double(const Vec&)>& regret_at,
                                 const std::vector<Vec>& probes) {
  LandscapeVector lv;
  lv.v = Vec(static_cast<Eigen::Index>(probes.size()));
  for (std::size_t k = 0; k < probes.size(); ++k) lv.v[static_cast<Eigen::Index>(k)] = regret_at(probes[k]);
  return lv;
}

GpSurrogate::GpSurrogate(int dim, GpNormStats stats) : dim_(dim), stats_(std::move(stats)) {
  if (stats_.in_mean.size() != dim || stats_.in_std.size() != dim)
    throw ConfigError("gp: normalization stats dimension mismatch");
  for (int d = 0; d < dim; ++d)
    if (stats_.in_std[d] <= 0.0) stats_.in_std[d] = 1.0;
  if (stats_.out_std <= 0.0) stats_.out_std = 1.0;
}

Vec GpSurrogate::normalize(const Vec& raw) const {
  return (raw - stats_.in_mean).cwiseQuotient(stats_.in_std);
}

void GpSurrogate::set_data(Mat points_raw, Vec targets_raw, std::vector<int> owners,
                           int self_owner) {
  const int n = static_cast<int>(points_raw.rows());
  if (points_raw.cols() != dim_) throw ConfigError("gp: point dimension mismatch");
  if (targets_raw.size() != n || static_cast<int>(owners.size()) != n)
    throw ConfigError("gp: data size mismatch");
  x_norm_ = Mat(n, dim_);
  for (int r = 0; r < n; ++r)
    x_norm_.row(r) = normalize(points_raw.row(r).transpose()).transpose();
  t_std_ = (targets_raw.array() - stats_.out_mean).matrix() / stats_.out_std;
  owners_ = std::move(owners);
  self_owner_ = self_owner;
  fitted_ = false;
  broken_ = false;
}

void GpSurrogate::build_kernel_matrix() {
  const int n = static_cast<int>(x_norm_.rows());
  const double len2 = std::exp(2.0 * log_len_);
  const double out2 = std::exp(2.0 * log_out_);
  kernel_ = Mat(n, n);
  for (int a = 0; a < n; ++a) {
    kernel_(a, a) = out2;
    for (int b = a + 1; b < n; ++b) {
      const double sq = (x_norm_.row(a) - x_norm_.row(b)).squaredNorm();
      double k = out2 * std::exp(-sq / (2.0 * len2));
      if (share_.size() > 0) k *= share_(a, b);
      kernel_(a, b) = k;
      kernel_(b, a) = k;
    }
    if (share_.size() > 0) kernel_(a, a) *= share_(a, a);
  }
}

bool GpSurrogate::factorize(double jitter) {
  const int n = static_cast<int>(x_norm_.rows());
  Mat a = kernel_;
  a.diagonal().array() += std::exp(log_noise_) + jitter;
  chol_.compute(a);
  if (chol_.info() != Eigen::Success) return false;
  weights_ = chol_.solve(t_std_);
  double log_det = 0.0;
  for (int i = 0; i < n; ++i) log_det += std::log(chol_.matrixLLT()(i, i));
  log_marginal_ = -0.5 * t_std_.dot(weights_) - log_det -
                  0.5 * n * std::log(2.0 * M_PI);
  return true;
}

GpSurrogate::FitInfo GpSurrogate::fit(const GpConfig& cfg, bool warm_start,
                                      const std::vector<LandscapeVector>* landscapes, double* alpha,
                                      bool optimize_alpha) {
  FitInfo info;
  const int n = static_cast<int>(x_norm_.rows());
  if (n == 0) {
    broken_ = true;
    return info;
  }

  if (!(warm_start && warm_)) {
    log_len_ = 0.5 * std::log(static_cast<double>(dim_));  // prior median sqrt(dim)
    log_out_ = 0.0;
    log_noise_ = std::log(1e-2);
  }
  landscapes_ = landscapes;

  // Pairwise landscape distances drive the donated-row downscaling.
  Mat vdist;
  const bool sharing = landscapes != nullptr && alpha != nullptr;
  if (sharing) {
    vdist = Mat::Zero(n, n);
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b) {
        const int oa = owners_[a] < 0 ? self_owner_ : owners_[a];
        const int ob = owners_[b] < 0 ? self_owner_ : owners_[b];
        const double d = oa == ob ? 0.0 : ((*landscapes)[oa].v - (*landscapes)[ob].v).norm();
        vdist(a, b) = d;
        vdist(b, a) = d;
      }
  }

  const double prior_mu = 0.5 * std::log(static_cast<double>(dim_));
  double jitter = cfg.jitter0;
  bool dropped = false;

  auto rebuild_share = [&]() {
    if (!sharing) {
      share_.resize(0, 0);
      return;
    }
    const int m = static_cast<int>(x_norm_.rows());
    share_ = Mat(m, m);
    const double ea = std::exp(*alpha);
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) share_(a, b) = 1.0 / (1.0 + ea * vdist(a, b));
    alpha_used_ = *alpha;
  };

  for (int iter = 0; iter < cfg.iters; ++iter) {
    rebuild_share();
    build_kernel_matrix();
    bool ok = factorize(jitter);
    while (!ok && jitter < cfg.jitter_max) {
      jitter = std::min(jitter * 10.0, cfg.jitter_max);
      ok = factorize(jitter);
    }
    if (!ok && !dropped) {
      // Drop donated rows and retry the whole fit on own samples only.
      std::vector<int> keep;
      for (int r = 0; r < static_cast<int>(owners_.size()); ++r)
        if (owners_[r] < 0 || owners_[r] == self_owner_) keep.push_back(r);
      if (static_cast<int>(keep.size()) < static_cast<int>(owners_.size())) {
        Mat x(static_cast<int>(keep.size()), dim_);
        Vec t(static_cast<int>(keep.size()));
        std::vector<int> own(keep.size());
        for (std::size_t r = 0; r < keep.size(); ++r) {
          x.row(static_cast<int>(r)) = x_norm_.row(keep[r]);
          t[static_cast<int>(r)] = t_std_[keep[r]];
          own[r] = owners_[keep[r]];
        }
        info.dropped_rows = static_cast<int>(owners_.size() - keep.size());
        x_norm_ = std::move(x);
        t_std_ = std::move(t);
        owners_ = std::move(own);
        if (sharing) {
          const int m = static_cast<int>(keep.size());
          Mat vd = Mat::Zero(m, m);
          for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b) vd(a, b) = vdist(keep[a], keep[b]);
          vdist = std::move(vd);
        }
        dropped = true;
        jitter = cfg.jitter0;
        iter = -1;  // restart the ascent
        continue;
      }
    }
    if (!ok) {
      broken_ = true;
      fitted_ = false;
      return info;
    }

    const int m = static_cast<int>(x_norm_.rows());
    const Mat a_inv = chol_.solve(Mat::Identity(m, m));
    const Mat w = weights_ * weights_.transpose() - a_inv;

    const double len2 = std::exp(2.0 * log_len_);
    double g_len = 0.0, g_out = 0.0, g_alpha = 0.0;
    for (int r = 0; r < m; ++r) {
      for (int c = 0; c < m; ++c) {
        const double wk = w(r, c) * kernel_(r, c);
        const double sq = (x_norm_.row(r) - x_norm_.row(c)).squaredNorm();
        g_len += wk * sq;
        g_out += wk;
        if (sharing && optimize_alpha) {
          const double ead = std::exp(*alpha) * vdist(r, c);
          g_alpha += -0.5 * wk * ead / (1.0 + ead);
        }
      }
    }
    g_len = 0.5 * g_len / len2;
    g_len += -1.0 - (log_len_ - prior_mu);  // LogNormal(prior_mu, 1) prior
    const double g_noise = 0.5 * std::exp(log_noise_) * w.trace();

    auto clamp_step = [&](double g) {
      return std::clamp(cfg.step * g, -cfg.max_update, cfg.max_update);
    };
    log_len_ += clamp_step(g_len);
    log_out_ += clamp_step(g_out);
    log_noise_ += clamp_step(g_noise);
    log_noise_ = std::max(log_noise_, std::log(cfg.noise_floor));
    if (sharing && optimize_alpha) *alpha += clamp_step(g_alpha);
  }

  // Final factorization with the converged hyperparameters.
  rebuild_share();
  build_kernel_matrix();
  bool ok = factorize(jitter);
  while (!ok && jitter < cfg.jitter_max) {
    jitter = std::min(jitter * 10.0, cfg.jitter_max);
    ok = factorize(jitter);
  }
  if (!ok) {
    broken_ = true;
    fitted_ = false;
    return info;
  }

  // Cache the downscale of each row against the own example for predictions.
  const int m = static_cast<int>(x_norm_.rows());
  row_factor_ = Vec::Ones(m);
  if (sharing) {
    const double ea = std::exp(alpha_used_);
    for (int r = 0; r < m; ++r) {
      const int o = owners_[r] < 0 ? self_owner_ : owners_[r];
      if (o != self_owner_)
        row_factor_[r] = 1.0 / (1.0 + ea * ((*landscapes)[o].v - (*landscapes)[self_owner_].v).norm());
    }
  }

  fitted_ = true;
  broken_ = false;
  warm_ = true;
  info.ok = true;
  info.log_marginal = log_marginal_;
  return info;
}

GpSurrogate::Prediction GpSurrogate::predict(const Vec& y_hat_raw) const {
  if (!fitted_) throw ConfigError("gp: predict before fit");
  const Vec x = normalize(y_hat_raw);
  const int n = static_cast<int>(x_norm_.rows());
  const double len2 = std::exp(2.0 * log_len_);
  const double out2 = std::exp(2.0 * log_out_);
  Vec kx(n);
  for (int r = 0; r < n; ++r) {
    const double sq = (x.transpose() - x_norm_.row(r)).squaredNorm();
    kx[r] = row_factor_[r] * out2 * std::exp(-sq / (2.0 * len2));
  }
  const double mean_std = kx.dot(weights_);
  const Vec v = chol_.solve(kx);
  const double var = std::max(0.0, out2 - kx.dot(v));
  return {stats_.out_mean + stats_.out_std * mean_std, std::sqrt(var)};
}

Vec GpSurrogate::mean_gradient(const Vec& y_hat_raw) const {
  if (!fitted_) throw ConfigError("gp: mean_gradient before fit");
  const Vec x = normalize(y_hat_raw);
  const int n = static_cast<int>(x_norm_.rows());
  const double len2 = std::exp(2.0 * log_len_);
  const double out2 = std::exp(2.0 * log_out_);
  Vec grad = Vec::Zero(dim_);
  for (int r = 0; r < n; ++r) {
    const Vec diff = x - x_norm_.row(r).transpose();
    const double k = row_factor_[r] * out2 * std::exp(-diff.squaredNorm() / (2.0 * len2));
    grad += weights_[r] * k * (-diff / len2);
  }
  // Chain through input normalization and target standardization.
  return stats_.out_std * grad.cwiseQuotient(stats_.in_std);
}

}  // namespace forge
