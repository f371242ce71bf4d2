#include "forge/sfge.hpp"

namespace forge {

std::pair<Vec, NormalOrigin> sfge_sample(const Vec& y_hat, double sigma, Rng& rng) {
  if (sigma <= 0.0) throw ConfigError("sfge_sample: sigma must be positive");
  Vec y_prime = y_hat + sigma * rng.normal_vec(static_cast<int>(y_hat.size()));
  return {std::move(y_prime), NormalOrigin{y_hat, sigma}};
}

SfgeGrad sfge_grad(const Vec& y_hat, const Vec& y_prime, double regret_value, double sigma,
                   double baseline) {
  if (sigma <= 0.0) throw ConfigError("sfge_grad: sigma must be positive");
  if (y_hat.size() != y_prime.size()) throw ConfigError("sfge_grad: dimension mismatch");
  const double advantage = regret_value - baseline;
  const Vec delta = y_prime - y_hat;
  const double s2 = sigma * sigma;
  SfgeGrad g;
  g.grad_y = advantage * delta / s2;
  g.grad_log_sigma =
      advantage * (delta.squaredNorm() / s2 - static_cast<double>(y_hat.size()));
  return g;
}

}  // namespace forge
