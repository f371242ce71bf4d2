#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "forge/rng.hpp"
#include "forge/types.hpp"

namespace forge {

enum class Family { KnapsackWeights, KnapsackValues, KnapsackCapacity, Wsmc, Toy };

std::string family_name(Family f);
Family family_from_name(const std::string& name);

/// Fixed knapsack data; the field matching the uncertain parameter is left
/// empty and supplied per-solve from y / y_hat.
struct KpData {
  Vec values;
  Vec weights;
  double capacity = 0.0;
};

struct WsmcData {
  /// availability(i, s) == 1 when set s covers item i.
  Eigen::MatrixXi availability;
  Vec set_costs;

  int items() const { return static_cast<int>(availability.rows()); }
  int sets() const { return static_cast<int>(availability.cols()); }
  /// Number of sets covering item i (the most its demand can be clamped to).
  int coverage(int item) const { return availability.row(item).sum(); }
};

struct ToyData {
  Mat weight_matrix;  // y = W x
  double step_height = 5.0;
  double step_length = 1.0;
};

/// One benchmark family: decision problem, true cost with recourse, and the
/// constants shared by every instance of a generated dataset.
struct ProblemSpec {
  Family family = Family::Toy;
  int dim_x = 0;
  int dim_y = 0;
  double penalty = 10.0;
  KpData kp;
  WsmcData wsmc;
  ToyData toy;

  void validate() const;  // throws ConfigError
};

struct Instance {
  Vec x;
  Vec y;
};

struct Split {
  std::vector<int> train, val, test;
};

struct Dataset {
  std::vector<Instance> instances;
  Split split;
  std::uint64_t seed = 0;

  int size() const { return static_cast<int>(instances.size()); }
};

struct Decision {
  Vec z;
  double objective_value = 0.0;
};

struct KpConfig {
  enum class Uncertain { Weights, Values, Capacity };
  Uncertain uncertain = Uncertain::Values;
  int n_items = 50;
  int dim_x = 5;
  int degree = 5;
  double noise_half_width = 0.5;
  int n_instances = 1000;
  double penalty = 10.0;
  /// Scale applied to the polynomial mean before the Poisson draw. Defaults
  /// (<0) are per-variant; small weight scales keep the DP capacity low
  /// enough for fast exact solving.
  double output_scale = -1.0;
  double capacity_ratio = 0.5;

  double effective_scale() const;
};

struct WsmcConfig {
  int n_items = 10;
  int n_sets = 50;
  int dim_x = 5;
  int degree = 5;
  double noise_half_width = 0.5;
  int n_instances = 1000;
  double penalty = 10.0;
  double demand_scale = 0.01;
  /// Each item is covered by a uniformly random fraction of sets in
  /// [density_lo, density_hi], with at least two covering sets.
  double density_lo = 0.2;
  double density_hi = 0.4;
  int cost_lo = 1;
  int cost_hi = 20;
};

struct ToyConfig {
  int dim_y = 64;
  int dim_x = 5;
  double step_height = 5.0;
  double step_length = 1.0;
  int n_instances = 1000;
};

struct Benchmark {
  ProblemSpec spec;
  Dataset data;
};

Benchmark generate_kp_dataset(const KpConfig& cfg, std::uint64_t seed);
Benchmark generate_wsmc_dataset(const WsmcConfig& cfg, std::uint64_t seed);
Benchmark generate_toy_dataset(const ToyConfig& cfg, std::uint64_t seed);

/// Noise-free mean of the stochastic x->y map: max(0, (c.x/sqrt(dim_x) + 3)^deg + 1) * scale.
double poly_mean(const Vec& coeff_row, const Vec& x, int degree, double scale);

/// Contiguous 80/10/10 partition.
Split make_split(int n);

/// Exact optimum of the decision problem under predicted parameters, after
/// domain clamping. Deterministic: ties resolve to the lexicographically
/// smallest optimal selection.
Decision solve(const ProblemSpec& spec, const Vec& y_hat);

/// Cost of executing decision z under realization y, including the linear
/// recourse penalty for constraint violations.
double true_cost(const ProblemSpec& spec, const Vec& y, const Decision& z);

/// g(y, z*(y_hat)) - g(y, z*(y)); exactly two solve and two true_cost calls.
double regret(const ProblemSpec& spec, const Vec& y, const Vec& y_hat);

}  // namespace forge
