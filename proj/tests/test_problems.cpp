#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/QR>
#include <cmath>
#include <set>

#include "forge/problems.hpp"
#include "forge/rng.hpp"

using namespace forge;

namespace {

// Exhaustive 0-1 knapsack over the same 1/1000-quantized weights the DP
// uses; ties prefer the lexicographically smallest selection.
struct BruteKp {
  Vec z;
  double value;
};

BruteKp brute_force_kp(const Vec& values, const Vec& weights, double capacity) {
  const int n = static_cast<int>(values.size());
  std::vector<long long> w(n);
  for (int i = 0; i < n; ++i) w[i] = std::llround(std::max(0.0, weights[i]) * 1000.0);
  const long long cap = std::llround(std::max(0.0, capacity) * 1000.0);

  BruteKp best{Vec::Zero(n), -1.0};
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    long long total_w = 0;
    double total_v = 0.0;
    Vec z = Vec::Zero(n);
    for (int i = 0; i < n; ++i) {
      if (mask >> i & 1u) {
        total_w += w[i];
        total_v += std::max(0.0, values[i]);
        z[i] = 1.0;
      }
    }
    if (total_w > cap) continue;
    const bool better = total_v > best.value;
    bool lex_smaller = false;
    if (total_v == best.value) {
      for (int i = 0; i < n; ++i) {
        if (z[i] != best.z[i]) {
          lex_smaller = z[i] < best.z[i];
          break;
        }
      }
    }
    if (better || lex_smaller) best = {z, total_v};
  }
  return best;
}

// Exhaustive weighted set multi-cover.
struct BruteWsmc {
  Vec z;
  double cost;
};

BruteWsmc brute_force_wsmc(const WsmcData& data, const IVec& demand) {
  const int s = data.sets();
  BruteWsmc best{Vec::Zero(s), std::numeric_limits<double>::infinity()};
  for (unsigned mask = 0; mask < (1u << s); ++mask) {
    Vec z = Vec::Zero(s);
    double cost = 0.0;
    for (int j = 0; j < s; ++j) {
      if (mask >> j & 1u) {
        z[j] = 1.0;
        cost += data.set_costs[j];
      }
    }
    bool feasible = true;
    for (int i = 0; i < data.items() && feasible; ++i) {
      double covered = 0.0;
      for (int j = 0; j < s; ++j) covered += data.availability(i, j) * z[j];
      feasible = covered >= demand[i];
    }
    if (!feasible) continue;
    bool lex_smaller = false;
    if (cost == best.cost) {
      for (int j = 0; j < s; ++j) {
        if (z[j] != best.z[j]) {
          lex_smaller = z[j] < best.z[j];
          break;
        }
      }
    }
    if (cost < best.cost || lex_smaller) best = {z, cost};
  }
  return best;
}

ProblemSpec small_kp_values_spec(const Vec& weights, double capacity) {
  ProblemSpec spec;
  spec.family = Family::KnapsackValues;
  spec.dim_x = 1;
  spec.dim_y = static_cast<int>(weights.size());
  spec.kp.weights = weights;
  spec.kp.capacity = capacity;
  return spec;
}

ProblemSpec toy_spec(int dim, double s, double l) {
  ProblemSpec spec;
  spec.family = Family::Toy;
  spec.dim_x = dim;
  spec.dim_y = dim;
  spec.penalty = 0.0;
  spec.toy.weight_matrix = Mat::Identity(dim, dim);
  spec.toy.step_height = s;
  spec.toy.step_length = l;
  return spec;
}

ProblemSpec random_small_wsmc(Rng& rng, int items, int sets) {
  ProblemSpec spec;
  spec.family = Family::Wsmc;
  spec.dim_x = 1;
  spec.dim_y = items;
  spec.penalty = 10.0;
  spec.wsmc.availability = Eigen::MatrixXi::Zero(items, sets);
  for (int i = 0; i < items; ++i) {
    int covered = 0;
    while (covered < 2) {
      covered = 0;
      for (int s = 0; s < sets; ++s) {
        if (rng.uniform() < 0.45) spec.wsmc.availability(i, s) = 1;
      }
      for (int s = 0; s < sets; ++s) covered += spec.wsmc.availability(i, s);
    }
  }
  spec.wsmc.set_costs = Vec(sets);
  for (int s = 0; s < sets; ++s)
    spec.wsmc.set_costs[s] = static_cast<double>(rng.uniform_int(1, 12));
  return spec;
}

}  // namespace

TEST_CASE("kp solve matches the three-item example") {
  Vec values(3), weights(3);
  values << 6, 10, 12;
  weights << 1, 2, 3;
  const ProblemSpec spec = [&] {
    ProblemSpec s;
    s.family = Family::KnapsackValues;
    s.dim_x = 1;
    s.dim_y = 3;
    s.kp.weights = weights;
    s.kp.capacity = 5.0;
    return s;
  }();

  const Decision d = solve(spec, values);
  CHECK(d.z[0] == 0.0);
  CHECK(d.z[1] == 1.0);
  CHECK(d.z[2] == 1.0);
  CHECK(d.objective_value == doctest::Approx(-22.0));

  const BruteKp oracle = brute_force_kp(values, weights, 5.0);
  CHECK(-d.objective_value == doctest::Approx(oracle.value));
}

TEST_CASE("kp regret for a ranking swap matches brute force") {
  Vec values(3), weights(3);
  values << 6, 10, 12;
  weights << 1, 2, 3;
  const ProblemSpec spec = small_kp_values_spec(weights, 5.0);

  Vec y_hat(3);
  y_hat << 10, 6, 12;  // swap item ranking of items 0 and 1
  const BruteKp at_pred = brute_force_kp(y_hat, weights, 5.0);
  Vec z_pred = at_pred.z;
  double g_pred = 0.0;
  for (int i = 0; i < 3; ++i) g_pred += -values[i] * z_pred[i];
  const BruteKp at_truth = brute_force_kp(values, weights, 5.0);
  double g_truth = 0.0;
  for (int i = 0; i < 3; ++i) g_truth += -values[i] * at_truth.z[i];

  CHECK(regret(spec, values, y_hat) == doctest::Approx(g_pred - g_truth));
}

TEST_CASE("solver exactness on random small instances") {
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(3, 15));
    Vec values(n), weights(n);
    for (int i = 0; i < n; ++i) {
      values[i] = static_cast<double>(rng.uniform_int(0, 40));
      weights[i] = static_cast<double>(rng.uniform_int(1, 12));
    }
    const double cap = static_cast<double>(rng.uniform_int(1, 40));
    const ProblemSpec spec = small_kp_values_spec(weights, cap);
    const Decision d = solve(spec, values);
    const BruteKp oracle = brute_force_kp(values, weights, cap);
    REQUIRE(-d.objective_value == doctest::Approx(oracle.value));
    REQUIRE((d.z - oracle.z).norm() == 0.0);  // lexicographic tie-breaking
  }

  for (int trial = 0; trial < 100; ++trial) {
    const int items = static_cast<int>(rng.uniform_int(2, 5));
    const int sets = static_cast<int>(rng.uniform_int(items, 12));
    const ProblemSpec spec = random_small_wsmc(rng, items, sets);
    Vec demand(items);
    for (int i = 0; i < items; ++i)
      demand[i] = static_cast<double>(
          rng.uniform_int(0, std::min(3, spec.wsmc.coverage(i))));
    const Decision d = solve(spec, demand);
    IVec di(items);
    for (int i = 0; i < items; ++i) di[i] = static_cast<int>(demand[i]);
    const BruteWsmc oracle = brute_force_wsmc(spec.wsmc, di);
    REQUIRE(d.objective_value == doctest::Approx(oracle.cost));
    REQUIRE((d.z - oracle.z).norm() == 0.0);
  }
}

TEST_CASE("wsmc singleton covering set is selected") {
  ProblemSpec spec;
  spec.family = Family::Wsmc;
  spec.dim_x = 1;
  spec.dim_y = 3;
  spec.wsmc.availability = Eigen::MatrixXi::Zero(3, 4);
  // Set 2 covers everything; the others cover one item each.
  spec.wsmc.availability(0, 0) = 1;
  spec.wsmc.availability(1, 1) = 1;
  spec.wsmc.availability(0, 2) = 1;
  spec.wsmc.availability(1, 2) = 1;
  spec.wsmc.availability(2, 2) = 1;
  spec.wsmc.availability(2, 3) = 1;
  spec.wsmc.set_costs = Vec::Ones(4);

  Vec demand(3);
  demand << 1, 1, 1;
  const Decision d = solve(spec, demand);
  CHECK(d.z[2] == 1.0);
  CHECK(d.z.sum() == doctest::Approx(1.0));
  CHECK(d.objective_value == doctest::Approx(1.0));

  IVec di(3);
  di << 1, 1, 1;
  const BruteWsmc oracle = brute_force_wsmc(spec.wsmc, di);
  CHECK(d.objective_value == doctest::Approx(oracle.cost));
}

TEST_CASE("toy solve is the identity map") {
  const ProblemSpec spec = toy_spec(2, 5.0, 1.0);
  Vec y_hat(2);
  y_hat << 1.5, -2.0;
  const Decision d = solve(spec, y_hat);
  CHECK(d.z[0] == 1.5);
  CHECK(d.z[1] == -2.0);
}

TEST_CASE("true cost formulas") {
  SUBCASE("toy zero distance and direct evaluation") {
    const ProblemSpec spec = toy_spec(2, 5.0, 1.0);
    Vec y(2);
    y << 0.3, -1.0;
    Decision d;
    d.z = y;
    CHECK(true_cost(spec, y, d) == 0.0);

    d.z = y + Vec::Unit(2, 0) * 2.5;  // distance 2.5
    CHECK(true_cost(spec, y, d) == doctest::Approx(10.0));  // 5 * floor(2.5)
  }

  SUBCASE("wsmc exact coverage pays only set costs") {
    ProblemSpec spec;
    spec.family = Family::Wsmc;
    spec.dim_x = 1;
    spec.dim_y = 2;
    spec.penalty = 10.0;
    spec.wsmc.availability = Eigen::MatrixXi::Zero(2, 3);
    spec.wsmc.availability(0, 0) = 1;
    spec.wsmc.availability(1, 1) = 1;
    spec.wsmc.availability(0, 2) = 1;
    spec.wsmc.availability(1, 2) = 1;
    spec.wsmc.set_costs = Vec(3);
    spec.wsmc.set_costs << 3, 4, 5;
    Vec y(2);
    y << 1, 1;
    Decision d;
    d.z = Vec(3);
    d.z << 1, 1, 0;
    CHECK(true_cost(spec, y, d) == doctest::Approx(7.0));
  }

  SUBCASE("kp weights penalty is linear in the overweight") {
    ProblemSpec spec;
    spec.family = Family::KnapsackWeights;
    spec.dim_x = 1;
    spec.dim_y = 2;
    spec.penalty = 10.0;
    spec.kp.values = Vec(2);
    spec.kp.values << 8, 9;
    spec.kp.capacity = 3.0;
    Vec y_w(2);
    y_w << 2.0, 2.5;
    Decision d;
    d.z = Vec(2);
    d.z << 1, 1;
    // -17 value + 10 * (4.5 - 3) overweight
    CHECK(true_cost(spec, y_w, d) == doctest::Approx(-17.0 + 15.0));
  }
}

TEST_CASE("regret basics") {
  const ProblemSpec spec = toy_spec(2, 5.0, 1.0);
  Vec y(2);
  y << 0.0, 0.0;

  SUBCASE("zero at the truth") { CHECK(regret(spec, y, y) == 0.0); }

  SUBCASE("one step away") {
    Vec y_hat(2);
    y_hat << 1.2, 0.0;
    CHECK(regret(spec, y, y_hat) == doctest::Approx(5.0));
  }
}

TEST_CASE("kp-values regret is non-negative") {
  Rng rng(7);
  Vec weights(8);
  for (int i = 0; i < 8; ++i) weights[i] = static_cast<double>(rng.uniform_int(1, 10));
  const ProblemSpec spec = small_kp_values_spec(weights, 20.0);
  for (int trial = 0; trial < 200; ++trial) {
    Vec y(8), y_hat(8);
    for (int i = 0; i < 8; ++i) {
      y[i] = static_cast<double>(rng.uniform_int(0, 30));
      y_hat[i] = rng.uniform(-5.0, 35.0);
    }
    CHECK(regret(spec, y, y_hat) >= -1e-12);
  }
}

TEST_CASE("solve is deterministic") {
  Rng rng(11);
  Vec weights(10);
  for (int i = 0; i < 10; ++i) weights[i] = static_cast<double>(rng.uniform_int(1, 9));
  const ProblemSpec spec = small_kp_values_spec(weights, 22.0);
  Vec y_hat(10);
  for (int i = 0; i < 10; ++i) y_hat[i] = rng.uniform(0.0, 20.0);
  const Decision a = solve(spec, y_hat);
  const Decision b = solve(spec, y_hat);
  CHECK((a.z - b.z).norm() == 0.0);
  CHECK(a.objective_value == b.objective_value);
}

TEST_CASE("toy cost is rotation invariant") {
  const ProblemSpec spec = toy_spec(4, 5.0, 1.0);
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Vec y = rng.normal_vec(4);
    Vec z = rng.normal_vec(4);
    const double dist = (y - z).norm();
    if (std::abs(dist - std::round(dist)) < 1e-6) continue;  // step boundary

    Mat g(4, 4);
    for (int i = 0; i < 4; ++i) g.col(i) = rng.normal_vec(4);
    const Mat q = Eigen::HouseholderQR<Mat>(g).householderQ();

    Decision d1, d2;
    d1.z = z;
    d2.z = q * z;
    CHECK(true_cost(spec, y, d1) == doctest::Approx(true_cost(spec, q * y, d2)));
  }
}

TEST_CASE("kp dataset generation") {
  KpConfig cfg;
  cfg.uncertain = KpConfig::Uncertain::Values;
  const Benchmark bench = generate_kp_dataset(cfg, 0);
  CHECK(bench.data.size() == 1000);
  CHECK(bench.spec.dim_y == 50);
  CHECK(bench.spec.dim_x == 5);
  CHECK(bench.data.split.train.size() == 800);
  CHECK(bench.data.split.val.size() == 100);
  CHECK(bench.data.split.test.size() == 100);
  for (const Instance& inst : bench.data.instances) {
    CHECK(inst.y.minCoeff() >= 0.0);
  }

  SUBCASE("same seed is bit-identical") {
    const Benchmark again = generate_kp_dataset(cfg, 0);
    for (int k = 0; k < bench.data.size(); ++k) {
      CHECK((bench.data.instances[k].x - again.data.instances[k].x).norm() == 0.0);
      CHECK((bench.data.instances[k].y - again.data.instances[k].y).norm() == 0.0);
    }
    CHECK(bench.spec.kp.capacity == again.spec.kp.capacity);
  }

  SUBCASE("small dataset splits 8/1/1") {
    KpConfig small = cfg;
    small.n_instances = 10;
    const Benchmark b = generate_kp_dataset(small, 5);
    CHECK(b.data.split.train.size() == 8);
    CHECK(b.data.split.val.size() == 1);
    CHECK(b.data.split.test.size() == 1);
  }

  SUBCASE("zero noise and degree one is affine up to the Poisson draw") {
    Vec coeff(2), x(2);
    coeff << 1, 0;
    x << 2.0, -1.0;
    // (x_0 / sqrt(2) + 3)^1 + 1
    CHECK(poly_mean(coeff, x, 1, 1.0) ==
          doctest::Approx(2.0 / std::sqrt(2.0) + 4.0));
    KpConfig det = cfg;
    det.noise_half_width = 0.0;
    det.degree = 1;
    det.n_instances = 20;
    const Benchmark b1 = generate_kp_dataset(det, 3);
    const Benchmark b2 = generate_kp_dataset(det, 3);
    for (int k = 0; k < b1.data.size(); ++k)
      CHECK((b1.data.instances[k].y - b2.data.instances[k].y).norm() == 0.0);
  }
}

TEST_CASE("wsmc dataset generation") {
  WsmcConfig cfg;
  const Benchmark bench = generate_wsmc_dataset(cfg, 1);
  CHECK(bench.spec.dim_y == 10);
  CHECK(bench.spec.wsmc.sets() == 50);
  for (int i = 0; i < 10; ++i) CHECK(bench.spec.wsmc.coverage(i) >= 2);
  for (int s = 0; s < 50; ++s) CHECK(bench.spec.wsmc.availability.col(s).sum() >= 1);
  for (const Instance& inst : bench.data.instances) CHECK(inst.y.minCoeff() >= 1.0);
  // Demands are integers.
  for (const Instance& inst : bench.data.instances)
    for (int i = 0; i < 10; ++i) CHECK(inst.y[i] == std::floor(inst.y[i]));

  SUBCASE("rejects n_sets < n_items") {
    WsmcConfig bad = cfg;
    bad.n_sets = 9;
    CHECK_THROWS_AS(generate_wsmc_dataset(bad, 0), ConfigError);
  }

  SUBCASE("large set count generates") {
    WsmcConfig big = cfg;
    big.n_sets = 1000;
    big.n_instances = 20;
    const Benchmark b = generate_wsmc_dataset(big, 2);
    CHECK(b.spec.wsmc.sets() == 1000);
    // One solve to confirm the instance is workable at this scale.
    const Decision d = solve(b.spec, b.data.instances[0].y);
    CHECK(d.z.sum() >= 1.0);
  }

  SUBCASE("determinism") {
    const Benchmark again = generate_wsmc_dataset(cfg, 1);
    CHECK((bench.spec.wsmc.set_costs - again.spec.wsmc.set_costs).norm() == 0.0);
    for (int k = 0; k < bench.data.size(); ++k)
      CHECK((bench.data.instances[k].y - again.data.instances[k].y).norm() == 0.0);
  }
}

TEST_CASE("toy dataset generation") {
  ToyConfig cfg;
  cfg.dim_y = 64;
  cfg.n_instances = 100;
  const Benchmark bench = generate_toy_dataset(cfg, 4);
  CHECK(bench.spec.dim_y == 64);
  CHECK(bench.spec.toy.step_height == 5.0);
  for (const Instance& inst : bench.data.instances) {
    CHECK((bench.spec.toy.weight_matrix * inst.x - inst.y).norm() == doctest::Approx(0.0));
  }

  SUBCASE("x = 0 maps to y = 0") {
    const Vec y = bench.spec.toy.weight_matrix * Vec::Zero(5);
    CHECK(y.norm() == 0.0);
  }

  SUBCASE("dim 512 generation completes") {
    ToyConfig big;
    big.dim_y = 512;
    big.n_instances = 50;
    const Benchmark b = generate_toy_dataset(big, 9);
    CHECK(b.spec.dim_y == 512);
    CHECK(b.data.size() == 50);
  }
}

TEST_CASE("zero penalty shortfall equals the nominal objective") {
  Rng rng(19);
  const ProblemSpec spec = random_small_wsmc(rng, 4, 8);
  Vec demand(4);
  for (int i = 0; i < 4; ++i)
    demand[i] = static_cast<double>(rng.uniform_int(1, std::min(2, spec.wsmc.coverage(i))));
  const Decision d = solve(spec, demand);
  // Solved against its own demands: no shortfall, so g equals the objective.
  CHECK(true_cost(spec, demand, d) == doctest::Approx(d.objective_value));
}
