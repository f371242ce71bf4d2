#include "forge/problems.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace forge {

namespace {

constexpr std::uint64_t kGenStream = 0x67656e00ULL;  // dataset generation
constexpr double kIntegerScale = 1000.0;             // DP quantization

}  // namespace

std::string family_name(Family f) {
  switch (f) {
    case Family::KnapsackWeights: return "kp-weights";
    case Family::KnapsackValues: return "kp-values";
    case Family::KnapsackCapacity: return "kp-capacity";
    case Family::Wsmc: return "wsmc";
    case Family::Toy: return "toy";
  }
  throw ConfigError("unknown family");
}

Family family_from_name(const std::string& name) {
  if (name == "kp-weights") return Family::KnapsackWeights;
  if (name == "kp-values") return Family::KnapsackValues;
  if (name == "kp-capacity") return Family::KnapsackCapacity;
  if (name == "wsmc") return Family::Wsmc;
  if (name == "toy") return Family::Toy;
  throw ConfigError("unknown family: " + name);
}

void ProblemSpec::validate() const {
  if (dim_x < 1 || dim_y < 1) throw ConfigError("dim_x and dim_y must be positive");
  if (penalty < 0.0) throw ConfigError("penalty must be non-negative");
  switch (family) {
    case Family::KnapsackWeights:
      if (kp.values.size() != dim_y) throw ConfigError("kp values size mismatch");
      break;
    case Family::KnapsackValues:
      if (kp.weights.size() != dim_y) throw ConfigError("kp weights size mismatch");
      break;
    case Family::KnapsackCapacity:
      if (dim_y != 1) throw ConfigError("kp-capacity predicts a single parameter");
      if (kp.values.size() != kp.weights.size() || kp.values.size() == 0)
        throw ConfigError("kp fixed data size mismatch");
      break;
    case Family::Wsmc: {
      if (wsmc.items() != dim_y) throw ConfigError("wsmc availability rows mismatch");
      if (wsmc.set_costs.size() != wsmc.sets()) throw ConfigError("wsmc cost size mismatch");
      for (int i = 0; i < wsmc.items(); ++i)
        if (wsmc.coverage(i) == 0) throw ConfigError("wsmc item covered by no set");
      break;
    }
    case Family::Toy:
      if (toy.weight_matrix.rows() != dim_y || toy.weight_matrix.cols() != dim_x)
        throw ConfigError("toy weight matrix shape mismatch");
      if (toy.step_height <= 0.0 || toy.step_length <= 0.0)
        throw ConfigError("toy step parameters must be positive");
      break;
  }
}

double KpConfig::effective_scale() const {
  if (output_scale > 0.0) return output_scale;
  switch (uncertain) {
    case Uncertain::Weights: return 0.005;
    case Uncertain::Values: return 1.0;
    case Uncertain::Capacity: return 0.35;
  }
  return 1.0;
}

double poly_mean(const Vec& coeff_row, const Vec& x, int degree, double scale) {
  const double inner = coeff_row.dot(x) / std::sqrt(static_cast<double>(x.size())) + 3.0;
  const double base = std::pow(inner, degree) + 1.0;
  return std::max(0.0, base) * scale;
}

Split make_split(int n) {
  Split s;
  const int n_train = (8 * n) / 10;
  const int n_val = n / 10;
  s.train.resize(n_train);
  std::iota(s.train.begin(), s.train.end(), 0);
  s.val.resize(n_val);
  std::iota(s.val.begin(), s.val.end(), n_train);
  s.test.resize(n - n_train - n_val);
  std::iota(s.test.begin(), s.test.end(), n_train + n_val);
  return s;
}

namespace {

Mat bernoulli_matrix(int rows, int cols, Rng& rng) {
  Mat b(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) b(i, j) = rng.uniform() < 0.5 ? 0.0 : 1.0;
  return b;
}

}  // namespace

Benchmark generate_kp_dataset(const KpConfig& cfg, std::uint64_t seed) {
  if (cfg.n_items < 1) throw ConfigError("n_items must be >= 1");
  if (cfg.degree < 1) throw ConfigError("degree must be >= 1");
  if (cfg.noise_half_width < 0.0 || cfg.noise_half_width >= 1.0)
    throw ConfigError("noise_half_width must be in [0, 1)");
  if (cfg.dim_x < 1 || cfg.n_instances < 1) throw ConfigError("invalid kp config dimensions");

  Benchmark bench;
  ProblemSpec& spec = bench.spec;
  spec.dim_x = cfg.dim_x;
  spec.penalty = cfg.penalty;
  spec.family = cfg.uncertain == KpConfig::Uncertain::Weights  ? Family::KnapsackWeights
                : cfg.uncertain == KpConfig::Uncertain::Values ? Family::KnapsackValues
                                                               : Family::KnapsackCapacity;
  const bool capacity_variant = cfg.uncertain == KpConfig::Uncertain::Capacity;
  spec.dim_y = capacity_variant ? 1 : cfg.n_items;

  Rng rng(stream_seed(seed, kGenStream, static_cast<std::uint64_t>(spec.family)));
  const Mat coeff = bernoulli_matrix(spec.dim_y, cfg.dim_x, rng);

  if (cfg.uncertain != KpConfig::Uncertain::Values) {
    spec.kp.values = Vec(cfg.n_items);
    for (int i = 0; i < cfg.n_items; ++i)
      spec.kp.values[i] = static_cast<double>(rng.uniform_int(1, 100));
  }
  if (cfg.uncertain != KpConfig::Uncertain::Weights) {
    spec.kp.weights = Vec(cfg.n_items);
    for (int i = 0; i < cfg.n_items; ++i)
      spec.kp.weights[i] = static_cast<double>(rng.uniform_int(1, 10));
  }

  const double scale = cfg.effective_scale();
  Dataset& data = bench.data;
  data.seed = seed;
  data.instances.resize(cfg.n_instances);
  for (int k = 0; k < cfg.n_instances; ++k) {
    Instance& inst = data.instances[k];
    inst.x = rng.normal_vec(cfg.dim_x);
    inst.y = Vec(spec.dim_y);
    for (int j = 0; j < spec.dim_y; ++j) {
      const double eta = rng.uniform(1.0 - cfg.noise_half_width, 1.0 + cfg.noise_half_width);
      const double mean = poly_mean(coeff.row(j), inst.x, cfg.degree, scale) * eta;
      inst.y[j] = static_cast<double>(rng.poisson(mean));
    }
  }

  if (cfg.uncertain == KpConfig::Uncertain::Values) {
    spec.kp.capacity = cfg.capacity_ratio * spec.kp.weights.sum();
  } else if (cfg.uncertain == KpConfig::Uncertain::Weights) {
    double mean_total = 0.0;
    for (const Instance& inst : data.instances) mean_total += inst.y.sum();
    mean_total /= cfg.n_instances;
    spec.kp.capacity = cfg.capacity_ratio * mean_total;
  }

  data.split = make_split(cfg.n_instances);
  spec.validate();
  return bench;
}

Benchmark generate_wsmc_dataset(const WsmcConfig& cfg, std::uint64_t seed) {
  if (cfg.n_sets < cfg.n_items)
    throw ConfigError("wsmc requires n_sets >= n_items");
  if (cfg.n_items < 1 || cfg.dim_x < 1 || cfg.n_instances < 1 || cfg.degree < 1)
    throw ConfigError("invalid wsmc config dimensions");

  Benchmark bench;
  ProblemSpec& spec = bench.spec;
  spec.family = Family::Wsmc;
  spec.dim_x = cfg.dim_x;
  spec.dim_y = cfg.n_items;
  spec.penalty = cfg.penalty;

  Rng rng(stream_seed(seed, kGenStream, 0x77736d63ULL));

  Eigen::MatrixXi& A = spec.wsmc.availability;
  A = Eigen::MatrixXi::Zero(cfg.n_items, cfg.n_sets);
  std::vector<int> all_sets(cfg.n_sets);
  std::iota(all_sets.begin(), all_sets.end(), 0);
  for (int i = 0; i < cfg.n_items; ++i) {
    const double density = rng.uniform(cfg.density_lo, cfg.density_hi);
    int count = static_cast<int>(std::lround(density * cfg.n_sets));
    count = std::clamp(count, 2, cfg.n_sets);
    std::vector<int> pool = all_sets;
    rng.shuffle(pool);
    for (int k = 0; k < count; ++k) A(i, pool[k]) = 1;
  }
  // No empty set columns: give uncovering sets one random item each.
  for (int s = 0; s < cfg.n_sets; ++s) {
    if (A.col(s).sum() == 0) A(static_cast<int>(rng.uniform_int(0, cfg.n_items - 1)), s) = 1;
  }

  spec.wsmc.set_costs = Vec(cfg.n_sets);
  for (int s = 0; s < cfg.n_sets; ++s)
    spec.wsmc.set_costs[s] = static_cast<double>(rng.uniform_int(cfg.cost_lo, cfg.cost_hi));

  const Mat coeff = bernoulli_matrix(cfg.n_items, cfg.dim_x, rng);
  Dataset& data = bench.data;
  data.seed = seed;
  data.instances.resize(cfg.n_instances);
  for (int k = 0; k < cfg.n_instances; ++k) {
    Instance& inst = data.instances[k];
    inst.x = rng.normal_vec(cfg.dim_x);
    inst.y = Vec(cfg.n_items);
    for (int i = 0; i < cfg.n_items; ++i) {
      const double eta = rng.uniform(1.0 - cfg.noise_half_width, 1.0 + cfg.noise_half_width);
      const double mean = poly_mean(coeff.row(i), inst.x, cfg.degree, cfg.demand_scale) * eta;
      const long draw = std::max(1L, rng.poisson(mean));
      inst.y[i] = static_cast<double>(std::min<long>(draw, spec.wsmc.coverage(i)));
    }
  }

  data.split = make_split(cfg.n_instances);
  spec.validate();
  return bench;
}

Benchmark generate_toy_dataset(const ToyConfig& cfg, std::uint64_t seed) {
  if (cfg.step_height <= 0.0 || cfg.step_length <= 0.0)
    throw ConfigError("toy step parameters must be positive");
  if (cfg.dim_y < 1 || cfg.dim_x < 1 || cfg.n_instances < 1)
    throw ConfigError("invalid toy config dimensions");

  Benchmark bench;
  ProblemSpec& spec = bench.spec;
  spec.family = Family::Toy;
  spec.dim_x = cfg.dim_x;
  spec.dim_y = cfg.dim_y;
  spec.penalty = 0.0;
  spec.toy.step_height = cfg.step_height;
  spec.toy.step_length = cfg.step_length;

  Rng rng(stream_seed(seed, kGenStream, 0x746f79ULL));
  Mat& W = spec.toy.weight_matrix;
  W = Mat(cfg.dim_y, cfg.dim_x);
  for (int i = 0; i < cfg.dim_y; ++i)
    for (int j = 0; j < cfg.dim_x; ++j) W(i, j) = rng.uniform();

  Dataset& data = bench.data;
  data.seed = seed;
  data.instances.resize(cfg.n_instances);
  for (int k = 0; k < cfg.n_instances; ++k) {
    Instance& inst = data.instances[k];
    inst.x = rng.normal_vec(cfg.dim_x);
    inst.y = W * inst.x;
  }
  data.split = make_split(cfg.n_instances);
  spec.validate();
  return bench;
}

// ---------------------------------------------------------------------------
// Solvers
// ---------------------------------------------------------------------------

namespace {

long long llgcd(long long a, long long b) {
  while (b != 0) {
    const long long t = a % b;
    a = b;
    b = t;
  }
  return a;
}

/// 0-1 knapsack by dynamic programming over integerized weights. Weights and
/// capacity are quantized at 1/1000 resolution, then reduced by their gcd.
/// Ties prefer not taking an item, which yields the lexicographically
/// smallest optimal selection.
Decision solve_knapsack(const Vec& values, const Vec& weights, double capacity) {
  const int n = static_cast<int>(values.size());
  Decision out;
  out.z = Vec::Zero(n);

  std::vector<long long> w(n);
  for (int i = 0; i < n; ++i)
    w[i] = std::llround(std::max(0.0, weights[i]) * kIntegerScale);
  long long cap = std::llround(std::max(0.0, capacity) * kIntegerScale);

  long long g = 0;
  for (long long wi : w)
    if (wi > 0) g = llgcd(g, wi);
  if (g > 1) {
    for (long long& wi : w) wi /= g;
    cap /= g;
  }

  // Zero-weight items with positive value are always taken; items heavier
  // than the capacity or worthless are never taken.
  std::vector<int> dp_items;
  dp_items.reserve(n);
  double fixed_value = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = std::max(0.0, values[i]);
    if (v <= 0.0) continue;
    if (w[i] == 0) {
      out.z[i] = 1.0;
      fixed_value += v;
    } else if (w[i] <= cap) {
      dp_items.push_back(i);
    }
  }

  const int ne = static_cast<int>(dp_items.size());
  double total = fixed_value;
  if (ne > 0 && cap > 0) {
    const std::size_t width = static_cast<std::size_t>(cap) + 1;
    static thread_local std::vector<double> next_row, cur_row;
    static thread_local std::vector<std::uint64_t> take_bits;
    next_row.assign(width, 0.0);
    cur_row.assign(width, 0.0);
    const std::size_t words_per_item = (width + 63) / 64;
    take_bits.assign(words_per_item * static_cast<std::size_t>(ne), 0);

    for (int k = ne - 1; k >= 0; --k) {
      const int item = dp_items[k];
      const long long wi = w[item];
      const double vi = std::max(0.0, values[item]);
      std::uint64_t* bits = take_bits.data() + words_per_item * static_cast<std::size_t>(k);
      for (long long c = 0; c <= cap; ++c) {
        const double skip = next_row[static_cast<std::size_t>(c)];
        double best = skip;
        if (wi <= c) {
          const double take = vi + next_row[static_cast<std::size_t>(c - wi)];
          if (take > skip) {
            best = take;
            bits[static_cast<std::size_t>(c) >> 6] |= 1ULL << (c & 63);
          }
        }
        cur_row[static_cast<std::size_t>(c)] = best;
      }
      std::swap(next_row, cur_row);
    }

    total += next_row[static_cast<std::size_t>(cap)];
    long long c = cap;
    for (int k = 0; k < ne; ++k) {
      const std::uint64_t* bits = take_bits.data() + words_per_item * static_cast<std::size_t>(k);
      if (bits[static_cast<std::size_t>(c) >> 6] >> (c & 63) & 1ULL) {
        out.z[dp_items[k]] = 1.0;
        c -= w[dp_items[k]];
      }
    }
  }

  out.objective_value = -total;  // minimization form
  return out;
}

/// Exact weighted set multi-cover by branch and bound: greedy upper bound,
/// per-unit-cost lower bound, item-driven set branching. Equal-cost optima
/// resolve to the lexicographically smallest selection.
class WsmcSolver {
 public:
  WsmcSolver(const WsmcData& data, const IVec& demand) : data_(data), residual_(demand) {
    const int n_items = data.items();
    const int n_sets = data.sets();
    covers_.resize(n_items);
    for (int i = 0; i < n_items; ++i)
      for (int s = 0; s < n_sets; ++s)
        if (data.availability(i, s)) covers_[i].push_back(s);
    items_of_.resize(n_sets);
    unit_ratio_.resize(n_sets);
    for (int s = 0; s < n_sets; ++s) {
      for (int i = 0; i < n_items; ++i)
        if (data.availability(i, s)) items_of_[s].push_back(i);
      unit_ratio_[s] = items_of_[s].empty()
                           ? std::numeric_limits<double>::infinity()
                           : data.set_costs[s] / static_cast<double>(items_of_[s].size());
    }
    avail_.assign(n_sets, 1);
    chosen_.assign(n_sets, 0);
    avail_count_.resize(n_items);
    for (int i = 0; i < n_items; ++i) avail_count_[i] = static_cast<int>(covers_[i].size());
  }

  Decision solve() {
    for (int i = 0; i < data_.items(); ++i) {
      if (residual_[i] > avail_count_[i]) throw SolverError("wsmc demand uncoverable");
    }
    greedy_incumbent();
    dfs(0.0);

    Decision out;
    out.z = Vec::Zero(data_.sets());
    double cost = 0.0;
    for (int s = 0; s < data_.sets(); ++s) {
      if (best_sel_[s]) {
        out.z[s] = 1.0;
        cost += data_.set_costs[s];
      }
    }
    out.objective_value = cost;
    return out;
  }

 private:
  void greedy_incumbent() {
    IVec residual = residual_;
    std::vector<std::uint8_t> sel(data_.sets(), 0);
    double cost = 0.0;
    while (residual.maxCoeff() > 0) {
      int best = -1;
      double best_ratio = std::numeric_limits<double>::infinity();
      for (int s = 0; s < data_.sets(); ++s) {
        if (sel[s]) continue;
        int units = 0;
        for (int i : items_of_[s]) units += residual[i] > 0 ? 1 : 0;
        if (units == 0) continue;
        const double ratio = data_.set_costs[s] / static_cast<double>(units);
        if (ratio < best_ratio) {
          best_ratio = ratio;
          best = s;
        }
      }
      if (best < 0) throw SolverError("wsmc greedy failed to cover demand");
      sel[best] = 1;
      cost += data_.set_costs[best];
      for (int i : items_of_[best]) residual[i] = std::max(0, residual[i] - 1);
    }
    best_cost_ = cost;
    best_sel_ = sel;
  }

  double lower_bound() const {
    double lb = 0.0;
    for (int i = 0; i < data_.items(); ++i) {
      if (residual_[i] <= 0) continue;
      double best = std::numeric_limits<double>::infinity();
      for (int s : covers_[i])
        if (avail_[s] && unit_ratio_[s] < best) best = unit_ratio_[s];
      lb += residual_[i] * best;
    }
    return lb;
  }

  void take(int s) {
    chosen_[s] = 1;
    remove_set(s);
    for (int i : items_of_[s]) --residual_[i];
  }
  void untake(int s) {
    chosen_[s] = 0;
    restore_set(s);
    for (int i : items_of_[s]) ++residual_[i];
  }
  void remove_set(int s) {
    avail_[s] = 0;
    for (int i : items_of_[s]) --avail_count_[i];
  }
  void restore_set(int s) {
    avail_[s] = 1;
    for (int i : items_of_[s]) ++avail_count_[i];
  }

  bool lex_smaller(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) const {
    for (std::size_t s = 0; s < a.size(); ++s) {
      if (a[s] != b[s]) return a[s] < b[s];
    }
    return false;
  }

  void dfs(double cost) {
    int branch_item = -1;
    int branch_width = std::numeric_limits<int>::max();
    for (int i = 0; i < data_.items(); ++i) {
      if (residual_[i] <= 0) continue;
      if (residual_[i] > avail_count_[i]) return;  // infeasible branch
      if (avail_count_[i] < branch_width) {
        branch_width = avail_count_[i];
        branch_item = i;
      }
    }
    if (branch_item < 0) {
      if (cost < best_cost_ || (cost == best_cost_ && lex_smaller(chosen_, best_sel_))) {
        best_cost_ = cost;
        best_sel_ = chosen_;
      }
      return;
    }
    if (cost + lower_bound() > best_cost_) return;

    std::vector<int> candidates;
    candidates.reserve(covers_[branch_item].size());
    for (int s : covers_[branch_item])
      if (avail_[s]) candidates.push_back(s);
    std::sort(candidates.begin(), candidates.end(), [&](int a, int b) {
      if (unit_ratio_[a] != unit_ratio_[b]) return unit_ratio_[a] < unit_ratio_[b];
      return a < b;
    });

    std::vector<int> excluded;
    excluded.reserve(candidates.size());
    for (int s : candidates) {
      take(s);
      dfs(cost + data_.set_costs[s]);
      untake(s);
      remove_set(s);  // later branches must not reuse s
      excluded.push_back(s);
    }
    for (int s : excluded) restore_set(s);
  }

  const WsmcData& data_;
  IVec residual_;
  std::vector<std::vector<int>> covers_;
  std::vector<std::vector<int>> items_of_;
  std::vector<double> unit_ratio_;
  std::vector<std::uint8_t> avail_, chosen_, best_sel_;
  std::vector<int> avail_count_;
  double best_cost_ = std::numeric_limits<double>::infinity();
};

IVec clamp_demand(const WsmcData& data, const Vec& y_hat) {
  IVec d(y_hat.size());
  for (int i = 0; i < y_hat.size(); ++i) {
    const long r = std::lround(std::max(0.0, y_hat[i]));
    d[i] = static_cast<int>(std::min<long>(r, data.coverage(i)));
  }
  return d;
}

}  // namespace

Decision solve(const ProblemSpec& spec, const Vec& y_hat) {
  if (y_hat.size() != spec.dim_y) throw ConfigError("prediction dimension mismatch");
  switch (spec.family) {
    case Family::KnapsackValues:
      return solve_knapsack(y_hat.cwiseMax(0.0), spec.kp.weights, spec.kp.capacity);
    case Family::KnapsackWeights:
      return solve_knapsack(spec.kp.values, y_hat.cwiseMax(0.0), spec.kp.capacity);
    case Family::KnapsackCapacity:
      return solve_knapsack(spec.kp.values, spec.kp.weights, std::max(0.0, y_hat[0]));
    case Family::Wsmc: {
      WsmcSolver solver(spec.wsmc, clamp_demand(spec.wsmc, y_hat));
      return solver.solve();
    }
    case Family::Toy: {
      Decision d;
      d.z = y_hat;
      d.objective_value = 0.0;
      return d;
    }
  }
  throw ConfigError("unknown family");
}

double true_cost(const ProblemSpec& spec, const Vec& y, const Decision& d) {
  switch (spec.family) {
    case Family::KnapsackValues:
      return -y.dot(d.z);
    case Family::KnapsackWeights: {
      const double overweight = std::max(0.0, y.dot(d.z) - spec.kp.capacity);
      return -spec.kp.values.dot(d.z) + spec.penalty * overweight;
    }
    case Family::KnapsackCapacity: {
      const double overweight = std::max(0.0, spec.kp.weights.dot(d.z) - y[0]);
      return -spec.kp.values.dot(d.z) + spec.penalty * overweight;
    }
    case Family::Wsmc: {
      double cost = spec.wsmc.set_costs.dot(d.z);
      for (int i = 0; i < spec.wsmc.items(); ++i) {
        double covered = 0.0;
        for (int s = 0; s < spec.wsmc.sets(); ++s)
          covered += spec.wsmc.availability(i, s) * d.z[s];
        cost += spec.penalty * std::max(0.0, y[i] - covered);
      }
      return cost;
    }
    case Family::Toy:
      return spec.toy.step_height *
             std::floor((y - d.z).norm() / spec.toy.step_length);
  }
  throw ConfigError("unknown family");
}

double regret(const ProblemSpec& spec, const Vec& y, const Vec& y_hat) {
  const Decision at_prediction = solve(spec, y_hat);
  const Decision at_truth = solve(spec, y);
  return true_cost(spec, y, at_prediction) - true_cost(spec, y, at_truth);
}

}  // namespace forge
