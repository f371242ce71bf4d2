// Compares the serial reference path against the OpenMP dispatch on the
// data-parallel kernels: batch regret evaluation, probe pretraining, and one
// training epoch.

#include <chrono>
#include <cstdio>

#include "forge/parallel.hpp"
#include "forge/trainer.hpp"

using namespace forge;

namespace {

using Clock = std::chrono::steady_clock;

template <class F>
double time_ms(F&& fn) {
  const auto t0 = Clock::now();
  fn();
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void bench_family(const char* name, const Benchmark& bench) {
  const int hw = max_threads();

  TrainerConfig cfg;
  cfg.pfl_epochs = 20;
  cfg.epochs = 0;
  cfg.seed = 7;

  auto run_kernels = [&](int threads, double& eval_ms, double& pretrain_ms, double& epoch_ms) {
    TrainerConfig c = cfg;
    c.threads = threads;
    Trainer trainer(bench.spec, bench.data, c);
    trainer.warm_start();
    eval_ms = time_ms([&] { trainer.evaluate_split(bench.data.split.test); });
    pretrain_ms = time_ms([&] { trainer.pretrain(); });
    epoch_ms = time_ms([&] { trainer.epoch_step(1); });
  };

  double eval1, pre1, ep1, evalN, preN, epN;
  run_kernels(1, eval1, pre1, ep1);
  run_kernels(hw, evalN, preN, epN);

  std::printf("%-10s %-10s %10.1f ms %10.1f ms %8.2fx\n", name, "evaluate", eval1, evalN,
              eval1 / evalN);
  std::printf("%-10s %-10s %10.1f ms %10.1f ms %8.2fx\n", name, "pretrain", pre1, preN,
              pre1 / preN);
  std::printf("%-10s %-10s %10.1f ms %10.1f ms %8.2fx\n", name, "epoch", ep1, epN, ep1 / epN);
}

}  // namespace

int main() {
  std::printf("threads available: %d\n", max_threads());
  std::printf("%-10s %-10s %13s %13s %9s\n", "family", "kernel", "serial", "parallel", "speedup");

  ToyConfig toy;
  toy.dim_y = 32;
  toy.n_instances = 400;
  bench_family("toy-32", generate_toy_dataset(toy, 1));

  KpConfig kp;
  kp.uncertain = KpConfig::Uncertain::Weights;
  kp.n_instances = 120;
  bench_family("kp-50-w", generate_kp_dataset(kp, 1));

  WsmcConfig wsmc;
  wsmc.n_sets = 100;
  wsmc.n_instances = 120;
  bench_family("wsmc-100", generate_wsmc_dataset(wsmc, 1));
  return 0;
}
