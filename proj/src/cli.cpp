#include "forge/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "forge/parallel.hpp"
#include "forge/serialize.hpp"
#include "forge/trainer.hpp"

namespace forge {

namespace fs = std::filesystem;

namespace {

std::uint64_t env_seed_or(std::uint64_t fallback) {
  if (const char* env = std::getenv("FORGE_SEED")) {
    try {
      return std::stoull(env);
    } catch (...) {
      throw ConfigError("FORGE_SEED is not an integer");
    }
  }
  return fallback;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::string token;
  for (char c : text + ",") {
    if (c == ',') {
      if (!token.empty()) {
        seeds.push_back(std::stoull(token));
        token.clear();
      }
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      token += c;
    }
  }
  return seeds;
}

struct GenOptions {
  std::string family;
  int items = 50;
  int sets = 50;
  int dim_x = 5;
  int dim_y = 64;
  int degree = 5;
  double noise = 0.5;
  double penalty = 10.0;
  double step_height = 5.0;
  double step_length = 1.0;
  int instances = 1000;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out;
};

int cmd_gen(const GenOptions& opt) {
  const std::uint64_t seed = opt.seed_given ? opt.seed : env_seed_or(0);
  const Family family = family_from_name(opt.family);

  Benchmark bench;
  Json gen_cfg;
  gen_cfg["n_instances"] = opt.instances;
  switch (family) {
    case Family::KnapsackWeights:
    case Family::KnapsackValues:
    case Family::KnapsackCapacity: {
      KpConfig cfg;
      cfg.uncertain = family == Family::KnapsackWeights  ? KpConfig::Uncertain::Weights
                      : family == Family::KnapsackValues ? KpConfig::Uncertain::Values
                                                         : KpConfig::Uncertain::Capacity;
      cfg.n_items = opt.items;
      cfg.dim_x = opt.dim_x;
      cfg.degree = opt.degree;
      cfg.noise_half_width = opt.noise;
      cfg.n_instances = opt.instances;
      cfg.penalty = opt.penalty;
      bench = generate_kp_dataset(cfg, seed);
      gen_cfg["n_items"] = cfg.n_items;
      gen_cfg["degree"] = cfg.degree;
      gen_cfg["noise_half_width"] = cfg.noise_half_width;
      gen_cfg["output_scale"] = cfg.effective_scale();
      gen_cfg["capacity_ratio"] = cfg.capacity_ratio;
      break;
    }
    case Family::Wsmc: {
      WsmcConfig cfg;
      cfg.n_items = opt.items == 50 ? 10 : opt.items;  // family default
      cfg.n_sets = opt.sets;
      cfg.dim_x = opt.dim_x;
      cfg.degree = opt.degree;
      cfg.noise_half_width = opt.noise;
      cfg.n_instances = opt.instances;
      cfg.penalty = opt.penalty;
      bench = generate_wsmc_dataset(cfg, seed);
      gen_cfg["n_items"] = cfg.n_items;
      gen_cfg["n_sets"] = cfg.n_sets;
      gen_cfg["degree"] = cfg.degree;
      gen_cfg["noise_half_width"] = cfg.noise_half_width;
      gen_cfg["demand_scale"] = cfg.demand_scale;
      gen_cfg["density"] = Json{{"lo", cfg.density_lo}, {"hi", cfg.density_hi}};
      break;
    }
    case Family::Toy: {
      ToyConfig cfg;
      cfg.dim_y = opt.dim_y;
      cfg.dim_x = opt.dim_x;
      cfg.step_height = opt.step_height;
      cfg.step_length = opt.step_length;
      cfg.n_instances = opt.instances;
      bench = generate_toy_dataset(cfg, seed);
      break;
    }
  }

  save_benchmark(opt.out, bench, gen_cfg);
  std::cout << "wrote " << opt.out << ": family=" << family_name(bench.spec.family)
            << " dim_x=" << bench.spec.dim_x << " dim_y=" << bench.spec.dim_y
            << " instances=" << bench.data.size() << " split=" << bench.data.split.train.size()
            << "/" << bench.data.split.val.size() << "/" << bench.data.split.test.size()
            << " seed=" << seed << "\n";
  return 0;
}

struct PflOptions {
  std::string data;
  std::string out;
  int epochs = 300;
  int patience = 20;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

int cmd_pfl(const PflOptions& opt) {
  const Benchmark bench = load_benchmark(opt.data);
  PredictorModel model(bench.spec.dim_x, bench.spec.dim_y, ArchConfig{}, opt.seed);
  model.fit_input_stats(bench.data);
  PflConfig cfg;
  cfg.epochs = opt.epochs;
  cfg.patience = opt.patience;
  cfg.lr = opt.lr;
  const PflResult result = pfl_train(model, bench.data, cfg);
  save_model(opt.out, model);
  std::cout << "wrote " << opt.out << ": train_mse=" << result.train_mse
            << " val_mse=" << result.val_mse << " epochs=" << result.epochs_run << "\n";
  return 0;
}

struct TrainOptions {
  std::string data;
  std::string method = "gsl";
  std::string label;
  std::string seeds_text;
  std::string out_dir;
  TrainerConfig cfg;
  bool no_smoothing = false;
  bool no_pretrain = false;
  bool no_differentiation = false;
  bool sharing = false;
  int jobs = 1;
  std::string dump_banks;
  std::string dump_gps;
};

Json trainer_config_to_json(const TrainerConfig& cfg, const std::string& method,
                            const std::string& label, const std::string& data_path) {
  Json j;
  j["method"] = method;
  j["label"] = label;
  j["data"] = data_path;
  j["seed"] = cfg.seed;
  j["beta"] = cfg.beta;
  j["retrain_trigger"] = cfg.retrain_trigger;
  j["sigma_smooth"] = cfg.sigma_smooth;
  j["epochs"] = cfg.epochs;
  j["patience"] = cfg.patience;
  j["time_limit_seconds"] = cfg.time_limit_seconds;
  j["smoothing"] = cfg.smoothing;
  j["pretrain"] = cfg.pretrain;
  j["sharing"] = cfg.sharing;
  j["differentiation"] = cfg.differentiation;
  j["surrogate_enabled"] = cfg.surrogate_enabled;
  j["d_max"] = cfg.d_max;
  j["alpha0"] = cfg.alpha0;
  j["sigma0"] = cfg.sigma0;
  j["sigma_per_dim"] = cfg.sigma_per_dim;
  j["lr"] = cfg.lr;
  j["pfl_epochs"] = cfg.pfl_epochs;
  j["pfl_patience"] = cfg.pfl_patience;
  j["pfl_lr"] = cfg.pfl_lr;
  j["hidden"] = cfg.arch.hidden;
  j["relu"] = cfg.arch.relu;
  j["gp_max_points"] = cfg.gp_max_points;
  j["threads"] = cfg.threads;
  return j;
}

struct RunOutcome {
  std::uint64_t seed = 0;
  double regret = 0.0;
  double calls = 0.0;
};

RunOutcome run_one_seed(const Benchmark& bench, TrainerConfig cfg, const TrainOptions& opt,
                        std::uint64_t seed, const fs::path& dir) {
  cfg.seed = seed;
  fs::create_directories(dir);
  const Json config_json = trainer_config_to_json(cfg, opt.method, opt.label, opt.data);
  {
    std::ofstream out(dir / "config.json");
    out << config_json.dump(2) << "\n";
  }

  Trainer trainer(bench.spec, bench.data, cfg);
  const TrainResult result = trainer.run();

  write_metrics_csv((dir / "metrics.csv").string(), result.metrics.rows);
  save_model((dir / "model.json").string(), result.model);
  {
    std::ofstream out(dir / "report.json");
    out << report_to_json(opt.label, family_name(bench.spec.family), seed, result.metrics,
                          config_json)
               .dump(2)
        << "\n";
  }

  if (!opt.dump_banks.empty()) {
    std::vector<SampleBank> banks;
    for (int k = 0; k < trainer.train_size(); ++k) banks.push_back(trainer.bank(k));
    dump_banks_jsonl(opt.dump_banks, bench.data.split.train, banks);
  }
  if (!opt.dump_gps.empty()) {
    std::ofstream out(opt.dump_gps);
    for (int k = 0; k < trainer.train_size(); ++k) {
      const int idx = bench.data.split.train[static_cast<std::size_t>(k)];
      const Vec y_hat = result.model.forward(bench.data.instances[idx].x);
      Json snap;
      if (trainer.gp(k).fitted()) {
        snap = gp_snapshot(idx, trainer.gp(k), y_hat);
      } else {
        snap = Json{{"example_id", idx}, {"n_points", trainer.bank(k).size()}, {"usable", false}};
      }
      out << snap.dump() << "\n";
    }
  }

  return {seed, result.metrics.test_regret, result.metrics.calls_per_instance};
}

int cmd_train(TrainOptions opt) {
  if (opt.label.empty()) opt.label = opt.method;
  const Benchmark bench = load_benchmark(opt.data);

  TrainerConfig cfg = opt.cfg;
  cfg.smoothing = !opt.no_smoothing;
  cfg.pretrain = !opt.no_pretrain;
  cfg.differentiation = !opt.no_differentiation;
  cfg.sharing = opt.sharing;
  if (opt.method == "sfge") {
    cfg.surrogate_enabled = false;
    cfg.pretrain = false;
    cfg.smoothing = false;
  } else if (opt.method == "pfl") {
    cfg.epochs = 0;
  } else if (opt.method != "gsl") {
    throw ConfigError("unknown method: " + opt.method);
  }

  std::vector<std::uint64_t> seeds = parse_seeds(opt.seeds_text);
  if (seeds.empty()) seeds.push_back(env_seed_or(0));

  const fs::path out_dir(opt.out_dir);
  fs::create_directories(out_dir);

  const int jobs = std::max(1, std::min<int>(opt.jobs, static_cast<int>(seeds.size())));
  if (jobs > 1 && cfg.threads <= 0) cfg.threads = 1;  // avoid oversubscription

  std::vector<RunOutcome> outcomes(seeds.size());
  if (jobs == 1) {
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      outcomes[k] = run_one_seed(bench, cfg, opt, seeds[k],
                                 out_dir / ("seed-" + std::to_string(seeds[k])));
    }
  } else {
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    for (int t = 0; t < jobs; ++t) {
      pool.emplace_back([&]() {
        for (std::size_t k = next.fetch_add(1); k < seeds.size(); k = next.fetch_add(1)) {
          try {
            outcomes[k] = run_one_seed(bench, cfg, opt, seeds[k],
                                       out_dir / ("seed-" + std::to_string(seeds[k])));
          } catch (...) {
            std::lock_guard<std::mutex> lock(err_mu);
            if (!err) err = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
  }

  double regret_mean = 0.0, calls_mean = 0.0;
  for (const RunOutcome& o : outcomes) {
    regret_mean += o.regret;
    calls_mean += o.calls;
  }
  regret_mean /= static_cast<double>(outcomes.size());
  calls_mean /= static_cast<double>(outcomes.size());
  double regret_var = 0.0, calls_var = 0.0;
  for (const RunOutcome& o : outcomes) {
    regret_var += (o.regret - regret_mean) * (o.regret - regret_mean);
    calls_var += (o.calls - calls_mean) * (o.calls - calls_mean);
  }
  const double denom = outcomes.size() > 1 ? static_cast<double>(outcomes.size() - 1) : 1.0;
  const double regret_std = outcomes.size() > 1 ? std::sqrt(regret_var / denom) : 0.0;
  const double calls_std = outcomes.size() > 1 ? std::sqrt(calls_var / denom) : 0.0;

  Json summary;
  summary["label"] = opt.label;
  summary["method"] = opt.method;
  summary["regret_mean"] = regret_mean;
  summary["regret_std"] = regret_std;
  summary["calls_mean"] = calls_mean;
  summary["calls_std"] = calls_std;
  Json runs = Json::array();
  for (const RunOutcome& o : outcomes)
    runs.push_back(Json{{"seed", o.seed}, {"regret", o.regret}, {"calls", o.calls}});
  summary["runs"] = std::move(runs);
  {
    std::ofstream out(out_dir / "summary.json");
    out << summary.dump(2) << "\n";
  }

  std::cout << opt.label << ": regret " << regret_mean << " +- " << regret_std << ", calls/inst "
            << calls_mean << " +- " << calls_std << " (" << outcomes.size() << " seeds)\n";
  return 0;
}

struct ReportOptions {
  std::vector<std::string> runs;
  std::string out;
};

int cmd_report(const ReportOptions& opt) {
  struct Row {
    std::vector<double> regrets, calls;
  };
  std::map<std::string, Row> by_label;

  for (const std::string& root : opt.runs) {
    if (!fs::exists(root)) throw ConfigError("run directory does not exist: " + root);
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
      if (!entry.is_regular_file() || entry.path().filename() != "report.json") continue;
      std::ifstream in(entry.path());
      Json j;
      in >> j;
      Row& row = by_label[j.at("label").get<std::string>()];
      row.regrets.push_back(j.at("test_regret").get<double>());
      row.calls.push_back(j.at("calls_per_instance").get<double>());
    }
  }
  if (by_label.empty()) throw ConfigError("no report.json files found under the given runs");

  auto mean_std = [](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    if (v.size() < 2) return std::pair<double, double>{mean, 0.0};
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return std::pair<double, double>{mean, std::sqrt(var / static_cast<double>(v.size() - 1))};
  };

  std::ostringstream table;
  table << "method,regret_mean,regret_std,calls_mean,calls_std\n";
  table.precision(17);
  for (const auto& [label, row] : by_label) {
    const auto [rm, rs] = mean_std(row.regrets);
    const auto [cm, cs] = mean_std(row.calls);
    table << label << ',' << rm << ',' << rs << ',' << cm << ',' << cs << '\n';
  }

  if (!opt.out.empty()) {
    std::ofstream out(opt.out);
    if (!out) throw ConfigError("cannot write report: " + opt.out);
    out << table.str();
  }
  std::cout << table.str();
  return 0;
}

}  // namespace

int run_cli(std::vector<std::string> args) {
  CLI::App app{"forge: surrogate-accelerated decision-focused learning"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value overrides");

  GenOptions gen;
  CLI::App* gen_cmd = app.add_subcommand("gen", "generate a benchmark dataset");
  gen_cmd->add_option("--family", gen.family, "kp-weights|kp-values|kp-capacity|wsmc|toy")
      ->required();
  gen_cmd->add_option("--items", gen.items, "number of items (kp, wsmc)");
  gen_cmd->add_option("--sets", gen.sets, "number of sets (wsmc)");
  gen_cmd->add_option("--dim-x", gen.dim_x, "contextual features");
  gen_cmd->add_option("--dim-y", gen.dim_y, "predicted parameters (toy)");
  gen_cmd->add_option("--degree", gen.degree, "polynomial degree of the x->y map");
  gen_cmd->add_option("--noise", gen.noise, "multiplicative noise half-width");
  gen_cmd->add_option("--penalty", gen.penalty, "recourse penalty");
  gen_cmd->add_option("--step-height", gen.step_height, "toy step height");
  gen_cmd->add_option("--step-length", gen.step_length, "toy step length");
  gen_cmd->add_option("--instances", gen.instances, "dataset size");
  gen_cmd->add_option("--seed", gen.seed, "generation seed")
      ->each([&](const std::string&) { gen.seed_given = true; });
  gen_cmd->add_option("--out", gen.out, "output dataset file")->required();

  PflOptions pfl;
  CLI::App* pfl_cmd = app.add_subcommand("pfl", "train a maximum-likelihood predictor");
  pfl_cmd->add_option("--data", pfl.data, "dataset file")->required();
  pfl_cmd->add_option("--out", pfl.out, "output model file")->required();
  pfl_cmd->add_option("--epochs", pfl.epochs);
  pfl_cmd->add_option("--patience", pfl.patience);
  pfl_cmd->add_option("--lr", pfl.lr);
  pfl_cmd->add_option("--seed", pfl.seed);

  TrainOptions train;
  CLI::App* train_cmd = app.add_subcommand("train", "decision-focused training runs");
  train_cmd->add_option("--data", train.data, "dataset file")->required();
  train_cmd->add_option("--method", train.method, "gsl|sfge|pfl");
  train_cmd->add_option("--label", train.label, "row label for reports (default: method)");
  train_cmd->add_option("--seeds", train.seeds_text, "comma-separated run seeds");
  train_cmd->add_option("--out-dir", train.out_dir, "output directory")->required();
  train_cmd->add_option("--beta", train.cfg.beta, "confidence gate threshold");
  train_cmd->add_option("--retrain-trigger", train.cfg.retrain_trigger);
  train_cmd->add_option("--sigma-smooth", train.cfg.sigma_smooth);
  train_cmd->add_option("--sigma0", train.cfg.sigma0);
  train_cmd->add_option("--epochs", train.cfg.epochs);
  train_cmd->add_option("--patience", train.cfg.patience);
  train_cmd->add_option("--time-limit", train.cfg.time_limit_seconds, "seconds; <0 disables");
  train_cmd->add_option("--pfl-epochs", train.cfg.pfl_epochs);
  train_cmd->add_option("--pfl-patience", train.cfg.pfl_patience);
  train_cmd->add_option("--pfl-lr", train.cfg.pfl_lr);
  train_cmd->add_option("--lr", train.cfg.lr);
  train_cmd->add_option("--d-max", train.cfg.d_max, "sharing radius; <0 = auto quantile");
  train_cmd->add_option("--alpha0", train.cfg.alpha0);
  train_cmd->add_option("--gp-max-points", train.cfg.gp_max_points);
  train_cmd->add_option("--hidden", train.cfg.arch.hidden, "hidden layer widths");
  train_cmd->add_option("--threads", train.cfg.threads, "worker threads per run");
  train_cmd->add_option("--jobs", train.jobs, "parallel seed runs");
  train_cmd->add_flag("--no-smoothing", train.no_smoothing);
  train_cmd->add_flag("--no-pretrain", train.no_pretrain);
  train_cmd->add_flag("--no-differentiation", train.no_differentiation);
  train_cmd->add_flag("--sharing", train.sharing);
  train_cmd->add_flag("--sigma-per-dim", train.cfg.sigma_per_dim);
  train_cmd->add_option("--dump-banks", train.dump_banks, "JSONL bank dump path");
  train_cmd->add_option("--dump-gps", train.dump_gps, "JSONL surrogate snapshot path");

  ReportOptions report;
  CLI::App* report_cmd = app.add_subcommand("report", "aggregate run directories");
  report_cmd->add_option("--runs", report.runs, "run directories")->required();
  report_cmd->add_option("--out", report.out, "output CSV path");

  std::vector<const char*> argv;
  argv.push_back("forge");
  for (const std::string& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen(gen);
    if (pfl_cmd->parsed()) return cmd_pfl(pfl);
    if (train_cmd->parsed()) return cmd_train(train);
    if (report_cmd->parsed()) return cmd_report(report);
    std::cerr << "no subcommand given\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace forge
