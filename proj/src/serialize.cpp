#include "forge/serialize.hpp"

#include <fstream>

namespace forge {

Json vec_to_json(const Vec& v) {
  Json a = Json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vec vec_from_json(const Json& j) {
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

namespace {

Json mat_to_json(const Mat& m) {
  Json rows = Json::array();
  for (int r = 0; r < m.rows(); ++r) rows.push_back(vec_to_json(m.row(r).transpose()));
  return rows;
}

Mat mat_from_json(const Json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return Mat();
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    m.row(r) = vec_from_json(j[static_cast<std::size_t>(r)]).transpose();
  return m;
}

Json imat_to_json(const Eigen::MatrixXi& m) {
  Json rows = Json::array();
  for (int r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXi imat_from_json(const Json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return Eigen::MatrixXi();
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXi m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<int>();
  return m;
}

Json split_to_json(const Split& s) {
  return Json{{"train", s.train}, {"val", s.val}, {"test", s.test}};
}

Split split_from_json(const Json& j) {
  Split s;
  s.train = j.at("train").get<std::vector<int>>();
  s.val = j.at("val").get<std::vector<int>>();
  s.test = j.at("test").get<std::vector<int>>();
  return s;
}

}  // namespace

Json benchmark_to_json(const Benchmark& bench, const Json& gen_config) {
  const ProblemSpec& spec = bench.spec;
  Json j;
  j["family"] = family_name(spec.family);
  j["seed"] = bench.data.seed;

  Json cfg = gen_config;
  cfg["dim_x"] = spec.dim_x;
  cfg["dim_y"] = spec.dim_y;
  cfg["penalty"] = spec.penalty;
  switch (spec.family) {
    case Family::KnapsackWeights:
      cfg["values"] = vec_to_json(spec.kp.values);
      cfg["capacity"] = spec.kp.capacity;
      break;
    case Family::KnapsackValues:
      cfg["weights"] = vec_to_json(spec.kp.weights);
      cfg["capacity"] = spec.kp.capacity;
      break;
    case Family::KnapsackCapacity:
      cfg["values"] = vec_to_json(spec.kp.values);
      cfg["weights"] = vec_to_json(spec.kp.weights);
      break;
    case Family::Wsmc:
      cfg["availability"] = imat_to_json(spec.wsmc.availability);
      cfg["set_costs"] = vec_to_json(spec.wsmc.set_costs);
      break;
    case Family::Toy:
      cfg["weight_matrix"] = mat_to_json(spec.toy.weight_matrix);
      cfg["step_height"] = spec.toy.step_height;
      cfg["step_length"] = spec.toy.step_length;
      break;
  }
  j["config"] = std::move(cfg);

  Json instances = Json::array();
  for (const Instance& inst : bench.data.instances)
    instances.push_back(Json{{"x", vec_to_json(inst.x)}, {"y", vec_to_json(inst.y)}});
  j["instances"] = std::move(instances);
  j["split"] = split_to_json(bench.data.split);
  return j;
}

Benchmark benchmark_from_json(const Json& j) {
  Benchmark bench;
  ProblemSpec& spec = bench.spec;
  spec.family = family_from_name(j.at("family").get<std::string>());
  const Json& cfg = j.at("config");
  spec.dim_x = cfg.at("dim_x").get<int>();
  spec.dim_y = cfg.at("dim_y").get<int>();
  spec.penalty = cfg.at("penalty").get<double>();
  switch (spec.family) {
    case Family::KnapsackWeights:
      spec.kp.values = vec_from_json(cfg.at("values"));
      spec.kp.capacity = cfg.at("capacity").get<double>();
      break;
    case Family::KnapsackValues:
      spec.kp.weights = vec_from_json(cfg.at("weights"));
      spec.kp.capacity = cfg.at("capacity").get<double>();
      break;
    case Family::KnapsackCapacity:
      spec.kp.values = vec_from_json(cfg.at("values"));
      spec.kp.weights = vec_from_json(cfg.at("weights"));
      break;
    case Family::Wsmc:
      spec.wsmc.availability = imat_from_json(cfg.at("availability"));
      spec.wsmc.set_costs = vec_from_json(cfg.at("set_costs"));
      break;
    case Family::Toy:
      spec.toy.weight_matrix = mat_from_json(cfg.at("weight_matrix"));
      spec.toy.step_height = cfg.at("step_height").get<double>();
      spec.toy.step_length = cfg.at("step_length").get<double>();
      break;
  }

  bench.data.seed = j.at("seed").get<std::uint64_t>();
  for (const Json& inst : j.at("instances"))
    bench.data.instances.push_back({vec_from_json(inst.at("x")), vec_from_json(inst.at("y"))});
  bench.data.split = split_from_json(j.at("split"));
  spec.validate();
  return bench;
}

Json benchmark_gen_config(const Json& j) { return j.at("config"); }

void save_benchmark(const std::string& path, const Benchmark& bench, const Json& gen_config) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write dataset file: " + path);
  out << benchmark_to_json(bench, gen_config).dump(2) << "\n";
}

Benchmark load_benchmark(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read dataset file: " + path);
  Json j;
  in >> j;
  return benchmark_from_json(j);
}

Json model_to_json(const PredictorModel& model) {
  Json j;
  j["arch"] = Json{{"dim_x", model.dim_x()},
                   {"dim_y", model.dim_y()},
                   {"hidden", model.arch().hidden},
                   {"relu", model.arch().relu}};
  j["theta"] = vec_to_json(model.params());
  j["norm_stats"] =
      Json{{"x_mean", vec_to_json(model.x_mean())}, {"x_std", vec_to_json(model.x_std())}};
  return j;
}

PredictorModel model_from_json(const Json& j) {
  const Json& arch_j = j.at("arch");
  ArchConfig arch;
  arch.hidden = arch_j.at("hidden").get<std::vector<int>>();
  arch.relu = arch_j.at("relu").get<bool>();
  PredictorModel model(arch_j.at("dim_x").get<int>(), arch_j.at("dim_y").get<int>(), arch, 0);
  const Vec theta = vec_from_json(j.at("theta"));
  if (theta.size() != model.params().size()) throw ConfigError("model checkpoint size mismatch");
  model.params() = theta;
  model.set_input_stats(vec_from_json(j.at("norm_stats").at("x_mean")),
                        vec_from_json(j.at("norm_stats").at("x_std")));
  return model;
}

void save_model(const std::string& path, const PredictorModel& model) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write model file: " + path);
  out << model_to_json(model).dump(2) << "\n";
}

PredictorModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read model file: " + path);
  Json j;
  in >> j;
  return model_from_json(j);
}

void write_metrics_csv(const std::string& path, const std::vector<EpochRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write metrics file: " + path);
  out << "epoch,train_regret,val_regret,solver_calls_cum,surrogate_hit_rate,wall_time\n";
  out.precision(17);
  for (const EpochRow& r : rows) {
    out << r.epoch << ',' << r.train_regret << ',' << r.val_regret << ','
        << r.solver_calls_cum << ',' << r.hit_rate << ',' << r.wall_time << '\n';
  }
}

Json report_to_json(const std::string& label, const std::string& family, std::uint64_t seed,
                    const RunMetrics& metrics, const Json& config) {
  Json j;
  j["label"] = label;
  j["family"] = family;
  j["seed"] = seed;
  j["test_regret"] = metrics.test_regret;
  j["best_val_regret"] = metrics.best_val_regret;
  j["train_solver_calls"] = metrics.train_calls;
  j["eval_solver_calls"] = metrics.eval_calls;
  j["calls_per_instance"] = metrics.calls_per_instance;
  j["epochs_run"] = metrics.epochs_run;
  j["wall_time"] = metrics.wall_time;
  j["surrogate_hit_rate"] = metrics.surrogate_hit_rate;
  j["stop_reason"] = metrics.stop_reason;
  j["config"] = config;
  j["config_fingerprint"] = config_fingerprint(config);
  return j;
}

void dump_banks_jsonl(const std::string& path, const std::vector<int>& train_idx,
                      const std::vector<SampleBank>& banks) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write bank dump: " + path);
  for (std::size_t k = 0; k < banks.size(); ++k) {
    for (const RegretSample& s : banks[k].samples) {
      Json j;
      j["example_id"] = train_idx[k];
      j["y_hat"] = vec_to_json(s.y_hat);
      j["regret"] = s.regret;
      if (const auto* normal = std::get_if<NormalOrigin>(&s.origin)) {
        j["origin"] = Json{{"type", "normal"}, {"mean", vec_to_json(normal->mean)},
                           {"sigma", normal->sigma}};
      } else {
        const auto& box = std::get<BoxOrigin>(s.origin);
        j["origin"] =
            Json{{"type", "lhs_box"}, {"lo", vec_to_json(box.lo)}, {"hi", vec_to_json(box.hi)}};
      }
      out << j.dump() << "\n";
    }
  }
}

Json gp_snapshot(int example_id, const GpSurrogate& gp, const Vec& current_prediction) {
  Json j;
  j["example_id"] = example_id;
  j["n_points"] = gp.n_points();
  j["usable"] = gp.usable();
  if (gp.fitted()) {
    j["hyperparams"] = Json{{"length_scale", gp.length_scale()},
                            {"output_scale", gp.output_scale()},
                            {"noise_var", gp.noise_var()}};
    const auto pred = gp.predict(current_prediction);
    j["confidence_at_current_prediction"] = Json{{"mean", pred.mean}, {"std", pred.std}};
  }
  return j;
}

std::uint64_t config_fingerprint(const Json& config) {
  const std::string dump = config.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace forge
